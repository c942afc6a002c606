//! Pilot-phase RIS configuration sequences and data-phase phase alignment.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::{Complex64, ConfigMode, Operator};

/// `L × N` matrix whose row `t` holds the reflection coefficients used in
/// pilot slot `t`. Entries are unit-modulus and `BᴴB = L·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSequence {
    matrix: CMat,
}

impl ConfigSequence {
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        let (l, n) = matrix.shape();
        if n == 0 || l < n {
            return Err(Error::InvalidParameter(format!("sequence must be L x N with L >= N >= 1, got {l} x {n}")));
        }
        if let Some(z) = matrix.iter().find(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidParameter(format!("entry {z} is not unit modulus")));
        }
        let gram = matrix.adjoint() * &matrix;
        let target = CMat::identity(n, n).scale(l as f64);
        if linalg::max_abs(&(gram - target)) > 1e-9 * l as f64 {
            return Err(Error::InvalidParameter("sequence columns are not orthogonal".into()));
        }
        Ok(ConfigSequence { matrix })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn pilot_len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_elements(&self) -> usize {
        self.matrix.ncols()
    }

    /// Reflection coefficients applied in slot `t`.
    pub fn slot(&self, t: usize) -> CVec {
        self.matrix.row(t).transpose()
    }
}

/// Columns `first..first+count` of the `L`-point DFT matrix,
/// entry `(t, n) = exp(−j2πtn/L)`.
fn dft_columns(l: usize, first: usize, count: usize) -> CMat {
    CMat::from_fn(l, count, |t, n| {
        // reduce the exponent before converting to keep the phase exact
        let k = (t * (first + n)) % l;
        Complex64::from_polar(1.0, -2.0 * PI * k as f64 / l as f64)
    })
}

/// Both RISs share one sequence made of the first `N` DFT columns.
pub fn make_identical_pair(n: usize, l: usize) -> Result<(ConfigSequence, ConfigSequence)> {
    if n == 0 || l < n {
        return Err(Error::InvalidParameter(format!("identical sequences need L >= N >= 1, got N = {n}, L = {l}")));
    }
    let b = ConfigSequence::from_matrix(dft_columns(l, 0, n))?;
    Ok((b.clone(), b))
}

/// Disjoint DFT column blocks, so `B1ᴴB2 = 0`.
pub fn make_orthogonal_pair(n: usize, l: usize) -> Result<(ConfigSequence, ConfigSequence)> {
    if n == 0 || l < 2 * n {
        return Err(Error::InvalidParameter(format!(
            "orthogonal sequences need L >= 2N, got N = {n}, L = {l}"
        )));
    }
    Ok((
        ConfigSequence::from_matrix(dft_columns(l, 0, n))?,
        ConfigSequence::from_matrix(dft_columns(l, n, n))?,
    ))
}

/// Orthogonal pair from Sylvester-Hadamard columns; `L` must be a power of two.
pub fn make_orthogonal_pair_hadamard(n: usize, l: usize) -> Result<(ConfigSequence, ConfigSequence)> {
    if !l.is_power_of_two() || n == 0 || l < 2 * n {
        return Err(Error::InvalidParameter(format!(
            "Hadamard sequences need L a power of two with L >= 2N, got N = {n}, L = {l}"
        )));
    }
    // H[t, c] = (-1)^popcount(t & c)
    let col = |first: usize| {
        CMat::from_fn(l, n, |t, c| {
            if (t & (first + c)).count_ones() & 1 == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(-1.0, 0.0)
            }
        })
    };
    Ok((ConfigSequence::from_matrix(col(0))?, ConfigSequence::from_matrix(col(n))?))
}

/// How the spans of two sequences relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRelation {
    /// `B_kᴴB_j = L·I`.
    Identical,
    /// `B_kᴴB_j = 0`.
    Orthogonal,
    General,
}

/// The two operators' sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    pub b1: ConfigSequence,
    pub b2: ConfigSequence,
}

impl SequencePair {
    pub fn new(mode: ConfigMode, n: usize, l: usize) -> Result<Self> {
        let (b1, b2) = match mode {
            ConfigMode::Identical => make_identical_pair(n, l)?,
            ConfigMode::Orthogonal => make_orthogonal_pair(n, l)?,
        };
        Ok(SequencePair { b1, b2 })
    }

    /// `(B_k, B_j)`: the serving and the non-serving RIS sequence for `k`.
    pub fn for_operator(&self, k: Operator) -> (&ConfigSequence, &ConfigSequence) {
        match k {
            Operator::First => (&self.b1, &self.b2),
            Operator::Second => (&self.b2, &self.b1),
        }
    }

    pub fn relation(&self) -> PairRelation {
        relation(&self.b1, &self.b2)
    }
}

pub fn relation(bk: &ConfigSequence, bj: &ConfigSequence) -> PairRelation {
    let l = bk.pilot_len() as f64;
    let cross = bk.matrix().adjoint() * bj.matrix();
    let n = cross.nrows();
    if linalg::max_abs(&cross) <= 1e-9 * l {
        PairRelation::Orthogonal
    } else if cross.is_square() && linalg::max_abs(&(cross - CMat::identity(n, n).scale(l))) <= 1e-9 * l {
        PairRelation::Identical
    } else {
        PairRelation::General
    }
}

/// Data-phase RIS configuration. The reflection matrix is
/// `diag(exp(−jφ_1), …, exp(−jφ_N))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhaseConfig {
    pub phases: Vec<f64>,
}

impl RisPhaseConfig {
    pub fn new(phases: Vec<f64>) -> Self {
        RisPhaseConfig { phases }
    }

    /// Reflection coefficients `exp(−jφ_n)`.
    pub fn coefficients(&self) -> CVec {
        CVec::from_iterator(self.phases.len(), self.phases.iter().map(|&p| Complex64::from_polar(1.0, -p)))
    }

    /// `hᵀ · diag(coefficients) · x`.
    pub fn cascade(&self, h: &CVec, x: &CVec) -> Complex64 {
        self.phases
            .iter()
            .zip(h.iter().zip(x.iter()))
            .map(|(&p, (a, b))| a * Complex64::from_polar(1.0, -p) * b)
            .sum()
    }
}

fn arg_or_zero(z: Complex64) -> f64 {
    if z.norm_sqr() == 0.0 {
        0.0
    } else {
        z.arg()
    }
}

/// Phases `arg(h_n) + arg(ĝ_n)` that make the cascade `hᵀΦĝ` real and
/// equal to `Σ|h_n||ĝ_n|`. Zero entries contribute phase 0.
pub fn phase_align(h: &CVec, g_hat: &CVec) -> RisPhaseConfig {
    RisPhaseConfig::new(h.iter().zip(g_hat.iter()).map(|(&a, &b)| arg_or_zero(a) + arg_or_zero(b)).collect())
}
