//! Channel realizations and received pilot observations.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{isotropic_covariance, SpatialCovariance};
use crate::linalg::{self, CMat, CVec};
use crate::rng::{complex_normal, complex_normal_vec, seeded};
use crate::sequences::ConfigSequence;
use crate::units::SystemParams;
use crate::{Complex64, Operator};

/// All channels of the two-operator scenario, indexed by operator.
///
/// For operator `k`: `h[k]` is serving RIS to BS, `g[k]` UE to serving RIS,
/// `p[k]` UE to the other RIS and `q[k]` the other RIS to BS `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: [CVec; 2],
    pub g: [CVec; 2],
    pub p: [CVec; 2],
    pub q: [CVec; 2],
}

impl ChannelSet {
    pub fn n_elements(&self) -> usize {
        self.h[0].len()
    }

    pub fn h(&self, k: Operator) -> &CVec {
        &self.h[k.index()]
    }

    pub fn g(&self, k: Operator) -> &CVec {
        &self.g[k.index()]
    }

    pub fn p(&self, k: Operator) -> &CVec {
        &self.p[k.index()]
    }

    pub fn q(&self, k: Operator) -> &CVec {
        &self.q[k.index()]
    }

    /// Unintended cascade `r_k = D_q p_k`.
    pub fn r(&self, k: Operator) -> CVec {
        self.q(k).component_mul(self.p(k))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_elements();
        for v in self.h.iter().chain(&self.g).chain(&self.p).chain(&self.q) {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!("channel length {} != {n}", v.len())));
            }
        }
        for h in &self.h {
            if let Some(index) = h.iter().position(|z| z.norm_sqr() == 0.0) {
                return Err(Error::SingularDiagonal { index });
            }
        }
        Ok(())
    }

    /// Writes `channel,operator,index,re,im` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["channel", "operator", "index", "re", "im"])?;
        for (name, set) in [("h", &self.h), ("g", &self.g), ("p", &self.p), ("q", &self.q)] {
            for (k, v) in set.iter().enumerate() {
                for (i, z) in v.iter().enumerate() {
                    w.write_record([
                        name.to_string(),
                        (k + 1).to_string(),
                        i.to_string(),
                        format!("{:e}", z.re),
                        format!("{:e}", z.im),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Spatial priors of the random channels of one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPriors {
    pub sigma_g: SpatialCovariance,
    pub sigma_p: SpatialCovariance,
}

impl ChannelPriors {
    /// Isotropic priors with the UE-RIS path-loss gain.
    pub fn isotropic(params: &SystemParams) -> Result<Self> {
        let cov = isotropic_covariance(&params.geometry, params.ue_ris_gain())?;
        Ok(ChannelPriors { sigma_g: cov.clone(), sigma_p: cov })
    }
}

/// Draws from CN(0, Σ) using a cached square-root factor.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: CMat,
}

impl GaussianSampler {
    pub fn new(cov: &SpatialCovariance) -> Self {
        GaussianSampler { factor: linalg::psd_factor(cov.matrix()) }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let z = complex_normal_vec(rng, self.factor.ncols(), 1.0);
        &self.factor * z
    }
}

/// One draw from CN(0, cov).
pub fn sample_correlated_rayleigh<R: Rng + ?Sized>(cov: &SpatialCovariance, rng: &mut R) -> CVec {
    GaussianSampler::new(cov).sample(rng)
}

/// Covariance of `r = D_q p`, i.e. `D_q Σ_p D_qᴴ`.
pub fn sigma_r(priors: &ChannelPriors, q: &CVec) -> SpatialCovariance {
    // a diagonal congruence of a PSD matrix stays PSD
    let m = linalg::hermitian_part(&linalg::congruence_diag(q, priors.sigma_p.matrix()));
    SpatialCovariance::from_psd_unchecked(m)
}

fn nonzero_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> CVec {
    CVec::from_fn(n, |_, _| loop {
        let z = complex_normal(rng, variance);
        if z.norm_sqr() != 0.0 || variance == 0.0 {
            break z;
        }
    })
}

/// Frozen i.i.d. Gaussian channels for the deterministic scenario. Hops into
/// a BS use the RIS-BS gain, hops from a UE the UE-RIS gain.
pub fn sample_deterministic_fixture(params: &SystemParams, seed: u64) -> ChannelSet {
    let n = params.n_elements;
    let (a, b) = (params.ris_bs_gain(), params.ue_ris_gain());
    let mut rng = seeded(seed);
    let h = [nonzero_vec(&mut rng, n, a), nonzero_vec(&mut rng, n, a)];
    let g = [complex_normal_vec(&mut rng, n, b), complex_normal_vec(&mut rng, n, b)];
    let p = [complex_normal_vec(&mut rng, n, b), complex_normal_vec(&mut rng, n, b)];
    let q = [complex_normal_vec(&mut rng, n, a), complex_normal_vec(&mut rng, n, a)];
    ChannelSet { h, g, p, q }
}

/// Correlated-Rayleigh scenario: `h` and `q` are frozen per scenario while
/// `g` and `p` are redrawn from their priors in every trial.
#[derive(Debug, Clone)]
pub struct RayleighScenario {
    pub h: [CVec; 2],
    pub q: [CVec; 2],
    pub priors: [ChannelPriors; 2],
    samplers_g: [GaussianSampler; 2],
    samplers_p: [GaussianSampler; 2],
}

impl RayleighScenario {
    pub fn new(h: [CVec; 2], q: [CVec; 2], priors: [ChannelPriors; 2]) -> Result<Self> {
        let n = h[0].len();
        for v in h.iter().chain(&q) {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!("channel length {} != {n}", v.len())));
            }
        }
        for pr in &priors {
            if pr.sigma_g.dim() != n || pr.sigma_p.dim() != n {
                return Err(Error::DimensionMismatch("prior dimension does not match N".into()));
            }
        }
        for hk in &h {
            if let Some(index) = hk.iter().position(|z| z.norm_sqr() == 0.0) {
                return Err(Error::SingularDiagonal { index });
            }
        }
        let samplers_g = [GaussianSampler::new(&priors[0].sigma_g), GaussianSampler::new(&priors[1].sigma_g)];
        let samplers_p = [GaussianSampler::new(&priors[0].sigma_p), GaussianSampler::new(&priors[1].sigma_p)];
        Ok(RayleighScenario { h, q, priors, samplers_g, samplers_p })
    }

    /// Isotropic priors from the geometry; `h` and `q` i.i.d. with the
    /// RIS-BS gain, drawn from `seed`.
    pub fn from_params(params: &SystemParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = params.n_elements;
        let a = params.ris_bs_gain();
        let mut rng = seeded(seed);
        let h = [nonzero_vec(&mut rng, n, a), nonzero_vec(&mut rng, n, a)];
        let q = [complex_normal_vec(&mut rng, n, a), complex_normal_vec(&mut rng, n, a)];
        let pr = ChannelPriors::isotropic(params)?;
        Self::new(h, q, [pr.clone(), pr])
    }

    pub fn n_elements(&self) -> usize {
        self.h[0].len()
    }

    pub fn sigma_r(&self, k: Operator) -> SpatialCovariance {
        sigma_r(&self.priors[k.index()], &self.q[k.index()])
    }

    /// One channel realization.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelSet {
        let g = [self.samplers_g[0].sample(rng), self.samplers_g[1].sample(rng)];
        let p = [self.samplers_p[0].sample(rng), self.samplers_p[1].sample(rng)];
        ChannelSet { h: self.h.clone(), g, p, q: self.q.clone() }
    }
}

/// Noise-free pilots at BS `k`: `√Pp (B_k D_h g_k + B_j D_q p_k)`.
pub fn received_pilots_noiseless(
    ch: &ChannelSet,
    b1: &ConfigSequence,
    b2: &ConfigSequence,
    pilot_power: f64,
    k: Operator,
) -> Result<CVec> {
    let n = ch.n_elements();
    if b1.n_elements() != n || b2.n_elements() != n || b1.pilot_len() != b2.pilot_len() {
        return Err(Error::DimensionMismatch(format!(
            "sequences {:?} and {:?} do not match N = {n}",
            b1.matrix().shape(),
            b2.matrix().shape()
        )));
    }
    let (bk, bj) = match k {
        Operator::First => (b1, b2),
        Operator::Second => (b2, b1),
    };
    let desired = ch.h(k).component_mul(ch.g(k));
    let y = bk.matrix() * desired + bj.matrix() * ch.r(k);
    Ok(y.scale(pilot_power.sqrt()))
}

/// Pilots at BS `k` with additive CN(0, σ²I) noise.
pub fn received_pilots<R: Rng + ?Sized>(
    ch: &ChannelSet,
    b1: &ConfigSequence,
    b2: &ConfigSequence,
    pilot_power: f64,
    noise_power: f64,
    k: Operator,
    rng: &mut R,
) -> Result<CVec> {
    let y = received_pilots_noiseless(ch, b1, b2, pilot_power, k)?;
    let w = complex_normal_vec(rng, y.len(), noise_power);
    Ok(y + w)
}

/// Received pilot in slot `t` without noise, evaluated element by element.
pub fn pilot_slot(
    ch: &ChannelSet,
    bk: &ConfigSequence,
    bj: &ConfigSequence,
    pilot_power: f64,
    k: Operator,
    t: usize,
) -> Complex64 {
    let (phi_k, phi_j) = (bk.slot(t), bj.slot(t));
    let s = pilot_power.sqrt();
    (0..ch.n_elements())
        .map(|n| s * (ch.h(k)[n] * phi_k[n] * ch.g(k)[n] + ch.q(k)[n] * phi_j[n] * ch.p(k)[n]))
        .sum()
}
