//! RIS element layouts and isotropic-scattering spatial covariances.
//!
//! Under isotropic scattering the correlation between two elements at
//! distance `d` (in wavelengths) is `sinc(2d) = sin(2πd)/(2πd)`, so the
//! covariance is real and symmetric.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArrayKind {
    Ula,
    Ura,
}

/// Planar element grid. Spacing is in wavelengths and shared by both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisGeometry {
    pub kind: ArrayKind,
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl RisGeometry {
    pub fn ura(rows: usize, cols: usize, spacing: f64) -> Self {
        RisGeometry { kind: ArrayKind::Ura, rows, cols, spacing }
    }

    pub fn ula(n: usize, spacing: f64) -> Self {
        RisGeometry { kind: ArrayKind::Ula, rows: 1, cols: n, spacing }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter("geometry needs at least one row and column".into()));
        }
        if self.kind == ArrayKind::Ula && self.rows != 1 {
            return Err(Error::InvalidParameter("ULA geometry must have a single row".into()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidParameter(format!("spacing must be positive, got {}", self.spacing)));
        }
        Ok(())
    }

    /// Short label used in CSV output, e.g. `ura:8x8:0.5`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for RisGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ArrayKind::Ula => "ula",
            ArrayKind::Ura => "ura",
        };
        write!(f, "{kind}:{}x{}:{}", self.rows, self.cols, self.spacing)
    }
}

impl FromStr for RisGeometry {
    type Err = Error;

    /// Accepts `ura:8x8:0.5`, `ula:1x64:0.5` and `ula:64:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid geometry token `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let spacing: f64 = parts[2].parse().map_err(|_| bad())?;
        let (rows, cols) = match parts[1].split_once(['x', 'X']) {
            Some((r, c)) => (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?),
            None => (1, parts[1].parse().map_err(|_| bad())?),
        };
        let g = match parts[0].to_ascii_lowercase().as_str() {
            "ura" => RisGeometry::ura(rows, cols, spacing),
            "ula" if rows == 1 => RisGeometry::ula(cols, spacing),
            _ => return Err(bad()),
        };
        g.validate()?;
        Ok(g)
    }
}

/// Element positions in wavelengths, row-major, origin at the first
/// element. Rows advance along x, columns along y, z = 0.
pub fn element_positions(geometry: &RisGeometry) -> Vec<[f64; 3]> {
    let d = geometry.spacing;
    let mut out = Vec::with_capacity(geometry.len());
    for r in 0..geometry.rows {
        for c in 0..geometry.cols {
            out.push([r as f64 * d, c as f64 * d, 0.0]);
        }
    }
    out
}

/// Normalized sinc, `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Hermitian PSD spatial covariance with per-element variance `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    matrix: CMat,
    variance_per_element: f64,
}

impl SpatialCovariance {
    /// Wraps a Hermitian PSD matrix; `β` is taken as `trace / N`.
    pub fn new(matrix: CMat) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        let n = matrix.nrows().max(1) as f64;
        let scale = linalg::max_abs(&matrix).max(f64::MIN_POSITIVE);
        if !linalg::is_hermitian(&matrix, 1e-12 * scale) {
            return Err(Error::InvalidParameter("covariance is not Hermitian".into()));
        }
        let beta = linalg::trace_re(&matrix) / n;
        let min_eigenvalue = linalg::min_eigenvalue(&matrix);
        if min_eigenvalue < -1e-10 * scale {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(SpatialCovariance { matrix: linalg::hermitian_part(&matrix), variance_per_element: beta })
    }

    pub(crate) fn from_psd_unchecked(matrix: CMat) -> Self {
        let beta = linalg::trace_re(&matrix) / matrix.nrows().max(1) as f64;
        SpatialCovariance { matrix, variance_per_element: beta }
    }

    pub fn zeros(n: usize) -> Self {
        SpatialCovariance { matrix: CMat::zeros(n, n), variance_per_element: 0.0 }
    }

    pub fn scaled_identity(n: usize, beta: f64) -> Self {
        SpatialCovariance {
            matrix: CMat::identity(n, n).scale(beta),
            variance_per_element: beta,
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn variance_per_element(&self) -> f64 {
        self.variance_per_element
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace_re(&self.matrix)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SpatialCovariance {
            matrix: self.matrix.scale(factor),
            variance_per_element: self.variance_per_element * factor,
        }
    }
}

/// Isotropic-scattering covariance `β · sinc(2‖u_m − u_n‖)`.
pub fn isotropic_covariance(geometry: &RisGeometry, beta: f64) -> Result<SpatialCovariance> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be non-negative, got {beta}")));
    }
    geometry.validate()?;
    let pos = element_positions(geometry);
    let n = pos.len();
    let matrix = CMat::from_fn(n, n, |i, j| {
        let d = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2) + (pos[i][2] - pos[j][2]).powi(2))
            .sqrt();
        Complex64::new(beta * sinc(2.0 * d), 0.0)
    });
    let min_eigenvalue = linalg::min_eigenvalue(&matrix);
    if min_eigenvalue < -1e-10 * beta {
        return Err(Error::NotPsd { min_eigenvalue });
    }
    Ok(SpatialCovariance { matrix, variance_per_element: beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Average of `exp(j2π k·Δ)` over unit directions `k` on the sphere,
    /// by Simpson's rule in the polar angle and the midpoint rule in azimuth.
    fn plane_wave_correlation(delta: [f64; 3]) -> f64 {
        let n_theta = 400; // even
        let n_phi = 256;
        let h = PI / n_theta as f64;
        let mut acc = 0.0;
        for i in 0..=n_theta {
            let theta = i as f64 * h;
            let w = if i == 0 || i == n_theta { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let mut ring = 0.0;
            for k in 0..n_phi {
                let phi = (k as f64 + 0.5) * 2.0 * PI / n_phi as f64;
                let dir = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
                let phase = 2.0 * PI * (dir[0] * delta[0] + dir[1] * delta[1] + dir[2] * delta[2]);
                ring += phase.cos();
            }
            acc += w * theta.sin() * ring / n_phi as f64;
        }
        acc * h / 3.0 / 2.0
    }

    #[test]
    fn positions_examples() {
        let p = element_positions(&RisGeometry::ura(2, 2, 0.5));
        assert_eq!(p, vec![[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.5, 0.5, 0.0]]);
        let p = element_positions(&RisGeometry::ula(3, 0.5));
        assert_eq!(p, vec![[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(element_positions(&RisGeometry::ura(8, 8, 0.5)).len(), 64);
    }

    #[test]
    fn positions_distinct() {
        let p = element_positions(&RisGeometry::ura(5, 3, 0.25));
        for i in 0..p.len() {
            for j in 0..i {
                assert_ne!(p[i], p[j]);
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let beta = 2.5;
        let cov = isotropic_covariance(&RisGeometry::ura(2, 2, 0.5), beta).unwrap();
        let m = cov.matrix();
        for i in 0..4 {
            assert_eq!(m[(i, i)].re, beta);
        }
        // λ/2 neighbours are uncorrelated
        assert!(m[(0, 1)].norm() < 1e-15);
        assert!(m[(0, 2)].norm() < 1e-15);
        // diagonal neighbours at λ/√2: sin(π√2)/(π√2)
        let expect = (PI * 2f64.sqrt()).sin() / (PI * 2f64.sqrt());
        assert!((m[(0, 3)].re / beta - expect).abs() < 1e-14);
        assert!((expect + 0.2169).abs() < 1e-4);
    }

    #[test]
    fn covariance_invariants() {
        for g in [RisGeometry::ura(8, 8, 0.5), RisGeometry::ura(4, 4, 0.25), RisGeometry::ula(16, 0.5)] {
            let beta = 1e-8;
            let cov = isotropic_covariance(&g, beta).unwrap();
            let m = cov.matrix();
            assert!(linalg::is_hermitian(m, 1e-12 * beta));
            assert!(m.iter().all(|z| z.im == 0.0));
            assert!(linalg::min_eigenvalue(m) >= -1e-10 * beta);
            assert!((cov.trace() - g.len() as f64 * beta).abs() <= 1e-9 * g.len() as f64 * beta);
        }
    }

    #[test]
    fn spacing_limits() {
        // doubling the spacing of a λ/2 ULA puts every pair at an integer
        // number of wavelengths
        let cov = isotropic_covariance(&RisGeometry::ula(6, 1.0), 3.0).unwrap();
        assert!(linalg::rel_frobenius(cov.matrix(), &CMat::identity(6, 6).scale(3.0)) < 1e-14);
        // dense arrays approach the rank-one all-β matrix
        let cov = isotropic_covariance(&RisGeometry::ura(3, 3, 1e-4), 1.0).unwrap();
        assert!(cov.matrix().iter().all(|z| (z.re - 1.0).abs() < 1e-6));
    }

    #[test]
    fn sinc_matches_plane_wave_integral() {
        let g = RisGeometry::ura(3, 3, 0.35);
        let pos = element_positions(&g);
        let cov = isotropic_covariance(&g, 1.0).unwrap();
        for (i, j) in [(0, 1), (0, 4), (0, 8), (2, 6), (1, 7)] {
            let delta = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1], pos[i][2] - pos[j][2]];
            let oracle = plane_wave_correlation(delta);
            assert!((cov.matrix()[(i, j)].re - oracle).abs() < 1e-6, "pair ({i},{j}): {oracle}");
        }
    }

    #[test]
    fn geometry_tokens() {
        let g: RisGeometry = "ura:8x8:0.5".parse().unwrap();
        assert_eq!(g, RisGeometry::ura(8, 8, 0.5));
        assert_eq!(g.to_string(), "ura:8x8:0.5");
        let g: RisGeometry = "ula:64:0.25".parse().unwrap();
        assert_eq!(g, RisGeometry::ula(64, 0.25));
        assert_eq!("ula:1x64:0.25".parse::<RisGeometry>().unwrap(), g);
        assert!("ura:8x8".parse::<RisGeometry>().is_err());
        assert!("ura:8x8:-1".parse::<RisGeometry>().is_err());
        assert!("ula:2x4:0.5".parse::<RisGeometry>().is_err());
    }

    #[test]
    fn wrapped_covariance_checks() {
        assert!(SpatialCovariance::new(CMat::identity(3, 3)).is_ok());
        let mut m = CMat::identity(2, 2);
        m[(0, 1)] = Complex64::new(2.0, 0.0);
        m[(1, 0)] = Complex64::new(2.0, 0.0);
        assert!(matches!(SpatialCovariance::new(m), Err(Error::NotPsd { .. })));
        assert!(isotropic_covariance(&RisGeometry::ura(2, 2, 0.5), -1.0).is_err());
    }
}
