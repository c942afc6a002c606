//! Capacity lower bound with imperfect CSI caused by pilot contamination.
//!
//! With high pilot SNR the estimate is `ĝ = g` for orthogonal sequences and
//! `ĝ = g + D_h⁻¹ r` for shared ones. The bound for UE `k` is the average of
//! `log2(1 + |E[v|Ω]|² / (Var(v|Ω) + σ²))` over the side information `Ω`,
//! where `v = √Pd (φ_kᵀ D_h g + φ_jᵀ r)` is the overall channel.

use rayon::prelude::*;

use crate::channels::{ChannelSet, RayleighScenario};
use crate::data_link::{aligned_configs, mean_and_stderr};
use crate::error::{Error, Result};
use crate::geometry::SpatialCovariance;
use crate::linalg::{self, CMat, CVec};
use crate::rng::{complex_normal, trial_rng};
use crate::{Complex64, ConfigMode, Operator};

/// Moments of `g` and `r` given `ĝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub mean_g: CVec,
    pub mean_r: CVec,
    pub var_g: CMat,
    pub var_r: CMat,
    /// Second moment `E[g rᴴ | ĝ]`.
    pub cross_gr: CMat,
}

impl ConditionalMoments {
    /// `E[g rᴴ|ĝ] − E[g|ĝ] E[r|ĝ]ᴴ`.
    pub fn cross_covariance(&self) -> CMat {
        &self.cross_gr - &self.mean_g * self.mean_r.adjoint()
    }
}

/// Which expression supplies `E[g rᴴ|ĝ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossTerm {
    /// `ĝĝᴴ S⁻¹ Σ_r D_h⁻ᴴ − D_h⁻¹ Σ_r` with `S = Σ_g + D_h⁻¹ Σ_r D_h⁻ᴴ`.
    Paper,
    /// Exact Gaussian conditioning.
    #[default]
    Oracle,
}

impl std::str::FromStr for CrossTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(CrossTerm::Paper),
            "oracle" | "exact" => Ok(CrossTerm::Oracle),
            other => Err(Error::Config(format!("unknown cross term `{other}`"))),
        }
    }
}

impl std::fmt::Display for CrossTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CrossTerm::Paper => "paper",
            CrossTerm::Oracle => "oracle",
        })
    }
}

/// High-pilot-SNR estimate of UE `k`.
pub fn csi_error_model(mode: ConfigMode, ch: &ChannelSet, k: Operator) -> Result<CVec> {
    match mode {
        ConfigMode::Orthogonal => Ok(ch.g(k).clone()),
        ConfigMode::Identical => Ok(ch.g(k) + linalg::recip(ch.h(k))?.component_mul(&ch.r(k))),
    }
}

fn check_dims(g_hat: &CVec, h: &CVec, sigma_g: &SpatialCovariance, sigma_r: &SpatialCovariance) -> Result<()> {
    let n = g_hat.len();
    if h.len() != n || sigma_g.dim() != n || sigma_r.dim() != n {
        return Err(Error::DimensionMismatch("ĝ, h, Σ_g and Σ_r sizes differ".into()));
    }
    Ok(())
}

/// The ĝ-independent parts of the closed-form moments for one UE.
#[derive(Debug, Clone)]
pub struct MomentModel {
    mode: ConfigMode,
    sigma_r: CMat,
    inv_h: CVec,
    /// `Σ_g S⁻¹`.
    wg: CMat,
    /// `Σ_r D_h⁻ᴴ S⁻¹`.
    wr: CMat,
    /// `S⁻¹ Σ_r D_h⁻ᴴ`.
    p: CMat,
    var_g: CMat,
    var_r: CMat,
}

impl MomentModel {
    pub fn new(h: &CVec, sigma_g: &SpatialCovariance, sigma_r: &SpatialCovariance, mode: ConfigMode) -> Result<Self> {
        let n = h.len();
        if sigma_g.dim() != n || sigma_r.dim() != n {
            return Err(Error::DimensionMismatch("h, Σ_g and Σ_r sizes differ".into()));
        }
        let inv_h = linalg::recip(h)?;
        let sg = sigma_g.matrix();
        let sr = sigma_r.matrix().clone();
        if mode == ConfigMode::Orthogonal {
            let z = CMat::zeros(n, n);
            return Ok(MomentModel {
                mode,
                var_r: sr.clone(),
                sigma_r: sr,
                inv_h,
                wg: z.clone(),
                wr: z.clone(),
                p: z.clone(),
                var_g: z,
            });
        }
        let dr = linalg::scale_rows(&inv_h, &sr); // D⁻¹ Σ_r
        let s = linalg::hermitian_part(&(sg + linalg::scale_cols(&dr, &inv_h.conjugate())));
        let si = linalg::solve_hpd(&s, &CMat::identity(n, n))
            .map_err(|_| Error::NotPositiveDefinite("Σ_g + D⁻¹Σ_rD⁻ᴴ is singular".into()))?;
        let wg = sg * &si;
        let rd = dr.adjoint(); // Σ_r D⁻ᴴ
        let wr = &rd * &si;
        let p = &si * &rd;
        let var_g = linalg::hermitian_part(&(sg - &wg * sg));
        let var_r = linalg::hermitian_part(&(&sr - &wr * &dr));
        Ok(MomentModel { mode, sigma_r: sr, inv_h, wg, wr, p, var_g, var_r })
    }

    pub fn mode(&self) -> ConfigMode {
        self.mode
    }

    /// Closed-form moments with the cross term as printed.
    pub fn moments(&self, g_hat: &CVec) -> ConditionalMoments {
        let n = g_hat.len();
        match self.mode {
            ConfigMode::Orthogonal => ConditionalMoments {
                mean_g: g_hat.clone(),
                mean_r: CVec::zeros(n),
                var_g: CMat::zeros(n, n),
                var_r: self.var_r.clone(),
                cross_gr: CMat::zeros(n, n),
            },
            ConfigMode::Identical => {
                let dr = linalg::scale_rows(&self.inv_h, &self.sigma_r);
                ConditionalMoments {
                    mean_g: &self.wg * g_hat,
                    mean_r: &self.wr * g_hat,
                    var_g: self.var_g.clone(),
                    var_r: self.var_r.clone(),
                    cross_gr: g_hat * (g_hat.adjoint() * &self.p) - dr,
                }
            }
        }
    }

    /// Same means and variances with the exact cross moment
    /// `E[g]E[r]ᴴ − Σ_g S⁻¹ D_h⁻¹ Σ_r`.
    pub fn moments_exact(&self, g_hat: &CVec) -> ConditionalMoments {
        let mut m = self.moments(g_hat);
        if self.mode == ConfigMode::Identical {
            let dr = linalg::scale_rows(&self.inv_h, &self.sigma_r);
            m.cross_gr = &m.mean_g * m.mean_r.adjoint() - &self.wg * dr;
        }
        m
    }

    pub fn moments_with(&self, g_hat: &CVec, cross: CrossTerm) -> ConditionalMoments {
        match cross {
            CrossTerm::Paper => self.moments(g_hat),
            CrossTerm::Oracle => self.moments_exact(g_hat),
        }
    }
}

/// Closed-form conditional moments, cross term as printed.
pub fn conditional_moments_paper(
    g_hat: &CVec,
    h: &CVec,
    sigma_g: &SpatialCovariance,
    sigma_r: &SpatialCovariance,
    mode: ConfigMode,
) -> Result<ConditionalMoments> {
    check_dims(g_hat, h, sigma_g, sigma_r)?;
    Ok(MomentModel::new(h, sigma_g, sigma_r, mode)?.moments(g_hat))
}

/// Conditioning of the stacked vector `z = (g, r) ~ CN(0, diag(Σ_g, Σ_r))`
/// on the linear observation `ĝ = T z` with Schur complements.
pub fn conditional_moments_oracle(
    g_hat: &CVec,
    h: &CVec,
    sigma_g: &SpatialCovariance,
    sigma_r: &SpatialCovariance,
    mode: ConfigMode,
) -> Result<ConditionalMoments> {
    check_dims(g_hat, h, sigma_g, sigma_r)?;
    let n = g_hat.len();
    let mut t = CMat::zeros(n, 2 * n);
    for i in 0..n {
        t[(i, i)] = Complex64::new(1.0, 0.0);
        if mode == ConfigMode::Identical {
            if h[i].norm_sqr() == 0.0 {
                return Err(Error::SingularDiagonal { index: i });
            }
            t[(i, n + i)] = Complex64::new(1.0, 0.0) / h[i];
        }
    }
    let mut sz = CMat::zeros(2 * n, 2 * n);
    sz.view_mut((0, 0), (n, n)).copy_from(sigma_g.matrix());
    sz.view_mut((n, n), (n, n)).copy_from(sigma_r.matrix());
    let szt = &sz * t.adjoint(); // Cov(z, ĝ)
    let s = linalg::hermitian_part(&(&t * &szt));
    // K = Cov(z, ĝ) Cov(ĝ)⁻¹
    let k = linalg::solve_hpd(&s, &szt.adjoint())
        .map_err(|_| Error::NotPositiveDefinite("observation covariance is singular".into()))?
        .adjoint();
    let mean = &k * g_hat;
    let cov = linalg::hermitian_part(&(&sz - &k * szt.adjoint()));
    let mean_g = mean.rows(0, n).into_owned();
    let mean_r = mean.rows(n, n).into_owned();
    let cov_gr = cov.view((0, n), (n, n)).into_owned();
    Ok(ConditionalMoments {
        cross_gr: cov_gr + &mean_g * mean_r.adjoint(),
        var_g: cov.view((0, 0), (n, n)).into_owned(),
        var_r: cov.view((n, n), (n, n)).into_owned(),
        mean_g,
        mean_r,
    })
}

/// Bound term of one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitySample {
    /// True overall channel, when known.
    pub v: Option<Complex64>,
    pub cond_mean_v: Complex64,
    pub cond_var_v: f64,
    pub se_term: f64,
}

/// Conditional mean and variance of `v / √Pd` for RIS coefficients
/// `phi_k` (serving) and `phi_j` (other RIS).
pub fn normalized_moments_of_v(m: &ConditionalMoments, phi_k: &CVec, phi_j: &CVec, h: &CVec) -> (Complex64, f64) {
    let a = phi_k.component_mul(h);
    let b = phi_j;
    let mean = linalg::dot_t(&a, &m.mean_g) + linalg::dot_t(b, &m.mean_r);
    let cgr = m.cross_covariance();
    let var = linalg::bilinear(&a, &m.var_g, &a).re
        + linalg::bilinear(b, &m.var_r, b).re
        + 2.0 * linalg::bilinear(&a, &cgr, b).re;
    (mean, var)
}

/// `log2(1 + Pd |μ|² / (Pd ν + σ²))` from normalized moments, with `ν`
/// clipped at zero.
pub fn se_from_normalized(mean: Complex64, var: f64, data_power: f64, noise_power: f64) -> f64 {
    (1.0 + data_power * mean.norm_sqr() / (data_power * var.max(0.0) + noise_power)).log2()
}

pub fn capacity_sample(
    moments: &ConditionalMoments,
    phi_k: &CVec,
    phi_j: &CVec,
    h: &CVec,
    data_power: f64,
    noise_power: f64,
) -> CapacitySample {
    let (mean, var) = normalized_moments_of_v(moments, phi_k, phi_j, h);
    let s = data_power.sqrt();
    let cond_var_v = (data_power * var).max(0.0);
    CapacitySample {
        v: None,
        cond_mean_v: s * mean,
        cond_var_v,
        se_term: (1.0 + (s * mean).norm_sqr() / (cond_var_v + noise_power)).log2(),
    }
}

/// True `v = √Pd (φ_kᵀ D_h g + φ_jᵀ r)`.
pub fn overall_channel(ch: &ChannelSet, phi_k: &CVec, phi_j: &CVec, data_power: f64, k: Operator) -> Complex64 {
    let a = phi_k.component_mul(ch.h(k));
    data_power.sqrt() * (linalg::dot_t(&a, ch.g(k)) + linalg::dot_t(phi_j, &ch.r(k)))
}

/// Monte-Carlo settings of one bound curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRun {
    pub mode: ConfigMode,
    pub data_power_dbm: Vec<f64>,
    pub noise_power: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub stream: u64,
    pub cross: CrossTerm,
    pub user: Operator,
}

/// Per-trial normalized moments `(E[v|Ω]/√Pd, Var(v|Ω)/Pd)` of one
/// realization of `(g, p)` for both UEs.
pub fn trial_moments(
    model: &MomentModel,
    ch: &ChannelSet,
    cross: CrossTerm,
    k: Operator,
) -> Result<(Complex64, f64)> {
    let mode = model.mode();
    let g_hat = [csi_error_model(mode, ch, Operator::First)?, csi_error_model(mode, ch, Operator::Second)?];
    let cfg = aligned_configs(ch, &g_hat);
    let m = model.moments_with(&g_hat[k.index()], cross);
    let phi_k = cfg[k.index()].coefficients();
    let phi_j = cfg[k.other().index()].coefficients();
    Ok(normalized_moments_of_v(&m, &phi_k, &phi_j, ch.h(k)))
}

/// Mean bound and its standard error at every data power.
pub fn capacity_curve_mc(scenario: &RayleighScenario, run: &CapacityRun) -> Result<Vec<(f64, f64)>> {
    if run.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let k = run.user;
    let model = MomentModel::new(
        &scenario.h[k.index()],
        &scenario.priors[k.index()].sigma_g,
        &scenario.sigma_r(k),
        run.mode,
    )?;
    let pd: Vec<f64> = run.data_power_dbm.iter().map(|&x| crate::units::dbm_to_linear(x)).collect();
    let per_trial: Vec<Result<Vec<f64>>> = (0..run.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(run.master_seed, run.stream, t);
            let ch = scenario.draw(&mut rng);
            let (mean, var) = trial_moments(&model, &ch, run.cross, k)?;
            Ok(pd.iter().map(|&p| se_from_normalized(mean, var, p, run.noise_power)).collect())
        })
        .collect();
    let mut sum = vec![0.0; pd.len()];
    let mut sum2 = vec![0.0; pd.len()];
    for row in per_trial {
        for (i, v) in row?.into_iter().enumerate() {
            sum[i] += v;
            sum2[i] += v * v;
        }
    }
    Ok((0..pd.len()).map(|i| mean_and_stderr(sum[i], sum2[i], run.trials)).collect())
}

/// Bound at a single data power: `(mean bits/use, standard error)`.
pub fn capacity_lower_bound_mc(
    scenario: &RayleighScenario,
    mode: ConfigMode,
    data_power_dbm: f64,
    noise_power: f64,
    trials: usize,
    master_seed: u64,
    cross: CrossTerm,
) -> Result<(f64, f64)> {
    let run = CapacityRun {
        mode,
        data_power_dbm: vec![data_power_dbm],
        noise_power,
        trials,
        master_seed,
        stream: crate::rng::label_id("capacity"),
        cross,
        user: Operator::First,
    };
    Ok(capacity_curve_mc(scenario, &run)?[0])
}

/// Sample correlation between the data noise `w` and `|E[v|Ω]|` over
/// independent draws. The noise is drawn after `Ω`, so the value should
/// shrink like `1/√trials`.
pub fn noise_side_info_correlation(
    scenario: &RayleighScenario,
    mode: ConfigMode,
    noise_power: f64,
    trials: usize,
    master_seed: u64,
) -> Result<f64> {
    let k = Operator::First;
    let model = MomentModel::new(&scenario.h[0], &scenario.priors[0].sigma_g, &scenario.sigma_r(k), mode)?;
    let stream = crate::rng::label_id("noise-independence");
    let pairs: Vec<Result<(f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(master_seed, stream, t);
            let ch = scenario.draw(&mut rng);
            let (mean, _) = trial_moments(&model, &ch, CrossTerm::Oracle, k)?;
            let w = complex_normal(&mut rng, noise_power);
            Ok((w.re, mean.norm()))
        })
        .collect();
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
