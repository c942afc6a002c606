//! Misspecified MMSE estimation of `g` under correlated Rayleigh priors.
//!
//! The BS uses the model `y = √Pp B_k D_h g + w` and ignores the
//! reflection through the other operator's RIS. Two equivalent routes are
//! provided: [`BayesCovariances`] works with the `L × L` observation
//! covariances, [`MmseEstimator`] with `N × N` systems through
//! `Bᴴ(Pp B M Bᴴ + σ²I)⁻¹ = (Pp BᴴB M + σ²I)⁻¹ Bᴴ`, which stays well
//! conditioned when `σ²` is tiny compared to the signal.

use crate::error::{Error, Result};
use crate::geometry::SpatialCovariance;
use crate::linalg::{self, CMat, CVec};
use crate::sequences::{relation, ConfigSequence, PairRelation};
fn check_inputs(bk: &ConfigSequence, h: &CVec, sigma_g: &SpatialCovariance, noise_power: f64) -> Result<()> {
    let n = bk.n_elements();
    if h.len() != n || sigma_g.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "N = {n} but h has {} entries and Σ_g is {}x{}",
            h.len(),
            sigma_g.dim(),
            sigma_g.dim()
        )));
    }
    if noise_power.is_nan() || noise_power <= 0.0 {
        return Err(Error::InvalidParameter(format!("noise power must be positive, got {noise_power}")));
    }
    Ok(())
}

/// Observation covariances of the misspecified model and of the true one.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesCovariances {
    /// `√Pp Σ_g D_hᴴ B_kᴴ`.
    pub c_gy: CMat,
    /// Assumed `Pp B_k D_h Σ_g D_hᴴ B_kᴴ + σ²I`.
    pub c_yy_hat: CMat,
    /// True covariance: `c_yy_hat + Pp B_j Σ_r B_jᴴ`.
    pub c_yy: CMat,
}

impl BayesCovariances {
    pub fn new(
        bk: &ConfigSequence,
        bj: &ConfigSequence,
        h: &CVec,
        sigma_g: &SpatialCovariance,
        sigma_r: &SpatialCovariance,
        pilot_power: f64,
        noise_power: f64,
    ) -> Result<Self> {
        check_inputs(bk, h, sigma_g, noise_power)?;
        let l = bk.pilot_len();
        let bd = linalg::scale_cols(bk.matrix(), h);
        let c_gy = (sigma_g.matrix() * bd.adjoint()).scale(pilot_power.sqrt());
        let mut c_yy_hat = (&bd * sigma_g.matrix() * bd.adjoint()).scale(pilot_power);
        c_yy_hat += CMat::identity(l, l).scale(noise_power);
        let c_yy_hat = linalg::hermitian_part(&c_yy_hat);
        let contam = (bj.matrix() * sigma_r.matrix() * bj.matrix().adjoint()).scale(pilot_power);
        let c_yy = linalg::hermitian_part(&(&c_yy_hat + contam));
        Ok(BayesCovariances { c_gy, c_yy_hat, c_yy })
    }

    /// Estimator gain `C_gŷ C_ŷŷ⁻¹` (N × L).
    pub fn gain(&self) -> Result<CMat> {
        Ok(linalg::solve_hpd(&self.c_yy_hat, &self.c_gy.adjoint())?.adjoint())
    }

    pub fn estimate(&self, y: &CVec) -> Result<CVec> {
        Ok(self.gain()? * y)
    }
}

/// Error covariance split into the part the BS expects and the part caused
/// by the other RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCovariance {
    pub uncontaminated: CMat,
    pub contamination: CMat,
}

impl ErrorCovariance {
    pub fn total(&self) -> CMat {
        &self.uncontaminated + &self.contamination
    }

    pub fn trace(&self) -> f64 {
        linalg::trace_re(&self.uncontaminated) + linalg::trace_re(&self.contamination)
    }
}

/// `Σ_g − C_gŷ C_ŷŷ⁻¹ C_gŷᴴ + Pp C_gŷ C_ŷŷ⁻¹ B_j Σ_r B_jᴴ C_ŷŷ⁻¹ C_gŷᴴ`
/// evaluated with `L × L` solves.
pub fn error_covariance(
    cov: &BayesCovariances,
    sigma_g: &SpatialCovariance,
    bj: &ConfigSequence,
    sigma_r: &SpatialCovariance,
    pilot_power: f64,
) -> Result<ErrorCovariance> {
    let a = cov.gain()?;
    let uncontaminated = linalg::hermitian_part(&(sigma_g.matrix() - &a * cov.c_gy.adjoint()));
    let ab = &a * bj.matrix();
    let contamination = linalg::hermitian_part(&(&ab * sigma_r.matrix() * ab.adjoint()).scale(pilot_power));
    Ok(ErrorCovariance { uncontaminated, contamination })
}

/// Misspecified MMSE estimator for one BS.
#[derive(Debug, Clone)]
pub struct MmseEstimator {
    bk: ConfigSequence,
    /// `Σ_g D_hᴴ (G M + (σ²/Pp) I)⁻¹` with `G = B_kᴴB_k`, `M = D_h Σ_g D_hᴴ`.
    gain: CMat,
    sigma_g: CMat,
    h: CVec,
    pilot_power: f64,
}

impl MmseEstimator {
    pub fn new(
        bk: &ConfigSequence,
        h: &CVec,
        sigma_g: &SpatialCovariance,
        pilot_power: f64,
        noise_power: f64,
    ) -> Result<Self> {
        check_inputs(bk, h, sigma_g, noise_power)?;
        let n = bk.n_elements();
        let gram = bk.matrix().ad_mul(bk.matrix());
        let m = linalg::congruence_diag(h, sigma_g.matrix());
        let mut k = gram * m;
        k += CMat::identity(n, n).scale(noise_power / pilot_power);
        // Σ_g Dᴴ K⁻¹ = (K⁻ᴴ D Σ_g)ᴴ
        let rhs = linalg::scale_rows(h, sigma_g.matrix());
        let sol = k
            .adjoint()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NotPositiveDefinite("estimator system is singular".into()))?;
        Ok(MmseEstimator {
            bk: bk.clone(),
            gain: sol.adjoint(),
            sigma_g: sigma_g.matrix().clone(),
            h: h.clone(),
            pilot_power,
        })
    }

    pub fn estimate(&self, y: &CVec) -> Result<CVec> {
        if y.len() != self.bk.pilot_len() {
            return Err(Error::DimensionMismatch(format!("y has {} entries, L = {}", y.len(), self.bk.pilot_len())));
        }
        let z = self.bk.matrix().ad_mul(y);
        Ok((&self.gain * z).scale(1.0 / self.pilot_power.sqrt()))
    }

    pub fn error_covariance(&self, bj: &ConfigSequence, sigma_r: &SpatialCovariance) -> Result<ErrorCovariance> {
        if bj.matrix().shape() != self.bk.matrix().shape() || sigma_r.dim() != self.h.len() {
            return Err(Error::DimensionMismatch("B_j or Σ_r does not match B_k".into()));
        }
        let gram = self.bk.matrix().ad_mul(self.bk.matrix());
        let gd_sigma = gram * linalg::scale_rows(&self.h, &self.sigma_g);
        let uncontaminated = linalg::hermitian_part(&(&self.sigma_g - &self.gain * gd_sigma));
        let ax = &self.gain * self.bk.matrix().ad_mul(bj.matrix());
        let contamination = linalg::hermitian_part(&(&ax * sigma_r.matrix() * ax.adjoint()));
        Ok(ErrorCovariance { uncontaminated, contamination })
    }
}

/// One-shot estimate `ĝ = (1/√Pp) Σ_g D_hᴴ Bᴴ (B D_h Σ_g D_hᴴ Bᴴ + (σ²/Pp) I)⁻¹ y`.
pub fn mmse_channel_estimate(
    y: &CVec,
    b: &ConfigSequence,
    h: &CVec,
    sigma_g: &SpatialCovariance,
    pilot_power: f64,
    noise_power: f64,
) -> Result<CVec> {
    MmseEstimator::new(b, h, sigma_g, pilot_power, noise_power)?.estimate(y)
}

/// Limit of the error covariance as `Pp/σ² → ∞`:
/// `D_h⁻¹ B_kᴴB_j Σ_r B_jᴴB_k D_h⁻ᴴ / L²`.
///
/// Shared sequences give `D_h⁻¹ Σ_r D_h⁻ᴴ` and orthogonal ones zero; those
/// cases are evaluated without forming the cross products.
pub fn high_snr_contamination(
    bk: &ConfigSequence,
    bj: &ConfigSequence,
    h: &CVec,
    sigma_r: &SpatialCovariance,
) -> Result<CMat> {
    let n = h.len();
    if bk.n_elements() != n || bj.n_elements() != n || sigma_r.dim() != n {
        return Err(Error::DimensionMismatch("sequence, h and Σ_r sizes differ".into()));
    }
    let inv_h = linalg::recip(h)?;
    let l = bk.pilot_len() as f64;
    Ok(match relation(bk, bj) {
        PairRelation::Orthogonal => CMat::zeros(n, n),
        PairRelation::Identical => linalg::hermitian_part(&linalg::congruence_diag(&inv_h, sigma_r.matrix())),
        PairRelation::General => {
            let x = bk.matrix().ad_mul(bj.matrix());
            let inner = &x * sigma_r.matrix() * x.adjoint();
            linalg::hermitian_part(&linalg::congruence_diag(&inv_h, &inner).unscale(l * l))
        }
    })
}

/// Normalized MSE `trace(E) / trace(Σ_g)`.
pub fn normalized_trace(m: &CMat, sigma_g: &SpatialCovariance) -> Result<f64> {
    let t = sigma_g.trace();
    if t <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(linalg::trace_re(m) / t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{received_pilots, sigma_r, ChannelPriors, GaussianSampler};
    use crate::geometry::{isotropic_covariance, RisGeometry};
    use crate::rng::{complex_normal_vec, seeded};
    use crate::sequences::{make_identical_pair, make_orthogonal_pair, SequencePair};
    use crate::{Complex64, ConfigMode, Operator};
    use proptest::prelude::*;

    fn unit_phases(n: usize, seed: u64) -> CVec {
        let v = complex_normal_vec(&mut seeded(seed), n, 1.0);
        v.map(|z| z / z.norm())
    }

    struct Setup {
        bk: ConfigSequence,
        bj: ConfigSequence,
        h: CVec,
        sg: SpatialCovariance,
        sr: SpatialCovariance,
    }

    fn setup(mode: ConfigMode, n_side: usize, l: usize, seed: u64) -> Setup {
        let n = n_side * n_side;
        let pair = SequencePair::new(mode, n, l).unwrap();
        let sg = isotropic_covariance(&RisGeometry::ura(n_side, n_side, 0.5), 1.0).unwrap();
        let q = unit_phases(n, seed + 1);
        let priors = ChannelPriors { sigma_g: sg.clone(), sigma_p: sg.clone() };
        Setup { bk: pair.b1, bj: pair.b2, h: unit_phases(n, seed), sg, sr: sigma_r(&priors, &q) }
    }

    #[test]
    fn zero_prior_and_zero_observation() {
        let s = setup(ConfigMode::Identical, 2, 4, 1);
        let y = complex_normal_vec(&mut seeded(2), 4, 1.0);
        let est = mmse_channel_estimate(&y, &s.bk, &s.h, &SpatialCovariance::zeros(4), 1.0, 0.1).unwrap();
        assert!(est.iter().all(|z| z.norm() == 0.0));
        let est = mmse_channel_estimate(&CVec::zeros(4), &s.bk, &s.h, &s.sg, 1.0, 0.1).unwrap();
        assert!(est.iter().all(|z| z.norm() == 0.0));
        assert!(MmseEstimator::new(&s.bk, &s.h, &s.sg, 1.0, 0.0).is_err());
    }

    #[test]
    fn routes_agree() {
        for mode in ConfigMode::BOTH {
            let s = setup(mode, 3, 20, 3);
            let (pp, s2) = (0.7, 0.05);
            let cov = BayesCovariances::new(&s.bk, &s.bj, &s.h, &s.sg, &s.sr, pp, s2).unwrap();
            let est = MmseEstimator::new(&s.bk, &s.h, &s.sg, pp, s2).unwrap();
            let y = complex_normal_vec(&mut seeded(4), 20, 1.0);
            let a = cov.estimate(&y).unwrap();
            let b = est.estimate(&y).unwrap();
            assert!(linalg::max_abs_vec(&(&a - &b)) < 1e-10 * a.norm());
            let e1 = error_covariance(&cov, &s.sg, &s.bj, &s.sr, pp).unwrap();
            let e2 = est.error_covariance(&s.bj, &s.sr).unwrap();
            assert!(linalg::rel_frobenius(&e1.uncontaminated, &e2.uncontaminated) < 1e-9);
            if mode == ConfigMode::Identical {
                assert!(linalg::rel_frobenius(&e1.contamination, &e2.contamination) < 1e-9);
            } else {
                assert!(linalg::max_abs(&e2.contamination) < 1e-12);
            }
            // the contamination term is exactly the covariance difference
            let diff = &cov.c_yy - &cov.c_yy_hat;
            let bj_term = (s.bj.matrix() * s.sr.matrix() * s.bj.matrix().adjoint()).scale(pp);
            assert!(linalg::max_abs(&(diff - bj_term)) < 1e-12);
        }
    }

    #[test]
    fn no_contamination_reduces_to_standard_mmse() {
        let s = setup(ConfigMode::Identical, 2, 8, 5);
        let (pp, s2) = (1.0, 0.3);
        let est = MmseEstimator::new(&s.bk, &s.h, &s.sg, pp, s2).unwrap();
        let e = est.error_covariance(&s.bj, &SpatialCovariance::zeros(4)).unwrap();
        assert!(linalg::max_abs(&e.contamination) == 0.0);
        // standard form (Σ_g⁻¹ + Pp/σ² Dᴴ BᴴB D)⁻¹ via full inverses
        let bd = linalg::scale_cols(s.bk.matrix(), &s.h);
        let info = linalg::inverse(s.sg.matrix()).unwrap() + (bd.adjoint() * &bd).scale(pp / s2);
        let expect = linalg::inverse(&info).unwrap();
        assert!(linalg::rel_frobenius(&e.uncontaminated, &expect) < 1e-9);
    }

    #[test]
    fn high_snr_examples() {
        let s = setup(ConfigMode::Orthogonal, 2, 8, 6);
        assert_eq!(high_snr_contamination(&s.bk, &s.bj, &s.h, &s.sr).unwrap(), CMat::zeros(4, 4));

        let (b1, b2) = make_identical_pair(3, 5).unwrap();
        let h = unit_phases(3, 7);
        let out = high_snr_contamination(&b1, &b2, &h, &SpatialCovariance::scaled_identity(3, 1.0)).unwrap();
        assert!(linalg::max_abs(&(out - CMat::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn general_formula_matches_special_cases() {
        let s = setup(ConfigMode::Identical, 2, 8, 8);
        let inv_h = linalg::recip(&s.h).unwrap();
        let x = s.bk.matrix().ad_mul(s.bj.matrix());
        let inner = &x * s.sr.matrix() * x.adjoint();
        let general = linalg::congruence_diag(&inv_h, &inner).unscale(64.0);
        let special = high_snr_contamination(&s.bk, &s.bj, &s.h, &s.sr).unwrap();
        assert!(linalg::rel_frobenius(&general, &special) < 1e-12);
    }

    #[test]
    fn identical_limit_of_error_covariance() {
        let s = setup(ConfigMode::Identical, 3, 18, 9);
        let est = MmseEstimator::new(&s.bk, &s.h, &s.sg, 1.0, 1e-12).unwrap();
        let e = est.error_covariance(&s.bj, &s.sr).unwrap();
        let lim = high_snr_contamination(&s.bk, &s.bj, &s.h, &s.sr).unwrap();
        assert!(linalg::rel_frobenius(&e.total(), &lim) < 1e-6);
    }

    #[test]
    fn orthogonal_vanishes_at_high_snr() {
        let s = setup(ConfigMode::Orthogonal, 3, 18, 10);
        let est = MmseEstimator::new(&s.bk, &s.h, &s.sg, 1.0, 1e-12).unwrap();
        assert!(est.error_covariance(&s.bj, &s.sr).unwrap().trace() <= 1e-12);
    }

    #[test]
    fn contamination_independent_of_pilot_power() {
        let s = setup(ConfigMode::Identical, 3, 18, 11);
        let base = MmseEstimator::new(&s.bk, &s.h, &s.sg, 1.0, 1e-9).unwrap().error_covariance(&s.bj, &s.sr).unwrap();
        for pp in [1e3, 1e6] {
            let e = MmseEstimator::new(&s.bk, &s.h, &s.sg, pp, 1e-9).unwrap().error_covariance(&s.bj, &s.sr).unwrap();
            assert!(linalg::rel_frobenius(&e.contamination, &base.contamination) < 1e-9);
        }
    }

    #[test]
    fn uncontaminated_monte_carlo() {
        let n = 2;
        let (bk, _) = make_identical_pair(n, 4).unwrap();
        let sg = SpatialCovariance::new(CMat::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.4), Complex64::new(0.3, -0.4), Complex64::new(0.8, 0.0)],
        ))
        .unwrap();
        let h = unit_phases(n, 12);
        let (pp, s2) = (1.0, 0.5);
        let est = MmseEstimator::new(&bk, &h, &sg, pp, s2).unwrap();
        let theory = linalg::trace_re(&est.error_covariance(&bk, &SpatialCovariance::zeros(n)).unwrap().uncontaminated);
        let sampler = GaussianSampler::new(&sg);
        let mut rng = seeded(13);
        let trials = 10_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..trials {
            let g = sampler.sample(&mut rng);
            let y = (bk.matrix() * h.component_mul(&g)).scale(pp.sqrt()) + complex_normal_vec(&mut rng, 4, s2);
            let e = (est.estimate(&y).unwrap() - g).norm_squared();
            sum += e;
            sum2 += e * e;
        }
        let mean = sum / trials as f64;
        let se = ((sum2 / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - theory).abs() < 3.0 * se, "{mean} vs {theory} ± {se}");
    }

    #[test]
    fn identical_monte_carlo_entrywise() {
        let n = 4;
        let s = setup(ConfigMode::Identical, 2, 4, 14);
        let q = unit_phases(n, 15);
        let (pp, s2) = (1.0, 0.2);
        let est = MmseEstimator::new(&s.bk, &s.h, &s.sg, pp, s2).unwrap();
        let theory = est.error_covariance(&s.bj, &s.sr).unwrap().total();
        let sampler = GaussianSampler::new(&s.sg);
        let mut rng = seeded(16);
        let trials = 10_000;
        let mut errs = Vec::with_capacity(trials);
        for _ in 0..trials {
            let ch = crate::channels::ChannelSet {
                h: [s.h.clone(), s.h.clone()],
                g: [sampler.sample(&mut rng), CVec::zeros(n)],
                p: [sampler.sample(&mut rng), CVec::zeros(n)],
                q: [q.clone(), q.clone()],
            };
            let y = received_pilots(&ch, &s.bk, &s.bj, pp, s2, Operator::First, &mut rng).unwrap();
            errs.push(est.estimate(&y).unwrap() - &ch.g[0]);
        }
        let mut mean = CMat::zeros(n, n);
        for e in &errs {
            mean += e * e.adjoint();
        }
        mean /= Complex64::new(trials as f64, 0.0);
        for i in 0..n {
            for j in 0..n {
                let v: f64 = errs.iter().map(|e| (e[i] * e[j].conj() - mean[(i, j)]).norm_sqr()).sum::<f64>()
                    / (trials - 1) as f64;
                let se = (v / trials as f64).sqrt();
                assert!((mean[(i, j)] - theory[(i, j)]).norm() < 3.0 * se, "({i},{j})");
            }
        }
    }

    #[test]
    fn l_independent_asymptote() {
        let n = 4;
        let sg = isotropic_covariance(&RisGeometry::ura(2, 2, 0.5), 1.0).unwrap();
        let h = unit_phases(n, 17);
        for l in [2 * n, 4 * n] {
            let (b1, b2) = make_identical_pair(n, l).unwrap();
            let a = high_snr_contamination(&b1, &b2, &h, &sg).unwrap();
            let (c1, c2) = make_identical_pair(n, 2 * n).unwrap();
            assert_eq!(a, high_snr_contamination(&c1, &c2, &h, &sg).unwrap());
        }
        let (b1, b2) = make_orthogonal_pair(n, 2 * n).unwrap();
        assert_eq!(high_snr_contamination(&b1, &b2, &h, &sg).unwrap(), CMat::zeros(n, n));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn error_covariance_is_psd(seed in 0u64..1000, pp_db in -20.0f64..40.0, identical in any::<bool>()) {
            let mode = if identical { ConfigMode::Identical } else { ConfigMode::Orthogonal };
            let s = setup(mode, 2, 8, seed);
            let pp = 10f64.powf(pp_db / 10.0);
            let e = MmseEstimator::new(&s.bk, &s.h, &s.sg, pp, 1.0).unwrap().error_covariance(&s.bj, &s.sr).unwrap();
            let tot = e.total();
            prop_assert!(linalg::min_eigenvalue(&tot) > -1e-10);
            prop_assert!(linalg::trace_re(&tot) >= linalg::trace_re(&e.uncontaminated) - 1e-12);
        }

        #[test]
        fn orthogonal_error_decreases_with_power(seed in 0u64..1000, pp_db in -20.0f64..40.0, step in 0.5f64..10.0) {
            let s = setup(ConfigMode::Orthogonal, 2, 8, seed);
            let e = |db: f64| {
                MmseEstimator::new(&s.bk, &s.h, &s.sg, 10f64.powf(db / 10.0), 1.0)
                    .unwrap()
                    .error_covariance(&s.bj, &s.sr)
                    .unwrap()
                    .total()
            };
            let (a, b) = (e(pp_db), e(pp_db + step));
            prop_assert!(linalg::trace_re(&b) < linalg::trace_re(&a));
            let top = |m: &CMat| *linalg::hermitian_eigen(m).0.last().unwrap();
            prop_assert!(top(&b) <= top(&a) + 1e-12);
            prop_assert!(linalg::min_eigenvalue(&(&a - &b)) > -1e-10);
        }
    }
}
