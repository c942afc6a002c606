//! Estimators for deterministic channels and their error expressions.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::sequences::ConfigSequence;
use crate::{Complex64, ConfigMode};

/// Condition number above which the joint normal equations are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct DetEstimate {
    pub g_hat: CVec,
    /// Only produced by the joint estimator.
    pub r_hat: Option<CVec>,
    pub bias: CVec,
    pub error_cov_trace: f64,
}

fn check_dims(y: &CVec, b: &ConfigSequence, h: &CVec) -> Result<()> {
    if y.len() != b.pilot_len() || h.len() != b.n_elements() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, h has {}, sequence is {:?}",
            y.len(),
            h.len(),
            b.matrix().shape()
        )));
    }
    Ok(())
}

/// Estimate of `g` that ignores the non-serving RIS:
/// `ĝ = D_h⁻¹ Bᴴ y / (L √Pp)`.
pub fn mml_estimate(y: &CVec, b: &ConfigSequence, h: &CVec, pilot_power: f64) -> Result<CVec> {
    check_dims(y, b, h)?;
    let inv_h = linalg::recip(h)?;
    let z = b.matrix().ad_mul(y);
    let s = 1.0 / (b.pilot_len() as f64 * pilot_power.sqrt());
    Ok(inv_h.component_mul(&z).scale(s))
}

/// Joint estimate of `(g, r)` from `y = √Pp (B_k D_h g + B_j r) + w`.
///
/// The normal equations are formed for `(D_h g, r)` against `[B_k, B_j]`,
/// which has the same rank as the original system but does not inherit the
/// dynamic range of `h`. Fails with [`Error::RankDeficient`] when the normal
/// matrix has condition number above [`MAX_CONDITION`].
pub fn joint_ml_estimate(
    y: &CVec,
    bk: &ConfigSequence,
    bj: &ConfigSequence,
    h: &CVec,
    pilot_power: f64,
) -> Result<(CVec, CVec)> {
    check_dims(y, bk, h)?;
    check_dims(y, bj, h)?;
    let (l, n) = bk.matrix().shape();
    if l < 2 * n {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let inv_h = linalg::recip(h)?;
    let mut a = CMat::zeros(l, 2 * n);
    a.view_mut((0, 0), (l, n)).copy_from(bk.matrix());
    a.view_mut((0, n), (l, n)).copy_from(bj.matrix());
    let normal = linalg::hermitian_part(&a.ad_mul(&a));
    let (eig, _) = linalg::hermitian_eigen(&normal);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::RankDeficient { condition });
    }
    let rhs = CMat::from_column_slice(l, 1, y.as_slice());
    let x = linalg::solve_hpd(&normal, &a.ad_mul(&rhs))?;
    let s = 1.0 / pilot_power.sqrt();
    let u = CVec::from_fn(n, |i, _| x[(i, 0)] * s);
    let r = CVec::from_fn(n, |i, _| x[(n + i, 0)] * s);
    Ok((inv_h.component_mul(&u), r))
}

/// Mean error of the misspecified estimator: `D_h⁻¹ D_q p` when both RISs
/// share one sequence, zero for orthogonal sequences.
pub fn bias(h: &CVec, q: &CVec, p: &CVec, mode: ConfigMode) -> Result<CVec> {
    match mode {
        ConfigMode::Orthogonal => Ok(CVec::zeros(h.len())),
        ConfigMode::Identical => Ok(linalg::recip(h)?.component_mul(&q.component_mul(p))),
    }
}

/// `‖b‖² + σ²/(L Pp) Σ 1/|h_n|²`.
pub fn mse_trace(b: &CVec, h: &CVec, pilot_power: f64, pilot_len: usize, noise_power: f64) -> f64 {
    let s: f64 = h.iter().map(|z| 1.0 / z.norm_sqr()).sum();
    b.norm_squared() + noise_power / (pilot_len as f64 * pilot_power) * s
}

/// MSE normalized by `‖g‖²`.
pub fn nmse(mse: f64, g: &CVec) -> Result<f64> {
    let e = g.norm_squared();
    if e == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(mse / e)
}

/// Misspecified estimate together with its analytic bias and error trace.
#[allow(clippy::too_many_arguments)]
pub fn mml_with_stats(
    y: &CVec,
    b: &ConfigSequence,
    h: &CVec,
    q: &CVec,
    p: &CVec,
    mode: ConfigMode,
    pilot_power: f64,
    noise_power: f64,
) -> Result<DetEstimate> {
    let g_hat = mml_estimate(y, b, h, pilot_power)?;
    let bias = bias(h, q, p, mode)?;
    let error_cov_trace = mse_trace(&bias, h, pilot_power, b.pilot_len(), noise_power);
    Ok(DetEstimate { g_hat, r_hat: None, bias, error_cov_trace })
}

/// Joint estimate; unbiased, so its trace is the noise term alone.
pub fn joint_with_stats(
    y: &CVec,
    bk: &ConfigSequence,
    bj: &ConfigSequence,
    h: &CVec,
    pilot_power: f64,
    noise_power: f64,
) -> Result<DetEstimate> {
    let (g_hat, r_hat) = joint_ml_estimate(y, bk, bj, h, pilot_power)?;
    let zero = CVec::from_element(h.len(), Complex64::new(0.0, 0.0));
    // the joint estimator can only match the serving-RIS noise term when
    // B_kᴴB_j = 0; otherwise the exact trace comes from the normal matrix
    let cross = bk.matrix().ad_mul(bj.matrix());
    let error_cov_trace = if linalg::max_abs(&cross) <= 1e-9 * bk.pilot_len() as f64 {
        mse_trace(&zero, h, pilot_power, bk.pilot_len(), noise_power)
    } else {
        joint_noise_trace(bk, bj, h, pilot_power, noise_power)?
    };
    Ok(DetEstimate { g_hat, r_hat: Some(r_hat), bias: zero, error_cov_trace })
}

/// Trace of the `g` block of `σ²/Pp (AᴴA)⁻¹` with `A = [B_k D_h, B_j]`.
fn joint_noise_trace(
    bk: &ConfigSequence,
    bj: &ConfigSequence,
    h: &CVec,
    pilot_power: f64,
    noise_power: f64,
) -> Result<f64> {
    let (l, n) = bk.matrix().shape();
    let mut a = CMat::zeros(l, 2 * n);
    a.view_mut((0, 0), (l, n)).copy_from(bk.matrix());
    a.view_mut((0, n), (l, n)).copy_from(bj.matrix());
    let inv = linalg::solve_hpd(&linalg::hermitian_part(&a.ad_mul(&a)), &CMat::identity(2 * n, 2 * n))?;
    let inv_h = linalg::recip(h)?;
    let t: f64 = (0..n).map(|i| inv[(i, i)].re * inv_h[i].norm_sqr()).sum();
    Ok(noise_power / pilot_power * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{received_pilots, received_pilots_noiseless, sample_deterministic_fixture};
    use crate::rng::{complex_normal_vec, seeded};
    use crate::sequences::{make_identical_pair, make_orthogonal_pair};
    use crate::units::SystemParams;
    use crate::Operator;
    use proptest::prelude::*;

    fn one() -> CVec {
        CVec::from_element(1, Complex64::new(1.0, 0.0))
    }

    #[test]
    fn scalar_mml() {
        let (b, _) = make_identical_pair(1, 1).unwrap();
        let g = CVec::from_element(1, Complex64::new(0.3, -0.2));
        let y = b.matrix() * &g;
        assert!((mml_estimate(&y, &b, &one(), 1.0).unwrap() - g).norm() < 1e-15);
    }

    #[test]
    fn orthogonal_noise_free_is_exact() {
        let params = SystemParams::default().with_size(4, 8);
        let ch = sample_deterministic_fixture(&params, 3);
        let (b1, b2) = make_orthogonal_pair(4, 8).unwrap();
        for k in Operator::BOTH {
            let y = received_pilots_noiseless(&ch, &b1, &b2, 0.1, k).unwrap();
            let bk = if k == Operator::First { &b1 } else { &b2 };
            let g_hat = mml_estimate(&y, bk, ch.h(k), 0.1).unwrap();
            assert!(linalg::max_abs_vec(&(g_hat - ch.g(k))) < 1e-12 * ch.g(k).norm());
        }
    }

    #[test]
    fn identical_noise_free_has_bias() {
        let params = SystemParams::default().with_size(2, 4);
        let ch = sample_deterministic_fixture(&params, 4);
        let (b1, b2) = make_identical_pair(2, 4).unwrap();
        let k = Operator::First;
        let y = received_pilots_noiseless(&ch, &b1, &b2, 1.0, k).unwrap();
        let g_hat = mml_estimate(&y, &b1, ch.h(k), 1.0).unwrap();
        // independent route: the bias written entry by entry
        let expect = CVec::from_fn(2, |i, _| ch.g(k)[i] + ch.q(k)[i] * ch.p(k)[i] / ch.h(k)[i]);
        assert!(linalg::max_abs_vec(&(&g_hat - &expect)) < 1e-10 * expect.norm());
        let b = bias(ch.h(k), ch.q(k), ch.p(k), ConfigMode::Identical).unwrap();
        assert!(linalg::max_abs_vec(&(g_hat - ch.g(k) - b)) < 1e-10 * expect.norm());
    }

    #[test]
    fn zero_h_is_rejected() {
        let (b, _) = make_identical_pair(1, 1).unwrap();
        let h = CVec::zeros(1);
        assert!(matches!(mml_estimate(&one(), &b, &h, 1.0), Err(Error::SingularDiagonal { index: 0 })));
    }

    #[test]
    fn joint_matches_mml_for_orthogonal() {
        for n in [1usize, 3, 8, 16] {
            let l = 2 * n + 1;
            let params = SystemParams::default().with_size(n, l);
            let ch = sample_deterministic_fixture(&params, n as u64);
            let (b1, b2) = make_orthogonal_pair(n, l).unwrap();
            let mut rng = seeded(11);
            let y = received_pilots(&ch, &b1, &b2, 1e-3, 1e-9, Operator::First, &mut rng).unwrap();
            let g1 = mml_estimate(&y, &b1, ch.h(Operator::First), 1e-3).unwrap();
            let (g2, _) = joint_ml_estimate(&y, &b1, &b2, ch.h(Operator::First), 1e-3).unwrap();
            assert!(linalg::max_abs_vec(&(g1 - g2)) <= 1e-10, "N = {n}");
        }
    }

    #[test]
    fn joint_noise_free_recovers_both() {
        let params = SystemParams::default().with_size(2, 4);
        let ch = sample_deterministic_fixture(&params, 8);
        let (b1, b2) = make_orthogonal_pair(2, 4).unwrap();
        let k = Operator::Second;
        let y = received_pilots_noiseless(&ch, &b1, &b2, 1.0, k).unwrap();
        let (g, r) = joint_ml_estimate(&y, &b2, &b1, ch.h(k), 1.0).unwrap();
        assert!(linalg::max_abs_vec(&(g - ch.g(k))) < 1e-10 * ch.g(k).norm());
        assert!(linalg::max_abs_vec(&(r - ch.r(k))) < 1e-10 * ch.r(k).norm());
    }

    #[test]
    fn joint_rejects_identical_sequences() {
        let (b1, b2) = make_identical_pair(2, 4).unwrap();
        let h = CVec::from_element(2, Complex64::new(1.0, 0.0));
        let y = CVec::from_element(4, Complex64::new(1.0, 0.0));
        assert!(matches!(joint_ml_estimate(&y, &b1, &b2, &h, 1.0), Err(Error::RankDeficient { .. })));
        let (b1, _) = make_identical_pair(2, 3).unwrap();
        let y = CVec::from_element(3, Complex64::new(1.0, 0.0));
        assert!(joint_ml_estimate(&y, &b1, &b1, &h, 1.0).is_err());
    }

    #[test]
    fn joint_is_unbiased() {
        let params = SystemParams::default().with_size(2, 4);
        let ch = sample_deterministic_fixture(&params, 12);
        let (b1, b2) = make_orthogonal_pair(2, 4).unwrap();
        let k = Operator::First;
        let (pp, s2) = (1e-3, 1e-9);
        let trials = 10_000;
        let mut rng = seeded(13);
        let mut sum = CVec::zeros(2);
        let mut sq = [0.0; 2];
        let mut draws = Vec::with_capacity(trials);
        for _ in 0..trials {
            let y = received_pilots(&ch, &b1, &b2, pp, s2, k, &mut rng).unwrap();
            let (g, _) = joint_ml_estimate(&y, &b1, &b2, ch.h(k), pp).unwrap();
            sum += &g;
            draws.push(g);
        }
        let mean = sum / Complex64::new(trials as f64, 0.0);
        for g in &draws {
            for i in 0..2 {
                sq[i] += (g[i] - mean[i]).norm_sqr();
            }
        }
        for i in 0..2 {
            let se = (sq[i] / (trials - 1) as f64 / trials as f64).sqrt();
            assert!((mean[i] - ch.g(k)[i]).norm() < 3.0 * se, "entry {i}");
        }
    }

    #[test]
    fn bias_examples() {
        let mut rng = seeded(1);
        let h = complex_normal_vec(&mut rng, 3, 1.0);
        let p = complex_normal_vec(&mut rng, 3, 1.0);
        assert_eq!(bias(&h, &h, &p, ConfigMode::Orthogonal).unwrap(), CVec::zeros(3));
        assert!(linalg::max_abs_vec(&(bias(&h, &h, &p, ConfigMode::Identical).unwrap() - &p)) < 1e-15);
    }

    #[test]
    fn bias_matches_monte_carlo_mean() {
        let params = SystemParams::default().with_size(3, 3);
        let ch = sample_deterministic_fixture(&params, 21);
        let (b1, b2) = make_identical_pair(3, 3).unwrap();
        let k = Operator::First;
        let (pp, s2) = (1e-3, 1e-9);
        let trials = 100_000;
        let mut rng = seeded(22);
        let mut sum = CVec::zeros(3);
        let mut sum2 = [0.0; 3];
        for _ in 0..trials {
            let y = received_pilots(&ch, &b1, &b2, pp, s2, k, &mut rng).unwrap();
            let e = mml_estimate(&y, &b1, ch.h(k), pp).unwrap() - ch.g(k);
            for i in 0..3 {
                sum2[i] += e[i].norm_sqr();
            }
            sum += e;
        }
        let mean = sum / Complex64::new(trials as f64, 0.0);
        let b = bias(ch.h(k), ch.q(k), ch.p(k), ConfigMode::Identical).unwrap();
        for i in 0..3 {
            let var = sum2[i] / trials as f64 - mean[i].norm_sqr();
            let se = (var / trials as f64).sqrt();
            assert!((mean[i] - b[i]).norm() < 3.0 * se, "entry {i}");
        }
    }

    #[test]
    fn mml_error_covariance_orthogonal() {
        let n = 3;
        let params = SystemParams::default().with_size(n, 6);
        let ch = sample_deterministic_fixture(&params, 31);
        let (b1, b2) = make_orthogonal_pair(n, 6).unwrap();
        let k = Operator::Second;
        let (pp, s2) = (1e-2, 1e-9);
        let trials = 10_000;
        let mut rng = seeded(32);
        let errs: Vec<CVec> = (0..trials)
            .map(|_| {
                let y = received_pilots(&ch, &b1, &b2, pp, s2, k, &mut rng).unwrap();
                mml_estimate(&y, &b2, ch.h(k), pp).unwrap() - ch.g(k)
            })
            .collect();
        let outer: Vec<CMat> = errs.iter().map(|e| e * e.adjoint()).collect();
        let mut mean = CMat::zeros(n, n);
        for o in &outer {
            mean += o;
        }
        mean /= Complex64::new(trials as f64, 0.0);
        let theory = CMat::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(s2 / (6.0 * pp) / ch.h(k)[i].norm_sqr(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        for i in 0..n {
            for j in 0..n {
                let v: f64 = outer.iter().map(|o| (o[(i, j)] - mean[(i, j)]).norm_sqr()).sum::<f64>() / (trials - 1) as f64;
                let se = (v / trials as f64).sqrt();
                assert!((mean[(i, j)] - theory[(i, j)]).norm() < 3.0 * se, "({i},{j})");
            }
        }
    }

    #[test]
    fn mse_trace_examples() {
        let h = CVec::from_element(4, Complex64::from_polar(1.0, 0.3));
        let v = mse_trace(&CVec::zeros(4), &h, 2.0, 8, 0.5);
        assert!((v - 4.0 * 0.5 / 16.0).abs() < 1e-15);
        assert!(mse_trace(&CVec::zeros(4), &h, 1e300, 8, 0.5) < 1e-299);
    }

    #[test]
    fn identical_floor_on_fixture() {
        let params = SystemParams::default();
        let ch = sample_deterministic_fixture(&params, params.seed);
        let k = Operator::First;
        let b = bias(ch.h(k), ch.q(k), ch.p(k), ConfigMode::Identical).unwrap();
        let r = ch.r(k);
        let floor: f64 = (0..params.n_elements).map(|i| r[i].norm_sqr() / ch.h(k)[i].norm_sqr()).sum();
        let at_inf = mse_trace(&b, ch.h(k), 1e30, params.pilot_len, params.noise_power());
        assert!((at_inf - floor).abs() < 1e-9 * floor);
        let low = crate::units::dbm_to_linear(-30.0);
        let v = mse_trace(&b, ch.h(k), low, params.pilot_len, params.noise_power());
        assert!(nmse(v, ch.g(k)).unwrap() > 1.0);
    }

    #[test]
    fn nmse_examples() {
        let g = CVec::from_element(2, Complex64::new(1.0, 1.0));
        assert!((nmse(4.0, &g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmse(0.0, &g).unwrap(), 0.0);
        assert!(matches!(nmse(1.0, &CVec::zeros(2)), Err(Error::ZeroNorm)));
    }

    #[test]
    fn joint_stats_trace() {
        let (b1, b2) = make_orthogonal_pair(2, 4).unwrap();
        let h = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]);
        let y = CVec::zeros(4);
        let est = joint_with_stats(&y, &b1, &b2, &h, 1.0, 1.0).unwrap();
        assert!((est.error_cov_trace - (1.0 + 0.25) / 4.0).abs() < 1e-15);
        assert!((joint_noise_trace(&b1, &b2, &h, 1.0, 1.0).unwrap() - est.error_cov_trace).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mse_trace_monotone(
            seed in 0u64..1000,
            pp in -40.0f64..40.0,
            dp in 0.1f64..20.0,
            l in 4usize..64,
            dl in 1usize..64,
        ) {
            let mut rng = seeded(seed);
            let h = complex_normal_vec(&mut rng, 4, 1.0);
            let b = complex_normal_vec(&mut rng, 4, 0.1);
            let p1 = crate::units::dbm_to_linear(pp);
            let p2 = crate::units::dbm_to_linear(pp + dp);
            let base = mse_trace(&b, &h, p1, l, 1.0);
            prop_assert!(mse_trace(&b, &h, p2, l, 1.0) < base);
            prop_assert!(mse_trace(&b, &h, p1, l + dl, 1.0) < base);
            prop_assert!(base >= b.norm_squared());
            prop_assert_eq!(mse_trace(&b, &h, f64::INFINITY, l, 1.0), b.norm_squared());
        }

        #[test]
        fn identical_floor_independent_of_l(seed in 0u64..1000, l1 in 4usize..40, l2 in 4usize..40) {
            let params = SystemParams::default().with_size(4, 8);
            let ch = sample_deterministic_fixture(&params, seed);
            let k = Operator::First;
            let b = bias(ch.h(k), ch.q(k), ch.p(k), ConfigMode::Identical).unwrap();
            let f1 = mse_trace(&b, ch.h(k), f64::INFINITY, l1, 1e-9);
            let f2 = mse_trace(&b, ch.h(k), f64::INFINITY, l2, 1e-9);
            prop_assert_eq!(f1, f2);
        }

        #[test]
        fn orthogonal_joint_equals_mml(seed in 0u64..500, n in 1usize..=16, extra in 0usize..4) {
            let l = 2 * n + extra;
            let params = SystemParams::default().with_size(n, l);
            let ch = sample_deterministic_fixture(&params, seed);
            let (b1, b2) = make_orthogonal_pair(n, l).unwrap();
            let mut rng = seeded(seed + 1);
            let y = received_pilots(&ch, &b1, &b2, 1.0, 1e-9, Operator::First, &mut rng).unwrap();
            let g1 = mml_estimate(&y, &b1, ch.h(Operator::First), 1.0).unwrap();
            let (g2, _) = joint_ml_estimate(&y, &b1, &b2, ch.h(Operator::First), 1.0).unwrap();
            prop_assert!(linalg::max_abs_vec(&(g1 - g2)) <= 1e-10);
        }
    }
}
