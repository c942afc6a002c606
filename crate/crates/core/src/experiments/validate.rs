use std::fmt;

use rand::Rng;

use super::sweep::{det_closed_form, det_monte_carlo, mc_pilot_len};
use super::{csv_string, grid, Experiment, Scheme, SweepSpec};
use crate::bayesian::{error_covariance, high_snr_contamination, normalized_trace, BayesCovariances, MmseEstimator};
use crate::capacity::{
    capacity_curve_mc, conditional_moments_oracle, conditional_moments_paper, noise_side_info_correlation,
    CapacityRun, CrossTerm,
};
use crate::channels::{
    pilot_slot, received_pilots, received_pilots_noiseless, sample_deterministic_fixture, sigma_r, ChannelPriors,
    RayleighScenario,
};
use crate::data_link::{data_mse, data_mse_floor, data_mse_mc, high_snr_link};
use crate::deterministic::{bias, joint_ml_estimate, mml_estimate, mse_trace};
use crate::error::Result;
use crate::geometry::{isotropic_covariance, RisGeometry, SpatialCovariance};
use crate::linalg::{self, CMat, CVec};
use crate::rng::{complex_normal, complex_normal_vec, label_id, seeded, trial_rng};
use crate::sequences::{phase_align, RisPhaseConfig, SequencePair};
use crate::units::{dbm_to_linear, linear_to_dbm, SystemParams};
use crate::{Complex64, ConfigMode, Operator};

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CHECK {} {} {}", self.name, if self.passed { "PASS" } else { "FAIL" }, self.detail)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

fn guarded(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((ok, detail)) => check(name, ok, detail),
        Err(e) => check(name, false, format!("error: {e}")),
    }
}

const K: Operator = Operator::First;

/// Runs every check. The suite is green when all entries pass.
pub fn run_validation(master_seed: u64) -> Vec<Check> {
    vec![
        guarded("units.conversions", || {
            let ok = (dbm_to_linear(-90.0) - 1e-9).abs() < 1e-24 && (linear_to_dbm(1e-9) + 90.0).abs() < 1e-12;
            Ok((ok, "-90 dBm <-> 1e-9 mW".into()))
        }),
        guarded("geometry.isotropic_psd", || {
            let mut worst = f64::INFINITY;
            for g in [RisGeometry::ura(8, 8, 0.5), RisGeometry::ura(8, 8, 0.25), RisGeometry::ula(64, 0.5)] {
                let c = isotropic_covariance(&g, 1.0)?;
                worst = worst.min(linalg::min_eigenvalue(c.matrix()));
            }
            Ok((worst > -1e-10, format!("min_eigenvalue={worst:.3e}")))
        }),
        guarded("sequences.invariants", sequence_invariants),
        guarded("sequences.phase_align", || phase_alignment(master_seed)),
        guarded("channels.per_slot_oracle", || per_slot(master_seed)),
        guarded("deterministic.estimator_coincidence", || coincidence(master_seed)),
        guarded("deterministic.mse_trace_oracle.identical", || mse_oracle(ConfigMode::Identical, master_seed)),
        guarded("deterministic.mse_trace_oracle.orthogonal", || mse_oracle(ConfigMode::Orthogonal, master_seed)),
        guarded("deterministic.contamination_floor", contamination_floor),
        guarded("deterministic.monotonicity", monotonicity),
        guarded("data_link.monte_carlo", || data_link_mc(master_seed)),
        guarded("data_link.floor_limit", data_link_floor_limit),
        guarded("data_link.ordering", data_link_ordering),
        guarded("bayesian.route_agreement", || bayes_routes(master_seed)),
        guarded("bayesian.error_covariance_mc", || bayes_mc(master_seed)),
        guarded("bayesian.contamination_power_invariance", || pp_invariance(master_seed)),
        report("bayesian.contamination_power_variation_realistic_scale", realistic_pp_variation),
        guarded("bayesian.high_snr_asymptote", || high_snr(master_seed)),
        guarded("bayesian.psd_and_monotone", || bayes_psd(master_seed)),
        guarded("rayleigh.geometry_and_asymptote", rayleigh_curves),
        guarded("capacity.moment_oracle", || moments(master_seed)),
        report("capacity.cross_term_discrepancy", || cross_discrepancy(master_seed)),
        guarded("capacity.noise_independence", || {
            let sc = RayleighScenario::from_params(&SystemParams::rayleigh_default(), master_seed)?;
            let trials = 4000;
            let rho = noise_side_info_correlation(&sc, ConfigMode::Identical, 1e-9, trials, master_seed)?;
            let lim = 4.0 / (trials as f64).sqrt();
            Ok((rho.abs() < lim, format!("corr={rho:.4} limit={lim:.4}")))
        }),
        guarded("capacity.curves", || capacity_curves(master_seed)),
        guarded("reproducibility.thread_count", || reproducibility(master_seed)),
    ]
}

/// A check whose value is reported but never fails unless it errors.
fn report(name: &str, f: impl FnOnce() -> Result<String>) -> Check {
    match f() {
        Ok(detail) => check(name, true, format!("{detail} (reported, not gated)")),
        Err(e) => check(name, false, format!("error: {e}")),
    }
}

fn sequence_invariants() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (n, l) in [(256, 513), (64, 128), (16, 32)] {
        for mode in ConfigMode::BOTH {
            // construction validates unit modulus and BᴴB = L·I
            let pair = SequencePair::new(mode, n, l)?;
            if mode == ConfigMode::Orthogonal {
                let cross = pair.b1.matrix().ad_mul(pair.b2.matrix());
                worst = worst.max(cross.norm() / l as f64);
            }
        }
    }
    Ok((worst <= 1e-9, format!("max ||B1^H B2||_F/L={worst:.2e}")))
}

fn phase_alignment(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded(seed ^ 0xa1);
    let h = complex_normal_vec(&mut rng, 4, 1.0);
    let g = complex_normal_vec(&mut rng, 4, 1.0);
    let c = phase_align(&h, &g).cascade(&h, &g);
    let expect: f64 = h.iter().zip(g.iter()).map(|(a, b)| a.norm() * b.norm()).sum();
    let mut ok = (c - Complex64::new(expect, 0.0)).norm() <= 1e-12 * expect;
    for _ in 0..100 {
        let cfg = RisPhaseConfig::new((0..4).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect());
        ok &= cfg.cascade(&h, &g).norm() <= c.re + 1e-12;
    }
    Ok((ok, format!("cascade={:.6}", c.re)))
}

fn per_slot(seed: u64) -> Result<(bool, String)> {
    let params = SystemParams::default().with_size(8, 16);
    let ch = sample_deterministic_fixture(&params, seed);
    let mut worst: f64 = 0.0;
    for mode in ConfigMode::BOTH {
        let pair = SequencePair::new(mode, 8, 16)?;
        for k in Operator::BOTH {
            let y = received_pilots_noiseless(&ch, &pair.b1, &pair.b2, 1.0, k)?;
            let (bk, bj) = pair.for_operator(k);
            for t in 0..16 {
                let s = pilot_slot(&ch, bk, bj, 1.0, k, t);
                worst = worst.max((y[t] - s).norm() / y.norm());
            }
        }
    }
    Ok((worst < 1e-12, format!("max_rel={worst:.2e}")))
}

fn coincidence(seed: u64) -> Result<(bool, String)> {
    let (n, l) = (8, 16);
    let pair = SequencePair::new(ConfigMode::Orthogonal, n, l)?;
    let params = SystemParams::default().with_size(n, l);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let ch = sample_deterministic_fixture(&params, seed.wrapping_add(i));
        let mut rng = trial_rng(seed, label_id("validate/coincidence"), i);
        let y = received_pilots(&ch, &pair.b1, &pair.b2, params.pilot_power(), params.noise_power(), K, &mut rng)?;
        let a = mml_estimate(&y, &pair.b1, ch.h(K), params.pilot_power())?;
        let (b, _) = joint_ml_estimate(&y, &pair.b1, &pair.b2, ch.h(K), params.pilot_power())?;
        worst = worst.max(linalg::max_abs_vec(&(a - b)));
    }
    Ok((worst <= 1e-10, format!("max_abs={worst:.2e}")))
}

fn mse_oracle(mode: ConfigMode, seed: u64) -> Result<(bool, String)> {
    let n = 16;
    let params = SystemParams { config_mode: mode, ..SystemParams::default().with_size(n, mc_pilot_len(mode, n)) };
    let (cf, _) = det_closed_form(&params, mode, 0.0)?;
    let (mean, se) = det_monte_carlo(&params, mode, 0.0, 10_000, seed)?;
    let z = (mean - cf) / se;
    Ok((z.abs() < 3.0, format!("mc={mean:.6e} closed={cf:.6e} z={z:.2}")))
}

fn contamination_floor() -> Result<(bool, String)> {
    let p = SystemParams::default();
    let (v, floor) = det_closed_form(&SystemParams { config_mode: ConfigMode::Identical, ..p.clone() }, ConfigMode::Identical, 60.0)?;
    let rel = (v - floor).abs() / floor;
    let po = SystemParams { config_mode: ConfigMode::Orthogonal, ..p };
    let g = grid(-30.0, 10.0, 40.0)?;
    let mut worst: f64 = 0.0;
    for w in g.windows(2) {
        let (a, _) = det_closed_form(&po, ConfigMode::Orthogonal, w[0])?;
        let (b, _) = det_closed_form(&po, ConfigMode::Orthogonal, w[1])?;
        worst = worst.max((a / b / 10.0 - 1.0).abs());
    }
    Ok((rel < 0.01 && worst < 0.02, format!("identical_gap={rel:.2e} orthogonal_step_dev={worst:.2e}")))
}

fn monotonicity() -> Result<(bool, String)> {
    let p = SystemParams::default();
    let ch = sample_deterministic_fixture(&p, p.seed);
    let b = bias(ch.h(K), ch.q(K), ch.p(K), ConfigMode::Identical)?;
    let mut ok = true;
    let g = grid(-30.0, 5.0, 60.0)?;
    for w in g.windows(2) {
        let a = mse_trace(&b, ch.h(K), dbm_to_linear(w[0]), p.pilot_len, p.noise_power());
        let c = mse_trace(&b, ch.h(K), dbm_to_linear(w[1]), p.pilot_len, p.noise_power());
        ok &= c < a;
    }
    for l in [256, 513, 1024] {
        let a = mse_trace(&b, ch.h(K), 1.0, l, p.noise_power());
        let c = mse_trace(&b, ch.h(K), 1.0, l + 1, p.noise_power());
        ok &= c < a;
    }
    let f1 = mse_trace(&b, ch.h(K), f64::INFINITY, 256, p.noise_power());
    let f2 = mse_trace(&b, ch.h(K), f64::INFINITY, 1024, p.noise_power());
    ok &= f1 == f2 && f1 == b.norm_squared();
    Ok((ok, format!("floor={f1:.4e}")))
}

fn data_link_mc(seed: u64) -> Result<(bool, String)> {
    let p = SystemParams::default();
    let ch = sample_deterministic_fixture(&p, p.seed);
    let mut worst: f64 = 0.0;
    for scheme in Scheme::ALL {
        let link = high_snr_link(&ch, scheme, dbm_to_linear(10.0), K)?;
        let mut rng = trial_rng(seed, label_id(&format!("validate/data/{}", scheme.label())), 0);
        let (mean, se) = data_mse_mc(&link, p.noise_power(), 200_000, &mut rng);
        worst = worst.max(((mean - data_mse(&link, p.noise_power())) / se).abs());
    }
    Ok((worst < 3.0, format!("max_z={worst:.2}")))
}

fn data_link_floor_limit() -> Result<(bool, String)> {
    let p = SystemParams::default();
    let ch = sample_deterministic_fixture(&p, p.seed);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for scheme in Scheme::ALL {
        let link = high_snr_link(&ch, scheme, 1.0, K)?;
        let floor = data_mse_floor(&link)?;
        let v = data_mse(&link, 1e-12 * link.m.norm_sqr());
        if floor > 0.0 {
            let rel = (v - floor).abs() / floor;
            worst = worst.max(rel);
            ok &= rel < 1e-3;
        } else {
            ok &= v < 1e-9;
        }
    }
    Ok((ok, format!("max_rel={worst:.2e}")))
}

/// First grid power at which the MSE is within 10% of its floor.
fn floor_onset(ch: &crate::channels::ChannelSet, scheme: Scheme, s2: f64, powers: &[f64]) -> Result<f64> {
    let floor = data_mse_floor(&high_snr_link(ch, scheme, 1.0, K)?)?;
    for &pd in powers {
        if data_mse(&high_snr_link(ch, scheme, dbm_to_linear(pd), K)?, s2) <= 1.1 * floor {
            return Ok(pd);
        }
    }
    Ok(f64::INFINITY)
}

fn data_link_ordering() -> Result<(bool, String)> {
    let p = SystemParams::default();
    let ch = sample_deterministic_fixture(&p, p.seed);
    let s2 = p.noise_power();
    let powers = grid(-30.0, 1.0, 80.0)?;
    let mut ok = true;
    for &pd in &powers {
        let v = |s| data_mse(&high_snr_link(&ch, s, dbm_to_linear(pd), K).unwrap(), s2);
        ok &= v(Scheme::Orthogonal) <= v(Scheme::Identical);
        ok &= v(Scheme::PerfectCsi) <= v(Scheme::Orthogonal);
    }
    let fi = data_mse_floor(&high_snr_link(&ch, Scheme::Identical, 1.0, K)?)?;
    let fo = data_mse_floor(&high_snr_link(&ch, Scheme::Orthogonal, 1.0, K)?)?;
    let oi = floor_onset(&ch, Scheme::Identical, s2, &powers)?;
    let oo = floor_onset(&ch, Scheme::Orthogonal, s2, &powers)?;
    ok &= fi > fo && oi < oo;
    Ok((ok, format!("floors identical={fi:.3e} orthogonal={fo:.3e} onset_dbm identical={oi} orthogonal={oo}")))
}

/// Unit-scale correlated scenario: `β = 1`, unit-modulus `h` and `q`.
struct Normalized {
    pair: SequencePair,
    h: CVec,
    sg: SpatialCovariance,
    sr: SpatialCovariance,
}

fn unit_phases(n: usize, rng: &mut crate::rng::SimRng) -> CVec {
    complex_normal_vec(rng, n, 1.0).map(|z| z / z.norm())
}

fn normalized(mode: ConfigMode, side: usize, l: usize, seed: u64) -> Result<Normalized> {
    let n = side * side;
    let mut rng = seeded(seed);
    let sg = isotropic_covariance(&RisGeometry::ura(side, side, 0.5), 1.0)?;
    let h = unit_phases(n, &mut rng);
    let q = unit_phases(n, &mut rng);
    let sr = sigma_r(&ChannelPriors { sigma_g: sg.clone(), sigma_p: sg.clone() }, &q);
    Ok(Normalized { pair: SequencePair::new(mode, n, l)?, h, sg, sr })
}

fn bayes_routes(seed: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for mode in ConfigMode::BOTH {
        let s = normalized(mode, 4, mc_pilot_len(mode, 16), seed)?;
        let (bk, bj) = s.pair.for_operator(K);
        let cov = BayesCovariances::new(bk, bj, &s.h, &s.sg, &s.sr, 1.0, 0.1)?;
        let e1 = error_covariance(&cov, &s.sg, bj, &s.sr, 1.0)?;
        let e2 = MmseEstimator::new(bk, &s.h, &s.sg, 1.0, 0.1)?.error_covariance(bj, &s.sr)?;
        worst = worst.max(linalg::rel_frobenius(&e1.total(), &e2.total()));
    }
    Ok((worst < 1e-9, format!("max_rel={worst:.2e}")))
}

/// Empirical error covariance over `trials` draws against the closed form,
/// entry by entry. Returns the largest `|Δ| / SE`.
pub(crate) fn covariance_z_score(
    params: &SystemParams,
    mode: ConfigMode,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let sc = RayleighScenario::from_params(params, params.seed)?;
    let n = params.n_elements;
    let pair = SequencePair::new(mode, n, params.pilot_len)?;
    let (bk, bj) = pair.for_operator(K);
    let sg = &sc.priors[K.index()].sigma_g;
    let est = MmseEstimator::new(bk, &sc.h[K.index()], sg, params.pilot_power(), params.noise_power())?;
    let theory = est.error_covariance(bj, &sc.sigma_r(K))?.total();
    let stream = label_id(&format!("validate/bayes/{mode}/{n}"));
    let errs: Vec<Result<CVec>> = {
        use rayon::prelude::*;
        (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(seed, stream, t);
                let ch = sc.draw(&mut rng);
                let y = received_pilots(&ch, &pair.b1, &pair.b2, params.pilot_power(), params.noise_power(), K, &mut rng)?;
                Ok(est.estimate(&y)? - ch.g(K))
            })
            .collect()
    };
    let errs: Vec<CVec> = errs.into_iter().collect::<Result<_>>()?;
    let tf = trials as f64;
    let mut mean = CMat::zeros(n, n);
    for e in &errs {
        mean += e * e.adjoint();
    }
    mean /= Complex64::new(tf, 0.0);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = errs.iter().map(|e| (e[i] * e[j].conj() - mean[(i, j)]).norm_sqr()).sum::<f64>() / (tf - 1.0);
            let se = (v / tf).sqrt();
            worst = worst.max((mean[(i, j)] - theory[(i, j)]).norm() / se);
        }
    }
    Ok(worst)
}

fn bayes_mc(seed: u64) -> Result<(bool, String)> {
    let params = SystemParams {
        config_mode: ConfigMode::Identical,
        ..SystemParams::rayleigh_default().with_size(16, 32)
    };
    let z = covariance_z_score(&params, ConfigMode::Identical, 10_000, seed)?;
    Ok((z < 3.0, format!("max_entry_z={z:.2}")))
}

fn pp_invariance(seed: u64) -> Result<(bool, String)> {
    let s = normalized(ConfigMode::Identical, 4, 32, seed)?;
    let (bk, bj) = s.pair.for_operator(K);
    let c = |pp: f64| -> Result<CMat> {
        Ok(MmseEstimator::new(bk, &s.h, &s.sg, pp, 1e-9)?.error_covariance(bj, &s.sr)?.contamination)
    };
    let base = c(1.0)?;
    let worst = linalg::rel_frobenius(&c(1e3)?, &base).max(linalg::rel_frobenius(&c(1e6)?, &base));
    Ok((worst < 1e-9, format!("max_rel={worst:.2e}")))
}

fn realistic_pp_variation() -> Result<String> {
    let params = SystemParams::rayleigh_default().with_size(16, 32);
    let sc = RayleighScenario::from_params(&params, params.seed)?;
    let pair = SequencePair::new(ConfigMode::Identical, 16, 32)?;
    let (bk, bj) = pair.for_operator(K);
    let sg = &sc.priors[0].sigma_g;
    let c = |pp: f64| -> Result<f64> {
        let e = MmseEstimator::new(bk, &sc.h[0], sg, pp, params.noise_power())?.error_covariance(bj, &sc.sigma_r(K))?;
        normalized_trace(&e.contamination, sg)
    };
    Ok(format!("normalized contamination at 1/1e3/1e6 mW: {:.4e} {:.4e} {:.4e}", c(1.0)?, c(1e3)?, c(1e6)?))
}

fn high_snr(seed: u64) -> Result<(bool, String)> {
    let n = 16;
    let id = normalized(ConfigMode::Identical, 4, 2 * n, seed)?;
    let (bk, bj) = id.pair.for_operator(K);
    let e = MmseEstimator::new(bk, &id.h, &id.sg, 1.0, 1e-12)?.error_covariance(bj, &id.sr)?;
    let lim = high_snr_contamination(bk, bj, &id.h, &id.sr)?;
    let rel = linalg::rel_frobenius(&e.total(), &lim);
    let or = normalized(ConfigMode::Orthogonal, 4, 2 * n, seed)?;
    let (ok_, oj) = or.pair.for_operator(K);
    let tr = MmseEstimator::new(ok_, &or.h, &or.sg, 1.0, 1e-12)?.error_covariance(oj, &or.sr)?.trace();
    let id4 = normalized(ConfigMode::Identical, 4, 4 * n, seed)?;
    let (b4k, b4j) = id4.pair.for_operator(K);
    let same = high_snr_contamination(b4k, b4j, &id4.h, &id4.sr)? == lim;
    Ok((rel < 1e-6 && tr <= 1e-12 && same, format!("identical_rel={rel:.2e} orthogonal_trace={tr:.2e} l_invariant={same}")))
}

fn bayes_psd(seed: u64) -> Result<(bool, String)> {
    let mut ok = true;
    let mut worst_eig = f64::INFINITY;
    for mode in ConfigMode::BOTH {
        let s = normalized(mode, 3, mc_pilot_len(mode, 9), seed)?;
        let (bk, bj) = s.pair.for_operator(K);
        let mut prev: Option<CMat> = None;
        for pp_db in grid(-20.0, 5.0, 40.0)? {
            let e = MmseEstimator::new(bk, &s.h, &s.sg, dbm_to_linear(pp_db), 1.0)?.error_covariance(bj, &s.sr)?;
            let tot = e.total();
            worst_eig = worst_eig.min(linalg::min_eigenvalue(&tot));
            ok &= linalg::trace_re(&tot) >= linalg::trace_re(&e.uncontaminated);
            if mode == ConfigMode::Orthogonal {
                if let Some(p) = &prev {
                    ok &= linalg::trace_re(&tot) < linalg::trace_re(p);
                    ok &= linalg::min_eigenvalue(&(p - &tot)) > -1e-10;
                }
            }
            prev = Some(tot);
        }
    }
    ok &= worst_eig > -1e-10;
    Ok((ok, format!("min_eigenvalue={worst_eig:.2e}")))
}

fn rayleigh_curves() -> Result<(bool, String)> {
    let mut spec = SweepSpec::new(Experiment::ChanEstRayleighComponents);
    spec.trials = 0;
    // the quarter-wavelength array needs very high SNR to reach the limit
    spec.power_grid_dbm = grid(-30.0, 5.0, 200.0)?;
    let rows = spec.run()?;
    let series = |mode: &str, geo: &str, metric: &str| -> Vec<f64> {
        rows.iter().filter(|r| r.mode == mode && r.geometry == geo && r.metric == metric).map(|r| r.value).collect()
    };
    let mut ok = true;
    let mut detail = String::new();
    for g in &spec.geometries {
        let geo = g.label();
        ok &= series("orthogonal", &geo, "nmse_contamination").iter().all(|&v| v.abs() < 1e-12);
        let tot = series("identical", &geo, "nmse");
        let asym = series("identical", &geo, "nmse_asymptote")[0];
        let imin = tot.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap_or(0);
        ok &= tot[imin..].windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
        let last = *tot.last().unwrap();
        ok &= (last - asym).abs() < 0.01 * asym;
        detail += &format!("{geo}: asym={asym:.3e} end={last:.3e}; ");
    }
    // stronger correlation, lower uncontaminated error
    let i0 = spec.power_grid_dbm.iter().position(|&p| p == 0.0).unwrap_or(0);
    let half = series("orthogonal", "ura:8x8:0.5", "nmse_uncontaminated")[i0];
    let quarter = series("orthogonal", "ura:8x8:0.25", "nmse_uncontaminated")[i0];
    ok &= quarter < half;
    detail += &format!("uncontaminated@0dBm lambda/4={quarter:.3e} lambda/2={half:.3e}");
    Ok((ok, detail))
}

fn random_pd(n: usize, rng: &mut crate::rng::SimRng) -> Result<SpatialCovariance> {
    let a = CMat::from_fn(n, n, |_, _| complex_normal(rng, 1.0));
    SpatialCovariance::new(&a * a.adjoint() + CMat::identity(n, n).scale(0.1))
}

fn moments(seed: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut consistency: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = trial_rng(seed, label_id("validate/moments"), i);
        let n = 8;
        let h = complex_normal_vec(&mut rng, n, 1.0);
        let (sg, sr) = (random_pd(n, &mut rng)?, random_pd(n, &mut rng)?);
        let g_hat = complex_normal_vec(&mut rng, n, 1.0);
        let p = conditional_moments_paper(&g_hat, &h, &sg, &sr, ConfigMode::Identical)?;
        let o = conditional_moments_oracle(&g_hat, &h, &sg, &sr, ConfigMode::Identical)?;
        let rv = |a: &CVec, b: &CVec| (a - b).norm() / b.norm();
        worst = worst
            .max(rv(&p.mean_g, &o.mean_g))
            .max(rv(&p.mean_r, &o.mean_r))
            .max(linalg::rel_frobenius(&p.var_g, &o.var_g))
            .max(linalg::rel_frobenius(&p.var_r, &o.var_r));
        let back = &p.mean_g + linalg::recip(&h)?.component_mul(&p.mean_r);
        consistency = consistency.max((back - &g_hat).norm() / g_hat.norm());
    }
    Ok((worst < 1e-9 && consistency < 1e-9, format!("max_rel={worst:.2e} consistency={consistency:.2e}")))
}

/// Largest relative gap between the printed and the exact `E[g rᴴ|ĝ]`.
pub fn cross_discrepancy(seed: u64) -> Result<String> {
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = trial_rng(seed, label_id("validate/cross"), i);
        let n = 8;
        let h = complex_normal_vec(&mut rng, n, 1.0);
        let (sg, sr) = (random_pd(n, &mut rng)?, random_pd(n, &mut rng)?);
        let g_hat = complex_normal_vec(&mut rng, n, 1.0);
        let p = conditional_moments_paper(&g_hat, &h, &sg, &sr, ConfigMode::Identical)?;
        let o = conditional_moments_oracle(&g_hat, &h, &sg, &sr, ConfigMode::Identical)?;
        worst = worst.max(linalg::rel_frobenius(&p.cross_gr, &o.cross_gr));
    }
    Ok(format!("max_rel={worst:.3e}"))
}

fn capacity_curves(seed: u64) -> Result<(bool, String)> {
    let params = SystemParams::rayleigh_default();
    let sc = RayleighScenario::from_params(&params, params.seed)?;
    let powers = grid(-10.0, 10.0, 60.0)?;
    let mut ok = true;
    let mut last = Vec::new();
    for mode in ConfigMode::BOTH {
        let run = CapacityRun {
            mode,
            data_power_dbm: powers.clone(),
            noise_power: params.noise_power(),
            trials: 500,
            master_seed: seed,
            stream: label_id("validate/capacity"),
            cross: CrossTerm::Oracle,
            user: K,
        };
        let c = capacity_curve_mc(&sc, &run)?;
        ok &= c.iter().all(|&(m, _)| m >= 0.0);
        ok &= c.windows(2).all(|w| w[1].0 >= w[0].0);
        last.push(c.last().unwrap().0);
    }
    Ok((ok, format!("at 60 dBm identical={:.3} orthogonal={:.3} ratio={:.3}", last[0], last[1], last[1] / last[0])))
}

fn reproducibility(seed: u64) -> Result<(bool, String)> {
    let mut ok = true;
    for exp in [Experiment::ChanEstDet, Experiment::DataMse, Experiment::ChanEstRayleigh, Experiment::Capacity] {
        let mut spec = SweepSpec::new(exp);
        spec.master_seed = seed;
        spec.trials = 64;
        spec.power_grid_dbm = vec![0.0, 20.0];
        spec.mc_elements = 4;
        if matches!(exp, Experiment::ChanEstRayleigh | Experiment::Capacity) {
            spec.params = spec.params.with_size(16, 32);
            spec.geometries = vec![RisGeometry::ura(4, 4, 0.5)];
        } else {
            spec.params = spec.params.with_size(16, 33);
        }
        spec.threads = Some(1);
        let a = csv_string(&spec.run()?)?;
        spec.threads = Some(4);
        let b = csv_string(&spec.run()?)?;
        ok &= a == b;
    }
    Ok((ok, "1 vs 4 threads".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_format() {
        let c = check("a.b", true, "x=1".into());
        assert_eq!(c.to_string(), "CHECK a.b PASS x=1");
        assert_eq!(check("a", false, String::new()).to_string(), "CHECK a FAIL ");
    }
}
