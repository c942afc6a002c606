use rayon::prelude::*;

use super::{Experiment, ResultRow, Scheme, SweepSpec};
use crate::bayesian::{high_snr_contamination, normalized_trace, MmseEstimator};
use crate::capacity::{capacity_curve_mc, CapacityRun};
use crate::channels::{received_pilots, sample_deterministic_fixture, RayleighScenario};
use crate::data_link::{data_mse, data_mse_floor, data_mse_mc, finite_pilot_data_mse, high_snr_link, mean_and_stderr};
use crate::deterministic::{bias, mml_estimate, mse_trace, nmse};
use crate::error::{Error, Result};

use crate::rng::{label_id, trial_rng, SimRng};
use crate::sequences::SequencePair;
use crate::units::{dbm_to_linear, SystemParams};
use crate::{ConfigMode, Operator};

const USER: Operator = Operator::First;

struct RowBuilder<'a> {
    spec: &'a SweepSpec,
    experiment: &'static str,
}

impl RowBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(&self, mode: &str, geometry: &str, power: f64, metric: &str, value: f64, stderr: f64, trials: usize) -> ResultRow {
        ResultRow {
            experiment: self.experiment.to_string(),
            mode: mode.to_string(),
            geometry: geometry.to_string(),
            power_dbm: power,
            metric: metric.to_string(),
            value,
            stderr,
            trials: trials as u64,
            seed: self.spec.master_seed,
        }
    }
}

fn config_mode(s: Scheme) -> Option<ConfigMode> {
    match s {
        Scheme::Identical => Some(ConfigMode::Identical),
        Scheme::Orthogonal => Some(ConfigMode::Orthogonal),
        Scheme::PerfectCsi => None,
    }
}

/// Runs `trials` independent evaluations in parallel and reduces them in
/// trial order, so the result does not depend on the thread count.
pub(crate) fn mc_mean<F>(trials: usize, master_seed: u64, stream: &str, f: F) -> Result<(f64, f64)>
where
    F: Fn(&mut SimRng) -> Result<f64> + Sync,
{
    let id = label_id(stream);
    let values: Vec<Result<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| f(&mut trial_rng(master_seed, id, t)))
        .collect();
    let (mut sum, mut sum2) = (0.0, 0.0);
    for v in values {
        let v = v?;
        sum += v;
        sum2 += v * v;
    }
    Ok(mean_and_stderr(sum, sum2, trials))
}

/// Pilot length of the Monte-Carlo rows: `2N` for shared sequences and
/// `4N` for orthogonal ones.
pub(crate) fn mc_pilot_len(mode: ConfigMode, n: usize) -> usize {
    2 * mode.min_pilot_len(n)
}

/// NMSE of the misspecified estimator at pilot power `pp_dbm`, closed form.
pub(crate) fn det_closed_form(params: &SystemParams, mode: ConfigMode, pp_dbm: f64) -> Result<(f64, f64)> {
    let ch = sample_deterministic_fixture(params, params.seed);
    let k = USER;
    let b = bias(ch.h(k), ch.q(k), ch.p(k), mode)?;
    let v = mse_trace(&b, ch.h(k), dbm_to_linear(pp_dbm), params.pilot_len, params.noise_power());
    Ok((nmse(v, ch.g(k))?, nmse(b.norm_squared(), ch.g(k))?))
}

/// Monte-Carlo NMSE of the misspecified estimator on the fixture of `params`.
pub(crate) fn det_monte_carlo(
    params: &SystemParams,
    mode: ConfigMode,
    pp_dbm: f64,
    trials: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let ch = sample_deterministic_fixture(params, params.seed);
    let pair = SequencePair::new(mode, params.n_elements, params.pilot_len)?;
    let (bk, _) = pair.for_operator(USER);
    let pp = dbm_to_linear(pp_dbm);
    let s2 = params.noise_power();
    let g_norm = ch.g(USER).norm_squared();
    let stream = format!("chanest-det/{}/{}/{}", mode, params.n_elements, pp_dbm);
    mc_mean(trials, master_seed, &stream, |rng| {
        let y = received_pilots(&ch, &pair.b1, &pair.b2, pp, s2, USER, rng)?;
        let g_hat = mml_estimate(&y, bk, ch.h(USER), pp)?;
        Ok((g_hat - ch.g(USER)).norm_squared() / g_norm)
    })
}

pub fn run_chanest_det(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    let rb = RowBuilder { spec, experiment: Experiment::ChanEstDet.label() };
    let params = &spec.params;
    let geo = params.geometry.label();
    let mc_params_for = |mode: ConfigMode| {
        let n = spec.mc_elements;
        SystemParams { config_mode: mode, ..params.with_size(n, mc_pilot_len(mode, n)) }
    };
    let mut rows = Vec::new();
    for &scheme in &spec.modes {
        let Some(mode) = config_mode(scheme) else { continue };
        let p = SystemParams { config_mode: mode, ..params.clone() };
        p.validate()?;
        let mc_p = mc_params_for(mode);
        mc_p.validate()?;
        for &pp in &spec.power_grid_dbm {
            let (value, floor) = det_closed_form(&p, mode, pp)?;
            rows.push(rb.row(mode.label(), &geo, pp, "nmse", value, 0.0, 0));
            if mode == ConfigMode::Identical {
                rows.push(rb.row(mode.label(), &geo, pp, "nmse_floor", floor, 0.0, 0));
            }
            if spec.trials > 0 {
                let mc_geo = mc_p.geometry.label();
                let (cf, _) = det_closed_form(&mc_p, mode, pp)?;
                let (mean, se) = det_monte_carlo(&mc_p, mode, pp, spec.trials, spec.master_seed)?;
                rows.push(rb.row(mode.label(), &mc_geo, pp, "nmse", cf, 0.0, 0));
                rows.push(rb.row(mode.label(), &mc_geo, pp, "nmse_mc", mean, se, spec.trials));
            }
        }
    }
    Ok(rows)
}

pub fn run_data_mse(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    let rb = RowBuilder { spec, experiment: Experiment::DataMse.label() };
    let params = &spec.params;
    params.validate()?;
    let ch = sample_deterministic_fixture(params, params.seed);
    let geo = params.geometry.label();
    let s2 = params.noise_power();
    let mut rows = Vec::new();
    for &scheme in &spec.modes {
        let floor = data_mse_floor(&high_snr_link(&ch, scheme, 1.0, USER)?)?;
        let points: Vec<Result<Vec<ResultRow>>> = spec
            .power_grid_dbm
            .par_iter()
            .map(|&pd_dbm| {
                let pd = dbm_to_linear(pd_dbm);
                let link = high_snr_link(&ch, scheme, pd, USER)?;
                let mut out = vec![
                    rb.row(scheme.label(), &geo, pd_dbm, "data_mse", data_mse(&link, s2), 0.0, 0),
                    rb.row(scheme.label(), &geo, pd_dbm, "data_mse_floor", floor, 0.0, 0),
                ];
                if spec.trials > 0 {
                    let mut rng = trial_rng(spec.master_seed, label_id(&format!("data-mse/{}/{pd_dbm}", scheme.label())), 0);
                    let (mean, se) = data_mse_mc(&link, s2, spec.trials, &mut rng);
                    out.push(rb.row(scheme.label(), &geo, pd_dbm, "data_mse_mc", mean, se, spec.trials));
                }
                Ok(out)
            })
            .collect();
        for p in points {
            rows.extend(p?);
        }
        if spec.finite_pilot_trials > 0 {
            let Some(mode) = config_mode(scheme) else { continue };
            let pair = SequencePair::new(mode, params.n_elements, params.pilot_len)?;
            let pp = params.pilot_power();
            for &pd_dbm in &spec.power_grid_dbm {
                let pd = dbm_to_linear(pd_dbm);
                let stream = format!("data-mse-finite/{}/{pd_dbm}", mode.label());
                let (mean, se) = mc_mean(spec.finite_pilot_trials, spec.master_seed, &stream, |rng| {
                    finite_pilot_data_mse(&ch, &pair, pp, pd, s2, USER, rng)
                })?;
                rows.push(rb.row(
                    scheme.label(),
                    &geo,
                    pd_dbm,
                    "data_mse_finite_pilot",
                    mean,
                    se,
                    spec.finite_pilot_trials,
                ));
            }
        }
    }
    Ok(rows)
}

pub fn run_chanest_rayleigh(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    let components = spec.experiment == Experiment::ChanEstRayleighComponents;
    let rb = RowBuilder { spec, experiment: spec.experiment.label() };
    let mut rows = Vec::new();
    for geometry in &spec.geometries {
        let params = SystemParams {
            n_elements: geometry.len(),
            geometry: *geometry,
            ..spec.params.clone()
        };
        let geo = geometry.label();
        let scenario = RayleighScenario::from_params(&SystemParams { config_mode: ConfigMode::Identical, ..params.clone() }, params.seed)?;
        let sigma_g = &scenario.priors[USER.index()].sigma_g;
        let sigma_r = scenario.sigma_r(USER);
        let h = &scenario.h[USER.index()];
        for &scheme in &spec.modes {
            let Some(mode) = config_mode(scheme) else { continue };
            SystemParams { config_mode: mode, ..params.clone() }.validate()?;
            let pair = SequencePair::new(mode, params.n_elements, params.pilot_len)?;
            let (bk, bj) = pair.for_operator(USER);
            let asym = normalized_trace(&high_snr_contamination(bk, bj, h, &sigma_r)?, sigma_g)?;
            for &pp_dbm in &spec.power_grid_dbm {
                let pp = dbm_to_linear(pp_dbm);
                let est = MmseEstimator::new(bk, h, sigma_g, pp, params.noise_power())?;
                let e = est.error_covariance(bj, &sigma_r)?;
                let un = normalized_trace(&e.uncontaminated, sigma_g)?;
                let co = normalized_trace(&e.contamination, sigma_g)?;
                rows.push(rb.row(mode.label(), &geo, pp_dbm, "nmse", un + co, 0.0, 0));
                rows.push(rb.row(mode.label(), &geo, pp_dbm, "nmse_asymptote", asym, 0.0, 0));
                if components {
                    rows.push(rb.row(mode.label(), &geo, pp_dbm, "nmse_uncontaminated", un, 0.0, 0));
                    rows.push(rb.row(mode.label(), &geo, pp_dbm, "nmse_contamination", co, 0.0, 0));
                }
                if spec.trials > 0 {
                    let tr = sigma_g.trace();
                    let stream = format!("chanest-rayleigh/{geo}/{}/{pp_dbm}", mode.label());
                    let (mean, se) = mc_mean(spec.trials, spec.master_seed, &stream, |rng| {
                        let ch = scenario.draw(rng);
                        let y = received_pilots(&ch, &pair.b1, &pair.b2, pp, params.noise_power(), USER, rng)?;
                        Ok((est.estimate(&y)? - ch.g(USER)).norm_squared() / tr)
                    })?;
                    rows.push(rb.row(mode.label(), &geo, pp_dbm, "nmse_mc", mean, se, spec.trials));
                }
            }
        }
    }
    Ok(rows)
}

pub fn run_capacity(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    if spec.trials == 0 {
        return Err(Error::Config("capacity needs at least one trial".into()));
    }
    let rb = RowBuilder { spec, experiment: Experiment::Capacity.label() };
    let mut rows = Vec::new();
    for geometry in &spec.geometries {
        let params = SystemParams {
            n_elements: geometry.len(),
            geometry: *geometry,
            config_mode: ConfigMode::Identical,
            ..spec.params.clone()
        };
        let geo = geometry.label();
        let scenario = RayleighScenario::from_params(&params, params.seed)?;
        let mut curves = Vec::new();
        for &scheme in &spec.modes {
            let Some(mode) = config_mode(scheme) else { continue };
            let run = CapacityRun {
                mode,
                data_power_dbm: spec.power_grid_dbm.clone(),
                noise_power: params.noise_power(),
                trials: spec.trials,
                master_seed: spec.master_seed,
                // shared stream: both modes see the same channel draws
                stream: label_id(&format!("capacity/{geo}")),
                cross: spec.cross,
                user: USER,
            };
            let curve = capacity_curve_mc(&scenario, &run)?;
            for (&pd, &(mean, se)) in spec.power_grid_dbm.iter().zip(&curve) {
                rows.push(rb.row(mode.label(), &geo, pd, "capacity_lb", mean, se, spec.trials));
            }
            curves.push((mode, curve));
        }
        let find = |m: ConfigMode| curves.iter().find(|(x, _)| *x == m).map(|(_, c)| c);
        if let (Some(id), Some(or)) = (find(ConfigMode::Identical), find(ConfigMode::Orthogonal)) {
            for (i, &pd) in spec.power_grid_dbm.iter().enumerate() {
                let ((a, sa), (b, sb)) = (or[i], id[i]);
                if b > 0.0 {
                    let ratio = a / b;
                    let se = ratio * ((sa / a.max(f64::MIN_POSITIVE)).powi(2) + (sb / b).powi(2)).sqrt();
                    rows.push(rb.row("ratio", &geo, pd, "capacity_ratio", ratio, se, spec.trials));
                }
            }
        }
    }
    Ok(rows)
}
