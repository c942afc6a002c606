//! Seeded parameter sweeps, CSV output and the validation suite.

mod sweep;
mod validate;

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::capacity::CrossTerm;
use crate::error::{Error, Result};
use crate::geometry::RisGeometry;
use crate::units::SystemParams;

pub use crate::data_link::CsiScheme as Scheme;
pub use sweep::{run_capacity, run_chanest_det, run_chanest_rayleigh, run_data_mse};
pub use validate::{run_validation, Check};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    ChanEstDet,
    DataMse,
    ChanEstRayleigh,
    ChanEstRayleighComponents,
    Capacity,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Experiment::ChanEstDet => "chanest-det",
            Experiment::DataMse => "data-mse",
            Experiment::ChanEstRayleigh => "chanest-rayleigh",
            Experiment::ChanEstRayleighComponents => "chanest-rayleigh-components",
            Experiment::Capacity => "capacity",
        }
    }

    /// Scenario defaults for this experiment.
    pub fn default_params(self) -> SystemParams {
        match self {
            Experiment::ChanEstDet | Experiment::DataMse => SystemParams::default(),
            _ => SystemParams::rayleigh_default(),
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Experiment::Capacity => grid(-10.0, 5.0, 60.0).unwrap(),
            _ => grid(-30.0, 5.0, 40.0).unwrap(),
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Experiment::ChanEstDet | Experiment::Capacity => 10_000,
            Experiment::DataMse => 100_000,
            Experiment::ChanEstRayleigh | Experiment::ChanEstRayleighComponents => 1_000,
        }
    }
}

/// Inclusive arithmetic grid `start, start + step, …, ≤ stop`.
pub fn grid(start: f64, step: f64, stop: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && step.is_finite() && stop.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::Config(format!("bad grid {start}:{step}:{stop}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

/// Parses `start:step:stop`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("grid must be start:step:stop, got `{text}`")));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{s}` in grid")));
    grid(num(parts[0])?, num(parts[1])?, num(parts[2])?)
}

/// Everything needed to reproduce one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub params: SystemParams,
    pub power_grid_dbm: Vec<f64>,
    pub modes: Vec<Scheme>,
    /// Only used by the correlated-Rayleigh experiments.
    pub geometries: Vec<RisGeometry>,
    pub trials: usize,
    pub master_seed: u64,
    pub cross: CrossTerm,
    /// Array size of the Monte-Carlo rows of the deterministic experiment.
    pub mc_elements: usize,
    /// Pilot-noise trials for the finite pilot-SNR data MSE; 0 disables it.
    pub finite_pilot_trials: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub output_path: Option<PathBuf>,
}

impl SweepSpec {
    pub fn new(experiment: Experiment) -> Self {
        let params = experiment.default_params();
        let modes = match experiment {
            Experiment::DataMse => Scheme::ALL.to_vec(),
            _ => vec![Scheme::Identical, Scheme::Orthogonal],
        };
        let geometries = match experiment {
            Experiment::ChanEstRayleigh | Experiment::ChanEstRayleighComponents => vec![
                RisGeometry::ura(8, 8, 0.5),
                RisGeometry::ura(8, 8, 0.25),
                RisGeometry::ula(64, 0.5),
            ],
            _ => vec![params.geometry],
        };
        SweepSpec {
            experiment,
            master_seed: params.seed,
            params,
            power_grid_dbm: experiment.default_grid(),
            modes,
            geometries,
            trials: experiment.default_trials(),
            cross: CrossTerm::Oracle,
            mc_elements: 16,
            finite_pilot_trials: 0,
            threads: None,
            output_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.power_grid_dbm.is_empty() {
            return Err(Error::Config("power grid is empty".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("no modes selected".into()));
        }
        if self.geometries.is_empty() {
            return Err(Error::Config("no geometries selected".into()));
        }
        if self.mc_elements == 0 {
            return Err(Error::Config("mc_elements must be at least 1".into()));
        }
        Ok(())
    }

    /// Runs the sweep on the configured number of threads.
    pub fn run(&self) -> Result<Vec<ResultRow>> {
        self.validate()?;
        let go = || match self.experiment {
            Experiment::ChanEstDet => run_chanest_det(self),
            Experiment::DataMse => run_data_mse(self),
            Experiment::ChanEstRayleigh | Experiment::ChanEstRayleighComponents => run_chanest_rayleigh(self),
            Experiment::Capacity => run_capacity(self),
        };
        let mut rows = match self.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?
                .install(go)?,
            None => go()?,
        };
        sort_rows(&mut rows);
        Ok(rows)
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub mode: String,
    pub geometry: String,
    pub power_dbm: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Canonical output order.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.experiment, &a.mode, &a.geometry, &a.metric)
            .cmp(&(&b.experiment, &b.mode, &b.geometry, &b.metric))
            .then(a.power_dbm.total_cmp(&b.power_dbm))
    });
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        if !r.value.is_finite() || r.stderr.is_nan() || r.stderr < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "row {}/{}/{} at {} dBm has value {} and stderr {}",
                r.experiment, r.mode, r.metric, r.power_dbm, r.value, r.stderr
            )));
        }
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["experiment", "mode", "geometry", "power_dbm", "metric", "value", "stderr", "trials", "seed"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("-30:5:40").unwrap().len(), 15);
        assert_eq!(parse_grid("0:10:60").unwrap(), vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        assert_eq!(parse_grid("1:1:1").unwrap(), vec![1.0]);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("3:1:2").is_err());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn csv_has_header_and_rejects_nan() {
        let row = ResultRow {
            experiment: "e".into(),
            mode: "m".into(),
            geometry: "g".into(),
            power_dbm: 1.0,
            metric: "x".into(),
            value: 0.5,
            stderr: 0.0,
            trials: 0,
            seed: 1,
        };
        let text = csv_string(std::slice::from_ref(&row)).unwrap();
        assert!(text.starts_with("experiment,mode,geometry,power_dbm,metric,value,stderr,trials,seed\n"));
        assert!(csv_string(&[]).unwrap().starts_with("experiment,"));
        let bad = ResultRow { value: f64::NAN, ..row };
        assert!(csv_string(&[bad]).is_err());
    }
}
