//! System parameters and dB/dBm conversions.
//!
//! All linear powers are in milliwatts so that dBm values map directly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::RisGeometry;
use crate::ConfigMode;

/// Power in dBm to milliwatts.
pub fn dbm_to_linear(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

pub fn linear_to_dbm(p: f64) -> f64 {
    10.0 * p.log10()
}

/// Dimensionless power gain from a value in dB.
pub fn db_to_gain(pl: f64) -> f64 {
    10f64.powf(pl / 10.0)
}

/// Amplitude scale for a gain in dB, `sqrt(10^(pl/10))`.
pub fn db_to_amplitude(pl: f64) -> f64 {
    db_to_gain(pl).sqrt()
}

/// Scalar configuration of one scenario. The pilot symbol is fixed to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub n_elements: usize,
    pub pilot_len: usize,
    pub pilot_power_dbm: f64,
    pub data_power_dbm: f64,
    pub noise_power_dbm: f64,
    /// UE-RIS path loss (negative gain in dB).
    pub pathloss_ue_ris_db: f64,
    /// RIS-BS path loss (negative gain in dB).
    pub pathloss_ris_bs_db: f64,
    pub geometry: RisGeometry,
    pub config_mode: ConfigMode,
    pub seed: u64,
}

impl Default for SystemParams {
    /// Deterministic-channel scenario: N = 256, L = 513, −80/−60 dB path
    /// losses and −90 dBm noise.
    fn default() -> Self {
        SystemParams {
            n_elements: 256,
            pilot_len: 513,
            pilot_power_dbm: 0.0,
            data_power_dbm: 0.0,
            noise_power_dbm: -90.0,
            pathloss_ue_ris_db: -80.0,
            pathloss_ris_bs_db: -60.0,
            geometry: RisGeometry::ura(16, 16, 0.5),
            config_mode: ConfigMode::Orthogonal,
            seed: 1,
        }
    }
}

impl SystemParams {
    /// Correlated-Rayleigh scenario: 8x8 half-wavelength URA, N = 64, L = 128.
    pub fn rayleigh_default() -> Self {
        SystemParams {
            n_elements: 64,
            pilot_len: 128,
            geometry: RisGeometry::ura(8, 8, 0.5),
            ..SystemParams::default()
        }
    }

    /// Same scenario with a different array size; geometry is reshaped to a
    /// square URA when `n` is a perfect square and to a ULA otherwise.
    pub fn with_size(&self, n: usize, l: usize) -> Self {
        let side = (n as f64).sqrt().round() as usize;
        let geometry = if side * side == n {
            RisGeometry::ura(side, side, self.geometry.spacing)
        } else {
            RisGeometry::ula(n, self.geometry.spacing)
        };
        SystemParams { n_elements: n, pilot_len: l, geometry, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(Error::InvalidParameter("n_elements must be at least 1".into()));
        }
        let need = self.config_mode.min_pilot_len(self.n_elements);
        if self.pilot_len < need {
            return Err(Error::InvalidParameter(format!(
                "{} sequences need pilot_len >= {need}, got {}",
                self.config_mode, self.pilot_len
            )));
        }
        for (name, v) in [
            ("pilot_power_dBm", self.pilot_power_dbm),
            ("data_power_dBm", self.data_power_dbm),
            ("noise_power_dBm", self.noise_power_dbm),
            ("pathloss_ue_ris_dB", self.pathloss_ue_ris_db),
            ("pathloss_ris_bs_dB", self.pathloss_ris_bs_db),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        self.geometry.validate()?;
        if self.geometry.len() != self.n_elements {
            return Err(Error::InvalidParameter(format!(
                "geometry has {} elements but n_elements = {}",
                self.geometry.len(),
                self.n_elements
            )));
        }
        Ok(())
    }

    pub fn pilot_power(&self) -> f64 {
        dbm_to_linear(self.pilot_power_dbm)
    }

    pub fn data_power(&self) -> f64 {
        dbm_to_linear(self.data_power_dbm)
    }

    pub fn noise_power(&self) -> f64 {
        dbm_to_linear(self.noise_power_dbm)
    }

    /// Per-entry variance of UE-RIS channels (`g_k`, `p_k`).
    pub fn ue_ris_gain(&self) -> f64 {
        db_to_gain(self.pathloss_ue_ris_db)
    }

    /// Per-entry variance of RIS-BS channels (`h_k`, `q_k`).
    pub fn ris_bs_gain(&self) -> f64 {
        db_to_gain(self.pathloss_ris_bs_db)
    }

    /// Parses a flat `key=value` configuration. Unknown keys are rejected,
    /// `#` starts a comment and missing keys keep their defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut p = SystemParams::default();
        let mut n_set = false;
        let mut geometry_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let bad = |what: &str| Error::Config(format!("line {}: invalid {what} `{value}`", lineno + 1));
            match key.as_str() {
                "n_elements" => {
                    p.n_elements = value.parse().map_err(|_| bad("n_elements"))?;
                    n_set = true;
                }
                "pilot_len" => p.pilot_len = value.parse().map_err(|_| bad("pilot_len"))?,
                "pilot_power_dbm" => p.pilot_power_dbm = value.parse().map_err(|_| bad("pilot_power_dBm"))?,
                "data_power_dbm" => p.data_power_dbm = value.parse().map_err(|_| bad("data_power_dBm"))?,
                "noise_power_dbm" => p.noise_power_dbm = value.parse().map_err(|_| bad("noise_power_dBm"))?,
                "pathloss_ue_ris_db" => {
                    p.pathloss_ue_ris_db = value.parse().map_err(|_| bad("pathloss_ue_ris_dB"))?
                }
                "pathloss_ris_bs_db" => {
                    p.pathloss_ris_bs_db = value.parse().map_err(|_| bad("pathloss_ris_bs_dB"))?
                }
                "geometry" => {
                    p.geometry = value.parse()?;
                    geometry_set = true;
                }
                "config_mode" => p.config_mode = value.parse()?,
                "seed" => p.seed = value.parse().map_err(|_| bad("seed"))?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        // A geometry token fixes N; an explicit N without geometry gets a
        // matching default layout.
        if geometry_set && !n_set {
            p.n_elements = p.geometry.len();
        } else if n_set && !geometry_set {
            p.geometry = p.with_size(p.n_elements, p.pilot_len).geometry;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_elements={}", self.n_elements);
        let _ = writeln!(s, "pilot_len={}", self.pilot_len);
        let _ = writeln!(s, "pilot_power_dBm={}", self.pilot_power_dbm);
        let _ = writeln!(s, "data_power_dBm={}", self.data_power_dbm);
        let _ = writeln!(s, "noise_power_dBm={}", self.noise_power_dbm);
        let _ = writeln!(s, "pathloss_ue_ris_dB={}", self.pathloss_ue_ris_db);
        let _ = writeln!(s, "pathloss_ris_bs_dB={}", self.pathloss_ris_bs_db);
        let _ = writeln!(s, "geometry={}", self.geometry);
        let _ = writeln!(s, "config_mode={}", self.config_mode);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }
}
