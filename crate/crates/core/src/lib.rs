//! Link-level simulation of inter-operator pilot contamination in a
//! two-operator uplink where each operator owns one reconfigurable
//! intelligent surface (RIS) and both surfaces reflect both bands.
//!
//! The crate is organized bottom-up:
//!
//! * [`units`] and [`geometry`] hold configuration, unit conversions and
//!   isotropic spatial covariances.
//! * [`channels`] and [`sequences`] generate channel realizations, pilot
//!   observations and RIS configuration sequences.
//! * [`deterministic`], [`data_link`], [`bayesian`] and [`capacity`]
//!   implement the estimators and the closed-form error, data-MSE and
//!   capacity expressions.
//! * [`experiments`] runs seeded parameter sweeps, writes CSV and hosts the
//!   validation suite.

pub mod bayesian;
pub mod capacity;
pub mod channels;
pub mod data_link;
pub mod deterministic;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod rng;
pub mod sequences;
pub mod units;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
pub use num_complex::Complex64;

/// Operator (band) index. Each operator owns one RIS, one BS and one UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    First,
    Second,
}

impl Operator {
    pub const BOTH: [Operator; 2] = [Operator::First, Operator::Second];

    pub fn index(self) -> usize {
        match self {
            Operator::First => 0,
            Operator::Second => 1,
        }
    }

    /// The operator whose RIS is the non-serving one for `self`.
    pub fn other(self) -> Operator {
        match self {
            Operator::First => Operator::Second,
            Operator::Second => Operator::First,
        }
    }
}

/// Relation between the two pilot-phase configuration sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConfigMode {
    /// Both RISs run the same sequence, `B1 = B2`.
    Identical,
    /// The sequences span orthogonal subspaces, `B1ᴴB2 = 0`.
    Orthogonal,
}

impl ConfigMode {
    pub const BOTH: [ConfigMode; 2] = [ConfigMode::Identical, ConfigMode::Orthogonal];

    pub fn label(self) -> &'static str {
        match self {
            ConfigMode::Identical => "identical",
            ConfigMode::Orthogonal => "orthogonal",
        }
    }

    /// Minimum pilot length for `n` RIS elements.
    pub fn min_pilot_len(self, n: usize) -> usize {
        match self {
            ConfigMode::Identical => n,
            ConfigMode::Orthogonal => 2 * n,
        }
    }
}

impl std::str::FromStr for ConfigMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identical" | "same" => Ok(ConfigMode::Identical),
            "orthogonal" | "orth" => Ok(ConfigMode::Orthogonal),
            other => Err(Error::Config(format!("unknown config mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ConfigMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}
