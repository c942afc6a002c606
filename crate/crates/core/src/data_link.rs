//! Scalar uplink data model with RIS phases chosen from estimated channels.

use rand::Rng;

use crate::channels::{received_pilots, ChannelSet};
use crate::deterministic::mml_estimate;
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::rng::complex_normal;
use crate::sequences::{phase_align, RisPhaseConfig, SequencePair};
use crate::{Complex64, ConfigMode, Operator};

/// True and BS-assumed effective channels of one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLink {
    /// `√Pd (h_kᵀ Φ_k g_k + q_kᵀ Φ_j p_k)`.
    pub m: Complex64,
    /// `√Pd h_kᵀ Φ_k ĝ_k`.
    pub m_hat: Complex64,
    pub epsilon: Complex64,
}

impl ScalarLink {
    pub fn new(m: Complex64, m_hat: Complex64) -> Self {
        ScalarLink { m, m_hat, epsilon: m - m_hat }
    }
}

/// Evaluates the link of UE `k` for RIS configurations `phi` (indexed by
/// operator) and the BS estimate `g_hat`.
pub fn effective_channels(
    ch: &ChannelSet,
    phi: [&RisPhaseConfig; 2],
    g_hat: &CVec,
    data_power: f64,
    k: Operator,
) -> ScalarLink {
    let s = data_power.sqrt();
    let (pk, pj) = (phi[k.index()], phi[k.other().index()]);
    let m = s * (pk.cascade(ch.h(k), ch.g(k)) + pj.cascade(ch.q(k), ch.p(k)));
    let m_hat = s * pk.cascade(ch.h(k), g_hat);
    ScalarLink::new(m, m_hat)
}

/// Misspecified MMSE symbol estimate `m̂* y / (|m̂|² + σ²)`.
pub fn mmse_symbol_estimate(y: Complex64, m_hat: Complex64, noise_power: f64) -> Complex64 {
    m_hat.conj() * y / (m_hat.norm_sqr() + noise_power)
}

/// `E|x − x̂|²` for `y = m x + w`, `x ~ CN(0, 1)`, `w ~ CN(0, σ²)` and the
/// misspecified symbol estimator built on `m̂ = m − ε`.
pub fn data_mse(link: &ScalarLink, noise_power: f64) -> f64 {
    let s2 = noise_power;
    let d = (link.m - link.epsilon).norm_sqr() + s2;
    (link.epsilon.norm_sqr() + 2.0 * s2) / d - s2 * (link.m.norm_sqr() + s2) / (d * d)
}

/// Noise-free limit `|ε|² / |m − ε|²` of [`data_mse`].
pub fn data_mse_floor(link: &ScalarLink) -> Result<f64> {
    let den = (link.m - link.epsilon).norm_sqr();
    if den.sqrt() < 1e-300 {
        return Err(Error::DegenerateLink(den.sqrt()));
    }
    Ok(link.epsilon.norm_sqr() / den)
}

/// CSI regime of the data phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CsiScheme {
    /// Both RISs share a pilot sequence; estimates carry the contamination.
    Identical,
    /// Orthogonal sequences; estimates equal the true `g`.
    Orthogonal,
    /// Phases from true `g` and the BS knows `m` exactly.
    PerfectCsi,
}

impl CsiScheme {
    pub const ALL: [CsiScheme; 3] = [CsiScheme::Identical, CsiScheme::Orthogonal, CsiScheme::PerfectCsi];

    pub fn label(self) -> &'static str {
        match self {
            CsiScheme::Identical => "identical",
            CsiScheme::Orthogonal => "orthogonal",
            CsiScheme::PerfectCsi => "perfect_csi",
        }
    }
}

impl From<ConfigMode> for CsiScheme {
    fn from(m: ConfigMode) -> Self {
        match m {
            ConfigMode::Identical => CsiScheme::Identical,
            ConfigMode::Orthogonal => CsiScheme::Orthogonal,
        }
    }
}

/// Noise-free pilot-phase estimates of both UEs under `scheme`.
pub fn high_snr_estimates(ch: &ChannelSet, scheme: CsiScheme) -> Result<[CVec; 2]> {
    let est = |k: Operator| -> Result<CVec> {
        match scheme {
            CsiScheme::Identical => {
                let inv = crate::linalg::recip(ch.h(k))?;
                Ok(ch.g(k) + inv.component_mul(&ch.r(k)))
            }
            CsiScheme::Orthogonal | CsiScheme::PerfectCsi => Ok(ch.g(k).clone()),
        }
    };
    Ok([est(Operator::First)?, est(Operator::Second)?])
}

/// Phases of both RISs aligned to their own UE's estimate.
pub fn aligned_configs(ch: &ChannelSet, g_hat: &[CVec; 2]) -> [RisPhaseConfig; 2] {
    [phase_align(&ch.h[0], &g_hat[0]), phase_align(&ch.h[1], &g_hat[1])]
}

/// Link of UE `k` in the high-pilot-SNR regime.
pub fn high_snr_link(ch: &ChannelSet, scheme: CsiScheme, data_power: f64, k: Operator) -> Result<ScalarLink> {
    let g_hat = high_snr_estimates(ch, scheme)?;
    let cfg = aligned_configs(ch, &g_hat);
    let link = effective_channels(ch, [&cfg[0], &cfg[1]], &g_hat[k.index()], data_power, k);
    Ok(match scheme {
        CsiScheme::PerfectCsi => ScalarLink::new(link.m, link.m),
        _ => link,
    })
}

/// Monte-Carlo estimate of `E|x − x̂|²` over symbols and noise.
/// Returns `(mean, standard error)`.
pub fn data_mse_mc<R: Rng + ?Sized>(link: &ScalarLink, noise_power: f64, draws: usize, rng: &mut R) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..draws {
        let x = complex_normal(rng, 1.0);
        let w = complex_normal(rng, noise_power);
        let x_hat = mmse_symbol_estimate(link.m * x + w, link.m_hat, noise_power);
        let e = (x - x_hat).norm_sqr();
        sum += e;
        sum2 += e * e;
    }
    mean_and_stderr(sum, sum2, draws)
}

pub(crate) fn mean_and_stderr(sum: f64, sum2: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Data MSE of UE `k` with estimates from one noisy pilot phase. The
/// expectation over symbols and data noise is evaluated in closed form.
#[allow(clippy::too_many_arguments)]
pub fn finite_pilot_data_mse<R: Rng + ?Sized>(
    ch: &ChannelSet,
    pair: &SequencePair,
    pilot_power: f64,
    data_power: f64,
    noise_power: f64,
    k: Operator,
    rng: &mut R,
) -> Result<f64> {
    let mut g_hat = Vec::with_capacity(2);
    for op in Operator::BOTH {
        let (bk, _) = pair.for_operator(op);
        let y = received_pilots(ch, &pair.b1, &pair.b2, pilot_power, noise_power, op, rng)?;
        g_hat.push(mml_estimate(&y, bk, ch.h(op), pilot_power)?);
    }
    let g_hat = [g_hat[0].clone(), g_hat[1].clone()];
    let cfg = aligned_configs(ch, &g_hat);
    let link = effective_channels(ch, [&cfg[0], &cfg[1]], &g_hat[k.index()], data_power, k);
    Ok(data_mse(&link, noise_power))
}
