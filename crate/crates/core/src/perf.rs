//! Closed-form latency, loss and bandwidth models.
//!
//! Latencies follow a log-normal law with log-mean `u` and log-std `s`; the
//! unit of `x` is set by [`LatencyModel::unit_ms`].

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("x must be positive, got {0}")]
    Domain(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub u: f64,
    pub s: f64,
    /// Milliseconds per model unit.
    pub unit_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel { u: 0.97, s: 0.06, unit_ms: 100.0 }
    }
}

impl LatencyModel {
    pub fn new(u: f64, s: f64, unit_ms: f64) -> Result<Self, PerfError> {
        if !(s > 0.0 && s.is_finite()) || !u.is_finite() || !(unit_ms > 0.0) {
            return Err(PerfError::Parameter(format!("u={u}, s={s}, unit_ms={unit_ms}")));
        }
        Ok(LatencyModel { u, s, unit_ms })
    }

    /// Expected wait for the last of `n` packets, in milliseconds.
    pub fn expected_max_ms(&self, n: u32) -> f64 {
        expected_max_latency(n, self.u, self.s) * self.unit_ms
    }

    pub fn mean_ms(&self) -> f64 {
        (self.u + self.s * self.s / 2.0).exp() * self.unit_ms
    }
}

pub fn lognormal_pdf(x: f64, u: f64, s: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = (x.ln() - u) / s;
    (-0.5 * z * z).exp() / (x * s * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn lognormal_cdf(x: f64, u: f64, s: f64) -> Result<f64, PerfError> {
    if !(x > 0.0) {
        return Err(PerfError::Domain(x));
    }
    Ok(0.5 * erfc(-(x.ln() - u) / (s * std::f64::consts::SQRT_2)))
}

/// `E[max]` of `n` iid log-normals, `lo + ∫_lo^hi (1 - F(x)^n) dx`, where
/// `F(lo)` and `1 - F(hi)^n` are below double precision.
pub fn expected_max_latency(n: u32, u: f64, s: f64) -> f64 {
    assert!(n >= 1, "n must be at least 1");
    let knots: Vec<f64> = (-10..=14).step_by(2).map(|k| (u + f64::from(k) * s).exp()).collect();
    let survival = |x: f64| {
        let f = 0.5 * erfc(-(x.ln() - u) / (s * std::f64::consts::SQRT_2));
        1.0 - f.powf(f64::from(n))
    };
    let mut total = knots[0];
    for w in knots.windows(2) {
        total += quadrature::double_exponential::integrate(survival, w[0], w[1], 1e-13).integral;
    }
    total
}

/// Probability that none of `n` independent packets is lost.
pub fn lossfree_round_ratio(p: f64, n: u32) -> f64 {
    (1.0 - p).powi(n as i32)
}

/// Long-run loss rate of a two-state Gilbert–Elliott chain.
pub fn ge_stationary_loss(p_gb: f64, p_bg: f64, e_good: f64, e_bad: f64) -> f64 {
    if p_gb + p_bg == 0.0 {
        return e_good;
    }
    (p_gb * e_bad + p_bg * e_good) / (p_gb + p_bg)
}

/// Per-player bandwidth under aggregator rotation, both readings of the
/// per-player formula, plus the fixed-aggregator load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthModel {
    pub n: u32,
    pub f: f64,
    pub packet_bytes: u32,
    /// `2 (n - 1) / f`, taken verbatim.
    pub literal_total: f64,
    /// `(n - 1) / n * 2 / f`, taken verbatim.
    pub literal_per_player: f64,
    /// Packets per second each player receives (and, equally, sends): `2 (n - 1) f / n`.
    pub rate_per_player_pps: f64,
    pub rate_per_player_bps: f64,
    /// Packets per second a dedicated aggregator receives (and, equally, sends): `n f`.
    pub aggregator_pps: f64,
    pub aggregator_bps: f64,
}

pub fn bandwidth_per_player(n: u32, f: f64, packet_bytes: u32) -> Result<BandwidthModel, PerfError> {
    if n < 2 || !(f > 0.0) {
        return Err(PerfError::Parameter(format!("need n >= 2 and f > 0, got n={n}, f={f}")));
    }
    let nf = f64::from(n);
    let bits = 8.0 * f64::from(packet_bytes);
    let rate = 2.0 * (nf - 1.0) * f / nf;
    Ok(BandwidthModel {
        n,
        f,
        packet_bytes,
        literal_total: 2.0 * (nf - 1.0) / f,
        literal_per_player: (nf - 1.0) / nf * 2.0 / f,
        rate_per_player_pps: rate,
        rate_per_player_bps: rate * bits,
        aggregator_pps: nf * f,
        aggregator_bps: nf * f * bits,
    })
}
