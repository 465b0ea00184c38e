use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    /// `exp(N(u, s^2))` model units of `unit_ms` milliseconds each.
    Lognormal { u: f64, s: f64, unit_ms: f64 },
    Fixed { ms: f64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Lognormal { u: 0.97, s: 0.06, unit_ms: 100.0 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            LatencyModel::Lognormal { u, s, unit_ms } => {
                if !(s > 0.0) || !u.is_finite() || !(unit_ms > 0.0) {
                    return Err(format!("lognormal latency needs s > 0 and unit_ms > 0 (u={u}, s={s}, unit_ms={unit_ms})"));
                }
            }
            LatencyModel::Fixed { ms } => {
                if !(ms >= 0.0) || !ms.is_finite() {
                    return Err(format!("fixed latency must be non-negative, got {ms}"));
                }
            }
        }
        Ok(())
    }

    /// One delay in microseconds.
    pub fn sample_us<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let ms = match *self {
            LatencyModel::Lognormal { u, s, unit_ms } => {
                LogNormal::new(u, s).expect("validated").sample(rng) * unit_ms
            }
            LatencyModel::Fixed { ms } => ms,
        };
        (ms * 1000.0).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    Bernoulli { p: f64 },
    GilbertElliott { p_gb: f64, p_bg: f64, e_good: f64, e_bad: f64 },
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel::Bernoulli { p: 0.0 }
    }
}

impl LossModel {
    pub fn validate(&self) -> Result<(), String> {
        let probs: &[f64] = match self {
            LossModel::Bernoulli { p } => &[*p],
            LossModel::GilbertElliott { p_gb, p_bg, e_good, e_bad } => &[*p_gb, *p_bg, *e_good, *e_bad],
        };
        if probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(format!("loss probabilities must lie in [0, 1]: {probs:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeState {
    #[default]
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeParams {
    pub p_gb: f64,
    pub p_bg: f64,
    pub e_good: f64,
    pub e_bad: f64,
}

/// One packet through the chain: loss drawn in the current state, then the
/// state moves.
pub fn gilbert_elliott_step<R: Rng + ?Sized>(state: GeState, params: &GeParams, rng: &mut R) -> (bool, GeState) {
    let (e, flip, other) = match state {
        GeState::Good => (params.e_good, params.p_gb, GeState::Bad),
        GeState::Bad => (params.e_bad, params.p_bg, GeState::Good),
    };
    let lost = rng.random_bool(e);
    let next = if rng.random_bool(flip) { other } else { state };
    (lost, next)
}

/// Loss state for every directed link, keyed `from * nodes + to`.
#[derive(Debug, Clone)]
pub(crate) struct Links {
    model: LossModel,
    nodes: usize,
    states: Vec<GeState>,
}

impl Links {
    pub fn new(model: LossModel, nodes: usize) -> Self {
        let states = match model {
            LossModel::GilbertElliott { .. } => vec![GeState::Good; nodes * nodes],
            LossModel::Bernoulli { .. } => Vec::new(),
        };
        Links { model, nodes, states }
    }

    pub fn lost<R: Rng + ?Sized>(&mut self, from: usize, to: usize, rng: &mut R) -> bool {
        match self.model {
            LossModel::Bernoulli { p } => rng.random_bool(p),
            LossModel::GilbertElliott { p_gb, p_bg, e_good, e_bad } => {
                let slot = &mut self.states[from * self.nodes + to];
                let (lost, next) = gilbert_elliott_step(*slot, &GeParams { p_gb, p_bg, e_good, e_bad }, rng);
                *slot = next;
                lost
            }
        }
    }
}
