//! Scenario files are `key = value` lines; `#` starts a comment.
//!
//! ```text
//! name = lossy-10
//! n = 10
//! rounds = 10000
//! rate = 50                          # rounds per second
//! protocol = 2
//! variant = list                     # list | no-list | optimistic
//! group = toy                        # toy | default
//! latency = lognormal 0.97 0.06 100  # u s unit_ms, or: fixed <ms>
//! loss = bernoulli 0.01              # or: gilbert-elliott p_gb p_bg e_good e_bad
//! broadcast_loss = true
//! rotation = fixed                   # fixed | round-robin
//! deadline_ms = 500
//! correspondents = 1 2
//! speak = both                       # both | a | b | none
//! adversary = 3 random_opening       # repeatable
//! max_missing = 1
//! packet_bytes = 100                 # accounting override
//! transcript = false
//! seed = 42
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adversary::Strategy;
use super::channel::{LatencyModel, LossModel};
use super::SimError;
use crate::group::GroupParams;
use crate::kv::KvFile;
use crate::setup::{DealerConfig, SetupBundle};
use crate::{PlayerId, ProtocolLevel, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rotation {
    /// A dedicated aggregator outside the player set.
    #[default]
    Fixed,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupChoice {
    Toy,
    #[default]
    Default,
}

impl GroupChoice {
    /// Parameters without a trapdoor; the dealer draws one from its seed.
    pub fn params(self) -> GroupParams {
        match self {
            GroupChoice::Toy => GroupParams::toy().public(),
            GroupChoice::Default => GroupParams::default_256_unkeyed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Speakers {
    #[default]
    Both,
    A,
    B,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub player: PlayerId,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub name: String,
    pub n: usize,
    pub rounds: u64,
    /// Rounds per second.
    pub rate: f64,
    pub level: ProtocolLevel,
    pub variant: Variant,
    pub group: GroupChoice,
    pub latency: LatencyModel,
    pub loss: LossModel,
    pub broadcast_loss: bool,
    pub rotation: Rotation,
    pub deadline_ms: f64,
    pub correspondents: (PlayerId, PlayerId),
    pub speak: Speakers,
    pub adversaries: Vec<AdversarySpec>,
    /// Largest missing set searched without a received list.
    pub max_missing: usize,
    /// Bytes charged per packet instead of the encoded size.
    pub packet_bytes: Option<u32>,
    pub transcript: bool,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            name: "scenario".into(),
            n: 10,
            rounds: 1000,
            rate: 50.0,
            level: ProtocolLevel::MultiRound,
            variant: Variant::List,
            group: GroupChoice::Default,
            latency: LatencyModel::default(),
            loss: LossModel::default(),
            broadcast_loss: true,
            rotation: Rotation::Fixed,
            deadline_ms: 500.0,
            correspondents: (PlayerId(1), PlayerId(2)),
            speak: Speakers::Both,
            adversaries: Vec::new(),
            max_missing: 1,
            packet_bytes: None,
            transcript: false,
            rng_seed: 0,
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> SimError {
    SimError::Invalid(format!("`{key} = {value}`: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, SimError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn words<'a>(key: &str, value: &'a str, want: usize) -> Result<Vec<&'a str>, SimError> {
    let w: Vec<&str> = value.split_whitespace().collect();
    if w.len() != want {
        return Err(bad(key, value, format!("expected {want} fields")));
    }
    Ok(w)
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let kv = KvFile::parse(text).map_err(|e| SimError::Invalid(e.to_string()))?;
        let mut cfg = SimConfig::default();
        for key in kv.keys() {
            if key == "adversary" {
                continue;
            }
            let value = kv.get(key).expect("listed key");
            match key {
                "name" => cfg.name = value.to_string(),
                "n" => cfg.n = num(key, value)?,
                "rounds" => cfg.rounds = num(key, value)?,
                "rate" => cfg.rate = num(key, value)?,
                "protocol" => cfg.level = value.parse().map_err(|e| bad(key, value, e))?,
                "variant" => cfg.variant = value.parse().map_err(|e| bad(key, value, e))?,
                "group" => {
                    cfg.group = match value {
                        "toy" => GroupChoice::Toy,
                        "default" => GroupChoice::Default,
                        _ => return Err(bad(key, value, "expected toy | default")),
                    }
                }
                "latency" => {
                    let w: Vec<&str> = value.split_whitespace().collect();
                    cfg.latency = match w.as_slice() {
                        ["lognormal", u, s] => LatencyModel::Lognormal { u: num(key, u)?, s: num(key, s)?, unit_ms: 100.0 },
                        ["lognormal", u, s, unit] => {
                            LatencyModel::Lognormal { u: num(key, u)?, s: num(key, s)?, unit_ms: num(key, unit)? }
                        }
                        ["fixed", ms] => LatencyModel::Fixed { ms: num(key, ms)? },
                        _ => return Err(bad(key, value, "expected `lognormal u s [unit_ms]` or `fixed ms`")),
                    }
                }
                "loss" => {
                    let w: Vec<&str> = value.split_whitespace().collect();
                    cfg.loss = match w.as_slice() {
                        ["bernoulli", p] => LossModel::Bernoulli { p: num(key, p)? },
                        ["gilbert-elliott", p_gb, p_bg] => LossModel::GilbertElliott {
                            p_gb: num(key, p_gb)?,
                            p_bg: num(key, p_bg)?,
                            e_good: 0.0,
                            e_bad: 1.0,
                        },
                        ["gilbert-elliott", p_gb, p_bg, eg, eb] => LossModel::GilbertElliott {
                            p_gb: num(key, p_gb)?,
                            p_bg: num(key, p_bg)?,
                            e_good: num(key, eg)?,
                            e_bad: num(key, eb)?,
                        },
                        _ => return Err(bad(key, value, "expected `bernoulli p` or `gilbert-elliott p_gb p_bg [e_good e_bad]`")),
                    }
                }
                "broadcast_loss" => cfg.broadcast_loss = num(key, value)?,
                "rotation" => {
                    cfg.rotation = match value {
                        "fixed" => Rotation::Fixed,
                        "round-robin" => Rotation::RoundRobin,
                        _ => return Err(bad(key, value, "expected fixed | round-robin")),
                    }
                }
                "deadline_ms" => cfg.deadline_ms = num(key, value)?,
                "correspondents" => {
                    let w = words(key, value, 2)?;
                    cfg.correspondents = (PlayerId(num(key, w[0])?), PlayerId(num(key, w[1])?));
                }
                "speak" => {
                    cfg.speak = match value {
                        "both" => Speakers::Both,
                        "a" => Speakers::A,
                        "b" => Speakers::B,
                        "none" => Speakers::None,
                        _ => return Err(bad(key, value, "expected both | a | b | none")),
                    }
                }
                "max_missing" => cfg.max_missing = num(key, value)?,
                "packet_bytes" => cfg.packet_bytes = Some(num(key, value)?),
                "transcript" => cfg.transcript = num(key, value)?,
                "seed" => cfg.rng_seed = num(key, value)?,
                other => return Err(SimError::Invalid(format!("unknown key `{other}`"))),
            }
        }
        for value in kv.get_all("adversary") {
            let w = words("adversary", value, 2)?;
            cfg.adversaries.push(AdversarySpec {
                player: PlayerId(num("adversary", w[0])?),
                strategy: w[1].parse().map_err(|e| bad("adversary", value, e))?,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::Invalid(m));
        if self.n < 3 {
            return invalid(format!("n must be at least 3, got {}", self.n));
        }
        if self.rounds == 0 {
            return invalid("rounds must be positive".into());
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return invalid(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.deadline_ms >= 0.0 && self.deadline_ms.is_finite()) {
            return invalid(format!("deadline_ms must be non-negative, got {}", self.deadline_ms));
        }
        self.latency.validate().map_err(SimError::Invalid)?;
        self.loss.validate().map_err(SimError::Invalid)?;
        let (a, b) = self.correspondents;
        let valid = |p: PlayerId| p.0 >= 1 && usize::from(p.0) <= self.n;
        if a == b || !valid(a) || !valid(b) {
            return invalid(format!("correspondents {a} and {b} must be distinct members of 1..={}", self.n));
        }
        let mut seen = std::collections::BTreeSet::new();
        for adv in &self.adversaries {
            if !valid(adv.player) || adv.player == a || adv.player == b {
                return invalid(format!("adversary {} must be a bystander", adv.player));
            }
            if !seen.insert(adv.player) {
                return invalid(format!("adversary {} listed twice", adv.player));
            }
        }
        Ok(())
    }

    pub fn dealer_config(&self) -> DealerConfig {
        DealerConfig {
            n: self.n,
            rounds: self.rounds,
            level: self.level,
            correspondents: self.correspondents,
            rng_seed: self.rng_seed,
        }
    }

    /// Runs the dealer for this scenario.
    pub fn bundle(&self) -> Result<SetupBundle, SimError> {
        Ok(SetupBundle::generate(&self.group.params(), self.dealer_config())?)
    }

    pub fn period_us(&self) -> f64 {
        1e6 / self.rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let text = "\
name = demo
n = 5
rounds = 20
rate = 25
protocol = 3
variant = optimistic
group = toy
latency = fixed 40
loss = gilbert-elliott 0.1 0.5 0 0.9
broadcast_loss = false
rotation = round-robin
deadline_ms = 100
correspondents = 2 4
speak = a
adversary = 1 random_opening
adversary = 5 drop_silently
max_missing = 2
packet_bytes = 100
transcript = true
seed = 9
";
        let cfg = SimConfig::parse(text).unwrap();
        assert_eq!(cfg.n, 5);
        assert_eq!(cfg.level, ProtocolLevel::Verified);
        assert_eq!(cfg.variant, Variant::Optimistic);
        assert_eq!(cfg.latency, LatencyModel::Fixed { ms: 40.0 });
        assert_eq!(cfg.loss, LossModel::GilbertElliott { p_gb: 0.1, p_bg: 0.5, e_good: 0.0, e_bad: 0.9 });
        assert_eq!(cfg.rotation, Rotation::RoundRobin);
        assert_eq!(cfg.correspondents, (PlayerId(2), PlayerId(4)));
        assert_eq!(cfg.speak, Speakers::A);
        assert_eq!(cfg.adversaries.len(), 2);
        assert_eq!(cfg.adversaries[1].strategy, Strategy::DropSilently);
        assert_eq!(cfg.packet_bytes, Some(100));
        assert!(cfg.transcript && !cfg.broadcast_loss);
        assert_eq!(cfg.rng_seed, 9);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(SimConfig::parse("n = 2").is_err());
        assert!(SimConfig::parse("loss = bernoulli 1.2").is_err());
        assert!(SimConfig::parse("colour = blue").is_err());
        assert!(SimConfig::parse("correspondents = 1 1").is_err());
        assert!(SimConfig::parse("adversary = 1 random_opening").is_err());
        assert!(SimConfig::parse("adversary = 3 shouting").is_err());
        assert!(SimConfig::parse("latency = lognormal 1 0").is_err());
    }
}
