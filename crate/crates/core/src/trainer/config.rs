use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::LossKind;
use crate::propagation::Rule;

/// Graph sizes at or above this many nodes default to 500 pseudo labels per
/// class instead of 100.
pub const LARGE_GRAPH_NODES: usize = 20_000;

/// Propagation and pseudo-label coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the feature (MLP) view in the F objective.
    pub lambda1: f64,
    /// Weight of the ground-truth label view in the F objective.
    pub lambda2: f64,
    /// Restart probability of the feature diffusion `X' = LP(X, α)`.
    pub alpha: f64,
    /// Temperature of the pseudo-label softmax.
    pub tau: f64,
    /// Propagation steps per F round.
    pub layers: usize,
    /// Diffusion steps used to build `X'`; 0 trains on raw features.
    pub diffusion_layers: usize,
    /// Pseudo labels kept per class; `None` picks by graph size.
    pub per_class: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda1: 1.0,
            lambda2: 1.0,
            alpha: 0.1,
            tau: 0.1,
            layers: 10,
            diffusion_layers: 10,
            per_class: None,
        }
    }
}

impl HyperParams {
    pub fn per_class_for(&self, n: usize) -> usize {
        self.per_class.unwrap_or(if n < LARGE_GRAPH_NODES { 100 } else { 500 })
    }
}

/// Number of F propagation rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounds {
    Count(usize),
    /// One round after every MLP epoch.
    Full,
}

impl Rounds {
    pub fn resolve(self, epochs: usize) -> usize {
        match self {
            Rounds::Count(k) => k,
            Rounds::Full => epochs,
        }
    }
}

impl std::str::FromStr for Rounds {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(Rounds::Full);
        }
        s.parse().map(Rounds::Count).map_err(|_| format!("rounds `{s}` is neither a count nor `full`"))
    }
}

impl std::fmt::Display for Rounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rounds::Count(k) => write!(f, "{k}"),
            Rounds::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Labeled-only MLP epochs before the first block.
    pub pretrain_epochs: usize,
    /// MLP epochs after pretraining, split evenly across rounds.
    pub epochs: usize,
    pub rounds: Rounds,
    pub rule: Rule,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            pretrain_epochs: 100,
            epochs: 500,
            rounds: Rounds::Count(5),
            rule: Rule::Mse,
        }
    }
}

impl Schedule {
    /// Epochs of each MLP block; the remainder of `epochs / k` goes last.
    pub fn block_epochs(&self) -> Vec<usize> {
        let k = self.rounds.resolve(self.epochs);
        if k == 0 {
            return Vec::new();
        }
        let mut blocks = vec![self.epochs / k; k];
        blocks[k - 1] += self.epochs % k;
        blocks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: Vec<usize>,
    pub loss: LossKind,
    /// Rows per Adam step; `None` is full batch.
    pub batch_size: Option<usize>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            hidden: vec![64],
            loss: LossKind::Mse,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub schedule: Schedule,
    pub opt: OptimConfig,
    pub seed: u64,
}

fn bad(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        for (name, v) in [("lambda1", h.lambda1), ("lambda2", h.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(name, format!("{v} must be a finite value >= 0")));
            }
        }
        if !(h.alpha > 0.0 && h.alpha < 1.0) {
            return Err(bad("alpha", format!("{} outside (0, 1)", h.alpha)));
        }
        if !(h.tau > 0.0 && h.tau.is_finite()) {
            return Err(bad("tau", format!("{} must be positive", h.tau)));
        }
        let s = &self.schedule;
        let k = s.rounds.resolve(s.epochs);
        if s.epochs > 0 && k == 0 {
            return Err(bad("rounds", "need at least one round when epochs > 0"));
        }
        if k > s.epochs {
            return Err(bad("rounds", format!("{k} rounds exceed {} epochs", s.epochs)));
        }
        let o = &self.opt;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(bad("lr", format!("{} must be positive", o.lr)));
        }
        if !(o.weight_decay >= 0.0 && o.weight_decay.is_finite()) {
            return Err(bad("weight_decay", format!("{} must be >= 0", o.weight_decay)));
        }
        if !(0.0..1.0).contains(&o.dropout) {
            return Err(bad("dropout", format!("{} outside [0, 1)", o.dropout)));
        }
        if o.hidden.contains(&0) {
            return Err(bad("hidden", "hidden widths must be positive"));
        }
        if o.batch_size == Some(0) {
            return Err(bad("batch_size", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.schedule.pretrain_epochs, c.hyper.layers, c.hyper.tau), (100, 10, 0.1));
        assert_eq!(c.hyper.per_class_for(2708), 100);
        assert_eq!(c.hyper.per_class_for(20_000), 500);
    }

    #[test]
    fn blocks_take_remainder_last() {
        let s = Schedule {
            epochs: 17,
            rounds: Rounds::Count(5),
            ..Schedule::default()
        };
        assert_eq!(s.block_epochs(), vec![3, 3, 3, 3, 5]);
        let full = Schedule {
            epochs: 4,
            rounds: Rounds::Full,
            ..Schedule::default()
        };
        assert_eq!(full.block_epochs(), vec![1; 4]);
    }

    #[test]
    fn rejects_bad_fields() {
        let mut c = TrainConfig::default();
        c.hyper.lambda1 = -0.1;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "lambda1"));
        let mut c = TrainConfig::default();
        c.schedule.rounds = Rounds::Count(600);
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.schedule.rounds = Rounds::Count(0);
        assert!(c.validate().is_err());
        assert_eq!("full".parse::<Rounds>().unwrap(), Rounds::Full);
    }
}
