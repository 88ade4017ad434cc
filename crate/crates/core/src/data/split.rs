use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validation and test sizes used with per-class label counts.
pub const COUNT_MODE_VAL: usize = 500;
pub const COUNT_MODE_TEST: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRate {
    /// Labeled nodes per class; then 500 validation and 1000 test nodes.
    PerClass(usize),
    /// Fraction of each class labeled; the rest is halved into validation and test.
    Fraction(f64),
}

impl std::str::FromStr for LabelRate {
    type Err = String;

    /// `20` means 20 per class, `30%` or `0.3` a fraction.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let v: f64 = p.trim().parse().map_err(|_| format!("bad percentage `{s}`"))?;
            return Ok(LabelRate::Fraction(v / 100.0));
        }
        if let Ok(k) = s.parse::<usize>() {
            return Ok(LabelRate::PerClass(k));
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v < 1.0 => Ok(LabelRate::Fraction(v)),
            _ => Err(format!("label rate `{s}` is neither a count nor a fraction in (0, 1)")),
        }
    }
}

impl std::fmt::Display for LabelRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelRate::PerClass(k) => write!(f, "{k}"),
            LabelRate::Fraction(p) => write!(f, "{}%", p * 100.0),
        }
    }
}

/// A class (or the validation/test pool) had fewer nodes than requested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitWarning {
    pub what: String,
    pub requested: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub rate: LabelRate,
    pub warnings: Vec<SplitWarning>,
}

impl Split {
    /// Membership mask of the training (labeled) nodes.
    pub fn train_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.train {
            m[i] = true;
        }
        m
    }
}

/// Sample a split from node labels. Training nodes are drawn uniformly
/// without replacement inside each class, then validation and test nodes
/// uniformly from the remainder. Identical inputs and seed give identical
/// index lists.
pub fn make_split(labels: &[usize], classes: usize, rate: LabelRate, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Data(format!("label {l} of node {i} outside 0..{classes}")));
        }
        by_class[l].push(i);
    }
    let mut warnings = Vec::new();
    let mut train = Vec::new();
    let mut in_train = vec![false; labels.len()];
    for (class, nodes) in by_class.iter_mut().enumerate() {
        let want = match rate {
            LabelRate::PerClass(k) => k,
            LabelRate::Fraction(p) => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Config {
                        field: "label_rate".into(),
                        msg: format!("fraction {p} outside (0, 1)"),
                    });
                }
                (p * nodes.len() as f64).round() as usize
            }
        };
        nodes.shuffle(&mut rng);
        if nodes.len() < want {
            warnings.push(SplitWarning {
                what: format!("class {class}"),
                requested: want,
                available: nodes.len(),
            });
        }
        for &i in nodes.iter().take(want) {
            train.push(i);
            in_train[i] = true;
        }
    }
    let mut rest: Vec<usize> = (0..labels.len()).filter(|&i| !in_train[i]).collect();
    rest.shuffle(&mut rng);
    let (n_val, n_test) = match rate {
        LabelRate::PerClass(_) => (COUNT_MODE_VAL, COUNT_MODE_TEST),
        LabelRate::Fraction(_) => (rest.len() / 2, rest.len() - rest.len() / 2),
    };
    if rest.len() < n_val + n_test {
        warnings.push(SplitWarning {
            what: "validation+test pool".into(),
            requested: n_val + n_test,
            available: rest.len(),
        });
    }
    let n_val = n_val.min(rest.len());
    let val = rest[..n_val].to_vec();
    let test = rest[n_val..(n_val + n_test).min(rest.len())].to_vec();
    Ok(Split {
        train,
        val,
        test,
        rate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn toy_labels(n: usize, c: usize) -> Vec<usize> {
        (0..n).map(|i| (i * 7 + i / 3) % c).collect()
    }

    #[test]
    fn count_mode_sizes_and_disjointness() {
        let labels = toy_labels(2708, 7);
        let s = make_split(&labels, 7, LabelRate::PerClass(20), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (140, 500, 1000));
        let all: HashSet<_> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        assert_eq!(all.len(), 1640);
        for c in 0..7 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 20);
        }
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn one_per_class_on_toy() {
        let s = make_split(&[0, 1, 0, 1], 2, LabelRate::PerClass(1), 3).unwrap();
        assert_eq!(s.train.len(), 2);
        assert_eq!(s.val.len() + s.test.len(), 2);
        assert!(!s.warnings.is_empty());
    }

    #[test]
    fn fraction_mode_halves_remainder() {
        let labels = toy_labels(1000, 4);
        let s = make_split(&labels, 4, LabelRate::Fraction(0.3), 1).unwrap();
        assert_eq!(s.train.len(), 300);
        assert_eq!(s.val.len(), 350);
        assert_eq!(s.test.len(), 350);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let labels = toy_labels(500, 5);
        let a = make_split(&labels, 5, LabelRate::PerClass(10), 42).unwrap();
        assert_eq!(a, make_split(&labels, 5, LabelRate::PerClass(10), 42).unwrap());
        let trains: HashSet<Vec<usize>> = (0..10)
            .map(|s| {
                let mut t = make_split(&labels, 5, LabelRate::PerClass(10), s).unwrap().train;
                t.sort_unstable();
                t
            })
            .collect();
        assert_eq!(trains.len(), 10);
    }

    #[test]
    fn short_class_warns_and_takes_all() {
        let s = make_split(&[0, 0, 0, 1], 2, LabelRate::PerClass(2), 0).unwrap();
        assert_eq!(s.train.len(), 3);
        assert!(s.warnings.iter().any(|w| w.what == "class 1" && w.available == 1));
    }

    #[test]
    fn parses_rates() {
        assert_eq!("20".parse::<LabelRate>().unwrap(), LabelRate::PerClass(20));
        assert_eq!("30%".parse::<LabelRate>().unwrap(), LabelRate::Fraction(0.3));
        assert_eq!("0.6".parse::<LabelRate>().unwrap(), LabelRate::Fraction(0.6));
        assert!("abc".parse::<LabelRate>().is_err());
    }
}
