use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{LabelRate, SbmParams};
use crate::error::{Error, Result};
use crate::trainer::{BaselineKind, Rounds, TrainConfig};

/// Keys that may carry value lists and expand into the grid, in expansion
/// order.
pub const GRID_KEYS: [&str; 17] = [
    "lambda1",
    "lambda2",
    "alpha",
    "tau",
    "layers",
    "diffusion_layers",
    "per_class",
    "pretrain_epochs",
    "epochs",
    "rounds",
    "rule",
    "loss",
    "lr",
    "weight_decay",
    "dropout",
    "hidden",
    "batch_size",
];

/// Scalar keys describing the data, the protocol and the output.
pub const PROTOCOL_KEYS: [&str; 16] = [
    "dataset",
    "normalize_features",
    "label_rate",
    "splits",
    "repeats",
    "seed",
    "method",
    "out",
    "deterministic",
    "sbm_n",
    "sbm_classes",
    "sbm_p_in",
    "sbm_p_out",
    "sbm_feature_dim",
    "sbm_noise",
    "sbm_seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Directory in the native layout.
    Dir(PathBuf),
    /// Generated block model.
    Sbm(SbmParams),
}

/// What a grid cell runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    AltOpt,
    Baseline(BaselineKind),
    /// Inductive protocol trained on the subgraph of the labeled nodes.
    Inductive,
}

impl std::str::FromStr for MethodSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "alt_opt" | "altopt" => Ok(MethodSpec::AltOpt),
            "inductive" => Ok(MethodSpec::Inductive),
            other => other.parse().map(MethodSpec::Baseline),
        }
    }
}

impl std::fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodSpec::AltOpt => f.write_str("alt_opt"),
            MethodSpec::Inductive => f.write_str("inductive"),
            MethodSpec::Baseline(k) => f.write_str(match k {
                BaselineKind::MlpOnly => "mlp_only",
                BaselineKind::LpOnly => "lp_only",
                BaselineKind::DiffusedMlp => "diffused_mlp",
                BaselineKind::MaskedLp => "masked_lp",
            }),
        }
    }
}

/// One fully specified grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    /// Values of the keys that were given as lists.
    pub varying: BTreeMap<String, String>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub normalize_features: bool,
    pub label_rates: Vec<LabelRate>,
    pub splits: usize,
    pub repeats: usize,
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    pub grid: Vec<GridCell>,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
}

fn bad(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

fn parse_one<V: std::str::FromStr>(field: &str, raw: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: V::Err| bad(field, format!("`{}`: {e}", raw.trim())))
}

fn parse_bool(field: &str, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(bad(field, format!("`{other}` is not a boolean"))),
    }
}

/// `key = v1, v2, ...` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("line {}", lineno + 1), format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim().to_string();
        if !GRID_KEYS.contains(&key.as_str()) && !PROTOCOL_KEYS.contains(&key.as_str()) {
            return Err(bad(&key, format!("unknown key on line {}", lineno + 1)));
        }
        if out.iter().any(|(k, _)| *k == key) {
            return Err(bad(&key, format!("repeated on line {}", lineno + 1)));
        }
        let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(bad(&key, "empty value"));
        }
        out.push((key, values));
    }
    Ok(out)
}

fn apply(config: &mut TrainConfig, key: &str, raw: &str) -> Result<()> {
    let h = &mut config.hyper;
    let s = &mut config.schedule;
    let o = &mut config.opt;
    match key {
        "lambda1" => h.lambda1 = parse_one(key, raw)?,
        "lambda2" => h.lambda2 = parse_one(key, raw)?,
        "alpha" => h.alpha = parse_one(key, raw)?,
        "tau" => h.tau = parse_one(key, raw)?,
        "layers" => h.layers = parse_one(key, raw)?,
        "diffusion_layers" => h.diffusion_layers = parse_one(key, raw)?,
        "per_class" => h.per_class = if raw == "auto" { None } else { Some(parse_one(key, raw)?) },
        "pretrain_epochs" => s.pretrain_epochs = parse_one(key, raw)?,
        "epochs" => s.epochs = parse_one(key, raw)?,
        "rounds" => s.rounds = parse_one::<Rounds>(key, raw)?,
        "rule" => s.rule = parse_one(key, raw)?,
        "loss" => o.loss = parse_one(key, raw)?,
        "lr" => o.lr = parse_one(key, raw)?,
        "weight_decay" => o.weight_decay = parse_one(key, raw)?,
        "dropout" => o.dropout = parse_one(key, raw)?,
        "hidden" => {
            o.hidden = if raw == "none" {
                Vec::new()
            } else {
                raw.split(['x', ':']).map(|w| parse_one(key, w)).collect::<Result<_>>()?
            }
        }
        "batch_size" => o.batch_size = if raw == "full" { None } else { Some(parse_one(key, raw)?) },
        _ => unreachable!("grid key list is closed"),
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_slice());
        let scalar = |k: &str| -> Result<Option<&str>> {
            match get(k) {
                None => Ok(None),
                Some([v]) => Ok(Some(v.as_str())),
                Some(_) => Err(bad(k, "takes a single value")),
            }
        };

        let dataset = match scalar("dataset")? {
            None => return Err(bad("dataset", "missing")),
            Some("sbm") => {
                let num = |k: &str, default: f64| -> Result<f64> { scalar(k)?.map_or(Ok(default), |v| parse_one(k, v)) };
                DatasetSpec::Sbm(SbmParams {
                    n: num("sbm_n", 600.0)? as usize,
                    classes: num("sbm_classes", 3.0)? as usize,
                    p_in: num("sbm_p_in", 0.05)?,
                    p_out: num("sbm_p_out", 0.01)?,
                    feature_dim: num("sbm_feature_dim", 16.0)? as usize,
                    feature_noise: num("sbm_noise", 1.0)?,
                    seed: num("sbm_seed", 0.0)? as u64,
                })
            }
            Some(dir) => DatasetSpec::Dir(PathBuf::from(dir)),
        };
        let label_rates = get("label_rate")
            .unwrap_or(&["20".to_string()])
            .iter()
            .map(|v| parse_one("label_rate", v))
            .collect::<Result<Vec<LabelRate>>>()?;
        let methods = get("method")
            .unwrap_or(&["alt_opt".to_string()])
            .iter()
            .map(|v| parse_one("method", v))
            .collect::<Result<Vec<MethodSpec>>>()?;
        let splits = scalar("splits")?.map_or(Ok(10), |v| parse_one("splits", v))?;
        let repeats = scalar("repeats")?.map_or(Ok(3), |v| parse_one("repeats", v))?;
        if splits == 0 || repeats == 0 {
            return Err(bad(if splits == 0 { "splits" } else { "repeats" }, "must be at least 1"));
        }

        let mut grid = vec![(BTreeMap::new(), TrainConfig::default())];
        for key in GRID_KEYS {
            let Some(values) = get(key) else { continue };
            let mut next = Vec::with_capacity(grid.len() * values.len());
            for (varying, base) in &grid {
                for v in values {
                    let mut c = base.clone();
                    apply(&mut c, key, v)?;
                    let mut varying: BTreeMap<String, String> = varying.clone();
                    if values.len() > 1 {
                        varying.insert(key.to_string(), v.clone());
                    }
                    next.push((varying, c));
                }
            }
            grid = next;
        }
        let grid = grid
            .into_iter()
            .enumerate()
            .map(|(index, (varying, config))| {
                config.validate()?;
                Ok(GridCell { index, varying, config })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(ExperimentConfig {
            dataset,
            normalize_features: scalar("normalize_features")?.map_or(Ok(true), |v| parse_bool("normalize_features", v))?,
            label_rates,
            splits,
            repeats,
            seed: scalar("seed")?.map_or(Ok(0), |v| parse_one("seed", v))?,
            methods,
            grid,
            out: scalar("out")?.map(PathBuf::from),
            deterministic: scalar("deterministic")?.map_or(Ok(false), |v| parse_bool("deterministic", v))?,
        })
    }

    /// Number of runs the experiment will execute.
    pub fn n_runs(&self) -> usize {
        self.grid.len() * self.methods.len() * self.label_rates.len() * self.splits * self.repeats
    }
}
