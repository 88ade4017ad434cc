use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::RunRecord;
use crate::error::{Error, Result};

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate of the runs sharing `(method, label_rate, cell)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: String,
    pub label_rate: String,
    pub cell: usize,
    pub varying: BTreeMap<String, String>,
    pub runs: usize,
    pub test_mean: f64,
    pub test_std: f64,
    pub val_mean: f64,
    pub val_std: f64,
    pub wall_time_mean: f64,
}

/// Group records by `(dataset, method, label_rate, cell)` in first-seen order.
/// Accuracies are reported in percent.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.dataset.clone(), r.result.method.to_string(), r.label_rate.clone(), r.cell);
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let pct = |f: fn(&RunRecord) -> f64| rs.iter().map(|r| 100.0 * f(r)).collect::<Vec<_>>();
            let (test_mean, test_std) = mean_std(&pct(|r| r.result.test_accuracy_at_best_val));
            let (val_mean, val_std) = mean_std(&pct(|r| r.result.best_val_accuracy));
            let times: Vec<f64> = rs.iter().map(|r| r.result.wall_time_secs).collect();
            SummaryRow {
                dataset: key.0,
                method: key.1,
                label_rate: key.2,
                cell: key.3,
                varying: rs[0].varying.clone(),
                runs: rs.len(),
                test_mean,
                test_std,
                val_mean,
                val_std,
                wall_time_mean: mean_std(&times).0,
            }
        })
        .collect()
}

/// Per `(dataset, method, label_rate)`, the row with the highest mean
/// validation accuracy (lowest cell index on ties).
pub fn best_by_validation(rows: &[SummaryRow]) -> Vec<&SummaryRow> {
    let mut best: Vec<&SummaryRow> = Vec::new();
    for row in rows {
        match best
            .iter_mut()
            .find(|b| b.dataset == row.dataset && b.method == row.method && b.label_rate == row.label_rate)
        {
            Some(b) if row.val_mean > b.val_mean => *b = row,
            Some(_) => {}
            None => best.push(row),
        }
    }
    best
}

fn describe(varying: &BTreeMap<String, String>) -> String {
    if varying.is_empty() {
        return "-".into();
    }
    varying.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

/// Plain-text table of every row followed by the validation-selected cells.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:<13} {:>5} {:>4} {:>5}  {:>15}  {:>15}  {:>8}  params\n",
        "dataset", "method", "rate", "cell", "runs", "test %", "val %", "secs/run"
    ));
    let line = |r: &SummaryRow| {
        format!(
            "{:<14} {:<13} {:>5} {:>4} {:>5}  {:>7.2} ± {:<5.2}  {:>7.2} ± {:<5.2}  {:>8.2}  {}\n",
            r.dataset,
            r.method,
            r.label_rate,
            r.cell,
            r.runs,
            r.test_mean,
            r.test_std,
            r.val_mean,
            r.val_std,
            r.wall_time_mean,
            describe(&r.varying)
        )
    };
    for r in rows {
        out.push_str(&line(r));
    }
    let best = best_by_validation(rows);
    if rows.len() > best.len() {
        out.push_str("\nselected by mean validation accuracy:\n");
        for r in best {
            out.push_str(&line(r));
        }
    }
    out
}

pub fn write_record<W: Write>(out: &mut W, record: &RunRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
