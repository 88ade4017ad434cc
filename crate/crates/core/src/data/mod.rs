//! Datasets on disk, split generation and a synthetic block-model generator.
//!
//! A dataset directory holds three files:
//!
//! * `edges.tsv`: `u<TAB>v[<TAB>w]` per undirected edge, 0-based ids.
//! * `features.txt` (header `n d`, then `n` rows of `d` numbers) or
//!   `features.bin` (see [`FEATURE_MAGIC`]).
//! * `labels.tsv`: `node<TAB>class` for every node. An optional
//!   `# classes: c` comment declares the class count.

mod convert;
mod sbm;
mod split;

pub use convert::{convert_geom_gcn, convert_linqs, ConvertReport, PLANETOID_RECIPE};
pub use sbm::{generate_sbm, SbmParams};
pub use split::{make_split, LabelRate, Split, SplitWarning};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{read_edge_list, write_edge_list, SparseGraph};
use crate::scalar::Real;

/// Binary feature layout, little-endian: magic, `u32` scalar width (4 or 8),
/// `u64` rows, `u64` cols, then row-major values.
pub const FEATURE_MAGIC: [u8; 8] = *b"ALTFEAT\x01";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub name: String,
    pub graph: SparseGraph<T>,
    pub features: DenseMatrix<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        graph: SparseGraph<T>,
        features: DenseMatrix<T>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let n = graph.n();
        if features.rows() != n || labels.len() != n {
            return Err(Error::Data(format!(
                "graph has {n} nodes but features have {} rows and labels cover {} nodes",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Dataset {
            name: name.into(),
            graph,
            features,
            labels,
            classes,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// One-hot `n x c` matrix of all labels.
    pub fn one_hot(&self) -> DenseMatrix<T> {
        let mut y = DenseMatrix::zeros(self.n(), self.classes);
        for (i, &l) in self.labels.iter().enumerate() {
            y.set(i, l, T::one());
        }
        y
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            name: self.name.clone(),
            graph: self.graph.cast(),
            features: self.features.cast(),
            labels: self.labels.clone(),
            classes: self.classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Scale each feature row to unit L1 norm (rows summing to zero stay zero).
    pub normalize_features: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            normalize_features: true,
        }
    }
}

pub fn l1_normalize_rows<T: Real>(x: &mut DenseMatrix<T>) {
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let total: T = row.iter().map(|v| v.abs()).sum();
        if total > T::zero() {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
}

/// Paths of the three dataset files inside `dir`, preferring a binary
/// feature file when both exist.
pub fn dataset_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let bin = dir.join("features.bin");
    let features = if bin.exists() { bin } else { dir.join("features.txt") };
    (dir.join("edges.tsv"), features, dir.join("labels.tsv"))
}

pub fn load_dataset<T: Real>(edge_path: &Path, feature_path: &Path, label_path: &Path, opts: LoadOptions) -> Result<Dataset<T>> {
    let mut features = read_features::<T>(feature_path)?;
    let n = features.rows();
    let (labels, declared) = read_labels(label_path)?;
    if labels.len() != n {
        return Err(Error::Data(format!(
            "{} has {n} feature rows but {} lists {} labels",
            feature_path.display(),
            label_path.display(),
            labels.len()
        )));
    }
    let edges = read_edge_list::<T>(edge_path)?;
    if edges.min_nodes() > n {
        return Err(Error::Data(format!(
            "{} references node {} but features have only {n} rows",
            edge_path.display(),
            edges.min_nodes() - 1
        )));
    }
    let graph = SparseGraph::from_weighted_edges(&edges.edges, n)?;
    if opts.normalize_features {
        l1_normalize_rows(&mut features);
    }
    let classes = declared.unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m + 1));
    let name = edge_path
        .parent()
        .and_then(|p| p.file_name())
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, graph, features, labels, classes)
}

pub fn load_dataset_dir<T: Real>(dir: &Path, opts: LoadOptions) -> Result<Dataset<T>> {
    let (e, f, l) = dataset_paths(dir);
    let mut ds = load_dataset(&e, &f, &l, opts)?;
    if let Some(name) = dir.file_name() {
        ds.name = name.to_string_lossy().into_owned();
    }
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Text,
    Binary,
}

/// Write `edges.tsv`, `labels.tsv` and the feature file into `dir`.
pub fn save_dataset<T: Real>(ds: &Dataset<T>, dir: &Path, format: FeatureFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_edge_list(&ds.graph, &dir.join("edges.tsv"))?;
    let mut labels = format!("# classes: {}\n", ds.classes);
    for (i, l) in ds.labels.iter().enumerate() {
        labels.push_str(&format!("{i}\t{l}\n"));
    }
    let lp = dir.join("labels.tsv");
    fs::write(&lp, labels).map_err(|e| Error::io(&lp, e))?;
    let (stale, fresh) = match format {
        FeatureFormat::Text => ("features.bin", "features.txt"),
        FeatureFormat::Binary => ("features.txt", "features.bin"),
    };
    let stale = dir.join(stale);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let path = dir.join(fresh);
    match format {
        FeatureFormat::Text => write_features_text(&ds.features, &path),
        FeatureFormat::Binary => write_features_binary(&ds.features, &path),
    }
}

pub fn read_features<T: Real>(path: &Path) -> Result<DenseMatrix<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&FEATURE_MAGIC) {
        return decode_features_binary(&bytes, path);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: "neither binary features nor UTF-8 text".into(),
    })?;
    parse_features_text(&text, path)
}

pub fn parse_features_text<T: Real>(text: &str, path: &Path) -> Result<DenseMatrix<T>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let (hline, header) = lines.next().ok_or_else(|| err(1, "missing `n d` header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| err(hline + 1, format!("bad header field `{s}`"))))
        .collect::<Result<_>>()?;
    let [n, d] = dims[..] else {
        return Err(err(hline + 1, format!("header needs 2 fields, found {}", dims.len())));
    };
    let mut values = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (lineno, line) in lines {
        if rows == n {
            return Err(Error::Data(format!("{}: more than the declared {n} rows", path.display())));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| err(lineno + 1, format!("bad number `{tok}`")))?;
            values.push(T::lit(v));
        }
        if values.len() - before != d {
            return Err(err(lineno + 1, format!("expected {d} values, found {}", values.len() - before)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Data(format!("{}: header declares {n} rows, found {rows}", path.display())));
    }
    DenseMatrix::from_vec(n, d, values)
}

fn decode_features_binary<T: Real>(bytes: &[u8], path: &Path) -> Result<DenseMatrix<T>> {
    let bad = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
    if bytes.len() < 28 {
        return Err(bad("truncated binary header"));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let d = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")) as usize;
    let body = &bytes[28..];
    let want = n.checked_mul(d).and_then(|c| c.checked_mul(width));
    if want != Some(body.len()) {
        return Err(bad(&format!("{n}x{d} values of {width} bytes do not match {} payload bytes", body.len())));
    }
    let values = match width {
        4 => body
            .chunks_exact(4)
            .map(|c| T::lit(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
            .collect(),
        8 => body
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect(),
        _ => return Err(bad(&format!("unsupported scalar width {width}"))),
    };
    DenseMatrix::from_vec(n, d, values)
}

/// Text features with shortest round-trip formatting of every value.
pub fn write_features_text<T: Real>(x: &DenseMatrix<T>, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(x.as_slice().len() * 4);
    out.push_str(&format!("{} {}\n", x.rows(), x.cols()));
    for row in x.row_iter() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&format!("{}", v.to_f64_lossless()));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary features with `T`'s native width.
pub fn write_features_binary<T: Real>(x: &DenseMatrix<T>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(28 + x.as_slice().len() * usize::from(T::BYTES));
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&u32::from(T::BYTES).to_le_bytes());
    out.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    for &v in x.as_slice() {
        v.to_le_bytes_vec(&mut out);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Labels indexed by node plus the declared class count, if any. Every node
/// id in `0..len` must appear exactly once.
pub fn read_labels(path: &Path) -> Result<(Vec<usize>, Option<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn parse_labels(text: &str, path: &Path) -> Result<(Vec<usize>, Option<usize>)> {
    let mut pairs = Vec::new();
    let mut declared = None;
    for (lineno, raw) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let trimmed = raw.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("classes:") {
                declared = Some(v.trim().parse().map_err(|_| err(format!("bad class count `{}`", v.trim())))?);
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(format!("expected `node<TAB>class`, found {} fields", fields.len())));
        }
        let node: usize = fields[0].parse().map_err(|_| err(format!("bad node id `{}`", fields[0])))?;
        let class: usize = fields[1].parse().map_err(|_| err(format!("bad class `{}`", fields[1])))?;
        pairs.push((node, class));
    }
    let n = pairs.len();
    let mut labels = vec![usize::MAX; n];
    for &(node, class) in &pairs {
        if node >= n || labels[node] != usize::MAX {
            return Err(Error::Data(format!(
                "{}: node ids must be 0..{n} each once (offending id {node})",
                path.display()
            )));
        }
        labels[node] = class;
    }
    if let (Some(c), Some(&m)) = (declared, labels.iter().max()) {
        if m >= c {
            return Err(Error::Data(format!("{}: class {m} with only {c} declared", path.display())));
        }
    }
    Ok((labels, declared))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_node_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "edges.tsv", "0\t1\n");
        let f = write(dir.path(), "features.txt", "2 3\n1 0 1\n0 2 2\n");
        let l = write(dir.path(), "labels.tsv", "# classes: 2\n0\t0\n1\t1\n");
        let ds: Dataset<f64> = load_dataset(&e, &f, &l, LoadOptions::default()).unwrap();
        assert_eq!((ds.n(), ds.graph.n_edges(), ds.feature_dim(), ds.classes), (2, 1, 3, 2));
        assert_eq!(ds.features.row(1), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn mismatched_counts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "edges.tsv", "0\t1\n");
        let f = write(dir.path(), "features.txt", "2 1\n1\n0\n");
        let l = write(dir.path(), "labels.tsv", "0\t0\n1\t1\n2\t0\n");
        let err = load_dataset::<f64>(&e, &f, &l, LoadOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2 feature rows") && msg.contains("3 labels"), "{msg}");
    }

    #[test]
    fn malformed_edge_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "edges.tsv", "0\t1\n\n1\t?\n");
        let f = write(dir.path(), "features.txt", "2 1\n1\n0\n");
        let l = write(dir.path(), "labels.tsv", "0\t0\n1\t1\n");
        match load_dataset::<f64>(&e, &f, &l, LoadOptions::default()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_both_formats() {
        let ds = generate_sbm::<f64>(&SbmParams {
            n: 40,
            classes: 3,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 5,
            feature_noise: 0.7,
            seed: 4,
        })
        .unwrap();
        let raw = LoadOptions {
            normalize_features: false,
        };
        for format in [FeatureFormat::Text, FeatureFormat::Binary] {
            let dir = tempfile::tempdir().unwrap();
            save_dataset(&ds, dir.path(), format).unwrap();
            let once: Dataset<f64> = load_dataset_dir(dir.path(), raw).unwrap();
            let again_dir = tempfile::tempdir().unwrap();
            save_dataset(&once, again_dir.path(), format).unwrap();
            let twice: Dataset<f64> = load_dataset_dir(again_dir.path(), raw).unwrap();
            assert_eq!(once.features, ds.features);
            assert_eq!(once.graph, ds.graph);
            assert_eq!(once.labels, ds.labels);
            assert_eq!((twice.graph, twice.features, twice.labels), (once.graph, once.features, once.labels));
        }
    }
}
