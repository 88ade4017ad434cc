//! Converters from common public dataset layouts into the native directory
//! format.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{save_dataset, Dataset, FeatureFormat};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Export recipe for the pickled Planetoid `ind.<name>.*` files.
pub const PLANETOID_RECIPE: &str = "\
Planetoid `ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}` files are Python
pickles. Convert them with the bundled script (needs numpy and scipy):

    python3 scripts/planetoid_export.py --raw <dir-with-ind-files> --name cora --out data/cora

The script follows the usual conventions: test rows are reordered by
`test.index`, CiteSeer's missing test ids are padded with zero features and
class 0, the graph dict is symmetrized and self-loops are dropped.
Features are written unnormalized; rows are L1-normalized on load unless
`normalize_features = false`.";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Finished conversion summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertReport {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    /// Edge lines whose endpoints were not listed among the nodes.
    pub dangling_edges: usize,
}

/// LINQS layout: `<name>.content` rows `id feat_1 .. feat_d label` and
/// `<name>.cites` rows `cited citing`. Node order follows the content file;
/// class ids follow the sorted label names.
pub fn convert_linqs(content: &Path, cites: &Path, out_dir: &Path) -> Result<ConvertReport> {
    let text = read(content)?;
    let mut ids = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: content.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        if fields.len() < 3 {
            return Err(err("need an id, features and a label".into()));
        }
        let feats = fields[1..fields.len() - 1]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad feature `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|r| r.len() != feats.len()) {
            return Err(err(format!("expected {} features, found {}", rows[0].len(), feats.len())));
        }
        if ids.insert(fields[0].to_string(), rows.len()).is_some() {
            return Err(err(format!("duplicate node id `{}`", fields[0])));
        }
        rows.push(feats);
        names.push(fields[fields.len() - 1].to_string());
    }
    let classes: Vec<&String> = names.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let class_of: HashMap<&String, usize> = classes.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let labels: Vec<usize> = names.iter().map(|s| class_of[s]).collect();

    let mut edges = Vec::new();
    let mut dangling = 0;
    for (lineno, line) in read(cites)?.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: cites.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected 2 ids, found {}", fields.len()),
            });
        }
        match (ids.get(fields[0]), ids.get(fields[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => dangling += 1,
        }
    }
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let features = DenseMatrix::from_vec(n, d, rows.into_iter().flatten().collect())?;
    let graph = SparseGraph::from_edges(&edges, n)?;
    let name = out_dir.file_name().map_or("linqs".into(), |s| s.to_string_lossy().into_owned());
    let ds = Dataset::new(name, graph, features, labels, classes.len())?;
    save_dataset(&ds, out_dir, FeatureFormat::Text)?;
    Ok(ConvertReport {
        nodes: n,
        edges: ds.graph.n_edges(),
        features: d,
        classes: ds.classes,
        dangling_edges: dangling,
    })
}

/// Geom-GCN layout: `out1_node_feature_label.txt` with a header and rows
/// `id<TAB>f1,f2,..<TAB>label`, and `out1_graph_edges.txt` with a header and
/// rows `u<TAB>v`.
pub fn convert_geom_gcn(nodes: &Path, edges_path: &Path, out_dir: &Path) -> Result<ConvertReport> {
    let text = read(nodes)?;
    let mut entries: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: nodes.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let id = fields[0].trim().parse().map_err(|_| err(format!("bad id `{}`", fields[0])))?;
        let feats = fields[1]
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| err(format!("bad feature `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let label = fields[2].trim().parse().map_err(|_| err(format!("bad label `{}`", fields[2])))?;
        entries.push((id, feats, label));
    }
    entries.sort_by_key(|e| e.0);
    if entries.iter().enumerate().any(|(i, e)| e.0 != i) {
        return Err(Error::Data(format!("{}: node ids are not 0..{}", nodes.display(), entries.len())));
    }
    let n = entries.len();
    let d = entries.first().map_or(0, |e| e.1.len());
    if entries.iter().any(|e| e.1.len() != d) {
        return Err(Error::Data(format!("{}: ragged feature rows", nodes.display())));
    }
    let labels: Vec<usize> = entries.iter().map(|e| e.2).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let features = DenseMatrix::from_vec(n, d, entries.into_iter().flat_map(|e| e.1).collect())?;

    let mut edges = Vec::new();
    let mut dangling = 0;
    for (lineno, line) in read(edges_path)?.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                path: edges_path.to_path_buf(),
                line: lineno + 1,
                msg: format!("bad node id `{s}`"),
            })
        };
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: edges_path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected 2 ids, found {}", fields.len()),
            });
        }
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        if u < n && v < n {
            edges.push((u, v));
        } else {
            dangling += 1;
        }
    }
    let graph = SparseGraph::from_edges(&edges, n)?;
    let name = out_dir.file_name().map_or("geom-gcn".into(), |s| s.to_string_lossy().into_owned());
    let ds = Dataset::new(name, graph, features, labels, classes)?;
    save_dataset(&ds, out_dir, FeatureFormat::Text)?;
    Ok(ConvertReport {
        nodes: n,
        edges: ds.graph.n_edges(),
        features: d,
        classes,
        dangling_edges: dangling,
    })
}
