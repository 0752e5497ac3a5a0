//! Citation-network ingestion, feature normalization and split construction.
//!
//! Two text formats are supported:
//!
//! - the Cora/Citeseer layout: a content file with one
//!   `id feat_1 ... feat_d label` line per paper plus a cites file with one
//!   `cited citing` pair per line,
//! - the Pubmed tab layout: a NODE file with a two-line header followed by
//!   `pmid  label=<k>  w-term=<value>...` rows, and a DIRECTED cites file
//!   with `eid  paper:<pmid>  |  paper:<pmid>` rows.
//!
//! Node ids are arbitrary strings; indices are assigned by sorting the
//! original ids, so permuting input lines yields an isomorphic dataset.
//! Class labels are factorized in first-appearance (file) order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use manigraph_core::graph::Graph;
use manigraph_core::nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A loaded node-classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Dense n×d feature matrix (often sparse in content; the trainer picks
    /// a sparse representation when it pays off).
    pub features: DMatrix<f64>,
    /// Class index per node, in `[0, c)`.
    pub labels: Vec<usize>,
    pub graph: Graph,
    /// Original node identifiers, parallel to the node indices.
    pub names: Option<Vec<String>>,
    /// Class names in factorization order; `class_names.len()` is `c`.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn c(&self) -> usize {
        self.class_names.len()
    }

    /// Checks the structural invariants: finite features, consistent sizes,
    /// every class present at least once.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.features.nrows() != n || self.graph.n() != n {
            return Err(Error::Other(format!(
                "inconsistent dataset sizes: {} labels, {} feature rows, {} nodes",
                n,
                self.features.nrows(),
                self.graph.n()
            )));
        }
        if let Some(names) = &self.names {
            if names.len() != n {
                return Err(Error::Other("name list length mismatch".into()));
            }
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(manigraph_core::Error::NonFinite("dataset features").into());
        }
        let c = self.c();
        let mut seen = vec![false; c];
        for &l in &self.labels {
            if l >= c {
                return Err(Error::Other(format!("label {l} out of range for {c} classes")));
            }
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Other("a class has no member".into()));
        }
        Ok(())
    }
}

/// Train/validation/test node index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Split("train set is empty".into()));
        }
        let mut seen = vec![0u8; n];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set.iter() {
                if i >= n {
                    return Err(Error::Split(format!("{name} index {i} out of range for {n} nodes")));
                }
                if seen[i] != 0 {
                    return Err(Error::Split(format!("index {i} appears in two sets")));
                }
                seen[i] = 1;
            }
        }
        Ok(())
    }
}

/// Counters the loaders report alongside the dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    /// Citation lines referencing an id absent from the content file.
    pub dropped_edges: usize,
    /// Raw citation lines read (before symmetrization and deduplication).
    pub edge_lines: usize,
}

struct RawNodes {
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl RawNodes {
    /// Assembles the dataset pieces in the given (sorted-by-id) node order.
    fn finish(mut self, order: Vec<usize>) -> (DMatrix<f64>, Vec<usize>, Vec<String>, Vec<String>) {
        let n = self.ids.len();
        let d = self.features.first().map_or(0, Vec::len);
        let mut features = DMatrix::zeros(n, d);
        let mut labels = vec![0usize; n];
        let mut names = vec![String::new(); n];
        for (new_idx, &old_idx) in order.iter().enumerate() {
            for (j, &v) in self.features[old_idx].iter().enumerate() {
                features[(new_idx, j)] = v;
            }
            labels[new_idx] = self.labels[old_idx];
            names[new_idx] = std::mem::take(&mut self.ids[old_idx]);
        }
        (features, labels, names, self.class_names)
    }
}

/// Loads the Cora/Citeseer text layout.
///
/// Unknown citation endpoints are dropped (counted in the stats); malformed
/// lines (wrong column count, non-numeric features) and empty files are
/// errors.
pub fn load_citation_text(content_path: &Path, cites_path: &Path) -> Result<(Dataset, LoadStats)> {
    let content = fs::read_to_string(content_path).map_err(|e| Error::io(content_path, e))?;

    let mut raw = RawNodes {
        ids: Vec::new(),
        features: Vec::new(),
        labels: Vec::new(),
        class_names: Vec::new(),
    };
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::format(
                content_path,
                format!("line {}: expected id, features and label", lineno + 1),
            ));
        }
        let d = fields.len() - 2;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(Error::format(
                    content_path,
                    format!("line {}: {d} feature columns, expected {w}", lineno + 1),
                ));
            }
            _ => {}
        }
        let id = fields[0].to_string();
        let mut feats = Vec::with_capacity(d);
        for f in &fields[1..=d] {
            feats.push(f.parse::<f64>().map_err(|e| {
                Error::format(content_path, format!("line {}: bad feature value: {e}", lineno + 1))
            })?);
        }
        let label = fields[d + 1].to_string();
        let next = class_index.len();
        let class = *class_index.entry(label.clone()).or_insert(next);
        if class == raw.class_names.len() {
            raw.class_names.push(label);
        }
        raw.ids.push(id);
        raw.features.push(feats);
        raw.labels.push(class);
    }
    if raw.ids.is_empty() {
        return Err(Error::format(content_path, "empty content file"));
    }

    let mut order: Vec<usize> = (0..raw.ids.len()).collect();
    order.sort_by(|&a, &b| raw.ids[a].cmp(&raw.ids[b]));
    let mut id_to_index: HashMap<&str, usize> = HashMap::with_capacity(order.len());
    for (new_idx, &old_idx) in order.iter().enumerate() {
        if id_to_index.insert(raw.ids[old_idx].as_str(), new_idx).is_some() {
            return Err(Error::format(
                content_path,
                format!("duplicate node id {}", raw.ids[old_idx]),
            ));
        }
    }

    let cites = fs::read_to_string(cites_path).map_err(|e| Error::io(cites_path, e))?;
    let mut stats = LoadStats::default();
    let mut edges = Vec::new();
    for (lineno, line) in cites.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::format(
                cites_path,
                format!("line {}: expected two ids", lineno + 1),
            ));
        }
        stats.edge_lines += 1;
        match (id_to_index.get(fields[0]), id_to_index.get(fields[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b, None)),
            _ => stats.dropped_edges += 1,
        }
    }

    let n = order.len();
    let graph = Graph::from_edges(n, edges)?;
    let (features, labels, names, class_names) = raw.finish(order);
    let dataset = Dataset {
        features,
        labels,
        graph,
        names: Some(names),
        class_names,
    };
    dataset.validate()?;
    Ok((dataset, stats))
}

/// Loads the Pubmed NODE/cites tab layout.
pub fn load_pubmed_tab(node_path: &Path, cites_path: &Path) -> Result<(Dataset, LoadStats)> {
    let text = fs::read_to_string(node_path).map_err(|e| Error::io(node_path, e))?;
    let mut lines = text.lines().enumerate();
    lines
        .next()
        .ok_or_else(|| Error::format(node_path, "empty node file"))?;
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(node_path, "missing attribute header"))?;

    // Attribute header declares feature order: `numeric:<name>:0.0` tokens.
    let mut feature_index: HashMap<String, usize> = HashMap::new();
    for token in header.split_whitespace() {
        if let Some(rest) = token.strip_prefix("numeric:") {
            let name = rest.split(':').next().unwrap_or(rest);
            let next = feature_index.len();
            feature_index.entry(name.to_string()).or_insert(next);
        }
    }
    if feature_index.is_empty() {
        return Err(Error::format(node_path, "attribute header declares no numeric features"));
    }
    let d = feature_index.len();

    let mut raw = RawNodes {
        ids: Vec::new(),
        features: Vec::new(),
        labels: Vec::new(),
        class_names: Vec::new(),
    };
    let mut class_index: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields
            .next()
            .ok_or_else(|| Error::format(node_path, format!("line {}: missing id", lineno + 1)))?
            .to_string();
        let mut label: Option<String> = None;
        let mut feats = vec![0.0; d];
        for field in fields {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            if let Some(value) = field.strip_prefix("label=") {
                label = Some(value.to_string());
            } else if let Some((name, value)) = field.split_once('=') {
                if let Some(&j) = feature_index.get(name) {
                    feats[j] = value.parse::<f64>().map_err(|e| {
                        Error::format(node_path, format!("line {}: bad value for {name}: {e}", lineno + 1))
                    })?;
                }
                // Unknown attributes (e.g. summary=) are ignored.
            }
        }
        let label = label
            .ok_or_else(|| Error::format(node_path, format!("line {}: missing label", lineno + 1)))?;
        let next = class_index.len();
        let class = *class_index.entry(label.clone()).or_insert(next);
        if class == raw.class_names.len() {
            raw.class_names.push(label);
        }
        raw.ids.push(id);
        raw.features.push(feats);
        raw.labels.push(class);
    }
    if raw.ids.is_empty() {
        return Err(Error::format(node_path, "node file has no data rows"));
    }

    let mut order: Vec<usize> = (0..raw.ids.len()).collect();
    order.sort_by(|&a, &b| raw.ids[a].cmp(&raw.ids[b]));
    let mut id_to_index: HashMap<&str, usize> = HashMap::with_capacity(order.len());
    for (new_idx, &old_idx) in order.iter().enumerate() {
        if id_to_index.insert(raw.ids[old_idx].as_str(), new_idx).is_some() {
            return Err(Error::format(node_path, format!("duplicate node id {}", raw.ids[old_idx])));
        }
    }

    let cites = fs::read_to_string(cites_path).map_err(|e| Error::io(cites_path, e))?;
    let mut stats = LoadStats::default();
    let mut edges = Vec::new();
    for (lineno, line) in cites.lines().enumerate().skip(2) {
        if line.trim().is_empty() {
            continue;
        }
        let endpoints: Vec<&str> = line
            .split_whitespace()
            .filter_map(|tok| tok.strip_prefix("paper:"))
            .collect();
        if endpoints.len() != 2 {
            return Err(Error::format(
                cites_path,
                format!("line {}: expected two paper: endpoints", lineno + 1),
            ));
        }
        stats.edge_lines += 1;
        match (id_to_index.get(endpoints[0]), id_to_index.get(endpoints[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b, None)),
            _ => stats.dropped_edges += 1,
        }
    }

    let n = order.len();
    let graph = Graph::from_edges(n, edges)?;
    let (features, labels, names, class_names) = raw.finish(order);
    let dataset = Dataset {
        features,
        labels,
        graph,
        names: Some(names),
        class_names,
    };
    dataset.validate()?;
    Ok((dataset, stats))
}

/// Divides every row with a non-zero sum by that sum; zero rows pass through.
pub fn row_normalize(features: &mut DMatrix<f64>) {
    for mut row in features.row_iter_mut() {
        let sum: f64 = row.iter().sum();
        if sum != 0.0 {
            row /= sum;
        }
    }
}

/// Samples the standard semi-supervised protocol: `per_class_train` nodes per
/// class for training, then `n_val` validation and `n_test` test nodes from
/// the remainder.
pub fn make_planetoid_split<R: Rng + ?Sized>(
    labels: &[usize],
    per_class_train: usize,
    n_val: usize,
    n_test: usize,
    rng: &mut R,
) -> Result<Split> {
    let c = labels.iter().copied().max().map_or(0, |m| m + 1);
    if c == 0 {
        return Err(Error::Split("no labels".into()));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }

    let mut train = Vec::with_capacity(c * per_class_train);
    for (class, members) in per_class.iter_mut().enumerate() {
        if members.len() < per_class_train {
            return Err(Error::Split(format!(
                "class {class} has {} members, needs {per_class_train}",
                members.len()
            )));
        }
        let (chosen, _) = members.partial_shuffle(rng, per_class_train);
        train.extend_from_slice(chosen);
    }
    train.sort_unstable();

    let in_train: std::collections::HashSet<usize> = train.iter().copied().collect();
    let mut rest: Vec<usize> = (0..labels.len()).filter(|i| !in_train.contains(i)).collect();
    if rest.len() < n_val + n_test {
        return Err(Error::Split(format!(
            "not enough nodes left for validation and test: {} < {}",
            rest.len(),
            n_val + n_test
        )));
    }
    let (chosen, _) = rest.partial_shuffle(rng, n_val + n_test);
    let mut val: Vec<usize> = chosen[..n_val].to_vec();
    let mut test: Vec<usize> = chosen[n_val..].to_vec();
    val.sort_unstable();
    test.sort_unstable();

    let split = Split { train, val, test };
    split.validate(labels.len())?;
    Ok(split)
}

/// Reads a graph from the canonical edge-list text format.
pub fn read_edge_file(path: &Path, n: usize) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let edges = manigraph_core::graph::parse_edge_list(&text)?;
    Ok(Graph::from_edges(n, edges)?)
}
