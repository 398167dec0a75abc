//! Dataset ingestion from the on-disk text formats, synthetic fixture
//! generation, and checkpoint/report serialization.
//!
//! On-disk layout (all paths relative to the manifest):
//! - manifest: JSON with name, counts, and file names;
//! - edges file: one hyperedge per line, whitespace-separated zero-based
//!   node ids, `#` starts a comment;
//! - features file: one node per line, whitespace-separated decimal reals;
//! - labels file: `node_id<TAB>class_id`, one line per node, any order;
//! - optional weights file: one decimal per line, aligned with the edges.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{Hypergraph, HypergraphError};
use crate::rng::Rng64;
use crate::tensor::{DenseMatrix, Params, Tensor};
use crate::Real;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {path}")]
    FileNotFound { path: PathBuf },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{file}: expected {expected} {what}, found {got}")]
    ShapeMismatch {
        file: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{file}:{line}: {message}")]
    MalformedLine {
        file: String,
        line: usize,
        message: String,
    },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

/// Semi-supervised node-classification dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub hypergraph: Hypergraph,
    /// N-by-c bag-of-words style features.
    pub features: DenseMatrix,
    /// Length-N class ids in `[0, num_classes)`.
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.hypergraph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Warnings about classes too small for k-fold stratification.
    pub fn stratification_warnings(&self, k: usize) -> Vec<String> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c < k)
            .map(|(class, &c)| {
                format!("class {class} has only {c} nodes; {k}-fold stratification degenerates")
            })
            .collect()
    }
}

/// JSON manifest describing where a dataset's files live.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub edges_file: String,
    pub features_file: String,
    pub labels_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<String>,
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    if !path.exists() {
        return Err(DataError::FileNotFound {
            path: path.to_path_buf(),
        });
    }
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Lines with comments stripped, keeping 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            None
        } else {
            Some((i + 1, stripped))
        }
    })
}

fn parse_edges(path: &Path) -> Result<Vec<Vec<usize>>, DataError> {
    let text = read_to_string(path)?;
    let file = file_label(path);
    let mut edges = Vec::new();
    for (line, content) in content_lines(&text) {
        let mut edge = Vec::new();
        for token in content.split_whitespace() {
            let id: usize = token.parse().map_err(|_| DataError::MalformedLine {
                file: file.clone(),
                line,
                message: format!("'{token}' is not a node id"),
            })?;
            if edge.contains(&id) {
                return Err(DataError::MalformedLine {
                    file: file.clone(),
                    line,
                    message: format!("node id {id} repeated within the hyperedge"),
                });
            }
            edge.push(id);
        }
        if edge.len() < 2 {
            return Err(DataError::MalformedLine {
                file: file.clone(),
                line,
                message: format!("hyperedge has {} node(s); at least 2 required", edge.len()),
            });
        }
        edges.push(edge);
    }
    Ok(edges)
}

fn parse_features(path: &Path, num_nodes: usize) -> Result<DenseMatrix, DataError> {
    let text = read_to_string(path)?;
    let file = file_label(path);
    let mut rows: Vec<Vec<Real>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line, content) in content_lines(&text) {
        let mut row = Vec::new();
        for token in content.split_whitespace() {
            let v: Real = token.parse().map_err(|_| DataError::MalformedLine {
                file: file.clone(),
                line,
                message: format!("'{token}' is not a real number"),
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(DataError::MalformedLine {
                    file: file.clone(),
                    line,
                    message: format!("row has {} columns, expected {w}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.len() != num_nodes {
        return Err(DataError::ShapeMismatch {
            file,
            what: "feature rows",
            expected: num_nodes,
            got: rows.len(),
        });
    }
    Ok(DenseMatrix::from_rows(&rows))
}

fn parse_labels(
    path: &Path,
    num_nodes: usize,
    num_classes: usize,
) -> Result<Vec<usize>, DataError> {
    let text = read_to_string(path)?;
    let file = file_label(path);
    let mut labels = vec![usize::MAX; num_nodes];
    let mut count = 0usize;
    for (line, content) in content_lines(&text) {
        let mut it = content.split_whitespace();
        let (node, class) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(DataError::MalformedLine {
                    file: file.clone(),
                    line,
                    message: "expected 'node_id<TAB>class_id'".to_string(),
                });
            }
        };
        let node: usize = node.parse().map_err(|_| DataError::MalformedLine {
            file: file.clone(),
            line,
            message: format!("'{node}' is not a node id"),
        })?;
        let class: usize = class.parse().map_err(|_| DataError::MalformedLine {
            file: file.clone(),
            line,
            message: format!("'{class}' is not a class id"),
        })?;
        if node >= num_nodes {
            return Err(DataError::MalformedLine {
                file: file.clone(),
                line,
                message: format!("node id {node} out of range for {num_nodes} nodes"),
            });
        }
        if class >= num_classes {
            return Err(DataError::MalformedLine {
                file: file.clone(),
                line,
                message: format!("class id {class} out of range for {num_classes} classes"),
            });
        }
        if labels[node] != usize::MAX {
            return Err(DataError::MalformedLine {
                file: file.clone(),
                line,
                message: format!("node {node} labeled twice"),
            });
        }
        labels[node] = class;
        count += 1;
    }
    if count != num_nodes {
        return Err(DataError::ShapeMismatch {
            file,
            what: "label entries",
            expected: num_nodes,
            got: count,
        });
    }
    Ok(labels)
}

fn parse_weights(path: &Path, num_edges: usize) -> Result<Vec<Real>, DataError> {
    let text = read_to_string(path)?;
    let file = file_label(path);
    let mut weights = Vec::new();
    for (line, content) in content_lines(&text) {
        let v: Real = content.parse().map_err(|_| DataError::MalformedLine {
            file: file.clone(),
            line,
            message: format!("'{content}' is not a real number"),
        })?;
        weights.push(v);
    }
    if weights.len() != num_edges {
        return Err(DataError::ShapeMismatch {
            file,
            what: "weights",
            expected: num_edges,
            got: weights.len(),
        });
    }
    Ok(weights)
}

/// Load and validate a dataset from a manifest path.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, DataError> {
    let text = read_to_string(manifest_path)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| DataError::Manifest {
            path: manifest_path.to_path_buf(),
            source,
        })?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let edges = parse_edges(&dir.join(&manifest.edges_file))?;
    let weights = match &manifest.weights_file {
        Some(f) => Some(parse_weights(&dir.join(f), edges.len())?),
        None => None,
    };
    let hypergraph = Hypergraph::from_edge_list(edges, manifest.num_nodes, weights)?;
    let features = parse_features(&dir.join(&manifest.features_file), manifest.num_nodes)?;
    let labels = parse_labels(
        &dir.join(&manifest.labels_file),
        manifest.num_nodes,
        manifest.num_classes,
    )?;
    Ok(Dataset {
        name: manifest.name,
        hypergraph,
        features,
        labels,
        num_classes: manifest.num_classes,
    })
}

fn write_file(path: &Path, content: &str) -> Result<(), DataError> {
    fs::write(path, content).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a dataset into `dir` in the on-disk format and return the manifest
/// path. Floats are printed with the shortest round-tripping representation,
/// so load(write(ds)) reproduces the dataset exactly.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut edges = String::new();
    for edge in ds.hypergraph.hyperedges() {
        let ids: Vec<String> = edge.iter().map(|v| v.to_string()).collect();
        edges.push_str(&ids.join(" "));
        edges.push('\n');
    }
    write_file(&dir.join("edges.txt"), &edges)?;

    let mut features = String::new();
    for i in 0..ds.features.rows() {
        let vals: Vec<String> = ds.features.row(i).iter().map(|v| format!("{v}")).collect();
        features.push_str(&vals.join("\t"));
        features.push('\n');
    }
    write_file(&dir.join("features.tsv"), &features)?;

    let mut labels = String::new();
    for (i, l) in ds.labels.iter().enumerate() {
        labels.push_str(&format!("{i}\t{l}\n"));
    }
    write_file(&dir.join("labels.tsv"), &labels)?;

    let unit_weights = ds.hypergraph.weights().iter().all(|&w| w == 1.0);
    let weights_file = if unit_weights {
        None
    } else {
        let mut weights = String::new();
        for w in ds.hypergraph.weights() {
            weights.push_str(&format!("{w}\n"));
        }
        write_file(&dir.join("weights.txt"), &weights)?;
        Some("weights.txt".to_string())
    };

    let manifest = DatasetManifest {
        name: ds.name.clone(),
        num_nodes: ds.num_nodes(),
        num_classes: ds.num_classes,
        edges_file: "edges.txt".to_string(),
        features_file: "features.tsv".to_string(),
        labels_file: "labels.tsv".to_string(),
        weights_file,
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, &json)?;
    Ok(manifest_path)
}

/// Parameters for the synthetic community fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub name: String,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub edges_per_class: usize,
    pub edge_size: usize,
    /// Amplitude of the uniform feature noise: each entry is perturbed by a
    /// draw from [-noise, noise].
    pub noise: Real,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            name: "synthetic".to_string(),
            num_nodes: 60,
            num_classes: 3,
            edges_per_class: 20,
            edge_size: 4,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Generate a community hypergraph: classes are assigned round-robin,
/// each class gets `edges_per_class` hyperedges sampled from its members,
/// and cross-class edges amounting to 10% of the intra-class count are
/// added as structural noise. Features are class-indicator basis vectors
/// plus uniform noise.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, DataError> {
    if cfg.num_nodes == 0 || cfg.num_classes == 0 || cfg.edges_per_class == 0 {
        return Err(DataError::InvalidParameters(
            "num_nodes, num_classes, edges_per_class must be positive".to_string(),
        ));
    }
    if cfg.edge_size < 2 {
        return Err(DataError::InvalidParameters(
            "edge_size must be at least 2".to_string(),
        ));
    }
    if cfg.noise < 0.0 {
        return Err(DataError::InvalidParameters(
            "noise must be non-negative".to_string(),
        ));
    }
    let (n, c) = (cfg.num_nodes, cfg.num_classes);
    let members: Vec<Vec<usize>> = (0..c)
        .map(|class| (0..n).filter(|i| i % c == class).collect())
        .collect();
    if let Some(class) = members.iter().position(|m| m.len() < cfg.edge_size) {
        return Err(DataError::InvalidParameters(format!(
            "class {class} has {} nodes, fewer than edge_size {}",
            members[class].len(),
            cfg.edge_size
        )));
    }

    let mut rng = Rng64::new(cfg.seed);
    let mut edges = Vec::new();
    for class_members in &members {
        for _ in 0..cfg.edges_per_class {
            let pick = rng.sample_distinct(class_members.len(), cfg.edge_size);
            let mut edge: Vec<usize> = pick.into_iter().map(|i| class_members[i]).collect();
            edge.sort_unstable();
            edges.push(edge);
        }
    }
    // Cross-class edges: 10% of the intra-class edge count, at least one.
    let num_cross = (c * cfg.edges_per_class / 10).max(1);
    for _ in 0..num_cross {
        loop {
            let mut edge = rng.sample_distinct(n, cfg.edge_size);
            edge.sort_unstable();
            let first_class = edge[0] % c;
            if edge.iter().any(|&v| v % c != first_class) {
                edges.push(edge);
                break;
            }
        }
    }
    let hypergraph = Hypergraph::from_edge_list(edges, n, None)?;

    let mut features = vec![0.0; n * c];
    for i in 0..n {
        features[i * c + (i % c)] = 1.0;
        for j in 0..c {
            features[i * c + j] += cfg.noise * rng.range(-1.0, 1.0);
        }
    }
    Ok(Dataset {
        name: cfg.name.clone(),
        hypergraph,
        features: DenseMatrix::new(n, c, features),
        labels: (0..n).map(|i| i % c).collect(),
        num_classes: c,
    })
}

/// Write parameters as text records: `name<TAB>rows<TAB>cols<TAB>values...`,
/// row-major, shortest round-tripping decimal.
pub fn write_checkpoint(params: &Params, path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for (name, t) in params.iter() {
        let vals: Vec<String> = t.data().iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!(
            "{name}\t{}\t{}\t{}\n",
            t.rows(),
            t.cols(),
            vals.join(" ")
        ));
    }
    write_file(path, &out)
}

/// Read parameters back from [`write_checkpoint`]'s format.
pub fn read_checkpoint(path: &Path) -> Result<Params, DataError> {
    let text = read_to_string(path)?;
    let file = file_label(path);
    let mut params = Params::new();
    for (line, content) in content_lines(&text) {
        let mut parts = content.splitn(4, '\t');
        let bad_line = |message: String| DataError::MalformedLine {
            file: file.clone(),
            line,
            message,
        };
        let name = parts
            .next()
            .ok_or_else(|| bad_line("missing name".to_string()))?;
        let rows: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad_line("missing or invalid row count".to_string()))?;
        let cols: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad_line("missing or invalid column count".to_string()))?;
        let values_str = parts
            .next()
            .ok_or_else(|| bad_line("missing values".to_string()))?;
        let mut values = Vec::with_capacity(rows * cols);
        for token in values_str.split_whitespace() {
            let v: Real = token
                .parse()
                .map_err(|_| bad_line(format!("'{token}' is not a real number")))?;
            values.push(v);
        }
        if values.len() != rows * cols {
            return Err(bad_line(format!(
                "expected {} values for {rows}x{cols}, found {}",
                rows * cols,
                values.len()
            )));
        }
        params.insert(name, Tensor::from_vec(rows, cols, values));
    }
    Ok(params)
}
