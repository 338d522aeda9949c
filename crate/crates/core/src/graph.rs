//! Labeled graphs, graph datasets, and dataset ingestion.
//!
//! Two on-disk formats are supported: the TU benchmark layout
//! (`<name>_A.txt`, `<name>_graph_indicator.txt`, ...) and a JSON-lines
//! format with one graph per line. Node labels are kept as opaque strings.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node-labeled graph with dense node ids `0..num_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub graph_id: usize,
    labels: Vec<String>,
    /// Undirected graphs store pairs as `(min, max)`; directed graphs store `(from, to)`.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    directed: bool,
    class_label: Option<String>,
    /// Original (source file) ids of every node, used in diagnostics.
    source_ids: Vec<usize>,
}

impl Graph {
    /// Builds an undirected graph. Parallel edges collapse, self-loops are kept.
    pub fn new(
        graph_id: usize,
        labels: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        class_label: Option<String>,
    ) -> Result<Self> {
        Self::build(graph_id, labels, edges, class_label, false)
    }

    /// Builds a directed graph; `neighbors` then yields out-neighbours.
    pub fn new_directed(
        graph_id: usize,
        labels: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        class_label: Option<String>,
    ) -> Result<Self> {
        Self::build(graph_id, labels, edges, class_label, true)
    }

    /// Builds an undirected graph whose nodes are labeled by their degree.
    pub fn unlabeled(
        graph_id: usize,
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        class_label: Option<String>,
    ) -> Result<Self> {
        let g = Self::new(graph_id, vec![String::new(); num_nodes], edges, class_label)?;
        Ok(degree_relabel(&g))
    }

    fn build(
        graph_id: usize,
        labels: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        class_label: Option<String>,
        directed: bool,
    ) -> Result<Self> {
        let n = labels.len();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::Bounds {
                        what: "edge endpoint",
                        index: w,
                        len: n,
                    });
                }
            }
            if directed {
                set.insert((u, v));
            } else {
                set.insert((u.min(v), u.max(v)));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            if !directed && u != v {
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            graph_id,
            labels,
            edges,
            adjacency,
            directed,
            class_label,
            source_ids: (0..n).collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Result<&str> {
        self.labels.get(v).map(String::as_str).ok_or(Error::Bounds {
            what: "node id",
            index: v,
            len: self.labels.len(),
        })
    }

    pub fn class_label(&self) -> Option<&str> {
        self.class_label.as_deref()
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    /// Ascending list of nodes adjacent to `v` (out-neighbours when directed).
    pub fn neighbors(&self, v: usize) -> Result<&[usize]> {
        self.adjacency.get(v).map(Vec::as_slice).ok_or(Error::Bounds {
            what: "node id",
            index: v,
            len: self.adjacency.len(),
        })
    }

    /// Number of edge endpoints incident to `v`; a self-loop counts twice.
    pub fn degree(&self, v: usize) -> usize {
        if self.directed {
            return self
                .edges
                .iter()
                .map(|&(a, b)| usize::from(a == v) + usize::from(b == v))
                .sum();
        }
        let adj = &self.adjacency[v];
        adj.len() + usize::from(adj.binary_search(&v).is_ok())
    }

    /// Returns a copy with node ids permuted: node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::Argument(format!(
                "permutation has length {} for a graph of {n} nodes",
                perm.len()
            )));
        }
        let mut labels = vec![String::new(); n];
        let mut seen = vec![false; n];
        for (v, &p) in perm.iter().enumerate() {
            if p >= n || seen[p] {
                return Err(Error::Argument("not a permutation".into()));
            }
            seen[p] = true;
            labels[p] = self.labels[v].clone();
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        Self::build(self.graph_id, labels, edges, self.class_label.clone(), self.directed)
    }

    fn with_source_ids(mut self, ids: Vec<usize>) -> Self {
        debug_assert_eq!(ids.len(), self.labels.len());
        self.source_ids = ids;
        self
    }
}

/// Relabels every node with the decimal string of its degree.
pub fn degree_relabel(g: &Graph) -> Graph {
    let mut out = g.clone();
    out.labels = (0..g.num_nodes()).map(|v| g.degree(v).to_string()).collect();
    out
}

/// A named collection of graphs with dense ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphDataset {
    pub name: String,
    graphs: Vec<Graph>,
    label_alphabet: BTreeSet<String>,
    class_alphabet: BTreeSet<String>,
}

impl GraphDataset {
    /// Renumbers graph ids densely in input order.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut graphs = graphs;
        let mut label_alphabet = BTreeSet::new();
        let mut class_alphabet = BTreeSet::new();
        for (i, g) in graphs.iter_mut().enumerate() {
            g.graph_id = i;
            label_alphabet.extend(g.labels.iter().cloned());
            if let Some(c) = &g.class_label {
                class_alphabet.insert(c.clone());
            }
        }
        Ok(GraphDataset {
            name: name.into(),
            graphs,
            label_alphabet,
            class_alphabet,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn label_alphabet(&self) -> &BTreeSet<String> {
        &self.label_alphabet
    }

    pub fn class_alphabet(&self) -> &BTreeSet<String> {
        &self.class_alphabet
    }

    /// Class label of every graph; graphs without one map to the empty string.
    pub fn class_labels(&self) -> Vec<String> {
        self.graphs
            .iter()
            .map(|g| g.class_label.clone().unwrap_or_default())
            .collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.graphs.iter().map(Graph::num_nodes).sum()
    }

    pub fn mean_nodes(&self) -> f64 {
        self.total_nodes() as f64 / self.graphs.len() as f64
    }
}

/// Ingestion switches shared by both loaders.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub directed: bool,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            out.push((i + 1, trimmed.to_string()));
        }
    }
    Ok(out)
}

fn parse_index(path: &Path, line: usize, token: &str) -> Result<usize> {
    token
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::format(path, line, format!("expected a non-negative integer, got {token:?}")))
}

fn require_file(dir: &Path, name: &str, suffix: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{name}_{suffix}"));
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::format(path, 0, "mandatory file is missing"))
    }
}

/// Loads a dataset stored in the TU benchmark layout.
pub fn load_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<GraphDataset> {
    load_tu_dataset_with(dir, name, LoadOptions::default())
}

pub fn load_tu_dataset_with(dir: impl AsRef<Path>, name: &str, opts: LoadOptions) -> Result<GraphDataset> {
    let dir = dir.as_ref();
    let a_path = require_file(dir, name, "A.txt")?;
    let ind_path = require_file(dir, name, "graph_indicator.txt")?;
    let gl_path = require_file(dir, name, "graph_labels.txt")?;
    let nl_path = dir.join(format!("{name}_node_labels.txt"));

    let indicator: Vec<usize> = read_lines(&ind_path)?
        .iter()
        .map(|(ln, s)| parse_index(&ind_path, *ln, s))
        .collect::<Result<_>>()?;
    if indicator.is_empty() {
        return Err(Error::EmptyDataset);
    }

    // Distinct indicator values in ascending order become graphs 0..n.
    let distinct: BTreeSet<usize> = indicator.iter().copied().collect();
    let graph_index: std::collections::HashMap<usize, usize> =
        distinct.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let n_graphs = distinct.len();

    // Global node id (1-based) -> (graph, local id).
    let mut local = Vec::with_capacity(indicator.len());
    let mut sizes = vec![0usize; n_graphs];
    let mut source_ids = vec![Vec::new(); n_graphs];
    for (i, gid) in indicator.iter().enumerate() {
        let g = graph_index[gid];
        local.push((g, sizes[g]));
        sizes[g] += 1;
        source_ids[g].push(i + 1);
    }

    let node_labels: Option<Vec<String>> = if nl_path.is_file() {
        let lines = read_lines(&nl_path)?;
        if lines.len() != indicator.len() {
            return Err(Error::format(
                &nl_path,
                0,
                format!("{} node labels for {} nodes", lines.len(), indicator.len()),
            ));
        }
        Some(lines.into_iter().map(|(_, s)| s).collect())
    } else {
        None
    };

    let class_lines = read_lines(&gl_path)?;
    if class_lines.len() != n_graphs {
        return Err(Error::format(
            &gl_path,
            0,
            format!("{} graph labels for {n_graphs} graphs", class_lines.len()),
        ));
    }

    let mut edges = vec![Vec::new(); n_graphs];
    for (ln, s) in read_lines(&a_path)? {
        let mut parts = s.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::format(&a_path, ln, format!("expected `i, j`, got {s:?}")));
        };
        let a = parse_index(&a_path, ln, a)?;
        let b = parse_index(&a_path, ln, b)?;
        let lookup = |x: usize| {
            x.checked_sub(1)
                .and_then(|i| local.get(i))
                .copied()
                .ok_or_else(|| Error::format(&a_path, ln, format!("edge references unknown node {x}")))
        };
        let (ga, la) = lookup(a)?;
        let (gb, lb) = lookup(b)?;
        if ga != gb {
            return Err(Error::format(&a_path, ln, format!("edge {a}, {b} crosses graphs")));
        }
        edges[ga].push((la, lb));
    }

    let mut labels_per_graph: Vec<Vec<String>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (i, &(g, _)) in local.iter().enumerate() {
        let label = node_labels.as_ref().map(|l| l[i].clone()).unwrap_or_default();
        labels_per_graph[g].push(label);
    }

    let mut graphs = Vec::with_capacity(n_graphs);
    for (g, ((labels, edge_list), (_, class))) in labels_per_graph.into_iter().zip(edges).zip(class_lines).enumerate() {
        let graph = Graph::build(g, labels, edge_list, Some(class), opts.directed)?
            .with_source_ids(std::mem::take(&mut source_ids[g]));
        graphs.push(if node_labels.is_some() {
            graph
        } else {
            degree_relabel(&graph)
        });
    }
    GraphDataset::new(name, graphs)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonGraph {
    edges: Vec<[usize; 2]>,
    node_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<serde_json::Value>,
}

/// Loads a JSON-lines dataset; the dataset name is the file stem.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<GraphDataset> {
    load_jsonl_with(path, LoadOptions::default())
}

pub fn load_jsonl_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<GraphDataset> {
    let path = path.as_ref();
    let mut graphs = Vec::new();
    for (ln, line) in read_lines(path)? {
        let parsed: JsonGraph =
            serde_json::from_str(&line).map_err(|e| Error::format(path, ln, format!("malformed graph: {e}")))?;
        let class = match parsed.class {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(serde_json::Value::Number(n)) => Some(n.to_string()),
            Some(other) => return Err(Error::format(path, ln, format!("unsupported class value {other}"))),
        };
        let edges = parsed.edges.iter().map(|&[a, b]| (a, b));
        let g = Graph::build(graphs.len(), parsed.node_labels, edges, class, opts.directed)
            .map_err(|e| Error::format(path, ln, e.to_string()))?;
        graphs.push(g);
    }
    if graphs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    GraphDataset::new(name, graphs)
}

/// Writes a dataset in the JSON-lines format read by [`load_jsonl`].
pub fn write_jsonl(ds: &GraphDataset, mut out: impl Write) -> std::io::Result<()> {
    for g in ds.graphs() {
        let record = JsonGraph {
            edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
            node_labels: g.labels.clone(),
            class: g.class_label.clone().map(serde_json::Value::String),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
