//! Weisfeiler-Lehman rooted-subgraph extraction and the subgraph vocabulary.
//!
//! The degree-`d` subgraph rooted at `v` is encoded as the degree-`d-1`
//! encoding of `v` followed by the sorted, comma-joined degree-`d-1`
//! encodings of its neighbours in parentheses:
//!
//! ```text
//! enc(v, 0) = label(v)
//! enc(v, d) = enc(v, d-1) "(" join(",", sort([enc(u, d-1) for u in N(v)])) ")"
//! ```
//!
//! Labels are backslash-escaped so the delimiters stay unambiguous. In
//! [`Encoding::Compressed`] mode the level-`d-1` encodings are replaced by
//! short tokens (`#<d-1>:<rank>`) before building level `d`, which keeps
//! encodings linear in size while inducing exactly the same partition of
//! `(graph, node, degree)` occurrences.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};

/// Token used in compressed mode for a subgraph missing from the vocabulary.
const UNSEEN_TOKEN: &str = "#?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Full,
    Compressed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalSubgraph {
    pub canonical: String,
    pub degree: usize,
}

/// Escapes the encoding delimiters (and line breaks) inside a node label.
pub fn escape_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            '\\' | '(' | ')' | ',' | '#' => {
                out.push('\\');
                out.push(c);
            }
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out
}

fn relabel(g: &Graph, prev: &[String]) -> Vec<String> {
    (0..g.num_nodes())
        .map(|v| {
            let nbrs = g.neighbors(v).expect("node ids are dense");
            let mut children: Vec<&str> = nbrs.iter().map(|&u| prev[u].as_str()).collect();
            children.sort_unstable();
            let len = prev[v].len() + 2 + children.iter().map(|c| c.len() + 1).sum::<usize>();
            let mut key = String::with_capacity(len);
            key.push_str(&prev[v]);
            key.push('(');
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    key.push(',');
                }
                key.push_str(c);
            }
            key.push(')');
            key
        })
        .collect()
}

fn base_level(g: &Graph) -> Vec<String> {
    g.labels().iter().map(|l| escape_label(l)).collect()
}

/// Full (uncompressed) encodings of every node for degrees `0..=max_degree`,
/// indexed as `levels[d][v]`.
pub fn wl_levels(g: &Graph, max_degree: usize) -> Vec<Vec<String>> {
    let mut levels = Vec::with_capacity(max_degree + 1);
    levels.push(base_level(g));
    for d in 1..=max_degree {
        let next = relabel(g, &levels[d - 1]);
        levels.push(next);
    }
    levels
}

/// Canonical degree-`d` rooted subgraph around `v`.
pub fn get_wl_subgraph(v: usize, g: &Graph, d: usize) -> Result<CanonicalSubgraph> {
    if v >= g.num_nodes() {
        return Err(Error::Bounds {
            what: "node id",
            index: v,
            len: g.num_nodes(),
        });
    }
    let mut levels = wl_levels(g, d);
    Ok(CanonicalSubgraph {
        canonical: levels.pop().expect("at least level 0").swap_remove(v),
        degree: d,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub canonical: String,
    pub degree: usize,
    pub frequency: u64,
}

/// Interning table from canonical subgraph encodings to dense ids.
///
/// Ids follow ascending byte order of the canonical strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphVocab {
    entries: Vec<VocabEntry>,
    index: HashMap<String, usize>,
    /// Position of each entry among the entries of the same degree.
    level_rank: Vec<usize>,
    max_degree: usize,
    encoding: Encoding,
}

/// Vocabulary ids of every node's subgraphs, `ids[d][v]`; `None` when unseen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSubgraphs {
    ids: Vec<Vec<Option<usize>>>,
}

impl GraphSubgraphs {
    pub fn get(&self, v: usize, d: usize) -> Option<usize> {
        self.ids.get(d).and_then(|level| level.get(v)).copied().flatten()
    }

    pub fn level(&self, d: usize) -> &[Option<usize>] {
        &self.ids[d]
    }

    pub fn max_degree(&self) -> usize {
        self.ids.len() - 1
    }

    pub fn counts(&self) -> BTreeMap<usize, u64> {
        let mut counts = BTreeMap::new();
        for id in self.ids.iter().flatten().flatten() {
            *counts.entry(*id).or_insert(0) += 1;
        }
        counts
    }
}

fn compressed_token(degree: usize, rank: usize) -> String {
    format!("#{degree}:{rank}")
}

impl SubgraphVocab {
    pub fn build(ds: &GraphDataset, max_degree: usize) -> Result<Self> {
        Self::build_with(ds, max_degree, Encoding::Full)
    }

    pub fn build_with(ds: &GraphDataset, max_degree: usize, encoding: Encoding) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut counts: HashMap<String, (usize, u64)> = HashMap::new();
        let mut tally = |keys: &[Vec<String>], d: usize| {
            for k in keys.iter().flatten() {
                counts.entry(k.clone()).or_insert((d, 0)).1 += 1;
            }
        };

        let mut tokens: Vec<Vec<String>> = ds.graphs().par_iter().map(base_level).collect();
        tally(&tokens, 0);
        for d in 1..=max_degree {
            let keys: Vec<Vec<String>> = ds
                .graphs()
                .par_iter()
                .zip(tokens.par_iter())
                .map(|(g, prev)| relabel(g, prev))
                .collect();
            tally(&keys, d);
            tokens = match encoding {
                Encoding::Full => keys,
                Encoding::Compressed => {
                    let mut distinct: Vec<&String> = keys.iter().flatten().collect();
                    distinct.sort_unstable();
                    distinct.dedup();
                    let rank: HashMap<&str, usize> =
                        distinct.iter().enumerate().map(|(r, k)| (k.as_str(), r)).collect();
                    keys.iter()
                        .map(|ks| ks.iter().map(|k| compressed_token(d, rank[k.as_str()])).collect())
                        .collect()
                }
            };
        }

        let mut entries: Vec<VocabEntry> = counts
            .into_iter()
            .map(|(canonical, (degree, frequency))| VocabEntry {
                canonical,
                degree,
                frequency,
            })
            .collect();
        entries.sort_unstable_by(|a, b| a.canonical.cmp(&b.canonical));
        Ok(Self::from_sorted_entries(entries, max_degree, encoding))
    }

    fn from_sorted_entries(entries: Vec<VocabEntry>, max_degree: usize, encoding: Encoding) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.canonical.clone(), i))
            .collect();
        let mut per_degree = vec![0usize; max_degree + 1];
        let level_rank = entries
            .iter()
            .map(|e| {
                let r = per_degree[e.degree];
                per_degree[e.degree] += 1;
                r
            })
            .collect();
        SubgraphVocab {
            entries,
            index,
            level_rank,
            max_degree,
            encoding,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn entry(&self, id: usize) -> Option<&VocabEntry> {
        self.entries.get(id)
    }

    pub fn id(&self, canonical: &str) -> Option<usize> {
        self.index.get(canonical).copied()
    }

    pub fn degree(&self, id: usize) -> usize {
        self.entries[id].degree
    }

    pub fn frequencies(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.frequency)
    }

    pub fn total_frequency(&self) -> u64 {
        self.frequencies().sum()
    }

    /// Looks up every `(v, d)` subgraph of `g` for `d` up to the vocabulary's degree.
    pub fn index_graph(&self, g: &Graph) -> GraphSubgraphs {
        let lookup = |key: &str, d: usize| self.id(key).filter(|&id| self.entries[id].degree == d);
        let mut tokens = base_level(g);
        let mut ids = Vec::with_capacity(self.max_degree + 1);
        ids.push(tokens.iter().map(|k| lookup(k, 0)).collect::<Vec<_>>());
        for d in 1..=self.max_degree {
            let keys = relabel(g, &tokens);
            let level: Vec<Option<usize>> = keys.iter().map(|k| lookup(k, d)).collect();
            tokens = match self.encoding {
                Encoding::Full => keys,
                Encoding::Compressed => level
                    .iter()
                    .map(|id| match id {
                        Some(id) => compressed_token(d, self.level_rank[*id]),
                        None => UNSEEN_TOKEN.to_string(),
                    })
                    .collect(),
            };
            ids.push(level);
        }
        GraphSubgraphs { ids }
    }

    pub fn index_dataset(&self, ds: &GraphDataset) -> Vec<GraphSubgraphs> {
        ds.graphs().par_iter().map(|g| self.index_graph(g)).collect()
    }

    /// Writes `<id>\t<degree>\t<frequency>\t<canonical>` lines in id order.
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for (id, e) in self.entries.iter().enumerate() {
            writeln!(out, "{id}\t{}\t{}\t{}", e.degree, e.frequency, e.canonical)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_tsv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries: Vec<VocabEntry> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let ln = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(Error::format(path, ln, "expected 4 tab-separated fields"));
            }
            let parse = |s: &str, what: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::format(path, ln, format!("invalid {what} {s:?}")))
            };
            let id = parse(fields[0], "id")? as usize;
            if id != entries.len() {
                return Err(Error::format(
                    path,
                    ln,
                    format!("expected id {}, got {id}", entries.len()),
                ));
            }
            let canonical = fields[3].to_string();
            if entries.last().is_some_and(|prev| prev.canonical >= canonical) {
                return Err(Error::format(path, ln, "canonicals are not in ascending order"));
            }
            entries.push(VocabEntry {
                canonical,
                degree: parse(fields[1], "degree")? as usize,
                frequency: parse(fields[2], "frequency")?,
            });
        }
        if entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let max_degree = entries.iter().map(|e| e.degree).max().unwrap_or(0);
        let encoding = if entries.iter().any(|e| e.degree >= 2 && e.canonical.starts_with('#')) {
            Encoding::Compressed
        } else {
            Encoding::Full
        };
        Ok(Self::from_sorted_entries(entries, max_degree, encoding))
    }
}

/// Counts of vocabulary subgraphs over all nodes and degrees `0..=D` of `g`.
/// Subgraphs absent from the vocabulary are dropped.
pub fn subgraph_count_vector(g: &Graph, vocab: &SubgraphVocab) -> BTreeMap<usize, u64> {
    if vocab.is_empty() {
        return BTreeMap::new();
    }
    vocab.index_graph(g).counts()
}
