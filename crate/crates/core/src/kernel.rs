//! Plain and embedding-weighted ("deep") Weisfeiler-Lehman graph kernels.
//!
//! The plain kernel is the dot product of subgraph count vectors. The deep
//! kernel weights count vectors by subgraph similarity `M = E Eᵀ`, where the
//! rows of `E` are the learned subgraph embeddings. Since
//! `φ(G)ᵀ M φ(G') = ⟨Eᵀφ(G), Eᵀφ(G')⟩`, it is computed from δ-dimensional
//! graph embeddings; [`deep_wl_kernel_materialized`] evaluates the quadratic
//! form directly and exists to audit that factorization.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};
use crate::matrix::{dot, Matrix};
use crate::wl::{subgraph_count_vector, SubgraphVocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Wl,
    Deep,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::Wl => "wl",
            KernelMode::Deep => "deep",
        })
    }
}

impl FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wl" => Ok(KernelMode::Wl),
            "deep" => Ok(KernelMode::Deep),
            other => Err(Error::Argument(format!("unknown kernel mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: Matrix,
    pub graph_ids: Vec<usize>,
    pub mode: KernelMode,
    pub normalized: bool,
    /// Set when every entry is zero, e.g. for an all-zero embedding matrix.
    pub degenerate: bool,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.graph_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        self.values.is_psd(tol)
    }

    /// Text format: `n mode normalized`, the graph ids, then `n` rows.
    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.len(), self.mode, self.normalized)?;
        let ids: Vec<String> = self.graph_ids.iter().map(usize::to_string).collect();
        writeln!(out, "{}", ids.join(" "))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.values.row(i).iter().map(|x| format!("{x:?}")).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let mut next = |ln: usize| -> Result<String> {
            match lines.next() {
                Some(l) => l.map_err(|e| Error::io(path, e)),
                None => Err(Error::format(path, ln, "unexpected end of file")),
            }
        };
        let header = next(1)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, mode, normalized] = fields[..] else {
            return Err(Error::format(path, 1, "header must be `n mode normalized`"));
        };
        let n: usize = n
            .parse()
            .map_err(|_| Error::format(path, 1, format!("invalid size {n:?}")))?;
        let mode: KernelMode = mode.parse().map_err(|e: Error| Error::format(path, 1, e.to_string()))?;
        let normalized: bool = normalized
            .parse()
            .map_err(|_| Error::format(path, 1, format!("invalid flag {normalized:?}")))?;
        let ids_line = next(2)?;
        let graph_ids: Vec<usize> = ids_line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::format(path, 2, format!("invalid graph id {t:?}")))
            })
            .collect::<Result<_>>()?;
        if graph_ids.len() != n {
            return Err(Error::format(
                path,
                2,
                format!("expected {n} graph ids, got {}", graph_ids.len()),
            ));
        }
        let mut values = Matrix::zeros(n, n);
        for i in 0..n {
            let ln = i + 3;
            let line = next(ln)?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::format(path, ln, format!("invalid number {t:?}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::format(
                    path,
                    ln,
                    format!("expected {n} values, got {}", row.len()),
                ));
            }
            values.row_mut(i).copy_from_slice(&row);
        }
        let degenerate = values.as_slice().iter().all(|&x| x == 0.0);
        Ok(KernelMatrix {
            values,
            graph_ids,
            mode,
            normalized,
            degenerate,
        })
    }
}

/// Writes the `graph_id, class` companion file for a dataset.
pub fn write_labels(ds: &GraphDataset, mut out: impl Write) -> std::io::Result<()> {
    for g in ds.graphs() {
        writeln!(out, "{}, {}", g.graph_id, g.class_label().unwrap_or(""))?;
    }
    Ok(())
}

pub fn save_labels(ds: &GraphDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_labels(ds, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a `graph_id, class` file into `(ids, classes)`.
pub fn load_labels(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<String>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    let mut classes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, class) = line
            .split_once(',')
            .ok_or_else(|| Error::format(path, i + 1, "expected `graph_id, class`"))?;
        ids.push(
            id.trim()
                .parse()
                .map_err(|_| Error::format(path, i + 1, format!("invalid graph id {id:?}")))?,
        );
        classes.push(class.trim().to_string());
    }
    Ok((ids, classes))
}

fn pairwise(n: usize, entry: impl Fn(usize, usize) -> f64 + Sync) -> Matrix {
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| entry(i, j)).collect())
        .collect();
    let mut m = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn sparse_dot(a: &[(usize, u64)], b: &[(usize, u64)]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

fn count_vectors(ds: &GraphDataset, vocab: &SubgraphVocab) -> Vec<BTreeMap<usize, u64>> {
    ds.graphs()
        .par_iter()
        .map(|g| subgraph_count_vector(g, vocab))
        .collect()
}

fn finish(values: Matrix, ds: &GraphDataset, mode: KernelMode) -> KernelMatrix {
    let degenerate = values.as_slice().iter().all(|&x| x == 0.0);
    KernelMatrix {
        values,
        graph_ids: ds.graphs().iter().map(|g| g.graph_id).collect(),
        mode,
        normalized: false,
        degenerate,
    }
}

/// Dot products of subgraph count vectors summed over degrees `0..=D`.
pub fn wl_kernel(ds: &GraphDataset, vocab: &SubgraphVocab) -> Result<KernelMatrix> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sparse: Vec<Vec<(usize, u64)>> = count_vectors(ds, vocab)
        .into_iter()
        .map(|c| c.into_iter().collect())
        .collect();
    let values = pairwise(ds.len(), |i, j| sparse_dot(&sparse[i], &sparse[j]) as f64);
    Ok(finish(values, ds, KernelMode::Wl))
}

fn embed_counts(counts: &BTreeMap<usize, u64>, embeddings: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; embeddings.cols()];
    for (&id, &c) in counts {
        for (o, e) in out.iter_mut().zip(embeddings.row(id)) {
            *o += c as f64 * e;
        }
    }
    out
}

/// Count-weighted sum of the input embeddings of `g`'s subgraphs.
pub fn graph_embedding(g: &Graph, vocab: &SubgraphVocab, model: &EmbeddingModel) -> Vec<f64> {
    graph_embedding_with(g, vocab, &model.input)
}

pub fn graph_embedding_with(g: &Graph, vocab: &SubgraphVocab, embeddings: &Matrix) -> Vec<f64> {
    embed_counts(&subgraph_count_vector(g, vocab), embeddings)
}

fn check_embeddings(vocab: &SubgraphVocab, embeddings: &Matrix) -> Result<()> {
    if embeddings.rows() != vocab.len() {
        return Err(Error::Config(format!(
            "embedding matrix has {} rows for a vocabulary of {}",
            embeddings.rows(),
            vocab.len()
        )));
    }
    Ok(())
}

pub fn deep_wl_kernel(ds: &GraphDataset, vocab: &SubgraphVocab, model: &EmbeddingModel) -> Result<KernelMatrix> {
    deep_wl_kernel_with(ds, vocab, &model.input)
}

/// Deep kernel for an explicit embedding matrix (rows indexed by subgraph id).
pub fn deep_wl_kernel_with(ds: &GraphDataset, vocab: &SubgraphVocab, embeddings: &Matrix) -> Result<KernelMatrix> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_embeddings(vocab, embeddings)?;
    let projected: Vec<Vec<f64>> = count_vectors(ds, vocab)
        .par_iter()
        .map(|c| embed_counts(c, embeddings))
        .collect();
    let values = pairwise(ds.len(), |i, j| dot(&projected[i], &projected[j]));
    let k = finish(values, ds, KernelMode::Deep);
    if k.degenerate {
        log::warn!("deep kernel is all zero; embeddings look untrained");
    }
    Ok(k)
}

/// Deep kernel evaluated as `φ(G)ᵀ M φ(G')` with `M = E Eᵀ` materialized.
pub fn deep_wl_kernel_materialized(
    ds: &GraphDataset,
    vocab: &SubgraphVocab,
    embeddings: &Matrix,
) -> Result<KernelMatrix> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_embeddings(vocab, embeddings)?;
    let v = vocab.len();
    let mut similarity = Matrix::zeros(v, v);
    for a in 0..v {
        for b in 0..v {
            similarity[(a, b)] = dot(embeddings.row(a), embeddings.row(b));
        }
    }
    let counts = count_vectors(ds, vocab);
    let values = pairwise(ds.len(), |i, j| {
        let mut acc = 0.0;
        for (&a, &ca) in &counts[i] {
            for (&b, &cb) in &counts[j] {
                acc += ca as f64 * similarity[(a, b)] * cb as f64;
            }
        }
        acc
    });
    Ok(finish(values, ds, KernelMode::Deep))
}

/// Cosine normalization `K_ij / sqrt(K_ii K_jj)`; zero-diagonal rows become zero.
pub fn normalize_kernel(k: &KernelMatrix) -> Result<KernelMatrix> {
    let n = k.len();
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = k.get(i, i);
        if d < 0.0 || d.is_nan() {
            return Err(Error::Numerical(format!("negative self-similarity {d} at row {i}")));
        }
        scale.push(if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    }
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = if i == j && scale[i] > 0.0 {
                1.0
            } else {
                k.get(i, j) * scale[i] * scale[j]
            };
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    let degenerate = values.as_slice().iter().all(|&x| x == 0.0);
    Ok(KernelMatrix {
        values,
        graph_ids: k.graph_ids.clone(),
        mode: k.mode,
        normalized: true,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> Graph {
        Graph::new(0, vec!["A".into(), "B".into(), "A".into()], [(0, 1), (1, 2)], None).unwrap()
    }

    fn single(label: &str) -> Graph {
        Graph::new(0, vec![label.into()], [], None).unwrap()
    }

    fn kernel(rows: &[Vec<f64>]) -> KernelMatrix {
        KernelMatrix {
            values: Matrix::from_rows(rows).unwrap(),
            graph_ids: (0..rows.len()).collect(),
            mode: KernelMode::Wl,
            normalized: false,
            degenerate: false,
        }
    }

    #[test]
    fn wl_kernel_examples() {
        let ds = GraphDataset::new("aa", vec![single("A"), single("A")]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 0).unwrap();
        let k = wl_kernel(&ds, &vocab).unwrap();
        assert_eq!(k.values.as_slice(), &[1.0, 1.0, 1.0, 1.0]);

        let ds = GraphDataset::new("p3", vec![p3()]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 1).unwrap();
        assert_eq!(wl_kernel(&ds, &vocab).unwrap().get(0, 0), 10.0);

        let ds = GraphDataset::new("mix", vec![p3(), single("A")]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 0).unwrap();
        assert_eq!(wl_kernel(&ds, &vocab).unwrap().get(0, 1), 2.0);
    }

    #[test]
    fn graph_embedding_examples() {
        let ds = GraphDataset::new("p3", vec![p3()]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 1).unwrap();
        let ones = Matrix::from_vec(vocab.len(), 1, vec![1.0; vocab.len()]).unwrap();
        assert_eq!(graph_embedding_with(&p3(), &vocab, &ones), vec![6.0]);

        let id = Matrix::identity(vocab.len());
        assert_eq!(graph_embedding_with(&p3(), &vocab, &id), vec![2.0, 2.0, 1.0, 1.0]);

        let other = single("Z");
        assert_eq!(graph_embedding_with(&other, &vocab, &ones), vec![0.0]);
    }

    #[test]
    fn deep_kernel_small_examples() {
        let ds = GraphDataset::new("pp", vec![p3(), p3()]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 1).unwrap();
        let ones = Matrix::from_vec(vocab.len(), 1, vec![1.0; vocab.len()]).unwrap();
        assert_eq!(deep_wl_kernel_with(&ds, &vocab, &ones).unwrap().get(0, 1), 36.0);

        let id = Matrix::identity(vocab.len());
        let deep = deep_wl_kernel_with(&ds, &vocab, &id).unwrap();
        assert_eq!(deep.values, wl_kernel(&ds, &vocab).unwrap().values);

        let zero = Matrix::zeros(vocab.len(), 3);
        assert!(deep_wl_kernel_with(&ds, &vocab, &zero).unwrap().degenerate);
        assert!(deep_wl_kernel_with(&ds, &vocab, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn normalize_examples() {
        let k = normalize_kernel(&kernel(&[vec![4.0, 2.0], vec![2.0, 1.0]])).unwrap();
        assert_eq!(k.values.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert!(k.normalized);

        let k = normalize_kernel(&kernel(&[vec![4.0, 0.0], vec![0.0, 0.0]])).unwrap();
        assert_eq!(k.values.as_slice(), &[1.0, 0.0, 0.0, 0.0]);

        assert!(matches!(
            normalize_kernel(&kernel(&[vec![-1.0]])),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn normalize_is_idempotent() {
        let k = kernel(&[vec![9.0, 3.0, 1.0], vec![3.0, 4.0, 2.0], vec![1.0, 2.0, 5.0]]);
        let once = normalize_kernel(&k).unwrap();
        let twice = normalize_kernel(&once).unwrap();
        for (a, b) in once.values.as_slice().iter().zip(twice.values.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_file_round_trip() {
        let k = kernel(&[vec![1.0, 0.1 + 0.2], vec![0.1 + 0.2, 1e-300]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.txt");
        k.save(&path).unwrap();
        assert_eq!(KernelMatrix::load(&path).unwrap(), k);
    }
}
