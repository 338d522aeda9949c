//! Subgraph embedding training: radial skipgram with negative sampling.
//!
//! Every degree-`d` subgraph rooted at `v` is a target; its context is the
//! multiset of degree `d-1`, `d` and `d+1` subgraphs rooted at the
//! neighbours of `v`. Each (target, context) pair is trained with the
//! negative-sampling logistic loss
//!
//! ```text
//! loss = -ln σ(out[c] · in[t]) - Σ_n ln σ(-out[n] · in[t])
//! ```
//!
//! using plain SGD with a linearly decaying learning rate.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};
use crate::matrix::{dot, Matrix};
use crate::wl::{GraphSubgraphs, SubgraphVocab};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub max_degree: usize,
    pub dimensions: usize,
    pub epochs: usize,
    pub neg_count: usize,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub seed: u64,
    /// Sequential single-worker updates; bitwise reproducible.
    pub deterministic: bool,
    /// Worker count for non-deterministic (lock-free) training.
    pub threads: usize,
    /// Exponent applied to subgraph frequencies in the noise distribution.
    pub noise_power: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_degree: 2,
            dimensions: 32,
            epochs: 10,
            neg_count: 5,
            lr_initial: 0.025,
            lr_min: 1e-4,
            seed: 0,
            deterministic: true,
            threads: 1,
            noise_power: 0.75,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_initial && self.lr_initial.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates must satisfy 0 < lr_min <= lr_initial (got {} and {})",
                self.lr_min, self.lr_initial
            )));
        }
        if !self.deterministic && self.threads == 0 {
            return Err(Error::Config("parallel training needs at least one thread".into()));
        }
        if !self.noise_power.is_finite() {
            return Err(Error::Config("noise power must be finite".into()));
        }
        Ok(())
    }
}

/// Subgraph ids in a radial context, sorted, duplicates kept.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContextMultiset {
    ids: Vec<usize>,
}

impl ContextMultiset {
    pub fn from_ids(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ContextMultiset { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub fn distinct_len(&self) -> usize {
        let mut n = 0;
        let mut prev = None;
        for &id in &self.ids {
            if prev != Some(id) {
                n += 1;
                prev = Some(id);
            }
        }
        n
    }
}

/// Radial context of the degree-`d` subgraph rooted at `v`.
pub fn radial_context(
    v: usize,
    d: usize,
    g: &Graph,
    max_degree: usize,
    vocab: &SubgraphVocab,
) -> Result<ContextMultiset> {
    if d > max_degree {
        return Err(Error::Argument(format!("degree {d} exceeds the maximum {max_degree}")));
    }
    if max_degree > vocab.max_degree() {
        return Err(Error::Config(format!(
            "vocabulary covers degrees up to {}, not {max_degree}",
            vocab.max_degree()
        )));
    }
    g.neighbors(v)?;
    Ok(context_from_index(v, d, g, max_degree, &vocab.index_graph(g)))
}

fn context_from_index(v: usize, d: usize, g: &Graph, max_degree: usize, subgraphs: &GraphSubgraphs) -> ContextMultiset {
    let lo = d.saturating_sub(1);
    let hi = (d + 1).min(max_degree);
    let mut ids = Vec::new();
    for &u in g.neighbors(v).expect("valid node") {
        for degree in lo..=hi {
            if let Some(id) = subgraphs.get(u, degree) {
                ids.push(id);
            }
        }
    }
    ContextMultiset::from_ids(ids)
}

/// Unigram noise distribution raised to a power.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    size: usize,
    weights: Option<WeightedIndex<f64>>,
}

impl NoiseDistribution {
    pub fn new(vocab: &SubgraphVocab, power: f64) -> Self {
        let weights = WeightedIndex::new(vocab.frequencies().map(|f| (f as f64).powf(power))).ok();
        NoiseDistribution {
            size: vocab.len(),
            weights,
        }
    }

    /// Uniform noise over `size` ids.
    pub fn uniform(size: usize) -> Self {
        NoiseDistribution {
            size,
            weights: WeightedIndex::new(vec![1.0; size]).ok(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

const REJECTION_ATTEMPTS_PER_SAMPLE: usize = 100;

/// Draws up to `k` distinct negatives, none equal to `target` or in `context`.
pub fn sample_negatives<R: Rng + ?Sized>(
    noise: &NoiseDistribution,
    context: &ContextMultiset,
    target: usize,
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    if k == 0 || noise.size == 0 {
        return Vec::new();
    }
    let excluded = |id: usize| id == target || context.contains(id);
    let blocked = context.distinct_len() + usize::from(target < noise.size && !context.contains(target));
    let want = k.min(noise.size.saturating_sub(blocked));
    let mut chosen = Vec::with_capacity(want);
    if let Some(weights) = &noise.weights {
        let mut attempts = 0;
        while chosen.len() < want && attempts < REJECTION_ATTEMPTS_PER_SAMPLE * k {
            attempts += 1;
            let id = weights.sample(rng);
            if !excluded(id) && !chosen.contains(&id) {
                chosen.push(id);
            }
        }
    }
    if chosen.len() < want {
        let mut eligible: Vec<usize> = (0..noise.size)
            .filter(|&id| !excluded(id) && !chosen.contains(&id))
            .collect();
        eligible.shuffle(rng);
        chosen.extend(eligible.into_iter().take(want - chosen.len()));
    }
    chosen
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Learned input embeddings (the subgraph representations) and output/context vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub input: Matrix,
    pub output: Matrix,
    pub config: TrainingConfig,
    /// Mean per-pair loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub target: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

impl EmbeddingModel {
    /// Input rows uniform in `[-0.5/δ, 0.5/δ]`, output rows zero.
    pub fn initialize<R: Rng + ?Sized>(vocab_size: usize, config: &TrainingConfig, rng: &mut R) -> Self {
        let dim = config.dimensions;
        let half = 0.5 / dim as f64;
        let mut input = Matrix::zeros(vocab_size, dim);
        for x in input.as_mut_slice() {
            *x = rng.gen_range(-half..=half);
        }
        EmbeddingModel {
            input,
            output: Matrix::zeros(vocab_size, dim),
            config: config.clone(),
            epoch_losses: Vec::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn dimensions(&self) -> usize {
        self.input.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.output.is_finite()
    }

    /// Writes `<vocab_size> <delta>` then one `<id>\t<values>` line per input row.
    pub fn write_embeddings(&self, out: impl Write) -> std::io::Result<()> {
        write_matrix(&self.input, out)
    }

    pub fn save_embeddings(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_embeddings(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn write_matrix(m: &Matrix, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        write!(out, "{i}\t")?;
        for (j, x) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{x:?}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads an embedding file written by [`EmbeddingModel::write_embeddings`].
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, 1, "missing header")),
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::format(path, 1, "header must be `<rows> <cols>`"))
        })
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::format(path, 1, "header must be `<rows> <cols>`"));
    };
    let mut m = Matrix::zeros(rows, cols);
    let mut seen = 0;
    for (i, line) in lines {
        let ln = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, ln, "expected `<id>\\t<values>`"))?;
        let id: usize = id
            .parse()
            .map_err(|_| Error::format(path, ln, format!("invalid row id {id:?}")))?;
        if id != seen || id >= rows {
            return Err(Error::format(path, ln, format!("unexpected row id {id}")));
        }
        let row = m.row_mut(id);
        let mut n = 0;
        for (j, tok) in values.split_whitespace().enumerate() {
            if j >= cols {
                return Err(Error::format(path, ln, "too many values"));
            }
            row[j] = tok
                .parse()
                .map_err(|_| Error::format(path, ln, format!("invalid number {tok:?}")))?;
            n += 1;
        }
        if n != cols {
            return Err(Error::format(path, ln, format!("expected {cols} values, got {n}")));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::format(path, 0, format!("expected {rows} rows, got {seen}")));
    }
    Ok(m)
}

/// Loss of one (target, context) pair and the gradients of the touched rows.
pub fn nsg_loss_and_grad(
    model: &EmbeddingModel,
    target: usize,
    context_item: usize,
    negatives: &[usize],
) -> (f64, Gradients) {
    let t = model.input.row(target);
    let dim = t.len();
    let mut grad_target = vec![0.0; dim];
    let mut loss = 0.0;

    let mut term = |row: usize, positive: bool, grad_target: &mut Vec<f64>| {
        let out = model.output.row(row);
        let s = dot(out, t);
        // d loss / d s
        let g = if positive {
            loss += softplus(-s);
            sigmoid(s) - 1.0
        } else {
            loss += softplus(s);
            sigmoid(s)
        };
        for (gt, o) in grad_target.iter_mut().zip(out) {
            *gt += g * o;
        }
        t.iter().map(|x| g * x).collect::<Vec<f64>>()
    };

    let context = term(context_item, true, &mut grad_target);
    let negatives = negatives.iter().map(|&n| term(n, false, &mut grad_target)).collect();
    (
        loss,
        Gradients {
            target: grad_target,
            context,
            negatives,
        },
    )
}

/// Row access used by the SGD kernel, so the same update code runs on plain
/// and lock-free shared matrices.
trait ParamStore {
    fn dim(&self) -> usize;
    fn read_input(&self, row: usize, buf: &mut [f64]);
    fn output_dot(&self, row: usize, x: &[f64]) -> f64;
    /// `acc += a * output[row]`
    fn accumulate_output(&self, row: usize, a: f64, acc: &mut [f64]);
    /// `output[row] += a * x`
    fn add_output(&mut self, row: usize, a: f64, x: &[f64]);
    /// `input[row] += a * x`
    fn add_input(&mut self, row: usize, a: f64, x: &[f64]);
}

struct PlainStore<'a> {
    input: &'a mut Matrix,
    output: &'a mut Matrix,
}

impl ParamStore for PlainStore<'_> {
    fn dim(&self) -> usize {
        self.input.cols()
    }

    fn read_input(&self, row: usize, buf: &mut [f64]) {
        buf.copy_from_slice(self.input.row(row));
    }

    fn output_dot(&self, row: usize, x: &[f64]) -> f64 {
        dot(self.output.row(row), x)
    }

    fn accumulate_output(&self, row: usize, a: f64, acc: &mut [f64]) {
        for (y, o) in acc.iter_mut().zip(self.output.row(row)) {
            *y += a * o;
        }
    }

    fn add_output(&mut self, row: usize, a: f64, x: &[f64]) {
        for (o, v) in self.output.row_mut(row).iter_mut().zip(x) {
            *o += a * v;
        }
    }

    fn add_input(&mut self, row: usize, a: f64, x: &[f64]) {
        for (o, v) in self.input.row_mut(row).iter_mut().zip(x) {
            *o += a * v;
        }
    }
}

/// f64 matrix stored as atomic bit patterns; relaxed, last write wins.
struct AtomicMatrix {
    cols: usize,
    data: Vec<AtomicU64>,
}

impl AtomicMatrix {
    fn from_matrix(m: &Matrix) -> Self {
        AtomicMatrix {
            cols: m.cols(),
            data: m.as_slice().iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
        }
    }

    fn into_matrix(self, rows: usize) -> Matrix {
        let data = self.data.into_iter().map(|a| f64::from_bits(a.into_inner())).collect();
        Matrix::from_vec(rows, self.cols, data).expect("shape preserved")
    }

    fn get(&self, row: usize, j: usize) -> f64 {
        f64::from_bits(self.data[row * self.cols + j].load(Ordering::Relaxed))
    }

    fn add(&self, row: usize, j: usize, delta: f64) {
        let cell = &self.data[row * self.cols + j];
        let v = f64::from_bits(cell.load(Ordering::Relaxed)) + delta;
        cell.store(v.to_bits(), Ordering::Relaxed);
    }
}

#[derive(Clone, Copy)]
struct SharedStore<'a> {
    input: &'a AtomicMatrix,
    output: &'a AtomicMatrix,
}

impl ParamStore for SharedStore<'_> {
    fn dim(&self) -> usize {
        self.input.cols
    }

    fn read_input(&self, row: usize, buf: &mut [f64]) {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = self.input.get(row, j);
        }
    }

    fn output_dot(&self, row: usize, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(j, v)| self.output.get(row, j) * v).sum()
    }

    fn accumulate_output(&self, row: usize, a: f64, acc: &mut [f64]) {
        for (j, y) in acc.iter_mut().enumerate() {
            *y += a * self.output.get(row, j);
        }
    }

    fn add_output(&mut self, row: usize, a: f64, x: &[f64]) {
        for (j, v) in x.iter().enumerate() {
            self.output.add(row, j, a * v);
        }
    }

    fn add_input(&mut self, row: usize, a: f64, x: &[f64]) {
        for (j, v) in x.iter().enumerate() {
            self.input.add(row, j, a * v);
        }
    }
}

struct Scratch {
    target: Vec<f64>,
    grad: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            target: vec![0.0; dim],
            grad: vec![0.0; dim],
        }
    }
}

/// One SGD update for a (target, context item) pair; returns the pair loss
/// evaluated at the pre-update parameters.
fn pair_update<P: ParamStore>(
    store: &mut P,
    target: usize,
    context_item: usize,
    negatives: &[usize],
    lr: f64,
    scratch: &mut Scratch,
) -> f64 {
    debug_assert_eq!(scratch.target.len(), store.dim());
    store.read_input(target, &mut scratch.target);
    scratch.grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let rows = std::iter::once((context_item, true)).chain(negatives.iter().map(|&n| (n, false)));
    for (row, positive) in rows {
        let s = store.output_dot(row, &scratch.target);
        let g = if positive {
            loss += softplus(-s);
            sigmoid(s) - 1.0
        } else {
            loss += softplus(s);
            sigmoid(s)
        };
        store.accumulate_output(row, g, &mut scratch.grad);
        store.add_output(row, -lr * g, &scratch.target);
    }
    store.add_input(target, -lr, &scratch.grad);
    loss
}

#[allow(clippy::too_many_arguments)]
fn skipgram_step<P: ParamStore, R: Rng + ?Sized>(
    store: &mut P,
    noise: &NoiseDistribution,
    neg_count: usize,
    target: usize,
    context: &ContextMultiset,
    lr: f64,
    rng: &mut R,
    scratch: &mut Scratch,
) -> f64 {
    let mut loss = 0.0;
    for &item in context.ids() {
        let negatives = sample_negatives(noise, context, target, neg_count, rng);
        loss += pair_update(store, target, item, &negatives, lr, scratch);
    }
    loss
}

/// Trains `target` against every element of `context` (in id order, with
/// multiplicity); returns the summed pair loss.
pub fn radial_skipgram_step<R: Rng + ?Sized>(
    model: &mut EmbeddingModel,
    noise: &NoiseDistribution,
    target: usize,
    context: &ContextMultiset,
    lr: f64,
    rng: &mut R,
) -> f64 {
    let neg_count = model.config.neg_count;
    let mut scratch = Scratch::new(model.dimensions());
    let mut store = PlainStore {
        input: &mut model.input,
        output: &mut model.output,
    };
    skipgram_step(&mut store, noise, neg_count, target, context, lr, rng, &mut scratch)
}

/// Linear decay from `lr_initial` at step 0 to `lr_min` at the last step.
#[derive(Debug, Clone, Copy)]
pub struct LearningRateSchedule {
    initial: f64,
    min: f64,
    total_steps: usize,
}

impl LearningRateSchedule {
    pub fn new(initial: f64, min: f64, total_steps: usize) -> Self {
        LearningRateSchedule {
            initial,
            min,
            total_steps,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if self.total_steps <= 1 {
            return self.initial;
        }
        let frac = (step.min(self.total_steps - 1)) as f64 / (self.total_steps - 1) as f64;
        self.initial + (self.min - self.initial) * frac
    }
}

struct Corpus<'a> {
    graphs: &'a [Graph],
    subgraphs: Vec<GraphSubgraphs>,
    max_degree: usize,
}

impl Corpus<'_> {
    fn targets_per_epoch(&self) -> usize {
        self.graphs.iter().map(Graph::num_nodes).sum::<usize>() * (self.max_degree + 1)
    }

    /// Visits every `(target, context)` of graph `gi` in node, then degree order.
    fn for_each_target(&self, gi: usize, mut f: impl FnMut(usize, &ContextMultiset)) {
        let g = &self.graphs[gi];
        let subgraphs = &self.subgraphs[gi];
        for v in 0..g.num_nodes() {
            for d in 0..=self.max_degree {
                let context = context_from_index(v, d, g, self.max_degree, subgraphs);
                // Targets unseen in the vocabulary still consume a schedule step.
                f(subgraphs.get(v, d).unwrap_or(usize::MAX), &context);
            }
        }
    }
}

/// Learns subgraph embeddings over `ds`.
pub fn train(ds: &GraphDataset, vocab: &SubgraphVocab, cfg: &TrainingConfig) -> Result<EmbeddingModel> {
    cfg.validate()?;
    if vocab.max_degree() != cfg.max_degree {
        return Err(Error::Config(format!(
            "vocabulary was built with degree {} but training uses {}",
            vocab.max_degree(),
            cfg.max_degree
        )));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = EmbeddingModel::initialize(vocab.len(), cfg, &mut rng);
    let noise = NoiseDistribution::new(vocab, cfg.noise_power);
    let corpus = Corpus {
        graphs: ds.graphs(),
        subgraphs: vocab.index_dataset(ds),
        max_degree: cfg.max_degree,
    };
    let schedule = LearningRateSchedule::new(cfg.lr_initial, cfg.lr_min, cfg.epochs * corpus.targets_per_epoch());

    if cfg.deterministic {
        train_sequential(&mut model, &corpus, &noise, &schedule, &mut rng)?;
    } else {
        train_parallel(&mut model, &corpus, &noise, &schedule, &mut rng)?;
    }
    Ok(model)
}

fn check_epoch(model: &EmbeddingModel, epoch: usize) -> Result<()> {
    if model.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")))
    }
}

fn mean_loss(loss: f64, pairs: usize) -> f64 {
    if pairs == 0 {
        0.0
    } else {
        loss / pairs as f64
    }
}

fn train_sequential(
    model: &mut EmbeddingModel,
    corpus: &Corpus<'_>,
    noise: &NoiseDistribution,
    schedule: &LearningRateSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let neg_count = model.config.neg_count;
    let mut scratch = Scratch::new(model.dimensions());
    let mut order: Vec<usize> = (0..corpus.graphs.len()).collect();
    let mut step = 0;
    for epoch in 0..model.config.epochs {
        order.shuffle(rng);
        let (mut loss, mut pairs) = (0.0, 0usize);
        {
            let mut store = PlainStore {
                input: &mut model.input,
                output: &mut model.output,
            };
            for &gi in &order {
                corpus.for_each_target(gi, |target, context| {
                    let lr = schedule.at(step);
                    step += 1;
                    if target == usize::MAX {
                        return;
                    }
                    loss += skipgram_step(&mut store, noise, neg_count, target, context, lr, rng, &mut scratch);
                    pairs += context.len();
                });
            }
        }
        model.epoch_losses.push(mean_loss(loss, pairs));
        log::debug!("epoch {epoch}: mean loss {:.6}", mean_loss(loss, pairs));
        check_epoch(model, epoch)?;
    }
    Ok(())
}

fn train_parallel(
    model: &mut EmbeddingModel,
    corpus: &Corpus<'_>,
    noise: &NoiseDistribution,
    schedule: &LearningRateSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let rows = model.vocab_size();
    let dim = model.dimensions();
    let neg_count = model.config.neg_count;
    let workers = model.config.threads.max(1);
    let input = AtomicMatrix::from_matrix(&model.input);
    let output = AtomicMatrix::from_matrix(&model.output);
    let shared = SharedStore {
        input: &input,
        output: &output,
    };
    let step = AtomicUsize::new(0);
    let mut order: Vec<usize> = (0..corpus.graphs.len()).collect();
    for epoch in 0..model.config.epochs {
        order.shuffle(rng);
        let seeds: Vec<u64> = (0..workers).map(|_| rng.gen()).collect();
        let totals: Vec<(f64, usize)> = std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .enumerate()
                .map(|(w, &seed)| {
                    let order = &order;
                    let step = &step;
                    scope.spawn(move || {
                        let mut store = shared;
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let mut scratch = Scratch::new(dim);
                        let (mut loss, mut pairs) = (0.0, 0usize);
                        for &gi in order.iter().skip(w).step_by(workers) {
                            corpus.for_each_target(gi, |target, context| {
                                let lr = schedule.at(step.fetch_add(1, Ordering::Relaxed));
                                if target == usize::MAX {
                                    return;
                                }
                                loss += skipgram_step(
                                    &mut store,
                                    noise,
                                    neg_count,
                                    target,
                                    context,
                                    lr,
                                    &mut rng,
                                    &mut scratch,
                                );
                                pairs += context.len();
                            });
                        }
                        (loss, pairs)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        let loss: f64 = totals.iter().map(|t| t.0).sum();
        let pairs: usize = totals.iter().map(|t| t.1).sum();
        model.epoch_losses.push(mean_loss(loss, pairs));
        let finite = input
            .data
            .iter()
            .chain(&output.data)
            .all(|a| f64::from_bits(a.load(Ordering::Relaxed)).is_finite());
        if !finite {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
    }
    model.input = input.into_matrix(rows);
    model.output = output.into_matrix(rows);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> Graph {
        Graph::new(0, vec!["A".into(), "B".into(), "A".into()], [(0, 1), (1, 2)], None).unwrap()
    }

    fn p3_vocab() -> (GraphDataset, SubgraphVocab) {
        let ds = GraphDataset::new("p3", vec![p3()]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 1).unwrap();
        (ds, vocab)
    }

    fn names(ctx: &ContextMultiset, vocab: &SubgraphVocab) -> Vec<String> {
        let mut v: Vec<String> = ctx
            .ids()
            .iter()
            .map(|&id| vocab.entry(id).unwrap().canonical.clone())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn radial_context_hand_traces() {
        let (ds, vocab) = p3_vocab();
        let g = &ds.graphs()[0];
        let ctx = radial_context(1, 1, g, 1, &vocab).unwrap();
        assert_eq!(names(&ctx, &vocab), vec!["A", "A", "A(B)", "A(B)"]);
        let ctx = radial_context(0, 0, g, 1, &vocab).unwrap();
        assert_eq!(names(&ctx, &vocab), vec!["B", "B(A,A)"]);
        assert!(radial_context(0, 2, g, 1, &vocab).is_err());
    }

    #[test]
    fn isolated_node_has_empty_context() {
        let g = Graph::new(0, vec!["A".into()], [], None).unwrap();
        let ds = GraphDataset::new("k1", vec![g.clone()]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 2).unwrap();
        for d in 0..=2 {
            assert!(radial_context(0, d, &g, 2, &vocab).unwrap().is_empty());
        }
    }

    #[test]
    fn negatives_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ctx = ContextMultiset::from_ids(vec![1, 2]);
        assert!(sample_negatives(&NoiseDistribution::uniform(4), &ctx, 0, 0, &mut rng).is_empty());
        let alone = ContextMultiset::default();
        assert!(sample_negatives(&NoiseDistribution::uniform(1), &alone, 0, 5, &mut rng).is_empty());
        let got = sample_negatives(&NoiseDistribution::uniform(4), &ctx, 0, 10, &mut rng);
        assert_eq!(got, vec![3]);
    }

    #[test]
    fn initial_loss_is_log2_per_term() {
        let cfg = TrainingConfig {
            dimensions: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = EmbeddingModel::initialize(6, &cfg, &mut rng);
        let (loss, _) = nsg_loss_and_grad(&model, 0, 1, &[2, 3, 4]);
        assert!((loss - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn closed_form_loss() {
        let cfg = TrainingConfig {
            dimensions: 1,
            ..Default::default()
        };
        let mut model = EmbeddingModel::initialize(2, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        model.input[(0, 0)] = 1.0;
        model.output[(1, 0)] = 1.0;
        let (loss, _) = nsg_loss_and_grad(&model, 0, 1, &[]);
        assert!((loss - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((loss - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn step_applies_negative_gradient() {
        let cfg = TrainingConfig {
            dimensions: 3,
            neg_count: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut model = EmbeddingModel::initialize(5, &cfg, &mut rng);
        for x in model.output.as_mut_slice() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let negs = [3, 4];
        let (loss, grads) = nsg_loss_and_grad(&model, 0, 1, &negs);
        let before = model.clone();
        let lr = 0.1;
        let mut scratch = Scratch::new(3);
        let mut store = PlainStore {
            input: &mut model.input,
            output: &mut model.output,
        };
        let step_loss = pair_update(&mut store, 0, 1, &negs, lr, &mut scratch);
        assert!((loss - step_loss).abs() < 1e-15);
        for j in 0..3 {
            let close = |a: f64, b: f64| (a - b).abs() < 1e-14;
            assert!(close(model.input[(0, j)], before.input[(0, j)] - lr * grads.target[j]));
            assert!(close(
                model.output[(1, j)],
                before.output[(1, j)] - lr * grads.context[j]
            ));
            for (k, &n) in negs.iter().enumerate() {
                assert!(close(
                    model.output[(n, j)],
                    before.output[(n, j)] - lr * grads.negatives[k][j]
                ));
            }
        }
    }

    #[test]
    fn empty_context_step_is_noop() {
        let (_, vocab) = p3_vocab();
        let cfg = TrainingConfig {
            max_degree: 1,
            dimensions: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = EmbeddingModel::initialize(vocab.len(), &cfg, &mut rng);
        let before = model.clone();
        let noise = NoiseDistribution::new(&vocab, 0.75);
        let loss = radial_skipgram_step(&mut model, &noise, 0, &ContextMultiset::default(), 0.1, &mut rng);
        assert_eq!(loss, 0.0);
        assert_eq!(model, before);
    }

    #[test]
    fn first_step_from_zero_output() {
        let (_, vocab) = p3_vocab();
        let cfg = TrainingConfig {
            max_degree: 1,
            dimensions: 4,
            neg_count: 1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = EmbeddingModel::initialize(vocab.len(), &cfg, &mut rng);
        let noise = NoiseDistribution::new(&vocab, 0.75);
        let ctx = ContextMultiset::from_ids(vec![2]);
        let loss = radial_skipgram_step(&mut model, &noise, 0, &ctx, 0.1, &mut rng);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(model.output.row(2).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn step_is_reproducible() {
        let (_, vocab) = p3_vocab();
        let cfg = TrainingConfig {
            max_degree: 1,
            dimensions: 4,
            ..Default::default()
        };
        let noise = NoiseDistribution::new(&vocab, 0.75);
        let ctx = ContextMultiset::from_ids(vec![0, 0, 1]);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut model = EmbeddingModel::initialize(vocab.len(), &cfg, &mut rng);
            radial_skipgram_step(&mut model, &noise, 2, &ctx, 0.05, &mut rng);
            model
        };
        let (a, b) = (run(), run());
        assert_eq!(a.input.as_slice(), b.input.as_slice());
        assert_eq!(a.output.as_slice(), b.output.as_slice());
    }

    #[test]
    fn single_node_training_keeps_initialization() {
        let g = Graph::new(0, vec!["A".into()], [], None).unwrap();
        let ds = GraphDataset::new("k1", vec![g]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 0).unwrap();
        let cfg = TrainingConfig {
            max_degree: 0,
            epochs: 1,
            dimensions: 8,
            seed: 11,
            ..Default::default()
        };
        let model = train(&ds, &vocab, &cfg).unwrap();
        let init = EmbeddingModel::initialize(1, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(model.input, init.input);
    }

    #[test]
    fn degree_mismatch_is_config_error() {
        let (ds, vocab) = p3_vocab();
        let cfg = TrainingConfig {
            max_degree: 2,
            ..Default::default()
        };
        assert!(matches!(train(&ds, &vocab, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs() {
        let base = TrainingConfig::default();
        for cfg in [
            TrainingConfig {
                dimensions: 0,
                ..base.clone()
            },
            TrainingConfig {
                epochs: 0,
                ..base.clone()
            },
            TrainingConfig {
                lr_min: 0.0,
                ..base.clone()
            },
            TrainingConfig {
                lr_min: 0.5,
                lr_initial: 0.1,
                ..base.clone()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn schedule_is_linear() {
        let s = LearningRateSchedule::new(0.025, 1e-4, 11);
        assert_eq!(s.at(0), 0.025);
        assert!((s.at(10) - 1e-4).abs() < 1e-15);
        assert!((s.at(5) - (0.025 + 1e-4) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn embeddings_round_trip() {
        let (ds, vocab) = p3_vocab();
        let cfg = TrainingConfig {
            max_degree: 1,
            dimensions: 3,
            epochs: 2,
            ..Default::default()
        };
        let model = train(&ds, &vocab, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        model.save_embeddings(&path).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), model.input);
    }

    #[test]
    fn parallel_training_stays_finite() {
        let graphs: Vec<Graph> = (0..8).map(|_| p3()).collect();
        let ds = GraphDataset::new("p3s", graphs).unwrap();
        let vocab = SubgraphVocab::build(&ds, 1).unwrap();
        let cfg = TrainingConfig {
            max_degree: 1,
            dimensions: 4,
            epochs: 3,
            deterministic: false,
            threads: 3,
            ..Default::default()
        };
        let model = train(&ds, &vocab, &cfg).unwrap();
        assert!(model.is_finite());
        assert_eq!(model.epoch_losses.len(), 3);
    }
}
