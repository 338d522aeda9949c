//! Repeated stratified train/test evaluation of a precomputed kernel SVM.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::accuracy;
use crate::svm::{MulticlassSvm, SvmParams};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub repeats: usize,
    pub train_frac: f64,
    pub folds: usize,
    pub c_grid: Vec<f64>,
    pub seed: u64,
    pub tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            repeats: 5,
            train_frac: 0.9,
            folds: 5,
            c_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            seed: 0,
            tol: 1e-3,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Config(format!(
                "train_frac must lie in (0, 1), got {}",
                self.train_frac
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config(
                "c_grid must be a non-empty list of positive values".into(),
            ));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub repeat: usize,
    pub c: f64,
    pub cv_accuracy: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub repeats: Vec<RepeatResult>,
    pub mean: f64,
    /// Population standard deviation over repeats.
    pub std: f64,
    pub seed: u64,
}

impl EvalResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.repeats.iter().map(|r| r.accuracy).collect()
    }

    /// Writes `dataset, kernel_mode, repeat, C, accuracy` lines and a summary.
    pub fn write_report(&self, dataset: &str, kernel_mode: &str, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# dataset, kernel_mode, repeat, C, accuracy")?;
        for r in &self.repeats {
            writeln!(
                out,
                "{dataset}, {kernel_mode}, {}, {}, {:.6}",
                r.repeat, r.c, r.accuracy
            )?;
        }
        writeln!(out, "{:.6} ± {:.6}", self.mean, self.std)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Maps labels to dense class indices in sorted label order.
fn encode_labels<T: Ord + Clone>(labels: &[T]) -> (Vec<usize>, usize) {
    let classes: BTreeMap<T, usize> = labels
        .iter()
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    (labels.iter().map(|l| classes[l]).collect(), classes.len())
}

fn members_by_class(indices: &[usize], y: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut by = vec![Vec::new(); n_classes];
    for &i in indices {
        by[y[i]].push(i);
    }
    by
}

/// Stratified split of `0..n`; returns sorted (train, test).
pub fn stratified_split(
    y: &[usize],
    n_classes: usize,
    train_frac: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..y.len()).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in members_by_class(&all, y, n_classes) {
        members.shuffle(rng);
        let k = ((members.len() as f64) * train_frac).round() as usize;
        let k = k.min(members.len());
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Assigns each index of `indices` a fold, dealing class members round-robin.
pub fn stratified_folds(
    indices: &[usize],
    y: &[usize],
    n_classes: usize,
    folds: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for mut members in members_by_class(indices, y, n_classes) {
        members.shuffle(rng);
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

fn fit_and_score(
    k: &Matrix,
    y: &[usize],
    train: &[usize],
    test: &[usize],
    params: &SvmParams,
) -> Result<(usize, usize)> {
    let train_y: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let model = MulticlassSvm::fit(&k.select(train, train), &train_y, params)?;
    let mut hits = 0;
    for &t in test {
        let row: Vec<f64> = train.iter().map(|&j| k[(t, j)]).collect();
        if model.predict(&row)? == y[t] {
            hits += 1;
        }
    }
    Ok((hits, test.len()))
}

pub fn evaluate_classification<T: Ord + Clone>(k: &Matrix, labels: &[T], cfg: &EvalConfig) -> Result<EvalResult> {
    cfg.validate()?;
    if !k.is_square() || k.rows() != labels.len() {
        return Err(Error::Bounds {
            what: "kernel size vs labels",
            index: k.rows(),
            len: labels.len(),
        });
    }
    let n = labels.len();
    if n < 10 {
        return Err(Error::Argument(format!(
            "evaluation needs at least 10 samples, got {n}"
        )));
    }
    let (y, n_classes) = encode_labels(labels);
    if n_classes < 2 {
        return Err(Error::DegenerateLabels("evaluation needs at least two classes".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    for (c, members) in members_by_class(&all, &y, n_classes).iter().enumerate() {
        if members.len() < cfg.folds {
            return Err(Error::Stratification(format!(
                "class {c} has {} members, fewer than {} folds",
                members.len(),
                cfg.folds
            )));
        }
    }

    let mut repeats = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
        let (train, test) = stratified_split(&y, n_classes, cfg.train_frac, &mut rng);
        for (c, members) in members_by_class(&train, &y, n_classes).iter().enumerate() {
            if members.len() < cfg.folds {
                return Err(Error::Stratification(format!(
                    "class {c} has {} training members, fewer than {} folds",
                    members.len(),
                    cfg.folds
                )));
            }
        }
        let folds = stratified_folds(&train, &y, n_classes, cfg.folds, &mut rng);
        let cv: Vec<f64> = cfg
            .c_grid
            .par_iter()
            .map(|&c| {
                let params = SvmParams {
                    c,
                    tol: cfg.tol,
                    ..Default::default()
                };
                let mut hits = 0;
                let mut total = 0;
                for f in 0..folds.len() {
                    let fit: Vec<usize> = folds
                        .iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .flat_map(|(_, v)| v.iter().copied())
                        .collect::<std::collections::BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    let (h, t) = fit_and_score(k, &y, &fit, &folds[f], &params)?;
                    hits += h;
                    total += t;
                }
                Ok(hits as f64 / total.max(1) as f64)
            })
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (i, &a) in cv.iter().enumerate() {
            if a > cv[best] {
                best = i;
            }
        }
        let c = cfg.c_grid[best];
        let params = SvmParams {
            c,
            tol: cfg.tol,
            ..Default::default()
        };
        let acc = if test.is_empty() {
            return Err(Error::Stratification("test split is empty".into()));
        } else {
            let train_y: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let model = MulticlassSvm::fit(&k.select(&train, &train), &train_y, &params)?;
            let mut pred = Vec::with_capacity(test.len());
            for &t in &test {
                let row: Vec<f64> = train.iter().map(|&j| k[(t, j)]).collect();
                pred.push(model.predict(&row)?);
            }
            let truth: Vec<usize> = test.iter().map(|&t| y[t]).collect();
            accuracy(&pred, &truth)?
        };
        log::info!("repeat {r}: C={c} cv={:.4} test={acc:.4}", cv[best]);
        repeats.push(RepeatResult {
            repeat: r,
            c,
            cv_accuracy: cv[best],
            accuracy: acc,
        });
    }
    let accs: Vec<f64> = repeats.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    Ok(EvalResult {
        repeats,
        mean,
        std,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_kernel(n_per: usize) -> (Matrix, Vec<String>) {
        let n = 2 * n_per;
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i / n_per == j / n_per {
                    k[(i, j)] = 1.0;
                }
            }
        }
        let labels = (0..n)
            .map(|i| if i < n_per { "a".to_string() } else { "b".to_string() })
            .collect();
        (k, labels)
    }

    #[test]
    fn block_diagonal_is_perfect() {
        let (k, y) = block_kernel(10);
        let r = evaluate_classification(&k, &y, &EvalConfig::default()).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.std, 0.0);
        assert_eq!(r.repeats.len(), 5);
    }

    #[test]
    fn deterministic_under_seed() {
        let (k, y) = block_kernel(12);
        let cfg = EvalConfig {
            seed: 7,
            ..Default::default()
        };
        assert_eq!(
            evaluate_classification(&k, &y, &cfg).unwrap(),
            evaluate_classification(&k, &y, &cfg).unwrap()
        );
    }

    #[test]
    fn too_few_samples_or_members() {
        let (k, y) = block_kernel(4);
        assert!(matches!(
            evaluate_classification(&k, &y, &EvalConfig::default()),
            Err(Error::Argument(_))
        ));
        let (k, mut y) = block_kernel(6);
        for l in y.iter_mut().skip(8) {
            *l = "c".into();
        }
        assert!(matches!(
            evaluate_classification(&k, &y, &EvalConfig::default()),
            Err(Error::Stratification(_))
        ));
    }

    #[test]
    fn split_keeps_ratios() {
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 70)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, test) = stratified_split(&y, 2, 0.9, &mut rng);
        assert_eq!(train.len(), 90);
        assert_eq!(test.iter().filter(|&&i| y[i] == 1).count(), 3);
        let folds = stratified_folds(&train, &y, 2, 5, &mut rng);
        assert!(folds.iter().all(|f| f.len() == 18));
    }

    #[test]
    fn report_lines() {
        let (k, y) = block_kernel(10);
        let r = evaluate_classification(&k, &y, &EvalConfig::default()).unwrap();
        let mut buf = Vec::new();
        r.write_report("toy", "wl", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("toy, wl, 0, "));
        assert!(text.trim_end().ends_with("1.000000 ± 0.000000"));
    }
}
