//! C-SVC on a precomputed kernel, solved with SMO.
//!
//! Solves `min ½ αᵀQα − eᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ C`, with
//! `Q_ij = y_i y_j K_ij`, using maximal-violating-pair working set
//! selection with second-order information.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Consecutive no-progress iterations allowed, as a multiple of n.
    pub stall_factor: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            stall_factor: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Training-set indices with α > 0.
    pub support: Vec<usize>,
    /// `α_i y_i` for each support index.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Full dual solution over the training set.
    pub alpha: Vec<f64>,
    pub n_train: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmModel {
    pub fn decision_value(&self, k_row: &[f64]) -> Result<f64> {
        if k_row.len() != self.n_train {
            return Err(Error::Bounds {
                what: "kernel row length",
                index: k_row.len(),
                len: self.n_train,
            });
        }
        let s: f64 = self
            .support
            .iter()
            .zip(&self.dual_coef)
            .map(|(&i, &c)| c * k_row[i])
            .sum();
        Ok(s + self.bias)
    }

    /// Dual objective `½ αᵀQα − Σα` on the training kernel.
    pub fn dual_objective(&self, k: &Matrix, y: &[f64]) -> f64 {
        dual_objective(k, y, &self.alpha)
    }
}

pub fn dual_objective(k: &Matrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[(i, j)];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

fn validate(k: &Matrix, y: &[f64], params: &SvmParams) -> Result<()> {
    if !k.is_square() || k.rows() != y.len() {
        return Err(Error::Bounds {
            what: "kernel size vs labels",
            index: k.rows(),
            len: y.len(),
        });
    }
    if params.c <= 0.0 || !params.c.is_finite() {
        return Err(Error::Argument(format!("C must be positive, got {}", params.c)));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::Argument(format!("labels must be ±1, got {bad}")));
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels("both classes must be present".into()));
    }
    Ok(())
}

/// Trains a binary C-SVC on a precomputed training kernel with labels ±1.
pub fn svm_train(k: &Matrix, y: &[f64], c: f64, tol: f64) -> Result<SvmModel> {
    svm_train_with(
        k,
        y,
        &SvmParams {
            c,
            tol,
            ..Default::default()
        },
    )
}

pub fn svm_train_with(k: &Matrix, y: &[f64], params: &SvmParams) -> Result<SvmModel> {
    validate(k, y, params)?;
    let n = y.len();
    let c = params.c;
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|t| k[(t, t)]).collect();
    let in_up = |t: usize, a: f64| (y[t] > 0.0 && a < c) || (y[t] < 0.0 && a > 0.0);
    let in_low = |t: usize, a: f64| (y[t] > 0.0 && a > 0.0) || (y[t] < 0.0 && a < c);

    let max_iter = (100 * n).max(10_000_000);
    let stall_limit = params.stall_factor.max(1) * n;
    let mut stalls = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(t, alpha[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            let k_i = k.row(i);
            for t in 0..n {
                if !in_low(t, alpha[t]) {
                    continue;
                }
                gmax2 = gmax2.max(y[t] * grad[t]);
                let diff = gmax + y[t] * grad[t];
                if diff > 0.0 {
                    let mut quad = k_i[i] + diag[t] - 2.0 * k_i[t];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -diff * diff / quad;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        let (ci, cj) = (y[i] * di, y[j] * dj);
        for (t, (g, (ki, kj))) in grad.iter_mut().zip(k.row(i).iter().zip(k.row(j))).enumerate() {
            *g += y[t] * (ki * ci + kj * cj);
        }
        if di.abs() + dj.abs() < 1e-14 {
            stalls += 1;
            if stalls >= stall_limit {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance");
    }

    // Bias from free variables, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    let support: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let dual_coef = support.iter().map(|&t| alpha[t] * y[t]).collect();
    Ok(SvmModel {
        support,
        dual_coef,
        bias: -rho,
        c,
        alpha,
        n_train: n,
        iterations,
        converged,
    })
}

/// `sign(decision)`, with an exact zero mapped to +1.
pub fn svm_predict(model: &SvmModel, k_row: &[f64]) -> Result<f64> {
    let v = model.decision_value(k_row)?;
    Ok(if v >= 0.0 { 1.0 } else { -1.0 })
}

/// One-vs-one multiclass wrapper over binary SVMs.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    n_classes: usize,
    n_train: usize,
    /// (class a, class b, training indices of both, model with a = +1).
    pairs: Vec<(usize, usize, Vec<usize>, SvmModel)>,
}

impl MulticlassSvm {
    /// `labels` are class indices in `0..n_classes`.
    pub fn fit(k: &Matrix, labels: &[usize], params: &SvmParams) -> Result<Self> {
        if !k.is_square() || k.rows() != labels.len() {
            return Err(Error::Bounds {
                what: "kernel size vs labels",
                index: k.rows(),
                len: labels.len(),
            });
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let present: Vec<usize> = (0..n_classes).filter(|c| labels.contains(c)).collect();
        if present.len() < 2 {
            return Err(Error::DegenerateLabels("at least two classes are required".into()));
        }
        let mut pairs = Vec::new();
        for (ai, &a) in present.iter().enumerate() {
            for &b in &present[ai + 1..] {
                let idx: Vec<usize> = (0..labels.len())
                    .filter(|&t| labels[t] == a || labels[t] == b)
                    .collect();
                let y: Vec<f64> = idx.iter().map(|&t| if labels[t] == a { 1.0 } else { -1.0 }).collect();
                let model = svm_train_with(&k.select(&idx, &idx), &y, params)?;
                pairs.push((a, b, idx, model));
            }
        }
        Ok(MulticlassSvm {
            n_classes,
            n_train: labels.len(),
            pairs,
        })
    }

    /// Majority vote; ties go to the smallest class index.
    pub fn predict(&self, k_row: &[f64]) -> Result<usize> {
        if k_row.len() != self.n_train {
            return Err(Error::Bounds {
                what: "kernel row length",
                index: k_row.len(),
                len: self.n_train,
            });
        }
        let mut votes = vec![0usize; self.n_classes];
        for (a, b, idx, model) in &self.pairs {
            let sub: Vec<f64> = idx.iter().map(|&t| k_row[t]).collect();
            if svm_predict(model, &sub)? > 0.0 {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
        }
        Ok(argmax_first(&votes))
    }

    pub fn pair_models(&self) -> impl Iterator<Item = (usize, usize, &SvmModel)> {
        self.pairs.iter().map(|(a, b, _, m)| (*a, *b, m))
    }
}

fn argmax_first(votes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}
