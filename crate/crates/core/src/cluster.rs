//! Affinity propagation over a precomputed similarity matrix.

use std::io::Write;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Preference {
    /// Median of the off-diagonal similarities.
    Median,
    Value(f64),
    PerPoint(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApParams {
    pub damping: f64,
    pub preference: Preference,
    pub max_iter: usize,
    /// Iterations the exemplar set must stay unchanged to stop.
    pub convergence_window: usize,
}

impl Default for ApParams {
    fn default() -> Self {
        ApParams {
            damping: 0.9,
            preference: Preference::Median,
            max_iter: 1000,
            convergence_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterResult {
    /// Exemplar index of every point.
    pub exemplars: Vec<usize>,
    /// Dense cluster id of every point, numbered by ascending exemplar index.
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterResult {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Writes `graph_id, cluster_id, exemplar_id` lines.
    pub fn write(&self, graph_ids: &[usize], mut out: impl Write) -> std::io::Result<()> {
        for (i, (&c, &e)) in self.labels.iter().zip(&self.exemplars).enumerate() {
            let gid = graph_ids.get(i).copied().unwrap_or(i);
            let eid = graph_ids.get(e).copied().unwrap_or(e);
            writeln!(out, "{gid}, {c}, {eid}")?;
        }
        Ok(())
    }
}

/// Median of the off-diagonal entries.
pub fn median_off_diagonal(s: &Matrix) -> f64 {
    let n = s.rows();
    let mut vals: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| s[(i, j)])
        .collect();
    if vals.is_empty() {
        return 0.0;
    }
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    if m % 2 == 1 {
        vals[m / 2]
    } else {
        0.5 * (vals[m / 2 - 1] + vals[m / 2])
    }
}

/// Deterministic value in [0, 1) for a cell, used to break exact ties.
fn cell_jitter(i: usize, k: usize) -> f64 {
    let mut z = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (k as u64).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

pub fn affinity_propagation(s: &Matrix, params: &ApParams) -> Result<ClusterResult> {
    if !s.is_square() {
        return Err(Error::Argument("similarity matrix must be square".into()));
    }
    if !(0.5..1.0).contains(&params.damping) {
        return Err(Error::Argument(format!(
            "damping must lie in [0.5, 1), got {}",
            params.damping
        )));
    }
    let n = s.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n == 1 {
        return Ok(ClusterResult {
            exemplars: vec![0],
            labels: vec![0],
            iterations: 0,
            converged: true,
        });
    }
    let prefs: Vec<f64> = match &params.preference {
        Preference::Median => vec![median_off_diagonal(s); n],
        Preference::Value(v) => vec![*v; n],
        Preference::PerPoint(p) => {
            if p.len() != n {
                return Err(Error::Bounds {
                    what: "preference length",
                    index: p.len(),
                    len: n,
                });
            }
            p.clone()
        }
    };

    let mut sim = s.clone();
    for (k, &p) in prefs.iter().enumerate() {
        sim[(k, k)] = p;
    }
    // Tiny deterministic perturbation so symmetric inputs do not leave the
    // messages sitting on an exact tie.
    let scale = sim
        .as_slice()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for i in 0..n {
        for k in 0..n {
            sim[(i, k)] += 1e-10 * scale * cell_jitter(i, k);
        }
    }

    let lambda = params.damping;
    let mut resp = Matrix::zeros(n, n);
    let mut avail = Matrix::zeros(n, n);
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut col = vec![0.0; n];

    for _ in 0..params.max_iter {
        iterations += 1;
        for i in 0..n {
            let (mut best, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for k in 0..n {
                let v = avail[(i, k)] + sim[(i, k)];
                if v > best {
                    second = best;
                    best = v;
                    arg = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == arg { second } else { best };
                let new = sim[(i, k)] - competitor;
                resp[(i, k)] = lambda * resp[(i, k)] + (1.0 - lambda) * new;
            }
        }
        for k in 0..n {
            let mut sum = 0.0;
            for i in 0..n {
                col[i] = if i == k { resp[(k, k)] } else { resp[(i, k)].max(0.0) };
                sum += col[i];
            }
            for i in 0..n {
                let new = if i == k { sum - col[k] } else { (sum - col[i]).min(0.0) };
                avail[(i, k)] = lambda * avail[(i, k)] + (1.0 - lambda) * new;
            }
        }
        let current: Vec<usize> = (0..n).filter(|&k| avail[(k, k)] + resp[(k, k)] > 0.0).collect();
        if current == exemplars {
            stable += 1;
        } else {
            stable = 0;
            exemplars = current;
        }
        if stable >= params.convergence_window && !exemplars.is_empty() {
            converged = true;
            break;
        }
    }

    if exemplars.is_empty() {
        let best = (0..n)
            .max_by(|&a, &b| {
                let ea = avail[(a, a)] + resp[(a, a)];
                let eb = avail[(b, b)] + resp[(b, b)];
                ea.total_cmp(&eb).then(b.cmp(&a))
            })
            .expect("n > 0");
        exemplars = vec![best];
        converged = false;
    }
    // Assign each point to its most similar exemplar; exemplars keep themselves.
    let mut assigned = vec![0usize; n];
    for i in 0..n {
        assigned[i] = if exemplars.binary_search(&i).is_ok() {
            i
        } else {
            let mut best = exemplars[0];
            for &e in &exemplars[1..] {
                if s[(i, e)] > s[(i, best)] {
                    best = e;
                }
            }
            best
        };
    }
    let labels = assigned
        .iter()
        .map(|e| exemplars.binary_search(e).expect("assigned to an exemplar"))
        .collect();
    Ok(ClusterResult {
        exemplars: assigned,
        labels,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks() -> Matrix {
        Matrix::from_rows(&[
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn single_point() {
        let r = affinity_propagation(&Matrix::identity(1), &ApParams::default()).unwrap();
        assert_eq!(r.exemplars, vec![0]);
        assert_eq!(r.labels, vec![0]);
    }

    #[test]
    fn two_blocks() {
        let r = affinity_propagation(&blocks(), &ApParams::default()).unwrap();
        assert_eq!(r.n_clusters(), 2);
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
        for &e in &r.exemplars {
            assert_eq!(r.exemplars[e], e);
        }
    }

    #[test]
    fn huge_preference_makes_singletons() {
        let s = Matrix::from_rows(&[vec![0.0, 0.5, 0.2], vec![0.5, 0.0, 0.4], vec![0.2, 0.4, 0.0]]).unwrap();
        let params = ApParams {
            preference: Preference::Value(10.0),
            ..Default::default()
        };
        let r = affinity_propagation(&s, &params).unwrap();
        assert_eq!(r.exemplars, vec![0, 1, 2]);
        assert_eq!(r.n_clusters(), 3);
    }

    #[test]
    fn bad_inputs() {
        let p = ApParams {
            damping: 0.3,
            ..Default::default()
        };
        assert!(affinity_propagation(&blocks(), &p).is_err());
        let rect = Matrix::zeros(2, 3);
        assert!(affinity_propagation(&rect, &ApParams::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let a = affinity_propagation(&blocks(), &ApParams::default()).unwrap();
        let b = affinity_propagation(&blocks(), &ApParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn median_of_off_diagonal() {
        assert_eq!(median_off_diagonal(&blocks()), 0.0);
    }
}
