#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sg2v::{Graph, GraphDataset};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn mutag() -> GraphDataset {
    sg2v::load_tu_dataset(data_dir().join("MUTAG"), "MUTAG").expect("vendored MUTAG loads")
}

pub fn labels(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Path a - b - a.
pub fn p3() -> Graph {
    Graph::new(0, labels(&["A", "B", "A"]), [(0, 1), (1, 2)], None).unwrap()
}

/// Random labeled graph: `n` nodes, each pair joined with probability `p`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, alphabet: usize) -> Graph {
    let labels = (0..n).map(|_| format!("L{}", rng.gen_range(0..alphabet))).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(0, labels, edges, None).unwrap()
}

pub fn random_dataset(seed: u64, graphs: usize, max_nodes: usize) -> GraphDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gs = (0..graphs)
        .map(|_| {
            let n = rng.gen_range(1..=max_nodes);
            random_graph(&mut rng, n, 0.3, 3)
        })
        .collect();
    GraphDataset::new("random", gs).unwrap()
}

/// Proptest strategy for small labeled undirected graphs.
pub fn arb_graph(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (1..=max_nodes).prop_flat_map(|n| {
        let labels = proptest::collection::vec(0u8..3, n);
        let edges = proptest::collection::vec((0..n, 0..n), 0..=2 * n);
        (labels, edges).prop_map(|(ls, es)| {
            let ls = ls
                .into_iter()
                .map(|l| ["A", "B", "C"][l as usize].to_string())
                .collect();
            Graph::new(0, ls, es, None).unwrap()
        })
    })
}

pub fn arb_permuted_graph(max_nodes: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    arb_graph(max_nodes).prop_flat_map(|g| {
        let perm = Just((0..g.num_nodes()).collect::<Vec<_>>()).prop_shuffle();
        (Just(g), perm)
    })
}

fn family_graph(family: usize, rng: &mut ChaCha8Rng) -> (Vec<String>, BTreeSet<(usize, usize)>) {
    let mut labels = Vec::new();
    let mut edges = BTreeSet::new();
    let add = |u: usize, v: usize, edges: &mut BTreeSet<(usize, usize)>| {
        edges.insert((u.min(v), u.max(v)));
    };
    match family {
        // Ring alternating A/B with C pendants.
        0 => {
            let ring = rng.gen_range(8..=12);
            for i in 0..ring {
                labels.push(if i % 2 == 0 { "A" } else { "B" }.to_string());
                add(i, (i + 1) % ring, &mut edges);
            }
            for i in (0..ring).step_by(3) {
                let p = labels.len();
                labels.push("C".into());
                add(i, p, &mut edges);
            }
        }
        // Complete binary tree, label by depth parity.
        1 => {
            let n: usize = rng.gen_range(11..=16);
            for i in 0..n {
                let depth = usize::BITS - (i + 1usize).leading_zeros() - 1;
                labels.push(if depth.is_multiple_of(2) { "A" } else { "C" }.to_string());
                if i > 0 {
                    add(i, (i - 1) / 2, &mut edges);
                }
            }
        }
        // Chain of triangles sharing vertices, B spine with A apexes.
        _ => {
            let k = rng.gen_range(4..=6);
            let spine: Vec<usize> = (0..=k).collect();
            labels.extend((0..=k).map(|_| "B".to_string()));
            for w in spine.windows(2) {
                let apex = labels.len();
                labels.push("A".into());
                add(w[0], w[1], &mut edges);
                add(w[0], apex, &mut edges);
                add(w[1], apex, &mut edges);
            }
        }
    }
    (labels, edges)
}

/// Three planted graph families with `noise` fraction of edges rewired.
pub fn planted_families(per_family: usize, noise: f64, seed: u64) -> GraphDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::new();
    for family in 0..3 {
        for _ in 0..per_family {
            let (labels, mut edges) = family_graph(family, &mut rng);
            let n = labels.len();
            let flips = ((edges.len() as f64) * noise).round() as usize;
            for _ in 0..flips {
                let list: Vec<_> = edges.iter().copied().collect();
                let drop = list[rng.gen_range(0..list.len())];
                edges.remove(&drop);
                loop {
                    let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
                    if u != v && edges.insert((u.min(v), u.max(v))) {
                        break;
                    }
                }
            }
            graphs.push(Graph::new(0, labels, edges, Some(family.to_string())).unwrap());
        }
    }
    GraphDataset::new("planted", graphs).unwrap()
}

/// Two families (rings and stars) for small training checks.
pub fn two_families(per_family: usize) -> GraphDataset {
    let mut graphs = Vec::new();
    for i in 0..per_family {
        let n = 5 + i % 4;
        let ring = (0..n).map(|v| (v, (v + 1) % n));
        graphs.push(Graph::new(0, vec!["R".to_string(); n], ring, Some("ring".into())).unwrap());
        let mut ls = vec!["H".to_string()];
        ls.extend((1..n).map(|_| "L".to_string()));
        graphs.push(Graph::new(0, ls, (1..n).map(|v| (0, v)), Some("star".into())).unwrap());
    }
    GraphDataset::new("two-families", graphs).unwrap()
}
