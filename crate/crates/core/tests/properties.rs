mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sg2v::embed::{radial_context, sample_negatives, ContextMultiset, NoiseDistribution};
use sg2v::kernel::deep_wl_kernel_with;
use sg2v::matrix::Matrix;
use sg2v::wl::wl_levels;
use sg2v::*;

fn arb_dataset() -> impl Strategy<Value = GraphDataset> {
    proptest::collection::vec(common::arb_graph(8), 1..5).prop_map(|gs| GraphDataset::new("arb", gs).unwrap())
}

/// Groups (graph, node, degree) occurrences by their vocabulary id.
fn partition(ds: &GraphDataset, vocab: &SubgraphVocab) -> BTreeSet<Vec<(usize, usize, usize)>> {
    let mut groups = vec![Vec::new(); vocab.len()];
    for (gi, idx) in vocab.index_dataset(ds).iter().enumerate() {
        for d in 0..=vocab.max_degree() {
            for (v, id) in idx.level(d).iter().enumerate() {
                groups[id.unwrap()].push((gi, v, d));
            }
        }
    }
    groups.into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonicals_survive_permutation((g, perm) in common::arb_permuted_graph(10)) {
        let h = g.permuted(&perm).unwrap();
        for (a, b) in wl_levels(&g, 3).into_iter().zip(wl_levels(&h, 3)) {
            let (mut a, mut b) = (a, b);
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn kernel_values_survive_permutation((g, perm) in common::arb_permuted_graph(10)) {
        let h = g.permuted(&perm).unwrap();
        let ds = GraphDataset::new("pair", vec![g, h]).unwrap();
        let vocab = SubgraphVocab::build(&ds, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = EmbeddingModel::initialize(vocab.len(), &TrainingConfig::default(), &mut rng).input;
        let k = deep_wl_kernel_with(&ds, &vocab, &e).unwrap();
        prop_assert_eq!(k.get(0, 0).to_bits(), k.get(1, 1).to_bits());
        prop_assert_eq!(k.get(0, 0).to_bits(), k.get(0, 1).to_bits());
    }

    #[test]
    fn lower_degree_is_a_strict_prefix(g in common::arb_graph(10)) {
        let levels = wl_levels(&g, 3);
        for d in 1..levels.len() {
            for v in 0..g.num_nodes() {
                prop_assert!(levels[d][v].starts_with(&levels[d - 1][v]));
                prop_assert!(levels[d][v].len() > levels[d - 1][v].len());
            }
        }
    }

    #[test]
    fn vocab_grows_with_degree(ds in arb_dataset()) {
        let mut last = 0;
        for d in 0..4 {
            let vocab = SubgraphVocab::build(&ds, d).unwrap();
            prop_assert!(vocab.len() >= last);
            prop_assert_eq!(vocab.total_frequency(), (ds.total_nodes() * (d + 1)) as u64);
            last = vocab.len();
        }
    }

    #[test]
    fn compressed_and_full_partitions_agree(ds in arb_dataset()) {
        let full = SubgraphVocab::build_with(&ds, 3, Encoding::Full).unwrap();
        let compressed = SubgraphVocab::build_with(&ds, 3, Encoding::Compressed).unwrap();
        prop_assert_eq!(full.len(), compressed.len());
        prop_assert_eq!(partition(&ds, &full), partition(&ds, &compressed));
    }

    #[test]
    fn vocab_build_is_deterministic(ds in arb_dataset()) {
        prop_assert_eq!(SubgraphVocab::build(&ds, 2).unwrap(), SubgraphVocab::build(&ds, 2).unwrap());
    }

    #[test]
    fn context_degrees_stay_in_range(g in common::arb_graph(10), max_degree in 0usize..4) {
        let ds = GraphDataset::new("one", vec![g]).unwrap();
        let vocab = SubgraphVocab::build(&ds, max_degree).unwrap();
        let g = &ds.graphs()[0];
        for v in 0..g.num_nodes() {
            for d in 0..=max_degree {
                let ctx = radial_context(v, d, g, max_degree, &vocab).unwrap();
                let lo = d.saturating_sub(1);
                let hi = (d + 1).min(max_degree);
                let n = g.neighbors(v).unwrap().len();
                prop_assert_eq!(ctx.len(), n * (hi - lo + 1));
                for &id in ctx.ids() {
                    let deg = vocab.degree(id);
                    prop_assert!(lo <= deg && deg <= hi);
                }
            }
        }
    }

    #[test]
    fn negatives_avoid_context_and_target(
        size in 1usize..=50,
        ids in proptest::collection::vec(0usize..50, 0..10),
        target in 0usize..50,
        k in 0usize..12,
        seed in any::<u64>(),
    ) {
        let target = target % size;
        let ctx = ContextMultiset::from_ids(ids.into_iter().map(|i| i % size).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let negs = sample_negatives(&NoiseDistribution::uniform(size), &ctx, target, k, &mut rng);
        let eligible = (0..size).filter(|&i| i != target && !ctx.contains(i)).count();
        prop_assert_eq!(negs.len(), k.min(eligible));
        let distinct: BTreeSet<_> = negs.iter().collect();
        prop_assert_eq!(distinct.len(), negs.len());
        for n in negs {
            prop_assert!(n != target && !ctx.contains(n));
        }
    }

    #[test]
    fn jsonl_round_trip(ds in arb_dataset()) {
        let mut buf = Vec::new();
        write_jsonl(&ds, &mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("arb.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let back = load_jsonl(&path).unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in ds.graphs().iter().zip(back.graphs()) {
            prop_assert_eq!(a.graph_id, b.graph_id);
            prop_assert_eq!(a.labels(), b.labels());
            prop_assert_eq!(a.edges(), b.edges());
        }
    }

    #[test]
    fn degree_labels_sum_to_twice_edges(g in common::arb_graph(12)) {
        let r = graph::degree_relabel(&g);
        let total: usize = r.labels().iter().map(|l| l.parse::<usize>().unwrap()).sum();
        prop_assert_eq!(total, 2 * r.num_edges());
    }

    #[test]
    fn ari_symmetric_and_relabel_invariant(
        a in proptest::collection::vec(0usize..4, 2..30),
        b_seed in proptest::collection::vec(0usize..4, 30),
        shift in 1usize..10,
    ) {
        let b = &b_seed[..a.len()];
        let ab = adjusted_rand_index(&a, b).unwrap();
        let ba = adjusted_rand_index(b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        let relabeled: Vec<usize> = a.iter().map(|x| (x + shift) * 7).collect();
        prop_assert!((adjusted_rand_index(&relabeled, b).unwrap() - ab).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn normalization_is_idempotent(ds in arb_dataset()) {
        let vocab = SubgraphVocab::build(&ds, 2).unwrap();
        let once = normalize_kernel(&wl_kernel(&ds, &vocab).unwrap()).unwrap();
        let twice = normalize_kernel(&once).unwrap();
        for (x, y) in once.values.as_slice().iter().zip(twice.values.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn deep_kernel_is_psd(ds in arb_dataset(), seed in any::<u64>()) {
        let vocab = SubgraphVocab::build(&ds, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = TrainingConfig { dimensions: 4, ..Default::default() };
        let e = EmbeddingModel::initialize(vocab.len(), &cfg, &mut rng).input;
        prop_assert!(deep_wl_kernel_with(&ds, &vocab, &e).unwrap().is_psd(1e-8).unwrap());
    }

    #[test]
    fn identity_embeddings_give_wl(ds in arb_dataset()) {
        let vocab = SubgraphVocab::build(&ds, 2).unwrap();
        let deep = deep_wl_kernel_with(&ds, &vocab, &Matrix::identity(vocab.len())).unwrap();
        prop_assert_eq!(deep.values, wl_kernel(&ds, &vocab).unwrap().values);
    }
}
