mod common;

use common::{best_pair_exhaustive, dtw_exhaustive, sym_kl_direct};
use contrastad::dgcl::{
    anchor_graph, build_topology, degree_distribution, dgcl_loss, dtw_distance, edge_budget, edge_density,
    expected_degree, graph_contrastive_score, max_edges, normalized_adjacency, select_divergent_pair, sym_kl,
    write_diagnostics_rows, DgclConfig, Edge, GcnEncoder, GcnFeatures, SnapshotGraph, DIAGNOSTICS_HEADER,
};
use contrastad::diffcore::{check_gradients, Graph, Tensor};
use contrastad::params::{Init, ParamStore};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_graph(rng: &mut ChaCha8Rng, index: usize, n: usize) -> SnapshotGraph {
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    pairs.shuffle(rng);
    let k = rng.random_range(1..=pairs.len());
    let edges = pairs[..k].iter().map(|&(a, b)| Edge { a, b, distance: 1.0 }).collect();
    SnapshotGraph::from_edges(index, n, edges).unwrap()
}

#[test]
fn dtw_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let len = rng.random_range(1..=7);
        let a = random_vec(&mut rng, len, 0.0, 3.0);
        let b = random_vec(&mut rng, len, 0.0, 3.0);
        let d = dtw_distance(&a, &b, None).unwrap();
        assert!((d - dtw_exhaustive(&a, &b, None)).abs() <= 1e-9, "{a:?} {b:?}");
        assert_eq!(dtw_distance(&a, &a, None).unwrap(), 0.0);
        assert_eq!(d, dtw_distance(&b, &a, None).unwrap());
    }
}

#[test]
fn banded_dtw_matches_restricted_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let len = rng.random_range(2..=7);
        let r = rng.random_range(1..len.max(2));
        let a = random_vec(&mut rng, len, 0.0, 3.0);
        let b = random_vec(&mut rng, len, 0.0, 3.0);
        let banded = dtw_distance(&a, &b, Some(r)).unwrap();
        assert!((banded - dtw_exhaustive(&a, &b, Some(r))).abs() <= 1e-9);
        assert!(banded >= dtw_distance(&a, &b, None).unwrap() - 1e-12);
    }
}

#[test]
fn dtw_small_examples() {
    assert_eq!(dtw_distance(&[0.0, 1.0, 2.0], &[0.0, 0.0, 2.0], None).unwrap(), 1.0);
    // A one-step shift costs only the endpoints.
    assert_eq!(dtw_distance(&[0.0, 0.0, 1.0, 2.0], &[0.0, 1.0, 2.0, 2.0], None).unwrap(), 0.0);
    assert!(dtw_distance(&[1.0, 2.0], &[1.0], None).is_err());
}

#[test]
fn budget_matches_direct_summation() {
    // (γ, N, floor(N·E(X)/2)) from 50-digit summation.
    let expected: [(f64, [usize; 6]); 3] = [
        (2.0, [3, 9, 29, 49, 70, 77]),
        (2.5, [3, 7, 20, 32, 44, 48]),
        (3.0, [3, 6, 16, 25, 34, 37]),
    ];
    let sizes = [5, 10, 25, 38, 51, 55];
    for (gamma, ks) in expected {
        for (n, k) in sizes.into_iter().zip(ks) {
            assert_eq!(edge_budget(gamma, n, None).unwrap(), k, "γ={gamma} N={n}");
            // Reverse-order summation as a second, looser check on E(X).
            let num: f64 = (1..=n).rev().map(|j| (j as f64).powf(1.0 - gamma)).sum();
            let den: f64 = (1..=n).rev().map(|j| (j as f64).powf(-gamma)).sum();
            assert!((expected_degree(gamma, n).unwrap() - num / den).abs() < 1e-12);
        }
    }
    assert!((expected_degree(2.0, 51).unwrap() - 2.779_923_324_289_757).abs() < 1e-12);
}

#[test]
fn budget_is_monotone() {
    for n in 2..80 {
        let mut prev = usize::MAX;
        for g in [1.5, 2.0, 2.5, 3.0, 4.0] {
            let k = edge_budget(g, n, None).unwrap();
            assert!(k <= prev && k >= 1 && k <= max_edges(n));
            prev = k;
        }
        assert!(edge_budget(2.5, n + 1, None).unwrap() >= edge_budget(2.5, n, None).unwrap());
    }
}

#[test]
fn override_gives_table_density() {
    let k = edge_budget(3.0, 51, Some(16)).unwrap();
    assert_eq!(k, 16);
    assert!((edge_density(k, 51) * 100.0 - 1.2549).abs() < 5e-5);
    assert!(edge_budget(3.0, 51, Some(0)).is_err());
    assert!(edge_budget(3.0, 4, Some(7)).is_err());
    assert!(edge_budget(1.0, 10, None).is_err());
}

#[test]
fn snapshot_graphs_respect_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.random_range(3..=12);
        let s = rng.random_range(3..=6);
        let w = s * rng.random_range(2..=6);
        let cfg = DgclConfig {
            n_snapshots: s,
            gamma: rng.random_range(1.5..3.5),
            ..DgclConfig::default()
        };
        let window = Tensor::matrix(n, w, random_vec(&mut rng, n * w, -1.0, 1.0)).unwrap();
        let topo = build_topology(&window, &cfg).unwrap();
        assert_eq!(topo.budget, edge_budget(cfg.gamma, n, None).unwrap());
        assert_eq!(topo.graphs.len(), s);
        for g in &topo.graphs {
            assert_eq!(g.edges.len(), topo.budget);
            let a = &g.adjacency;
            let ones = a.data().iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 2 * topo.budget);
            assert!(a.data().iter().all(|&v| v == 0.0 || v == 1.0));
            for i in 0..n {
                assert_eq!(a.at2(i, i), 0.0);
                for j in 0..n {
                    assert_eq!(a.at2(i, j), a.at2(j, i));
                }
            }
            let total: f64 = g.degree_distribution.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let anchor = anchor_graph(&topo.graphs, topo.pair.p, topo.pair.q).unwrap();
        assert_eq!(anchor, topo.anchor);
        assert!(topo.pair.p < topo.pair.q);
        assert_eq!(topo.divergences.len(), s * (s - 1) / 2);
    }
}

#[test]
fn edges_are_the_most_dissimilar_pairs() {
    // Nodes 0 and 3 are far from everything; 1 and 2 coincide.
    let rows = [[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], [5.0, 5.0, 5.0, 5.0]];
    let window = Tensor::matrix(4, 12, rows.iter().flat_map(|r| r.repeat(3)).collect()).unwrap();
    let cfg = DgclConfig {
        n_snapshots: 3,
        override_edges: Some(3),
        ..DgclConfig::default()
    };
    let topo = build_topology(&window, &cfg).unwrap();
    let pairs: Vec<(usize, usize)> = topo.graphs[0].edges.iter().map(|e| (e.a, e.b)).collect();
    assert_eq!(pairs, vec![(0, 3), (1, 3), (2, 3)]);
}

#[test]
fn divergence_examples() {
    let d = sym_kl(&[0.5, 0.5], &[0.9, 0.1], 1e-12).unwrap();
    let direct = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln() + 0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln();
    assert!((d - 0.8789).abs() < 1e-3);
    assert!((d - direct).abs() < 1e-9);
    assert!(sym_kl(&[0.5, 0.5], &[1.0], 1e-8).is_err());
    assert!(sym_kl(&[0.5, 0.6], &[0.5, 0.5], 1e-8).is_err());
}

#[test]
fn degree_distribution_of_a_star() {
    let edges = (1..5).map(|b| Edge { a: 0, b, distance: 0.0 }).collect();
    let g = SnapshotGraph::from_edges(1, 5, edges).unwrap();
    assert_eq!(g.degree_distribution, vec![0.0, 0.8, 0.0, 0.0, 0.2]);
    assert_eq!(degree_distribution(&Tensor::zeros(&[3, 3])), vec![1.0, 0.0, 0.0]);
}

#[test]
fn divergent_pair_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for trial in 0..100 {
        let n = rng.random_range(3..=8);
        let mut graphs: Vec<SnapshotGraph> = (1..=10).map(|i| random_graph(&mut rng, i, n)).collect();
        if trial % 4 == 0 {
            // Duplicate snapshots create tied divergences.
            let mut dup = graphs[2].clone();
            dup.index = 8;
            graphs[7] = dup;
        }
        let (pair, all) = select_divergent_pair(&graphs, 1e-8).unwrap();
        assert_eq!((pair.p, pair.q), best_pair_exhaustive(&graphs, 1e-8));
        assert!(all.iter().all(|d| d.divergence <= pair.divergence));
    }
}

proptest! {
    #[test]
    fn sym_kl_properties(raw_a in prop::collection::vec(0.0f64..1.0, 1..12), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw_b: Vec<f64> = raw_a.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum::<f64>() + 1e-300;
            if s < 1e-6 { let mut u = vec![0.0; v.len()]; u[0] = 1.0; u } else { v.iter().map(|x| x / s).collect::<Vec<_>>() }
        };
        let (a, b) = (norm(&raw_a), norm(&raw_b));
        prop_assume!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9 && (b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let ab = sym_kl(&a, &b, 1e-8).unwrap();
        prop_assert!(sym_kl(&a, &a, 1e-8).unwrap().abs() <= 1e-12);
        prop_assert_eq!(ab.to_bits(), sym_kl(&b, &a, 1e-8).unwrap().to_bits());
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - sym_kl_direct(&a, &b, 1e-8)).abs() <= 1e-9 * ab.max(1.0));
    }
}

fn embeddings(g: &mut Graph, rng: &mut ChaCha8Rng, b: usize, d: usize) -> [contrastad::diffcore::NodeId; 3] {
    [0, 1, 2].map(|_| {
        let mut data = random_vec(rng, b * d, -1.0, 1.0);
        for row in data.chunks_mut(d) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= n);
        }
        g.constant(Tensor::matrix(b, d, data).unwrap())
    })
}

#[test]
fn contrastive_score_special_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let d = rng.random_range(1..6);
        let mut g = Graph::new();
        let [a, p, q] = embeddings(&mut g, &mut rng, 1, d);
        let s = graph_contrastive_score(&mut g, a, p, q, rng.random_range(0.05..2.0)).unwrap();
        assert_eq!(g.value(s).item(), 0.0);
    }
    for b in 1..=9 {
        let mut g = Graph::new();
        let z = g.constant(Tensor::matrix(b, 3, [0.6, 0.0, 0.8].repeat(b)).unwrap());
        let s = graph_contrastive_score(&mut g, z, z, z, 0.1).unwrap();
        assert!((g.value(s).item() - (1.0 / b as f64).ln()).abs() <= 1e-9);
    }
    let mut g = Graph::new();
    let [a, p, q] = embeddings(&mut g, &mut rng, 3, 2);
    assert!(graph_contrastive_score(&mut g, a, p, q, 0.0).is_err());
}

#[test]
fn log_softmax_terms_are_non_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..1000 {
        let b = rng.random_range(1..10);
        let d = rng.random_range(1..8);
        let tau = rng.random_range(0.01..2.0);
        let mut g = Graph::new();
        let [u, v, _] = embeddings(&mut g, &mut rng, b, d);
        let vt = g.transpose(v).unwrap();
        let sim = g.matmul(u, vt).unwrap();
        let sim = g.scale(sim, 1.0 / tau).unwrap();
        let ls = g.log_softmax(sim, 1).unwrap();
        assert!(g.value(ls).data().iter().all(|&x| x <= 0.0));
    }
}

#[test]
fn normalized_adjacency_of_regular_graph_has_unit_rows() {
    // A 6-cycle: every node has degree 2, so each row of Â sums to 1.
    let edges = (0..6).map(|i| Edge { a: i, b: (i + 1) % 6, distance: 0.0 }).collect();
    let g = SnapshotGraph::from_edges(1, 6, edges).unwrap();
    let a = normalized_adjacency(&g.adjacency).unwrap();
    for i in 0..6 {
        assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for j in 0..6 {
            assert_eq!(a.at2(i, j), a.at2(j, i));
        }
    }
    assert!(normalized_adjacency(&Tensor::zeros(&[2, 3])).is_err());
}

#[test]
fn encoder_rows_have_unit_norm() {
    let mut store = ParamStore::new();
    let enc = GcnEncoder::new("gcn", 6, 5, 4);
    enc.declare(&mut store, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let window = Tensor::matrix(7, 20, random_vec(&mut rng, 140, -1.0, 1.0)).unwrap();
    let cfg = DgclConfig {
        n_snapshots: 4,
        ..DgclConfig::default()
    };
    let topo = build_topology(&window, &cfg).unwrap();
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let x = g.constant(topo.features_p.clone());
    let z = enc.encode(&mut g, &p, &topo.a_hat_p, x).unwrap();
    let z = g.value(z);
    assert_eq!(z.shape(), &[7, 4]);
    for i in 0..7 {
        let n = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn contrastive_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let window = Tensor::matrix(5, 16, random_vec(&mut rng, 80, -1.0, 1.0)).unwrap();
    let cfg = DgclConfig {
        n_snapshots: 4,
        gcn_hidden: 4,
        gcn_out: 3,
        temperature: 0.5,
        ..DgclConfig::default()
    };
    let topo = build_topology(&window, &cfg).unwrap();
    let mut store = ParamStore::new();
    cfg.declare(&mut store, 0, 9).unwrap();
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    dgcl_loss(&mut g, &p, &topo, &cfg, None).unwrap();
    let report = check_gradients(&mut g, 1e-6, 1e-4, 1e-6).unwrap();
    assert!(report.passed(), "{:?}", report.failures);
    assert_eq!(report.checked, store.size());

    // Embedding features route gradients into the activations as well.
    let emb = DgclConfig {
        features: GcnFeatures::Embedding,
        ..cfg.clone()
    };
    let mut store = ParamStore::new();
    emb.declare(&mut store, 2, 9).unwrap();
    store.declare("act", &[5, 2, 16], Init::FanIn(1), 4).unwrap();
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let act = p.id("act").unwrap();
    assert!(dgcl_loss(&mut g, &p, &topo, &emb, None).is_err());
    dgcl_loss(&mut g, &p, &topo, &emb, Some(act)).unwrap();
    let report = check_gradients(&mut g, 1e-6, 1e-4, 1e-6).unwrap();
    assert!(report.passed(), "{:?}", report.failures);
}

#[test]
fn diagnostics_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let window = Tensor::matrix(4, 9, random_vec(&mut rng, 36, 0.0, 1.0)).unwrap();
    let cfg = DgclConfig {
        n_snapshots: 3,
        ..DgclConfig::default()
    };
    let topo = build_topology(&window, &cfg).unwrap();
    let mut out = Vec::new();
    write_diagnostics_rows(&mut out, 7, &topo).unwrap();
    let text = String::from_utf8(out).unwrap();
    let count = |kind: &str| text.lines().filter(|l| l.split(',').nth(1) == Some(kind)).count();
    assert_eq!(count("edge"), 3 * topo.budget);
    assert_eq!(count("degree"), 3 * 4);
    assert_eq!(count("divergence"), 3);
    assert_eq!(count("pair"), 1);
    let cols = DIAGNOSTICS_HEADER.split(',').count();
    assert!(text.lines().all(|l| l.starts_with("7,") && l.split(',').count() == cols));
}
