mod common;

use common::{
    brute_force_assignment, floyd_distances, random_graph, random_matrix, receptive_field_holds, ref_completeness,
    ref_homogeneity, ref_silhouette,
};
use nbrecon::encoder::EncoderKind;
use nbrecon::eval::{agglomerative_cluster, completeness, homogeneity, silhouette};
use nbrecon::graph::{generate_planted, Graph, ShapeKind, ShapeSpec};
use nbrecon::ot::{chamfer_loss, hungarian, sinkhorn_plan, wasserstein_loss};
use nbrecon::tensor::{Tape, Tensor};
use nbrecon::train::{embed, sample_neighbors, Model, TrainConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_graph() -> impl Strategy<Value = Graph> {
    (2usize..14, 0.05f64..0.6, any::<u64>()).prop_map(|(n, p, seed)| random_graph(n, p, 3, seed))
}

fn square(max: usize) -> impl Strategy<Value = Tensor> {
    (1..=max).prop_flat_map(|n| {
        prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |d| Tensor::matrix(n, n, d).unwrap())
    })
}

fn labelling(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..max_k, n),
            prop::collection::vec(0..max_k, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn k_hop_matches_all_pairs_distances(g in small_graph(), k in 0usize..5) {
        let d = floyd_distances(g.num_nodes(), g.edges());
        for v in 0..g.num_nodes() {
            let want: Vec<usize> = (0..g.num_nodes()).filter(|&u| u != v && d[v][u] <= k).collect();
            prop_assert_eq!(g.k_hop_neighborhood(v, k).unwrap(), want);
        }
    }

    #[test]
    fn receptive_field(g in small_graph(), k in 1usize..4, seed in any::<u64>(), gin in any::<bool>()) {
        let kind = if gin { EncoderKind::Gin } else { EncoderKind::Gcn };
        let v = (seed as usize) % g.num_nodes();
        prop_assert!(receptive_field_holds(&g, v, k, kind, seed));
    }

    #[test]
    fn hungarian_is_optimal(c in square(6)) {
        let a = hungarian(&c).unwrap();
        let mut seen = a.perm.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..c.rows()).collect::<Vec<_>>());
        let via_perm: f64 = a.perm.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
        prop_assert_eq!(a.total, via_perm);
        prop_assert!((a.total - brute_force_assignment(&c)).abs() <= 1e-9);
    }

    #[test]
    fn hungarian_total_ignores_row_order(c in square(7), seed in any::<u64>()) {
        let n = c.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = c.select_rows(&order);
        let (a, b) = (hungarian(&c).unwrap().total, hungarian(&shuffled).unwrap().total);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn wasserstein_properties(n in 1usize..6, d in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(n, d, &mut rng);
        let b = random_matrix(n, d, &mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let tape = Tape::new();
        let (va, vb) = (tape.leaf(&a), tape.leaf(&b));
        let ab = wasserstein_loss(va, vb).unwrap().item();
        let ba = wasserstein_loss(vb, va).unwrap().item();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert_eq!(wasserstein_loss(va, tape.leaf(&a.select_rows(&order))).unwrap().item(), 0.0);
        // Each nearest-neighbor direction costs at most the optimal matching.
        let ch = chamfer_loss(va, vb).unwrap().item();
        prop_assert!(ch <= 2.0 * ab + 1e-12);
    }

    #[test]
    fn sinkhorn_marginals(c in square(5), eps in 0.5f64..2.0) {
        // Costs in [0, 1] keep the kernel well conditioned, so rows converge fast.
        let n = c.rows();
        let c = Tensor::matrix(n, n, c.data().iter().map(|x| (x + 5.0) / 10.0).collect()).unwrap();
        let plan = sinkhorn_plan(&c, eps, 3000).unwrap();
        let u = 1.0 / n as f64;
        for i in 0..n {
            // The column update runs last, so columns are exact and rows converge.
            let col: f64 = (0..n).map(|r| plan.get(r, i)).sum();
            prop_assert!((col - u).abs() < 1e-12);
            let row: f64 = plan.row(i).iter().sum();
            prop_assert!((row - u).abs() < 1e-6, "row {} sums to {}", i, row);
        }
        prop_assert!(plan.data().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn metrics_match_reference((labels, clusters) in labelling(40, 6)) {
        let h = homogeneity(&labels, &clusters).unwrap();
        let c = completeness(&labels, &clusters).unwrap();
        prop_assert!((h - ref_homogeneity(&labels, &clusters)).abs() <= 1e-9);
        prop_assert!((c - ref_completeness(&labels, &clusters)).abs() <= 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&h));
        prop_assert_eq!(h, completeness(&clusters, &labels).unwrap());
    }

    #[test]
    fn metrics_ignore_cluster_names((labels, clusters) in labelling(30, 5), shift in 1usize..100) {
        let renamed: Vec<usize> = clusters.iter().map(|&c| (c * 7 + shift) % 1000).collect();
        prop_assert_eq!(homogeneity(&labels, &clusters).unwrap(), homogeneity(&labels, &renamed).unwrap());
        prop_assert_eq!(completeness(&labels, &clusters).unwrap(), completeness(&labels, &renamed).unwrap());
    }

    #[test]
    fn silhouette_matches_reference(n in 3usize..25, k in 2usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = random_matrix(n, 3, &mut rng);
        let mut clusters: Vec<usize> = (0..n).map(|i| i % k).collect();
        clusters.shuffle(&mut rng);
        let s = silhouette(&emb, &clusters).unwrap();
        prop_assert!((s - ref_silhouette(&emb, &clusters)).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s));
        let moved = Tensor::matrix(n, 3, emb.data().iter().map(|x| x + 4.0).collect()).unwrap();
        prop_assert!((s - silhouette(&moved, &clusters).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn clustering_is_a_partition_of_requested_size(n in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = random_matrix(n, 2, &mut rng);
        let c = 1 + (seed as usize) % n;
        let r = agglomerative_cluster(&emb, c).unwrap();
        prop_assert_eq!(r.num_clusters, c);
        let mut ids = r.assignments.clone();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids, (0..c).collect::<Vec<_>>());
        // Ids are dense in order of first appearance.
        prop_assert_eq!(r.assignments[0], 0);
    }

    #[test]
    fn clustering_follows_row_permutation(n in 2usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = random_matrix(n, 2, &mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let c = 1 + (seed as usize) % n;
        let a = agglomerative_cluster(&emb, c).unwrap().assignments;
        let b = agglomerative_cluster(&emb.select_rows(&order), c).unwrap().assignments;
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a[order[i]] == a[order[j]], b[i] == b[j]);
            }
        }
    }

    #[test]
    fn sampled_neighbors_are_neighbors(g in small_graph(), q in 1usize..12, cap in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in (0..g.num_nodes()).filter(|&v| g.degree(v) > 0) {
            let s = sample_neighbors(&g, v, q, cap, &mut rng).unwrap();
            prop_assert_eq!(s.len(), q);
            prop_assert!(s.iter().all(|u| g.neighbors(v).contains(u)));
            let mut distinct = s.clone();
            distinct.sort();
            distinct.dedup();
            prop_assert!(distinct.len() <= cap.min(g.degree(v)));
            prop_assert_eq!(distinct.len(), q.min(cap).min(g.degree(v)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn embeddings_follow_node_relabelling(g in small_graph(), seed in any::<u64>()) {
        prop_assume!(g.num_nodes() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
        perm.shuffle(&mut rng);
        let cfg = TrainConfig { k: 2, dim: 5, ..TrainConfig::default() };
        let model = Model::new(g.feature_dim(), &cfg, &mut rng).unwrap();
        let a = embed(&g, &model.encoder).unwrap();
        let b = embed(&g.permute(&perm).unwrap(), &model.encoder).unwrap();
        for v in 0..g.num_nodes() {
            for (x, y) in a.row(v).iter().zip(b.row(perm[v])) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn planted_graphs_have_expected_size(count in 1usize..8, extra in 0usize..20, size in 1usize..6, shape in 0usize..4) {
        let shape = [ShapeKind::House, ShapeKind::Fan, ShapeKind::Star, ShapeKind::Varied][shape];
        let spec = ShapeSpec { shape, size, count, cycle_len: count.max(3) + extra, perturb: 0, seed: 0 };
        let g = generate_planted(&spec).unwrap();
        let motif_nodes: usize = (0..count)
            .map(|i| match shape {
                ShapeKind::House => 5,
                ShapeKind::Fan | ShapeKind::Star => size + 1,
                ShapeKind::Varied => [5, size + 1, size + 1][i % 3],
            })
            .sum();
        prop_assert_eq!(g.num_nodes(), spec.cycle_len + motif_nodes);
        prop_assert_eq!(g.labels().unwrap().len(), g.num_nodes());
    }
}
