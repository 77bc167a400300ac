use gergm::cut::{cut_distance_d, cut_distance_delta, CutMode, CutOptions};
use gergm::graph::{embed, StepKernel, WeightedGraph};
use gergm::homomorphism::{fast_statistic, hom_density, hom_number, Convention, Family, Motif, Target};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernel(n: usize) -> impl Strategy<Value = StepKernel> {
    prop::collection::vec(-1.0f64..1.0, n * (n - 1) / 2).prop_map(move |upper| {
        let mut v = vec![0.0; n * n];
        let mut it = upper.into_iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = it.next().unwrap();
                v[i * n + j] = w;
                v[j * n + i] = w;
            }
        }
        StepKernel::from_values(n, v).unwrap()
    })
}

fn graph(max_n: usize) -> impl Strategy<Value = WeightedGraph> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-2.0f64..2.0, n * (n - 1) / 2).prop_map(move |upper| {
            let mut g = WeightedGraph::empty(n);
            let mut it = upper.into_iter();
            for i in 0..n {
                for j in (i + 1)..n {
                    g.set(i, j, it.next().unwrap());
                }
            }
            g
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cut_distance_triangle_inequality(a in kernel(6), b in kernel(6), c in kernel(6)) {
        let o = CutOptions::default();
        let ab = cut_distance_d(&a, &b, CutMode::Exact, &o).unwrap();
        let bc = cut_distance_d(&b, &c, CutMode::Exact, &o).unwrap();
        let ac = cut_distance_d(&a, &c, CutMode::Exact, &o).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn cut_distance_relabel_and_delta_bound(a in kernel(6), b in kernel(6), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let o = CutOptions::default();
        let d = cut_distance_d(&a, &b, CutMode::Exact, &o).unwrap();
        let dp = cut_distance_d(&a.permuted(&perm), &b.permuted(&perm), CutMode::Exact, &o).unwrap();
        prop_assert!((d - dp).abs() <= 1e-12);
        let delta = cut_distance_delta(&a, &b, CutMode::Exact, &o).unwrap();
        prop_assert!(delta <= d + 1e-12);
        let self_delta = cut_distance_delta(&a, &a.permuted(&perm), CutMode::Exact, &o).unwrap();
        prop_assert!(self_delta <= 1e-12);
    }

    #[test]
    fn fast_statistics_match_brute_force(g in graph(6)) {
        let n = g.n() as f64;
        for (tag, m) in [
            (Family::Edge, Motif::edge()),
            (Family::TwoStar, Motif::two_star()),
            (Family::JStar { j: 3 }, Motif::j_star(3).unwrap()),
            (Family::Triangle, Motif::triangle()),
        ] {
            let fast = fast_statistic(tag, &g, Convention::AllMaps).unwrap();
            let brute = hom_number(&m, &g).unwrap() / n.powi(m.vertices() as i32);
            prop_assert!((fast - brute).abs() <= 1e-12, "{tag:?}: {fast} vs {brute}");
        }
    }

    #[test]
    fn densities_ignore_relabelling(g in graph(6), seed in any::<u64>()) {
        let n = g.n();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let h = g.permuted(&perm);
        let path = Motif::general(4, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], None).unwrap();
        for m in [Motif::triangle(), Motif::j_star(3).unwrap(), path] {
            let a = hom_density(&m, Target::Graph(&g), None).unwrap();
            let b = hom_density(&m, Target::Graph(&h), None).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

fn bernoulli_graph(m: usize, seed: u64) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = WeightedGraph::empty(m);
    for i in 0..m {
        for j in (i + 1)..m {
            g.set(i, j, if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        }
    }
    g
}

/// Quasirandom 0/1 graph from Sylvester–Hadamard signs; cut distance to the
/// constant 1/2 kernel is O(m^{-1/2}) with no sampling noise.
fn hadamard_graph(m: usize) -> WeightedGraph {
    let mut g = WeightedGraph::empty(m);
    for i in 0..m {
        for j in (i + 1)..m {
            g.set(i, j, if (i & j).count_ones() % 2 == 0 { 1.0 } else { 0.0 });
        }
    }
    g
}

#[test]
fn node_weighted_densities_converge() {
    // k_m → 1/2 in cut distance; α(x) = 1 + x, α_m = α + 1/m
    let edge = Motif::edge().with_node_weights(vec![1.0, 1.0]).unwrap();
    let tri = Motif::triangle().with_node_weights(vec![1.0, 1.0, 1.0]).unwrap();
    let limits = [0.5 * 1.5f64.powi(2), 0.125 * 1.5f64.powi(3)];
    for (f, limit) in [(edge, limits[0]), (tri, limits[1])] {
        let mut gaps = Vec::new();
        for m in [8usize, 16, 32, 64] {
            let km = embed(&hadamard_graph(m));
            let alpha: Vec<f64> = (0..m).map(|i| 1.0 + (i as f64 + 0.5) / m as f64 + 1.0 / m as f64).collect();
            let t = hom_density(&f, Target::Kernel(&km), Some(&alpha)).unwrap();
            gaps.push((t - limit).abs());
        }
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[3] < 0.05, "{gaps:?}");
    }
    let d = cut_distance_d(&embed(&hadamard_graph(64)), &StepKernel::constant(64, 0.5), CutMode::Heuristic, &CutOptions::default())
        .unwrap();
    assert!(d < 0.1, "{d}");
}

#[test]
fn edge_weight_two_breaks_continuity() {
    // t(F, G_m) counts x², which equals x on a simple graph
    let p: f64 = 0.5;
    let f = Motif::general(2, vec![(0, 1, 2.0)], None).unwrap();
    let g = bernoulli_graph(128, 7);
    let t_graph = hom_density(&f, Target::Graph(&g), None).unwrap();
    let t_limit = hom_density(&f, Target::Kernel(&StepKernel::constant(1, p)), None).unwrap();
    assert!((t_limit - p * p).abs() < 1e-15);
    assert!((t_graph - t_limit - (p - p * p)).abs() < 0.05, "{t_graph} vs {t_limit}");
    // the graphs themselves do approach the constant kernel
    let d = cut_distance_d(&embed(&g), &StepKernel::constant(128, p), CutMode::Heuristic, &CutOptions::default()).unwrap();
    assert!(d < 0.05, "{d}");
}
