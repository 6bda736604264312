use bittide_core::graph::OrientedGraph;
use bittide_core::{Error, SpectralData};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn connected(seed: u64, n: usize, p: f64) -> (OrientedGraph, SpectralData) {
    let g = OrientedGraph::random_connected(n, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let sd = g.spectral_data().unwrap();
    (g, sd)
}

fn find(parent: &mut [usize], x: usize) -> usize {
    if parent[x] != x {
        let root = find(parent, parent[x]);
        parent[x] = root;
    }
    parent[x]
}

fn components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn connectivity_matches_union_find(n in 2usize..9, picks in prop::collection::vec(any::<bool>(), 36)) {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .zip(&picks)
            .filter(|(_, &keep)| keep)
            .map(|(e, _)| e)
            .collect();
        let g = OrientedGraph::new(n, edges.clone()).unwrap();
        let comps = components(n, &edges);
        match g.spectral_data() {
            Ok(_) => prop_assert_eq!(comps, 1),
            Err(Error::NotConnected { zero_eigenvalues }) => {
                prop_assert!(comps > 1);
                prop_assert_eq!(zero_eigenvalues, comps);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn resistance_is_a_metric(seed in any::<u64>(), n in 2usize..9, p in 0.0f64..0.7) {
        let (_, sd) = connected(seed, n, p);
        let r = sd.resistance_matrix();
        for i in 0..n {
            prop_assert!(r[(i, i)].abs() < 1e-12);
            for j in 0..n {
                prop_assert!((r[(i, j)] - r[(j, i)]).abs() < 1e-12);
                if i != j {
                    prop_assert!(r[(i, j)] > 0.0);
                }
                for k in 0..n {
                    prop_assert!(r[(i, j)] <= r[(i, k)] + r[(k, j)] + 1e-10);
                }
            }
        }
    }

    #[test]
    fn pseudo_inverse_identity(seed in any::<u64>(), n in 2usize..11, p in 0.0f64..0.7) {
        let (_, sd) = connected(seed, n, p);
        let l = &sd.laplacian;
        let err = (l * &sd.pseudo_inverse * l - l).norm();
        prop_assert!(err <= 1e-10 * l.norm());
        let back = &sd.u1 * &sd.reduced_laplacian * sd.u1.transpose();
        prop_assert!((back - l).norm() <= 1e-10 * l.norm());
    }

    #[test]
    fn orientation_does_not_matter(seed in any::<u64>(), n in 2usize..9, p in 0.0f64..0.7, which in any::<prop::sample::Index>()) {
        let (g, sd) = connected(seed, n, p);
        let flipped = g.with_reversed_edge(which.index(g.m())).unwrap().spectral_data().unwrap();
        prop_assert!((&sd.laplacian - &flipped.laplacian).norm() == 0.0);
        prop_assert!((sd.resistance_matrix() - flipped.resistance_matrix()).norm() < 1e-12);
    }
}

#[test]
fn square_mesh_has_degenerate_fiedler_space() {
    let sd = OrientedGraph::mesh(4, 4).unwrap().spectral_data().unwrap();
    let f = sd.fiedler_vector();
    assert!(f.degenerate);
    assert_eq!(f.multiplicity, 2);
    // a diagonal mode lives in the same eigenspace
    let diag = nalgebra::DVector::from_fn(16, |k, _| {
        let (r, c) = ((k / 4) as f64, (k % 4) as f64);
        let x = |i: f64| (std::f64::consts::PI * (i + 0.5) / 4.0).cos();
        x(r) + x(c)
    });
    let lv = &sd.laplacian * &diag;
    assert!((lv - &diag * f.lambda2).norm() < 1e-10 * diag.norm());
}

#[test]
fn rectangular_mesh_fiedler_varies_along_long_axis() {
    let sd = OrientedGraph::mesh(4, 6).unwrap().spectral_data().unwrap();
    let f = sd.fiedler_vector();
    assert!(!f.degenerate);
    for c in 0..6 {
        for r in 1..4 {
            assert!((f.vector[r * 6 + c] - f.vector[c]).abs() < 1e-10);
        }
    }
    assert!(f.vector[0] > 0.0);
    assert!((f.vector[0] + f.vector[5]).abs() < 1e-10);
}

#[test]
fn path_resistance_is_hop_count() {
    let sd = OrientedGraph::path(6).unwrap().spectral_data().unwrap();
    for i in 0..6 {
        for j in 0..6 {
            let hops = (i as f64 - j as f64).abs();
            assert!((sd.resistance_distance(i, j).unwrap() - hops).abs() < 1e-10);
        }
    }
    assert!(matches!(
        sd.resistance_distance(0, 6),
        Err(Error::IndexOutOfRange { index: 6, n: 6 })
    ));
}
