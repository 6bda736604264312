use bittide_core::analysis::{
    perturbed_frequencies, predicted_performance, two_node_perturbation, worst_case_frequency,
};
use bittide_core::graph::OrientedGraph;
use bittide_core::numerics::DenseVector;
use bittide_core::ode::{build_full_system, simulate_ode, Gains};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph(seed: u64, n: usize, p: f64) -> OrientedGraph {
    OrientedGraph::random_connected(n, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn omega(seed: u64, n: usize) -> DenseVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    DenseVector::from_fn(n, |_, _| 1.0 + rng.random_range(-1e-3..1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn larger_gain_a_never_hurts(seed in any::<u64>(), n in 2usize..9, a in 1e-3f64..1.0, b in 1e-3f64..1.0, k in 1.0f64..10.0) {
        let sd = graph(seed, n, 0.3).spectral_data().unwrap();
        let w = omega(seed, n);
        let p1 = predicted_performance(&sd, &Gains::new(a, b, 1.0).unwrap(), &w).unwrap();
        let p2 = predicted_performance(&sd, &Gains::new(a * k, b, 1.0).unwrap(), &w).unwrap();
        prop_assert!(p2.freq_dev_norm_sq <= p1.freq_dev_norm_sq * (1.0 + 1e-12));
        prop_assert!((p2.freq_dev_norm_sq * k - p1.freq_dev_norm_sq).abs() <= 1e-10 * p1.freq_dev_norm_sq);

        // integral gain leaves the frequency norm alone and divides the occupancy norm
        let p3 = predicted_performance(&sd, &Gains::new(a, b * k, 1.0).unwrap(), &w).unwrap();
        prop_assert!((p3.freq_dev_norm_sq - p1.freq_dev_norm_sq).abs() <= 1e-12 * p1.freq_dev_norm_sq);
        prop_assert!((p3.occupancy_norm_sq * k - p1.occupancy_norm_sq).abs() <= 1e-10 * p1.occupancy_norm_sq);
    }

    #[test]
    fn adding_edges_never_hurts(seed in any::<u64>(), n in 3usize..9, p in 0.0f64..0.5) {
        let g = graph(seed, n, p);
        let gains = Gains::new(0.3, 0.05, 1.0).unwrap();
        let w = omega(seed, n);
        let before = predicted_performance(&g.spectral_data().unwrap(), &gains, &w).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                if g.has_edge(i, j) {
                    continue;
                }
                let sd = g.with_edge(i, j).unwrap().spectral_data().unwrap();
                let after = predicted_performance(&sd, &gains, &w).unwrap();
                prop_assert!(after.freq_dev_norm_sq <= before.freq_dev_norm_sq + 1e-10 * before.freq_dev_norm_sq);
                prop_assert!(after.occupancy_norm_sq <= before.occupancy_norm_sq + 1e-10 * before.occupancy_norm_sq);
            }
        }
    }

    #[test]
    fn two_node_route_matches_general_route(seed in any::<u64>(), n in 2usize..9, alpha in 1e-4f64..1e-2) {
        let sd = graph(seed, n, 0.3).spectral_data().unwrap();
        let gains = Gains::new(0.2, 0.01, 1.0).unwrap();
        let (i, j) = (0, n - 1);
        let general = predicted_performance(&sd, &gains, &perturbed_frequencies(n, i, j, alpha, 1.0)).unwrap();
        let (_, direct) = two_node_perturbation(&sd, &gains, i, j, alpha, 1.0).unwrap();
        prop_assert!((general.freq_dev_norm_sq - direct.freq_dev_norm_sq).abs() <= 1e-9 * direct.freq_dev_norm_sq);
    }

    #[test]
    fn worst_case_dominates_random_inputs(seed in any::<u64>(), n in 2usize..9, gamma in 1e-4f64..1.0) {
        let sd = graph(seed, n, 0.3).spectral_data().unwrap();
        let gains = Gains::new(0.5, 0.1, 1.0).unwrap();
        let wc = worst_case_frequency(&sd, gamma).unwrap();
        let attained = predicted_performance(&sd, &gains, &wc.omega_u).unwrap();
        prop_assert!((attained.quadratic_form - wc.attained).abs() <= 1e-9 * wc.attained);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let mut v = DenseVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            v *= gamma / v.norm();
            let q = predicted_performance(&sd, &gains, &v).unwrap().quadratic_form;
            prop_assert!(q <= wc.attained * (1.0 + 1e-9));
        }
    }
}

#[test]
fn ode_from_equal_frequencies_stays_put() {
    let sd = OrientedGraph::complete(4).unwrap().spectral_data().unwrap();
    let gains = Gains::new(0.5, 0.1, 1.0).unwrap();
    let w = DenseVector::from_element(4, 1.25);
    let t = simulate_ode(&build_full_system(&sd, &gains), &w, 20.0, 0.1).unwrap();
    for k in 0..t.len() {
        assert!((&t.omega[k] - &w).amax() < 1e-14);
        assert!(t.delta[k].amax() < 1e-12);
    }
}
