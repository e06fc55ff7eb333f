use irsa::scheduling::ClassState;
use irsa::sic::{analytic_slot_dist, SlotCounts};
use irsa::{build_frame, DegreeDistribution, Policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn degree_sampling_matches_distribution() {
    let d = DegreeDistribution::optimal_irsa();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000u64;
    let mut counts = [0u64; 3];
    for _ in 0..n {
        match d.sample_degree(&mut rng) {
            2 => counts[0] += 1,
            3 => counts[1] += 1,
            8 => counts[2] += 1,
            other => panic!("sampled degree {other} outside the support"),
        }
    }
    let expected: Vec<f64> = [0.5, 0.28, 0.22].iter().map(|p| p * n as f64).collect();
    let p = chi_square_p(&counts, &expected);
    assert!(p > 0.001, "p = {p}, counts {counts:?}");
}

#[test]
fn slot_histogram_matches_binomial_law() {
    let d = DegreeDistribution::optimal_irsa();
    let (m, users) = (100usize, 100usize);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = SlotCounts::default();
    for _ in 0..5_000 {
        let degrees: Vec<usize> = (0..users).map(|_| d.sample_degree(&mut rng) as usize).collect();
        counts.add_frame(&build_frame(&degrees, m, &mut rng).unwrap());
    }
    let analytic = analytic_slot_dist(1.0, d.mean_degree(), m, users).unwrap();
    let tv = counts.histogram().total_variation(&analytic);
    assert!(tv < 0.01, "TV = {tv}");
}

#[test]
fn random_selection_is_uniform() {
    let state = ClassState::new(0, 20, Policy::Random);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = vec![0u64; 20];
    let draws = 50_000;
    for _ in 0..draws {
        let picked = state.select_random(5, &mut rng).unwrap();
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
        for u in picked {
            hits[u] += 1;
        }
    }
    let expected = vec![draws as f64 * 5.0 / 20.0; 20];
    let p = chi_square_p(&hits, &expected);
    assert!(p > 0.001, "p = {p}");
}
