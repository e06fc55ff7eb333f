use irsa::analysis::{capacity_region, outer_bound};
use irsa::sic::{self, FrameGraph};
use irsa::{mix_distributions, DegreeDistribution, NetworkSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn distribution() -> impl Strategy<Value = DegreeDistribution> {
    prop::collection::btree_map(1u32..12, 1u32..100, 1..5).prop_map(|weights| {
        let total: u32 = weights.values().sum();
        DegreeDistribution::new(weights.into_iter().map(|(l, w)| (l, w as f64 / total as f64))).unwrap()
    })
}

fn frame() -> impl Strategy<Value = FrameGraph> {
    (1usize..=10).prop_flat_map(|m| {
        let user = prop::sample::subsequence((0..m).collect::<Vec<_>>(), 1..=m);
        prop::collection::vec(user, 0..=8).prop_map(move |users| FrameGraph::from_placements(m, &users).unwrap())
    })
}

proptest! {
    #[test]
    fn mixture_mean_is_load_weighted(
        parts in prop::collection::vec((0.01f64..2.0, distribution()), 1..5)
    ) {
        let loads: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let dists: Vec<DegreeDistribution> = parts.iter().map(|p| p.1.clone()).collect();
        let mix = mix_distributions(&loads, &dists).unwrap();
        let total: f64 = loads.iter().sum();
        let expected: f64 = parts.iter().map(|(g, d)| g * d.mean_degree()).sum::<f64>() / total;
        prop_assert!((mix.mean_degree() - expected).abs() < 1e-9);
        prop_assert!((mix.eval(1.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn edge_perspective_is_normalized(d in distribution()) {
        prop_assert!((d.edge_perspective().eval(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn membership_is_downward_closed(
        n1 in 1usize..200, n2 in 1usize..200, m in 1usize..200,
        t_star in 0.05f64..1.0,
        t1 in 0.0f64..1.5, t2 in 0.0f64..1.5, shrink in 0.0f64..1.0,
    ) {
        let spec = NetworkSpec::new(
            m,
            [(n1, DegreeDistribution::regular(1).unwrap()), (n2, DegreeDistribution::regular(1).unwrap())],
        ).unwrap();
        let region = capacity_region(&spec, t_star).unwrap();
        if region.contains(&[t1, t2]).unwrap() {
            prop_assert!(region.contains(&[t1 * shrink, t2]).unwrap());
            prop_assert!(region.contains(&[t1, t2 * shrink]).unwrap());
            prop_assert!(outer_bound(&spec).contains(&[t1, t2]).unwrap());
        }
    }

    #[test]
    fn boundary_vertices_are_tight(
        n1 in 1usize..200, n2 in 1usize..200, m in 1usize..200, t_star in 0.05f64..1.0,
    ) {
        let spec = NetworkSpec::new(
            m,
            [(n1, DegreeDistribution::regular(1).unwrap()), (n2, DegreeDistribution::regular(1).unwrap())],
        ).unwrap();
        let region = capacity_region(&spec, t_star).unwrap();
        let tol = 1e-12;
        for (a, b) in region.boundary_2d(1).unwrap() {
            prop_assert!(region.contains(&[a, b]).unwrap());
            let active = [
                a.abs() < tol,
                b.abs() < tol,
                (a - region.class_caps[0]).abs() < tol,
                (b - region.class_caps[1]).abs() < tol,
                (a + b - region.sum_cap).abs() < tol,
            ];
            prop_assert!(active.iter().filter(|x| **x).count() >= 2, "vertex ({a}, {b})");
        }
    }

    #[test]
    fn peeling_ignores_processing_order(f in frame(), seed in any::<u64>()) {
        let reference = sic::peel(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(sic::peel_shuffled(&f, &mut rng).decoded, reference.decoded.clone());
        // Peeling stops only when no slot holds exactly one undecoded user.
        for slot in 0..f.num_slots() {
            let live = (0..f.num_users())
                .filter(|u| reference.decoded.binary_search(u).is_err() && f.user_slots(*u).contains(&slot))
                .count();
            prop_assert!(live != 1);
        }
    }

    #[test]
    fn sampled_frames_respect_degrees(
        m in 1usize..40,
        degrees in prop::collection::vec(1usize..40, 0..30),
        seed in any::<u64>(),
    ) {
        let degrees: Vec<usize> = degrees.into_iter().map(|d| d.min(m)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = sic::build_frame(&degrees, m, &mut rng).unwrap();
        prop_assert_eq!(f.num_users(), degrees.len());
        for (u, &d) in degrees.iter().enumerate() {
            prop_assert_eq!(f.degree(u), d);
        }
        let occupancy: u32 = f.occupancy().iter().sum();
        prop_assert_eq!(occupancy as usize, degrees.iter().sum::<usize>());
    }
}
