use num_bigint::BigUint;
use num_traits::Zero;
use proptest::prelude::*;

use polya::growth::crp::{crp_step, CrpParams, PartitionState};
use polya::growth::stirling::{enumerate_stirling, insertion_places, perm_to_tree, random_stirling, stirling_count, tree_to_perm};
use polya::growth::tree::{Forest, ForestConfig, NodeKind, OffsetMode, TreeFamily};
use polya::rng::rng_from_seed;
use polya::special::ExactRational;
use polya::Param;

fn tree_family() -> impl Strategy<Value = TreeFamily> {
    prop_oneof![
        Just(TreeFamily::Recursive),
        (2u32..=4).prop_map(|d| TreeFamily::DAry { d }),
        prop_oneof![Just(Param::ratio(1, 2)), Just(Param::integer(1)), Just(Param::integer(3))]
            .prop_map(|alpha| TreeFamily::Gport { alpha }),
    ]
}

fn forest_config() -> impl Strategy<Value = ForestConfig> {
    (
        tree_family(),
        1u64..=4,
        prop_oneof![Just(Param::integer(1)), Just(Param::integer(2)), Just(Param::ratio(1, 2))],
        prop_oneof![Just(OffsetMode::Standard), Just(OffsetMode::Crp)],
        proptest::option::of(prop_oneof![Just(Param::integer(1)), Just(Param::ratio(3, 2))]),
    )
        .prop_map(|(family, p, ell, mode, bar)| {
            let config = ForestConfig::new(family, p, ell, mode);
            match (bar, &config.family) {
                (Some(b), TreeFamily::Gport { .. }) => config.with_bar(b),
                _ => config,
            }
        })
}

fn crp_params() -> impl Strategy<Value = CrpParams> {
    (
        prop_oneof![Just(Param::ratio(1, 2)), Just(Param::ratio(1, 3)), Just(Param::ratio(2, 5))],
        prop_oneof![Just(Param::integer(1)), Just(Param::ratio(1, 2)), Just(Param::integer(2))],
        1u64..=4,
        proptest::option::of(prop_oneof![Just(Param::integer(1)), Just(Param::ratio(1, 2))]),
    )
        .prop_map(|(a, theta, p, bar)| {
            let params = CrpParams::new(a, theta, p);
            match bar {
                Some(b) => params.with_bar(b),
                None => params,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn grown_forests_keep_their_invariants(config in forest_config(), n in 1u64..=1000, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let forest = Forest::grown(config, n, &mut rng).unwrap();
        forest.check_invariants().unwrap();
        prop_assert_eq!(forest.size(), n);
        let nodes = forest.nodes();
        for node in nodes {
            let mut child = node;
            while let Some(parent) = child.parent {
                prop_assert!(nodes[parent].label < child.label);
                child = &nodes[parent];
            }
        }
        if let TreeFamily::DAry { d } = forest.config().family {
            for node in nodes.iter().filter(|v| v.kind == NodeKind::Ordinary) {
                prop_assert!(node.outdegree() <= d as usize);
            }
        }
        let sizes = forest.subtree_sizes();
        let roots: u64 = nodes.iter().filter(|v| v.parent.is_none()).map(|v| sizes[v.id]).sum();
        prop_assert_eq!(roots as usize, nodes.len());
    }

    #[test]
    fn crp_conserves_customers(params in crp_params(), steps in 1usize..300, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let p = params.p;
        let mut state = PartitionState::new(params).unwrap();
        for _ in 0..steps {
            state = crp_step(state, &mut rng);
            let seated: u64 = state.restaurants.iter().flatten().sum::<u64>() + state.bar.unwrap_or(0);
            prop_assert_eq!(seated, state.customers);
            prop_assert_eq!(state.opened(), state.customers / p);
            prop_assert!(state.restaurants.iter().flatten().all(|&s| s > 0));
            let total = state.seat_probabilities().into_iter().fold(ExactRational::zero(), |acc, (_, q)| acc + q);
            prop_assert_eq!(total, ExactRational::from_integer(1.into()));
        }
    }

    #[test]
    fn stirling_bijection_round_trips(d in 2u32..=3, p in 2u64..=4, t in 0u32..=3, n in 1u64..=40, seed in any::<u64>()) {
        let perm = random_stirling(d, p, t, n, &mut rng_from_seed(seed)).unwrap();
        perm.validate().unwrap();
        let forest = perm_to_tree(&perm).unwrap();
        forest.check_invariants().unwrap();
        prop_assert_eq!(forest.size(), n);
        prop_assert_eq!(tree_to_perm(&forest).unwrap(), perm);
    }

    #[test]
    fn stirling_count_is_the_product_of_insertion_places(d in 1u32..=4, p in 1u64..=4, t in 0u32..=3, n in 1u64..=30) {
        let product = (1..n).fold(BigUint::from(1u32), |acc, k| acc * insertion_places(d, p, t, k));
        prop_assert_eq!(stirling_count(d, p, t, n), product);
    }
}

#[test]
fn ten_thousand_bijection_round_trips() {
    let mut rng = rng_from_seed(77);
    for i in 0..10_000u64 {
        let n = 1 + i % 40;
        let perm = random_stirling(2, 2, 3, n, &mut rng).unwrap();
        assert_eq!(tree_to_perm(&perm_to_tree(&perm).unwrap()).unwrap(), perm, "instance {i}");
    }
}

#[test]
fn enumeration_matches_count() {
    for (d, p, t, n) in [(2, 2, 3, 3), (2, 3, 1, 4), (1, 2, 2, 4), (3, 2, 1, 3), (2, 4, 2, 5)] {
        let perms = enumerate_stirling(d, p, t, n).unwrap();
        let distinct: std::collections::HashSet<_> = perms.iter().collect();
        assert_eq!(distinct.len(), perms.len());
        assert_eq!(BigUint::from(perms.len()), stirling_count(d, p, t, n), "({d},{p},{t},{n})");
    }
}
