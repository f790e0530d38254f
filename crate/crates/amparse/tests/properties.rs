//! Property tests over randomly generated structures.

use proptest::prelude::*;

use amparse::graph::iso::is_isomorphic;
use amparse::graph::penman;
use amparse::graph::random::random_graph_seeded;
use amparse::graph::{normalize_relation_direction, NormalizeConfig};
use amparse::preprocess::{build_copy_dictionary, pad_to_square, stub_annotate, MatchRules};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// parse . serialize is the identity up to variable renaming for every
    /// valid root-dominating graph.
    #[test]
    fn penman_round_trip(seed in any::<u64>(), size in 1usize..=12) {
        let g = random_graph_seeded(seed, size);
        let text = penman::serialize(&g).unwrap();
        let re = penman::parse(&text).unwrap();
        prop_assert!(is_isomorphic(&g, &re, 12).unwrap());
    }

    /// Direction-variant graphs become isomorphic after normalizing both.
    #[test]
    fn normalization_canonicalizes_direction(seed in any::<u64>(), size in 2usize..=8) {
        let g = random_graph_seeded(seed, size);
        let cfg = NormalizeConfig::default();
        // The serialized form may introduce `-of` inversions; parsing it back
        // and normalizing must agree with normalizing the original.
        let text = penman::serialize(&g).unwrap();
        let re = penman::parse(&text).unwrap();
        let a = normalize_relation_direction(&g, &cfg).unwrap();
        let b = normalize_relation_direction(&re, &cfg).unwrap();
        prop_assert!(is_isomorphic(&a, &b, 12).unwrap());
    }

    /// The DFS concept order is a permutation and survives variable renaming.
    #[test]
    fn dfs_order_is_permutation(seed in any::<u64>(), size in 1usize..=10) {
        let g = random_graph_seeded(seed, size);
        let order = g.dfs_concept_order().unwrap();
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..g.len()).collect::<Vec<_>>());

        let re = penman::parse(&penman::serialize(&g).unwrap()).unwrap();
        let labels: Vec<String> = order.iter().map(|&i| g.concepts[i].label.clone()).collect();
        let re_labels: Vec<String> = re
            .dfs_concept_order()
            .unwrap()
            .iter()
            .map(|&i| re.concepts[i].label.clone())
            .collect();
        prop_assert_eq!(labels, re_labels);
    }

    /// Padding always squares the instance and never drops an item.
    #[test]
    fn padding_is_square(m in 1usize..40, n in 1usize..40) {
        let pad = pad_to_square(m, n);
        prop_assert_eq!(pad.size, m.max(n));
        prop_assert_eq!(m + pad.null_concepts, pad.size);
        prop_assert_eq!(n + pad.null_words, pad.size);
    }

    /// Copy-dictionary construction is invariant under corpus shuffling.
    #[test]
    fn copy_dictionary_order_independent(words in proptest::collection::vec("[a-z]{2,8}", 1..6)) {
        let rules = MatchRules::default();
        let sentences: Vec<_> = words
            .iter()
            .map(|w| stub_annotate(&[w.clone(), format!("{w}s")]).unwrap())
            .collect();
        let concepts: Vec<Vec<String>> = words.iter().map(|w| vec![w.clone()]).collect();
        let fwd: Vec<(&_, &[String])> = sentences
            .iter()
            .zip(concepts.iter().map(|c| c.as_slice()))
            .collect();
        let mut rev = fwd.clone();
        rev.reverse();
        prop_assert_eq!(
            build_copy_dictionary(fwd, &rules),
            build_copy_dictionary(rev, &rules)
        );
    }
}
