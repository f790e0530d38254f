//! Random valid graphs for property tests and metric oracles: a rooted tree
//! with occasional re-entrant forward edges, constants as single-parent
//! leaves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AmrGraph, Concept, CAT_CONCEPT, CAT_NUMBER, CAT_POLARITY, CAT_STRING};

const LABELS: &[&str] = &[
    "alpha", "bravo", "car", "delta", "echo", "fox", "golf", "hotel", "india", "jolt",
];
const RELATIONS: &[&str] = &["ARG0", "ARG1", "ARG2", "mod", "time", "quant", "op1"];

pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> AmrGraph {
    let n = rng.random_range(1..=max_nodes.max(1));
    let mut concepts = Vec::with_capacity(n);
    // Node 0 is the root and never constant.
    for i in 0..n {
        let constant = i > 0 && rng.random_bool(0.2);
        let concept = if constant {
            match rng.random_range(0..3) {
                0 => Concept::new(&format!("{}", rng.random_range(1..100)), CAT_NUMBER),
                1 => Concept::new(LABELS[rng.random_range(0..LABELS.len())], CAT_STRING),
                _ => Concept::new("-", CAT_POLARITY),
            }
        } else {
            let mut c = Concept::new(LABELS[rng.random_range(0..LABELS.len())], CAT_CONCEPT);
            if rng.random_bool(0.3) {
                c.sense = Some(format!("-{:02}", rng.random_range(1..4)));
            }
            if rng.random_bool(0.1) {
                c.wiki = Some("-".to_string());
            }
            c
        };
        concepts.push(concept);
    }
    let mut g = AmrGraph {
        concepts,
        edges: std::collections::BTreeMap::new(),
        root: 0,
    };
    // Spanning tree: each node i > 0 hangs off an earlier non-constant node.
    for i in 1..n {
        let parents: Vec<usize> = (0..i).filter(|&p| !g.concepts[p].is_constant()).collect();
        let parent = parents[rng.random_range(0..parents.len())];
        let rel = RELATIONS[rng.random_range(0..RELATIONS.len())];
        let mut r = rel.to_string();
        let mut guard = 0;
        while g.edges.contains_key(&(parent, i)) {
            r = format!("{}{}", RELATIONS[rng.random_range(0..RELATIONS.len())], guard);
            guard += 1;
        }
        let _ = g.add_edge(parent, i, &r);
    }
    // A few extra forward edges (re-entrancies) between non-constant nodes,
    // source earlier than target to keep the graph acyclic and
    // root-dominating.
    let extra = rng.random_range(0..=n / 3);
    for _ in 0..extra {
        let i = rng.random_range(0..n.saturating_sub(1));
        let j = rng.random_range(i + 1..n);
        if g.concepts[i].is_constant() || g.concepts[j].is_constant() {
            continue;
        }
        if g.edges.contains_key(&(i, j)) {
            continue;
        }
        let rel = RELATIONS[rng.random_range(0..RELATIONS.len())];
        let _ = g.add_edge(i, j, rel);
    }
    g
}

/// Convenience wrapper with its own seed.
pub fn random_graph_seeded(seed: u64, max_nodes: usize) -> AmrGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_graph(&mut rng, max_nodes)
}
