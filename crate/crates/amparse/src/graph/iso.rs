//! Exact graph isomorphism for small graphs (test support; larger graphs go
//! through the Smatch metric instead).

use super::AmrGraph;
use crate::error::{Error, Result};

fn content_key(c: &super::Concept) -> (&str, &str, Option<&str>, Option<&str>) {
    (
        c.label.as_str(),
        c.category.as_str(),
        c.sense.as_deref(),
        c.wiki.as_deref(),
    )
}

/// True iff some variable bijection maps `g1` onto `g2` exactly: concept
/// content, root, and every labeled edge. Errors when either graph exceeds
/// `max_nodes` (use Smatch for those).
pub fn is_isomorphic(g1: &AmrGraph, g2: &AmrGraph, max_nodes: usize) -> Result<bool> {
    if g1.len() > max_nodes || g2.len() > max_nodes {
        return Err(Error::Graph(format!(
            "exact isomorphism limited to {max_nodes} nodes ({} vs {}); use smatch",
            g1.len(),
            g2.len()
        )));
    }
    if g1.len() != g2.len() || g1.edges.len() != g2.edges.len() {
        return Ok(false);
    }
    // Content multisets must agree.
    let mut k1: Vec<_> = g1.concepts.iter().map(content_key).collect();
    let mut k2: Vec<_> = g2.concepts.iter().map(content_key).collect();
    k1.sort();
    k2.sort();
    if k1 != k2 {
        return Ok(false);
    }

    // Assign g1 nodes in order, root first, with incremental edge checks.
    let mut order: Vec<usize> = vec![g1.root];
    order.extend((0..g1.len()).filter(|&i| i != g1.root));
    let mut mapping: Vec<Option<usize>> = vec![None; g1.len()];
    let mut used = vec![false; g2.len()];
    Ok(assign(g1, g2, &order, 0, &mut mapping, &mut used))
}

fn assign(
    g1: &AmrGraph,
    g2: &AmrGraph,
    order: &[usize],
    depth: usize,
    mapping: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
) -> bool {
    if depth == order.len() {
        return true;
    }
    let u = order[depth];
    for cand in 0..g2.len() {
        if used[cand] || content_key(&g1.concepts[u]) != content_key(&g2.concepts[cand]) {
            continue;
        }
        if (u == g1.root) != (cand == g2.root) {
            continue;
        }
        // Edges between u and already-mapped nodes must match both ways.
        let mut ok = true;
        for (&w, &mw) in order[..depth].iter().zip(order[..depth].iter().map(|&w| {
            mapping[w].as_ref().unwrap()
        })) {
            if g1.edges.get(&(u, w)) != g2.edges.get(&(cand, mw))
                || g1.edges.get(&(w, u)) != g2.edges.get(&(mw, cand))
            {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        mapping[u] = Some(cand);
        used[cand] = true;
        if assign(g1, g2, order, depth + 1, mapping, used) {
            return true;
        }
        mapping[u] = None;
        used[cand] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::penman::parse;

    #[test]
    fn graph_is_isomorphic_to_itself() {
        let g = parse("(o / obligate-01 :ARG2 (g / go-02 :ARG0 (b / boy) :polarity -))").unwrap();
        assert!(is_isomorphic(&g, &g, 10).unwrap());
    }

    #[test]
    fn variable_names_are_not_content() {
        let a = parse("(x / want-01 :ARG0 (y / boy))").unwrap();
        let b = parse("(q / want-01 :ARG0 (zz / boy))").unwrap();
        assert!(is_isomorphic(&a, &b, 10).unwrap());
    }

    #[test]
    fn relabeled_edge_breaks_isomorphism() {
        let a = parse("(x / want-01 :ARG0 (y / boy))").unwrap();
        let b = parse("(x / want-01 :ARG1 (y / boy))").unwrap();
        assert!(!is_isomorphic(&a, &b, 10).unwrap());
    }

    #[test]
    fn size_limit_is_enforced() {
        let a = parse(
            "(a / p :ARG0 (b / q) :ARG1 (c / q) :ARG2 (d / q) :ARG3 (e / q) :ARG4 (f / q) \
             :ARG5 (g / q) :ARG6 (h / q) :ARG7 (i / q) :ARG8 (j / q) :ARG9 (k / q))",
        )
        .unwrap();
        assert!(is_isomorphic(&a, &a, 10).is_err());
        assert!(is_isomorphic(&a, &a, 11).unwrap());
    }

    #[test]
    fn duplicate_labels_need_structural_match() {
        // Two `long` nodes attached to different heads: swapping them only
        // works when the structure agrees.
        let a = parse("(m / multi :mod (l / long) :ARG0 (r / report :mod (l2 / long)))").unwrap();
        let b = parse("(m / multi :mod (l / long) :ARG0 (r / report :mod (l2 / long)))").unwrap();
        assert!(is_isomorphic(&a, &b, 10).unwrap());
        let c = parse("(m / multi :ARG0 (r / report :mod (l2 / long) :mod (l / long)))").unwrap();
        assert!(!is_isomorphic(&a, &c, 10).unwrap());
    }
}
