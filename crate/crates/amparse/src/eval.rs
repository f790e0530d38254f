//! Evaluation: Smatch (triple F1 under the best variable mapping, found by
//! hill climbing with restarts), concept F1, unlabeled edge F1 and alignment
//! accuracy.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{normalize_relation_direction, AmrGraph, NormalizeConfig};
use crate::tensor::Tensor;

/// The triple view of a graph: variables are the non-constant nodes;
/// constants, wiki strings and the root become attributes.
#[derive(Clone, Debug)]
pub struct TripleSet {
    /// Variable count (dense ids 0..n_vars).
    pub n_vars: usize,
    /// (var, label-with-sense)
    pub instances: Vec<(usize, String)>,
    /// (relation, var, value)
    pub attributes: Vec<(String, usize, String)>,
    /// (relation, head var, dep var)
    pub relations: Vec<(String, usize, usize)>,
}

impl TripleSet {
    pub fn total(&self) -> usize {
        self.instances.len() + self.attributes.len() + self.relations.len()
    }
}

/// Extracts triples after direction normalization so both sides compare in
/// one canonical form. `unlabeled` collapses every relation name to `rel`.
pub fn triples(graph: &AmrGraph, unlabeled: bool) -> Result<TripleSet> {
    let g = normalize_relation_direction(graph, &NormalizeConfig::default())?;
    let mut var_ids: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, c) in g.concepts.iter().enumerate() {
        if !c.is_constant() {
            let next = var_ids.len();
            var_ids.insert(i, next);
        }
    }
    let mut instances = Vec::new();
    let mut attributes = Vec::new();
    let mut relations = Vec::new();
    for (i, c) in g.concepts.iter().enumerate() {
        if let Some(&v) = var_ids.get(&i) {
            instances.push((v, c.full_label()));
            if let Some(w) = &c.wiki {
                attributes.push(("wiki".to_string(), v, w.clone()));
            }
        }
    }
    if let Some(&rv) = var_ids.get(&g.root) {
        attributes.push(("TOP".to_string(), rv, g.concepts[g.root].full_label()));
    }
    for (&(i, j), r) in &g.edges {
        let name = if unlabeled { "rel".to_string() } else { r.clone() };
        match (var_ids.get(&i), var_ids.get(&j)) {
            (Some(&vi), Some(&vj)) => relations.push((name, vi, vj)),
            (Some(&vi), None) => attributes.push((name, vi, g.concepts[j].label.clone())),
            // Edges headed by constants do not occur in valid graphs; count
            // them as attributes of the dependent side if they ever do.
            (None, Some(&vj)) => attributes.push((format!("{name}-of"), vj, g.concepts[i].label.clone())),
            (None, None) => {}
        }
    }
    Ok(TripleSet {
        n_vars: var_ids.len(),
        instances,
        attributes,
        relations,
    })
}

/// Matched triple count under a variable mapping (pred var -> gold var).
fn matched(pred: &TripleSet, gold: &TripleSet, mapping: &[Option<usize>]) -> usize {
    let mut gold_instances: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    for (v, l) in &gold.instances {
        *gold_instances.entry((*v, l.as_str())).or_default() += 1;
    }
    let mut gold_attributes: BTreeMap<(&str, usize, &str), usize> = BTreeMap::new();
    for (r, v, x) in &gold.attributes {
        *gold_attributes.entry((r.as_str(), *v, x.as_str())).or_default() += 1;
    }
    let mut gold_relations: BTreeMap<(&str, usize, usize), usize> = BTreeMap::new();
    for (r, a, b) in &gold.relations {
        *gold_relations.entry((r.as_str(), *a, *b)).or_default() += 1;
    }
    let mut total = 0;
    for (v, l) in &pred.instances {
        if let Some(g) = mapping[*v] {
            if let Some(c) = gold_instances.get_mut(&(g, l.as_str())) {
                if *c > 0 {
                    *c -= 1;
                    total += 1;
                }
            }
        }
    }
    for (r, v, x) in &pred.attributes {
        if let Some(g) = mapping[*v] {
            if let Some(c) = gold_attributes.get_mut(&(r.as_str(), g, x.as_str())) {
                if *c > 0 {
                    *c -= 1;
                    total += 1;
                }
            }
        }
    }
    for (r, a, b) in &pred.relations {
        if let (Some(ga), Some(gb)) = (mapping[*a], mapping[*b]) {
            if let Some(c) = gold_relations.get_mut(&(r.as_str(), ga, gb)) {
                if *c > 0 {
                    *c -= 1;
                    total += 1;
                }
            }
        }
    }
    total
}

/// Precision/recall/F1 triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrF1 {
    fn from_counts(matched: usize, pred: usize, gold: usize) -> Self {
        let precision = if pred == 0 { 0.0 } else { matched as f64 / pred as f64 };
        let recall = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrF1 { precision, recall, f1 }
    }
}

fn greedy_seed_mapping(pred: &TripleSet, gold: &TripleSet) -> Vec<Option<usize>> {
    // Pair variables with equal instance labels first, in label order.
    let mut mapping = vec![None; pred.n_vars];
    let mut used = vec![false; gold.n_vars];
    let mut gold_by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (v, l) in &gold.instances {
        gold_by_label.entry(l.as_str()).or_default().push(*v);
    }
    let mut pred_sorted: Vec<(&String, usize)> =
        pred.instances.iter().map(|(v, l)| (l, *v)).collect();
    pred_sorted.sort();
    for (label, pv) in pred_sorted {
        if let Some(cands) = gold_by_label.get(label.as_str()) {
            if let Some(&gv) = cands.iter().find(|&&g| !used[g]) {
                mapping[pv] = Some(gv);
                used[gv] = true;
            }
        }
    }
    // Fill remaining injectively.
    for slot in mapping.iter_mut() {
        if slot.is_none() {
            if let Some(g) = (0..gold.n_vars).find(|&g| !used[g]) {
                *slot = Some(g);
                used[g] = true;
            }
        }
    }
    mapping
}

fn climb(pred: &TripleSet, gold: &TripleSet, mapping: &mut Vec<Option<usize>>) -> usize {
    let np = pred.n_vars;
    let ng = gold.n_vars;
    let mut best = matched(pred, gold, mapping);
    loop {
        let mut improved = false;
        // Single moves: remap one pred var to any gold var (swapping with the
        // current owner) or unmap it.
        for p in 0..np {
            let original = mapping[p];
            let mut best_local = best;
            let mut best_move: Option<Option<usize>> = None;
            let mut options: Vec<Option<usize>> = (0..ng).map(Some).collect();
            options.push(None);
            for mv in options {
                if mapping[p] == mv {
                    continue;
                }
                let owner = mv.and_then(|g| (0..np).find(|&q| mapping[q] == Some(g)));
                mapping[p] = mv;
                if let Some(q) = owner {
                    mapping[q] = original;
                }
                let score = matched(pred, gold, mapping);
                if score > best_local {
                    best_local = score;
                    best_move = Some(mv);
                }
                if let Some(q) = owner {
                    mapping[q] = mv;
                }
                mapping[p] = original;
            }
            if let Some(mv) = best_move {
                let owner = mv.and_then(|g| (0..np).find(|&q| mapping[q] == Some(g)));
                mapping[p] = mv;
                if let Some(q) = owner {
                    mapping[q] = original;
                }
                best = best_local;
                improved = true;
            }
        }
        if improved {
            continue;
        }
        // Plateau escape: coordinated reassignment of two pred vars, needed
        // when single matched triples only appear once both endpoints of a
        // relation move together.
        let mut options: Vec<Option<usize>> = (0..ng).map(Some).collect();
        options.push(None);
        'pairs: for p in 0..np {
            for q in (p + 1)..np {
                for &gp in &options {
                    for &gq in &options {
                        if gp.is_some() && gp == gq {
                            continue;
                        }
                        if mapping[p] == gp && mapping[q] == gq {
                            continue;
                        }
                        let cand = reassign(mapping, np, &[(p, gp), (q, gq)]);
                        let score = matched(pred, gold, &cand);
                        if score > best {
                            *mapping = cand;
                            best = score;
                            improved = true;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        if improved {
            continue;
        }
        // Second escape level: three coordinated moves, for matched chains
        // (e.g. rel(x,y) + rel(y,z)) that no pair move can reach.
        'triples: for p in 0..np {
            for q in (p + 1)..np {
                for s in (q + 1)..np {
                    for &gp in &options {
                        for &gq in &options {
                            if gp.is_some() && gp == gq {
                                continue;
                            }
                            for &gs in &options {
                                if gs.is_some() && (gs == gp || gs == gq) {
                                    continue;
                                }
                                if mapping[p] == gp && mapping[q] == gq && mapping[s] == gs {
                                    continue;
                                }
                                let cand = reassign(mapping, np, &[(p, gp), (q, gq), (s, gs)]);
                                let score = matched(pred, gold, &cand);
                                if score > best {
                                    *mapping = cand;
                                    best = score;
                                    improved = true;
                                    break 'triples;
                                }
                            }
                        }
                    }
                }
            }
        }
        if improved {
            continue;
        }
        // Final escape level: four coordinated moves. Bounded work at the
        // graph sizes the exhaustive oracle covers, and it only runs when
        // every cheaper neighborhood is exhausted.
        'quads: for p in 0..np {
            for q in (p + 1)..np {
                for s in (q + 1)..np {
                    for t in (s + 1)..np {
                        for &gp in &options {
                            for &gq in &options {
                                if gp.is_some() && gp == gq {
                                    continue;
                                }
                                for &gs in &options {
                                    if gs.is_some() && (gs == gp || gs == gq) {
                                        continue;
                                    }
                                    for &gt in &options {
                                        if gt.is_some() && (gt == gp || gt == gq || gt == gs) {
                                            continue;
                                        }
                                        if mapping[p] == gp
                                            && mapping[q] == gq
                                            && mapping[s] == gs
                                            && mapping[t] == gt
                                        {
                                            continue;
                                        }
                                        let cand = reassign(
                                            mapping,
                                            np,
                                            &[(p, gp), (q, gq), (s, gs), (t, gt)],
                                        );
                                        let score = matched(pred, gold, &cand);
                                        if score > best {
                                            *mapping = cand;
                                            best = score;
                                            improved = true;
                                            break 'quads;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if !improved {
            return best;
        }
    }
}

/// Applies coordinated reassignments, unmapping any displaced owners.
fn reassign(
    mapping: &[Option<usize>],
    np: usize,
    moves: &[(usize, Option<usize>)],
) -> Vec<Option<usize>> {
    let mut cand = mapping.to_vec();
    for &(p, _) in moves {
        cand[p] = None;
    }
    for &(p, g) in moves {
        if let Some(g) = g {
            if let Some(r) = (0..np).find(|&r| cand[r] == Some(g)) {
                cand[r] = None;
            }
            cand[p] = Some(g);
        }
    }
    cand
}

/// Smatch score via hill climbing over variable mappings: one deterministic
/// greedy start plus `restarts - 1` random injective starts.
pub fn smatch(pred: &AmrGraph, gold: &AmrGraph, restarts: usize, seed: u64) -> Result<PrF1> {
    smatch_triples(&triples(pred, false)?, &triples(gold, false)?, restarts, seed)
}

/// Raw (matched, predicted, gold) triple counts for corpus-level
/// micro-averaging.
pub fn smatch_counts(
    pred: &AmrGraph,
    gold: &AmrGraph,
    restarts: usize,
    seed: u64,
) -> Result<(usize, usize, usize)> {
    let pt = triples(pred, false)?;
    let gt = triples(gold, false)?;
    let score = smatch_triples(&pt, &gt, restarts, seed)?;
    let matched = (score.precision * pt.total() as f64).round() as usize;
    Ok((matched, pt.total(), gt.total()))
}

pub fn smatch_triples(
    pred: &TripleSet,
    gold: &TripleSet,
    restarts: usize,
    seed: u64,
) -> Result<PrF1> {
    let mut best = 0;
    let restarts = restarts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..restarts {
        let mut mapping = if attempt == 0 {
            greedy_seed_mapping(pred, gold)
        } else {
            // Random injective start over a random subset of pred vars.
            let mut golds: Vec<usize> = (0..gold.n_vars).collect();
            golds.shuffle(&mut rng);
            let mut preds: Vec<usize> = (0..pred.n_vars).collect();
            preds.shuffle(&mut rng);
            let mut m = vec![None; pred.n_vars];
            for (slot, &p) in preds.iter().enumerate() {
                m[p] = golds.get(slot).copied();
            }
            m
        };
        let score = climb(pred, gold, &mut mapping);
        if score > best {
            best = score;
        }
    }
    Ok(PrF1::from_counts(best, pred.total(), gold.total()))
}

/// Exhaustive best-mapping Smatch for small variable counts (oracle).
pub fn smatch_exhaustive(pred: &AmrGraph, gold: &AmrGraph) -> Result<PrF1> {
    let pt = triples(pred, false)?;
    let gt = triples(gold, false)?;
    let mut best = 0;
    let mut mapping: Vec<Option<usize>> = vec![None; pt.n_vars];
    let mut used = vec![false; gt.n_vars];
    fn rec(
        p: usize,
        pt: &TripleSet,
        gt: &TripleSet,
        mapping: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut usize,
    ) {
        if p == pt.n_vars {
            let score = matched(pt, gt, mapping);
            if score > *best {
                *best = score;
            }
            return;
        }
        for g in 0..gt.n_vars {
            if !used[g] {
                used[g] = true;
                mapping[p] = Some(g);
                rec(p + 1, pt, gt, mapping, used, best);
                used[g] = false;
            }
        }
        mapping[p] = None;
        rec(p + 1, pt, gt, mapping, used, best);
        mapping[p] = None;
    }
    rec(0, &pt, &gt, &mut mapping, &mut used, &mut best);
    Ok(PrF1::from_counts(best, pt.total(), gt.total()))
}

/// Concept F1 over multisets of full labels (senses included).
pub fn concept_f1(pred: &AmrGraph, gold: &AmrGraph) -> PrF1 {
    let count = |g: &AmrGraph| -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for c in &g.concepts {
            *m.entry(c.full_label()).or_default() += 1;
        }
        m
    };
    let p = count(pred);
    let g = count(gold);
    let mut hit = 0;
    for (label, &pc) in &p {
        if let Some(&gc) = g.get(label) {
            hit += pc.min(gc);
        }
    }
    PrF1::from_counts(hit, pred.len(), gold.len())
}

/// Unlabeled edge F1: Smatch with relation names collapsed.
pub fn unlabeled_f1(pred: &AmrGraph, gold: &AmrGraph, restarts: usize, seed: u64) -> Result<PrF1> {
    smatch_triples(&triples(pred, true)?, &triples(gold, true)?, restarts, seed)
}

/// Fraction of real concepts whose argmax alignment column matches gold.
/// Ties in a row break uniformly at random (seeded).
pub fn alignment_accuracy(
    a_hat: &Tensor,
    gold: &[Option<usize>],
    seed: u64,
) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, gw) in gold.iter().enumerate() {
        let Some(gw) = *gw else { continue };
        total += 1;
        let row = a_hat.row_slice(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..row.len()).filter(|&k| row[k] == max).collect();
        let pick = ties[rng.random_range(0..ties.len())];
        if pick == gw {
            correct += 1;
        }
    }
    if total == 0 {
        None
    } else {
        Some(correct as f64 / total as f64)
    }
}

/// Corpus-level scores mirroring the summary table rows.
#[derive(Clone, Copy, Debug, Default)]
pub struct CorpusScores {
    pub smatch: f64,
    pub unlabeled: f64,
    pub concepts: f64,
    pub alignment: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::penman::parse;
    use crate::graph::random::random_graph;

    #[test]
    fn identical_graphs_score_one() {
        let g = parse("(o / obligate-01 :ARG2 (g / go-02 :ARG0 (b / boy) :polarity -))").unwrap();
        let s = smatch(&g, &g, 4, 1).unwrap();
        assert_eq!(s.f1, 1.0);
        assert_eq!(concept_f1(&g, &g).f1, 1.0);
        assert_eq!(unlabeled_f1(&g, &g, 4, 1).unwrap().f1, 1.0);
    }

    #[test]
    fn disjoint_labels_score_zero() {
        let a = parse("(x / cat)").unwrap();
        let b = parse("(y / dog)").unwrap();
        assert_eq!(smatch(&a, &b, 4, 1).unwrap().f1, 0.0);
        assert_eq!(concept_f1(&a, &b).f1, 0.0);
    }

    #[test]
    fn hill_climb_matches_exhaustive_on_random_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..120 {
            let a = random_graph(&mut rng, 6);
            let b = if trial % 3 == 0 {
                a.clone()
            } else {
                random_graph(&mut rng, 6)
            };
            let hc = smatch(&a, &b, 4, 100 + trial).unwrap();
            let ex = smatch_exhaustive(&a, &b).unwrap();
            assert!(
                (hc.f1 - ex.f1).abs() < 1e-12,
                "trial {trial}: hill climb {} vs exhaustive {}",
                hc.f1,
                ex.f1
            );
        }
    }

    #[test]
    fn alignment_accuracy_cases() {
        // One-hot at gold: accuracy 1.
        let mut a = Tensor::zeros(&[3, 3]);
        a.set2(0, 1, 1.0);
        a.set2(1, 0, 1.0);
        a.set2(2, 2, 1.0);
        let gold = vec![Some(1), Some(0), Some(2)];
        assert_eq!(alignment_accuracy(&a, &gold, 1), Some(1.0));

        // Uniform rows, n = 4: expectation 1/4 over random tie-breaks.
        let u = Tensor::full(&[4, 4], 0.25);
        let gold = vec![Some(0), Some(1), Some(2), Some(3)];
        let mut total = 0.0;
        let reps = 4000;
        for s in 0..reps {
            total += alignment_accuracy(&u, &gold, s as u64).unwrap();
        }
        let mean = total / reps as f64;
        // SE of the mean ~ sqrt(p(1-p)/(4*reps)) ~ 0.0034
        assert!((mean - 0.25).abs() < 0.015, "mean {mean}");

        // No gold alignment: omitted.
        assert_eq!(alignment_accuracy(&u, &[None, None, None, None], 1), None);
    }

    #[test]
    fn wiki_and_root_count_as_triples() {
        let a = parse(r#"(v / visit-01 :ARG0 (p / person :wiki - :name (n / name :op1 "Anna")))"#)
            .unwrap();
        let t = triples(&a, false).unwrap();
        assert!(t.attributes.iter().any(|(r, _, x)| r == "TOP" && x == "visit-01"));
        assert!(t.attributes.iter().any(|(r, _, x)| r == "wiki" && x == "-"));
        assert!(t.attributes.iter().any(|(r, _, x)| r == "op1" && x == "Anna"));
        // smatch of graph against itself with different variable names: 1.0
        let b = parse(r#"(q / visit-01 :ARG0 (z / person :wiki - :name (w / name :op1 "Anna")))"#)
            .unwrap();
        assert_eq!(smatch(&a, &b, 4, 3).unwrap().f1, 1.0);
    }
}
