//! Test-time decoding: per-word concept choices, unpacking of compound
//! concepts, relation scoring with one-hot predicate flags, constrained
//! graph repair, and sense/wiki/root post-processing.
//!
//! Decoding never consults the alignment model: concepts are read off per
//! word, so the alignment of every emitted concept is the word that produced
//! it.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{AmrGraph, Concept, CAT_CONCEPT, CAT_NULL, CAT_NUMBER, CAT_POLARITY, CAT_STRING};
use crate::model::forward::{
    embed_token_ids, encode_flagged, encode_plain, one_hot, orig_concept_embedding, root_logits,
    ConceptScorer, DropoutCtx, RelationScorer,
};
use crate::model::ModelParameters;
use crate::preprocess::vocab::Vocabulary;
use crate::preprocess::{merge_dashed_tokens, stub_annotate, NULL_WORD};
use crate::tensor::tape::Tape;

/// Sense/wiki lookup tables distilled from the training corpus.
#[derive(Clone, Debug)]
pub struct LookupTables {
    pub sense: BTreeMap<String, String>,
    pub wiki: BTreeMap<String, String>,
}

impl LookupTables {
    pub fn from_vocab(vocab: &Vocabulary) -> Self {
        LookupTables {
            sense: vocab.sense_table.clone(),
            wiki: vocab.wiki_table.clone(),
        }
    }

    pub fn sense_for(&self, label: &str) -> String {
        self.sense.get(label).cloned().unwrap_or_else(|| "-01".into())
    }

    pub fn wiki_for(&self, surface: &str) -> String {
        self.wiki.get(surface).cloned().unwrap_or_else(|| "-".into())
    }
}

/// A tokenized sentence ready for decoding.
#[derive(Clone, Debug)]
pub struct SentenceInput {
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub word_ids: Vec<usize>,
    pub lemma_ids: Vec<usize>,
    pub pos_ids: Vec<usize>,
    pub ner_ids: Vec<usize>,
    pub copy_labels: Vec<Option<String>>,
}

pub fn prepare_sentence(tokens: &[String], vocab: &Vocabulary) -> Result<SentenceInput> {
    let (tokens, _) = merge_dashed_tokens(tokens, |w| vocab.is_known_dashed(w));
    let annotated = stub_annotate(&tokens)?;
    let copy_labels: Vec<Option<String>> = annotated
        .tokens
        .iter()
        .zip(&annotated.lemmas)
        .map(|(w, l)| Some(vocab.copy_dict.lookup(w, l)))
        .collect();
    Ok(SentenceInput {
        word_ids: annotated.tokens.iter().map(|t| vocab.words.get_or_unk(t)).collect(),
        lemma_ids: annotated.lemmas.iter().map(|l| vocab.lemmas.get_or_unk(l)).collect(),
        pos_ids: annotated.pos.iter().map(|p| vocab.pos.get_or_unk(p)).collect(),
        ner_ids: annotated.ner.iter().map(|n| vocab.ner.get_or_unk(n)).collect(),
        tokens: annotated.tokens,
        lemmas: annotated.lemmas,
        copy_labels,
    })
}

/// One original-granularity concept as decoded, with the word that carries
/// its alignment.
#[derive(Clone, Debug)]
pub struct DecodedConcept {
    pub concept: Concept,
    pub word: usize,
    pub is_constant: bool,
}

/// Everything decoding produced for one sentence.
#[derive(Clone, Debug)]
pub struct DecodedInstance {
    /// Per word: the re-categorized concept decision, or None for NULL.
    pub word_concepts: Vec<Option<(String, String)>>,
    pub concepts: Vec<DecodedConcept>,
    /// Log-probability vector over relations per scored ordered pair.
    pub relation_scores: BTreeMap<(usize, usize), Vec<f64>>,
    pub root_logits: Vec<f64>,
    pub graph: AmrGraph,
}

/// Per-word argmax concept decisions (sequence tagging view).
pub fn decode_concepts(
    params: &ModelParameters,
    vocab: &Vocabulary,
    input: &SentenceInput,
) -> Result<Vec<Option<(String, String)>>> {
    let mut tape = Tape::new();
    let b = params.store.bind_with(&mut tape, |_| false);
    let mut drop = DropoutCtx::off();
    let embs = embed_token_ids(
        &mut tape,
        &b,
        &input.word_ids,
        &input.lemma_ids,
        &input.pos_ids,
        &input.ner_ids,
        &mut drop,
    )?;
    let h = encode_plain(&mut tape, &b, params, "concept_enc", &embs)?;
    let mut scorer = ConceptScorer::new(&mut tape, &b, &h)?;
    let mut out = Vec::with_capacity(input.tokens.len());
    for k in 0..input.tokens.len() {
        out.push(scorer.best_concept(&mut tape, &b, params, vocab, &input.copy_labels, &h, k)?);
    }
    Ok(out)
}

/// Expands per-word compound decisions into original-granularity concepts
/// plus the fixed in-group edges. Returns (concepts, fixed edges, group ids).
fn unpack_decoded(
    word_concepts: &[Option<(String, String)>],
    vocab: &Vocabulary,
    tables: &LookupTables,
) -> (Vec<DecodedConcept>, Vec<(usize, usize, String)>, Vec<usize>) {
    let mut concepts: Vec<DecodedConcept> = Vec::new();
    let mut fixed_edges: Vec<(usize, usize, String)> = Vec::new();
    let mut group_of: Vec<usize> = Vec::new();
    let mut next_group = 0;

    let n = word_concepts.len();
    let mut k = 0;
    while k < n {
        let Some((category, label)) = &word_concepts[k] else {
            k += 1;
            continue;
        };
        if let Some(etype) = category.strip_prefix("B-Ner_").or_else(|| category.strip_prefix("Ner_")) {
            // Entity chain: absorb consecutive continuation nodes.
            let mut ops: Vec<(String, usize)> = vec![(label.clone(), k)];
            let mut end = k + 1;
            while end < n {
                match &word_concepts[end] {
                    Some((c, l)) if c.strip_prefix("Ner_") == Some(etype) => {
                        ops.push((l.clone(), end));
                        end += 1;
                    }
                    _ => break,
                }
            }
            let gid = next_group;
            next_group += 1;
            let surface: Vec<&str> = ops.iter().map(|(l, _)| l.as_str()).collect();
            let mut entity = Concept::new(etype, CAT_CONCEPT);
            entity.wiki = Some(tables.wiki_for(&surface.join(" ")));
            let e_idx = concepts.len();
            concepts.push(DecodedConcept {
                concept: entity,
                word: k,
                is_constant: false,
            });
            group_of.push(gid);
            let n_idx = concepts.len();
            concepts.push(DecodedConcept {
                concept: Concept::new("name", CAT_CONCEPT),
                word: k,
                is_constant: false,
            });
            group_of.push(gid);
            fixed_edges.push((e_idx, n_idx, "name".into()));
            for (i, (op_label, op_word)) in ops.iter().enumerate() {
                let idx = concepts.len();
                concepts.push(DecodedConcept {
                    concept: Concept::new(op_label, CAT_STRING),
                    word: *op_word,
                    is_constant: true,
                });
                group_of.push(gid);
                fixed_edges.push((n_idx, idx, format!("op{}", i + 1)));
            }
            k = end;
            continue;
        }
        let gid = next_group;
        next_group += 1;
        let key = (category.clone(), label.clone());
        if let Some(pattern) = vocab.unpack_patterns.get(&key) {
            let base = concepts.len();
            for member in &pattern.members {
                concepts.push(DecodedConcept {
                    concept: member.clone(),
                    word: k,
                    is_constant: member.is_constant(),
                });
                group_of.push(gid);
            }
            for (a, bb, r) in &pattern.edges {
                fixed_edges.push((base + a, base + bb, r.clone()));
            }
        } else {
            // Plain concept; constants keep their reserved categories.
            let concept = match category.as_str() {
                CAT_NUMBER | CAT_STRING | CAT_POLARITY => Concept::new(label, category),
                _ => Concept::new(label, category),
            };
            concepts.push(DecodedConcept {
                concept,
                word: k,
                is_constant: matches!(category.as_str(), CAT_NUMBER | CAT_STRING | CAT_POLARITY),
            });
            group_of.push(gid);
        }
        k += 1;
    }
    (concepts, fixed_edges, group_of)
}

/// The degree-constrained categories of repair constraint (1).
#[derive(Clone, Debug)]
pub struct RepairConfig {
    pub degree_constrained: Vec<String>,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            degree_constrained: vec![
                CAT_NUMBER.to_string(),
                CAT_STRING.to_string(),
                CAT_POLARITY.to_string(),
            ],
        }
    }
}

/// Inputs to the constrained repair: per-pair relation log-probabilities for
/// every scored ordered pair, plus fixed edges that must survive.
pub struct RepairInput<'a> {
    pub n: usize,
    /// Nodes that cannot head an edge.
    pub constant: Vec<bool>,
    /// Nodes restricted to a single neighbor (constraint 1).
    pub degree_constrained: Vec<bool>,
    pub fixed_edges: &'a [(usize, usize, String)],
    pub scores: &'a BTreeMap<(usize, usize), Vec<f64>>,
    /// Relation names by id; id 0 is NULL.
    pub relations: &'a [String],
}

/// Builds a connected graph satisfying the three repair constraints:
/// (1) degree-constrained nodes keep a single neighbor, (2) one argument per
/// (predicate, relation), (3) connectivity via greedy best-edge insertion.
pub fn repair_graph(input: &RepairInput) -> Result<BTreeMap<(usize, usize), String>> {
    let n = input.n;
    if n == 0 {
        return Ok(BTreeMap::new());
    }
    let mut edges: BTreeMap<(usize, usize), (String, f64)> = BTreeMap::new();
    for (i, j, r) in input.fixed_edges {
        edges.insert((*i, *j), (r.clone(), f64::INFINITY));
    }

    // (a) per-pair argmax labels.
    for (&(i, j), probs) in input.scores {
        if edges.contains_key(&(i, j)) {
            continue;
        }
        let mut best = 0;
        for (r, &v) in probs.iter().enumerate() {
            if v > probs[best] {
                best = r;
            }
        }
        if best != 0 {
            edges.insert((i, j), (input.relations[best].clone(), probs[best]));
        }
    }

    // Directional legitimacy: a pair of mutually inverse edges cannot exist
    // in an acyclic graph, so keep only the better direction of each pair.
    let pairs: Vec<(usize, usize)> = edges
        .keys()
        .filter(|&&(i, j)| i < j && edges.contains_key(&(j, i)))
        .copied()
        .collect();
    for (i, j) in pairs {
        let fwd = edges[&(i, j)].1;
        let bwd = edges[&(j, i)].1;
        if fwd >= bwd {
            edges.remove(&(j, i));
        } else {
            edges.remove(&(i, j));
        }
    }

    // (b) constraint (1): keep only the best edge at degree-constrained nodes.
    for v in 0..n {
        if !input.degree_constrained[v] {
            continue;
        }
        let mut incident: Vec<((usize, usize), f64)> = edges
            .iter()
            .filter(|(&(i, j), _)| i == v || j == v)
            .map(|(&k, (_, s))| (k, *s))
            .collect();
        if incident.len() <= 1 {
            continue;
        }
        incident.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        for (key, _) in incident.into_iter().skip(1) {
            edges.remove(&key);
        }
    }

    // (c) constraint (2): one argument per (predicate, relation).
    let mut by_head_rel: BTreeMap<(usize, String), Vec<((usize, usize), f64)>> = BTreeMap::new();
    for (&(i, j), (r, s)) in &edges {
        by_head_rel.entry((i, r.clone())).or_default().push(((i, j), *s));
    }
    for (_, mut dups) in by_head_rel {
        if dups.len() <= 1 {
            continue;
        }
        dups.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        for (key, _) in dups.into_iter().skip(1) {
            edges.remove(&key);
        }
    }

    // (d) constraint (3): greedy connection of components.
    let mut components = Components::new(n);
    for &(i, j) in edges.keys() {
        components.union(i, j);
    }
    let degree = |edges: &BTreeMap<(usize, usize), (String, f64)>, v: usize| {
        edges.keys().filter(|&&(i, j)| i == v || j == v).count()
    };
    while components.count() > 1 {
        // Best non-NULL cross-component edge that respects (1) and (2).
        let mut best: Option<((usize, usize), usize, f64)> = None;
        for (&(i, j), probs) in input.scores {
            if components.find(i) == components.find(j)
                || edges.contains_key(&(i, j))
                || edges.contains_key(&(j, i))
            {
                continue;
            }
            if input.degree_constrained[i] && degree(&edges, i) >= 1 {
                continue;
            }
            if input.degree_constrained[j] && degree(&edges, j) >= 1 {
                continue;
            }
            for (r, &v) in probs.iter().enumerate().skip(1) {
                let occupied = edges
                    .iter()
                    .any(|(&(h, _), (lbl, _))| h == i && lbl == &input.relations[r]);
                if occupied {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, _, bv)) => v > bv,
                };
                if better {
                    best = Some(((i, j), r, v));
                }
            }
        }
        let Some(((i, j), r, v)) = best else {
            return Err(Error::Graph(
                "cannot connect components: no admissible edge remains".into(),
            ));
        };
        edges.insert((i, j), (input.relations[r].clone(), v));
        components.union(i, j);
    }

    Ok(edges.into_iter().map(|(k, (r, _))| (k, r)).collect())
}

struct Components {
    parent: Vec<usize>,
    count: usize,
}

impl Components {
    fn new(n: usize) -> Self {
        Components {
            parent: (0..n).collect(),
            count: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
            self.count -= 1;
        }
    }

    fn count(&self) -> usize {
        self.count
    }
}

/// Full pipeline: concepts, unpacking, relation scores, repair, senses,
/// wiki, root.
pub fn decode_instance(
    params: &ModelParameters,
    vocab: &Vocabulary,
    tables: &LookupTables,
    input: &SentenceInput,
) -> Result<DecodedInstance> {
    let word_concepts = decode_concepts(params, vocab, input)?;
    let (mut concepts, fixed_edges, group_of) = unpack_decoded(&word_concepts, vocab, tables);

    // A sentence with no usable (non-constant) concepts cannot anchor a
    // rooted graph; emit the empty-graph sentinel.
    if concepts.iter().all(|c| c.is_constant) {
        // Empty-graph sentinel.
        let graph = AmrGraph::singleton(Concept::new("amr-empty", CAT_CONCEPT));
        return Ok(DecodedInstance {
            word_concepts,
            concepts: Vec::new(),
            relation_scores: BTreeMap::new(),
            root_logits: Vec::new(),
            graph,
        });
    }

    // Relation scores with one relation-encoder pass per predicate word.
    let mut tape = Tape::new();
    let b = params.store.bind_with(&mut tape, |_| false);
    let mut drop = DropoutCtx::off();
    let embs = embed_token_ids(
        &mut tape,
        &b,
        &input.word_ids,
        &input.lemma_ids,
        &input.pos_ids,
        &input.ner_ids,
        &mut drop,
    )?;
    let n_words = input.tokens.len();
    let scorer = RelationScorer::new(&b, vocab.relations.len());
    let rel_embs: Vec<_> = concepts
        .iter()
        .map(|c| {
            orig_concept_embedding(
                &mut tape,
                &b,
                "rel",
                vocab.orig_labels.get_or_unk(&c.concept.label),
                vocab.categories.get_or_unk(&c.concept.category),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut relation_scores: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (i, head) in concepts.iter().enumerate() {
        if head.is_constant {
            continue;
        }
        let flags = one_hot(&mut tape, n_words, head.word);
        let states = encode_flagged(&mut tape, &b, params, "rel_enc", &embs, flags)?;
        let head_proj = scorer.head_proj(&mut tape, states[head.word], rel_embs[i])?;
        for (j, dep) in concepts.iter().enumerate() {
            if i == j || group_of[i] == group_of[j] {
                continue;
            }
            let dep_proj = scorer.dep_proj(&mut tape, states[dep.word], rel_embs[j])?;
            let lp = scorer.log_probs(&mut tape, head_proj, dep_proj)?;
            relation_scores.insert((i, j), tape.val(lp).data().to_vec());
        }
    }

    let repair_cfg = RepairConfig::default();
    let degree_constrained: Vec<bool> = concepts
        .iter()
        .map(|c| repair_cfg.degree_constrained.contains(&c.concept.category))
        .collect();
    let relation_names: Vec<String> = vocab.relations.names().to_vec();
    let edges = repair_graph(&RepairInput {
        n: concepts.len(),
        constant: concepts.iter().map(|c| c.is_constant).collect(),
        degree_constrained,
        fixed_edges: &fixed_edges,
        scores: &relation_scores,
        relations: &relation_names,
    })?;

    // Root scores over non-constant concepts from the root encoder.
    let zero_flags = tape.constant(crate::tensor::Tensor::zeros(&[n_words]));
    let root_states = encode_flagged(&mut tape, &b, params, "root_enc", &embs, zero_flags)?;
    let mut states = Vec::with_capacity(concepts.len());
    let mut root_embs = Vec::with_capacity(concepts.len());
    for c in &concepts {
        states.push(root_states[c.word]);
        root_embs.push(orig_concept_embedding(
            &mut tape,
            &b,
            "root",
            vocab.orig_labels.get_or_unk(&c.concept.label),
            vocab.categories.get_or_unk(&c.concept.category),
        )?);
    }
    let logits = root_logits(&mut tape, &b, &states, &root_embs)?;
    let root_logit_values = tape.val(logits).data().to_vec();

    // Root: best-scoring non-constant concept.
    let mut root = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, c) in concepts.iter().enumerate() {
        if c.is_constant {
            continue;
        }
        if root_logit_values[i] > best {
            best = root_logit_values[i];
            root = i;
        }
    }

    // Senses for frame concepts missing one.
    for c in &mut concepts {
        if c.concept.category == "frame" && c.concept.sense.is_none() {
            c.concept.sense = Some(tables.sense_for(&c.concept.label));
        }
    }

    let graph = AmrGraph {
        concepts: concepts.iter().map(|c| c.concept.clone()).collect(),
        edges,
        root,
    };

    Ok(DecodedInstance {
        word_concepts,
        concepts,
        relation_scores,
        root_logits: root_logit_values,
        graph,
    })
}

/// Re-applies the lookup stages to an already-decoded graph: senses for
/// sense-less frames, wiki for entities missing one, root unchanged.
/// Idempotent by construction.
pub fn postprocess(graph: &AmrGraph, tables: &LookupTables) -> AmrGraph {
    let mut g = graph.clone();
    for i in 0..g.len() {
        if g.concepts[i].category == "frame" && g.concepts[i].sense.is_none() {
            g.concepts[i].sense = Some(tables.sense_for(&g.concepts[i].label));
        }
        let has_name = g.out_edges(i).any(|(_, r)| r == "name");
        if has_name && g.concepts[i].wiki.is_none() {
            let name_node = g.out_edges(i).find(|(_, r)| *r == "name").map(|(v, _)| v).unwrap();
            let mut ops: Vec<(usize, String)> = g
                .out_edges(name_node)
                .filter_map(|(v, r)| {
                    r.strip_prefix("op")
                        .and_then(|d| d.parse::<usize>().ok())
                        .map(|k| (k, g.concepts[v].label.clone()))
                })
                .collect();
            ops.sort();
            let surface: Vec<String> = ops.into_iter().map(|(_, l)| l).collect();
            g.concepts[i].wiki = Some(tables.wiki_for(&surface.join(" ")));
        }
    }
    g
}

/// Helper for constructing word-level decisions from the padded training
/// view (used by evaluation of concept decisions against gold).
pub fn strip_null_words(tokens: &[String]) -> usize {
    tokens.iter().take_while(|t| t.as_str() != NULL_WORD).count()
}

/// True if the category marks a constant node.
pub fn is_constant_category(category: &str) -> bool {
    matches!(category, CAT_NUMBER | CAT_STRING | CAT_POLARITY) || category == CAT_NULL
}


#[cfg(test)]
mod lookup_tests {
    use super::*;
    use crate::graph::penman;

    fn tables() -> LookupTables {
        let mut sense = std::collections::BTreeMap::new();
        sense.insert("go".to_string(), "-02".to_string());
        let mut wiki = std::collections::BTreeMap::new();
        wiki.insert("New York".to_string(), "New_York".to_string());
        LookupTables { sense, wiki }
    }

    #[test]
    fn lookup_defaults() {
        let t = tables();
        assert_eq!(t.sense_for("go"), "-02");
        assert_eq!(t.sense_for("zzqx"), "-01");
        assert_eq!(t.wiki_for("New York"), "New_York");
        assert_eq!(t.wiki_for("Atlantis"), "-");
    }

    #[test]
    fn postprocess_fills_only_missing_fields_and_is_idempotent() {
        let mut g =
            penman::parse(r#"(g / go :ARG0 (c / city :name (n / name :op1 "New" :op2 "York")))"#)
                .unwrap();
        g.concepts[0].category = "frame".into();
        let t = tables();
        let once = postprocess(&g, &t);
        let go = once.concepts.iter().find(|c| c.label == "go").unwrap();
        assert_eq!(go.sense.as_deref(), Some("-02"));
        let city = once.concepts.iter().find(|c| c.label == "city").unwrap();
        assert_eq!(city.wiki.as_deref(), Some("New_York"));
        let twice = postprocess(&once, &t);
        assert_eq!(once, twice);

        // Already-sensed concepts keep their sense.
        let mut h = penman::parse("(g / go-03)").unwrap();
        h.concepts[0].category = "frame".into();
        let out = postprocess(&h, &t);
        assert_eq!(out.concepts[0].sense.as_deref(), Some("-03"));
    }
}
