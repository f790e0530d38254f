//! Corpus-derived vocabulary: token/label/category/relation inventories,
//! the copy dictionary, sense and wiki lookup tables, decode-side unpack
//! patterns, and the assembly of model-ready instances.

use std::collections::{BTreeMap, BTreeSet};

use super::recat::{assign_categories, recategorize, RuleSet};
use super::{
    build_copy_dictionary, merge_dashed_tokens, pad_to_square, stub_annotate, AnnotatedSentence,
    CopyDictionary, MatchRules, NULL_WORD,
};
use crate::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::graph::{normalize_relation_direction, Concept, NormalizeConfig, CAT_NULL};

pub const UNK: &str = "<unk>";

/// Interns strings to dense ids; id order is insertion order.
#[derive(Clone, Debug, Default)]
pub struct Indexer {
    names: Vec<String>,
    map: BTreeMap<String, usize>,
}

impl Indexer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_specials(specials: &[&str]) -> Self {
        let mut ix = Self::default();
        for s in specials {
            ix.intern(s);
        }
        ix
    }

    pub fn intern(&mut self, s: &str) -> usize {
        if let Some(&i) = self.map.get(s) {
            return i;
        }
        let i = self.names.len();
        self.names.push(s.to_string());
        self.map.insert(s.to_string(), i);
        i
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.map.get(s).copied()
    }

    pub fn get_or_unk(&self, s: &str) -> usize {
        self.get(s).unwrap_or(0)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Decode-side reconstruction pattern for one compound `(category, label)`:
/// the original member concepts, internal edges, and which member receives
/// external edges (also serving as the root representative).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnpackPattern {
    pub members: Vec<Concept>,
    pub edges: Vec<(usize, usize, String)>,
    pub attach: usize,
}

impl UnpackPattern {
    fn canonical_key(&self) -> String {
        let mut s = String::new();
        for m in &self.members {
            s.push_str(&format!("{}|{}|{:?};", m.label, m.category, m.sense));
        }
        for (a, b, r) in &self.edges {
            s.push_str(&format!("{a}-{r}-{b};"));
        }
        s.push_str(&format!("@{}", self.attach));
        s
    }
}

#[derive(Clone, Debug)]
pub struct Vocabulary {
    pub words: Indexer,
    pub word_counts: BTreeMap<String, usize>,
    pub lemmas: Indexer,
    pub pos: Indexer,
    pub ner: Indexer,
    /// Labels of re-categorized (compound-level) concepts.
    pub recat_labels: Indexer,
    pub recat_label_counts: BTreeMap<String, usize>,
    recat_label_category: BTreeMap<String, String>,
    /// Labels of original (unpacked) concepts, used by relation/root models.
    pub orig_labels: Indexer,
    /// Concept categories; id 0 is NULL.
    pub categories: Indexer,
    /// Relation labels post direction-normalization; id 0 is NULL.
    pub relations: Indexer,
    pub copy_dict: CopyDictionary,
    pub sense_table: BTreeMap<String, String>,
    pub wiki_table: BTreeMap<String, String>,
    pub unpack_patterns: BTreeMap<(String, String), UnpackPattern>,
    pub freq_threshold: usize,
    /// Per category, the sorted frequent concept labels that own a softmax
    /// vector.
    pub frequent_by_category: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    pub fn recat_category(&self, label: &str) -> Option<&str> {
        self.recat_label_category.get(label).map(String::as_str)
    }

    pub fn frequent_of(&self, category: &str) -> &[String] {
        self.frequent_by_category
            .get(category)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn null_category_id(&self) -> usize {
        0
    }

    pub fn null_relation_id(&self) -> usize {
        0
    }

    pub fn is_known_dashed(&self, merged: &str) -> bool {
        merged.contains('-') && self.recat_labels.get(merged).is_some()
    }

    pub fn sense_for(&self, label: &str) -> String {
        self.sense_table.get(label).cloned().unwrap_or_else(|| "-01".into())
    }

    pub fn wiki_for(&self, surface: &str) -> String {
        self.wiki_table.get(surface).cloned().unwrap_or_else(|| "-".into())
    }
}

/// Builds the vocabulary from a training corpus.
pub fn build_vocabulary(
    records: &[CorpusRecord],
    rules: &RuleSet,
    freq_threshold: usize,
) -> Result<Vocabulary> {
    let norm_cfg = NormalizeConfig::default();
    let match_rules = MatchRules::default();

    // First pass: graphs, groups, label inventories.
    let mut recat_labels = Indexer::with_specials(&[UNK, NULL_WORD]);
    let mut recat_label_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut recat_label_category: BTreeMap<String, String> = BTreeMap::new();
    let mut category_conflicts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut orig_labels = Indexer::with_specials(&[UNK]);
    let mut categories = Indexer::with_specials(&[CAT_NULL]);
    let mut relations = Indexer::with_specials(&["NULL"]);
    let mut sense_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut wiki_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut pattern_counts: BTreeMap<(String, String), BTreeMap<String, (usize, UnpackPattern)>> =
        BTreeMap::new();
    let mut recat_per_record: Vec<Vec<String>> = Vec::with_capacity(records.len());

    for record in records {
        let graph = assign_categories(&record.graph()?);
        let recat = recategorize(&graph, rules)?;
        let mut labels_here = Vec::new();
        for c in &recat.graph.concepts {
            recat_labels.intern(&c.label);
            *recat_label_counts.entry(c.label.clone()).or_default() += 1;
            *category_conflicts
                .entry(c.label.clone())
                .or_default()
                .entry(c.category.clone())
                .or_default() += 1;
            categories.intern(&c.category);
            labels_here.push(c.label.clone());
        }
        recat_per_record.push(labels_here);
        for c in &recat.original.concepts {
            orig_labels.intern(&c.label);
            categories.intern(&c.category);
            if let Some(sense) = &c.sense {
                *sense_counts
                    .entry(c.label.clone())
                    .or_default()
                    .entry(sense.clone())
                    .or_default() += 1;
            }
        }
        let normalized = normalize_relation_direction(&recat.original, &norm_cfg)?;
        for r in normalized.edges.values() {
            relations.intern(r);
        }
        collect_group_artifacts(&recat, &mut wiki_counts, &mut pattern_counts);
    }

    // Majority category per recat label (ties break lexicographically).
    for (label, counts) in category_conflicts {
        let mut best: Option<(&String, usize)> = None;
        for (cat, &n) in &counts {
            if best.map(|(_, bn)| n > bn).unwrap_or(true) {
                best = Some((cat, n));
            }
        }
        recat_label_category.insert(label, best.unwrap().0.clone());
    }

    // Second pass: tokens (with dashed merging) and the copy dictionary.
    let label_set: BTreeSet<String> = recat_labels.names().iter().cloned().collect();
    let mut words = Indexer::with_specials(&[UNK, NULL_WORD]);
    let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut lemmas = Indexer::with_specials(&[UNK, NULL_WORD]);
    let mut pos = Indexer::with_specials(&[UNK, "X"]);
    let mut ner = Indexer::with_specials(&[UNK, "O"]);
    let mut sentences: Vec<AnnotatedSentence> = Vec::with_capacity(records.len());
    for record in records {
        let (tokens, _) = merge_dashed_tokens(&record.tokens, |w| {
            w.contains('-') && label_set.contains(w)
        });
        let annotated = stub_annotate(&tokens)?;
        for ((t, l), (p, n)) in annotated
            .tokens
            .iter()
            .zip(&annotated.lemmas)
            .zip(annotated.pos.iter().zip(&annotated.ner))
        {
            words.intern(t);
            *word_counts.entry(t.clone()).or_default() += 1;
            lemmas.intern(l);
            pos.intern(p);
            ner.intern(n);
        }
        sentences.push(annotated);
    }
    let copy_dict = build_copy_dictionary(
        sentences
            .iter()
            .zip(recat_per_record.iter())
            .map(|(s, c)| (s, c.as_slice())),
        &match_rules,
    );

    let sense_table = argmax_table(sense_counts);
    let wiki_table = argmax_table(wiki_counts);
    let mut unpack_patterns = BTreeMap::new();
    for (key, variants) in pattern_counts {
        let mut best: Option<(&String, usize)> = None;
        for (pat_key, (n, _)) in &variants {
            if best.map(|(_, bn)| *n > bn).unwrap_or(true) {
                best = Some((pat_key, *n));
            }
        }
        let chosen = best.unwrap().0.clone();
        unpack_patterns.insert(key, variants[&chosen].1.clone());
    }

    let mut frequent_by_category: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (label, &count) in &recat_label_counts {
        if count >= freq_threshold {
            let cat = recat_label_category[label].clone();
            frequent_by_category.entry(cat).or_default().push(label.clone());
        }
    }

    Ok(Vocabulary {
        words,
        word_counts,
        lemmas,
        pos,
        ner,
        recat_labels,
        recat_label_counts,
        recat_label_category,
        orig_labels,
        categories,
        relations,
        copy_dict,
        sense_table,
        wiki_table,
        unpack_patterns,
        freq_threshold,
        frequent_by_category,
    })
}

fn argmax_table(counts: BTreeMap<String, BTreeMap<String, usize>>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (key, variants) in counts {
        let mut best: Option<(&String, usize)> = None;
        for (v, &n) in &variants {
            if best.map(|(_, bn)| n > bn).unwrap_or(true) {
                best = Some((v, n));
            }
        }
        out.insert(key, best.unwrap().0.clone());
    }
    out
}

fn collect_group_artifacts(
    recat: &super::recat::RecatGraph,
    wiki_counts: &mut BTreeMap<String, BTreeMap<String, usize>>,
    pattern_counts: &mut BTreeMap<(String, String), BTreeMap<String, (usize, UnpackPattern)>>,
) {
    // Recover groups from orig_to_recat: members mapping to compound nodes
    // that differ from a 1:1 singleton mapping.
    let mut members_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (orig, &rc) in recat.orig_to_recat.iter().enumerate() {
        members_of.entry(rc).or_default().push(orig);
    }
    for (&rc, members) in &members_of {
        let compound = &recat.graph.concepts[rc];
        if members.len() == 1 && compound.label == recat.original.concepts[members[0]].label {
            continue;
        }
        if compound.category.contains("Ner_") {
            // Entity chain: wiki table keyed by the full surface name.
            if compound.category.starts_with("B-") {
                let entity = members
                    .iter()
                    .copied()
                    .find(|&m| recat.original.out_edges(m).any(|(_, r)| r == "name"));
                if let Some(e) = entity {
                    if let Some(w) = &recat.original.concepts[e].wiki {
                        if w != "-" {
                            let name_node = recat
                                .original
                                .out_edges(e)
                                .find(|(_, r)| *r == "name")
                                .map(|(v, _)| v)
                                .unwrap();
                            let mut ops: Vec<(usize, &str)> = recat
                                .original
                                .out_edges(name_node)
                                .filter_map(|(v, r)| {
                                    r.strip_prefix("op")
                                        .and_then(|d| d.parse::<usize>().ok())
                                        .map(|k| (k, recat.original.concepts[v].label.as_str()))
                                })
                                .collect();
                            ops.sort();
                            let surface: Vec<&str> = ops.iter().map(|&(_, l)| l).collect();
                            *wiki_counts
                                .entry(surface.join(" "))
                                .or_default()
                                .entry(w.clone())
                                .or_default() += 1;
                        }
                    }
                }
            }
            continue;
        }
        // Template / fixed-phrase group: record the reconstruction pattern.
        let local: BTreeMap<usize, usize> =
            members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let mut member_concepts: Vec<Concept> = Vec::new();
        for &m in members.iter() {
            let mut c = recat.original.concepts[m].clone();
            c.variable = String::new();
            member_concepts.push(c);
        }
        let mut edges = Vec::new();
        for (&(a, b), r) in &recat.original.edges {
            if let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) {
                edges.push((la, lb, r.clone()));
            }
        }
        // External edges attach to the member that has any edge leaving the
        // group; default to member 0.
        let mut attach = 0;
        'outer: for (&(a, b), _) in &recat.original.edges {
            let (ia, ib) = (local.contains_key(&a), local.contains_key(&b));
            if ia && !ib {
                attach = local[&a];
                break 'outer;
            }
            if ib && !ia {
                attach = local[&b];
                break 'outer;
            }
        }
        let pattern = UnpackPattern {
            members: member_concepts,
            edges,
            attach,
        };
        let key = (compound.category.clone(), compound.label.clone());
        let pat_key = pattern.canonical_key();
        let entry = pattern_counts.entry(key).or_default();
        let slot = entry.entry(pat_key).or_insert((0, pattern));
        slot.0 += 1;
    }
}

/// One re-categorized concept position (padded list).
#[derive(Clone, Debug)]
pub struct RecatConceptItem {
    pub label: String,
    pub category: String,
    pub label_id: usize,
    pub category_id: usize,
    pub is_null: bool,
}

/// One original concept with its alignment-sharing group.
#[derive(Clone, Debug)]
pub struct OrigConceptItem {
    pub label: String,
    pub category: String,
    pub label_id: usize,
    pub category_id: usize,
    /// Index into the padded recat sequence whose alignment row this concept
    /// shares.
    pub group: usize,
    pub is_constant: bool,
}

/// A model-ready instance: padded to square, ids resolved, gold structures
/// extracted.
#[derive(Clone, Debug)]
pub struct PreparedInstance {
    pub id: u64,
    pub size: usize,
    pub real_tokens: usize,
    pub real_concepts: usize,
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub word_ids: Vec<usize>,
    pub lemma_ids: Vec<usize>,
    pub pos_ids: Vec<usize>,
    pub ner_ids: Vec<usize>,
    /// Copy candidate label per padded word.
    pub copy_labels: Vec<Option<String>>,
    pub concepts: Vec<RecatConceptItem>,
    pub original: Vec<OrigConceptItem>,
    /// Normalized gold edges between original concepts (relation ids).
    pub gold_edges: BTreeMap<(usize, usize), usize>,
    pub gold_root: usize,
    /// Gold word index per padded recat position (None for padding/untriggered).
    pub gold_alignment: Option<Vec<Option<usize>>>,
    pub gold_graph_text: String,
}

pub fn prepare_instance(
    record: &CorpusRecord,
    vocab: &Vocabulary,
    rules: &RuleSet,
) -> Result<PreparedInstance> {
    let (tokens, remap) = merge_dashed_tokens(&record.tokens, |w| vocab.is_known_dashed(w));
    let mut annotated = stub_annotate(&tokens)?;
    for (i, (w, l)) in annotated
        .tokens
        .clone()
        .iter()
        .zip(annotated.lemmas.clone().iter())
        .enumerate()
    {
        annotated.copy[i] = Some(vocab.copy_dict.lookup(w, l));
    }

    let graph = assign_categories(&record.graph()?);
    let recat = recategorize(&graph, rules)?;
    let order = recat.graph.dfs_concept_order()?;
    let position_of: BTreeMap<usize, usize> =
        order.iter().enumerate().map(|(pos, &node)| (node, pos)).collect();

    let m = recat.graph.len();
    let n_tokens = tokens.len();
    let pad = pad_to_square(m, n_tokens);

    // Padded word side.
    let mut word_ids = Vec::with_capacity(pad.size);
    let mut lemma_ids = Vec::with_capacity(pad.size);
    let mut pos_ids = Vec::with_capacity(pad.size);
    let mut ner_ids = Vec::with_capacity(pad.size);
    let mut copy_labels: Vec<Option<String>> = Vec::with_capacity(pad.size);
    let mut padded_tokens = annotated.tokens.clone();
    let mut padded_lemmas = annotated.lemmas.clone();
    for k in 0..pad.size {
        if k < n_tokens {
            word_ids.push(vocab.words.get_or_unk(&annotated.tokens[k]));
            lemma_ids.push(vocab.lemmas.get_or_unk(&annotated.lemmas[k]));
            pos_ids.push(vocab.pos.get_or_unk(&annotated.pos[k]));
            ner_ids.push(vocab.ner.get_or_unk(&annotated.ner[k]));
            copy_labels.push(annotated.copy[k].clone());
        } else {
            padded_tokens.push(NULL_WORD.to_string());
            padded_lemmas.push(NULL_WORD.to_string());
            word_ids.push(vocab.words.get_or_unk(NULL_WORD));
            lemma_ids.push(vocab.lemmas.get_or_unk(NULL_WORD));
            pos_ids.push(vocab.pos.get_or_unk("X"));
            ner_ids.push(vocab.ner.get_or_unk("O"));
            copy_labels.push(None);
        }
    }

    // Padded recat concepts in DFS order.
    let mut concepts = Vec::with_capacity(pad.size);
    for &node in &order {
        let c = &recat.graph.concepts[node];
        concepts.push(RecatConceptItem {
            label: c.label.clone(),
            category: c.category.clone(),
            label_id: vocab.recat_labels.get_or_unk(&c.label),
            category_id: vocab.categories.get_or_unk(&c.category),
            is_null: false,
        });
    }
    for _ in 0..pad.null_concepts {
        concepts.push(RecatConceptItem {
            label: NULL_WORD.to_string(),
            category: CAT_NULL.to_string(),
            label_id: vocab.recat_labels.get_or_unk(NULL_WORD),
            category_id: vocab.null_category_id(),
            is_null: true,
        });
    }

    // Original concepts with group pointers into the padded recat order.
    let mut original = Vec::with_capacity(recat.original.len());
    for (i, c) in recat.original.concepts.iter().enumerate() {
        let recat_node = recat.orig_to_recat[i];
        original.push(OrigConceptItem {
            label: c.label.clone(),
            category: c.category.clone(),
            label_id: vocab.orig_labels.get_or_unk(&c.label),
            category_id: vocab.categories.get_or_unk(&c.category),
            group: position_of[&recat_node],
            is_constant: c.is_constant(),
        });
    }

    let normalized = normalize_relation_direction(&recat.original, &NormalizeConfig::default())?;
    let mut gold_edges = BTreeMap::new();
    for (&(a, b), r) in &normalized.edges {
        let rid = vocab.relations.get(r).ok_or_else(|| Error::Corpus {
            line: 0,
            msg: format!("relation `{r}` not in the training inventory"),
        })?;
        gold_edges.insert((a, b), rid);
    }

    // Gold alignment mapped to padded recat positions through group anchors.
    let gold_alignment = match &record.alignment {
        None => None,
        Some(orig_align) => {
            // Record alignments index the parsed graph's DFS order; recover
            // node -> token first.
            let orig_order = recat.original.dfs_concept_order()?;
            if orig_align.len() != orig_order.len() {
                return Err(Error::Corpus {
                    line: 0,
                    msg: format!(
                        "alignment length {} != concept count {}",
                        orig_align.len(),
                        orig_order.len()
                    ),
                });
            }
            let mut token_of_node: BTreeMap<usize, usize> = BTreeMap::new();
            for (pos, &node) in orig_order.iter().enumerate() {
                if let Some(w) = orig_align[pos] {
                    token_of_node.insert(node, remap[w]);
                }
            }
            let mut a = vec![None; pad.size];
            for (pos, &node) in order.iter().enumerate() {
                let anchor = recat.anchors[node];
                a[pos] = token_of_node.get(&anchor).copied();
            }
            Some(a)
        }
    };

    Ok(PreparedInstance {
        id: record.id,
        size: pad.size,
        real_tokens: n_tokens,
        real_concepts: m,
        tokens: padded_tokens,
        lemmas: padded_lemmas,
        word_ids,
        lemma_ids,
        pos_ids,
        ner_ids,
        copy_labels,
        concepts,
        original,
        gold_edges,
        gold_root: recat.original.root,
        gold_alignment,
        gold_graph_text: record.graph_text.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};

    fn small_vocab() -> (Vec<CorpusRecord>, Vocabulary, RuleSet) {
        let cfg = GeneratorConfig {
            train: 120,
            dev: 10,
            test: 10,
            ..Default::default()
        };
        let (train, _, _) = generate_corpus(&cfg).unwrap();
        let rules = RuleSet::default();
        let vocab = build_vocabulary(&train, &rules, 5).unwrap();
        (train, vocab, rules)
    }

    #[test]
    fn vocabulary_inventories_are_populated() {
        let (_, vocab, _) = small_vocab();
        assert!(vocab.words.len() > 20, "words {}", vocab.words.len());
        assert!(vocab.relations.get("ARG0").is_some());
        assert_eq!(vocab.relations.get("NULL"), Some(0));
        assert_eq!(vocab.categories.get(CAT_NULL), Some(0));
        assert!(vocab.categories.get("frame").is_some());
        assert_eq!(vocab.sense_for("go"), "-02");
        assert_eq!(vocab.sense_for("want"), "-01");
        assert_eq!(vocab.sense_for("zzqx"), "-01");
        assert!(!vocab.frequent_of("frame").is_empty());
    }

    #[test]
    fn prepared_instances_are_square_and_consistent() {
        let (train, vocab, rules) = small_vocab();
        for record in &train {
            let inst = prepare_instance(record, &vocab, &rules).unwrap();
            assert_eq!(inst.tokens.len(), inst.size);
            assert_eq!(inst.concepts.len(), inst.size);
            assert_eq!(inst.word_ids.len(), inst.size);
            assert!(inst.real_concepts <= inst.size);
            for o in &inst.original {
                assert!(o.group < inst.real_concepts);
            }
            if let Some(a) = &inst.gold_alignment {
                let mut seen = std::collections::BTreeSet::new();
                for w in a.iter().flatten() {
                    assert!(*w < inst.size);
                    assert!(seen.insert(*w));
                }
            }
            for (&(i, j), &r) in &inst.gold_edges {
                assert!(i < inst.original.len() && j < inst.original.len());
                assert!(r < vocab.relations.len());
            }
        }
    }

    #[test]
    fn copy_candidates_cover_lexically_triggered_concepts() {
        let (train, vocab, rules) = small_vocab();
        let mut covered = 0usize;
        let mut total = 0usize;
        for record in &train {
            let inst = prepare_instance(record, &vocab, &rules).unwrap();
            if let Some(align) = &inst.gold_alignment {
                for (pos, w) in align.iter().enumerate() {
                    let Some(w) = *w else { continue };
                    total += 1;
                    if inst.copy_labels[w].as_deref() == Some(inst.concepts[pos].label.as_str()) {
                        covered += 1;
                    }
                }
            }
        }
        assert!(
            covered * 10 >= total * 6,
            "copy coverage too low: {covered}/{total}"
        );
    }

    #[test]
    fn wiki_and_unpack_tables_learned_from_groups() {
        let (_, vocab, _) = small_vocab();
        assert_eq!(vocab.wiki_for("New York"), "New_York");
        assert_eq!(vocab.wiki_for("never seen"), "-");
        let key = ("thing".to_string(), "opinion".to_string());
        let pat = vocab.unpack_patterns.get(&key).expect("thing(opinion) pattern");
        assert_eq!(pat.members.len(), 2);
        assert!(pat.members.iter().any(|m| m.label == "opine"));
    }

    #[test]
    fn dashed_tokens_merge_in_prepare() {
        let (train, vocab, rules) = small_vocab();
        let rec = train
            .iter()
            .find(|r| r.tokens.iter().any(|t| t == "than"))
            .expect("quantity template should appear in 120 draws");
        let inst = prepare_instance(rec, &vocab, &rules).unwrap();
        assert!(inst.tokens.iter().any(|t| t == "more-than"));
        let pos = inst.concepts.iter().position(|c| c.label == "more-than").unwrap();
        let a = inst.gold_alignment.as_ref().unwrap();
        assert_eq!(inst.tokens[a[pos].unwrap()], "more-than");
    }
}
