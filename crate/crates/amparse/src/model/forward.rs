//! Forward passes: token embedding, the five encoders, and the concept,
//! relation, alignment and root scorers. Everything is recorded on a tape so
//! the training objective differentiates end to end.

use std::collections::BTreeMap;

use super::ModelParameters;
use crate::error::{Error, Result};
use crate::preprocess::vocab::{PreparedInstance, RecatConceptItem, Vocabulary};
use crate::tensor::checkpoint::Bindings;
use crate::tensor::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::lstm::{bilstm_run, BiLstmSpec};

/// Seeded dropout switch; disabled for all oracle and gradient work.
#[derive(Clone, Copy, Debug)]
pub struct DropoutCtx {
    pub rate: f64,
    pub seed: u64,
    pub enabled: bool,
    counter: u64,
}

impl DropoutCtx {
    pub fn off() -> Self {
        DropoutCtx {
            rate: 0.0,
            seed: 0,
            enabled: false,
            counter: 0,
        }
    }

    pub fn new(rate: f64, seed: u64) -> Self {
        DropoutCtx {
            rate,
            seed,
            enabled: rate > 0.0,
            counter: 0,
        }
    }

    pub fn apply(&mut self, tape: &mut Tape, v: Var) -> Var {
        if !self.enabled {
            return v;
        }
        self.counter += 1;
        let sub_seed = self
            .seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add(self.counter);
        tape.dropout(v, self.rate, sub_seed)
    }
}

/// Per-token input embeddings (word, lemma, POS, NER concatenated).
pub fn embed_tokens(
    tape: &mut Tape,
    b: &Bindings,
    inst: &PreparedInstance,
    drop: &mut DropoutCtx,
) -> Result<Vec<Var>> {
    embed_token_ids(
        tape,
        b,
        &inst.word_ids,
        &inst.lemma_ids,
        &inst.pos_ids,
        &inst.ner_ids,
        drop,
    )
}

pub fn embed_token_ids(
    tape: &mut Tape,
    b: &Bindings,
    word_ids: &[usize],
    lemma_ids: &[usize],
    pos_ids: &[usize],
    ner_ids: &[usize],
    drop: &mut DropoutCtx,
) -> Result<Vec<Var>> {
    let word = b.var("embed.word");
    let lemma = b.var("embed.lemma");
    let pos = b.var("embed.pos");
    let ner = b.var("embed.ner");
    let mut out = Vec::with_capacity(word_ids.len());
    for k in 0..word_ids.len() {
        let w = tape.row(word, word_ids[k])?;
        let l = tape.row(lemma, lemma_ids[k])?;
        let p = tape.row(pos, pos_ids[k])?;
        let n = tape.row(ner, ner_ids[k])?;
        let e = tape.concat(&[w, l, p, n])?;
        out.push(drop.apply(tape, e));
    }
    Ok(out)
}

/// Sentence encoder without flags (concept identification and alignment).
pub fn encode_plain(
    tape: &mut Tape,
    b: &Bindings,
    params: &ModelParameters,
    prefix: &str,
    token_embs: &[Var],
) -> Result<Vec<Var>> {
    let spec = BiLstmSpec {
        input: params.config.token_input(),
        hidden: params.config.sentence_hidden,
        layers: params.config.concept_layers,
    };
    bilstm_run(tape, b, prefix, &spec, token_embs)
}

/// Sentence encoder with a per-word flag appended to every input embedding
/// (relation and root encoders). `flags` is a tape vector of length n with
/// entries in [0, 1]; relaxed rows of the alignment matrix are valid input.
pub fn encode_flagged(
    tape: &mut Tape,
    b: &Bindings,
    params: &ModelParameters,
    prefix: &str,
    token_embs: &[Var],
    flags: Var,
) -> Result<Vec<Var>> {
    let n = token_embs.len();
    let flag_len = tape.val(flags).numel();
    if flag_len != n {
        return Err(Error::Model(format!(
            "flag vector has length {flag_len}, sentence has {n} tokens"
        )));
    }
    let mut inputs = Vec::with_capacity(n);
    for (k, &emb) in token_embs.iter().enumerate() {
        let f = tape.slice(flags, k, 1)?;
        inputs.push(tape.concat(&[emb, f])?);
    }
    let spec = BiLstmSpec {
        input: params.config.token_input() + 1,
        hidden: params.config.sentence_hidden,
        layers: params.config.relation_layers,
    };
    bilstm_run(tape, b, prefix, &spec, &inputs)
}

/// Concept-sequence encoder over the padded re-categorized concepts.
pub fn encode_concepts(
    tape: &mut Tape,
    b: &Bindings,
    params: &ModelParameters,
    inst: &PreparedInstance,
    drop: &mut DropoutCtx,
) -> Result<Vec<Var>> {
    encode_concept_items(tape, b, params, &inst.concepts, drop)
}

pub fn encode_concept_items(
    tape: &mut Tape,
    b: &Bindings,
    params: &ModelParameters,
    items: &[RecatConceptItem],
    drop: &mut DropoutCtx,
) -> Result<Vec<Var>> {
    let label = b.var("amr_embed.label");
    let cat = b.var("amr_embed.category");
    let mut inputs = Vec::with_capacity(items.len());
    for item in items {
        let l = tape.row(label, item.label_id)?;
        let c = tape.row(cat, item.category_id)?;
        let e = tape.concat(&[l, c])?;
        inputs.push(drop.apply(tape, e));
    }
    let spec = BiLstmSpec {
        input: params.config.concept_label_dim + params.config.category_dim,
        hidden: params.config.concept_hidden,
        layers: params.config.concept_layers,
    };
    bilstm_run(tape, b, "amr_enc", &spec, &inputs)
}

/// Bilinear alignment scores: `Phi[i][k] = g_i^T B h_k`. Both state lists
/// must already be padded to the same length.
pub fn alignment_scores(
    tape: &mut Tape,
    b: &Bindings,
    g_states: &[Var],
    h_states: &[Var],
) -> Result<Var> {
    if g_states.len() != h_states.len() {
        return Err(Error::Model(format!(
            "alignment needs a square instance: {} concepts vs {} words (pad first)",
            g_states.len(),
            h_states.len()
        )));
    }
    let g = tape.stack_rows(g_states)?;
    let h = tape.stack_rows(h_states)?;
    let b_mat = b.var("align.B");
    let gb = tape.matmul(g, b_mat)?;
    let ht = tape.transpose(h)?;
    tape.matmul(gb, ht)
}

/// Word-level concept scorer with per-(word, category) caching of the
/// within-category normalizers.
pub struct ConceptScorer {
    /// Per word: log-softmax over categories (including NULL).
    cat_log_softmax: Vec<Var>,
    within: BTreeMap<(usize, usize), WithinCategory>,
}

#[derive(Clone)]
struct WithinCategory {
    /// Frequent concept label -> score var.
    scores: BTreeMap<String, Var>,
    /// Copy candidate at this word when its category matches.
    copy: Option<(String, Var)>,
    /// Log normalizer over all candidates.
    z: Option<Var>,
}

impl ConceptScorer {
    pub fn new(tape: &mut Tape, b: &Bindings, h_states: &[Var]) -> Result<Self> {
        let cat_w = b.var("concept.cat_w");
        let cat_b = b.var("concept.cat_b");
        let mut cat_log_softmax = Vec::with_capacity(h_states.len());
        for &h in h_states {
            let logits = tape.matvec(cat_w, h)?;
            let logits = tape.add(logits, cat_b)?;
            cat_log_softmax.push(tape.log_softmax(logits)?);
        }
        Ok(ConceptScorer {
            cat_log_softmax,
            within: BTreeMap::new(),
        })
    }

    pub fn category_log_probs(&self, k: usize) -> Var {
        self.cat_log_softmax[k]
    }

    fn within_category(
        &mut self,
        tape: &mut Tape,
        b: &Bindings,
        params: &ModelParameters,
        vocab: &Vocabulary,
        copy_labels: &[Option<String>],
        h_states: &[Var],
        k: usize,
        category: &str,
        category_id: usize,
    ) -> Result<&WithinCategory> {
        if !self.within.contains_key(&(k, category_id)) {
            let v_matrix = b.var("concept.v");
            let v_copy = b.var("concept.v_copy");
            let mut scores = BTreeMap::new();
            let mut all: Vec<Var> = Vec::new();
            for label in vocab.frequent_of(category) {
                let row = params
                    .frequent_row(label)
                    .ok_or_else(|| Error::Model(format!("no softmax row for frequent `{label}`")))?;
                let v = tape.row(v_matrix, row)?;
                let s = tape.dot(v, h_states[k])?;
                scores.insert(label.clone(), s);
                all.push(s);
            }
            let copy = match &copy_labels[k] {
                Some(copy_label) => {
                    let copy_cat = vocab
                        .recat_category(copy_label)
                        .unwrap_or(crate::graph::CAT_CONCEPT);
                    if copy_cat == category {
                        let s = tape.dot(v_copy, h_states[k])?;
                        all.push(s);
                        Some((copy_label.clone(), s))
                    } else {
                        None
                    }
                }
                None => None,
            };
            let z = if all.is_empty() {
                None
            } else {
                let stacked = tape.concat(&all)?;
                Some(tape.logsumexp(stacked, 0)?)
            };
            self.within
                .insert((k, category_id), WithinCategory { scores, copy, z });
        }
        Ok(&self.within[&(k, category_id)])
    }

    /// `log P(target | a_i = k)`, or None when the target is outside the
    /// candidate set at word k (probability zero).
    pub fn logprob(
        &mut self,
        tape: &mut Tape,
        b: &Bindings,
        params: &ModelParameters,
        vocab: &Vocabulary,
        copy_labels: &[Option<String>],
        h_states: &[Var],
        k: usize,
        target: &RecatConceptItem,
    ) -> Result<Option<Var>> {
        let cat_ls = self.cat_log_softmax[k];
        let cat_term = tape.slice(cat_ls, target.category_id, 1)?;
        if target.is_null {
            return Ok(Some(cat_term));
        }
        let within = self
            .within_category(
                tape, b, params, vocab, copy_labels, h_states, k, &target.category,
                target.category_id,
            )?
            .clone();
        let Some(z) = within.z else {
            return Ok(None);
        };
        let freq_score = within.scores.get(&target.label).copied();
        let copy_score = match &within.copy {
            Some((label, s)) if label == &target.label => Some(*s),
            _ => None,
        };
        let numerator = match (freq_score, copy_score) {
            (Some(f), Some(c)) => {
                let both = tape.concat(&[f, c])?;
                tape.logsumexp(both, 0)?
            }
            (Some(f), None) => f,
            (None, Some(c)) => c,
            (None, None) => return Ok(None),
        };
        let within_term = tape.sub(numerator, z)?;
        Ok(Some(tape.add(cat_term, within_term)?))
    }

    /// Like `logprob` but an out-of-candidate target is an error listing the
    /// candidate set.
    pub fn logprob_checked(
        &mut self,
        tape: &mut Tape,
        b: &Bindings,
        params: &ModelParameters,
        vocab: &Vocabulary,
        copy_labels: &[Option<String>],
        h_states: &[Var],
        k: usize,
        target: &RecatConceptItem,
    ) -> Result<Var> {
        match self.logprob(tape, b, params, vocab, copy_labels, h_states, k, target)? {
            Some(v) => Ok(v),
            None => {
                let mut candidates: Vec<String> =
                    vocab.frequent_of(&target.category).to_vec();
                if let Some(c) = &copy_labels[k] {
                    candidates.push(format!("{c} (copy)"));
                }
                Err(Error::Model(format!(
                    "target `{}` not in category `{}` candidates at word {k}: [{}]",
                    target.label,
                    target.category,
                    candidates.join(", ")
                )))
            }
        }
    }

    /// Decode-time pick: highest-probability category, then the best
    /// candidate inside it (lexicographic tie-break). Returns None for NULL.
    pub fn best_concept(
        &mut self,
        tape: &mut Tape,
        b: &Bindings,
        params: &ModelParameters,
        vocab: &Vocabulary,
        copy_labels: &[Option<String>],
        h_states: &[Var],
        k: usize,
    ) -> Result<Option<(String, String)>> {
        let cat_ls = self.cat_log_softmax[k];
        let values = tape.val(cat_ls).data().to_vec();
        let mut best_cat = 0;
        for (c, &v) in values.iter().enumerate() {
            if v > values[best_cat] {
                best_cat = c;
            }
        }
        if best_cat == vocab.null_category_id() {
            return Ok(None);
        }
        let category = vocab.categories.name(best_cat).to_string();
        let within = self
            .within_category(tape, b, params, vocab, copy_labels, h_states, k, &category, best_cat)?
            .clone();
        let mut best: Option<(&str, f64)> = None;
        for (label, var) in &within.scores {
            let v = tape.val(*var).item();
            if best.map(|(_, bv)| v > bv).unwrap_or(true) {
                best = Some((label, v));
            }
        }
        if let Some((label, var)) = &within.copy {
            let v = tape.val(*var).item();
            // Lexicographic tie-break between the copy label and a frequent
            // label with an identical score.
            let wins = match best {
                None => true,
                Some((bl, bv)) => v > bv || (v == bv && label.as_str() < bl),
            };
            if wins {
                best = Some((label, v));
            }
        }
        Ok(best.map(|(label, _)| (category, label.to_string())))
    }
}

/// Bi-affine relation scorer over projected endpoint representations.
pub struct RelationScorer {
    m_h: Var,
    m_h_b: Var,
    m_d: Var,
    m_d_b: Var,
    c_r: Vec<Var>,
    bias: Var,
}

impl RelationScorer {
    pub fn new(b: &Bindings, n_relations: usize) -> Self {
        let c_r = (0..n_relations)
            .map(|rid| b.var(&format!("rel.c.{rid:03}")))
            .collect();
        RelationScorer {
            m_h: b.var("rel.m_h"),
            m_h_b: b.var("rel.m_h_b"),
            m_d: b.var("rel.m_d"),
            m_d_b: b.var("rel.m_d_b"),
            c_r,
            bias: b.var("rel.bias"),
        }
    }

    pub fn head_proj(&self, tape: &mut Tape, state: Var, emb: Var) -> Result<Var> {
        let x = tape.concat(&[state, emb])?;
        let p = tape.matvec(self.m_h, x)?;
        tape.add(p, self.m_h_b)
    }

    pub fn dep_proj(&self, tape: &mut Tape, state: Var, emb: Var) -> Result<Var> {
        let x = tape.concat(&[state, emb])?;
        let p = tape.matvec(self.m_d, x)?;
        tape.add(p, self.m_d_b)
    }

    /// Log distribution over relations (NULL included).
    pub fn log_probs(&self, tape: &mut Tape, head: Var, dep: Var) -> Result<Var> {
        let mut scores = Vec::with_capacity(self.c_r.len());
        for &c in &self.c_r {
            let cd = tape.matvec(c, dep)?;
            scores.push(tape.dot(head, cd)?);
        }
        let stacked = tape.concat(&scores)?;
        let stacked = tape.add(stacked, self.bias)?;
        tape.log_softmax(stacked)
    }
}

/// Label-plus-category concept embedding for the relation/root models.
pub fn orig_concept_embedding(
    tape: &mut Tape,
    b: &Bindings,
    prefix: &str,
    label_id: usize,
    category_id: usize,
) -> Result<Var> {
    let label = b.var(&format!("{prefix}.embed_label"));
    let cat = b.var(&format!("{prefix}.embed_cat"));
    let l = tape.row(label, label_id)?;
    let c = tape.row(cat, category_id)?;
    tape.add(l, c)
}

/// Root logits over the given per-concept (state, embedding) pairs.
pub fn root_logits(
    tape: &mut Tape,
    b: &Bindings,
    states: &[Var],
    embs: &[Var],
) -> Result<Var> {
    let m = b.var("root.m");
    let m_b = b.var("root.m_b");
    let v = b.var("root.v");
    let mut logits = Vec::with_capacity(states.len());
    for (&s, &e) in states.iter().zip(embs) {
        let x = tape.concat(&[s, e])?;
        let p = tape.matvec(m, x)?;
        let p = tape.add(p, m_b)?;
        logits.push(tape.dot(v, p)?);
    }
    tape.concat(&logits)
}

/// Expected state under a relaxed alignment row: `sum_k a_row[k] h_k`.
pub fn expected_state(tape: &mut Tape, a_row: Var, h_matrix: Var) -> Result<Var> {
    tape.vecmat(a_row, h_matrix)
}

/// One-hot flag vector as a tape constant.
pub fn one_hot(tape: &mut Tape, n: usize, hot: usize) -> Var {
    let mut data = vec![0.0; n];
    data[hot] = 1.0;
    tape.constant(Tensor::vector(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};
    use crate::model::ModelConfig;
    use crate::preprocess::recat::RuleSet;
    use crate::preprocess::vocab::{build_vocabulary, prepare_instance};

    fn setup(config: ModelConfig) -> (Vocabulary, ModelParameters, Vec<PreparedInstance>, RuleSet) {
        let cfg = GeneratorConfig {
            train: 80,
            dev: 5,
            test: 5,
            ..Default::default()
        };
        let (train, _, _) = generate_corpus(&cfg).unwrap();
        let rules = RuleSet::default();
        let vocab = build_vocabulary(&train, &rules, 5).unwrap();
        let params = ModelParameters::init(&config, &vocab, 11).unwrap();
        let insts: Vec<PreparedInstance> = train
            .iter()
            .take(6)
            .map(|r| prepare_instance(r, &vocab, &rules).unwrap())
            .collect();
        (vocab, params, insts, rules)
    }

    #[test]
    fn encoder_shapes_match_config() {
        // Paper dimensions: |h_k| = 512 and |g_i| = 200.
        let (_vocab, params, insts, _) = setup(ModelConfig::paper());
        let inst = &insts[0];
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = DropoutCtx::off();
        let embs = embed_tokens(&mut tape, &b, inst, &mut drop).unwrap();
        assert_eq!(tape.val(embs[0]).numel(), 548);
        let h = encode_plain(&mut tape, &b, &params, "concept_enc", &embs).unwrap();
        assert_eq!(tape.val(h[0]).numel(), 512);
        let g = encode_concepts(&mut tape, &b, &params, inst, &mut drop).unwrap();
        assert_eq!(tape.val(g[0]).numel(), 200);
    }

    #[test]
    fn flags_change_states() {
        let (_vocab, params, insts, _) = setup(ModelConfig::tiny());
        let inst = &insts[0];
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = DropoutCtx::off();
        let embs = embed_tokens(&mut tape, &b, inst, &mut drop).unwrap();
        let zeros = tape.constant(Tensor::zeros(&[inst.size]));
        let h0 = encode_flagged(&mut tape, &b, &params, "rel_enc", &embs, zeros).unwrap();
        let hot = one_hot(&mut tape, inst.size, 0);
        let h1 = encode_flagged(&mut tape, &b, &params, "rel_enc", &embs, hot).unwrap();
        assert_ne!(tape.val(h0[1]).data(), tape.val(h1[1]).data());

        let short = tape.constant(Tensor::zeros(&[inst.size + 1]));
        assert!(encode_flagged(&mut tape, &b, &params, "rel_enc", &embs, short).is_err());
    }

    #[test]
    fn category_and_within_distributions_normalize() {
        let (vocab, params, insts, _) = setup(ModelConfig::tiny());
        let inst = &insts[0];
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = DropoutCtx::off();
        let embs = embed_tokens(&mut tape, &b, inst, &mut drop).unwrap();
        let h = encode_plain(&mut tape, &b, &params, "concept_enc", &embs).unwrap();
        let mut scorer = ConceptScorer::new(&mut tape, &b, &h).unwrap();

        // Category distribution sums to one.
        let total: f64 = tape
            .val(scorer.category_log_probs(0))
            .data()
            .iter()
            .map(|x| x.exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "category mass {total}");

        // Within-category distribution over frame candidates sums to one,
        // including copy mass when the copy candidate is a frame.
        let k = 0;
        let mut mass = 0.0;
        let mut counted_copy = false;
        let frame_id = vocab.categories.get("frame").unwrap();
        let copy_is_frame = inst.copy_labels[k]
            .as_deref()
            .and_then(|c| vocab.recat_category(c))
            == Some("frame");
        let mut seen = std::collections::BTreeSet::new();
        for label in vocab.frequent_of("frame") {
            seen.insert(label.clone());
            let item = RecatConceptItem {
                label: label.clone(),
                category: "frame".into(),
                label_id: vocab.recat_labels.get_or_unk(label),
                category_id: frame_id,
                is_null: false,
            };
            let lp = scorer
                .logprob(&mut tape, &b, &params, &vocab, &inst.copy_labels, &h, k, &item)
                .unwrap()
                .unwrap();
            // strip the category factor to isolate the within-category term
            let cat = tape.val(scorer.category_log_probs(k)).data()[frame_id];
            mass += (tape.val(lp).item() - cat).exp();
        }
        if copy_is_frame {
            let copy_label = inst.copy_labels[k].clone().unwrap();
            if !seen.contains(&copy_label) {
                let item = RecatConceptItem {
                    label: copy_label.clone(),
                    category: "frame".into(),
                    label_id: vocab.recat_labels.get_or_unk(&copy_label),
                    category_id: frame_id,
                    is_null: false,
                };
                let lp = scorer
                    .logprob(&mut tape, &b, &params, &vocab, &inst.copy_labels, &h, k, &item)
                    .unwrap()
                    .unwrap();
                let cat = tape.val(scorer.category_log_probs(k)).data()[frame_id];
                mass += (tape.val(lp).item() - cat).exp();
                counted_copy = true;
            }
        }
        let _ = counted_copy;
        assert!((mass - 1.0).abs() < 1e-10, "within-category mass {mass}");
    }

    #[test]
    fn out_of_candidate_target_errors_with_candidates() {
        let (vocab, params, insts, _) = setup(ModelConfig::tiny());
        let inst = &insts[0];
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = DropoutCtx::off();
        let embs = embed_tokens(&mut tape, &b, inst, &mut drop).unwrap();
        let h = encode_plain(&mut tape, &b, &params, "concept_enc", &embs).unwrap();
        let mut scorer = ConceptScorer::new(&mut tape, &b, &h).unwrap();
        let bogus = RecatConceptItem {
            label: "zzqx-unseen".into(),
            category: "frame".into(),
            label_id: 0,
            category_id: vocab.categories.get("frame").unwrap(),
            is_null: false,
        };
        let err = scorer
            .logprob_checked(&mut tape, &b, &params, &vocab, &inst.copy_labels, &h, 0, &bogus)
            .unwrap_err();
        assert!(err.to_string().contains("candidates"), "{err}");
    }

    #[test]
    fn relation_distribution_normalizes_and_is_asymmetric() {
        let (vocab, params, insts, _) = setup(ModelConfig::tiny());
        let inst = insts.iter().find(|i| i.original.len() >= 2).unwrap();
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = DropoutCtx::off();
        let embs = embed_tokens(&mut tape, &b, inst, &mut drop).unwrap();
        let zeros = tape.constant(Tensor::zeros(&[inst.size]));
        let h = encode_flagged(&mut tape, &b, &params, "rel_enc", &embs, zeros).unwrap();
        let scorer = RelationScorer::new(&b, vocab.relations.len());
        let e0 = orig_concept_embedding(
            &mut tape,
            &b,
            "rel",
            inst.original[0].label_id,
            inst.original[0].category_id,
        )
        .unwrap();
        let e1 = orig_concept_embedding(
            &mut tape,
            &b,
            "rel",
            inst.original[1].label_id,
            inst.original[1].category_id,
        )
        .unwrap();
        let h0 = scorer.head_proj(&mut tape, h[0], e0).unwrap();
        let d1 = scorer.dep_proj(&mut tape, h[1], e1).unwrap();
        let fwd = scorer.log_probs(&mut tape, h0, d1).unwrap();
        let total: f64 = tape.val(fwd).data().iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);

        // Swapping endpoints changes the distribution (M_h != M_d).
        let h1 = scorer.head_proj(&mut tape, h[1], e1).unwrap();
        let d0 = scorer.dep_proj(&mut tape, h[0], e0).unwrap();
        let bwd = scorer.log_probs(&mut tape, h1, d0).unwrap();
        assert_ne!(tape.val(fwd).data(), tape.val(bwd).data());
    }

    #[test]
    fn alignment_scores_are_bilinear() {
        let (_vocab, params, insts, _) = setup(ModelConfig::tiny());
        let inst = &insts[0];
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = DropoutCtx::off();
        let embs = embed_tokens(&mut tape, &b, inst, &mut drop).unwrap();
        let h = encode_plain(&mut tape, &b, &params, "align_enc", &embs).unwrap();
        let g = encode_concepts(&mut tape, &b, &params, inst, &mut drop).unwrap();
        let phi = alignment_scores(&mut tape, &b, &g, &h).unwrap();
        assert_eq!(tape.val(phi).shape(), &[inst.size, inst.size]);

        // Scaling B by 2 scales Phi by 2.
        let mut doubled = params.clone();
        for x in doubled.store.get_mut("align.B").unwrap().data_mut() {
            *x *= 2.0;
        }
        let mut tape2 = Tape::new();
        let b2 = doubled.store.bind(&mut tape2);
        let embs2 = embed_tokens(&mut tape2, &b2, inst, &mut DropoutCtx::off()).unwrap();
        let h2 = encode_plain(&mut tape2, &b2, &doubled, "align_enc", &embs2).unwrap();
        let g2 = encode_concepts(&mut tape2, &b2, &doubled, inst, &mut DropoutCtx::off()).unwrap();
        let phi2 = alignment_scores(&mut tape2, &b2, &g2, &h2).unwrap();
        for (a, c) in tape.val(phi).data().iter().zip(tape2.val(phi2).data()) {
            assert!((2.0 * a - c).abs() < 1e-9);
        }

        // Mismatched sides are rejected.
        assert!(alignment_scores(&mut tape, &b, &g[..g.len() - 1], &h).is_err());
    }

    #[test]
    fn root_logits_are_permutation_equivariant() {
        let (_vocab, params, insts, _) = setup(ModelConfig::tiny());
        let inst = insts.iter().find(|i| i.original.len() >= 3).unwrap();
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = DropoutCtx::off();
        let embs = embed_tokens(&mut tape, &b, inst, &mut drop).unwrap();
        let zeros = tape.constant(Tensor::zeros(&[inst.size]));
        let h = encode_flagged(&mut tape, &b, &params, "root_enc", &embs, zeros).unwrap();
        let states: Vec<Var> = (0..3).map(|i| h[i]).collect();
        let embs_c: Vec<Var> = (0..3)
            .map(|i| {
                orig_concept_embedding(
                    &mut tape,
                    &b,
                    "root",
                    inst.original[i].label_id,
                    inst.original[i].category_id,
                )
                .unwrap()
            })
            .collect();
        let logits = root_logits(&mut tape, &b, &states, &embs_c).unwrap();
        let perm_states = vec![states[2], states[0], states[1]];
        let perm_embs = vec![embs_c[2], embs_c[0], embs_c[1]];
        let permuted = root_logits(&mut tape, &b, &perm_states, &perm_embs).unwrap();
        let base = tape.val(logits).data().to_vec();
        let perm = tape.val(permuted).data().to_vec();
        assert_eq!(vec![base[2], base[0], base[1]], perm);

        // m = 1: softmax over a single concept is certain.
        let solo = root_logits(&mut tape, &b, &states[..1], &embs_c[..1]).unwrap();
        let ls = tape.log_softmax(solo).unwrap();
        assert!((tape.val(ls).data()[0]).abs() < 1e-12);
    }
}
