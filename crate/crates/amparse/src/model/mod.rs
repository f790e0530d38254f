//! The neural sub-models: embedding tables, the five BiLSTM encoders,
//! concept identification with copy, the bi-affine relation scorer, the
//! bilinear alignment scorer and the root classifier.

pub mod forward;
pub mod lstm;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::vocab::Vocabulary;
use crate::tensor::checkpoint::ParamStore;
use crate::tensor::Tensor;

use lstm::BiLstmSpec;

/// Embedding and encoder dimensions. `paper()` mirrors the published
/// configuration; `desk()` is the small profile the synthetic corpus trains
/// with; `tiny()` drives gradient checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub lemma_dim: usize,
    pub pos_dim: usize,
    pub ner_dim: usize,
    pub category_dim: usize,
    /// Per-direction hidden size of the sentence encoders.
    pub sentence_hidden: usize,
    /// Per-direction hidden size of the concept-sequence encoder.
    pub concept_hidden: usize,
    /// Label embedding size for the concept-sequence encoder.
    pub concept_label_dim: usize,
    /// d_f: projection size of the bi-affine relation scorer.
    pub rel_proj_dim: usize,
    /// Concept embedding size in the relation/root models.
    pub rel_concept_dim: usize,
    /// Projection size of the root scorer.
    pub root_proj_dim: usize,
    pub concept_layers: usize,
    pub relation_layers: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn paper() -> Self {
        ModelConfig {
            word_dim: 300,
            lemma_dim: 200,
            pos_dim: 32,
            ner_dim: 16,
            category_dim: 32,
            sentence_hidden: 256,
            concept_hidden: 100,
            concept_label_dim: 200,
            rel_proj_dim: 200,
            rel_concept_dim: 200,
            root_proj_dim: 200,
            concept_layers: 1,
            relation_layers: 2,
            dropout: 0.2,
        }
    }

    pub fn desk() -> Self {
        ModelConfig {
            word_dim: 32,
            lemma_dim: 24,
            pos_dim: 8,
            ner_dim: 8,
            category_dim: 8,
            sentence_hidden: 48,
            concept_hidden: 24,
            concept_label_dim: 24,
            rel_proj_dim: 32,
            rel_concept_dim: 32,
            root_proj_dim: 32,
            concept_layers: 1,
            relation_layers: 2,
            dropout: 0.2,
        }
    }

    pub fn tiny() -> Self {
        ModelConfig {
            word_dim: 5,
            lemma_dim: 4,
            pos_dim: 3,
            ner_dim: 3,
            category_dim: 3,
            sentence_hidden: 4,
            concept_hidden: 3,
            concept_label_dim: 4,
            rel_proj_dim: 4,
            rel_concept_dim: 4,
            root_proj_dim: 4,
            concept_layers: 1,
            relation_layers: 2,
            dropout: 0.0,
        }
    }

    /// Sentence state size (both directions).
    pub fn d(&self) -> usize {
        2 * self.sentence_hidden
    }

    /// Concept state size (both directions).
    pub fn d_g(&self) -> usize {
        2 * self.concept_hidden
    }

    pub fn token_input(&self) -> usize {
        self.word_dim + self.lemma_dim + self.pos_dim + self.ner_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.word_dim,
            self.lemma_dim,
            self.pos_dim,
            self.ner_dim,
            self.category_dim,
            self.sentence_hidden,
            self.concept_hidden,
            self.concept_label_dim,
            self.rel_proj_dim,
            self.rel_concept_dim,
            self.root_proj_dim,
            self.concept_layers,
            self.relation_layers,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("all model extents must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "word_embeddings = {}\nlemma_embeddings = {}\npos_embeddings = {}\nner_embeddings = {}\n\
             category_embeddings = {}\nsentence_hidden = {}\nconcept_hidden = {}\n\
             concept_label_embeddings = {}\nrelation_vector = {}\nrelation_concept_embeddings = {}\n\
             root_vector = {}\nconcept_layers = {}\nrelation_layers = {}\ndropout = {}\n",
            self.word_dim,
            self.lemma_dim,
            self.pos_dim,
            self.ner_dim,
            self.category_dim,
            self.sentence_hidden,
            self.concept_hidden,
            self.concept_label_dim,
            self.rel_proj_dim,
            self.rel_concept_dim,
            self.root_proj_dim,
            self.concept_layers,
            self.relation_layers,
            self.dropout
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::paper();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got `{line}`", i + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_usize = || -> Result<usize> {
                value
                    .parse()
                    .map_err(|e| Error::Config(format!("line {}: bad value for {key}: {e}", i + 1)))
            };
            match key {
                "word_embeddings" => cfg.word_dim = parse_usize()?,
                "lemma_embeddings" => cfg.lemma_dim = parse_usize()?,
                "pos_embeddings" => cfg.pos_dim = parse_usize()?,
                "ner_embeddings" => cfg.ner_dim = parse_usize()?,
                "category_embeddings" => cfg.category_dim = parse_usize()?,
                "sentence_hidden" => cfg.sentence_hidden = parse_usize()?,
                "concept_hidden" => cfg.concept_hidden = parse_usize()?,
                "concept_label_embeddings" => cfg.concept_label_dim = parse_usize()?,
                "relation_vector" => cfg.rel_proj_dim = parse_usize()?,
                "relation_concept_embeddings" => cfg.rel_concept_dim = parse_usize()?,
                "root_vector" => cfg.root_proj_dim = parse_usize()?,
                "concept_layers" => cfg.concept_layers = parse_usize()?,
                "relation_layers" => cfg.relation_layers = parse_usize()?,
                "dropout" => {
                    cfg.dropout = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad dropout: {e}")))?
                }
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameter-group prefixes, the unit of freezing in staged training.
pub mod groups {
    pub const EMBED: &str = "embed.";
    pub const CONCEPT: &str = "concept";
    pub const ALIGN: &str = "align";
    pub const AMR: &str = "amr_";
    pub const RELATION: &str = "rel";
    pub const ROOT: &str = "root";

    /// Stage-1 groups of two-stage training (alignment + concept models and
    /// the shared embeddings).
    pub fn stage1(name: &str) -> bool {
        name.starts_with(EMBED)
            || name.starts_with(CONCEPT)
            || name.starts_with(ALIGN)
            || name.starts_with(AMR)
    }

    /// Alignment-model parameters only.
    pub fn align_model(name: &str) -> bool {
        name.starts_with(ALIGN) || name.starts_with(AMR)
    }
}

/// All trainable state plus the metadata required to interpret it.
#[derive(Clone)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// recat concept label -> row of `concept.v`.
    pub frequent_rows: BTreeMap<String, usize>,
}

impl ModelParameters {
    pub fn init(config: &ModelConfig, vocab: &Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();

        let emb = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| -> Tensor {
            uniform(rng, &[rows, cols], 1.0 / (cols as f64).sqrt())
        };
        store.insert("embed.word", emb(&mut rng, vocab.words.len(), config.word_dim));
        store.insert("embed.lemma", emb(&mut rng, vocab.lemmas.len(), config.lemma_dim));
        store.insert("embed.pos", emb(&mut rng, vocab.pos.len(), config.pos_dim));
        store.insert("embed.ner", emb(&mut rng, vocab.ner.len(), config.ner_dim));

        let sent_in = config.token_input();
        let sent_spec = BiLstmSpec {
            input: sent_in,
            hidden: config.sentence_hidden,
            layers: config.concept_layers,
        };
        lstm::init_bilstm(&mut store, "concept_enc", &sent_spec, &mut rng);
        lstm::init_bilstm(&mut store, "align_enc", &sent_spec, &mut rng);

        let flagged_spec = BiLstmSpec {
            input: sent_in + 1,
            hidden: config.sentence_hidden,
            layers: config.relation_layers,
        };
        lstm::init_bilstm(&mut store, "rel_enc", &flagged_spec, &mut rng);
        lstm::init_bilstm(&mut store, "root_enc", &flagged_spec, &mut rng);

        store.insert(
            "amr_embed.label",
            emb(&mut rng, vocab.recat_labels.len(), config.concept_label_dim),
        );
        store.insert(
            "amr_embed.category",
            emb(&mut rng, vocab.categories.len(), config.category_dim),
        );
        let amr_spec = BiLstmSpec {
            input: config.concept_label_dim + config.category_dim,
            hidden: config.concept_hidden,
            layers: config.concept_layers,
        };
        lstm::init_bilstm(&mut store, "amr_enc", &amr_spec, &mut rng);

        let d = config.d();
        store.insert(
            "align.B",
            uniform(&mut rng, &[config.d_g(), d], 1.0 / (d as f64).sqrt()),
        );

        // Concept identification: category classifier, copy vector, and a
        // softmax vector per frequent concept.
        store.insert(
            "concept.cat_w",
            uniform(&mut rng, &[vocab.categories.len(), d], 1.0 / (d as f64).sqrt()),
        );
        store.insert("concept.cat_b", Tensor::zeros(&[vocab.categories.len()]));
        store.insert("concept.v_copy", uniform(&mut rng, &[d], 1.0 / (d as f64).sqrt()));
        let mut frequent_rows = BTreeMap::new();
        for labels in vocab.frequent_by_category.values() {
            for label in labels {
                let row = frequent_rows.len();
                frequent_rows.insert(label.clone(), row);
            }
        }
        let n_frequent = frequent_rows.len().max(1);
        store.insert(
            "concept.v",
            uniform(&mut rng, &[n_frequent, d], 1.0 / (d as f64).sqrt()),
        );

        // Relation model.
        store.insert(
            "rel.embed_label",
            emb(&mut rng, vocab.orig_labels.len(), config.rel_concept_dim),
        );
        store.insert(
            "rel.embed_cat",
            emb(&mut rng, vocab.categories.len(), config.rel_concept_dim),
        );
        let rel_in = d + config.rel_concept_dim;
        store.insert(
            "rel.m_h",
            uniform(&mut rng, &[config.rel_proj_dim, rel_in], 1.0 / (rel_in as f64).sqrt()),
        );
        store.insert("rel.m_h_b", Tensor::zeros(&[config.rel_proj_dim]));
        store.insert(
            "rel.m_d",
            uniform(&mut rng, &[config.rel_proj_dim, rel_in], 1.0 / (rel_in as f64).sqrt()),
        );
        store.insert("rel.m_d_b", Tensor::zeros(&[config.rel_proj_dim]));
        let df = config.rel_proj_dim;
        for rid in 0..vocab.relations.len() {
            store.insert(
                &format!("rel.c.{rid:03}"),
                uniform(&mut rng, &[df, df], 1.0 / (df as f64).sqrt()),
            );
        }
        store.insert("rel.bias", Tensor::zeros(&[vocab.relations.len()]));

        // Root classifier.
        store.insert(
            "root.embed_label",
            emb(&mut rng, vocab.orig_labels.len(), config.rel_concept_dim),
        );
        store.insert(
            "root.embed_cat",
            emb(&mut rng, vocab.categories.len(), config.rel_concept_dim),
        );
        store.insert(
            "root.m",
            uniform(&mut rng, &[config.root_proj_dim, rel_in], 1.0 / (rel_in as f64).sqrt()),
        );
        store.insert("root.m_b", Tensor::zeros(&[config.root_proj_dim]));
        store.insert(
            "root.v",
            uniform(&mut rng, &[config.root_proj_dim], 1.0 / (config.root_proj_dim as f64).sqrt()),
        );

        Ok(ModelParameters {
            config: *config,
            store,
            frequent_rows,
        })
    }

    pub fn frequent_row(&self, label: &str) -> Option<usize> {
        self.frequent_rows.get(label).copied()
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
        .collect();
    Tensor::from_vec(shape.to_vec(), data).expect("shape/data agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};
    use crate::preprocess::recat::RuleSet;
    use crate::preprocess::vocab::build_vocabulary;

    #[test]
    fn config_round_trips_and_validates() {
        let cfg = ModelConfig::paper();
        assert_eq!(cfg.d(), 512);
        assert_eq!(cfg.d_g(), 200);
        assert_eq!(cfg.token_input(), 548);
        let re = ModelConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(cfg, re);
        assert!(ModelConfig::from_text("nonsense").is_err());
        assert!(ModelConfig::from_text("word_embeddings = 0").unwrap_err().to_string().contains("positive"));
    }

    #[test]
    fn init_is_seeded_and_complete() {
        let cfg = GeneratorConfig {
            train: 60,
            dev: 5,
            test: 5,
            ..Default::default()
        };
        let (train, _, _) = generate_corpus(&cfg).unwrap();
        let vocab = build_vocabulary(&train, &RuleSet::default(), 5).unwrap();
        let a = ModelParameters::init(&ModelConfig::tiny(), &vocab, 3).unwrap();
        let b = ModelParameters::init(&ModelConfig::tiny(), &vocab, 3).unwrap();
        let c = ModelParameters::init(&ModelConfig::tiny(), &vocab, 4).unwrap();
        assert_eq!(a.store.checksum(""), b.store.checksum(""));
        assert_ne!(a.store.checksum(""), c.store.checksum(""));
        for name in ["embed.word", "align.B", "concept.v_copy", "rel.m_h", "root.v"] {
            assert!(a.store.get(name).is_some(), "missing {name}");
        }
        // group predicates split the space
        for (name, _) in a.store.iter() {
            let s1 = groups::stage1(name);
            let rel = name.starts_with(groups::RELATION) || name.starts_with(groups::ROOT);
            assert!(s1 ^ rel, "{name} must belong to exactly one side");
        }
    }
}
