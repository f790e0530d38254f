//! The training driver: staged epochs over the corpus, per-epoch dev
//! evaluation (concept F1, alignment accuracy, Smatch) and early stopping on
//! dev Smatch.

use super::{
    epoch_order, training_step, EpochReport, LossSet, OptimizerState, TrainConfig,
    TrainReport,
};
use crate::corpus::CorpusRecord;
use crate::decode::{decode_instance, prepare_sentence, LookupTables};
use crate::error::{Error, Result};
use crate::eval::{alignment_accuracy, smatch_counts};
use crate::graph::penman;
use crate::model::forward::{
    alignment_scores, embed_tokens, encode_concepts, encode_plain, DropoutCtx,
};
use crate::model::{ModelConfig, ModelParameters};
use crate::preprocess::recat::RuleSet;
use crate::preprocess::vocab::{prepare_instance, PreparedInstance, Vocabulary};
use crate::sinkhorn::{gumbel_sinkhorn_var, NoiseMatrix, SinkhornConfig};
use crate::tensor::tape::Tape;
use crate::tensor::Tensor;

/// Dev-set metrics for one parameter snapshot.
#[derive(Clone, Copy, Debug, Default)]
pub struct DevMetrics {
    pub smatch: f64,
    pub concept_f1: f64,
    pub align_acc: f64,
}

/// Noise-free relaxed alignment for evaluation: Sinkhorn on the score matrix
/// with zero noise.
pub fn eval_alignment(
    params: &ModelParameters,
    inst: &PreparedInstance,
    sinkhorn: &SinkhornConfig,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let b = params.store.bind_with(&mut tape, |_| false);
    let mut drop = DropoutCtx::off();
    let embs = embed_tokens(&mut tape, &b, inst, &mut drop)?;
    let h_a = encode_plain(&mut tape, &b, params, "align_enc", &embs)?;
    let g = encode_concepts(&mut tape, &b, params, inst, &mut drop)?;
    let phi = alignment_scores(&mut tape, &b, &g, &h_a)?;
    let noise = NoiseMatrix {
        sigma: Tensor::zeros(&[inst.size, inst.size]),
        seed: 0,
    };
    let (_, a_hat) = gumbel_sinkhorn_var(&mut tape, phi, &noise.sigma, sinkhorn)?;
    let _ = noise;
    Ok(tape.val(a_hat).clone())
}

/// Decodes and scores a dev split: micro-averaged Smatch and concept F1 over
/// triple counts, mean alignment accuracy over instances with gold
/// alignments.
pub fn evaluate_dev(
    params: &ModelParameters,
    vocab: &Vocabulary,
    rules: &RuleSet,
    records: &[CorpusRecord],
    sinkhorn: &SinkhornConfig,
    seed: u64,
) -> Result<DevMetrics> {
    let tables = LookupTables::from_vocab(vocab);
    let mut matched = 0usize;
    let mut pred_total = 0usize;
    let mut gold_total = 0usize;
    let mut concept_hits = 0usize;
    let mut concept_pred = 0usize;
    let mut concept_gold = 0usize;
    let mut align_sum = 0.0;
    let mut align_n = 0usize;

    for (i, record) in records.iter().enumerate() {
        let input = prepare_sentence(&record.tokens, vocab)?;
        let decoded = decode_instance(params, vocab, &tables, &input)?;
        let gold = penman::parse(&record.graph_text)?;
        let (m, p, g) = smatch_counts(&decoded.graph, &gold, 4, seed.wrapping_add(i as u64))?;
        matched += m;
        pred_total += p;
        gold_total += g;

        let count = |g: &crate::graph::AmrGraph| -> std::collections::BTreeMap<String, usize> {
            let mut out = std::collections::BTreeMap::new();
            for c in &g.concepts {
                *out.entry(c.full_label()).or_default() += 1;
            }
            out
        };
        let pc = count(&decoded.graph);
        let gc = count(&gold);
        for (label, &n) in &pc {
            if let Some(&gn) = gc.get(label) {
                concept_hits += n.min(gn);
            }
        }
        concept_pred += decoded.graph.len();
        concept_gold += gold.len();

        if record.alignment.is_some() {
            let inst = prepare_instance(record, vocab, rules)?;
            if let Some(gold_align) = &inst.gold_alignment {
                let a_hat = eval_alignment(params, &inst, sinkhorn)?;
                if let Some(acc) = alignment_accuracy(&a_hat, gold_align, seed.wrapping_add(i as u64))
                {
                    align_sum += acc;
                    align_n += 1;
                }
            }
        }
    }

    let f1 = |m: usize, p: usize, g: usize| -> f64 {
        if p == 0 || g == 0 {
            return 0.0;
        }
        let pr = m as f64 / p as f64;
        let rc = m as f64 / g as f64;
        if pr + rc == 0.0 {
            0.0
        } else {
            2.0 * pr * rc / (pr + rc)
        }
    };
    Ok(DevMetrics {
        smatch: f1(matched, pred_total, gold_total),
        concept_f1: f1(concept_hits, concept_pred, concept_gold),
        align_acc: if align_n == 0 { 0.0 } else { align_sum / align_n as f64 },
    })
}

/// Trains per the configured mode with early stopping on dev Smatch.
/// Returns the best parameters and the per-epoch report.
pub fn run_training(
    train_records: &[CorpusRecord],
    dev_records: &[CorpusRecord],
    vocab: &Vocabulary,
    rules: &RuleSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParameters, TrainReport)> {
    cfg.validate()?;
    if dev_records.is_empty() {
        return Err(Error::Config("development set must not be empty".into()));
    }
    let instances: Vec<PreparedInstance> = train_records
        .iter()
        .map(|r| prepare_instance(r, vocab, rules))
        .collect::<Result<Vec<_>>>()?;
    if instances.is_empty() {
        return Err(Error::Config("training set must not be empty".into()));
    }

    let mut params = ModelParameters::init(model_cfg, vocab, cfg.seed)?;
    let mut report = TrainReport::default();
    let mut best_params = params.clone();
    let mut best_smatch = f64::NEG_INFINITY;
    let mut best_at: Option<usize> = None;
    let mut global_step: u64 = 0;

    let stages: Vec<(u8, LossSet, usize)> = if cfg.mode.is_two_stage() {
        // Stage 2 of plain two-stage training drops the concept term: with
        // the concept and alignment models frozen it is a constant. When the
        // alignment model is tuned in stage 2 the concept term still depends
        // on trainable parameters and stays in the objective.
        let stage2 = if cfg.mode == crate::training::StageMode::TwoStageTuneAlign {
            LossSet::All
        } else {
            LossSet::RelationRoot
        };
        vec![
            (1, LossSet::ConceptAlign, cfg.stage1_batch),
            (2, stage2, cfg.stage2_batch),
        ]
    } else {
        vec![(0, LossSet::All, cfg.batch_size)]
    };

    for (stage, losses, batch_size) in stages {
        let mut opt = OptimizerState::new();
        for epoch in 1..=cfg.epochs {
            let order = epoch_order(instances.len(), cfg.seed, stage, epoch);
            let mut objective_sum = 0.0;
            let mut kl_sum = 0.0;
            let mut overlap_sum = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch_size) {
                let batch: Vec<&PreparedInstance> = chunk.iter().map(|&i| &instances[i]).collect();
                global_step += 1;
                let step = training_step(
                    &batch,
                    &mut params,
                    vocab,
                    cfg,
                    losses,
                    stage,
                    &mut opt,
                    cfg.seed.wrapping_mul(0x9E3779B9).wrapping_add(global_step),
                )?;
                objective_sum += step.parts.total;
                kl_sum += step.parts.kl;
                overlap_sum += step.parts.overlap;
                batches += 1;
            }
            let dev = evaluate_dev(&params, vocab, rules, dev_records, &cfg.sinkhorn, cfg.seed)?;
            // Stage-2 metrics can only be compared once relations train, but
            // the epoch with maximal dev Smatch wins overall.
            let is_best = dev.smatch > best_smatch;
            if is_best {
                best_smatch = dev.smatch;
                best_params = params.clone();
                best_at = Some(report.epochs.len());
            }
            report.epochs.push(EpochReport {
                stage,
                epoch,
                objective: objective_sum / batches.max(1) as f64,
                kl: kl_sum / batches.max(1) as f64,
                overlap: overlap_sum / batches.max(1) as f64,
                dev_concept_f1: dev.concept_f1,
                dev_align_acc: dev.align_acc,
                dev_smatch: dev.smatch,
                best: false,
            });
        }
    }
    if let Some(i) = best_at {
        report.epochs[i].best = true;
    }
    Ok((best_params, report))
}

/// Convenience used by tests and the ablation harness: evaluate a finished
/// model on a held-out split.
pub fn evaluate_corpus(
    params: &ModelParameters,
    vocab: &Vocabulary,
    rules: &RuleSet,
    records: &[CorpusRecord],
    seed: u64,
) -> Result<DevMetrics> {
    evaluate_dev(params, vocab, rules, records, &SinkhornConfig::default(), seed)
}

