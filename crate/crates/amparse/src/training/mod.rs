//! Training: the relaxed variational objective (soft concept loss,
//! expectation-fed relation loss, Gumbel KL, overlap regularizer), the Adam
//! optimizer, staged training modes and early stopping.

pub mod oracle;
pub mod run;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::forward::{
    alignment_scores, embed_tokens, encode_concepts, encode_flagged, encode_plain,
    expected_state, orig_concept_embedding, root_logits, ConceptScorer, DropoutCtx,
    RelationScorer,
};
use crate::model::{groups, ModelParameters};
use crate::preprocess::vocab::{PreparedInstance, Vocabulary};
use crate::sinkhorn::{
    gumbel_kl_var, gumbel_sinkhorn_var, overlap_penalty_var, sample_gumbel, NoiseMatrix,
    SinkhornConfig,
};
use crate::tensor::checkpoint::{Bindings, GradMap, ParamStore};
use crate::tensor::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Training regimes: the full joint model, the two-stage pipelines, the
/// fixed-alignment baseline and the relaxation ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageMode {
    Joint,
    TwoStage,
    TwoStageTuneAlign,
    FixedAlignBaseline,
    OnePassAblation,
    FactorizedAlignAblation,
    NoOverlapRegAblation,
    HardHierarchicalLossAblation,
}

impl StageMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "joint" => StageMode::Joint,
            "two_stage" => StageMode::TwoStage,
            "two_stage_tune_align" => StageMode::TwoStageTuneAlign,
            "fixed_align_baseline" => StageMode::FixedAlignBaseline,
            "one_pass_ablation" => StageMode::OnePassAblation,
            "factorized_align_ablation" => StageMode::FactorizedAlignAblation,
            "no_overlap_reg_ablation" => StageMode::NoOverlapRegAblation,
            "hard_hierarchical_loss_ablation" => StageMode::HardHierarchicalLossAblation,
            other => return Err(Error::Config(format!("unknown stage mode `{other}`"))),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StageMode::Joint => "joint",
            StageMode::TwoStage => "two_stage",
            StageMode::TwoStageTuneAlign => "two_stage_tune_align",
            StageMode::FixedAlignBaseline => "fixed_align_baseline",
            StageMode::OnePassAblation => "one_pass_ablation",
            StageMode::FactorizedAlignAblation => "factorized_align_ablation",
            StageMode::NoOverlapRegAblation => "no_overlap_reg_ablation",
            StageMode::HardHierarchicalLossAblation => "hard_hierarchical_loss_ablation",
        }
    }

    pub fn is_two_stage(&self) -> bool {
        matches!(self, StageMode::TwoStage | StageMode::TwoStageTuneAlign)
    }
}

/// Which loss terms a stage trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossSet {
    All,
    ConceptAlign,
    RelationRoot,
}

/// Objective weights and optimizer settings. Defaults follow the published
/// configuration; the desk profile (small model, synthetic corpus) raises
/// the learning rate and shrinks the batch so thirty epochs suffice.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub mode: StageMode,
    pub alpha: f64,
    pub sinkhorn: SinkhornConfig,
    pub concept_weight: f64,
    pub relation_weight: f64,
    pub root_weight: f64,
    pub kl_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub stage1_batch: usize,
    pub stage2_batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: StageMode::Joint,
            alpha: 0.5,
            sinkhorn: SinkhornConfig::default(),
            concept_weight: 1.0,
            relation_weight: 1.0,
            root_weight: 1.0,
            kl_weight: 1.0,
            epochs: 30,
            batch_size: 64,
            stage1_batch: 512,
            stage2_batch: 64,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Profile for the synthetic corpus with the desk model.
    pub fn desk() -> Self {
        TrainConfig {
            lr: 2e-3,
            batch_size: 16,
            stage1_batch: 64,
            stage2_batch: 16,
            kl_weight: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        self.sinkhorn.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: StageMode) -> Self {
        self.mode = mode;
        if mode.is_two_stage() {
            self.sinkhorn.iterations = SinkhornConfig::two_stage().iterations;
        }
        self
    }

    pub fn to_text(&self) -> String {
        format!(
            "mode = {}\nalpha = {}\nsinkhorn_temperature = {}\nsinkhorn_prior_temperature = {}\n\
             sinkhorn_iterations = {}\nlambda = {}\nconcept_weight = {}\nrelation_weight = {}\n\
             root_weight = {}\nkl_weight = {}\nepochs = {}\nbatch_size = {}\nstage1_batch = {}\nstage2_batch = {}\n\
             learning_rate = {}\nadam_beta1 = {}\nadam_beta2 = {}\nadam_eps = {}\nweight_decay = {}\nseed = {}\n",
            self.mode.as_str(),
            self.alpha,
            self.sinkhorn.temperature,
            self.sinkhorn.prior_temperature,
            self.sinkhorn.iterations,
            self.sinkhorn.lambda,
            self.concept_weight,
            self.relation_weight,
            self.root_weight,
            self.kl_weight,
            self.epochs,
            self.batch_size,
            self.stage1_batch,
            self.stage2_batch,
            self.lr,
            self.beta1,
            self.beta2,
            self.adam_eps,
            self.weight_decay,
            self.seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got `{line}`", i + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| Error::Config(format!("line {}: {key}: {e}", i + 1));
            match key {
                "mode" => cfg.mode = StageMode::parse(value)?,
                "alpha" => cfg.alpha = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "sinkhorn_temperature" => cfg.sinkhorn.temperature = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "sinkhorn_prior_temperature" => cfg.sinkhorn.prior_temperature = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "sinkhorn_iterations" => cfg.sinkhorn.iterations = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "lambda" => cfg.sinkhorn.lambda = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "concept_weight" => cfg.concept_weight = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "relation_weight" => cfg.relation_weight = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "root_weight" => cfg.root_weight = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "kl_weight" => cfg.kl_weight = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "epochs" => cfg.epochs = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "stage1_batch" => cfg.stage1_batch = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "stage2_batch" => cfg.stage2_batch = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "learning_rate" => cfg.lr = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "adam_beta1" => cfg.beta1 = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "adam_beta2" => cfg.beta2 = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "adam_eps" => cfg.adam_eps = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "weight_decay" => cfg.weight_decay = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "seed" => cfg.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                other => return Err(Error::Config(format!("unknown training key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Adam with L2-into-gradient weight decay.
pub struct OptimizerState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        OptimizerState {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn apply(
        &mut self,
        store: &mut ParamStore,
        grads: &GradMap,
        cfg: &TrainConfig,
        trainable: impl Fn(&str) -> bool,
    ) {
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - cfg.beta1.powf(t);
        let bias2 = 1.0 - cfg.beta2.powf(t);
        for (name, grad) in grads {
            if !trainable(name) {
                continue;
            }
            let param = store.get_mut(name).expect("grad for unknown parameter");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            for i in 0..grad.numel() {
                let g = grad.data()[i] + cfg.weight_decay * param.data()[i];
                let mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * g;
                let vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bias1;
                let v_hat = vi / bias2;
                param.data_mut()[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new()
    }
}

/// Scalar diagnostics of one instance objective.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossParts {
    pub concept: f64,
    pub relation: f64,
    pub root: f64,
    pub kl: f64,
    pub overlap: f64,
    pub total: f64,
}

/// Builds the full relaxed objective for one instance on the given tape.
/// Returns the scalar loss var plus detached part values.
#[allow(clippy::too_many_arguments)]
pub fn instance_objective(
    tape: &mut Tape,
    b: &Bindings,
    params: &ModelParameters,
    vocab: &Vocabulary,
    inst: &PreparedInstance,
    cfg: &TrainConfig,
    losses: LossSet,
    noise: &NoiseMatrix,
    drop: &mut DropoutCtx,
) -> Result<(Var, LossParts)> {
    let n = inst.size;
    let embs = embed_tokens(tape, b, inst, drop)?;

    // Alignment distribution.
    let (log_a, a_hat, phi) = match cfg.mode {
        StageMode::FixedAlignBaseline => {
            let gold = inst.gold_alignment.as_ref().ok_or_else(|| {
                Error::Model("fixed_align_baseline needs gold alignments".into())
            })?;
            let matrix = completed_one_hot(gold, n);
            let log_matrix: Vec<f64> = matrix
                .data()
                .iter()
                .map(|&x| if x > 0.0 { 0.0 } else { f64::NEG_INFINITY })
                .collect();
            let a_hat = tape.constant(matrix.clone());
            let log_a = tape.constant(Tensor::from_vec(vec![n, n], log_matrix)?);
            (log_a, a_hat, None)
        }
        StageMode::FactorizedAlignAblation => {
            let h_a = encode_plain(tape, b, params, "align_enc", &embs)?;
            let g = encode_concepts(tape, b, params, inst, drop)?;
            let phi = alignment_scores(tape, b, &g, &h_a)?;
            let noise_var = tape.constant(noise.sigma.clone());
            let perturbed = tape.add(phi, noise_var)?;
            let scaled = tape.mul_scalar(perturbed, 1.0 / cfg.sinkhorn.temperature);
            // Row-wise Gumbel softmax: no injectivity constraint.
            let row_lse = tape.logsumexp(scaled, 1)?;
            let log_a = tape.sub_rowvec(scaled, row_lse)?;
            let a_hat = tape.exp(log_a);
            (log_a, a_hat, Some(phi))
        }
        _ => {
            let h_a = encode_plain(tape, b, params, "align_enc", &embs)?;
            let g = encode_concepts(tape, b, params, inst, drop)?;
            let phi = alignment_scores(tape, b, &g, &h_a)?;
            let (log_a, a_hat) = gumbel_sinkhorn_var(tape, phi, &noise.sigma, &cfg.sinkhorn)?;
            (log_a, a_hat, Some(phi))
        }
    };

    let mut terms: Vec<Var> = Vec::new();
    let mut parts = LossParts::default();

    let alpha = match cfg.mode {
        StageMode::HardHierarchicalLossAblation => 1.0,
        _ => cfg.alpha,
    };

    if losses != LossSet::RelationRoot {
        let h_c = encode_plain(tape, b, params, "concept_enc", &embs)?;
        let mut scorer = ConceptScorer::new(tape, b, &h_c)?;
        let mut concept_terms: Vec<Var> = Vec::new();
        for i in 0..n {
            let row = tape.row(log_a, i)?;
            let mut word_terms: Vec<Var> = Vec::new();
            for k in 0..n {
                if tape.val(row).data()[k] == f64::NEG_INFINITY {
                    continue;
                }
                if let Some(lp) =
                    scorer.logprob(tape, b, params, vocab, &inst.copy_labels, &h_c, k, &inst.concepts[i])?
                {
                    let la = tape.slice(row, k, 1)?;
                    let s = tape.add(la, lp)?;
                    word_terms.push(tape.mul_scalar(s, alpha));
                }
            }
            if word_terms.is_empty() {
                return Err(Error::Model(format!(
                    "concept `{}` (position {i}) has zero probability at every word",
                    inst.concepts[i].label
                )));
            }
            let stacked = tape.concat(&word_terms)?;
            let lse = tape.logsumexp(stacked, 0)?;
            concept_terms.push(lse);
        }
        let concept_sum = tape.add_n(&concept_terms)?;
        let concept_loss = tape.mul_scalar(concept_sum, -cfg.concept_weight);
        parts.concept = tape.val(concept_loss).item();
        terms.push(concept_loss);
    }

    if losses != LossSet::ConceptAlign {
        // Relation loss with per-predicate re-encoding; the predicate flag
        // vector is the predicate's relaxed alignment row.
        let scorer = RelationScorer::new(b, vocab.relations.len());
        let one_pass = cfg.mode == StageMode::OnePassAblation;
        let mut pass_states: BTreeMap<Option<usize>, Var> = BTreeMap::new();
        let mut ensure_pass = |tape: &mut Tape, group: Option<usize>| -> Result<Var> {
            if let Some(&h) = pass_states.get(&group) {
                return Ok(h);
            }
            let flags = match group {
                None => tape.constant(Tensor::zeros(&[n])),
                Some(g) => tape.row(a_hat, g)?,
            };
            let states = encode_flagged(tape, b, params, "rel_enc", &embs, flags)?;
            let matrix = tape.stack_rows(&states)?;
            pass_states.insert(group, matrix);
            Ok(matrix)
        };

        let mut rel_terms: Vec<Var> = Vec::new();
        let orig_embs: Vec<Var> = inst
            .original
            .iter()
            .map(|o| orig_concept_embedding(tape, b, "rel", o.label_id, o.category_id))
            .collect::<Result<Vec<_>>>()?;
        for (i, head) in inst.original.iter().enumerate() {
            if head.is_constant {
                continue;
            }
            let pass_key = if one_pass { None } else { Some(head.group) };
            let h_matrix = ensure_pass(tape, pass_key)?;
            let head_row = tape.row(a_hat, head.group)?;
            let head_state = expected_state(tape, head_row, h_matrix)?;
            let head_proj = scorer.head_proj(tape, head_state, orig_embs[i])?;
            for (j, dep) in inst.original.iter().enumerate() {
                if i == j {
                    continue;
                }
                let dep_row = tape.row(a_hat, dep.group)?;
                let dep_state = expected_state(tape, dep_row, h_matrix)?;
                let dep_proj = scorer.dep_proj(tape, dep_state, orig_embs[j])?;
                let log_probs = scorer.log_probs(tape, head_proj, dep_proj)?;
                let target = inst
                    .gold_edges
                    .get(&(i, j))
                    .copied()
                    .unwrap_or(vocab.null_relation_id());
                let lp = tape.slice(log_probs, target, 1)?;
                rel_terms.push(lp);
            }
        }
        if !rel_terms.is_empty() {
            let rel_sum = tape.add_n(&rel_terms)?;
            let rel_loss = tape.mul_scalar(rel_sum, -cfg.relation_weight);
            parts.relation = tape.val(rel_loss).item();
            terms.push(rel_loss);
        }

        // Root classifier on expected root-encoder states.
        let zero_flags = tape.constant(Tensor::zeros(&[n]));
        let root_states = encode_flagged(tape, b, params, "root_enc", &embs, zero_flags)?;
        let root_matrix = tape.stack_rows(&root_states)?;
        let mut states = Vec::with_capacity(inst.original.len());
        let mut root_embs = Vec::with_capacity(inst.original.len());
        for o in &inst.original {
            let row = tape.row(a_hat, o.group)?;
            states.push(expected_state(tape, row, root_matrix)?);
            root_embs.push(orig_concept_embedding(tape, b, "root", o.label_id, o.category_id)?);
        }
        let logits = root_logits(tape, b, &states, &root_embs)?;
        let log_probs = tape.log_softmax(logits)?;
        let gold = tape.slice(log_probs, inst.gold_root, 1)?;
        let root_loss = tape.mul_scalar(gold, -cfg.root_weight);
        parts.root = tape.val(root_loss).item();
        terms.push(root_loss);
    }

    // KL and overlap regularizers apply whenever the alignment model is in
    // the picture.
    if let Some(phi) = phi {
        let train_align = losses != LossSet::RelationRoot || cfg.mode == StageMode::TwoStageTuneAlign;
        if train_align {
            let kl = gumbel_kl_var(
                tape,
                phi,
                cfg.sinkhorn.temperature,
                cfg.sinkhorn.prior_temperature,
            )?;
            let kl = tape.mul_scalar(kl, cfg.kl_weight);
            parts.kl = tape.val(kl).item();
            terms.push(kl);
            let want_overlap = !matches!(
                cfg.mode,
                StageMode::NoOverlapRegAblation | StageMode::FactorizedAlignAblation
            );
            if want_overlap {
                let om = overlap_penalty_var(tape, a_hat, cfg.sinkhorn.lambda)?;
                parts.overlap = tape.val(om).item();
                terms.push(om);
            }
        }
    }

    let total = tape.add_n(&terms)?;
    parts.total = tape.val(total).item();
    if !parts.total.is_finite() {
        let phi_extrema = phi.map(|p| {
            let v = tape.val(p);
            let lo = v.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        });
        let av = tape.val(a_hat);
        let a_lo = av.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let a_hi = av.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::Diverged(format!(
            "non-finite objective {parts:?}; phi extrema {phi_extrema:?}, a_hat extrema ({a_lo}, {a_hi})"
        )));
    }
    Ok((total, parts))
}

/// One-hot matrix from a (possibly partial) gold alignment; unaligned
/// concepts take the leftover words in index order.
pub fn completed_one_hot(gold: &[Option<usize>], n: usize) -> Tensor {
    let mut used = vec![false; n];
    for w in gold.iter().flatten() {
        used[*w] = true;
    }
    let mut leftovers: Vec<usize> = (0..n).filter(|&w| !used[w]).collect();
    leftovers.reverse();
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let w = match gold.get(i).copied().flatten() {
            Some(w) => w,
            None => leftovers.pop().expect("padding covers leftover words"),
        };
        m.set2(i, w, 1.0);
    }
    m
}

/// Trainability predicate for a mode/stage pair.
pub fn trainable_filter(mode: StageMode, stage: u8) -> impl Fn(&str) -> bool {
    move |name: &str| match (mode, stage) {
        (StageMode::TwoStage, 1) | (StageMode::TwoStageTuneAlign, 1) => groups::stage1(name),
        (StageMode::TwoStage, 2) => !groups::stage1(name),
        (StageMode::TwoStageTuneAlign, 2) => !groups::stage1(name) || groups::align_model(name),
        _ => true,
    }
}

/// Metrics of one optimization step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepMetrics {
    pub parts: LossParts,
}

/// Runs one batch: per-instance forward/backward with one noise sample each,
/// gradient averaging in instance order, then an Adam update.
#[allow(clippy::too_many_arguments)]
pub fn training_step(
    batch: &[&PreparedInstance],
    params: &mut ModelParameters,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    losses: LossSet,
    stage: u8,
    opt: &mut OptimizerState,
    step_seed: u64,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Ok(StepMetrics::default());
    }
    let filter = trainable_filter(cfg.mode, stage);
    let mut acc: GradMap = GradMap::new();
    let mut parts_sum = LossParts::default();
    for (idx, inst) in batch.iter().enumerate() {
        let noise_seed = step_seed
            .wrapping_mul(0x100000001B3)
            .wrapping_add(inst.id)
            .wrapping_add(idx as u64);
        let noise = sample_gumbel(inst.size, noise_seed);
        let mut drop = DropoutCtx::new(params.config.dropout, noise_seed ^ 0xD05E);
        let mut tape = Tape::new();
        let b = params.store.bind_with(&mut tape, &filter);
        let (loss, parts) =
            instance_objective(&mut tape, &b, params, vocab, inst, cfg, losses, &noise, &mut drop)?;
        let grads = tape.backward(loss)?;
        let gmap = b.grads(&params.store, &grads);
        let scale = 1.0 / batch.len() as f64;
        for (name, g) in gmap {
            if !filter(&name) {
                continue;
            }
            let entry = acc.entry(name).or_insert_with(|| Tensor::zeros(g.shape()));
            for (a, &x) in entry.data_mut().iter_mut().zip(g.data()) {
                *a += scale * x;
            }
        }
        parts_sum.concept += parts.concept;
        parts_sum.relation += parts.relation;
        parts_sum.root += parts.root;
        parts_sum.kl += parts.kl;
        parts_sum.overlap += parts.overlap;
        parts_sum.total += parts.total;
    }
    let inv = 1.0 / batch.len() as f64;
    parts_sum.concept *= inv;
    parts_sum.relation *= inv;
    parts_sum.root *= inv;
    parts_sum.kl *= inv;
    parts_sum.overlap *= inv;
    parts_sum.total *= inv;

    opt.apply(&mut params.store, &acc, cfg, &filter);
    Ok(StepMetrics { parts: parts_sum })
}

/// Per-epoch record of the training trajectory.
#[derive(Clone, Debug)]
pub struct EpochReport {
    pub stage: u8,
    pub epoch: usize,
    pub objective: f64,
    pub kl: f64,
    pub overlap: f64,
    pub dev_concept_f1: f64,
    pub dev_align_acc: f64,
    pub dev_smatch: f64,
    pub best: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
}

impl TrainReport {
    pub fn best_smatch(&self) -> f64 {
        self.epochs
            .iter()
            .filter(|e| e.best)
            .map(|e| e.dev_smatch)
            .next_back()
            .unwrap_or(0.0)
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&format!(
                "stage={} epoch={} objective={:.4} kl={:.4} overlap={:.4} dev_concept_f1={:.4} dev_align_acc={:.4} dev_smatch={:.4} best={}\n",
                e.stage, e.epoch, e.objective, e.kl, e.overlap, e.dev_concept_f1, e.dev_align_acc, e.dev_smatch, e.best
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let best = self.epochs.iter().find(|e| e.best);
        match best {
            Some(e) => format!(
                "best epoch: stage {} epoch {} (dev smatch {:.4}, concept F1 {:.4}, alignment acc {:.4})",
                e.stage, e.epoch, e.dev_smatch, e.dev_concept_f1, e.dev_align_acc
            ),
            None => "no epochs".into(),
        }
    }
}

/// Shuffles indices deterministically per (seed, stage, epoch).
pub fn epoch_order(n: usize, seed: u64, stage: u8, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(31)
            .wrapping_add(stage as u64)
            .wrapping_mul(1_000_003)
            .wrapping_add(epoch as u64),
    );
    idx.shuffle(&mut rng);
    idx
}


#[cfg(test)]
mod relaxation_consistency {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};
    use crate::model::{ModelConfig, ModelParameters};
    use crate::preprocess::recat::RuleSet;
    use crate::preprocess::vocab::{build_vocabulary, prepare_instance};
    use crate::training::oracle::build_discrete_tables;

    /// At a one-hot alignment the relaxed relation loss equals the sum of
    /// discrete gold-edge log-probabilities from the enumeration tables.
    #[test]
    fn relation_loss_matches_discrete_tables_at_one_hot() {
        let gen = GeneratorConfig {
            train: 80,
            dev: 5,
            test: 5,
            ..Default::default()
        };
        let (train, _, _) = generate_corpus(&gen).unwrap();
        let rules = RuleSet::default();
        let vocab = build_vocabulary(&train, &rules, 5).unwrap();
        let params = ModelParameters::init(&ModelConfig::tiny(), &vocab, 4).unwrap();
        let inst = train
            .iter()
            .filter_map(|r| prepare_instance(r, &vocab, &rules).ok())
            .find(|i| i.size <= 5 && i.gold_alignment.is_some() && i.original.len() >= 2)
            .expect("small aligned instance");

        let cfg = TrainConfig {
            kl_weight: 0.0,
            mode: StageMode::FixedAlignBaseline,
            ..TrainConfig::desk()
        };
        let noise = crate::sinkhorn::sample_gumbel(inst.size, 3);
        let mut tape = Tape::new();
        let b = params.store.bind(&mut tape);
        let mut drop = crate::model::forward::DropoutCtx::off();
        let (_, parts) = instance_objective(
            &mut tape,
            &b,
            &params,
            &vocab,
            &inst,
            &cfg,
            LossSet::All,
            &noise,
            &mut drop,
        )
        .unwrap();

        let gold = inst.gold_alignment.as_ref().unwrap();
        let matrix = completed_one_hot(gold, inst.size);
        let word_of = |group: usize| -> usize {
            (0..inst.size).find(|&k| matrix.at2(group, k) == 1.0).unwrap()
        };
        let tables = build_discrete_tables(&params, &vocab, &inst).unwrap();
        let mut direct = 0.0;
        for (&(i, j), table) in &tables.rel_lp {
            direct -= table[word_of(inst.original[i].group)][word_of(inst.original[j].group)];
        }
        assert!(
            (parts.relation - direct).abs() < 1e-9,
            "relaxed {} vs discrete {}",
            parts.relation,
            direct
        );
    }
}

#[cfg(test)]
mod mode_smoke {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};
    use crate::model::{ModelConfig, ModelParameters};
    use crate::preprocess::recat::RuleSet;
    use crate::preprocess::vocab::{build_vocabulary, prepare_instance};

    /// Every stage mode must run a full training step and produce a finite
    /// objective.
    #[test]
    fn every_mode_takes_a_training_step() {
        let gen = GeneratorConfig {
            train: 40,
            dev: 5,
            test: 5,
            ..Default::default()
        };
        let (train, _, _) = generate_corpus(&gen).unwrap();
        let rules = RuleSet::default();
        let vocab = build_vocabulary(&train, &rules, 5).unwrap();
        let insts: Vec<_> = train
            .iter()
            .take(3)
            .map(|r| prepare_instance(r, &vocab, &rules).unwrap())
            .collect();
        let batch: Vec<&PreparedInstance> = insts.iter().collect();
        for mode in [
            StageMode::Joint,
            StageMode::TwoStage,
            StageMode::TwoStageTuneAlign,
            StageMode::FixedAlignBaseline,
            StageMode::OnePassAblation,
            StageMode::FactorizedAlignAblation,
            StageMode::NoOverlapRegAblation,
            StageMode::HardHierarchicalLossAblation,
        ] {
            let mut params = ModelParameters::init(&ModelConfig::tiny(), &vocab, 8).unwrap();
            let cfg = TrainConfig::desk().with_mode(mode);
            let mut opt = OptimizerState::new();
            let m = training_step(&batch, &mut params, &vocab, &cfg, LossSet::All, 0, &mut opt, 5)
                .unwrap_or_else(|e| panic!("{mode:?}: {e}"));
            assert!(m.parts.total.is_finite(), "{mode:?} objective not finite");
            // The overlap term must vanish in the modes that exclude it.
            if matches!(
                mode,
                StageMode::FactorizedAlignAblation | StageMode::NoOverlapRegAblation
            ) {
                assert_eq!(m.parts.overlap, 0.0, "{mode:?} should not carry overlap");
            }
        }
    }
}
