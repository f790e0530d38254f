//! Acceptance suite: one test per criterion, run serially (shared lock) so
//! the per-criterion runtime budgets are measured on a single core. Each
//! test prints one pass/fail line.

use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amparse::corpus::{generate_corpus, GeneratorConfig};
use amparse::decode::{repair_graph, RepairInput};
use amparse::eval::{smatch, smatch_exhaustive};
use amparse::graph::iso::is_isomorphic;
use amparse::graph::penman;
use amparse::graph::random::random_graph;
use amparse::model::ModelConfig;
use amparse::preprocess::recat::{assign_categories, recategorize, RuleSet};
use amparse::preprocess::vocab::build_vocabulary;
use amparse::sinkhorn::{
    col_sums, gumbel_kl_entry, gumbel_kl_monte_carlo, gumbel_sinkhorn, perturb_and_max, row_sums,
    sample_gumbel, SinkhornConfig,
};
use amparse::tensor::logsumexp_slice;
use amparse::tensor::Tensor;
use amparse::training::oracle::{
    build_discrete_tables, discrete_elbo, enumerate_permutations, exact_posterior,
    marginal_from_tables,
};
use amparse::training::run::run_training;
use amparse::training::{StageMode, TrainConfig};
use amparse::verify::{grad_check_suite, tiny_fixture};

fn lock() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: &str, pass: bool, detail: &str, elapsed: std::time::Duration) {
    println!(
        "criterion {criterion} [{}]: {detail} ({elapsed:.2?})",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn random_square(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Tensor {
    let data: Vec<f64> = (0..n * n)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
        .collect();
    Tensor::from_vec(vec![n, n], data).unwrap()
}

#[test]
fn c01_sinkhorn_convergence() {
    let _guard = lock();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = SinkhornConfig {
        temperature: 1.0,
        iterations: 200,
        ..Default::default()
    };
    let mut worst_row = 0.0f64;
    let mut worst_col = 0.0f64;
    for trial in 0..1000u64 {
        let n = 2 + (trial as usize % 19);
        let phi = random_square(&mut rng, n, 5.0);
        let noise = sample_gumbel(n, 9000 + trial);
        let out = gumbel_sinkhorn(&phi, &noise, &cfg).unwrap();
        for r in row_sums(&out.a_hat) {
            worst_row = worst_row.max((r - 1.0).abs());
        }
        for c in col_sums(&out.a_hat) {
            worst_col = worst_col.max((c - 1.0).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_row < 1e-12 && worst_col < 1e-6 && elapsed.as_secs_f64() < 10.0;
    report(
        "1 (sinkhorn convergence)",
        pass,
        &format!("worst row error {worst_row:.2e} (limit 1e-12), worst column error {worst_col:.2e} (limit 1e-6), 1000 matrices n in 2..=20"),
        elapsed,
    );
    assert!(pass, "row {worst_row:.2e}, col {worst_col:.2e}, elapsed {elapsed:?}");
}

#[test]
fn c02_low_temperature_consistency() {
    let _guard = lock();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = SinkhornConfig {
        temperature: 0.01,
        iterations: 200,
        ..Default::default()
    };
    let trials = 1000u64;
    let mut agree = 0u64;
    for trial in 0..trials {
        let n = 2 + (trial as usize % 6);
        let phi = random_square(&mut rng, n, 5.0);
        let noise = sample_gumbel(n, 20_000 + trial);
        let relaxed = gumbel_sinkhorn(&phi, &noise, &cfg).unwrap();
        let hard = perturb_and_max(&phi, &noise.sigma).unwrap();
        if relaxed.row_argmax() == hard {
            agree += 1;
        }
    }
    let elapsed = start.elapsed();
    let rate = agree as f64 / trials as f64;
    let pass = agree * 100 >= trials * 99 && elapsed.as_secs_f64() < 30.0;
    report(
        "2 (low-temperature consistency)",
        pass,
        &format!(
            "agreement {agree}/{trials} ({:.1}%, needs >= 99%); known spec-parameter defect: at t=0.01 roughly 2% of instances need more than l=200 Sinkhorn iterations to settle (all agree at l=2000; 99.7% agree at t=0.05); see the decisions ledger",
            rate * 100.0
        ),
        elapsed,
    );
    assert!(
        pass,
        "agreement {agree}/{trials}; unattainable as stated (l=200 at t=0.01) - defect analysis in the decisions ledger"
    );
}

#[test]
fn c03_gumbel_kl_oracle() {
    let _guard = lock();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut seed = 303u64;
    for &t in &[0.5, 1.0, 2.0] {
        for &t0 in &[1.0, 5.0] {
            for &phi in &[-2.0, 0.0, 2.0] {
                let exact = gumbel_kl_entry(phi, t, t0);
                let (mc, se) = gumbel_kl_monte_carlo(phi, t, t0, 1_000_000, seed);
                seed += 1;
                worst = worst.max((exact - mc).abs() / se);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 3.0 && elapsed.as_secs_f64() < 60.0;
    report(
        "3 (gumbel KL oracle)",
        pass,
        &format!("worst closed-form vs Monte-Carlo deviation {worst:.2} standard errors over the 18-point grid (limit 3)"),
        elapsed,
    );
    assert!(pass, "worst deviation {worst:.2} sigma, elapsed {elapsed:?}");
}

#[test]
fn c04_gradient_fidelity() {
    let _guard = lock();
    let start = Instant::now();
    let suite = grad_check_suite(404, 20, 4).unwrap();
    let elapsed = start.elapsed();
    let pass = suite.passed && elapsed.as_secs_f64() < 120.0;
    let last = suite.lines.last().cloned().unwrap_or_default();
    report("4 (gradient fidelity)", pass, &last, elapsed);
    assert!(pass, "{last}, elapsed {elapsed:?}");
}

#[test]
fn c05_variational_bound() {
    let _guard = lock();
    let start = Instant::now();
    let fixture = tiny_fixture(505, 10, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_gap = 0.0f64;
    let mut worst_violation = 0.0f64;
    for model in 0..50 {
        let inst = &fixture.instances[model % fixture.instances.len()];
        let params =
            amparse::model::ModelParameters::init(&ModelConfig::tiny(), &fixture.vocab, 600 + model as u64)
                .unwrap();
        let tables = build_discrete_tables(&params, &fixture.vocab, inst).unwrap();
        let marginal = marginal_from_tables(&tables);
        let perms = enumerate_permutations(tables.n);
        let q_star = exact_posterior(&tables, &perms);
        let tight = discrete_elbo(&tables, &perms, &q_star);
        worst_gap = worst_gap.max((tight - marginal).abs());
        for _ in 0..3 {
            let mut q: Vec<f64> = (0..perms.len()).map(|_| rng.random::<f64>() + 1e-3).collect();
            let z: f64 = q.iter().sum();
            for v in &mut q {
                *v /= z;
            }
            let elbo = discrete_elbo(&tables, &perms, &q);
            worst_violation = worst_violation.max(elbo - marginal);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_gap < 1e-9 && worst_violation <= 1e-12 && elapsed.as_secs_f64() < 60.0;
    report(
        "5 (variational bound)",
        pass,
        &format!("posterior-ELBO gap {worst_gap:.2e} (limit 1e-9), worst Jensen violation {worst_violation:.2e} (limit 1e-12), 50 random tiny models"),
        elapsed,
    );
    assert!(pass, "gap {worst_gap:.2e}, violation {worst_violation:.2e}, elapsed {elapsed:?}");
}

#[test]
fn c06_graph_repair_soundness() {
    let _guard = lock();
    let start = Instant::now();
    let relations: Vec<String> = ["NULL", "ARG0", "ARG1", "ARG2", "mod", "quant", "name", "op1", "op2", "polarity"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut violations = 0usize;
    for trial in 0..10_000usize {
        let n = 2 + (trial % 7);
        let mut constant = vec![false; n];
        let mut constrained = vec![false; n];
        for v in 1..n {
            if rng.random_bool(0.25) {
                constant[v] = true;
                constrained[v] = rng.random_bool(0.8);
            }
        }
        let mut scores = BTreeMap::new();
        for i in 0..n {
            if constant[i] {
                continue;
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut probs: Vec<f64> =
                    (0..relations.len()).map(|_| rng.random::<f64>().ln()).collect();
                let lse = logsumexp_slice(&probs);
                for p in &mut probs {
                    *p -= lse;
                }
                scores.insert((i, j), probs);
            }
        }
        let edges = repair_graph(&RepairInput {
            n,
            constant: constant.clone(),
            degree_constrained: constrained.clone(),
            fixed_edges: &[],
            scores: &scores,
            relations: &relations,
        })
        .unwrap();
        // (1) degree constraint
        for v in 0..n {
            if constrained[v] && edges.keys().filter(|&&(i, j)| i == v || j == v).count() > 1 {
                violations += 1;
            }
        }
        // (2) one argument per (head, relation)
        let mut seen = std::collections::BTreeSet::new();
        for (&(i, _), r) in &edges {
            if !seen.insert((i, r.clone())) {
                violations += 1;
            }
        }
        // (3) connectivity by traversal
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in edges.keys() {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed.as_secs_f64() < 30.0;
    report(
        "6 (graph repair soundness)",
        pass,
        &format!("{violations} constraint violations over 10000 random score tables (2-8 concepts)"),
        elapsed,
    );
    assert!(pass, "{violations} violations, elapsed {elapsed:?}");
}

#[test]
fn c07_smatch_oracle_equivalence() {
    let _guard = lock();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut mismatches = 0usize;
    let mut identical_ok = true;
    for trial in 0..500u64 {
        let a = random_graph(&mut rng, 6);
        let b = if trial % 4 == 0 { a.clone() } else { random_graph(&mut rng, 6) };
        let hc = smatch(&a, &b, 4, 7000 + trial).unwrap();
        let ex = smatch_exhaustive(&a, &b).unwrap();
        if (hc.f1 - ex.f1).abs() > 1e-12 {
            mismatches += 1;
        }
        if trial % 4 == 0 && hc.f1 != 1.0 {
            identical_ok = false;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && identical_ok && elapsed.as_secs_f64() < 120.0;
    report(
        "7 (smatch oracle equivalence)",
        pass,
        &format!("{mismatches} mismatches vs exhaustive mapping over 500 pairs (<= 6 variables); identical pairs score 1.0: {identical_ok}"),
        elapsed,
    );
    assert!(pass, "{mismatches} mismatches, identical_ok={identical_ok}, elapsed {elapsed:?}");
}

#[test]
fn c08_preprocessing_round_trips() {
    let _guard = lock();
    let start = Instant::now();
    let (train, dev, _) = generate_corpus(&GeneratorConfig::default()).unwrap();
    let rules = RuleSet::default();
    let mut total = 0usize;
    let mut ok = 0usize;
    for record in train.iter().chain(&dev) {
        total += 1;
        let parsed = penman::parse(&record.graph_text).unwrap();
        // PENMAN round trip.
        let text = penman::serialize(&parsed).unwrap();
        let reparsed = penman::parse(&text).unwrap();
        let penman_ok = is_isomorphic(&parsed, &reparsed, 16).unwrap_or(false);
        // recategorize/unpack round trip.
        let graph = assign_categories(&parsed);
        let recat = recategorize(&graph, &rules).unwrap();
        let unpacked = recat.unpack();
        let recat_ok = is_isomorphic(&graph, &unpacked, 16).unwrap_or(false);
        if penman_ok && recat_ok {
            ok += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = ok == total && total == 600;
    report(
        "8 (preprocessing round trips)",
        pass,
        &format!("{ok}/{total} graphs round-trip through PENMAN and recategorize/unpack"),
        elapsed,
    );
    assert!(pass, "{ok}/{total} round trips, elapsed {elapsed:?}");
}

#[test]
fn c09_end_to_end_learning() {
    let _guard = lock();
    let start = Instant::now();
    let (train, dev, _) = generate_corpus(&GeneratorConfig::default()).unwrap();
    let rules = RuleSet::default();
    let vocab = build_vocabulary(&train, &rules, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        seed: 1,
        ..TrainConfig::desk()
    };
    let (params, report_log) =
        run_training(&train, &dev, &vocab, &rules, &ModelConfig::desk(), &cfg).unwrap();
    let best = report_log.epochs.iter().find(|e| e.best).unwrap();
    // The obligation pattern: the trained model must pick obligate (not boy)
    // as the root.
    let tables = amparse::decode::LookupTables::from_vocab(&vocab);
    let tokens: Vec<String> = ["the", "boy", "must", "not", "go"].iter().map(|s| s.to_string()).collect();
    let input = amparse::decode::prepare_sentence(&tokens, &vocab).unwrap();
    let decoded = amparse::decode::decode_instance(&params, &vocab, &tables, &input).unwrap();
    let root_label = decoded.graph.concepts[decoded.graph.root].label.clone();
    let elapsed = start.elapsed();
    // Thresholds calibrated once over seeds {1,2,3} (medians 0.979 / 0.933 /
    // 0.970) and frozen at median minus two points; all sit above the stated
    // initial targets of 0.95 / 0.90 / 0.85.
    let pass = best.dev_concept_f1 >= 0.959
        && best.dev_align_acc >= 0.913
        && best.dev_smatch >= 0.950
        && root_label == "obligate"
        && elapsed.as_secs_f64() < 900.0;
    report(
        "9 (end-to-end learning)",
        pass,
        &format!(
            "dev concept F1 {:.4} (>= 0.959), alignment accuracy {:.4} (>= 0.913), Smatch {:.4} (>= 0.950), best epoch {}, root of the obligation pattern: {root_label}",
            best.dev_concept_f1, best.dev_align_acc, best.dev_smatch, best.epoch
        ),
        elapsed,
    );
    assert!(
        pass,
        "f1 {:.4}, align {:.4}, smatch {:.4}, root {root_label}, elapsed {elapsed:?}",
        best.dev_concept_f1, best.dev_align_acc, best.dev_smatch
    );
}

#[test]
fn c10_ablation_directions() {
    let _guard = lock();
    let start = Instant::now();
    let (train, dev, _) = generate_corpus(&GeneratorConfig::default()).unwrap();
    let rules = RuleSet::default();
    let vocab = build_vocabulary(&train, &rules, 5).unwrap();
    let modes = [
        StageMode::Joint,
        StageMode::TwoStageTuneAlign,
        StageMode::TwoStage,
        StageMode::FactorizedAlignAblation,
        StageMode::HardHierarchicalLossAblation,
    ];
    let mut medians = BTreeMap::new();
    for mode in modes {
        let mut scores = Vec::new();
        for seed in [1u64, 2, 3] {
            let cfg = TrainConfig {
                epochs: 14,
                seed,
                ..TrainConfig::desk()
            }
            .with_mode(mode);
            let (_p, rep) =
                run_training(&train, &dev, &vocab, &rules, &ModelConfig::desk(), &cfg).unwrap();
            let best = rep.epochs.iter().find(|e| e.best).unwrap().dev_smatch;
            scores.push(best);
        }
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.insert(mode.as_str(), scores[1]);
        println!("  {}: seeds {:?} median {:.4}", mode.as_str(), scores, scores[1]);
    }
    let joint = medians["joint"];
    let tune = medians["two_stage_tune_align"];
    let two = medians["two_stage"];
    let fact = medians["factorized_align_ablation"];
    let hard = medians["hard_hierarchical_loss_ablation"];
    let elapsed = start.elapsed();
    let pass = joint >= tune && tune >= two && joint >= fact && joint >= hard;
    report(
        "10 (ablation directions)",
        pass,
        &format!("median dev Smatch: joint {joint:.4} >= tune-align {tune:.4} >= two-stage {two:.4}; joint >= factorized {fact:.4}; joint >= hard-loss {hard:.4}"),
        elapsed,
    );
    assert!(
        pass,
        "joint {joint:.4}, tune {tune:.4}, two {two:.4}, factorized {fact:.4}, hard {hard:.4}"
    );
}
