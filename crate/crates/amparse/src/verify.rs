//! Verification suites behind `grad-check` and `oracle-check`: gradient
//! fidelity of the full relaxed objective against central differences, and
//! the analytic oracles (Sinkhorn convergence, perturb-and-max, Gumbel-KL
//! Monte Carlo, the variational bound by enumeration).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{generate_corpus, CorpusRecord, GeneratorConfig};
use crate::error::Result;
use crate::model::forward::DropoutCtx;
use crate::model::{ModelConfig, ModelParameters};
use crate::preprocess::lexicon;
use crate::preprocess::recat::RuleSet;
use crate::preprocess::vocab::{build_vocabulary, prepare_instance, PreparedInstance, Vocabulary};
use crate::sinkhorn::{
    brute_force_assignment, col_sums, gumbel_kl_entry, gumbel_kl_monte_carlo, gumbel_sinkhorn,
    perturb_and_max, row_sums, sample_gumbel, NoiseMatrix, SinkhornConfig,
};
use crate::tensor::checkpoint::{GradMap, ParamStore};
use crate::tensor::grad_check::grad_check;
use crate::tensor::tape::Tape;
use crate::tensor::Tensor;
use crate::training::oracle::{
    build_discrete_tables, discrete_elbo, enumerate_permutations, exact_posterior,
    marginal_from_tables,
};
use crate::training::{instance_objective, LossSet, TrainConfig};

pub struct VerifyReport {
    pub passed: bool,
    pub lines: Vec<String>,
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        write!(f, "overall: {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// A fixture shared by the verification suites: vocabulary from the default
/// synthetic corpus plus hand-rolled tiny records (padded size <= 4).
pub struct TinyFixture {
    pub vocab: Vocabulary,
    pub rules: RuleSet,
    pub instances: Vec<PreparedInstance>,
}

pub fn tiny_fixture(seed: u64, count: usize, max_size: usize) -> Result<TinyFixture> {
    let gen = GeneratorConfig::default();
    let (train, _, _) = generate_corpus(&gen)?;
    let rules = RuleSet::default();
    let vocab = build_vocabulary(&train, &rules, 5)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let intransitive = ["go", "run", "swim", "sing", "speak"];
    let nouns = ["boy", "girl", "dog", "cat", "man", "woman", "bird", "child"];
    let mut id = 0u64;
    while records.len() < count * 3 {
        match rng.random_range(0..3) {
            0 => {
                // `the N V-s`: two concepts over three words.
                let n = nouns[rng.random_range(0..nouns.len())];
                let v = intransitive[rng.random_range(0..intransitive.len())];
                let sense = if v == "go" || v == "run" { "-02" } else { "-01" };
                let third = if v == "go" { "goes".to_string() } else { format!("{v}s") };
                records.push(CorpusRecord {
                    id,
                    tokens: vec!["the".into(), n.into(), third],
                    graph_text: format!("(g / {v}{sense} :ARG0 (s / {n}))"),
                    alignment: None,
                });
            }
            1 => {
                // `NAME V-s CITY`: entity chains on both sides.
                let p = lexicon::PERSON_NAMES[rng.random_range(0..lexicon::PERSON_NAMES.len())];
                let c = ["Paris", "Rome", "Oslo", "London"][rng.random_range(0..4)];
                records.push(CorpusRecord {
                    id,
                    tokens: vec![p.into(), "visits".into(), c.into()],
                    graph_text: format!(
                        r#"(v / visit-01 :ARG0 (p / person :wiki - :name (n / name :op1 "{p}")) :ARG1 (ci / city :wiki "{c}" :name (n2 / name :op1 "{c}")))"#
                    ),
                    alignment: None,
                });
            }
            _ => {
                // `the N1 sees the N2` squeezed to four words by dropping a
                // determiner: `N1 sees the N2`.
                let a = nouns[rng.random_range(0..nouns.len())];
                let mut b = nouns[rng.random_range(0..nouns.len())];
                while b == a {
                    b = nouns[rng.random_range(0..nouns.len())];
                }
                records.push(CorpusRecord {
                    id,
                    tokens: vec![a.into(), "sees".into(), "the".into(), b.into()],
                    graph_text: format!("(v / see-01 :ARG0 (s / {a}) :ARG1 (o / {b}))"),
                    alignment: None,
                });
            }
        }
        id += 1;
    }

    let mut instances = Vec::new();
    for record in &records {
        let inst = prepare_instance(record, &vocab, &rules)?;
        if inst.size <= max_size {
            instances.push(inst);
        }
        if instances.len() == count {
            break;
        }
    }
    Ok(TinyFixture {
        vocab,
        rules,
        instances,
    })
}

/// Value of the full relaxed objective for fixed noise (dropout off).
pub fn objective_value(
    store: &ParamStore,
    reference: &ModelParameters,
    vocab: &Vocabulary,
    inst: &PreparedInstance,
    cfg: &TrainConfig,
    noise: &NoiseMatrix,
) -> Result<f64> {
    let params = ModelParameters {
        config: reference.config,
        store: store.clone(),
        frequent_rows: reference.frequent_rows.clone(),
    };
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let mut drop = DropoutCtx::off();
    let (loss, _) =
        instance_objective(&mut tape, &b, &params, vocab, inst, cfg, LossSet::All, noise, &mut drop)?;
    Ok(tape.val(loss).item())
}

/// Analytic gradients of the full relaxed objective for fixed noise.
pub fn objective_grads(
    params: &ModelParameters,
    vocab: &Vocabulary,
    inst: &PreparedInstance,
    cfg: &TrainConfig,
    noise: &NoiseMatrix,
) -> Result<GradMap> {
    let mut tape = Tape::new();
    let b = params.store.bind(&mut tape);
    let mut drop = DropoutCtx::off();
    let (loss, _) =
        instance_objective(&mut tape, &b, params, vocab, inst, cfg, LossSet::All, noise, &mut drop)?;
    let grads = tape.backward(loss)?;
    Ok(b.grads(&params.store, &grads))
}

/// Gradient fidelity of the full relaxed objective on tiny instances.
/// Passing means max relative error < 1e-4 at eps = 1e-5.
pub fn grad_check_suite(seed: u64, count: usize, max_size: usize) -> Result<VerifyReport> {
    let fixture = tiny_fixture(seed, count, max_size)?;
    let mut cfg = TrainConfig::desk();
    cfg.seed = seed;
    let mut lines = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, inst) in fixture.instances.iter().enumerate() {
        let params = ModelParameters::init(&ModelConfig::tiny(), &fixture.vocab, seed + i as u64)?;
        let noise = sample_gumbel(inst.size, seed.wrapping_mul(97).wrapping_add(i as u64));
        let analytic = objective_grads(&params, &fixture.vocab, inst, &cfg, &noise)?;
        let err = grad_check(
            &params.store,
            &analytic,
            |store| objective_value(store, &params, &fixture.vocab, inst, &cfg, &noise),
            1e-5,
            1e-4,
            400,
            seed + 1000 + i as u64,
        )?;
        worst = worst.max(err);
        lines.push(format!(
            "instance {i} (n={}): max relative gradient error {err:.3e}",
            inst.size
        ));
    }
    let passed = worst < 1e-4;
    lines.push(format!("worst over {} instances: {worst:.3e} (limit 1e-4)", fixture.instances.len()));
    Ok(VerifyReport { passed, lines })
}

/// Analytic oracles: Sinkhorn normalization, perturb-and-max vs brute force,
/// Gumbel KL vs Monte Carlo, and the enumeration bound on tiny models.
pub fn oracle_check_suite(seed: u64) -> Result<VerifyReport> {
    let mut lines = Vec::new();
    let mut passed = true;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Sinkhorn row/column sums.
    let mut worst_row: f64 = 0.0;
    let mut worst_col: f64 = 0.0;
    for trial in 0..50 {
        let n = 2 + (trial % 9);
        let data: Vec<f64> = (0..n * n).map(|_| (rng.random::<f64>() - 0.5) * 10.0).collect();
        let phi = Tensor::from_vec(vec![n, n], data)?;
        let noise = sample_gumbel(n, seed + 100 + trial as u64);
        let cfg = SinkhornConfig {
            iterations: 200,
            ..Default::default()
        };
        let out = gumbel_sinkhorn(&phi, &noise, &cfg)?;
        for r in row_sums(&out.a_hat) {
            worst_row = worst_row.max((r - 1.0).abs());
        }
        for c in col_sums(&out.a_hat) {
            worst_col = worst_col.max((c - 1.0).abs());
        }
    }
    let ok = worst_row < 1e-12 && worst_col < 1e-6;
    passed &= ok;
    lines.push(format!(
        "sinkhorn normalization: worst row error {worst_row:.2e} (limit 1e-12), worst column error {worst_col:.2e} (limit 1e-6): {}",
        if ok { "ok" } else { "FAIL" }
    ));

    // Assignment solver vs exhaustive search.
    let mut solver_ok = true;
    for trial in 0..100 {
        let n = 2 + (trial % 6);
        let data: Vec<f64> = (0..n * n).map(|_| (rng.random::<f64>() - 0.5) * 8.0).collect();
        let phi = Tensor::from_vec(vec![n, n], data)?;
        let noise = sample_gumbel(n, seed + 300 + trial as u64);
        let fast = perturb_and_max(&phi, &noise.sigma)?;
        let mut scores = phi.clone();
        for (s, g) in scores.data_mut().iter_mut().zip(noise.sigma.data()) {
            *s += g;
        }
        let brute = brute_force_assignment(&scores);
        let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &k)| scores.at2(i, k)).sum() };
        if (total(&fast) - total(&brute)).abs() > 1e-9 {
            solver_ok = false;
        }
    }
    passed &= solver_ok;
    lines.push(format!(
        "perturb-and-max vs exhaustive assignment: {}",
        if solver_ok { "ok" } else { "FAIL" }
    ));

    // Gumbel KL closed form vs Monte Carlo on the 18-point grid.
    let mut kl_ok = true;
    let mut worst_sigma = 0.0f64;
    for (gi, &t) in [0.5, 1.0, 2.0].iter().enumerate() {
        for (gj, &t0) in [1.0, 5.0].iter().enumerate() {
            for (gk, &phi) in [-2.0, 0.0, 2.0].iter().enumerate() {
                let exact = gumbel_kl_entry(phi, t, t0);
                let (mc, se) = gumbel_kl_monte_carlo(
                    phi,
                    t,
                    t0,
                    200_000,
                    seed + (gi * 100 + gj * 10 + gk) as u64,
                );
                let sigmas = (exact - mc).abs() / se;
                worst_sigma = worst_sigma.max(sigmas);
                if sigmas > 3.0 {
                    kl_ok = false;
                }
            }
        }
    }
    passed &= kl_ok;
    lines.push(format!(
        "gumbel KL closed form vs Monte Carlo (18 grid points): worst deviation {worst_sigma:.2} standard errors (limit 3): {}",
        if kl_ok { "ok" } else { "FAIL" }
    ));

    // Variational bound on tiny models.
    let fixture = tiny_fixture(seed + 1, 4, 4)?;
    let mut bound_ok = true;
    for (i, inst) in fixture.instances.iter().enumerate() {
        let params = ModelParameters::init(&ModelConfig::tiny(), &fixture.vocab, seed + 7 + i as u64)?;
        let tables = build_discrete_tables(&params, &fixture.vocab, inst)?;
        let marginal = marginal_from_tables(&tables);
        let perms = enumerate_permutations(tables.n);
        let q_star = exact_posterior(&tables, &perms);
        let tight = discrete_elbo(&tables, &perms, &q_star);
        if (tight - marginal).abs() > 1e-9 {
            bound_ok = false;
        }
        for r in 0..5 {
            let mut q: Vec<f64> = (0..perms.len())
                .map(|_| rng.random::<f64>() + 1e-3)
                .collect();
            let z: f64 = q.iter().sum();
            for v in &mut q {
                *v /= z;
            }
            if discrete_elbo(&tables, &perms, &q) > marginal + 1e-12 {
                bound_ok = false;
            }
            let _ = r;
        }
    }
    passed &= bound_ok;
    lines.push(format!(
        "variational bound (posterior tightness and Jensen direction): {}",
        if bound_ok { "ok" } else { "FAIL" }
    ));

    Ok(VerifyReport { passed, lines })
}
