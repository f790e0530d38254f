//! End-to-end exercises of the command-line surface: corpus generation,
//! a tiny training run, parsing, evaluation and the verification commands.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_amparse"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn amparse");
    assert!(
        out.status.success(),
        "command failed ({:?}): {}\n{}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn gen_corpus(dir: &Path, train: usize, dev: usize, seed: u64) {
    run_ok(bin().args([
        "gen-corpus",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--train",
        &train.to_string(),
        "--dev",
        &dev.to_string(),
        "--test",
        "5",
    ]));
}

#[test]
fn gen_corpus_is_deterministic_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen_corpus(&a, 40, 10, 17);
    gen_corpus(&b, 40, 10, 17);
    for file in ["train.txt", "dev.txt", "test.txt"] {
        let fa = std::fs::read(a.join(file)).unwrap();
        let fb = std::fs::read(b.join(file)).unwrap();
        assert_eq!(fa, fb, "{file} differs between runs");
    }
    let records = amparse::corpus::load_corpus(&a.join("train.txt")).unwrap();
    assert_eq!(records.len(), 40);
}

#[test]
fn train_parse_eval_cycle() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_corpus(&data, 60, 10, 17);
    let model = tmp.path().join("model");
    run_ok(bin().args([
        "train",
        "--train",
        data.join("train.txt").to_str().unwrap(),
        "--dev",
        data.join("dev.txt").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--mode",
        "joint",
        "--seed",
        "1",
        "--epochs",
        "2",
    ]));
    for artifact in ["params.bin", "model.cfg", "train.cfg", "rules.txt", "copy_dict.txt", "report.txt"] {
        assert!(model.join(artifact).exists(), "missing {artifact}");
    }

    // Parse a couple of sentences; outputs must be valid PENMAN.
    let sentences = tmp.path().join("sents.txt");
    std::fs::write(&sentences, "the boy wants the apple\nAnna visits Paris\n").unwrap();
    let parsed = tmp.path().join("parsed.txt");
    run_ok(bin().args([
        "parse",
        "--model",
        model.to_str().unwrap(),
        "--input",
        sentences.to_str().unwrap(),
        "--out",
        parsed.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&parsed).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    for line in &lines {
        amparse::graph::penman::parse(line).expect("parse output is valid PENMAN");
    }

    // Parse with empty input: exit 0, no output.
    let empty = tmp.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let out = bin()
        .args([
            "parse",
            "--model",
            model.to_str().unwrap(),
            "--input",
            empty.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());

    // Eval with predictions equal to gold: Smatch 1.0.
    let eval_out = run_ok(bin().args([
        "eval",
        "--pred",
        data.join("dev.txt").to_str().unwrap(),
        "--gold",
        data.join("dev.txt").to_str().unwrap(),
    ]));
    assert!(
        eval_out.contains("Smatch    1.0000"),
        "self-eval should be exactly 1: {eval_out}"
    );

    // Align-inspect renders heat grids.
    let inspect = run_ok(bin().args([
        "align-inspect",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        data.join("dev.txt").to_str().unwrap(),
        "--count",
        "2",
    ]));
    assert!(inspect.contains("argmax="), "{inspect}");
    assert!(inspect.contains("words:"), "{inspect}");
}

#[test]
fn verification_subcommands_exit_zero() {
    let out = bin()
        .args(["grad-check", "--instances", "3", "--seed", "5"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "grad-check failed: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    let out = bin().args(["oracle-check", "--seed", "5"]).output().unwrap();
    assert!(
        out.status.success(),
        "oracle-check failed: {}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn unknown_subcommand_exits_with_usage_code() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["train", "--bogus-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decoder_output_always_reparses_as_valid_penman() {
    // Fuzz: an untrained model decoding 1000 random token sequences must
    // still emit well-formed connected PENMAN, deterministically.
    use amparse::corpus::{generate_corpus, GeneratorConfig};
    use amparse::decode::{decode_instance, prepare_sentence, LookupTables};
    use amparse::model::{ModelConfig, ModelParameters};
    use amparse::preprocess::recat::RuleSet;
    use amparse::preprocess::vocab::build_vocabulary;
    use rand::{Rng, SeedableRng};

    let (train, _, _) = generate_corpus(&GeneratorConfig {
        train: 120,
        dev: 5,
        test: 5,
        ..Default::default()
    })
    .unwrap();
    let rules = RuleSet::default();
    let vocab = build_vocabulary(&train, &rules, 5).unwrap();
    let params = ModelParameters::init(&ModelConfig::tiny(), &vocab, 99).unwrap();
    let tables = LookupTables::from_vocab(&vocab);

    let pool: Vec<String> = vocab.words.names().to_vec();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..1000 {
        let len = rng.random_range(1..=7);
        let tokens: Vec<String> = (0..len)
            .map(|_| {
                if rng.random_bool(0.1) {
                    // out-of-vocabulary junk
                    format!("zz{}", rng.random_range(0..50))
                } else {
                    pool[rng.random_range(0..pool.len())].clone()
                }
            })
            .collect();
        let input = prepare_sentence(&tokens, &vocab).unwrap();
        let decoded = decode_instance(&params, &vocab, &tables, &input).unwrap();
        let text = amparse::graph::penman::serialize(&decoded.graph).unwrap();
        amparse::graph::penman::parse(&text)
            .unwrap_or_else(|e| panic!("bad decode for {tokens:?}: {text}: {e}"));

        // Smoke: an untrained model is still deterministic.
        let again = decode_instance(&params, &vocab, &tables, &input).unwrap();
        assert_eq!(
            amparse::graph::penman::serialize(&again.graph).unwrap(),
            text
        );
    }
}
