//! Command-line surface: corpus generation, training, parsing, evaluation,
//! alignment inspection and the verification suites.
//!
//! A trained model directory contains `params.bin` (checkpoint),
//! `model.cfg`, `train.cfg`, `rules.txt`, `copy_dict.txt`, `train.txt` (the
//! training records the vocabulary is deterministically rebuilt from) and
//! the training report.

use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::corpus::{generate_corpus, load_corpus, save_corpus, CorpusRecord, GeneratorConfig};
use crate::decode::{decode_instance, prepare_sentence, LookupTables};
use crate::error::{Error, Result};
use crate::eval::{concept_f1, smatch_counts, unlabeled_f1};
use crate::graph::penman;
use crate::model::{ModelConfig, ModelParameters};
use crate::preprocess::recat::RuleSet;
use crate::preprocess::vocab::{build_vocabulary, prepare_instance, Vocabulary};
use crate::sinkhorn::SinkhornConfig;
use crate::training::run::{eval_alignment, run_training};
use crate::training::{StageMode, TrainConfig};

#[derive(Parser)]
#[command(name = "amparse", version, about = "Semantic graph parser with latent alignments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/dev/test corpus.
    GenCorpus {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        dev: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
    },
    /// Train a model on a corpus.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, default_value = "model")]
        out: PathBuf,
        /// Stage mode: joint, two_stage, two_stage_tune_align,
        /// fixed_align_baseline, one_pass_ablation,
        /// factorized_align_ablation, no_overlap_reg_ablation,
        /// hard_hierarchical_loss_ablation.
        #[arg(long, default_value = "joint")]
        mode: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Training config file (key = value); defaults to the desk profile.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model dimension file (key = value); defaults to the desk profile.
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
    },
    /// Parse sentences (one per line, whitespace-tokenized) into PENMAN.
    Parse {
        #[arg(long)]
        model: PathBuf,
        /// Input file; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against gold graphs.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Model directory; enables alignment accuracy when gold alignments
        /// exist.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print relaxed-alignment heat grids for corpus instances.
    AlignInspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// First instance to show.
        #[arg(long, default_value_t = 0)]
        instance: usize,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Gradient verification suite (exit 1 on failure).
    GradCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        instances: usize,
    },
    /// Analytic-oracle verification suite (exit 1 on failure).
    OracleCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenCorpus { out, seed, train, dev, test } => {
            let cfg = GeneratorConfig {
                seed,
                train,
                dev,
                test,
                ..Default::default()
            };
            let (tr, dv, te) = generate_corpus(&cfg)?;
            std::fs::create_dir_all(&out)?;
            save_corpus(&tr, &out.join("train.txt"))?;
            save_corpus(&dv, &out.join("dev.txt"))?;
            save_corpus(&te, &out.join("test.txt"))?;
            println!(
                "wrote {} train / {} dev / {} test records to {}",
                tr.len(),
                dv.len(),
                te.len(),
                out.display()
            );
            Ok(0)
        }
        Command::Train {
            train,
            dev,
            out,
            mode,
            seed,
            config,
            model_config,
            epochs,
        } => {
            let mode = StageMode::parse(&mode)?;
            let train_records = load_corpus(&train)?;
            let dev_records = load_corpus(&dev)?;
            let mut tcfg = match &config {
                Some(path) => TrainConfig::from_text(&std::fs::read_to_string(path)?)?,
                None => TrainConfig::desk(),
            };
            tcfg = tcfg.with_mode(mode);
            tcfg.epochs = epochs;
            if let Some(seed) = seed {
                tcfg.seed = seed;
            }
            let mcfg = match &model_config {
                Some(path) => ModelConfig::from_text(&std::fs::read_to_string(path)?)?,
                None => ModelConfig::desk(),
            };
            let rules = RuleSet::default();
            let vocab = build_vocabulary(&train_records, &rules, 5)?;
            let (params, report) =
                run_training(&train_records, &dev_records, &vocab, &rules, &mcfg, &tcfg)?;
            std::fs::create_dir_all(&out)?;
            params.store.save(&out.join("params.bin"))?;
            std::fs::write(out.join("model.cfg"), mcfg.to_text())?;
            std::fs::write(out.join("train.cfg"), tcfg.to_text())?;
            std::fs::write(out.join("rules.txt"), rules.to_text())?;
            vocab.copy_dict.save(&out.join("copy_dict.txt"))?;
            save_corpus(&train_records, &out.join("train.txt"))?;
            std::fs::write(out.join("report.txt"), report.to_lines())?;
            println!("{}", report.summary());
            println!("model written to {}", out.display());
            Ok(0)
        }
        Command::Parse { model, input, out } => {
            let loaded = load_model(&model)?;
            let tables = LookupTables::from_vocab(&loaded.vocab);
            let text = match input {
                Some(path) => std::fs::read_to_string(path)?,
                None => {
                    let mut buf = String::new();
                    std::io::stdin().read_to_string(&mut buf)?;
                    buf
                }
            };
            let mut output: Box<dyn Write> = match out {
                Some(path) => Box::new(std::fs::File::create(path)?),
                None => Box::new(std::io::stdout()),
            };
            for line in text.lines() {
                let tokens: Vec<String> = line.split_whitespace().map(String::from).collect();
                if tokens.is_empty() {
                    continue;
                }
                let input = prepare_sentence(&tokens, &loaded.vocab)?;
                let decoded = decode_instance(&loaded.params, &loaded.vocab, &tables, &input)?;
                writeln!(output, "{}", penman::serialize(&decoded.graph)?)?;
            }
            Ok(0)
        }
        Command::Eval { pred, gold, restarts, seed, model } => {
            let pred_graphs = load_graphs(&pred)?;
            let gold_records = load_corpus_or_graphs(&gold)?;
            if pred_graphs.len() != gold_records.len() {
                return Err(Error::Config(format!(
                    "prediction count {} != gold count {}",
                    pred_graphs.len(),
                    gold_records.len()
                )));
            }
            let mut matched = 0;
            let mut ptotal = 0;
            let mut gtotal = 0;
            let mut cf1 = 0.0;
            let mut uf1 = 0.0;
            for (i, (p, grec)) in pred_graphs.iter().zip(&gold_records).enumerate() {
                let g = grec.graph()?;
                let (m, pt, gt) = smatch_counts(p, &g, restarts, seed.wrapping_add(i as u64))?;
                matched += m;
                ptotal += pt;
                gtotal += gt;
                cf1 += concept_f1(p, &g).f1;
                uf1 += unlabeled_f1(p, &g, restarts, seed.wrapping_add(i as u64))?.f1;
                let inst_f1 = if pt + gt > 0 { 2.0 * m as f64 / (pt + gt) as f64 } else { 0.0 };
                println!("instance={} smatch={:.4}", grec.id, inst_f1);
            }
            let n = gold_records.len().max(1) as f64;
            let smatch = if ptotal + gtotal > 0 {
                2.0 * matched as f64 / (ptotal + gtotal) as f64
            } else {
                0.0
            };
            // Alignment accuracy only with a model and gold alignments.
            let alignment = match model {
                Some(dir) => {
                    let loaded = load_model(&dir)?;
                    let mut sum = 0.0;
                    let mut count = 0;
                    for (i, rec) in gold_records.iter().enumerate() {
                        if rec.alignment.is_none() {
                            continue;
                        }
                        let inst = prepare_instance(rec, &loaded.vocab, &loaded.rules)?;
                        if let Some(ga) = &inst.gold_alignment {
                            let a_hat =
                                eval_alignment(&loaded.params, &inst, &SinkhornConfig::default())?;
                            if let Some(acc) = crate::eval::alignment_accuracy(
                                &a_hat,
                                ga,
                                seed.wrapping_add(i as u64),
                            ) {
                                sum += acc;
                                count += 1;
                            }
                        }
                    }
                    (count > 0).then(|| sum / count as f64)
                }
                None => None,
            };
            println!("Smatch    {:.4}", smatch);
            println!("Unlabeled {:.4}", uf1 / n);
            println!("Concepts  {:.4}", cf1 / n);
            match alignment {
                Some(a) => println!("Alignment {a:.4}"),
                None => println!("Alignment -"),
            }
            Ok(0)
        }
        Command::AlignInspect { model, corpus, instance, count, seed } => {
            let loaded = load_model(&model)?;
            let records = load_corpus(&corpus)?;
            for rec in records.iter().skip(instance).take(count) {
                let inst = prepare_instance(rec, &loaded.vocab, &loaded.rules)?;
                let a_hat = eval_alignment(&loaded.params, &inst, &SinkhornConfig::default())?;
                println!("instance {} ({})", rec.id, rec.tokens.join(" "));
                print_heat_grid(&inst, &a_hat);
                let _ = seed;
                println!();
            }
            Ok(0)
        }
        Command::GradCheck { seed, instances } => {
            let report = crate::verify::grad_check_suite(seed, instances, 4)?;
            println!("{report}");
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::OracleCheck { seed } => {
            let report = crate::verify::oracle_check_suite(seed)?;
            println!("{report}");
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}

struct LoadedModel {
    params: ModelParameters,
    vocab: Vocabulary,
    rules: RuleSet,
}

fn load_model(dir: &Path) -> Result<LoadedModel> {
    let mcfg = ModelConfig::from_text(&std::fs::read_to_string(dir.join("model.cfg"))?)?;
    let rules = RuleSet::parse(&std::fs::read_to_string(dir.join("rules.txt"))?)?;
    let train_records = load_corpus(&dir.join("train.txt"))?;
    let vocab = build_vocabulary(&train_records, &rules, 5)?;
    let store = crate::tensor::checkpoint::ParamStore::load(&dir.join("params.bin"))?;
    // Frequent-row metadata is a pure function of the vocabulary.
    let reference = ModelParameters::init(&mcfg, &vocab, 0)?;
    Ok(LoadedModel {
        params: ModelParameters {
            config: mcfg,
            store,
            frequent_rows: reference.frequent_rows,
        },
        vocab,
        rules,
    })
}

/// Reads either a corpus record file or bare PENMAN lines as graphs.
fn load_graphs(path: &Path) -> Result<Vec<crate::graph::AmrGraph>> {
    let text = std::fs::read_to_string(path)?;
    let mut graphs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if line.starts_with("id=") {
            let records = load_corpus(path)?;
            return records.iter().map(|r| r.graph()).collect();
        }
        graphs.push(penman::parse(line).map_err(|e| Error::Corpus {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(graphs)
}

fn load_corpus_or_graphs(path: &Path) -> Result<Vec<CorpusRecord>> {
    let text = std::fs::read_to_string(path)?;
    if text.lines().next().map(|l| l.starts_with("id=")).unwrap_or(false) {
        return load_corpus(path);
    }
    // Bare PENMAN lines: wrap as records without tokens/alignments.
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        penman::parse(line).map_err(|e| Error::Corpus {
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(CorpusRecord {
            id: i as u64,
            tokens: vec!["-".into()],
            graph_text: line.to_string(),
            alignment: None,
        });
    }
    Ok(records)
}

const HEAT: &[u8] = b" .:-=+*#%@";

fn print_heat_grid(inst: &crate::preprocess::vocab::PreparedInstance, a_hat: &crate::tensor::Tensor) {
    let n = inst.size;
    let label_w = inst
        .concepts
        .iter()
        .map(|c| c.label.len())
        .max()
        .unwrap_or(4)
        .min(16);
    for i in 0..n {
        let mut row = String::new();
        let label: String = inst.concepts[i].label.chars().take(label_w).collect();
        row.push_str(&format!("{label:>label_w$} |"));
        let mut best = 0;
        for k in 0..n {
            if a_hat.at2(i, k) > a_hat.at2(i, best) {
                best = k;
            }
        }
        for k in 0..n {
            let v = a_hat.at2(i, k).clamp(0.0, 1.0);
            let idx = ((v * (HEAT.len() - 1) as f64).round() as usize).min(HEAT.len() - 1);
            row.push(HEAT[idx] as char);
        }
        let gold = inst
            .gold_alignment
            .as_ref()
            .and_then(|a| a[i])
            .map(|w| format!(" gold={w}"))
            .unwrap_or_default();
        row.push_str(&format!("| argmax={best}{gold}"));
        println!("{row}");
    }
    let words: Vec<&str> = inst.tokens.iter().map(|t| t.as_str()).collect();
    println!("{:>label_w$}  words: {}", "", words.join(" "));
}

/// Reads sentences from a reader, one per line (exposed for tests).
pub fn read_sentences(r: impl BufRead) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let tokens: Vec<String> = line.split_whitespace().map(String::from).collect();
        if !tokens.is_empty() {
            out.push(tokens);
        }
    }
    Ok(out)
}
