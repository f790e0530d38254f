//! The deterministic synthetic corpus: template mix, gold alignments, and
//! the vocabulary statistics derived from it.
//!
//! ```bash
//! cargo run -p amparse --example synthetic_corpus
//! ```

use amparse::corpus::{generate_corpus, GeneratorConfig};
use amparse::preprocess::recat::RuleSet;
use amparse::preprocess::vocab::build_vocabulary;

fn main() -> amparse::Result<()> {
    let cfg = GeneratorConfig {
        train: 500,
        dev: 100,
        test: 100,
        ..Default::default()
    };
    let (train, dev, test) = generate_corpus(&cfg)?;
    println!(
        "generated {} train / {} dev / {} test records (seed {})",
        train.len(),
        dev.len(),
        test.len(),
        cfg.seed
    );

    for record in train.iter().take(5) {
        println!("\n#{}: {}", record.id, record.tokens.join(" "));
        println!("  {}", record.graph_text);
        if let Some(align) = &record.alignment {
            let graph = record.graph()?;
            let order = graph.dfs_concept_order()?;
            let pairs: Vec<String> = align
                .iter()
                .enumerate()
                .filter_map(|(i, w)| {
                    w.map(|w| {
                        format!("{}<-{}", graph.concepts[order[i]].label, record.tokens[w])
                    })
                })
                .collect();
            println!("  gold alignment: {}", pairs.join(" "));
        }
    }

    let rules = RuleSet::default();
    let vocab = build_vocabulary(&train, &rules, 5)?;
    println!("\nvocabulary: {} words, {} lemmas", vocab.words.len(), vocab.lemmas.len());
    println!(
        "concept labels: {} compound-level, {} original-level, {} categories, {} relations",
        vocab.recat_labels.len(),
        vocab.orig_labels.len(),
        vocab.categories.len(),
        vocab.relations.len()
    );
    println!("copy dictionary entries: {}", vocab.copy_dict.len());
    println!("sense table: go -> {}", vocab.sense_for("go"));
    println!("wiki table: \"New York\" -> {}", vocab.wiki_for("New York"));
    Ok(())
}
