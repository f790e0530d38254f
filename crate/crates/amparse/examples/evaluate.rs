//! The evaluation metrics: Smatch under hill-climbed variable mappings,
//! the exhaustive oracle, concept and unlabeled F1.
//!
//! ```bash
//! cargo run -p amparse --example evaluate
//! ```

use amparse::eval::{concept_f1, smatch, smatch_exhaustive, unlabeled_f1};
use amparse::graph::penman;
use amparse::graph::random::random_graph_seeded;

fn main() -> amparse::Result<()> {
    let gold = penman::parse(
        "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b :polarity -))",
    )?;
    let close = penman::parse(
        "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))",
    )?;
    let wrong = penman::parse("(c / cat :mod (s / small))")?;

    for (name, pred) in [("itself", &gold), ("missing polarity", &close), ("unrelated", &wrong)] {
        let s = smatch(pred, &gold, 4, 1)?;
        println!(
            "{name}: smatch P {:.3} R {:.3} F1 {:.3}; concepts {:.3}; unlabeled {:.3}",
            s.precision,
            s.recall,
            s.f1,
            concept_f1(pred, &gold).f1,
            unlabeled_f1(pred, &gold, 4, 1)?.f1
        );
    }

    // Hill climbing with 4 restarts matches the exhaustive best mapping on
    // small graphs.
    let mut agree = 0;
    let trials = 200;
    for seed in 0..trials {
        let a = random_graph_seeded(seed, 6);
        let b = random_graph_seeded(seed + 10_000, 6);
        let hc = smatch(&a, &b, 4, seed)?;
        let ex = smatch_exhaustive(&a, &b)?;
        if (hc.f1 - ex.f1).abs() < 1e-12 {
            agree += 1;
        }
    }
    println!("\nhill climbing vs exhaustive mapping: {agree}/{trials} exact agreements");
    Ok(())
}
