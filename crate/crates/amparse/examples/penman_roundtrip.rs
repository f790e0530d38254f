//! PENMAN text format: parsing, serialization, re-entrancy, direction
//! normalization and isomorphism checks.
//!
//! ```bash
//! cargo run -p amparse --example penman_roundtrip
//! ```

use amparse::graph::iso::is_isomorphic;
use amparse::graph::{normalize_relation_direction, penman, NormalizeConfig};

fn main() -> amparse::Result<()> {
    // "The boy must not go": obligate-01 is the root; ARG1 and the ARG0 of
    // go-02 both reach boy (re-entrancy).
    let text = "(o / obligate-01 :ARG1 (b / boy) :ARG2 (g / go-02 :ARG0 b :polarity -))";
    let graph = penman::parse(text)?;
    println!("parsed {} concepts, {} edges", graph.len(), graph.edges.len());

    let order = graph.dfs_concept_order()?;
    let labels: Vec<&str> = order.iter().map(|&i| graph.concepts[i].label.as_str()).collect();
    println!("depth-first concept order: {labels:?}");

    let round = penman::serialize(&graph)?;
    println!("serialized: {round}");
    let reparsed = penman::parse(&round)?;
    println!(
        "round trip isomorphic: {}",
        is_isomorphic(&graph, &reparsed, 10)?
    );

    // Direction normalization rewrites `-of` relations.
    let inverted = penman::parse("(t / thing :ARG1-of (o / opine-01))")?;
    let normalized = normalize_relation_direction(&inverted, &NormalizeConfig::default())?;
    println!(
        "normalized `thing :ARG1-of opine-01` edges: {:?}",
        normalized
            .edges
            .iter()
            .map(|(&(i, j), r)| format!(
                "{} -{}-> {}",
                normalized.concepts[i].label, r, normalized.concepts[j].label
            ))
            .collect::<Vec<_>>()
    );
    // Serializing from the argument side restores the inverse surface form.
    println!("re-serialized: {}", penman::serialize(&normalized)?);
    Ok(())
}
