//! Re-categorization: collapsing named entities, fixed phrases and template
//! subgraphs into compound concepts, and unpacking them back.
//!
//! ```bash
//! cargo run -p amparse --example recategorize
//! ```

use amparse::graph::iso::is_isomorphic;
use amparse::graph::penman;
use amparse::preprocess::recat::{assign_categories, compound_display, recategorize, RuleSet};

fn main() -> amparse::Result<()> {
    let rules = RuleSet::default();
    println!("rule table:\n{}", rules.to_text());

    let cases = [
        "(s / share-01 :ARG0 (c / critic) :ARG1 (t / thing :ARG1-of (o / opine-01)))",
        r#"(v / visit-01 :ARG0 (p / person :wiki - :name (n / name :op1 "Anna")) :ARG1 (c / city :wiki "New_York" :name (n2 / name :op1 "New" :op2 "York")))"#,
        "(s / speak-01 :ARG0 (p / person :ARG0-of (h / have-org-role-91 :ARG2 (r / premier))))",
        "(l / last-01 :ARG1 (m / meeting) :ARG2 (t / temporal-quantity :quant 2 :unit (u / hour)))",
        "(w / want-01 :ARG0 (b / boy) :ARG1 (a / apple))",
    ];
    for text in cases {
        let graph = assign_categories(&penman::parse(text)?);
        let recat = recategorize(&graph, &rules)?;
        let compounds: Vec<String> = recat
            .graph
            .concepts
            .iter()
            .map(|c| {
                if c.category == "concept" || c.category == "frame" || c.is_constant() {
                    c.label.clone()
                } else {
                    compound_display(c)
                }
            })
            .collect();
        println!("graph:      {text}");
        println!("compounds:  {}", compounds.join(", "));
        if !recat.notes.is_empty() {
            println!("rules:      {}", recat.notes.join("; "));
        }
        let unpacked = recat.unpack();
        println!(
            "unpack restores the original exactly: {}\n",
            is_isomorphic(&graph, &unpacked, 12)?
        );
    }
    Ok(())
}
