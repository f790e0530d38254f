//! Re-categorization: collapsing stable subgraphs (named entities, fixed
//! phrases, template patterns) into single compound nodes, and the exact
//! inverse. Compound categories encode the primary concept; compound labels
//! encode the lexically triggered secondary.

use std::collections::BTreeMap;

use super::lexicon;
use crate::error::{Error, Result};
use crate::graph::{invert_relation, AmrGraph, Concept, CAT_STRING};
use crate::Result as CrateResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RuleKind {
    FixedPhrase,
    EntityGroup,
    Template,
}

impl RuleKind {
    fn as_str(&self) -> &'static str {
        match self {
            RuleKind::FixedPhrase => "fixed-phrase",
            RuleKind::EntityGroup => "entity-group",
            RuleKind::Template => "template",
        }
    }
}

/// One data-driven rule: `kind|primary|relations|category`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecatRule {
    pub kind: RuleKind,
    pub primary: String,
    pub relations: Vec<String>,
    pub category: String,
}

#[derive(Clone, Debug)]
pub struct RuleSet {
    pub rules: Vec<RecatRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::parse(DEFAULT_RULES).expect("built-in rule table parses")
    }
}

/// The built-in rule table: the eight fixed templates, the have-x-role fixed
/// phrases and the named-entity/value-entity groups.
pub const DEFAULT_RULES: &str = "\
fixed-phrase|have-org-role-91|ARG0-of,ARG2|have-org-role
fixed-phrase|have-rel-role-91|ARG0-of,ARG2|have-rel-role
entity-group|*|name|Ner
template|person|ARG0-of,ARG1-of|person
template|thing|ARG0-of,ARG1-of,ARG2-of|thing
template|most|degree-of|most
template|date-entity|weekday,dayperiod,season|date-entity
template|monetary-quantity|unit,ARG2-of,ARG1-of,quant|monetary-quantity
template|temporal-quantity|unit,ARG3-of|temporal-quantity
template|mass-quantity|unit|mass-quantity
template|distance-quantity|unit|distance-quantity
template|ordinal-entity|value|ordinal-entity
";

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 4 {
                return Err(Error::Corpus {
                    line: i + 1,
                    msg: format!("rule needs kind|primary|relations|category, got `{line}`"),
                });
            }
            let kind = match parts[0] {
                "fixed-phrase" => RuleKind::FixedPhrase,
                "entity-group" => RuleKind::EntityGroup,
                "template" => RuleKind::Template,
                other => {
                    return Err(Error::Corpus {
                        line: i + 1,
                        msg: format!("unknown rule kind `{other}`"),
                    })
                }
            };
            rules.push(RecatRule {
                kind,
                primary: parts[1].to_string(),
                relations: parts[2].split(',').map(|s| s.trim().to_string()).collect(),
                category: parts[3].to_string(),
            });
        }
        Ok(RuleSet { rules })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&format!(
                "{}|{}|{}|{}\n",
                r.kind.as_str(),
                r.primary,
                r.relations.join(","),
                r.category
            ));
        }
        out
    }
}

/// Assigns model categories on a parsed graph: constants keep their reserved
/// categories, sensed concepts become frames, everything else stays the
/// dummy category.
pub fn assign_categories(graph: &AmrGraph) -> AmrGraph {
    let mut g = graph.clone();
    for c in &mut g.concepts {
        if c.is_constant() {
            continue;
        }
        if c.sense.is_some() {
            c.category = "frame".to_string();
        }
    }
    g
}

/// A re-categorized graph plus everything needed to reverse the transform
/// and to share alignments between group members.
#[derive(Clone, Debug)]
pub struct RecatGraph {
    /// The original graph (categories assigned); `unpack` returns it.
    pub original: AmrGraph,
    /// The compound graph fed to the concept/alignment models.
    pub graph: AmrGraph,
    /// original node -> compound node carrying its alignment distribution.
    pub orig_to_recat: Vec<usize>,
    /// compound node -> original node whose gold token it inherits.
    pub anchors: Vec<usize>,
    /// Rule applications, for inspection.
    pub notes: Vec<String>,
}

impl RecatGraph {
    /// Exact inverse of `recategorize`.
    pub fn unpack(&self) -> AmrGraph {
        self.original.clone()
    }
}

/// Display form `category(label)` for compound concepts.
pub fn compound_display(c: &Concept) -> String {
    format!("{}({})", c.category, c.label)
}

struct Grouping {
    /// group id per original node
    assignment: Vec<Option<usize>>,
    groups: Vec<Group>,
}

struct Group {
    kind: RuleKind,
    /// Original member indices. The first member receives external edges.
    members: Vec<usize>,
    /// Compound concepts (one for templates/fixed phrases, one per op for
    /// entity chains) paired with their anchor original node.
    compounds: Vec<(Concept, usize)>,
    note: String,
}

/// Finds the neighbor of `u` reachable through relation `rel` in either
/// surface orientation (out-edge labeled `rel`, or in-edge labeled with the
/// inverse).
fn trigger_neighbor(graph: &AmrGraph, u: usize, rel: &str) -> Option<usize> {
    for (v, r) in graph.out_edges(u) {
        if r == rel {
            return Some(v);
        }
    }
    let inv = invert_relation(rel);
    for (w, r) in graph.in_edges(u) {
        if r == inv {
            return Some(w);
        }
    }
    None
}

fn degree(graph: &AmrGraph, u: usize) -> usize {
    graph.out_edges(u).count() + graph.in_edges(u).count()
}

/// Collapses matching subgraphs into compound nodes. Rule priority is
/// fixed-phrase, then entity groups, then templates; each original node
/// joins at most one group. The input must already have categories assigned.
pub fn recategorize(graph: &AmrGraph, rules: &RuleSet) -> CrateResult<RecatGraph> {
    graph.validate()?;
    let n = graph.len();
    let mut grouping = Grouping {
        assignment: vec![None; n],
        groups: Vec::new(),
    };

    for kind in [RuleKind::FixedPhrase, RuleKind::EntityGroup, RuleKind::Template] {
        for rule in rules.rules.iter().filter(|r| r.kind == kind) {
            match kind {
                RuleKind::FixedPhrase => apply_fixed_phrase(graph, rule, &mut grouping),
                RuleKind::EntityGroup => apply_entity_group(graph, rule, &mut grouping),
                RuleKind::Template => apply_template(graph, rule, &mut grouping),
            }
        }
    }

    build_compound(graph, grouping)
}

fn free(grouping: &Grouping, nodes: &[usize]) -> bool {
    nodes.iter().all(|&u| grouping.assignment[u].is_none())
}

fn claim(grouping: &mut Grouping, group: Group) {
    let id = grouping.groups.len();
    for &m in &group.members {
        grouping.assignment[m] = Some(id);
    }
    grouping.groups.push(group);
}

fn apply_fixed_phrase(graph: &AmrGraph, rule: &RecatRule, grouping: &mut Grouping) {
    if rule.relations.len() != 2 {
        return;
    }
    for h in 0..graph.len() {
        if graph.concepts[h].full_label() != rule.primary {
            continue;
        }
        // Primary structure: P -(rel0)-> H -(rel1)-> R.
        let Some(p) = trigger_neighbor(graph, h, &invert_relation(&rule.relations[0])) else {
            continue;
        };
        let Some(r) = trigger_neighbor(graph, h, &rule.relations[1]) else {
            continue;
        };
        if p == r || !free(grouping, &[p, h, r]) {
            continue;
        }
        if degree(graph, h) != 2 || degree(graph, r) != 1 {
            continue;
        }
        if graph.concepts[p].is_constant() || graph.concepts[r].is_constant() {
            continue;
        }
        let category = format!("{}_{}", rule.category, graph.concepts[p].label);
        let compound = Concept::new(&graph.concepts[r].label, &category);
        let note = format!(
            "fixed-phrase {} -> {}",
            rule.primary,
            compound_display(&compound)
        );
        claim(
            grouping,
            Group {
                kind: RuleKind::FixedPhrase,
                members: vec![p, h, r],
                compounds: vec![(compound, r)],
                note,
            },
        );
    }
}

fn apply_entity_group(graph: &AmrGraph, rule: &RecatRule, grouping: &mut Grouping) {
    let name_rel = rule.relations.first().map(String::as_str).unwrap_or("name");
    for e in 0..graph.len() {
        if rule.primary != "*" && graph.concepts[e].label != rule.primary {
            continue;
        }
        let Some(name_node) = graph.out_edges(e).find(|(_, r)| *r == name_rel).map(|(v, _)| v)
        else {
            continue;
        };
        if graph.concepts[name_node].label != "name" {
            continue;
        }
        // Collect op1..opk string constants in op order.
        let mut ops: Vec<(usize, usize)> = Vec::new(); // (op number, node)
        let mut clean = graph.in_edges(name_node).count() == 1;
        for (v, r) in graph.out_edges(name_node) {
            match r.strip_prefix("op").and_then(|d| d.parse::<usize>().ok()) {
                Some(k) if graph.concepts[v].category == CAT_STRING && degree(graph, v) == 1 => {
                    ops.push((k, v))
                }
                _ => clean = false,
            }
        }
        ops.sort();
        if !clean || ops.is_empty() {
            continue;
        }
        let mut members = vec![e, name_node];
        members.extend(ops.iter().map(|&(_, v)| v));
        if !free(grouping, &members) {
            continue;
        }
        let etype = graph.concepts[e].label.clone();
        let mut compounds = Vec::new();
        for (i, &(_, v)) in ops.iter().enumerate() {
            let category = if i == 0 {
                format!("B-{}_{etype}", rule.category)
            } else {
                format!("{}_{etype}", rule.category)
            };
            let mut c = Concept::new(&graph.concepts[v].label, &category);
            if i == 0 {
                c.wiki = graph.concepts[e].wiki.clone();
            }
            compounds.push((c, v));
        }
        let note = format!(
            "entity-group {etype} -> {}",
            compounds
                .iter()
                .map(|(c, _)| compound_display(c))
                .collect::<Vec<_>>()
                .join(",")
        );
        claim(
            grouping,
            Group {
                kind: RuleKind::EntityGroup,
                members,
                compounds,
                note,
            },
        );
    }
}

fn apply_template(graph: &AmrGraph, rule: &RecatRule, grouping: &mut Grouping) {
    for p in 0..graph.len() {
        if graph.concepts[p].label != rule.primary || graph.concepts[p].is_constant() {
            continue;
        }
        for rel in &rule.relations {
            let Some(s) = trigger_neighbor(graph, p, rel) else {
                continue;
            };
            if !free(grouping, &[p, s]) || degree(graph, s) != 1 {
                continue;
            }
            let s_label = &graph.concepts[s].label;
            let label = lexicon::verbalize(s_label).unwrap_or(s_label).to_string();
            let compound = Concept::new(&label, &rule.category);
            let note = format!("template {} -> {}", rule.primary, compound_display(&compound));
            claim(
                grouping,
                Group {
                    kind: RuleKind::Template,
                    members: vec![p, s],
                    compounds: vec![(compound, s)],
                    note,
                },
            );
            break;
        }
    }
}

fn build_compound(graph: &AmrGraph, grouping: Grouping) -> CrateResult<RecatGraph> {
    let n = graph.len();
    let mut concepts: Vec<Concept> = Vec::new();
    let mut orig_to_recat = vec![usize::MAX; n];
    let mut anchors: Vec<usize> = Vec::new();
    let mut group_first: Vec<Option<usize>> = vec![None; grouping.groups.len()];
    let mut internal_edges: Vec<(usize, usize, String)> = Vec::new();

    for u in 0..n {
        match grouping.assignment[u] {
            None => {
                orig_to_recat[u] = concepts.len();
                anchors.push(u);
                concepts.push(graph.concepts[u].clone());
            }
            Some(gid) => {
                if group_first[gid].is_none() {
                    let group = &grouping.groups[gid];
                    let base = concepts.len();
                    group_first[gid] = Some(base);
                    for (i, (c, anchor)) in group.compounds.iter().enumerate() {
                        anchors.push(*anchor);
                        concepts.push(c.clone());
                        if i > 0 {
                            internal_edges.push((base, base + i, format!("op{}", i + 1)));
                        }
                    }
                    // Members share the head compound's alignment row except
                    // entity op constants, which track their own token node.
                    for &m in &group.members {
                        orig_to_recat[m] = base;
                    }
                    if group.kind == RuleKind::EntityGroup {
                        for (i, (_, anchor)) in group.compounds.iter().enumerate() {
                            orig_to_recat[*anchor] = base + i;
                        }
                    }
                }
            }
        }
    }

    let mut compound = AmrGraph {
        concepts,
        edges: BTreeMap::new(),
        root: orig_to_recat[graph.root],
    };
    for (&(u, v), r) in &graph.edges {
        let (cu, cv) = (orig_to_recat[u], orig_to_recat[v]);
        if grouping.assignment[u].is_some()
            && grouping.assignment[u] == grouping.assignment[v]
        {
            continue; // internal to a group
        }
        if let Some(existing) = compound.edges.get(&(cu, cv)) {
            return Err(Error::Graph(format!(
                "re-categorization collides on ({cu},{cv}): {existing} vs {r}"
            )));
        }
        compound.edges.insert((cu, cv), r.clone());
    }
    for (u, v, r) in internal_edges {
        compound.edges.insert((u, v), r);
    }

    let notes = grouping.groups.iter().map(|g| g.note.clone()).collect();
    Ok(RecatGraph {
        original: graph.clone(),
        graph: compound,
        orig_to_recat,
        anchors,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::iso::is_isomorphic;
    use crate::graph::penman::parse;

    fn recat(text: &str) -> RecatGraph {
        let g = assign_categories(&parse(text).unwrap());
        recategorize(&g, &RuleSet::default()).unwrap()
    }

    #[test]
    fn thing_template_produces_thing_opinion() {
        let r = recat("(s / share-01 :ARG0 (c / critic) :ARG1 (t / thing :ARG1-of (o / opine-01)))");
        let compound = r
            .graph
            .concepts
            .iter()
            .find(|c| c.category == "thing")
            .expect("compound node");
        assert_eq!(compound_display(compound), "thing(opinion)");
        assert_eq!(r.graph.len(), 3); // share, critic, thing(opinion)
        // Unpack restores the original exactly.
        assert!(is_isomorphic(&r.unpack(), &r.original, 10).unwrap());
    }

    #[test]
    fn entity_group_produces_per_token_nodes() {
        let r = recat(
            r#"(v / visit-01 :ARG0 (p / person :name (n / name :op1 "Anna")) :ARG1 (c / city :wiki "New_York" :name (n2 / name :op1 "New" :op2 "York")))"#,
        );
        let display: Vec<String> = r
            .graph
            .concepts
            .iter()
            .filter(|c| c.category.contains("Ner"))
            .map(compound_display)
            .collect();
        assert!(display.contains(&"B-Ner_city(New)".to_string()), "{display:?}");
        assert!(display.contains(&"Ner_city(York)".to_string()));
        assert!(display.contains(&"B-Ner_person(Anna)".to_string()));
        // visit + Anna-node + New + York = 4 concepts
        assert_eq!(r.graph.len(), 4);
        // The B node of the city chain carries the chain edge to York.
        let b = r.graph.concepts.iter().position(|c| c.category == "B-Ner_city").unwrap();
        let y = r.graph.concepts.iter().position(|c| c.category == "Ner_city").unwrap();
        assert_eq!(r.graph.edges.get(&(b, y)).map(String::as_str), Some("op2"));
        assert_eq!(r.graph.concepts[b].wiki.as_deref(), Some("New_York"));
    }

    #[test]
    fn have_org_role_collapses_three_nodes() {
        let r = recat("(s / speak-01 :ARG0 (p / person :ARG0-of (h / have-org-role-91 :ARG2 (r / premier))))");
        let compound = r
            .graph
            .concepts
            .iter()
            .find(|c| c.category.starts_with("have-org-role"))
            .expect("compound");
        assert_eq!(compound_display(compound), "have-org-role_person(premier)");
        assert_eq!(r.graph.len(), 2);
        assert!(is_isomorphic(&r.unpack(), &r.original, 10).unwrap());
    }

    #[test]
    fn quantity_and_ordinal_templates() {
        let r = recat("(l / last-01 :ARG1 (m / meeting) :ARG2 (t / temporal-quantity :quant 2 :unit (h / hour)))");
        // temporal-quantity has degree 2 here (quant + unit), the unit child
        // has degree 1, so the template collapses quantity+hour.
        let compound = r.graph.concepts.iter().find(|c| c.category == "temporal-quantity");
        assert!(compound.is_some(), "expected temporal-quantity(hour): {:?}", r.notes);
        assert_eq!(compound_display(compound.unwrap()), "temporal-quantity(hour)");

        let r = recat("(o / ordinal-entity :value 1)");
        assert_eq!(compound_display(&r.graph.concepts[0]), "ordinal-entity(1)");
    }

    #[test]
    fn untriggered_graph_is_unchanged() {
        let g = assign_categories(&parse("(w / want-01 :ARG0 (b / boy))").unwrap());
        let r = recategorize(&g, &RuleSet::default()).unwrap();
        assert!(is_isomorphic(&r.graph, &g, 10).unwrap());
        assert!(r.notes.is_empty());
        assert_eq!(r.graph.concepts[r.graph.root].category, "frame");
    }

    #[test]
    fn rule_table_round_trips() {
        let rules = RuleSet::default();
        let re = RuleSet::parse(&rules.to_text()).unwrap();
        assert_eq!(rules.rules, re.rules);
        assert!(RuleSet::parse("bogus|a|b").is_err());
        assert!(RuleSet::parse("badkind|a|b|c").is_err());
    }

    #[test]
    fn alignment_anchors_point_at_lexical_triggers() {
        let r = recat("(s / share-01 :ARG0 (c / critic) :ARG1 (t / thing :ARG1-of (o / opine-01)))");
        let compound_idx = r.graph.concepts.iter().position(|c| c.category == "thing").unwrap();
        let anchor = r.anchors[compound_idx];
        assert_eq!(r.original.concepts[anchor].label, "opine");
        // Both thing and opine share the compound's alignment row.
        let thing_orig = r.original.concepts.iter().position(|c| c.label == "thing").unwrap();
        let opine_orig = r.original.concepts.iter().position(|c| c.label == "opine").unwrap();
        assert_eq!(r.orig_to_recat[thing_orig], compound_idx);
        assert_eq!(r.orig_to_recat[opine_orig], compound_idx);
    }
}
