//! The semantic graph data model: rooted labeled directed graphs with
//! concepts as nodes and relations as edges, plus text serialization,
//! traversal ordering and validity checks.

pub mod iso;
pub mod penman;
pub mod random;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Reserved category for numeric constants.
pub const CAT_NUMBER: &str = "number";
/// Reserved category for quoted string constants.
pub const CAT_STRING: &str = "string";
/// Reserved category for polarity markers (`-`, `+`).
pub const CAT_POLARITY: &str = "polarity";
/// The dummy category for ordinary concepts.
pub const CAT_CONCEPT: &str = "concept";
/// Category of the padding item used for the permutation reduction.
pub const CAT_NULL: &str = "NULL";

/// A labeled node. `label` is sense-stripped (`go`, not `go-02`); the sense
/// suffix, when known, lives in `sense`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Concept {
    pub label: String,
    pub category: String,
    pub sense: Option<String>,
    pub wiki: Option<String>,
    pub variable: String,
}

impl Concept {
    pub fn new(label: &str, category: &str) -> Self {
        Concept {
            label: label.to_string(),
            category: category.to_string(),
            sense: None,
            wiki: None,
            variable: String::new(),
        }
    }

    pub fn with_sense(mut self, sense: &str) -> Self {
        self.sense = Some(sense.to_string());
        self
    }

    pub fn with_variable(mut self, var: &str) -> Self {
        self.variable = var.to_string();
        self
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.category.as_str(), CAT_NUMBER | CAT_STRING | CAT_POLARITY)
    }

    /// Label plus sense suffix, e.g. `go-02`.
    pub fn full_label(&self) -> String {
        match &self.sense {
            Some(s) => format!("{}{}", self.label, s),
            None => self.label.clone(),
        }
    }
}

/// Splits a node label into (label, sense) when it ends in `-NN`.
pub fn split_sense(raw: &str) -> (String, Option<String>) {
    if let Some(pos) = raw.rfind('-') {
        let suffix = &raw[pos..];
        if suffix.len() >= 3 && suffix[1..].chars().all(|c| c.is_ascii_digit()) {
            return (raw[..pos].to_string(), Some(suffix.to_string()));
        }
    }
    (raw.to_string(), None)
}

/// Rooted labeled directed graph. Edge absence means the NULL relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AmrGraph {
    pub concepts: Vec<Concept>,
    pub edges: BTreeMap<(usize, usize), String>,
    pub root: usize,
}

/// Injective map from concept index to word index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub a: Vec<usize>,
}

impl Alignment {
    pub fn is_injective(&self) -> bool {
        let set: BTreeSet<usize> = self.a.iter().copied().collect();
        set.len() == self.a.len()
    }
}

impl AmrGraph {
    pub fn singleton(c: Concept) -> Self {
        AmrGraph {
            concepts: vec![c],
            edges: BTreeMap::new(),
            root: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn add_edge(&mut self, from: usize, to: usize, relation: &str) -> Result<()> {
        if from == to {
            return Err(Error::Graph(format!(
                "self-edge on concept {} ({})",
                from, self.concepts[from].label
            )));
        }
        if from >= self.len() || to >= self.len() {
            return Err(Error::Graph(format!("edge ({from},{to}) out of bounds")));
        }
        if let Some(existing) = self.edges.get(&(from, to)) {
            return Err(Error::Graph(format!(
                "duplicate edge ({from},{to}): {existing} vs {relation}"
            )));
        }
        self.edges.insert((from, to), relation.to_string());
        Ok(())
    }

    pub fn out_edges(&self, i: usize) -> impl Iterator<Item = (usize, &str)> {
        self.edges
            .range((i, 0)..(i + 1, 0))
            .map(|(&(_, j), r)| (j, r.as_str()))
    }

    pub fn in_edges(&self, j: usize) -> impl Iterator<Item = (usize, &str)> + '_ {
        self.edges
            .iter()
            .filter(move |(&(_, t), _)| t == j)
            .map(|(&(s, _), r)| (s, r.as_str()))
    }

    /// Undirected neighbor view: out-edges keep their label, in-edges are
    /// seen with the `-of` inverse label.
    fn undirected_children(&self, i: usize) -> Vec<(String, usize)> {
        let mut kids: Vec<(String, usize)> = self
            .out_edges(i)
            .map(|(j, r)| (r.to_string(), j))
            .chain(self.in_edges(i).map(|(j, r)| (invert_relation(r), j)))
            .collect();
        kids.sort_by(|a, b| {
            (a.0.as_str(), self.concepts[a.1].label.as_str(), a.1).cmp(&(
                b.0.as_str(),
                self.concepts[b.1].label.as_str(),
                b.1,
            ))
        });
        kids
    }

    pub fn is_connected(&self) -> bool {
        if self.concepts.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(u) = stack.pop() {
            for (_, v) in self.undirected_children(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_acyclic(&self) -> bool {
        // Kahn's algorithm over directed edges.
        let mut indeg = vec![0usize; self.len()];
        for (&(_, j), _) in &self.edges {
            indeg[j] += 1;
        }
        let mut queue: Vec<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut removed = 0;
        while let Some(u) = queue.pop() {
            removed += 1;
            for (j, _) in self.out_edges(u) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    queue.push(j);
                }
            }
        }
        removed == self.len()
    }

    /// Deterministic depth-first concept order from the root.
    ///
    /// Children are visited sorted by relation label (in-edges viewed with
    /// their `-of` inverse), then target concept label, then target index.
    pub fn dfs_concept_order(&self) -> Result<Vec<usize>> {
        if self.concepts.is_empty() {
            return Ok(Vec::new());
        }
        if !self.is_connected() {
            return Err(Error::Graph(
                "dfs order needs a connected graph; found unreachable concepts".into(),
            ));
        }
        let mut order = Vec::with_capacity(self.len());
        let mut seen = vec![false; self.len()];
        self.dfs_visit(self.root, &mut seen, &mut order);
        Ok(order)
    }

    fn dfs_visit(&self, u: usize, seen: &mut [bool], order: &mut Vec<usize>) {
        seen[u] = true;
        order.push(u);
        for (_, v) in self.undirected_children(u) {
            if !seen[v] {
                self.dfs_visit(v, seen, order);
            }
        }
    }

    /// Full structural validity: bounds, no self-edges, connected.
    pub fn validate(&self) -> Result<()> {
        if self.concepts.is_empty() {
            return Err(Error::Graph("empty graph".into()));
        }
        if self.root >= self.len() {
            return Err(Error::Graph(format!("root {} out of bounds", self.root)));
        }
        for (&(i, j), r) in &self.edges {
            if i == j {
                return Err(Error::Graph(format!("self-edge on concept {i}")));
            }
            if i >= self.len() || j >= self.len() {
                return Err(Error::Graph(format!("edge ({i},{j}) out of bounds")));
            }
            if r.is_empty() {
                return Err(Error::Graph(format!("empty relation label on ({i},{j})")));
            }
        }
        if !self.is_connected() {
            return Err(Error::Graph("graph is not connected".into()));
        }
        Ok(())
    }
}

/// `ARG0 -> ARG0-of`, `ARG0-of -> ARG0`.
pub fn invert_relation(r: &str) -> String {
    match r.strip_suffix("-of") {
        Some(base) => base.to_string(),
        None => format!("{r}-of"),
    }
}

/// Controls `-of` canonicalization; some relations are semantic primitives
/// that must keep their `-of` surface form.
#[derive(Clone, Debug)]
pub struct NormalizeConfig {
    pub keep_as_is: BTreeSet<String>,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        let keep_as_is = ["consist-of", "prep-out-of", "prep-on-behalf-of"]
            .into_iter()
            .map(String::from)
            .collect();
        NormalizeConfig { keep_as_is }
    }
}

/// Rewrites every `-of` relation (minus configured exceptions) to its
/// inverse with swapped endpoints. Idempotent.
pub fn normalize_relation_direction(graph: &AmrGraph, cfg: &NormalizeConfig) -> Result<AmrGraph> {
    let mut out = graph.clone();
    out.edges.clear();
    for (&(i, j), r) in &graph.edges {
        let (from, to, label) = match r.strip_suffix("-of") {
            Some(base) if !cfg.keep_as_is.contains(r) => (j, i, base.to_string()),
            _ => (i, j, r.clone()),
        };
        if let Some(existing) = out.edges.get(&(from, to)) {
            if existing != &label {
                return Err(Error::Graph(format!(
                    "direction normalization collides on ({from},{to}): {existing} vs {label}"
                )));
            }
        }
        out.edges.insert((from, to), label);
    }
    Ok(out)
}
