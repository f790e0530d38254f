//! PENMAN-style text format.
//!
//! Grammar (UTF-8, whitespace-insensitive between tokens):
//!
//! ```text
//! node   := '(' VAR '/' LABEL (':' ROLE target)* ')'
//! target := node                re-entrant VAR
//!         | '"' chars '"'       string constant
//!         | NUMBER              numeric constant
//!         | '-' | '+'           polarity constant
//! ```
//!
//! `:wiki` targets attach to the enclosing concept instead of creating a
//! node. Lines starting with `#` (annotation metadata) are skipped. Variable
//! mentions after the defining occurrence produce re-entrant edges; forward
//! references are allowed. Constants have no variables, so a constant shared
//! by two parents serializes once per mention.

use std::collections::BTreeMap;

use super::{split_sense, AmrGraph, Concept, CAT_CONCEPT, CAT_NUMBER, CAT_POLARITY, CAT_STRING};
use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<AmrGraph> {
    let cleaned: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut p = Parser {
        src: cleaned.as_bytes(),
        pos: 0,
        concepts: Vec::new(),
        edges: Vec::new(),
        vars: BTreeMap::new(),
        pending: Vec::new(),
    };
    p.skip_ws();
    let root = p.node()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input after the root node (multi-root fragments are rejected)"));
    }

    let mut graph = AmrGraph {
        concepts: p.concepts,
        edges: BTreeMap::new(),
        root,
    };
    // Resolve bare-atom targets now that every variable is known.
    for (from, role, atom, pos) in p.pending {
        let to = match p.vars.get(&atom) {
            Some(&idx) => idx,
            None if atom == "-" || atom == "+" => {
                graph.concepts.push(Concept::new(&atom, CAT_POLARITY));
                graph.concepts.len() - 1
            }
            None if atom.parse::<f64>().is_ok() => {
                graph.concepts.push(Concept::new(&atom, CAT_NUMBER));
                graph.concepts.len() - 1
            }
            None => {
                return Err(Error::Penman {
                    pos,
                    msg: format!("unknown target `{atom}` (not a variable, number or polarity)"),
                })
            }
        };
        graph
            .add_edge(from, to, &role)
            .map_err(|e| Error::Penman { pos, msg: e.to_string() })?;
    }
    for (from, to, role, pos) in p.edges {
        graph
            .add_edge(from, to, &role)
            .map_err(|e| Error::Penman { pos, msg: e.to_string() })?;
    }
    if !graph.is_acyclic() {
        return Err(Error::Penman {
            pos: 0,
            msg: "graph has a directed cycle".into(),
        });
    }
    Ok(graph)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    concepts: Vec<Concept>,
    edges: Vec<(usize, usize, String, usize)>,
    vars: BTreeMap<String, usize>,
    pending: Vec<(usize, String, String, usize)>,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Penman {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!(
                "expected `{}`, found `{}`",
                c as char,
                self.peek().map(|b| (b as char).to_string()).unwrap_or_else(|| "end of input".into())
            )))
        }
    }

    fn atom(&mut self) -> Result<String> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            let c = b as char;
            if c.is_whitespace() || matches!(c, '(' | ')' | '/' | ':' | '"') {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected an atom"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn quoted(&mut self) -> Result<String> {
        self.expect(b'"')?;
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b == b'"' {
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.pos += 1;
                return Ok(s);
            }
            self.pos += 1;
        }
        Err(self.err("unterminated string constant"))
    }

    fn node(&mut self) -> Result<usize> {
        self.expect(b'(')?;
        self.skip_ws();
        let var = self.atom()?;
        self.skip_ws();
        self.expect(b'/')?;
        self.skip_ws();
        let raw_label = self.atom()?;
        if self.vars.contains_key(&var) {
            return Err(self.err(&format!("duplicate definition of variable `{var}`")));
        }
        let (label, sense) = split_sense(&raw_label);
        let mut concept = Concept::new(&label, CAT_CONCEPT).with_variable(&var);
        concept.sense = sense;
        self.concepts.push(concept);
        let idx = self.concepts.len() - 1;
        self.vars.insert(var, idx);

        loop {
            self.skip_ws();
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    return Ok(idx);
                }
                Some(b':') => {
                    self.pos += 1;
                    let role = self.atom()?;
                    if role.is_empty() {
                        return Err(self.err("empty role name"));
                    }
                    self.skip_ws();
                    self.target(idx, role)?;
                }
                Some(other) => {
                    return Err(self.err(&format!("expected `:role` or `)`, found `{}`", other as char)))
                }
                None => return Err(self.err("unbalanced parentheses: missing `)`")),
            }
        }
    }

    fn target(&mut self, from: usize, role: String) -> Result<()> {
        let pos = self.pos;
        match self.peek() {
            Some(b'(') => {
                let child = self.node()?;
                self.edges.push((from, child, role, pos));
                Ok(())
            }
            Some(b'"') => {
                let s = self.quoted()?;
                if role == "wiki" {
                    self.concepts[from].wiki = Some(s);
                } else {
                    self.concepts.push(Concept::new(&s, CAT_STRING));
                    let idx = self.concepts.len() - 1;
                    self.edges.push((from, idx, role, pos));
                }
                Ok(())
            }
            Some(_) => {
                let atom = self.atom()?;
                if role == "wiki" {
                    self.concepts[from].wiki = Some(atom);
                } else {
                    self.pending.push((from, role, atom, pos));
                }
                Ok(())
            }
            None => Err(self.err("expected a target, found end of input")),
        }
    }
}

/// Serializes a rooted connected graph. Variables are reassigned as
/// `v1, v2, ...` in emission order.
///
/// A spanning tree is chosen with forward edges preferred: only nodes that
/// cannot be reached along edge direction are attached through an inverted
/// `-of` relation. Graphs produced by [`parse`] are always root-dominating,
/// so their round trip preserves every directed edge exactly; normalized
/// graphs round-trip up to direction canonicalization.
pub fn serialize(graph: &AmrGraph) -> Result<String> {
    graph.validate().map_err(|e| Error::Graph(format!("cannot serialize: {e}")))?;
    if graph.concepts[graph.root].is_constant() {
        return Err(Error::Graph("root must not be a constant".into()));
    }

    // tree[v] = (parent, displayed role, original edge key)
    let mut tree: Vec<Option<(usize, String)>> = vec![None; graph.len()];
    let mut visited = vec![false; graph.len()];
    let mut visit_order: Vec<usize> = Vec::with_capacity(graph.len());

    fn forward_dfs(
        graph: &AmrGraph,
        u: usize,
        visited: &mut [bool],
        visit_order: &mut Vec<usize>,
        tree: &mut [Option<(usize, String)>],
    ) {
        visited[u] = true;
        visit_order.push(u);
        let mut kids: Vec<(String, usize)> =
            graph.out_edges(u).map(|(j, r)| (r.to_string(), j)).collect();
        kids.sort_by(|a, b| {
            (a.0.as_str(), graph.concepts[a.1].label.as_str(), a.1).cmp(&(
                b.0.as_str(),
                graph.concepts[b.1].label.as_str(),
                b.1,
            ))
        });
        for (role, v) in kids {
            if !visited[v] {
                tree[v] = Some((u, role));
                forward_dfs(graph, v, visited, visit_order, tree);
            }
        }
    }

    forward_dfs(graph, graph.root, &mut visited, &mut visit_order, &mut tree);
    // Attach forward-unreachable nodes through inverted edges, scanning
    // visited nodes in visit order for determinism.
    while visit_order.len() < graph.len() {
        let mut attached = false;
        'scan: for idx in 0..visit_order.len() {
            let u = visit_order[idx];
            let mut back: Vec<(String, usize)> = graph
                .in_edges(u)
                .filter(|&(w, _)| !visited[w])
                .map(|(w, r)| (super::invert_relation(r), w))
                .collect();
            back.sort_by(|a, b| {
                (a.0.as_str(), graph.concepts[a.1].label.as_str(), a.1).cmp(&(
                    b.0.as_str(),
                    graph.concepts[b.1].label.as_str(),
                    b.1,
                ))
            });
            if let Some((role, w)) = back.into_iter().next() {
                tree[w] = Some((u, role));
                forward_dfs(graph, w, &mut visited, &mut visit_order, &mut tree);
                attached = true;
                break 'scan;
            }
        }
        if !attached {
            return Err(Error::Graph("graph is not connected".into()));
        }
    }

    // Pre-assign variables in tree emission order so re-entrant mentions can
    // reference nodes that are printed later (the parser resolves forward
    // references).
    let mut vars = vec![String::new(); graph.len()];
    let mut var_counter = 0;
    let mut order_counter = 0;
    let mut emit_idx = vec![usize::MAX; graph.len()];
    assign_vars(
        graph,
        &tree,
        graph.root,
        &mut vars,
        &mut var_counter,
        &mut order_counter,
        &mut emit_idx,
    );

    // Non-tree edges surface as variable mentions, by default in their own
    // direction (exact round trip). The printed text is read back in surface
    // orientation though: tree edges point parent to child (inverted
    // attachments flip!), so the combined surface graph can be cyclic even
    // for an acyclic source. When that happens, mentions are re-oriented up
    // the emission order with `-of` labels; every printed edge then strictly
    // increases in emission index and the surface form is acyclic, matching
    // the source up to direction normalization.
    let non_tree: Vec<(usize, usize, &String)> = graph
        .edges
        .iter()
        .filter(|(&(u, v), r)| {
            let forward_tree = matches!(&tree[v], Some((p, role)) if *p == u && role == *r);
            let inverted_tree = matches!(
                &tree[u],
                Some((p, role)) if *p == v && *role == super::invert_relation(r)
            );
            !forward_tree && !inverted_tree
        })
        .map(|(&(u, v), r)| (u, v, r))
        .collect();
    // Surface orientation test: tree edges always go parent -> child
    // (increasing emission index); cycles can only pass through mentions.
    let surface_cyclic = {
        let n = graph.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (v, slot) in tree.iter().enumerate() {
            if let Some((p, _)) = slot {
                adj[*p].push(v);
                indeg[v] += 1;
            }
        }
        for &(u, v, _) in &non_tree {
            adj[u].push(v);
            indeg[v] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut removed = 0;
        while let Some(u) = queue.pop() {
            removed += 1;
            for &v in &adj[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push(v);
                }
            }
        }
        removed != n
    };
    let mut mentions: Vec<Vec<(String, usize)>> = vec![Vec::new(); graph.len()];
    for (u, v, r) in non_tree {
        if surface_cyclic && emit_idx[u] > emit_idx[v] {
            mentions[v].push((super::invert_relation(r), u));
        } else {
            mentions[u].push((r.clone(), v));
        }
    }

    let mut st = Emitter {
        graph,
        tree: &tree,
        vars,
        mentions,
        out: String::new(),
    };
    st.node(graph.root)?;
    Ok(st.out)
}

fn tree_children(graph: &AmrGraph, tree: &[Option<(usize, String)>], u: usize) -> Vec<(String, usize)> {
    let mut kids: Vec<(String, usize)> = tree
        .iter()
        .enumerate()
        .filter_map(|(v, slot)| match slot {
            Some((parent, role)) if *parent == u => Some((role.clone(), v)),
            _ => None,
        })
        .collect();
    kids.sort_by(|a, b| {
        (a.0.as_str(), graph.concepts[a.1].label.as_str(), a.1).cmp(&(
            b.0.as_str(),
            graph.concepts[b.1].label.as_str(),
            b.1,
        ))
    });
    kids
}

fn assign_vars(
    graph: &AmrGraph,
    tree: &[Option<(usize, String)>],
    u: usize,
    vars: &mut [String],
    var_counter: &mut usize,
    order_counter: &mut usize,
    emit_idx: &mut [usize],
) {
    emit_idx[u] = *order_counter;
    *order_counter += 1;
    *var_counter += 1;
    vars[u] = format!("v{var_counter}");
    for (_, v) in tree_children(graph, tree, u) {
        if !graph.concepts[v].is_constant() {
            assign_vars(graph, tree, v, vars, var_counter, order_counter, emit_idx);
        } else {
            emit_idx[v] = *order_counter;
            *order_counter += 1;
        }
    }
}

struct Emitter<'a> {
    graph: &'a AmrGraph,
    tree: &'a [Option<(usize, String)>],
    vars: Vec<String>,
    mentions: Vec<Vec<(String, usize)>>,
    out: String,
}

impl<'a> Emitter<'a> {
    fn node(&mut self, u: usize) -> Result<()> {
        let c = &self.graph.concepts[u];
        if c.label.contains('"') {
            return Err(Error::Graph(format!("label `{}` contains a quote", c.label)));
        }
        self.out.push('(');
        self.out.push_str(&self.vars[u].clone());
        self.out.push_str(" / ");
        self.out.push_str(&c.full_label());
        if let Some(w) = &c.wiki.clone() {
            if w == "-" {
                self.out.push_str(" :wiki -");
            } else {
                self.out.push_str(&format!(" :wiki \"{w}\""));
            }
        }
        // Children: this node's tree children plus its non-tree out-edges
        // (re-entrant mentions), in one deterministic order. `kind` 0 marks a
        // tree child, 1 a mention.
        let mut kids: Vec<(String, usize, u8)> = tree_children(self.graph, self.tree, u)
            .into_iter()
            .map(|(role, v)| (role, v, 0))
            .collect();
        for (r, j) in &self.mentions[u] {
            kids.push((r.clone(), *j, 1));
        }
        kids.sort_by(|a, b| {
            (a.0.as_str(), self.graph.concepts[a.1].label.as_str(), a.1).cmp(&(
                b.0.as_str(),
                self.graph.concepts[b.1].label.as_str(),
                b.1,
            ))
        });
        for (role, v, kind) in kids {
            let target = &self.graph.concepts[v];
            self.out.push_str(&format!(" :{role} "));
            if target.is_constant() {
                match target.category.as_str() {
                    CAT_STRING => self.out.push_str(&format!("\"{}\"", target.label)),
                    _ => self.out.push_str(&target.label.clone()),
                }
            } else if kind == 0 {
                self.node(v)?;
            } else {
                let mention = self.vars[v].clone();
                self.out.push_str(&mention);
            }
        }
        self.out.push(')');
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::iso::is_isomorphic;

    #[test]
    fn parses_single_concept() {
        let g = parse("(b / boy)").unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.edges.is_empty());
        assert_eq!(g.concepts[g.root].label, "boy");
    }

    #[test]
    fn parses_running_example_with_reentrancy() {
        // obligate-01 with an explicit ARG1 to boy, who is also the ARG0 of
        // go-02: two paths reach boy.
        let text = "(o / obligate-01 :ARG1 (b / boy) :ARG2 (g / go-02 :ARG0 b :polarity -))";
        let g = parse(text).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.concepts[g.root].label, "obligate");
        assert_eq!(g.concepts[g.root].sense.as_deref(), Some("-01"));
        let boy = g.concepts.iter().position(|c| c.label == "boy").unwrap();
        assert_eq!(g.in_edges(boy).count(), 2, "boy is re-entrant");
        let polarity = g.concepts.iter().position(|c| c.category == CAT_POLARITY).unwrap();
        assert_eq!(g.concepts[polarity].label, "-");
    }

    #[test]
    fn rejects_self_loop() {
        assert!(parse("(a / x :ARG0 a)").is_err());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse("(a / x").is_err(), "unbalanced parens");
        assert!(parse("(a / x :ARG0 (a / y))").is_err(), "duplicate variable");
        assert!(parse("(a / x :ARG0 zz)").is_err(), "unknown bare target");
        assert!(parse("(a / x) (b / y)").is_err(), "multi-root");
        assert!(parse("(a / x :ARG0 (b / y :ARG1 a))").is_err(), "directed cycle");
    }

    #[test]
    fn parses_entities_numbers_and_wiki() {
        let text = r#"(v / visit-01 :ARG1 (c / city :wiki "New_York" :name (n / name :op1 "New" :op2 "York")) :quant 2)"#;
        let g = parse(text).unwrap();
        let city = g.concepts.iter().position(|c| c.label == "city").unwrap();
        assert_eq!(g.concepts[city].wiki.as_deref(), Some("New_York"));
        let strings: Vec<&str> = g
            .concepts
            .iter()
            .filter(|c| c.category == CAT_STRING)
            .map(|c| c.label.as_str())
            .collect();
        assert_eq!(strings, vec!["New", "York"]);
        assert!(g.concepts.iter().any(|c| c.category == CAT_NUMBER && c.label == "2"));
    }

    #[test]
    fn serializes_single_node_with_fresh_variable() {
        let g = AmrGraph::singleton(Concept::new("boy", CAT_CONCEPT));
        assert_eq!(serialize(&g).unwrap(), "(v1 / boy)");
    }

    #[test]
    fn round_trips_running_example() {
        let text = "(o / obligate-01 :ARG1 (b / boy) :ARG2 (g / go-02 :ARG0 b :polarity -))";
        let g = parse(text).unwrap();
        let re = parse(&serialize(&g).unwrap()).unwrap();
        assert!(is_isomorphic(&g, &re, 10).unwrap());
    }

    #[test]
    fn serialize_rejects_disconnected() {
        let g = AmrGraph {
            concepts: vec![Concept::new("a", CAT_CONCEPT), Concept::new("b", CAT_CONCEPT)],
            edges: std::collections::BTreeMap::new(),
            root: 0,
        };
        assert!(serialize(&g).is_err());
    }

    #[test]
    fn serializes_against_edge_direction_with_inverse() {
        // Root is the argument: the edge must surface as ARG1-of.
        let mut g = AmrGraph {
            concepts: vec![
                Concept::new("thing", CAT_CONCEPT).with_variable("t"),
                Concept::new("opine", CAT_CONCEPT).with_sense("-01").with_variable("o"),
            ],
            edges: std::collections::BTreeMap::new(),
            root: 0,
        };
        g.add_edge(1, 0, "ARG1").unwrap();
        let text = serialize(&g).unwrap();
        assert!(text.contains(":ARG1-of"), "got {text}");
        let re = parse(&text).unwrap();
        assert!(is_isomorphic(
            &crate::graph::normalize_relation_direction(&g, &Default::default()).unwrap(),
            &crate::graph::normalize_relation_direction(&re, &Default::default()).unwrap(),
            10
        )
        .unwrap());
    }
}
