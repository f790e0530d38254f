//! Everything between raw text/graphs and model-ready instances: stub
//! annotations, copy-dictionary construction, re-categorization and the
//! NULL-padding reduction to permutations.

pub mod lexicon;
pub mod recat;
pub mod vocab;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Token used when the sentence is padded to the concept count.
pub const NULL_WORD: &str = "<null>";

/// A tokenized sentence with per-token stub annotations and the copy
/// candidate for each word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
    pub pos: Vec<String>,
    pub ner: Vec<String>,
    /// Copy candidate per word, filled in once a dictionary is available.
    pub copy: Vec<Option<String>>,
}

impl AnnotatedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Deterministic suffix-stripping lemmatizer. Case is preserved so string
/// constants (names) keep matching their surface form.
pub fn lemma_of(word: &str) -> String {
    if word == NULL_WORD {
        return word.to_string();
    }
    if let Some(l) = lexicon::irregular_lemma(word) {
        return l.to_string();
    }
    let n = word.len();
    let lower = word.to_lowercase();
    if lower.ends_with("ies") && n > 4 {
        return format!("{}y", &word[..n - 3]);
    }
    for suf in ["sses", "shes", "ches", "xes", "zes"] {
        if lower.ends_with(suf) && n > suf.len() + 1 {
            return word[..n - 2].to_string();
        }
    }
    if lower.ends_with("ing") && n > 5 {
        return word[..n - 3].to_string();
    }
    if lower.ends_with("ed") && n > 4 {
        return word[..n - 2].to_string();
    }
    if lower.ends_with("ly") && n > 4 {
        return word[..n - 2].to_string();
    }
    if lower.ends_with('s') && !lower.ends_with("ss") && !lower.ends_with("us") && n > 3 {
        return word[..n - 1].to_string();
    }
    word.to_string()
}

/// Annotates tokens with the stub lemmatizer, the bundled POS lexicon and the
/// bundled gazetteer ("X"/"O" fallbacks). Copy candidates stay empty until a
/// dictionary fills them.
pub fn stub_annotate(tokens: &[String]) -> Result<AnnotatedSentence> {
    if tokens.is_empty() {
        return Err(Error::Corpus {
            line: 0,
            msg: "cannot annotate an empty token sequence".into(),
        });
    }
    let lemmas: Vec<String> = tokens.iter().map(|t| lemma_of(t)).collect();
    let pos: Vec<String> = tokens
        .iter()
        .zip(&lemmas)
        .map(|(t, l)| lexicon::pos_tag(t, l).to_string())
        .collect();
    let ner: Vec<String> = tokens.iter().map(|t| lexicon::ner_tag(t).to_string()).collect();
    Ok(AnnotatedSentence {
        copy: vec![None; tokens.len()],
        tokens: tokens.to_vec(),
        lemmas,
        pos,
        ner,
    })
}

/// Levenshtein distance (unit costs).
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The matching rule set for copy-dictionary construction. Verbalization and
/// PropBank matching need external resources and are disabled stubs here.
#[derive(Clone, Copy, Debug)]
pub struct MatchRules {
    pub verbalization: bool,
    pub propbank: bool,
    pub suffix_removal: bool,
    pub edit_dist: bool,
}

impl Default for MatchRules {
    fn default() -> Self {
        MatchRules {
            verbalization: false,
            propbank: false,
            suffix_removal: true,
            edit_dist: true,
        }
    }
}

const MATCH_SUFFIXES: [&str; 3] = ["ed", "ly", "ing"];

/// True iff any enabled rule links the concept label to the word.
pub fn concept_word_match(rules: &MatchRules, concept: &str, word: &str, lemma: &str) -> bool {
    if concept.is_empty() {
        return false;
    }
    // Exact lemma (or surface form) match.
    if concept == lemma || concept == word {
        return true;
    }
    if rules.suffix_removal {
        for suf in MATCH_SUFFIXES {
            if let Some(stripped) = word.strip_suffix(suf) {
                if stripped == concept {
                    return true;
                }
            }
        }
    }
    if rules.edit_dist {
        let d = edit_distance(word, concept).min(edit_distance(lemma, concept));
        if 2 * d < concept.len() {
            return true;
        }
    }
    // Verbalization / PropBank frame lookups would go here; the resource
    // files are out of scope so those rules never fire.
    false
}

/// Word-to-concept copy dictionary. Lookups fall back to the stub lemma for
/// unseen words.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CopyDictionary {
    map: BTreeMap<String, String>,
}

impl CopyDictionary {
    pub fn lookup(&self, word: &str, lemma: &str) -> String {
        match self.map.get(word) {
            Some(c) => c.clone(),
            None => lemma.to_string(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Sorted `word<TAB>concept` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, c) in &self.map {
            let _ = writeln!(out, "{w}\t{c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (w, c) = line.split_once('\t').ok_or_else(|| Error::Corpus {
                line: i + 1,
                msg: "copy dictionary line needs word<TAB>concept".into(),
            })?;
            map.insert(w.to_string(), c.to_string());
        }
        Ok(CopyDictionary { map })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Counts matching (word, concept) pairs over all pairs in every instance
/// and keeps the argmax concept per word (ties break to the lexicographically
/// smaller concept). An empty corpus leaves only the lemma fallback.
pub fn build_copy_dictionary<'a, I>(instances: I, rules: &MatchRules) -> CopyDictionary
where
    I: IntoIterator<Item = (&'a AnnotatedSentence, &'a [String])>,
{
    let mut counter: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (sentence, concepts) in instances {
        for concept in concepts {
            for (word, lemma) in sentence.tokens.iter().zip(&sentence.lemmas) {
                if concept_word_match(rules, concept, word, lemma) {
                    *counter
                        .entry(word.clone())
                        .or_default()
                        .entry(concept.clone())
                        .or_default() += 1;
                }
            }
        }
    }
    let mut map = BTreeMap::new();
    for (word, counts) in counter {
        // BTreeMap iteration is sorted, so `>` keeps the smaller concept on ties.
        let mut best: Option<(&String, usize)> = None;
        for (concept, &n) in &counts {
            if best.map(|(_, bn)| n > bn).unwrap_or(true) {
                best = Some((concept, n));
            }
        }
        if let Some((concept, _)) = best {
            map.insert(word, concept.clone());
        }
    }
    CopyDictionary { map }
}

/// Result of the NULL-padding reduction: both sides padded to `size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PadResult {
    pub size: usize,
    pub null_concepts: usize,
    pub null_words: usize,
}

/// Pads the shorter side with NULL items so injective alignments become
/// permutations of `max(m, n)` elements.
pub fn pad_to_square(concepts: usize, words: usize) -> PadResult {
    let size = concepts.max(words);
    PadResult {
        size,
        null_concepts: size - concepts,
        null_words: size - words,
    }
}

/// Merges adjacent tokens whose dash-joined form is a known concept label
/// (e.g. `more than` -> `more-than`). Returns the new tokens and, for each
/// original index, its new index.
pub fn merge_dashed_tokens(
    tokens: &[String],
    is_known: impl Fn(&str) -> bool,
) -> (Vec<String>, Vec<usize>) {
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut remap = vec![0usize; tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() {
            let merged = format!("{}-{}", tokens[i], tokens[i + 1]);
            if is_known(&merged) {
                remap[i] = out.len();
                remap[i + 1] = out.len();
                out.push(merged);
                i += 2;
                continue;
            }
        }
        remap[i] = out.len();
        out.push(tokens[i].clone());
        i += 1;
    }
    (out, remap)
}
