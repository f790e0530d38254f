//! Bundled word lists: POS lexicon, NER gazetteer and irregular lemmas.
//! These stand in for external annotation toolkits; the synthetic corpus
//! generator draws from the same lists so annotations stay consistent.

pub const DETERMINERS: &[&str] = &["the", "a", "an"];
pub const MODALS: &[&str] = &["must", "can", "may"];
pub const PREPOSITIONS: &[&str] = &["in", "on", "at", "of", "with"];

pub const NOUNS: &[&str] = &[
    "apple", "ball", "bird", "book", "boy", "cat", "child", "doctor", "dog", "door", "farmer",
    "flower", "garden", "girl", "horse", "house", "letter", "man", "meeting", "park", "report",
    "river", "road", "school", "song", "story", "teacher", "town", "tree", "window", "woman",
    "critic", "premier", "minister", "opinion", "hour", "day",
];

pub const VERBS: &[&str] = &[
    "chase", "describe", "eat", "find", "go", "help", "like", "read", "run", "say", "see",
    "share", "sing", "speak", "swim", "take", "visit", "want", "watch", "write", "last",
];

pub const ADJECTIVES: &[&str] = &[
    "big", "green", "happy", "long", "old", "quick", "quiet", "red", "slow", "small", "young",
];

pub const PERSON_NAMES: &[&str] = &[
    "Anna", "Ben", "Clara", "David", "Emma", "Felix", "Grace", "Henry",
];

/// City names; "New York" is the two-token entity exercising multi-word
/// groups.
pub const CITY_NAMES: &[&str] = &[
    "Berlin", "Dublin", "London", "Madrid", "Oslo", "Paris", "Rome", "York",
];

const IRREGULAR: &[(&str, &str)] = &[
    ("ate", "eat"),
    ("children", "child"),
    ("does", "do"),
    ("found", "find"),
    ("goes", "go"),
    ("has", "have"),
    ("men", "man"),
    ("ran", "run"),
    ("said", "say"),
    ("sang", "sing"),
    ("saw", "see"),
    ("spoke", "speak"),
    ("swam", "swim"),
    ("took", "take"),
    ("went", "go"),
    ("women", "woman"),
    ("wrote", "write"),
];

pub fn irregular_lemma(word: &str) -> Option<&'static str> {
    IRREGULAR
        .binary_search_by_key(&word, |(w, _)| w)
        .ok()
        .map(|i| IRREGULAR[i].1)
}

pub fn pos_tag(token: &str, lemma: &str) -> &'static str {
    let lower = token.to_lowercase();
    if DETERMINERS.contains(&lower.as_str()) {
        return "DT";
    }
    if MODALS.contains(&lower.as_str()) {
        return "MD";
    }
    if PREPOSITIONS.contains(&lower.as_str()) {
        return "IN";
    }
    match lower.as_str() {
        "not" => return "RB",
        "to" => return "TO",
        "and" => return "CC",
        "more" | "most" => return "RBR",
        "than" => return "IN",
        _ => {}
    }
    if token.parse::<f64>().is_ok() {
        return "CD";
    }
    if ner_tag(token) != "O" {
        return "NNP";
    }
    let stem = lemma.to_lowercase();
    if VERBS.contains(&stem.as_str()) {
        return "VB";
    }
    if NOUNS.contains(&stem.as_str()) {
        return "NN";
    }
    if ADJECTIVES.contains(&stem.as_str()) {
        return "JJ";
    }
    if lower.ends_with("ly") {
        return "RB";
    }
    "X"
}

pub fn ner_tag(token: &str) -> &'static str {
    if PERSON_NAMES.contains(&token) {
        return "person";
    }
    if CITY_NAMES.contains(&token) || token == "New" {
        return "city";
    }
    "O"
}

/// Deterministic stub for the verbalization resource: maps a frame lemma to
/// the noun it verbalizes, used when labeling template compounds.
pub fn verbalize(frame: &str) -> Option<&'static str> {
    match frame {
        "opine" => Some("opinion"),
        "decide" => Some("decision"),
        "state" => Some("statement"),
        _ => None,
    }
}

/// Inverse of [`verbalize`] for decode-time unpacking.
pub fn deverbalize(noun: &str) -> Option<&'static str> {
    match noun {
        "opinion" => Some("opine"),
        "decision" => Some("decide"),
        "statement" => Some("state"),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn irregular_table_is_sorted_for_binary_search() {
        let mut sorted: Vec<&str> = IRREGULAR.iter().map(|(w, _)| *w).collect();
        sorted.sort_unstable();
        let given: Vec<&str> = IRREGULAR.iter().map(|(w, _)| *w).collect();
        assert_eq!(sorted, given);
        assert_eq!(irregular_lemma("went"), Some("go"));
        assert_eq!(irregular_lemma("boy"), None);
    }

    #[test]
    fn tags_cover_the_synthetic_vocabulary() {
        assert_eq!(pos_tag("the", "the"), "DT");
        assert_eq!(pos_tag("must", "must"), "MD");
        assert_eq!(pos_tag("wants", "want"), "VB");
        assert_eq!(pos_tag("boy", "boy"), "NN");
        assert_eq!(pos_tag("happy", "happy"), "JJ");
        assert_eq!(pos_tag("Anna", "Anna"), "NNP");
        assert_eq!(pos_tag("2", "2"), "CD");
        assert_eq!(ner_tag("Anna"), "person");
        assert_eq!(ner_tag("York"), "city");
        assert_eq!(ner_tag("boy"), "O");
    }
}
