//! Shallow text processing: tokenizer, sentence typing, lexicon lookup and the three
//! preprocessing modes that turn a mail into an [`ExtractionResult`].

mod lexicon;
mod sentence;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use lexicon::{normalize, LexEntry, Lexicon, Pos, ResourceError, Resources, WordList};
pub use sentence::{classify_sentence, split_sentences, Sentence, SentenceType};
pub use tokenize::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Stems of nouns, verbs and adjectives plus unknown full forms, over the whole text.
    Morphana,
    /// The same analysis restricted to question, negation and pre-question sentences.
    Heuristics,
    /// Morphana items followed by the heuristic items, so heuristic words count twice.
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Morphana, Mode::Heuristics, Mode::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Morphana => "morphana",
            Mode::Heuristics => "heuristics",
            Mode::Combined => "combined",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Morphana => "MorphAna",
            Mode::Heuristics => "STP-Heuristics",
            Mode::Combined => "Combined",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "morphana" | "morph" => Ok(Mode::Morphana),
            "heuristics" | "stp-heuristics" | "heuristic" => Ok(Mode::Heuristics),
            "combined" => Ok(Mode::Combined),
            other => Err(format!(
                "unknown mode `{other}` (expected morphana, heuristics or combined)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub items: Vec<String>,
    pub mode: Mode,
    pub fallback_used: bool,
}

impl ExtractionResult {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Full analysis of one text, kept for inspection (`extract` subcommand).
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub sentences: Vec<Sentence>,
    /// Per sentence: picked by the heuristics.
    pub selected: Vec<bool>,
}

impl Analysis {
    pub fn new(text: &str, res: &Resources) -> Self {
        let sentences = split_sentences(&tokenize(text), res);
        let selected = select_sentences(&sentences);
        Self {
            sentences,
            selected,
        }
    }

    pub fn any_selected(&self) -> bool {
        self.selected.iter().any(|&s| s)
    }

    fn all_tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    fn selected_tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences
            .iter()
            .zip(&self.selected)
            .filter(|(_, &sel)| sel)
            .flat_map(|(s, _)| s.tokens.iter())
    }

    pub fn extract(&self, mode: Mode, res: &Resources) -> ExtractionResult {
        let morph = || morph_items(self.all_tokens(), res);
        let (items, fallback_used) = match mode {
            Mode::Morphana => (morph(), false),
            Mode::Heuristics => self.heuristic_items(res),
            Mode::Combined => {
                let (heuristic, fallback) = self.heuristic_items(res);
                let mut items = morph();
                items.extend(heuristic);
                (items, fallback)
            }
        };
        ExtractionResult {
            items,
            mode,
            fallback_used,
        }
    }

    fn heuristic_items(&self, res: &Resources) -> (Vec<String>, bool) {
        if self.any_selected() {
            (morph_items(self.selected_tokens(), res), false)
        } else {
            (morph_items(self.all_tokens(), res), true)
        }
    }
}

/// Question sentences, negation-bearing sentences and declaratives directly before a
/// question. The look-ahead runs over the whole document, across paragraph breaks.
fn select_sentences(sentences: &[Sentence]) -> Vec<bool> {
    (0..sentences.len())
        .map(|i| {
            let s = &sentences[i];
            s.sentence_type.is_question()
                || s.has_negation
                || sentences.get(i + 1).is_some_and(|n| n.sentence_type.is_question())
        })
        .collect()
}

fn morph_items<'a>(tokens: impl Iterator<Item = &'a Token>, res: &Resources) -> Vec<String> {
    tokens
        .filter(|t| t.kind == TokenKind::Word)
        .filter_map(|t| morph_item(&t.normalized, res))
        .collect()
}

fn morph_item(word: &str, res: &Resources) -> Option<String> {
    if res.stopwords.contains(word) {
        return None;
    }
    match res.lexicon.lookup(word) {
        Some(entry) if entry.pos.is_content() => {
            let stem = &entry.stem;
            let stem_is_closed = res
                .lexicon
                .lookup(stem)
                .is_some_and(|e| !e.pos.is_content());
            (!res.stopwords.contains(stem) && !stem_is_closed).then(|| stem.clone())
        }
        Some(_) => None,
        None => Some(word.to_string()),
    }
}

/// Morphological analysis over an arbitrary token sequence.
pub fn morph_analyze(tokens: &[Token], res: &Resources) -> ExtractionResult {
    ExtractionResult {
        items: morph_items(tokens.iter(), res),
        mode: Mode::Morphana,
        fallback_used: false,
    }
}

pub fn extract(text: &str, mode: Mode, res: &Resources) -> ExtractionResult {
    Analysis::new(text, res).extract(mode, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn res() -> std::sync::Arc<Resources> {
        Resources::builtin()
    }

    fn counts(items: &[String]) -> HashMap<&str, usize> {
        let mut m = HashMap::new();
        for i in items {
            *m.entry(i.as_str()).or_default() += 1;
        }
        m
    }

    #[test]
    fn all_stopwords_yield_nothing() {
        let r = extract("Ich habe das und es ist so.", Mode::Morphana, &res());
        assert!(r.items.is_empty());
    }

    #[test]
    fn multiplicity_is_preserved() {
        let custom = Resources {
            lexicon: Lexicon::from_entries([("programs", "program", Pos::Noun)]),
            stopwords: WordList::default(),
            wh_particles: WordList::default(),
            negation_particles: WordList::default(),
        };
        let r = morph_analyze(&tokenize("programs programs"), &custom);
        assert_eq!(r.items, vec!["program", "program"]);
    }

    #[test]
    fn unknown_words_pass_through_lowercased() {
        let r = extract("wieder neu instalierem", Mode::Morphana, &res());
        assert_eq!(r.items, vec!["neu", "instalierem"]);
        let r = extract("Mein Programm", Mode::Morphana, &res());
        assert_eq!(r.items, vec!["programm"]);
    }

    #[test]
    fn stems_of_content_words_numbers_dropped() {
        let r = extract("Ich installiere Version 4.0 neu", Mode::Morphana, &res());
        assert_eq!(r.items, vec!["install", "version", "neu"]);
    }

    #[test]
    fn heuristics_fall_back_without_selection() {
        let text = "Mein Modem blinkt rot. Das Kabel ist neu.";
        let h = extract(text, Mode::Heuristics, &res());
        let m = extract(text, Mode::Morphana, &res());
        assert!(h.fallback_used);
        assert_eq!(h.items, m.items);
    }

    // two-sentence fixture: the first carries a negation, the second is an unrelated declarative
    const FIXTURE: &str = "Der Drucker druckt keine Seiten. Gestern kam ein Paket.";

    #[test]
    fn heuristics_keep_only_selected_sentences() {
        let h = extract(FIXTURE, Mode::Heuristics, &res());
        assert!(!h.fallback_used);
        // oracle: manual selection of sentence one, then MorphAna over it
        assert_eq!(h.items, vec!["drucker", "druckt", "seite"]);
    }

    #[test]
    fn combined_doubles_heuristic_items() {
        let c = extract(FIXTURE, Mode::Combined, &res());
        let counts = counts(&c.items);
        assert_eq!(counts["drucker"], 2);
        assert_eq!(counts["druckt"], 2);
        assert_eq!(counts["seite"], 2);
        assert_eq!(counts["kam"], 1);
        assert_eq!(counts["paket"], 1);
        assert!(!c.fallback_used);
    }

    #[test]
    fn declarative_before_question_is_selected() {
        let text = "Hallo Team. My system drops my e-mails. Why is this the case? Thanks";
        let a = Analysis::new(text, &res());
        assert_eq!(a.selected, vec![false, true, true, false]);
        let h = a.extract(Mode::Heuristics, &res());
        assert_eq!(h.items, vec!["system", "drop", "e-mail", "case"]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("STP-Heuristics".parse::<Mode>().unwrap(), Mode::Heuristics);
        assert!("deep".parse::<Mode>().is_err());
    }
}
