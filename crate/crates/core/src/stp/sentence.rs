use serde::{Deserialize, Serialize};

use super::lexicon::{Pos, Resources};
use super::tokenize::{Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceType {
    WhQuestion,
    YesnoQuestion,
    Declarative,
}

impl SentenceType {
    pub fn is_question(self) -> bool {
        !matches!(self, SentenceType::Declarative)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub sentence_type: SentenceType,
    pub has_negation: bool,
}

/// Groups tokens into sentences. A sentence ends after a run of `.`, `!`, `?` (or `…`),
/// and a blank line always starts a new one, as does the end of the text.
pub fn split_sentences(tokens: &[Token], res: &Resources) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        if token.paragraph_start && !current.is_empty() {
            sentences.push(build(std::mem::take(&mut current), res));
        }
        current.push(token.clone());
        let run_continues = tokens.get(i + 1).is_some_and(|n| n.is_terminator() && !n.paragraph_start);
        if token.is_terminator() && !run_continues {
            sentences.push(build(std::mem::take(&mut current), res));
        }
    }
    if !current.is_empty() {
        sentences.push(build(current, res));
    }
    sentences
}

fn build(tokens: Vec<Token>, res: &Resources) -> Sentence {
    let (sentence_type, has_negation) = classify_sentence(&tokens, res);
    Sentence {
        tokens,
        sentence_type,
        has_negation,
    }
}

/// Word-order sentence typing plus particle-based negation detection.
///
/// The first word token decides the type: a wh-particle makes a wh-question, a word the
/// lexicon knows as a verb makes a yes/no question, anything else (including words
/// missing from the lexicon) a declarative. Negation is any token in the negation list.
pub fn classify_sentence(tokens: &[Token], res: &Resources) -> (SentenceType, bool) {
    let has_negation = tokens
        .iter()
        .any(|t| t.kind == TokenKind::Word && res.negation_particles.contains(&t.normalized));
    let Some(first) = tokens.iter().find(|t| t.kind == TokenKind::Word) else {
        return (SentenceType::Declarative, has_negation);
    };
    let kind = if res.wh_particles.contains(&first.normalized) {
        SentenceType::WhQuestion
    } else if res
        .lexicon
        .lookup(&first.normalized)
        .is_some_and(|e| e.pos == Pos::Verb)
    {
        SentenceType::YesnoQuestion
    } else {
        SentenceType::Declarative
    };
    (kind, has_negation)
}
