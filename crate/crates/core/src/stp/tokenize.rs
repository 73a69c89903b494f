use serde::{Deserialize, Serialize};

use super::lexicon::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Number,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    /// `[start, end)` in characters, not bytes.
    pub span: (usize, usize),
    pub kind: TokenKind,
    /// A blank line separates this token from the previous one.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub paragraph_start: bool,
}

impl Token {
    pub fn is_terminator(&self) -> bool {
        self.kind == TokenKind::Punctuation && matches!(self.surface.as_str(), "." | "!" | "?" | "\u{2026}")
    }

    pub fn is_question_mark(&self) -> bool {
        self.kind == TokenKind::Punctuation && self.surface == "?"
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits text into word, number and single-character punctuation tokens.
///
/// Letters and digits form runs. A run continues across an apostrophe or hyphen that sits
/// between two alphanumerics (`don't`, `e-mail`) and, for all-digit runs, across a `.` or `,`
/// between digits (`4.0`). Every other non-space character becomes its own punctuation token,
/// so `??` yields two tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut newlines = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            if c == '\n' {
                newlines += 1;
            }
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_alphanumeric() {
            let mut digits_only = c.is_numeric();
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                if c.is_alphanumeric() {
                    digits_only &= c.is_numeric();
                    i += 1;
                    continue;
                }
                let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
                let prev = chars[i - 1];
                let joins_word = (is_apostrophe(c) || c == '-') && prev.is_alphanumeric() && next_alnum;
                let joins_number = digits_only
                    && matches!(c, '.' | ',')
                    && prev.is_numeric()
                    && chars.get(i + 1).is_some_and(|n| n.is_numeric());
                if joins_number {
                    i += 1;
                } else if joins_word {
                    digits_only = false;
                    i += 1;
                } else {
                    break;
                }
            }
            if digits_only {
                TokenKind::Number
            } else {
                TokenKind::Word
            }
        } else {
            i += 1;
            TokenKind::Punctuation
        };
        let surface: String = chars[start..i].iter().collect();
        tokens.push(Token {
            normalized: normalize(&surface),
            surface,
            span: (start, i),
            kind,
            paragraph_start: newlines >= 2 && !tokens.is_empty(),
        });
        newlines = 0;
    }
    tokens
}
