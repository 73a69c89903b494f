use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Other,
}

impl Pos {
    pub fn is_content(self) -> bool {
        !matches!(self, Pos::Other)
    }
}

impl std::str::FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "noun" | "n" => Ok(Pos::Noun),
            "verb" | "v" => Ok(Pos::Verb),
            "adjective" | "adj" | "a" => Ok(Pos::Adjective),
            "other" | "o" => Ok(Pos::Other),
            other => Err(format!("unknown part of speech `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub key: String,
    pub stem: String,
    pub pos: Pos,
}

/// Surface-or-stem keyed lexicon; keys are matched case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, LexEntry>,
}

impl Lexicon {
    /// Parses `surface<TAB>stem<TAB>pos` lines. Blank lines and `#` comments are skipped;
    /// a repeated key keeps its last entry.
    pub fn parse_tsv(raw: &str) -> Result<Self, ResourceError> {
        let mut entries = HashMap::new();
        for (idx, line) in raw.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ResourceError::Lexicon {
                line: idx + 1,
                message,
            };
            let mut cols = line.split('\t');
            let (Some(key), Some(stem), Some(pos)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(err("expected three tab-separated columns".into()));
            };
            let key = normalize(key.trim());
            let stem = normalize(stem.trim());
            if key.is_empty() || stem.is_empty() {
                return Err(err("empty key or stem".into()));
            }
            let pos = pos.parse::<Pos>().map_err(err)?;
            entries.insert(key.clone(), LexEntry { key, stem, pos });
        }
        Ok(Self { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (&'static str, &'static str, Pos)>) -> Self {
        let entries = entries
            .into_iter()
            .map(|(k, s, pos)| {
                let key = normalize(k);
                (
                    key.clone(),
                    LexEntry {
                        key,
                        stem: normalize(s),
                        pos,
                    },
                )
            })
            .collect();
        Self { entries }
    }

    pub fn lookup(&self, word: &str) -> Option<&LexEntry> {
        match self.entries.get(word) {
            Some(e) => Some(e),
            None => self.entries.get(&normalize(word)),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lowercased, apostrophe-folded form used for every lookup.
pub fn normalize(word: &str) -> String {
    word.chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect()
}

/// A one-entry-per-line word list (`#` starts a comment line).
#[derive(Debug, Clone, Default)]
pub struct WordList {
    words: HashSet<String>,
    suffixes: Vec<String>,
}

impl WordList {
    pub fn parse(raw: &str) -> Self {
        let mut list = Self::default();
        for line in raw.lines() {
            let w = line.trim();
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            list.insert(w);
        }
        list
    }

    pub fn insert(&mut self, word: &str) {
        let w = normalize(word);
        // contracted particles such as "n't" also match as a word suffix
        if w.contains('\'') {
            self.suffixes.push(w.clone());
        }
        self.words.insert(w);
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.words.contains(normalized) || self.suffixes.iter().any(|s| normalized.ends_with(s.as_str()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl<'a> FromIterator<&'a str> for WordList {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut list = Self::default();
        for w in iter {
            list.insert(w);
        }
        list
    }
}

const BUILTIN_LEXICON: &str = include_str!("../../resources/lexicon.tsv");
const BUILTIN_STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
const BUILTIN_WH: &str = include_str!("../../resources/wh_particles.txt");
const BUILTIN_NEGATION: &str = include_str!("../../resources/negation_particles.txt");

/// Everything the pipeline reads: lexicon, stopwords and the two particle lists.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub stopwords: WordList,
    pub wh_particles: WordList,
    pub negation_particles: WordList,
}

impl Resources {
    /// The bundled German/English demonstration resources.
    pub fn builtin() -> Arc<Self> {
        static BUILTIN: std::sync::OnceLock<Arc<Resources>> = std::sync::OnceLock::new();
        BUILTIN
            .get_or_init(|| {
                Arc::new(Resources {
                    lexicon: Lexicon::parse_tsv(BUILTIN_LEXICON).expect("bundled lexicon parses"),
                    stopwords: WordList::parse(BUILTIN_STOPWORDS),
                    wh_particles: WordList::parse(BUILTIN_WH),
                    negation_particles: WordList::parse(BUILTIN_NEGATION),
                })
            })
            .clone()
    }

    /// Loads resources from a directory; each of `lexicon.tsv`, `stopwords.txt`,
    /// `wh_particles.txt`, `negation_particles.txt` that is present replaces the bundled one.
    pub fn load_dir(dir: &Path) -> Result<Self, ResourceError> {
        let read = |name: &str| -> Result<Option<String>, ResourceError> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(None);
            }
            fs::read_to_string(&path).map(Some).map_err(|source| ResourceError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let mut res = (*Self::builtin()).clone();
        if let Some(raw) = read("lexicon.tsv")? {
            res.lexicon = Lexicon::parse_tsv(&raw)?;
        }
        if let Some(raw) = read("stopwords.txt")? {
            res.stopwords = WordList::parse(&raw);
        }
        if let Some(raw) = read("wh_particles.txt")? {
            res.wh_particles = WordList::parse(&raw);
        }
        if let Some(raw) = read("negation_particles.txt")? {
            res.negation_particles = WordList::parse(&raw);
        }
        Ok(res)
    }
}
