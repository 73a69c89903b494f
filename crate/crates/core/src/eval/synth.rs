//! Seeded synthetic mail corpora for desk-scale evaluation.
//!
//! Each category owns a set of exclusive keywords and shares a set of cluster keywords
//! with a handful of neighbouring categories. Mails are a greeting, context sentences,
//! problem sentences (negations and questions) and a closing, in German or English. A
//! configurable share of the keywords lands in the problem sentences, the rest in context
//! sentences. Noise: misspelt keywords, dropped terminators, repeated question marks and
//! shared jargon.

use std::collections::BTreeSet;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Category, CategoryRegistry, CorpusStore, Document};
use crate::stp::Resources;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("unknown preset `{0}` (expected paper-shape or small)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Documents per learnable category, in category order.
    pub learnable_sizes: Vec<usize>,
    /// Documents per category below the learnability threshold.
    pub small_sizes: Vec<usize>,
    pub exclusive_keywords: usize,
    pub cluster_size: usize,
    pub cluster_keywords: usize,
    /// Keywords per mail, inclusive range.
    pub keywords_per_doc: (usize, usize),
    /// Chance that a keyword comes from the category's own exclusive set; else cluster,
    /// except for `confuser_rate` of keywords that come from another category.
    pub exclusive_rate: f64,
    pub confuser_rate: f64,
    /// Share of keywords placed in question or negation sentences.
    pub heuristic_share: f64,
    pub misspelling_rate: f64,
    pub missing_terminator_rate: f64,
    pub jargon_rate: f64,
    pub german_rate: f64,
    /// Keyword-free context sentences per mail, inclusive range.
    pub plain_sentences: (usize, usize),
}

fn paper_shape_sizes() -> Vec<usize> {
    // 47 categories, at least 30 each, 4490 in total, long-tailed
    let n = 47;
    let extra_total = 4490 - 30 * n;
    let raw: Vec<f64> = (0..n).map(|i| 1.0 / ((i + 1) as f64).powf(0.8)).collect();
    let sum: f64 = raw.iter().sum();
    let mut sizes: Vec<usize> = raw.iter().map(|r| 30 + (extra_total as f64 * r / sum) as usize).collect();
    let mut i = 0;
    while sizes.iter().sum::<usize>() < 4490 {
        sizes[i] += 1;
        i += 1;
    }
    sizes
}

impl SynthParams {
    pub fn preset(name: &str) -> Result<Self, SynthError> {
        match name {
            "paper-shape" => Ok(Self {
                learnable_sizes: paper_shape_sizes(),
                small_sizes: [vec![11; 17], vec![10; 10]].concat(),
                exclusive_keywords: 24,
                cluster_size: 5,
                cluster_keywords: 30,
                keywords_per_doc: (3, 5),
                exclusive_rate: 0.45,
                confuser_rate: 0.12,
                heuristic_share: 0.75,
                misspelling_rate: 0.05,
                missing_terminator_rate: 0.12,
                jargon_rate: 0.5,
                german_rate: 0.6,
                plain_sentences: (1, 2),
            }),
            "small" => Ok(Self {
                learnable_sizes: vec![40, 36, 34, 32, 30],
                small_sizes: vec![6, 4],
                exclusive_keywords: 12,
                cluster_size: 3,
                cluster_keywords: 10,
                ..Self::preset("paper-shape")?
            }),
            other => Err(SynthError::UnknownPreset(other.to_string())),
        }
    }

    pub fn n_categories(&self) -> usize {
        self.learnable_sizes.len() + self.small_sizes.len()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub categories: Vec<Category>,
    pub documents: Vec<Document>,
}

impl SynthCorpus {
    pub fn registry(&self) -> CategoryRegistry {
        CategoryRegistry::from_categories(self.categories.iter().cloned()).expect("generated categories are valid")
    }

    pub fn store(&self) -> CorpusStore {
        let mut store = CorpusStore::in_memory(self.registry());
        let report = store
            .insert_all(self.documents.iter().cloned().enumerate().map(|(i, d)| (i + 1, d)))
            .expect("in-memory insert");
        debug_assert!(report.errors.is_empty());
        store
    }

    pub fn categories_jsonl(&self) -> String {
        jsonl(&self.categories)
    }

    pub fn documents_jsonl(&self) -> String {
        jsonl(&self.documents)
    }
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("rows serialize"));
        out.push('\n');
    }
    out
}

pub fn synth_corpus(preset: &str, seed: u64) -> Result<SynthCorpus, SynthError> {
    Ok(SynthParams::preset(preset)?.generate(seed))
}

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()
}

const ONSETS: [&str; 24] = [
    "b", "br", "d", "dr", "f", "fl", "g", "gr", "k", "kl", "l", "m", "n", "p", "pr", "r", "s", "st", "t", "tr",
    "v", "w", "z", "sch",
];
const VOWELS: [&str; 8] = ["a", "e", "i", "o", "u", "au", "ei", "ie"];
const CODAS: [&str; 10] = ["", "", "n", "r", "l", "s", "t", "m", "ck", "nd"];

const JARGON: [&str; 24] = [
    "browser", "cookie", "login", "webseite", "update", "server", "download", "online", "provider", "cd-rom",
    "win98", "homepage", "icon", "desktop", "upgrade", "chatroom", "newsletter", "plugin", "winsock", "dfü",
    "isdn", "firewall", "popup", "outbox",
];

const NAMES: [&str; 16] = [
    "anna", "bernd", "claudia", "dieter", "eva", "frank", "gabi", "hans", "ingrid", "jürgen", "karin", "lothar",
    "mary", "peter", "susan", "tom",
];

/// Fixed seed for the vocabulary so category keywords are stable across corpus seeds.
const VOCAB_SEED: u64 = 0x6d61_696c_7472_6961;

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for i in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
        if i + 1 == syllables || rng.gen_bool(0.3) {
            w.push_str(CODAS.choose(rng).unwrap());
        }
    }
    w
}

struct Vocabulary {
    exclusive: Vec<Vec<String>>,
    cluster: Vec<Vec<String>>,
}

fn vocabulary(p: &SynthParams, res: &Resources) -> Vocabulary {
    let mut rng = ChaCha8Rng::seed_from_u64(VOCAB_SEED);
    let mut seen: BTreeSet<String> = JARGON.iter().chain(NAMES.iter()).map(|s| s.to_string()).collect();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let w = pseudo_word(rng);
        if w.chars().count() >= 5
            && res.lexicon.lookup(&w).is_none()
            && !res.stopwords.contains(&w)
            && seen.insert(w.clone())
        {
            return w;
        }
    };
    let n = p.n_categories();
    let n_clusters = n.div_ceil(p.cluster_size);
    let cluster = (0..n_clusters)
        .map(|_| (0..p.cluster_keywords).map(|_| fresh(&mut rng)).collect())
        .collect();
    let exclusive = (0..n)
        .map(|_| (0..p.exclusive_keywords).map(|_| fresh(&mut rng)).collect())
        .collect();
    Vocabulary { exclusive, cluster }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn misspell(w: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = w.chars().collect();
    if chars.len() < 3 {
        return w.to_string();
    }
    let i = rng.gen_range(1..chars.len() - 1);
    match rng.gen_range(0..3) {
        0 => {
            chars.remove(i);
        }
        1 => chars.insert(i, chars[i]),
        _ => chars.swap(i, i + 1),
    }
    chars.into_iter().collect()
}

/// Zipf-ish pick: low indices are much more frequent.
fn pick<'a>(words: &'a [String], rng: &mut ChaCha8Rng) -> &'a str {
    let u: f64 = rng.gen();
    let i = ((words.len() as f64).powf(u) - 1.0) as usize;
    &words[i.min(words.len() - 1)]
}

struct Lang {
    greetings: &'static [&'static str],
    context: &'static [&'static str],
    plain: &'static [&'static str],
    negation: &'static [&'static str],
    question: &'static [&'static str],
    closings: &'static [&'static str],
}

// `{k}` keyword slot, `{j}` jargon slot, `{n}` version number
const GERMAN: Lang = Lang {
    greetings: &["Hallo liebes Team,", "Sehr geehrte Damen und Herren,", "Hallo,", "Liebe Kundenbetreuung,"],
    context: &[
        "Ich habe seit einer Woche ein Problem mit {k} auf meinem Computer.",
        "Ich benutze {k} schon lange zusammen mit der Software Version {n}.",
        "Gestern habe ich {k} geladen und danach das Programm gestartet.",
        "Bei mir ist {k} auf dem Rechner installiert und lief bisher gut.",
        "Mein Bekannter hat mir {k} empfohlen, deshalb habe ich es versucht.",
    ],
    plain: &[
        "Ich habe das Programm Version {n} mit {j} auf meinem Computer.",
        "Das System meldet seit Tagen immer wieder einen Fehler beim {j}.",
        "Ich habe es schon mehrmals mit {j} versucht.",
        "Meine E-Mail Adresse und mein Passwort sind richtig eingegeben.",
        "Es ist wirklich dringend, weil ich den Zugang jeden Tag brauche.",
    ],
    negation: &[
        "Leider funktioniert {k} seit gestern nicht mehr richtig.",
        "Ich kann {k} nicht mehr öffnen, es kommt immer eine Meldung.",
        "Es gibt keine Verbindung zu {k} über mein Modem.",
        "Ich bekomme {k} nie richtig angezeigt, egal was ich mache.",
        "Das {k} startet nicht, obwohl alles installiert ist.",
    ],
    question: &[
        "Wie kann ich {k} wieder richtig installieren?",
        "Warum zeigt mir das Programm bei {k} immer einen Fehler?",
        "Was muss ich tun, damit {k} wieder geht?",
        "Kann ich {k} auch mit meinem alten Computer benutzen?",
        "Wo finde ich die Einstellungen für {k}?",
        "Wann bekomme ich endlich {k} zurück?",
    ],
    closings: &["Vielen Dank im voraus.", "Mit freundlichen Grüßen", "Danke für Ihre Hilfe.", "Grüße"],
};

const ENGLISH: Lang = Lang {
    greetings: &["Dear sir or madam,", "Hello,", "Hi team,", "Dear customer service,"],
    context: &[
        "I have had a problem with {k} on my computer for a week.",
        "I have been using {k} for a long time with version {n} of the software.",
        "Yesterday I downloaded {k} and then started the program.",
        "On my machine {k} is installed and it worked fine until now.",
        "A friend recommended {k} to me so I gave it a try.",
    ],
    plain: &[
        "I run the program version {n} together with {j} on my computer.",
        "For days the system keeps showing an error during {j}.",
        "I already tried it several times with {j}.",
        "My email address and my password are typed in correctly.",
        "This is really urgent because I need the access every day.",
    ],
    negation: &[
        "Unfortunately {k} does not work properly since yesterday.",
        "I cannot open {k} anymore, there is always a message.",
        "There is no connection to {k} through my modem.",
        "I never get {k} displayed correctly, whatever I do.",
        "The {k} does not start although everything is installed.",
    ],
    question: &[
        "How can I install {k} again properly?",
        "Why does the program always show an error with {k}?",
        "What do I have to do to get {k} working again?",
        "Can I use {k} with my old computer as well?",
        "Where do I find the settings for {k}?",
        "When will I finally get {k} back?",
    ],
    closings: &["Thanks in advance.", "Best regards", "Thank you for your help.", "Regards"],
};

struct DocGen<'a> {
    p: &'a SynthParams,
    vocab: &'a Vocabulary,
    rng: ChaCha8Rng,
}

impl DocGen<'_> {
    fn keyword(&mut self, cat: usize) -> String {
        let n = self.vocab.exclusive.len();
        let r: f64 = self.rng.gen();
        let w = if r < self.p.confuser_rate {
            let mut other = self.rng.gen_range(0..n - 1);
            if other >= cat {
                other += 1;
            }
            pick(&self.vocab.exclusive[other], &mut self.rng).to_string()
        } else if r < self.p.confuser_rate + self.p.exclusive_rate {
            pick(&self.vocab.exclusive[cat], &mut self.rng).to_string()
        } else {
            pick(&self.vocab.cluster[cat / self.p.cluster_size], &mut self.rng).to_string()
        };
        if self.rng.gen_bool(self.p.misspelling_rate) {
            misspell(&w, &mut self.rng)
        } else {
            w
        }
    }

    fn fill(&mut self, template: &str, keyword: Option<&str>, german: bool) -> String {
        let mut s = template.to_string();
        if let Some(k) = keyword {
            let k = if german && self.rng.gen_bool(0.5) { capitalize(k) } else { k.to_string() };
            s = s.replace("{k}", &k);
        }
        let j = if self.rng.gen_bool(self.p.jargon_rate) {
            JARGON.choose(&mut self.rng).unwrap().to_string()
        } else if german {
            "dem Internet".to_string()
        } else {
            "the internet".to_string()
        };
        let n = format!("{}.{}", self.rng.gen_range(1..6), self.rng.gen_range(0..10));
        s = s.replace("{j}", &j).replace("{n}", &n);
        if self.rng.gen_bool(self.p.missing_terminator_rate) && s.ends_with(['.', '?']) {
            s.pop();
        } else if s.ends_with('?') && self.rng.gen_bool(0.08) {
            s.push_str(&"?".repeat(self.rng.gen_range(2..14)));
        }
        s
    }

    fn text(&mut self, cat: usize) -> String {
        let german = self.rng.gen_bool(self.p.german_rate);
        let lang = if german { &GERMAN } else { &ENGLISH };
        let (lo, hi) = self.p.keywords_per_doc;
        let n_kw = self.rng.gen_range(lo..=hi);
        let mut heuristic = Vec::new();
        let mut context = Vec::new();
        for _ in 0..n_kw {
            let k = self.keyword(cat);
            if self.rng.gen_bool(self.p.heuristic_share) {
                heuristic.push(k);
            } else {
                context.push(k);
            }
        }
        if heuristic.is_empty() && context.is_empty() {
            heuristic.push(self.keyword(cat));
        }

        let mut body: Vec<String> = Vec::new();
        for k in &context {
            let t = *lang.context.choose(&mut self.rng).unwrap();
            body.push(self.fill(t, Some(k), german));
        }
        let (plo, phi) = self.p.plain_sentences;
        for _ in 0..self.rng.gen_range(plo..=phi) {
            let t = *lang.plain.choose(&mut self.rng).unwrap();
            body.push(self.fill(t, None, german));
        }
        body.shuffle(&mut self.rng);

        let mut problem: Vec<String> = Vec::new();
        for (i, k) in heuristic.iter().enumerate() {
            let pool = if i % 2 == 0 { lang.negation } else { lang.question };
            let t = *pool.choose(&mut self.rng).unwrap();
            problem.push(self.fill(t, Some(k), german));
        }

        let mut parts = vec![lang.greetings.choose(&mut self.rng).unwrap().to_string()];
        parts.extend(body);
        parts.extend(problem);
        parts.push(lang.closings.choose(&mut self.rng).unwrap().to_string());
        parts.push(capitalize(NAMES.choose(&mut self.rng).unwrap()));
        parts.join(" ")
    }
}

impl SynthParams {
    pub fn generate(&self, seed: u64) -> SynthCorpus {
        let res = Resources::builtin();
        let vocab = vocabulary(self, &res);
        let n_learnable = self.learnable_sizes.len();
        let categories: Vec<Category> = (0..self.n_categories())
            .map(|c| {
                let name = format!("{} / {}", capitalize(&vocab.exclusive[c][0]), capitalize(&vocab.exclusive[c][1]));
                Category {
                    id: format!("cat-{c:02}"),
                    answer_template: format!(
                        "Vielen Dank für Ihre Anfrage zum Thema {name}. Bitte gehen Sie wie folgt vor: ..."
                    ),
                    name,
                    active: true,
                }
            })
            .collect();
        let mut gen = DocGen {
            p: self,
            vocab: &vocab,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let sizes = self.learnable_sizes.iter().chain(&self.small_sizes);
        let mut order: Vec<usize> = sizes.enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        order.shuffle(&mut gen.rng);
        let n_senders = (order.len() / 3).max(1);
        let documents = order
            .into_iter()
            .enumerate()
            .map(|(i, cat)| {
                let sender = format!("customer{:04}@example.org", gen.rng.gen_range(0..n_senders));
                let text = gen.text(cat);
                Document::new(format!("d{:06}", i + 1), sender, epoch(), text, Some(categories[cat].id.clone()))
            })
            .collect();
        debug_assert!(n_learnable <= categories.len());
        SynthCorpus { categories, documents }
    }
}
