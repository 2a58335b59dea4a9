//! Token-stream preprocessing for code and queries.
//!
//! Four optional transforms are applied after base tokenization, always in
//! the order split-case, stopwords, word segmentation, lemmatization:
//!
//! | flag  | transform                                   |
//! |-------|---------------------------------------------|
//! | `sps` | split PascalCase / camelCase / snake_case    |
//! | `ds`  | delete English stopwords                     |
//! | `rs`  | segment run-together words (`showtraceback`) |
//! | `pos` | reduce plural nouns to their singular        |
//!
//! All output tokens match `[a-z0-9]+`. Non-ASCII characters act as
//! separators.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOPWORDS: &str = include_str!("../data/stopwords.txt");
const LEXICON: &str = include_str!("../data/lexicon.tsv");
const IRREGULARS: &str = include_str!("../data/irregulars.tsv");

/// Which preprocessing transforms are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PrepConfig {
    pub sps: bool,
    pub ds: bool,
    pub rs: bool,
    pub pos: bool,
}

impl PrepConfig {
    pub const NONE: PrepConfig = PrepConfig {
        sps: false,
        ds: false,
        rs: false,
        pos: false,
    };

    pub const ALL: PrepConfig = PrepConfig {
        sps: true,
        ds: true,
        rs: true,
        pos: true,
    };

    /// All 16 flag combinations, `NONE` first.
    pub fn all_combinations() -> impl Iterator<Item = PrepConfig> {
        (0u8..16).map(|bits| PrepConfig {
            sps: bits & 1 != 0,
            ds: bits & 2 != 0,
            rs: bits & 4 != 0,
            pos: bits & 8 != 0,
        })
    }
}

impl fmt::Display for PrepConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.sps, "sps"),
            (self.ds, "ds"),
            (self.rs, "rs"),
            (self.pos, "pos"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

impl FromStr for PrepConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "none" | "" => return Ok(PrepConfig::NONE),
            "all" => return Ok(PrepConfig::ALL),
            _ => {}
        }
        let mut cfg = PrepConfig::NONE;
        for part in s.split(',') {
            match part.trim().to_ascii_lowercase().as_str() {
                "sps" => cfg.sps = true,
                "ds" => cfg.ds = true,
                "rs" => cfg.rs = true,
                "pos" => cfg.pos = true,
                other => {
                    return Err(Error::Unknown {
                        what: "preprocessing step",
                        name: other.to_string(),
                        expected: "sps, ds, rs, pos, all, none".into(),
                    })
                }
            }
        }
        Ok(cfg)
    }
}

/// Ordered lowercase tokens; never contains empty tokens or whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl From<Vec<String>> for TokenStream {
    fn from(tokens: Vec<String>) -> Self {
        TokenStream(tokens.into_iter().filter(|t| !t.is_empty()).collect())
    }
}

impl<'a> FromIterator<&'a str> for TokenStream {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        TokenStream(
            iter.into_iter()
                .filter(|t| !t.is_empty())
                .map(str::to_owned)
                .collect(),
        )
    }
}

impl<'a> IntoIterator for &'a TokenStream {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

struct Resources {
    stopwords: HashSet<&'static str>,
    lexicon: HashMap<&'static str, u64>,
    irregulars: HashMap<&'static str, &'static str>,
    longest_word: usize,
}

fn resources() -> &'static Resources {
    static RES: OnceLock<Resources> = OnceLock::new();
    RES.get_or_init(|| {
        let stopwords = STOPWORDS.lines().filter(|l| !l.is_empty()).collect();
        let lexicon: HashMap<_, _> = LEXICON
            .lines()
            .filter_map(|l| {
                let (word, freq) = l.split_once('\t')?;
                Some((word, freq.parse().unwrap_or(1)))
            })
            .collect();
        let irregulars = IRREGULARS
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .collect();
        let longest_word = lexicon.keys().map(|w| w.len()).max().unwrap_or(0);
        Resources {
            stopwords,
            lexicon,
            irregulars,
            longest_word,
        }
    })
}

/// True if `word` is in the bundled stopword list.
pub fn is_stopword(word: &str) -> bool {
    resources().stopwords.contains(word)
}

/// Frequency of `word` in the bundled lexicon, if listed.
pub fn lexicon_frequency(word: &str) -> Option<u64> {
    resources().lexicon.get(word).copied()
}

/// Number of entries in the bundled stopword list.
pub fn stopword_count() -> usize {
    resources().stopwords.len()
}

// Maximal runs of ASCII alphanumerics and underscores, case preserved.
fn raw_words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// Splits on every non-alphanumeric character and lowercases.
pub fn tokenize_base(text: &str) -> TokenStream {
    TokenStream(
        raw_words(text)
            .flat_map(|w| w.split('_'))
            .filter(|w| !w.is_empty())
            .map(str::to_ascii_lowercase)
            .collect(),
    )
}

/// Splits identifiers at underscores and case boundaries, then lowercases.
///
/// A lowercase letter or digit followed by an uppercase letter starts a new
/// word. Inside a run of capitals, the last capital before a lowercase
/// letter starts a new word, so `HTTPServer` becomes `http`, `server`.
/// Input tokens may carry case; already-lowercase input passes through.
pub fn split_pascal_snake<S: AsRef<str>>(tokens: &[S]) -> TokenStream {
    let mut out = Vec::new();
    for token in tokens {
        for part in token.as_ref().split('_') {
            split_case(part, &mut out);
        }
    }
    TokenStream(out)
}

fn split_case(word: &str, out: &mut Vec<String>) {
    let bytes = word.as_bytes();
    let mut start = 0;
    for i in 1..bytes.len() {
        let prev = bytes[i - 1];
        let cur = bytes[i];
        let boundary = if cur.is_ascii_uppercase() {
            prev.is_ascii_lowercase() || prev.is_ascii_digit()
        } else if cur.is_ascii_lowercase() {
            prev.is_ascii_uppercase() && i >= 2 && bytes[i - 2].is_ascii_uppercase()
        } else {
            false
        };
        if boundary {
            let cut = if cur.is_ascii_lowercase() { i - 1 } else { i };
            if cut > start {
                out.push(word[start..cut].to_ascii_lowercase());
                start = cut;
            }
        }
    }
    if start < word.len() {
        out.push(word[start..].to_ascii_lowercase());
    }
}

/// Drops tokens found in the bundled stopword list.
pub fn remove_stopwords(ts: TokenStream) -> TokenStream {
    TokenStream(ts.0.into_iter().filter(|t| !is_stopword(t)).collect())
}

/// Segments run-together words into lexicon words.
///
/// Segmentation prefers the longest lexicon word at each position and
/// backtracks when the remainder cannot be covered. Tokens that are already
/// lexicon words (or a lexicon word plus a common inflection), contain
/// digits, or admit no full segmentation pass through unchanged.
pub fn ronin_split(ts: TokenStream) -> TokenStream {
    let mut out = Vec::with_capacity(ts.len());
    for token in ts.0 {
        match segment(&token) {
            Some(parts) => out.extend(parts.into_iter().map(str::to_owned)),
            None => out.push(token),
        }
    }
    TokenStream(out)
}

const MIN_SEGMENT: usize = 2;
const INFLECTIONS: [&str; 7] = ["s", "es", "ed", "ing", "er", "ers", "ly"];

fn is_known_word(token: &str) -> bool {
    let lex = &resources().lexicon;
    if lex.contains_key(token) {
        return true;
    }
    INFLECTIONS.iter().any(|suffix| {
        token.strip_suffix(suffix).is_some_and(|stem| {
            stem.len() >= 3
                && (lex.contains_key(stem)
                    || (matches!(*suffix, "ed" | "ing" | "er" | "ers")
                        && lex.contains_key(format!("{stem}e").as_str())))
        })
    })
}

fn segment(token: &str) -> Option<Vec<&str>> {
    if token.len() < 2 * MIN_SEGMENT
        || !token.bytes().all(|b| b.is_ascii_lowercase())
        || is_known_word(token)
    {
        return None;
    }
    let mut dead = vec![false; token.len() + 1];
    let mut parts = Vec::new();
    if cover(token, 0, &mut dead, &mut parts) && parts.len() > 1 {
        Some(parts)
    } else {
        None
    }
}

fn cover<'a>(token: &'a str, pos: usize, dead: &mut [bool], parts: &mut Vec<&'a str>) -> bool {
    if pos == token.len() {
        return true;
    }
    if dead[pos] {
        return false;
    }
    let res = resources();
    let longest = res.longest_word.min(token.len() - pos);
    for len in (MIN_SEGMENT..=longest).rev() {
        let word = &token[pos..pos + len];
        if res.lexicon.contains_key(word) {
            parts.push(word);
            if cover(token, pos + len, dead, parts) {
                return true;
            }
            parts.pop();
        }
    }
    dead[pos] = true;
    false
}

/// Reduces plural nouns to singular form.
pub fn lemmatize(ts: TokenStream) -> TokenStream {
    TokenStream(ts.0.iter().map(|t| lemmatize_word(t)).collect())
}

/// Singular form of one token.
///
/// The irregulars table is consulted first and is final; it also lists
/// invariant words such as `series` that must never be stripped. Otherwise
/// suffix rules are applied until none fires: `-ies` to `-y`, `-es` to the
/// base when the base ends in s/x/z/ch/sh, and `-s` to the base. A candidate
/// that is a lexicon word wins over one that is not. Results shorter than
/// three characters or equal to a stopword are rejected, and words ending in
/// `ss`, `us` or `is` are left alone.
pub fn lemmatize_word(word: &str) -> String {
    let res = resources();
    let mut current = word.to_string();
    loop {
        if let Some(singular) = res.irregulars.get(current.as_str()) {
            return (*singular).to_string();
        }
        match singular_candidate(&current) {
            Some(next) => current = next,
            None => return current,
        }
    }
}

fn singular_candidate(word: &str) -> Option<String> {
    if word.len() < 3 || word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return None;
    }
    let mut candidates = Vec::with_capacity(3);
    if word.len() >= 5 {
        if let Some(stem) = word.strip_suffix("ies") {
            candidates.push(format!("{stem}y"));
        }
    }
    if let Some(base) = word.strip_suffix("es") {
        if ["s", "x", "z", "ch", "sh"].iter().any(|e| base.ends_with(e)) {
            candidates.push(base.to_string());
        }
    }
    if let Some(base) = word.strip_suffix('s') {
        candidates.push(base.to_string());
    }
    let res = resources();
    candidates.retain(|c| c.len() >= 3 && !res.stopwords.contains(c.as_str()));
    let preferred = candidates
        .iter()
        .position(|c| res.lexicon.contains_key(c.as_str()) || res.irregulars.contains_key(c.as_str()))
        .unwrap_or(0);
    candidates.into_iter().nth(preferred)
}

/// Full pipeline: base tokenization then the enabled transforms in fixed order.
pub fn preprocess(text: &str, cfg: PrepConfig) -> TokenStream {
    let mut ts = if cfg.sps {
        let raw: Vec<&str> = raw_words(text).collect();
        split_pascal_snake(&raw)
    } else {
        tokenize_base(text)
    };
    if cfg.ds {
        ts = remove_stopwords(ts);
    }
    if cfg.rs {
        ts = ronin_split(ts);
    }
    if cfg.pos {
        ts = lemmatize(ts);
    }
    ts
}
