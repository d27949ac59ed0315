//! Tokenization, vocabularies and integer encoding of plots.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "UNK";
pub const EOS: &str = "EOS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Split on runs of Unicode whitespace.
    Whitespace,
    /// Whitespace split, then separate word-character runs from punctuation runs.
    Wordpunct,
}

impl std::str::FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizerMode::Whitespace),
            "wordpunct" => Ok(TokenizerMode::Wordpunct),
            _ => Err(Error::validation(format!("unknown tokenizer mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub mode: TokenizerMode,
    pub casefold: bool,
    #[serde(default)]
    pub stopwords: BTreeSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            mode: TokenizerMode::Whitespace,
            casefold: true,
            stopwords: BTreeSet::new(),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl Tokenizer {
    pub fn new(mode: TokenizerMode, casefold: bool) -> Self {
        Tokenizer {
            mode,
            casefold,
            stopwords: BTreeSet::new(),
        }
    }

    pub fn with_stopwords(mut self, stopwords: impl IntoIterator<Item = String>) -> Self {
        self.stopwords = stopwords.into_iter().collect();
        self
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let text = if self.casefold {
            text.to_lowercase()
        } else {
            text.to_owned()
        };
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            match self.mode {
                TokenizerMode::Whitespace => out.push(chunk.to_owned()),
                TokenizerMode::Wordpunct => {
                    let mut start = 0;
                    let mut prev: Option<bool> = None;
                    for (i, c) in chunk.char_indices() {
                        let word = is_word_char(c);
                        if prev.is_some_and(|p| p != word) {
                            out.push(chunk[start..i].to_owned());
                            start = i;
                        }
                        prev = Some(word);
                    }
                    out.push(chunk[start..].to_owned());
                }
            }
        }
        if !self.stopwords.is_empty() {
            out.retain(|t| !self.stopwords.contains(t));
        }
        out
    }
}

/// Reads a stopword file: one token per line, `#` starts a comment.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn bow_counts<S: AsRef<str>>(tokens: &[S]) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_ref().to_owned()).or_insert(0) += 1;
    }
    counts
}

/// Token ↔ id mapping. Regular tokens take ids `0..V-2` by descending
/// frequency; `UNK` and `EOS` are always the last two ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
    min_count: u32,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    min_count: u32,
    unk_id: u32,
    eos_id: u32,
}

impl Vocabulary {
    pub fn fit<I, T, S>(token_lists: I, min_count: u32, max_size: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[S]>,
        S: AsRef<str>,
    {
        if min_count < 1 {
            return Err(Error::validation("min_count must be at least 1"));
        }
        if max_size < 2 {
            return Err(Error::validation(
                "max_size must leave room for UNK and EOS",
            ));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for list in token_lists {
            for t in list.as_ref() {
                *counts.entry(t.as_ref().to_owned()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= u64::from(min_count))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(max_size - 2);
        let regular = kept.into_iter().map(|(t, _)| t).collect();
        Ok(Self::from_regular(regular, min_count))
    }

    fn from_regular(mut tokens: Vec<String>, min_count: u32) -> Vocabulary {
        let id_of = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        tokens.push(UNK.to_owned());
        tokens.push(EOS.to_owned());
        Vocabulary {
            tokens,
            id_of,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unk_id(&self) -> u32 {
        (self.tokens.len() - 2) as u32
    }

    pub fn eos_id(&self) -> u32 {
        (self.tokens.len() - 1) as u32
    }

    pub fn min_count(&self) -> u32 {
        self.min_count
    }

    /// All tokens in id order, specials last.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> TokenIds {
        let unk = self.unk_id();
        let mut ids: Vec<u32> = tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(unk))
            .collect();
        ids.push(self.eos_id());
        TokenIds { ids }
    }

    /// Maps ids back to tokens, dropping a trailing `EOS`.
    pub fn decode(&self, ids: &TokenIds) -> Vec<String> {
        let mut slice = ids.ids.as_slice();
        if let [head @ .., last] = slice {
            if *last == self.eos_id() {
                slice = head;
            }
        }
        slice
            .iter()
            .map(|&i| self.token(i).unwrap_or(UNK).to_owned())
            .collect()
    }

    /// Fraction of tokens that would encode to `UNK`.
    pub fn unk_rate<I, T, S>(&self, token_lists: I) -> f64
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[S]>,
        S: AsRef<str>,
    {
        let (mut total, mut unk) = (0usize, 0usize);
        for list in token_lists {
            for t in list.as_ref() {
                total += 1;
                if self.id(t.as_ref()).is_none() {
                    unk += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            unk as f64 / total as f64
        }
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            tokens: self.tokens.clone(),
            min_count: self.min_count,
            unk_id: self.unk_id(),
            eos_id: self.eos_id(),
        };
        serde_json::to_string(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Vocabulary> {
        let file: VocabFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("vocabulary: {e}")))?;
        let n = file.tokens.len();
        if n < 2 || file.unk_id as usize != n - 2 || file.eos_id as usize != n - 1 {
            return Err(Error::Format(
                "vocabulary specials must be the last two ids".into(),
            ));
        }
        let mut tokens = file.tokens;
        tokens.truncate(n - 2);
        let vocab = Self::from_regular(tokens, file.min_count);
        if vocab.id_of.len() != n - 2 {
            return Err(Error::Format("vocabulary has duplicate tokens".into()));
        }
        Ok(vocab)
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VocabFile {
            tokens: self.tokens.clone(),
            min_count: self.min_count,
            unk_id: self.unk_id(),
            eos_id: self.eos_id(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        Vocabulary::from_json(&value.to_string()).map_err(serde::de::Error::custom)
    }
}

/// Encoded plot, normally terminated by `EOS`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenIds {
    pub ids: Vec<u32>,
}

impl TokenIds {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn terminated(&self, vocab: &Vocabulary) -> bool {
        self.ids.last() == Some(&vocab.eos_id())
    }
}
