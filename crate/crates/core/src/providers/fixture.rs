//! Deterministic offline providers.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{Completer, Embedder, EmbeddingVector, LikelihoodScorer, Prompt};
use crate::{Error, Result};

/// Replays recorded completions keyed by [`Prompt::hash`].
#[derive(Debug, Clone, Default)]
pub struct FixtureCompleter {
    recorded: BTreeMap<String, String>,
}

impl FixtureCompleter {
    pub fn new(recorded: BTreeMap<String, String>) -> Self {
        FixtureCompleter { recorded }
    }

    /// Loads a JSON object mapping prompt hash to completion text.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let recorded = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Ok(FixtureCompleter { recorded })
    }

    pub fn record(&mut self, prompt: &Prompt, completion: impl Into<String>) {
        self.recorded.insert(prompt.hash(), completion.into());
    }

    pub fn recorded(&self) -> &BTreeMap<String, String> {
        &self.recorded
    }
}

impl Completer for FixtureCompleter {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let hash = prompt.hash();
        self.recorded.get(&hash).cloned().ok_or(Error::MissingFixture { hash })
    }
}

pub const TRIGRAM_BUCKETS: usize = 256;

/// Character-trigram hashing embedder.
///
/// Text is lowercased, punctuation removed and whitespace collapsed; each
/// window of three characters is hashed (FNV-1a, 32 bit) into one of
/// [`TRIGRAM_BUCKETS`] buckets and the counts are L2-normalized. Strings
/// shorter than three characters contribute themselves as a single gram.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

impl TrigramEmbedder {
    pub fn normalize(sentence: &str) -> String {
        let mut out = String::with_capacity(sentence.len());
        for word in sentence
            .chars()
            .flat_map(char::to_lowercase)
            .filter(|c| c.is_alphanumeric() || c.is_whitespace())
            .collect::<String>()
            .split_whitespace()
        {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        out
    }

    pub fn bucket(gram: &str) -> usize {
        (fnv1a32(gram.as_bytes()) as usize) % TRIGRAM_BUCKETS
    }
}

fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in bytes {
        hash ^= u32::from(b);
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

impl Embedder for TrigramEmbedder {
    fn embed(&self, sentence: &str) -> Result<EmbeddingVector> {
        let text = Self::normalize(sentence);
        if text.is_empty() {
            return Err(Error::invalid(format!("cannot embed {sentence:?}: no content")));
        }
        let chars: Vec<char> = text.chars().collect();
        let mut counts = vec![0.0; TRIGRAM_BUCKETS];
        if chars.len() < 3 {
            counts[Self::bucket(&text)] += 1.0;
        } else {
            for w in chars.windows(3) {
                let gram: String = w.iter().collect();
                counts[Self::bucket(&gram)] += 1.0;
            }
        }
        EmbeddingVector::normalized(counts)
    }
}

const BOS: &str = "<s>";
const UNK: &str = "<unk>";

/// Token-bigram language model with add-one smoothing.
///
/// `P(w | v) = (count(v, w) + 1) / (count(v, ·) + V)` where `V` counts the
/// corpus vocabulary plus `<unk>`. The context for the first continuation
/// token is the last prompt token (or `<s>` for a token-free prompt).
#[derive(Debug, Clone)]
pub struct BigramScorer {
    bigrams: HashMap<(String, String), u64>,
    context_totals: HashMap<String, u64>,
    vocab: std::collections::HashSet<String>,
}

impl BigramScorer {
    pub fn tokenize(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    /// Fits on documents; each document starts a fresh `<s>` context.
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut scorer = BigramScorer {
            bigrams: HashMap::new(),
            context_totals: HashMap::new(),
            vocab: std::collections::HashSet::new(),
        };
        scorer.vocab.insert(UNK.to_string());
        for doc in corpus {
            let mut prev = BOS.to_string();
            for tok in Self::tokenize(doc.as_ref()) {
                scorer.vocab.insert(tok.clone());
                *scorer.bigrams.entry((prev.clone(), tok.clone())).or_default() += 1;
                *scorer.context_totals.entry(prev).or_default() += 1;
                prev = tok;
            }
        }
        scorer
    }

    /// Reads a corpus file: a JSON array of strings, or plain text with one
    /// document per non-empty line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('[') {
            let docs: Vec<String> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
            Ok(Self::fit(&docs))
        } else {
            let docs: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            Ok(Self::fit(&docs))
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn canonical<'a>(&self, tok: &'a str) -> &'a str {
        if self.vocab.contains(tok) {
            tok
        } else {
            UNK
        }
    }

    pub fn log_prob(&self, prev: &str, next: &str) -> f64 {
        let prev = if prev == BOS { BOS } else { self.canonical(prev) };
        let next = self.canonical(next);
        let pair = self
            .bigrams
            .get(&(prev.to_string(), next.to_string()))
            .copied()
            .unwrap_or(0);
        let total = self.context_totals.get(prev).copied().unwrap_or(0);
        ((pair + 1) as f64 / (total + self.vocab.len() as u64) as f64).ln()
    }
}

impl LikelihoodScorer for BigramScorer {
    fn score_loglik(&self, prompt: &Prompt, continuation: &str) -> Result<f64> {
        let tokens = Self::tokenize(continuation);
        if tokens.is_empty() {
            return Err(Error::invalid("continuation has no tokens"));
        }
        let mut prev = Self::tokenize(prompt.as_str()).pop().unwrap_or_else(|| BOS.to_string());
        let mut total = 0.0;
        for tok in tokens {
            total += self.log_prob(&prev, &tok);
            prev = tok;
        }
        Ok(total)
    }
}
