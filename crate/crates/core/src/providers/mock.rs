//! Deterministic offline providers. All are pure functions of their inputs
//! and an explicit seed; each counts how many times it was invoked so tests
//! can observe cache behaviour.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::{
    check_pairs, rule_split, Decomposer, Embedder, EmbeddingVector, NliLogits, NliPair,
    NliProvider,
};
use crate::error::ProviderError;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a, stable across platforms and releases.
pub(crate) fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    for part in parts {
        for &b in *part {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
        h = (h ^ 0xff).wrapping_mul(FNV_PRIME);
    }
    h
}

/// Lowercased alphanumeric tokens.
pub(crate) fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Default)]
struct Counter(AtomicUsize);

impl Counter {
    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
}

/// A substring rule: fires when both optional needles occur.
#[derive(Debug, Clone, PartialEq)]
pub struct NliRule {
    pub premise_contains: Option<String>,
    pub hypothesis_contains: Option<String>,
    pub logits: NliLogits,
}

impl NliRule {
    pub fn hypothesis(needle: impl Into<String>, logits: NliLogits) -> Self {
        Self {
            premise_contains: None,
            hypothesis_contains: Some(needle.into()),
            logits,
        }
    }

    fn matches(&self, premise: &str, hypothesis: &str) -> bool {
        self.premise_contains
            .as_deref()
            .is_none_or(|n| premise.contains(n))
            && self
                .hypothesis_contains
                .as_deref()
                .is_none_or(|n| hypothesis.contains(n))
    }
}

/// Scripted NLI: exact pairs first, then the first matching rule, then a default.
#[derive(Debug)]
pub struct ScriptedNli {
    exact: HashMap<(String, String), NliLogits>,
    rules: Vec<NliRule>,
    default: NliLogits,
    calls: Counter,
}

impl ScriptedNli {
    pub fn new(default: NliLogits) -> Self {
        Self {
            exact: HashMap::new(),
            rules: Vec::new(),
            default,
            calls: Counter::default(),
        }
    }

    pub fn with_pair(mut self, premise: &str, hypothesis: &str, logits: NliLogits) -> Self {
        self.exact
            .insert((premise.to_string(), hypothesis.to_string()), logits);
        self
    }

    pub fn with_rule(mut self, rule: NliRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn lookup(&self, premise: &str, hypothesis: &str) -> NliLogits {
        if let Some(l) = self.exact.get(&(premise.to_string(), hypothesis.to_string())) {
            return *l;
        }
        self.rules
            .iter()
            .find(|r| r.matches(premise, hypothesis))
            .map(|r| r.logits)
            .unwrap_or(self.default)
    }

    /// Number of `nli_batch` invocations served.
    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl NliProvider for ScriptedNli {
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError> {
        check_pairs("scripted-nli", pairs)?;
        self.calls.bump();
        Ok(pairs.iter().map(|(p, h)| self.lookup(p, h)).collect())
    }
}

/// Pseudo-random logits in `[-4, 4)` hashed from (seed, premise, hypothesis).
#[derive(Debug, Default)]
pub struct HashNli {
    seed: u64,
    calls: Counter,
}

impl HashNli {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            calls: Counter::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    fn logits(&self, premise: &str, hypothesis: &str) -> NliLogits {
        let unit = |salt: &[u8]| {
            let h = fnv1a(self.seed, &[premise.as_bytes(), hypothesis.as_bytes(), salt]);
            (h >> 11) as f64 / (1u64 << 53) as f64 * 8.0 - 4.0
        };
        NliLogits::new(unit(b"e"), unit(b"c"), unit(b"n"))
    }
}

impl NliProvider for HashNli {
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError> {
        check_pairs("hash-nli", pairs)?;
        self.calls.bump();
        Ok(pairs.iter().map(|(p, h)| self.logits(p, h)).collect())
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "was", "were", "for", "with", "that", "this", "his", "her", "its", "their",
    "from", "has", "had", "have", "are", "but", "not", "also", "who", "which", "into", "she",
    "him", "they", "them", "one", "over",
];

fn content_words(text: &str) -> BTreeSet<String> {
    tokens(text)
        .into_iter()
        .filter(|t| t.len() >= 3 || t.chars().all(|c| c.is_ascii_digit()))
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Lexical-overlap NLI heuristic for offline runs.
///
/// Coverage `r` is the share of the hypothesis' content words present in
/// the premise. High coverage leans entailment, low coverage leans neutral;
/// a hypothesis number absent from a premise that mentions other numbers on
/// a shared topic leans contradiction.
#[derive(Debug, Default)]
pub struct LexicalNli {
    calls: Counter,
}

impl LexicalNli {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    pub fn logits(premise: &str, hypothesis: &str) -> NliLogits {
        let p = content_words(premise);
        let h = content_words(hypothesis);
        if h.is_empty() {
            return NliLogits::new(-2.0, -2.0, 2.0);
        }
        let shared = h.iter().filter(|w| p.contains(*w)).count();
        let r = shared as f64 / h.len() as f64;
        let is_num = |w: &String| w.chars().all(|c| c.is_ascii_digit());
        let premise_has_numbers = p.iter().any(is_num);
        let number_conflict = r >= 0.4
            && premise_has_numbers
            && h.iter().filter(|w| is_num(w)).any(|w| !p.contains(w));
        let entail = 8.0 * r - 4.0;
        let neutral = 2.0 - 4.0 * r;
        let contradict = if number_conflict { 3.0 } else { -2.0 };
        NliLogits::new(entail, contradict, neutral)
    }
}

impl NliProvider for LexicalNli {
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError> {
        check_pairs("lexical-nli", pairs)?;
        self.calls.bump();
        Ok(pairs.iter().map(|(p, h)| Self::logits(p, h)).collect())
    }
}

/// Hashed bag-of-words embedder: each lowercased token adds 1 to bucket
/// `fnv1a(seed, token) mod dim`; vectors are L2-normalized.
#[derive(Debug)]
pub struct HashedBowEmbedder {
    dim: usize,
    seed: u64,
    calls: Counter,
}

impl HashedBowEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            seed,
            calls: Counter::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(self.seed, &[token.as_bytes()]) % self.dim as u64) as usize
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dim];
        for t in tokens(text) {
            v[self.bucket(&t)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(v)
    }
}

impl Embedder for HashedBowEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        self.calls.bump();
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

/// Offline decomposer backed by [`rule_split`], with an optional fixed
/// per-call latency to model a remote LLM.
#[derive(Debug, Default)]
pub struct RuleDecomposer {
    latency: Duration,
    calls: Counter,
}

impl RuleDecomposer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_latency(latency: Duration) -> Self {
        Self {
            latency,
            calls: Counter::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl Decomposer for RuleDecomposer {
    fn decompose(&self, sentence: &str, _prompt_context: &str) -> Result<Vec<String>, ProviderError> {
        if sentence.trim().is_empty() {
            return Err(ProviderError::InvalidInput {
                provider: "rule-decomposer",
                message: "empty sentence".into(),
            });
        }
        self.calls.bump();
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        Ok(rule_split(sentence))
    }
}
