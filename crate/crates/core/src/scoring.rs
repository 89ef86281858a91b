//! Consistency scoring of anchor units against reference responses.
//!
//! References are cut into overlapping sentence-aligned chunks. A unit's
//! entailment against one reference is the best binary (neutral-dropped)
//! entailment over its chunks; its support is the mean over references and
//! its uncertainty is `1 - support`. For routing, the three-class
//! distribution of one chunk per reference is averaged over references.

use serde::{Deserialize, Serialize};

use crate::corpus::{segment_spans, UnitId};
use crate::error::ProviderError;
use crate::providers::{NliLogits, NliPair, NliProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NliDirection {
    /// Reference chunk is the premise, the anchor unit the hypothesis.
    #[default]
    ReferencePremise,
    UnitPremise,
}

/// Which chunk's three-class distribution represents a reference during routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChunkSelection {
    /// Chunk with the largest `p_entail + p_contradict`.
    #[default]
    Polarized,
    /// Chunk with the largest binary entailment.
    MaxEntail,
    /// Mean of all chunk distributions.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub chunk_budget_chars: usize,
    pub chunk_stride_chars: usize,
    pub nli_direction: NliDirection,
    pub distribution_chunks: ChunkSelection,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            chunk_budget_chars: 1000,
            chunk_stride_chars: 500,
            nli_direction: NliDirection::ReferencePremise,
            distribution_chunks: ChunkSelection::Polarized,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.chunk_budget_chars == 0 || self.chunk_stride_chars == 0 {
            return Err("chunk budget and stride must be positive".into());
        }
        if self.chunk_stride_chars > self.chunk_budget_chars {
            return Err("chunk stride must not exceed the budget".into());
        }
        Ok(())
    }

    fn pair(&self, unit: &str, chunk: &str) -> NliPair {
        match self.nli_direction {
            NliDirection::ReferencePremise => (chunk.to_string(), unit.to_string()),
            NliDirection::UnitPremise => (unit.to_string(), chunk.to_string()),
        }
    }
}

/// A window of consecutive reference sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub reference_index: usize,
    pub chunk_index: usize,
    pub text: String,
    /// Half-open range of sentence indices.
    pub sentence_span: (usize, usize),
}

/// Greedy sentence-aligned windows of at most `chunk_budget_chars`
/// characters (a single longer sentence forms its own window). Each window
/// starts after the fewest leading sentences of the previous one whose
/// cumulative length reaches the stride; the last window ends at the last
/// sentence.
pub fn make_chunks(reference_index: usize, reference: &str, config: &ScoringConfig) -> Vec<Chunk> {
    let spans = segment_spans(reference);
    let n = spans.len();
    let chars = |a: usize, b: usize| reference[spans[a].start..spans[b - 1].end].chars().count();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && chars(start, end + 1) <= config.chunk_budget_chars {
            end += 1;
        }
        chunks.push(Chunk {
            reference_index,
            chunk_index: chunks.len(),
            text: reference[spans[start].start..spans[end - 1].end].to_string(),
            sentence_span: (start, end),
        });
        if end == n {
            break;
        }
        let mut advance = 1;
        let mut covered = 0;
        for s in start..end {
            covered += reference[spans[s].clone()].chars().count();
            advance = s - start + 1;
            if covered >= config.chunk_stride_chars {
                break;
            }
        }
        start += advance;
    }
    chunks
}

/// Probability of entailment with the neutral class discarded:
/// `exp(l_e) / (exp(l_e) + exp(l_c))`, evaluated against the larger logit.
pub fn binary_entail(logits: NliLogits) -> f64 {
    let m = logits.entail.max(logits.contradict);
    let e = (logits.entail - m).exp();
    let c = (logits.contradict - m).exp();
    e / (e + c)
}

/// Entailment with the neutral mass down-weighted by one half:
/// `exp(l_e) / (exp(l_e) + exp(l_c) + 0.5 exp(l_n))`.
pub fn neutral_weighted_entail(logits: NliLogits) -> f64 {
    let m = logits.entail.max(logits.contradict).max(logits.neutral);
    let e = (logits.entail - m).exp();
    let c = (logits.contradict - m).exp();
    let n = (logits.neutral - m).exp();
    e / (e + c + 0.5 * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliDistribution {
    pub p_entail: f64,
    pub p_contradict: f64,
    pub p_neutral: f64,
}

impl NliDistribution {
    pub fn new(p_entail: f64, p_contradict: f64, p_neutral: f64) -> Self {
        Self {
            p_entail,
            p_contradict,
            p_neutral,
        }
    }

    /// Three-class softmax, shifted by the largest logit.
    pub fn softmax(logits: NliLogits) -> Self {
        let m = logits.entail.max(logits.contradict).max(logits.neutral);
        let e = (logits.entail - m).exp();
        let c = (logits.contradict - m).exp();
        let n = (logits.neutral - m).exp();
        let z = e + c + n;
        Self::new(e / z, c / z, n / z)
    }

    /// Rescale non-negative weights onto the simplex.
    pub fn normalized(self) -> Self {
        let z = self.p_entail + self.p_contradict + self.p_neutral;
        Self::new(self.p_entail / z, self.p_contradict / z, self.p_neutral / z)
    }

    pub fn sum(&self) -> f64 {
        self.p_entail + self.p_contradict + self.p_neutral
    }

    /// Mass on the two polar classes.
    pub fn polarity(&self) -> f64 {
        self.p_entail + self.p_contradict
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.p_entail, self.p_contradict, self.p_neutral]
    }
}

/// Component-wise mean; the result is renormalized so it stays on the simplex.
pub fn mean_distribution(items: &[NliDistribution]) -> NliDistribution {
    assert!(!items.is_empty(), "mean of zero distributions");
    let k = items.len() as f64;
    let (e, c, n) = items.iter().fold((0.0, 0.0, 0.0), |(e, c, n), d| {
        (e + d.p_entail, c + d.p_contradict, n + d.p_neutral)
    });
    NliDistribution::new(e / k, c / k, n / k).normalized()
}

/// Best binary entailment over the chunks of one reference.
pub fn best_chunk_entail(chunk_logits: &[NliLogits]) -> f64 {
    chunk_logits
        .iter()
        .map(|&l| binary_entail(l))
        .fold(0.0, f64::max)
}

/// Best neutral-weighted entailment over the chunks of one reference.
pub fn best_chunk_neutral_weighted(chunk_logits: &[NliLogits]) -> f64 {
    chunk_logits
        .iter()
        .map(|&l| neutral_weighted_entail(l))
        .fold(0.0, f64::max)
}

/// The distribution representing one reference; ties go to the earliest chunk.
pub fn chunk_distribution(chunk_logits: &[NliLogits], selection: ChunkSelection) -> NliDistribution {
    assert!(!chunk_logits.is_empty(), "reference without chunks");
    let dists: Vec<NliDistribution> = chunk_logits.iter().map(|&l| NliDistribution::softmax(l)).collect();
    let argmax = |score: &dyn Fn(usize) -> f64| {
        let mut best = 0;
        for i in 1..dists.len() {
            if score(i) > score(best) {
                best = i;
            }
        }
        best
    };
    match selection {
        ChunkSelection::Polarized => dists[argmax(&|i| dists[i].polarity())],
        ChunkSelection::MaxEntail => dists[argmax(&|i| binary_entail(chunk_logits[i]))],
        ChunkSelection::Mean => mean_distribution(&dists),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportScore {
    pub unit_id: UnitId,
    pub support: f64,
    pub per_reference: Vec<f64>,
}

impl SupportScore {
    pub fn from_per_reference(unit_id: UnitId, per_reference: Vec<f64>) -> Self {
        assert!(!per_reference.is_empty(), "support needs at least one reference");
        let support = per_reference.iter().sum::<f64>() / per_reference.len() as f64;
        Self {
            unit_id,
            support,
            per_reference,
        }
    }

    pub fn uncertainty(&self) -> f64 {
        1.0 - self.support
    }
}

/// NLI logits of one unit against every chunk of every reference.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitEvidence {
    /// `per_reference[t][k]`: logits against chunk `k` of reference `t`.
    pub per_reference: Vec<Vec<NliLogits>>,
}

impl UnitEvidence {
    pub fn support(&self, unit_id: UnitId) -> SupportScore {
        SupportScore::from_per_reference(
            unit_id,
            self.per_reference
                .iter()
                .map(|c| best_chunk_entail(c))
                .collect(),
        )
    }

    /// Uncertainty under the neutral-weighted ablation form.
    pub fn neutral_weighted_uncertainty(&self) -> f64 {
        let s: f64 = self
            .per_reference
            .iter()
            .map(|c| best_chunk_neutral_weighted(c))
            .sum::<f64>()
            / self.per_reference.len() as f64;
        1.0 - s
    }

    pub fn distribution(&self, selection: ChunkSelection) -> NliDistribution {
        let per_ref: Vec<NliDistribution> = self
            .per_reference
            .iter()
            .map(|c| chunk_distribution(c, selection))
            .collect();
        mean_distribution(&per_ref)
    }
}

/// Batches NLI requests for many units against a fixed set of references.
pub struct Scorer<'a> {
    config: &'a ScoringConfig,
    nli: &'a dyn NliProvider,
    chunks: Vec<Vec<Chunk>>,
}

impl<'a> Scorer<'a> {
    pub fn new(references: &[String], config: &'a ScoringConfig, nli: &'a dyn NliProvider) -> Self {
        let chunks = references
            .iter()
            .enumerate()
            .map(|(i, r)| make_chunks(i, r, config))
            .collect();
        Self {
            config,
            nli,
            chunks,
        }
    }

    pub fn chunks(&self) -> &[Vec<Chunk>] {
        &self.chunks
    }

    /// Number of NLI pairs needed per unit.
    pub fn pairs_per_unit(&self) -> usize {
        self.chunks.iter().map(Vec::len).sum()
    }

    /// Score every unit against every chunk in a single provider call.
    pub fn evidence(&self, units: &[&str]) -> Result<Vec<UnitEvidence>, ProviderError> {
        let pairs: Vec<NliPair> = units
            .iter()
            .flat_map(|u| {
                self.chunks
                    .iter()
                    .flatten()
                    .map(move |c| self.config.pair(u, &c.text))
            })
            .collect();
        if pairs.is_empty() {
            return Ok(units
                .iter()
                .map(|_| UnitEvidence {
                    per_reference: self.chunks.iter().map(|_| Vec::new()).collect(),
                })
                .collect());
        }
        let logits = self.nli.nli_batch(&pairs)?;
        if logits.len() != pairs.len() {
            return Err(ProviderError::Protocol {
                provider: "nli",
                message: format!("{} results for {} pairs", logits.len(), pairs.len()),
            });
        }
        let mut it = logits.into_iter();
        Ok(units
            .iter()
            .map(|_| UnitEvidence {
                per_reference: self
                    .chunks
                    .iter()
                    .map(|cs| it.by_ref().take(cs.len()).collect())
                    .collect(),
            })
            .collect())
    }
}

/// Best-chunk binary entailment of `unit` against one reference.
pub fn pair_entail(
    unit: &str,
    reference: &str,
    config: &ScoringConfig,
    nli: &dyn NliProvider,
) -> Result<f64, ProviderError> {
    let refs = [reference.to_string()];
    let ev = Scorer::new(&refs, config, nli).evidence(&[unit])?;
    Ok(best_chunk_entail(&ev[0].per_reference[0]))
}

/// Mean best-chunk entailment of `unit` over all references.
pub fn support(
    unit_id: UnitId,
    unit: &str,
    references: &[String],
    config: &ScoringConfig,
    nli: &dyn NliProvider,
) -> Result<SupportScore, ProviderError> {
    assert!(!references.is_empty(), "support needs at least one reference");
    let ev = Scorer::new(references, config, nli).evidence(&[unit])?;
    Ok(ev[0].support(unit_id))
}

pub fn reference_distribution(
    unit: &str,
    reference: &str,
    config: &ScoringConfig,
    nli: &dyn NliProvider,
) -> Result<NliDistribution, ProviderError> {
    let refs = [reference.to_string()];
    let ev = Scorer::new(&refs, config, nli).evidence(&[unit])?;
    Ok(chunk_distribution(&ev[0].per_reference[0], config.distribution_chunks))
}

/// Mean over references of each reference's selected three-class distribution.
pub fn avg_distribution(
    sentence: &str,
    references: &[String],
    config: &ScoringConfig,
    nli: &dyn NliProvider,
) -> Result<NliDistribution, ProviderError> {
    assert!(!references.is_empty(), "need at least one reference");
    let ev = Scorer::new(references, config, nli).evidence(&[sentence])?;
    Ok(ev[0].distribution(config.distribution_chunks))
}
