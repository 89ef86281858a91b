//! Neutrality-triggered adaptive granularity.
//!
//! Each anchor sentence's reference-averaged NLI distribution picks a
//! dominant label. Non-neutral sentences are kept whole. Neutral sentences
//! whose entailment-contradiction gap exceeds `tau` carry a polarity signal
//! and are decomposed into atomic facts; the rest are irrelevance noise and
//! skipped. Reference responses are never routed.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Sentence, SentenceRef, TextUnit, UnitId};
use crate::error::ProviderError;
use crate::providers::{rule_split, Decomposer};
use crate::scoring::{NliDistribution, Scorer, ScoringConfig, SupportScore};
use crate::timing::{Stage, StageClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Entail,
    Contradict,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingSignal {
    pub sentence: SentenceRef,
    pub distribution: NliDistribution,
    pub dominant: Label,
    pub gap: f64,
}

impl RoutingSignal {
    /// Argmax with ties resolved entail > contradict > neutral.
    pub fn new(sentence: SentenceRef, distribution: NliDistribution) -> Self {
        let d = distribution;
        let dominant = if d.p_entail >= d.p_contradict && d.p_entail >= d.p_neutral {
            Label::Entail
        } else if d.p_contradict >= d.p_neutral {
            Label::Contradict
        } else {
            Label::Neutral
        };
        Self {
            sentence,
            distribution,
            dominant,
            gap: (d.p_entail - d.p_contradict).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Keep,
    Skip,
    Decompose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GranularityMode {
    #[default]
    Adaptive,
    /// Every sentence kept whole.
    Off,
    /// Would-be-skipped sentences kept with uncertainty fixed at 0.5.
    NeutralGuess,
    /// Every sentence kept, scored with neutral mass weighted by 0.5.
    NeutralWeight,
    /// Every sentence decomposed.
    Atomic,
}

/// How a decomposed sentence enters aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnitAggregation {
    /// Each atomic fact is its own unit.
    #[default]
    Facts,
    /// One unit per sentence carrying the mean fact uncertainty.
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityConfig {
    pub tau: f64,
    pub mode: GranularityMode,
    pub unit_aggregation: UnitAggregation,
}

impl Default for GranularityConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            mode: GranularityMode::Adaptive,
            unit_aggregation: UnitAggregation::Facts,
        }
    }
}

impl GranularityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(format!("tau {} outside [0, 1]", self.tau));
        }
        Ok(())
    }
}

/// The adaptive rule. A gap equal to `tau` skips.
pub fn route(signal: &RoutingSignal, config: &GranularityConfig) -> DecisionKind {
    match signal.dominant {
        Label::Entail | Label::Contradict => DecisionKind::Keep,
        Label::Neutral if signal.gap > config.tau => DecisionKind::Decompose,
        Label::Neutral => DecisionKind::Skip,
    }
}

/// How a kept unit's uncertainty is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringRule {
    /// `1 - support` with binary entailment.
    Support,
    /// Fixed at 0.5.
    FixedHalf,
    /// `1 - support` with neutral-weighted entailment.
    NeutralWeighted,
}

/// Routing under any granularity mode, including the ablations.
pub fn route_ablation(signal: &RoutingSignal, config: &GranularityConfig) -> (DecisionKind, ScoringRule) {
    match config.mode {
        GranularityMode::Adaptive => (route(signal, config), ScoringRule::Support),
        GranularityMode::Off => (DecisionKind::Keep, ScoringRule::Support),
        GranularityMode::NeutralGuess => match route(signal, config) {
            DecisionKind::Skip => (DecisionKind::Keep, ScoringRule::FixedHalf),
            kind => (kind, ScoringRule::Support),
        },
        GranularityMode::NeutralWeight => (DecisionKind::Keep, ScoringRule::NeutralWeighted),
        GranularityMode::Atomic => (DecisionKind::Decompose, ScoringRule::Support),
    }
}

/// Per-sentence adaptive uncertainty, or the skip marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptiveUncertainty {
    Value(f64),
    Skipped,
}

impl AdaptiveUncertainty {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Skipped => None,
        }
    }
}

impl fmt::Display for AdaptiveUncertainty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::Skipped => f.write_str("SKIPPED"),
        }
    }
}

impl Serialize for AdaptiveUncertainty {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => s.serialize_f64(*v),
            Self::Skipped => s.serialize_str("SKIPPED"),
        }
    }
}

impl<'de> Deserialize<'de> for AdaptiveUncertainty {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Self::Value(v)),
            Raw::Str(s) if s == "SKIPPED" => Ok(Self::Skipped),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unexpected `{s}`"))),
        }
    }
}

/// An anchor unit with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredUnit {
    pub unit: TextUnit,
    pub uncertainty: f64,
    /// Per-reference entailment; absent when the uncertainty is fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<SupportScore>,
}

/// Serialized routing record for one anchor sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_index: usize,
    pub text: String,
    /// Reference-averaged distribution; absent when routing is bypassed.
    pub distribution: Option<NliDistribution>,
    pub dominant: Option<Label>,
    pub gap: Option<f64>,
    pub decision: DecisionKind,
    pub scoring: ScoringRule,
    /// Units this sentence contributes to aggregation.
    pub units: Vec<UnitId>,
    /// Atomic facts with their uncertainties, when decomposed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<ScoredUnit>,
    /// Sentence-level `1 - support`, when computed.
    pub u_sentence: Option<f64>,
    pub u_adaptive: AdaptiveUncertainty,
    #[serde(default)]
    pub decomposer_fallback: bool,
}

impl SentenceRecord {
    pub fn decision(&self) -> RoutingDecision {
        RoutingDecision {
            kind: self.decision,
            resulting_units: self.units.clone(),
            adaptive_uncertainty: self.u_adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    pub kind: DecisionKind,
    pub resulting_units: Vec<UnitId>,
    pub adaptive_uncertainty: AdaptiveUncertainty,
}

/// Result of routing every anchor sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct GranularityOutcome {
    /// The retained anchor units in document order.
    pub units: Vec<ScoredUnit>,
    pub records: Vec<SentenceRecord>,
    pub decomposer_fallback: bool,
}

impl GranularityOutcome {
    /// Sentence-level uncertainties of every anchor sentence, when available.
    pub fn sentence_uncertainties(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.u_sentence).collect()
    }
}

/// Route every anchor sentence, decompose where asked, and score the
/// resulting units against the references.
pub fn apply_granularity(
    sentences: &[Sentence],
    scorer: &Scorer<'_>,
    scoring: &ScoringConfig,
    decomposer: &dyn Decomposer,
    prompt_context: &str,
    config: &GranularityConfig,
    clock: &mut StageClock,
) -> Result<GranularityOutcome, ProviderError> {
    let bypass_routing = config.mode == GranularityMode::Atomic;

    let (signals, sentence_support, sentence_evidence) = if bypass_routing {
        (None, None, None)
    } else {
        let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
        clock.counts().nli_pairs += texts.len() * scorer.pairs_per_unit();
        let evidence = clock.time(Stage::Nli, || scorer.evidence(&texts))?;
        let signals: Vec<RoutingSignal> = sentences
            .iter()
            .zip(&evidence)
            .map(|(s, ev)| RoutingSignal::new(s.origin(), ev.distribution(scoring.distribution_chunks)))
            .collect();
        let support: Vec<SupportScore> = sentences
            .iter()
            .zip(&evidence)
            .map(|(s, ev)| ev.support(UnitId::sentence(s.origin())))
            .collect();
        (Some(signals), Some(support), Some(evidence))
    };

    let plan: Vec<(DecisionKind, ScoringRule)> = (0..sentences.len())
        .map(|i| match &signals {
            Some(sig) => route_ablation(&sig[i], config),
            None => (DecisionKind::Decompose, ScoringRule::Support),
        })
        .collect();

    // Decompose.
    let mut facts_of: Vec<Option<(Vec<String>, bool)>> = vec![None; sentences.len()];
    for (i, (kind, _)) in plan.iter().enumerate() {
        if *kind != DecisionKind::Decompose {
            continue;
        }
        let sentence = &sentences[i].text;
        clock.counts().decomposer_calls += 1;
        let result = clock.time(Stage::Atom, || decomposer.decompose(sentence, prompt_context));
        let (mut facts, fallback) = match result {
            Ok(facts) => (facts, false),
            Err(e) => {
                log::warn!("decomposer failed on sentence {i}, using rule-based split: {e}");
                (rule_split(sentence), true)
            }
        };
        facts.retain(|f| !f.trim().is_empty());
        if facts.is_empty() {
            facts.push(sentence.clone());
        }
        facts_of[i] = Some((facts, fallback));
    }

    // Score every fact in one batch.
    let fact_texts: Vec<&str> = facts_of
        .iter()
        .flatten()
        .flat_map(|(f, _)| f.iter().map(String::as_str))
        .collect();
    let fact_evidence = if fact_texts.is_empty() {
        Vec::new()
    } else {
        clock.counts().nli_pairs += fact_texts.len() * scorer.pairs_per_unit();
        clock.time(Stage::Nli, || scorer.evidence(&fact_texts))?
    };
    let mut fact_evidence = fact_evidence.into_iter();

    let mut units = Vec::new();
    let mut records = Vec::with_capacity(sentences.len());
    let mut any_fallback = false;
    for (i, sentence) in sentences.iter().enumerate() {
        let (kind, rule) = plan[i];
        let origin = sentence.origin();
        let signal = signals.as_ref().map(|s| s[i]);
        let u_sentence = sentence_support.as_ref().map(|s| s[i].uncertainty());
        let mut record = SentenceRecord {
            sentence_index: sentence.sentence_index,
            text: sentence.text.clone(),
            distribution: signal.map(|s| s.distribution),
            dominant: signal.map(|s| s.dominant),
            gap: signal.map(|s| s.gap),
            decision: kind,
            scoring: rule,
            units: Vec::new(),
            facts: Vec::new(),
            u_sentence,
            u_adaptive: AdaptiveUncertainty::Skipped,
            decomposer_fallback: false,
        };
        match kind {
            DecisionKind::Skip => {}
            DecisionKind::Keep => {
                let unit = TextUnit::from_sentence(sentence);
                let (uncertainty, support) = match rule {
                    ScoringRule::Support => {
                        let s = sentence_support.as_ref().expect("routed sentences are scored")[i].clone();
                        (s.uncertainty(), Some(s))
                    }
                    ScoringRule::FixedHalf => (0.5, None),
                    ScoringRule::NeutralWeighted => {
                        let ev = &sentence_evidence.as_ref().expect("routed sentences are scored")[i];
                        (ev.neutral_weighted_uncertainty(), None)
                    }
                };
                record.units.push(unit.unit_id.clone());
                record.u_adaptive = AdaptiveUncertainty::Value(uncertainty);
                units.push(ScoredUnit {
                    unit,
                    uncertainty,
                    support,
                });
            }
            DecisionKind::Decompose => {
                let (facts, fallback) = facts_of[i].take().expect("decomposed above");
                any_fallback |= fallback;
                record.decomposer_fallback = fallback;
                let scored: Vec<ScoredUnit> = facts
                    .into_iter()
                    .enumerate()
                    .map(|(k, text)| {
                        let unit = TextUnit::fact(origin, k, text);
                        let s = fact_evidence.next().expect("one evidence per fact").support(unit.unit_id.clone());
                        ScoredUnit {
                            uncertainty: s.uncertainty(),
                            support: Some(s),
                            unit,
                        }
                    })
                    .collect();
                let mean = scored.iter().map(|u| u.uncertainty).sum::<f64>() / scored.len() as f64;
                record.u_adaptive = AdaptiveUncertainty::Value(mean);
                match config.unit_aggregation {
                    UnitAggregation::Facts => {
                        record.units = scored.iter().map(|u| u.unit.unit_id.clone()).collect();
                        units.extend(scored.iter().cloned());
                    }
                    UnitAggregation::Sentence => {
                        let unit = TextUnit::from_sentence(sentence);
                        record.units.push(unit.unit_id.clone());
                        units.push(ScoredUnit {
                            unit,
                            uncertainty: mean,
                            support: None,
                        });
                    }
                }
                record.facts = scored;
            }
        }
        records.push(record);
    }
    Ok(GranularityOutcome {
        units,
        records,
        decomposer_fallback: any_fallback,
    })
}
