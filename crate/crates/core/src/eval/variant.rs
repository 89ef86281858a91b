use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationMode;
use crate::routing::GranularityMode;

/// How units are grouped before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    /// GMM with BIC-selected K.
    #[default]
    Gmm,
    /// Hard k-means with the K the GMM search selects.
    Kmeans,
    /// No clustering: every unit in one group, no embeddings requested.
    None,
}

/// A scoring method: the full pipeline, a baseline, or an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodVariant {
    Agsc,
    AgscLiteral,
    LuqSentence,
    LuqAtomic,
    AblateNoAdapt,
    AblateNg,
    AblateNw,
    AblateNoCluster,
    AblateKmeans,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 9] = [
        Self::Agsc,
        Self::AgscLiteral,
        Self::LuqSentence,
        Self::LuqAtomic,
        Self::AblateNoAdapt,
        Self::AblateNg,
        Self::AblateNw,
        Self::AblateNoCluster,
        Self::AblateKmeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Agsc => "agsc",
            Self::AgscLiteral => "agsc_literal",
            Self::LuqSentence => "luq_sentence",
            Self::LuqAtomic => "luq_atomic",
            Self::AblateNoAdapt => "ablate_no_adapt",
            Self::AblateNg => "ablate_ng",
            Self::AblateNw => "ablate_nw",
            Self::AblateNoCluster => "ablate_no_cluster",
            Self::AblateKmeans => "ablate_kmeans",
        }
    }

    /// The (granularity, clustering, aggregation) triple this variant runs.
    pub fn settings(self) -> (GranularityMode, ClusterMethod, AggregationMode) {
        use AggregationMode as A;
        use ClusterMethod as C;
        use GranularityMode as G;
        match self {
            Self::Agsc => (G::Adaptive, C::Gmm, A::Global),
            Self::AgscLiteral => (G::Adaptive, C::Gmm, A::Literal),
            Self::LuqSentence => (G::Off, C::None, A::Uniform),
            Self::LuqAtomic => (G::Atomic, C::None, A::Uniform),
            Self::AblateNoAdapt => (G::Off, C::Gmm, A::Global),
            Self::AblateNg => (G::NeutralGuess, C::Gmm, A::Global),
            Self::AblateNw => (G::NeutralWeight, C::Gmm, A::Global),
            Self::AblateNoCluster => (G::Adaptive, C::None, A::Uniform),
            Self::AblateKmeans => (G::Adaptive, C::Kmeans, A::Global),
        }
    }

    /// The variant running exactly this triple, if any.
    pub fn from_settings(settings: (GranularityMode, ClusterMethod, AggregationMode)) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.settings() == settings)
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}
