use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{ClusterSummary, FinalScore};
use crate::corpus::{Rejection, UnitId, UnitRole};
use crate::error::{Error, Result};
use crate::eval::MethodVariant;
use crate::routing::SentenceRecord;
use crate::timing::TimingBreakdown;

/// An anchor unit as it entered aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub unit_id: UnitId,
    pub role: UnitRole,
    pub sentence_index: usize,
    pub text: String,
    pub uncertainty: f64,
    /// Cluster membership row; empty when no clustering ran.
    #[serde(default)]
    pub membership: Vec<f64>,
}

/// Everything computed for one prompt. The leading fields repeat the
/// ingestion record, so a report file is also a valid dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptReport {
    pub prompt_id: String,
    pub prompt: String,
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factuality: Option<f64>,
    pub variant: Option<MethodVariant>,
    pub sentences: Vec<SentenceRecord>,
    pub units: Vec<UnitRecord>,
    /// Number of clusters; 0 when the all-skip fallback fired.
    pub k: usize,
    pub clusters: Vec<ClusterSummary>,
    pub score: FinalScore,
    /// Stage latencies cover scoring only; response generation is not timed.
    pub timing: TimingBreakdown,
    pub decomposer_fallback: bool,
    pub generation_timed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub index: usize,
    pub prompt_id: String,
    pub u_final: f64,
    pub fallback_used: bool,
    pub decomposer_fallback: bool,
    pub factuality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFailure {
    pub index: usize,
    pub prompt_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub variant: Option<MethodVariant>,
    pub n_prompts: usize,
    pub n_scored: usize,
    pub n_failed: usize,
    pub scores: Vec<ScoreLine>,
    pub failures: Vec<PromptFailure>,
    pub rejected: Vec<Rejection>,
    /// Summed over scored prompts.
    pub timing: TimingBreakdown,
}

/// `NNNN_<id>.jsonl`, with the id reduced to filename-safe characters.
pub fn report_file_name(index: usize, prompt_id: &str) -> String {
    let safe: String = prompt_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(64)
        .collect();
    format!("{index:04}_{safe}.jsonl")
}

pub fn read_report_file(path: &Path) -> Result<Vec<PromptReport>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Every report in `dir` (the `*.jsonl` files), in file-name order.
pub fn load_reports(dir: &Path) -> Result<Vec<PromptReport>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_report_file(&f)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_safe_and_ordered() {
        assert_eq!(report_file_name(3, "bio/Ada Lovelace"), "0003_bio_Ada_Lovelace.jsonl");
        assert!(report_file_name(2, "z") < report_file_name(10, "a"));
    }
}
