//! Method variants, correlation metrics and variant comparison tables.

mod variant;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use variant::{ClusterMethod, MethodVariant};

use crate::corpus::Dataset;
use crate::error::{Error, Result, StatsError};
use crate::pipeline::{run_corpus, CorpusRun, PipelineConfig, PromptReport};
use crate::providers::Providers;
use crate::timing::TimingBreakdown;

fn check(xs: &[f64], ys: &[f64]) -> Result<(), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFew(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::Undefined("non-finite value".into()));
    }
    Ok(())
}

/// Sample Pearson correlation. Constant input is an error.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Undefined("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their rank span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Run the pipeline over a dataset with one variant's settings.
pub fn run_variant(
    dataset: &Dataset,
    variant: MethodVariant,
    config: &PipelineConfig,
    providers: Providers<'_>,
    out_dir: Option<&std::path::Path>,
) -> Result<CorpusRun> {
    let mut cfg = config.clone();
    cfg.apply_variant(variant);
    run_corpus(dataset, &cfg, providers, out_dir)
}

impl CorpusRun {
    /// `(prompt_id, u_final)` for every scored prompt.
    pub fn scores(&self) -> Vec<(String, f64)> {
        self.reports
            .iter()
            .map(|r| (r.prompt_id.clone(), r.score.u_final))
            .collect()
    }
}

/// Correlation of one variant's scores with factuality labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub variant: String,
    pub pcc: f64,
    pub scc: f64,
    pub n_prompts: usize,
    pub decomposer_calls: usize,
    /// Per-prompt means.
    pub mean_timing: TimingBreakdown,
}

/// Correlate `u_final` with factuality over the labeled reports.
pub fn correlate(variant: &str, reports: &[PromptReport]) -> Result<CorrelationReport, StatsError> {
    let labeled: Vec<&PromptReport> = reports.iter().filter(|r| r.factuality.is_some()).collect();
    let u: Vec<f64> = labeled.iter().map(|r| r.score.u_final).collect();
    let f: Vec<f64> = labeled.iter().map(|r| r.factuality.expect("filtered")).collect();
    let pcc = pearson(&u, &f)?;
    let scc = spearman(&u, &f)?;
    let mut total = TimingBreakdown::default();
    for r in reports {
        total.add(&r.timing);
    }
    let n = reports.len().max(1) as f64;
    let mean_timing = TimingBreakdown {
        t_nli_ms: total.t_nli_ms / n,
        t_atom_ms: total.t_atom_ms / n,
        t_embed_ms: total.t_embed_ms / n,
        t_cluster_ms: total.t_cluster_ms / n,
        t_total_ms: total.t_total_ms / n,
        ..total.clone()
    };
    Ok(CorrelationReport {
        variant: variant.to_string(),
        pcc,
        scc,
        n_prompts: labeled.len(),
        decomposer_calls: total.decomposer_calls,
        mean_timing,
    })
}

/// Group reports by the variant that produced them (`custom` when none).
pub fn group_by_variant(reports: Vec<PromptReport>) -> BTreeMap<String, Vec<PromptReport>> {
    let mut groups: BTreeMap<String, Vec<PromptReport>> = BTreeMap::new();
    for r in reports {
        let name = r.variant.map_or_else(|| "custom".to_string(), |v| v.name().to_string());
        groups.entry(name).or_default().push(r);
    }
    groups
}

/// One row per variant with at least two labeled, non-constant prompts;
/// other variants are skipped with a warning.
pub fn compare(groups: &BTreeMap<String, Vec<PromptReport>>) -> Vec<CorrelationReport> {
    groups
        .iter()
        .filter_map(|(name, reports)| match correlate(name, reports) {
            Ok(row) => Some(row),
            Err(e) => {
                log::warn!("skipping variant `{name}`: {e}");
                None
            }
        })
        .collect()
}

#[derive(Serialize)]
struct TableRow<'a> {
    variant: &'a str,
    pcc: f64,
    scc: f64,
    n: usize,
    decomposer_calls: usize,
    t_nli_ms: f64,
    t_atom_ms: f64,
    t_cluster_ms: f64,
}

/// Write the comparison as CSV with a header row.
pub fn write_table(rows: &[CorrelationReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("writing table: {e}"));
    if rows.is_empty() {
        w.write_record(["variant", "pcc", "scc", "n", "decomposer_calls", "t_nli_ms", "t_atom_ms", "t_cluster_ms"])
            .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(TableRow {
            variant: &r.variant,
            pcc: r.pcc,
            scc: r.scc,
            n: r.n_prompts,
            decomposer_calls: r.decomposer_calls,
            t_nli_ms: r.mean_timing.t_nli_ms,
            t_atom_ms: r.mean_timing.t_atom_ms,
            t_cluster_ms: r.mean_timing.t_cluster_ms,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<table>".into(),
        source,
    })
}
