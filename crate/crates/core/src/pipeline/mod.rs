//! End-to-end scoring: consistency scoring, routing, decomposition,
//! embedding, clustering and aggregation for each prompt, plus corpus runs
//! that write one report file per prompt and a summary.

mod config;
mod report;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use config::{ClusterUnits, DecomposeKind, EmbedKind, NliKind, PipelineConfig, ProvidersConfig};
pub use report::{
    load_reports, read_report_file, report_file_name, CorpusSummary, PromptFailure, PromptReport, ScoreLine,
    UnitRecord,
};

use crate::aggregation::{aggregate_global, aggregate_literal, aggregate_uniform, all_skip_fallback, Aggregation, AggregationMode};
use crate::clustering::{kmeans_hard, select_k, ClusterDebug, Pca, Reducer, Responsibilities};
use crate::corpus::{sentences_of, Dataset, SampleSet, UnitId};
use crate::error::{Error, Result};
use crate::eval::ClusterMethod;
use crate::providers::{
    CachedDecomposer, CachedEmbedder, CachedNli, Decomposer, Embedder, HashNli, HashedBowEmbedder, HttpDecomposer,
    HttpEmbedder, HttpNli, LexicalNli, NliProvider, Providers, ResponseCache, RuleDecomposer,
};
use crate::routing::apply_granularity;
use crate::scoring::Scorer;
use crate::timing::{Stage, StageClock};

/// Owned, cache-wrapped providers built from configuration.
pub struct ProviderSet {
    pub nli: Arc<dyn NliProvider>,
    pub embedder: Arc<dyn Embedder>,
    pub decomposer: Arc<dyn Decomposer>,
}

impl ProviderSet {
    pub fn providers(&self) -> Providers<'_> {
        Providers {
            nli: self.nli.as_ref(),
            embedder: self.embedder.as_ref(),
            decomposer: self.decomposer.as_ref(),
        }
    }
}

fn open_cache<V: Clone + serde::Serialize + serde::de::DeserializeOwned>(
    dir: Option<&Path>,
    name: &str,
) -> Result<ResponseCache<V>> {
    match dir {
        None => Ok(ResponseCache::in_memory()),
        Some(dir) => {
            let path = dir.join(name);
            ResponseCache::open(&path).map_err(|source| Error::Io { path, source })
        }
    }
}

/// Build the configured providers, each behind a content-hash cache.
pub fn build_providers(config: &PipelineConfig) -> Result<ProviderSet> {
    let p = &config.providers;
    let dir = config.cache_dir.as_deref();
    let nli: Arc<dyn NliProvider> = match p.nli_kind {
        NliKind::Lexical => Arc::new(LexicalNli::new()),
        NliKind::Hash => Arc::new(HashNli::new(config.seed)),
        NliKind::Http => Arc::new(HttpNli::new(p.nli.clone())),
    };
    let embedder: Arc<dyn Embedder> = match p.embed_kind {
        EmbedKind::Bow => Arc::new(HashedBowEmbedder::new(p.bow_dim, config.seed)),
        EmbedKind::Http => Arc::new(HttpEmbedder::new(p.embed.clone())),
    };
    let decomposer: Arc<dyn Decomposer> = match p.decompose_kind {
        DecomposeKind::Rule => Arc::new(RuleDecomposer::with_latency(Duration::from_millis(p.decompose_latency_ms))),
        DecomposeKind::Http => Arc::new(HttpDecomposer::new(p.decompose.clone())),
    };
    Ok(ProviderSet {
        nli: Arc::new(CachedNli::new(nli, open_cache(dir, "nli.jsonl")?)),
        embedder: Arc::new(CachedEmbedder::new(embedder, open_cache(dir, "embed.jsonl")?)),
        decomposer: Arc::new(CachedDecomposer::new(decomposer, open_cache(dir, "decompose.jsonl")?)),
    })
}

/// A scored prompt plus its optional clustering dump.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRun {
    pub report: PromptReport,
    pub debug: Option<ClusterDebug>,
}

/// Score one sample set.
pub fn run_prompt(sample: &SampleSet, config: &PipelineConfig, providers: Providers<'_>) -> Result<PromptRun> {
    let mut clock = StageClock::new(config.report_timings);
    let anchor = sentences_of(0, sample.anchor());
    if anchor.is_empty() {
        return Err(Error::InvalidInput(format!("prompt `{}`: anchor has no sentences", sample.prompt_id())));
    }
    let references = sample.references();
    let scorer = Scorer::new(references, &config.scoring, providers.nli);
    let outcome = apply_granularity(
        &anchor,
        &scorer,
        &config.scoring,
        providers.decomposer,
        sample.prompt(),
        &config.granularity,
        &mut clock,
    )?;

    let u: Vec<f64> = outcome.units.iter().map(|s| s.uncertainty).collect();
    let mut debug = None;
    let mut memberships: Vec<Vec<f64>> = Vec::new();
    let mut k = 0;
    let aggregation = if outcome.units.is_empty() {
        let sentence_u = match outcome.sentence_uncertainties() {
            Some(v) => v,
            None => {
                let texts: Vec<&str> = anchor.iter().map(|s| s.text.as_str()).collect();
                clock.counts().nli_pairs += texts.len() * scorer.pairs_per_unit();
                let ev = clock.time(Stage::Nli, || scorer.evidence(&texts))?;
                ev.iter()
                    .zip(&anchor)
                    .map(|(e, s)| e.support(UnitId::sentence(s.origin())).uncertainty())
                    .collect()
            }
        };
        Aggregation {
            score: all_skip_fallback(&sentence_u, config.aggregation)?,
            clusters: Vec::new(),
        }
    } else if config.cluster_method == ClusterMethod::None {
        k = 1;
        let single = Responsibilities::single(u.len());
        match config.aggregation {
            AggregationMode::Literal => aggregate_literal(&single, &u)?,
            AggregationMode::Global => aggregate_global(&single, &vec![true; u.len()], &u)?,
            AggregationMode::Uniform => aggregate_uniform(&u)?,
        }
    } else {
        // Rows: anchor units first, then reference sentences.
        let reference_sentences: Vec<String> = references
            .iter()
            .enumerate()
            .flat_map(|(i, r)| sentences_of(i + 1, r).into_iter().map(|s| s.text))
            .collect();
        let (texts, unit_rows): (Vec<String>, Vec<usize>) = match config.cluster_units {
            ClusterUnits::PostGranularity => (
                outcome
                    .units
                    .iter()
                    .map(|s| s.unit.text.clone())
                    .chain(reference_sentences.iter().cloned())
                    .collect(),
                (0..u.len()).collect(),
            ),
            ClusterUnits::SentencesOnly => (
                anchor
                    .iter()
                    .map(|s| s.text.clone())
                    .chain(reference_sentences.iter().cloned())
                    .collect(),
                outcome.units.iter().map(|s| s.unit.origin.sentence_index).collect(),
            ),
        };
        let anchor_rows = texts.len() - reference_sentences.len();
        clock.counts().embed_calls += texts.len();
        let embedded = clock.time(Stage::Embed, || providers.embedder.embed_batch(&texts))?;
        let clustering = config.clustering_config();
        let (reduced, selection, gamma) = clock.time(Stage::Cluster, || -> Result<_> {
            let data = crate::clustering::embedding_matrix(&embedded)?;
            let reduced = Pca {
                target_dim: clustering.target_dim,
            }
            .reduce(&data);
            let selection = select_k(&reduced, &clustering)?;
            let gamma = match config.cluster_method {
                ClusterMethod::Kmeans if selection.k > 1 => kmeans_hard(&reduced, selection.k, clustering.seed),
                _ => selection.responsibilities.clone(),
            };
            Ok((reduced, selection, gamma))
        })?;
        k = gamma.k();

        // Expand to one row per anchor unit followed by the reference rows.
        let mut rows: Vec<usize> = unit_rows;
        rows.extend(anchor_rows..texts.len());
        let expanded = gamma.select_rows(&rows);
        let mask: Vec<bool> = (0..rows.len()).map(|i| i < u.len()).collect();
        memberships = (0..u.len()).map(|i| expanded.row(i)).collect();
        if config.debug_dump {
            let mut ids: Vec<String> = match config.cluster_units {
                ClusterUnits::PostGranularity => outcome.units.iter().map(|s| s.unit.unit_id.to_string()).collect(),
                ClusterUnits::SentencesOnly => anchor.iter().map(|s| format!("r0-s{}", s.sentence_index)).collect(),
            };
            for (i, r) in references.iter().enumerate() {
                ids.extend(sentences_of(i + 1, r).iter().map(|s| format!("r{}-s{}", i + 1, s.sentence_index)));
            }
            debug = Some(ClusterDebug {
                unit_ids: ids,
                reduced: matrix_rows(&reduced),
                gamma: gamma.to_rows(),
                k,
                bic_trace: selection.bic_trace.clone(),
                ll_trace: selection.ll_trace.clone(),
            });
        }
        match config.aggregation {
            AggregationMode::Literal => aggregate_literal(&expanded.select_rows(&(0..u.len()).collect::<Vec<_>>()), &u)?,
            AggregationMode::Global => aggregate_global(&expanded, &mask, &u)?,
            AggregationMode::Uniform => aggregate_uniform(&u)?,
        }
    };

    let units = outcome
        .units
        .iter()
        .enumerate()
        .map(|(i, s)| UnitRecord {
            unit_id: s.unit.unit_id.clone(),
            role: s.unit.role,
            sentence_index: s.unit.origin.sentence_index,
            text: s.unit.text.clone(),
            uncertainty: s.uncertainty,
            membership: memberships.get(i).cloned().unwrap_or_default(),
        })
        .collect();
    Ok(PromptRun {
        report: PromptReport {
            prompt_id: sample.prompt_id().to_string(),
            prompt: sample.prompt().to_string(),
            responses: sample.responses().to_vec(),
            factuality: sample.factuality(),
            variant: config.effective_variant(),
            sentences: outcome.records,
            units,
            k,
            clusters: aggregation.clusters,
            score: aggregation.score,
            timing: clock.finish(),
            decomposer_fallback: outcome.decomposer_fallback,
            generation_timed: false,
        },
        debug,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Reports and summary of a corpus run.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRun {
    pub summary: CorpusSummary,
    /// Successful reports in dataset order.
    pub reports: Vec<PromptReport>,
}

/// Score every prompt on a bounded worker pool. When `out_dir` is given,
/// writes `NNNN_<id>.jsonl` per scored prompt and `summary.json`.
pub fn run_corpus(
    dataset: &Dataset,
    config: &PipelineConfig,
    providers: Providers<'_>,
    out_dir: Option<&Path>,
) -> Result<CorpusRun> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    let results: Vec<Result<PromptRun>> = pool.install(|| {
        dataset
            .samples
            .par_iter()
            .map(|s| run_prompt(s, config, providers))
            .collect()
    });

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let mut summary = CorpusSummary {
        variant: config.effective_variant(),
        n_prompts: dataset.samples.len(),
        ..CorpusSummary::default()
    };
    summary.rejected = dataset.rejected.clone();
    let mut reports = Vec::new();
    for (index, (sample, result)) in dataset.samples.iter().zip(results).enumerate() {
        match result {
            Ok(run) => {
                if let Some(dir) = out_dir {
                    let name = report_file_name(index, sample.prompt_id());
                    write_file(&dir.join(&name), &(serde_json::to_string(&run.report)? + "\n"))?;
                    if let Some(debug) = &run.debug {
                        let name = name.trim_end_matches(".jsonl").to_string() + ".clusters.json";
                        write_file(&dir.join(name), &(serde_json::to_string_pretty(debug)? + "\n"))?;
                    }
                }
                summary.timing.add(&run.report.timing);
                summary.scores.push(ScoreLine {
                    index,
                    prompt_id: run.report.prompt_id.clone(),
                    u_final: run.report.score.u_final,
                    fallback_used: run.report.score.fallback_used,
                    decomposer_fallback: run.report.decomposer_fallback,
                    factuality: run.report.factuality,
                });
                reports.push(run.report);
            }
            Err(e) => {
                log::error!("prompt `{}` failed: {e}", sample.prompt_id());
                summary.failures.push(PromptFailure {
                    index,
                    prompt_id: sample.prompt_id().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    summary.n_scored = reports.len();
    summary.n_failed = summary.failures.len();
    if let Some(dir) = out_dir {
        write_file(&dir.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    }
    Ok(CorpusRun { summary, reports })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
