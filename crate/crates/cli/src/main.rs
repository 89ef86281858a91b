use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lfuq_core::eval::{compare, group_by_variant, write_table};
use lfuq_core::pipeline::{load_reports, read_report_file};
use lfuq_core::{build_providers, load_dataset, run_corpus, Error, MethodVariant, PipelineConfig};

#[derive(Parser)]
#[command(name = "lfuq", version, about = "Uncertainty scores for long-form generations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every prompt in a dataset and write one report per prompt.
    Score {
        #[arg(long)]
        dataset: PathBuf,
        /// Flat `key = value` config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured method.
        #[arg(long)]
        variant: Option<MethodVariant>,
    },
    /// Correlate report scores with factuality labels, one row per variant.
    Eval {
        /// Report directory; immediate subdirectories are read as well.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the routing record of one anchor sentence.
    Inspect {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        sentence: usize,
        /// Prompt within the file, for multi-record report files.
        #[arg(long)]
        prompt: Option<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Dataset(_) => 3,
        _ => 1,
    }
}

fn score(dataset: &Path, config: Option<&Path>, out: &Path, variant: Option<MethodVariant>) -> Result<(), Error> {
    let mut cfg = match config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = variant {
        cfg.apply_variant(v);
    }
    cfg.report_dir = Some(out.to_path_buf());
    let ds = load_dataset(dataset)?;
    for r in &ds.rejected {
        log::warn!("line {}: rejected `{}`: {}", r.line, r.prompt_id, r.reason);
    }
    let providers = build_providers(&cfg)?;
    let run = run_corpus(&ds, &cfg, providers.providers(), Some(out))?;
    let s = &run.summary;
    println!(
        "scored {}/{} prompts ({} failed, {} rejected) -> {}",
        s.n_scored,
        s.n_prompts,
        s.n_failed,
        s.rejected.len(),
        out.display()
    );
    Ok(())
}

fn collect_reports(dir: &Path) -> Result<Vec<lfuq_core::PromptReport>, Error> {
    let mut all = load_reports(dir)?;
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        all.extend(load_reports(&sub)?);
    }
    Ok(all)
}

fn eval(reports: &Path, out: &Path) -> Result<(), Error> {
    let rows = compare(&group_by_variant(collect_reports(reports)?));
    let file = std::fs::File::create(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_table(&rows, file)?;
    for r in &rows {
        println!("{:<18} pcc {:>7.4}  scc {:>7.4}  n {}", r.variant, r.pcc, r.scc, r.n_prompts);
    }
    Ok(())
}

fn inspect(report: &Path, sentence: usize, prompt: Option<&str>) -> Result<(), Error> {
    let reports = read_report_file(report)?;
    let r = match prompt {
        Some(id) => reports.iter().find(|r| r.prompt_id == id),
        None => reports.first(),
    }
    .ok_or_else(|| Error::InvalidInput(format!("no matching report in {}", report.display())))?;
    let rec = r.sentences.get(sentence).ok_or_else(|| {
        Error::InvalidInput(format!("sentence {sentence} out of range; anchor has {}", r.sentences.len()))
    })?;
    let units: Vec<_> = r.units.iter().filter(|u| u.sentence_index == sentence).collect();
    let view = serde_json::json!({
        "prompt_id": r.prompt_id,
        "sentence": rec,
        "units": units,
        "u_final": r.score.u_final,
    });
    println!("{}", serde_json::to_string_pretty(&view)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Score {
            dataset,
            config,
            out,
            variant,
        } => score(dataset, config.as_deref(), out, *variant),
        Command::Eval { reports, out } => eval(reports, out),
        Command::Inspect {
            report,
            sentence,
            prompt,
        } => inspect(report, *sentence, prompt.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
