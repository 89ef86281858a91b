//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.
//!
//! Everything runs on the offline mock providers.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lfuq_core::aggregation::aggregate_literal;
use lfuq_core::clustering::{fit_gmm, select_k, ClusteringConfig, Responsibilities};
use lfuq_core::corpus::{Dataset, SampleSet, SentenceRef};
use lfuq_core::eval::{pearson, spearman};
use lfuq_core::providers::{HashedBowEmbedder, LexicalNli, NliLogits, NliRule, RuleDecomposer, ScriptedNli};
use lfuq_core::routing::{route, DecisionKind, GranularityConfig, RoutingSignal};
use lfuq_core::scoring::{binary_entail, NliDistribution};
use lfuq_core::{run_corpus, run_prompt, MethodVariant, PipelineConfig, Providers};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn quiet() -> PipelineConfig {
    PipelineConfig {
        report_timings: false,
        ..PipelineConfig::default()
    }
}

fn offline<'a>(nli: &'a dyn lfuq_core::providers::NliProvider, embed: &'a HashedBowEmbedder, dec: &'a RuleDecomposer) -> Providers<'a> {
    Providers {
        nli,
        embedder: embed,
        decomposer: dec,
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn sample(id: &str, responses: &[&str]) -> SampleSet {
    SampleSet::new(id, "Describe the subject.", responses.iter().map(|s| s.to_string()).collect(), Some(0.5)).unwrap()
}

const ADA: [&str; 3] = [
    "Ada Lovelace was born in 1815 in London. She worked with Charles Babbage on the Analytical Engine. \
     She wrote the first published algorithm. Her father was Lord Byron.",
    "Ada Lovelace was born in 1815. She collaborated with Charles Babbage on the Analytical Engine.",
    "Ada Lovelace, born 1816 in London, was a mathematician. Her father was the poet Lord Byron.",
];

fn telescoping() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let k = rng.random_range(1..8);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut rng, k)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let gamma = Responsibilities::from_rows(&rows).map_err(|e| e.to_string())?;
        let got = aggregate_literal(&gamma, &u).map_err(|e| e.to_string())?.score.u_final;
        let mean = u.iter().sum::<f64>() / n as f64;
        worst = worst.max((got - mean).abs());
    }
    ensure(worst <= 1e-9, || format!("literal deviates from mean(U) by {worst:e}"))?;

    let (nli, embed, dec) = (LexicalNli::new(), HashedBowEmbedder::new(64, 0), RuleDecomposer::new());
    let cases = [
        sample("ada", &ADA),
        sample("ada2", &[ADA[0], ADA[1]]),
        sample("short", &["Grace Hopper joined the Navy and wrote a compiler.", "Hopper served in the Navy."]),
    ];
    let mut e2e: f64 = 0.0;
    for s in &cases {
        let mut lit = quiet();
        lit.apply_variant(MethodVariant::AgscLiteral);
        let mut flat = quiet();
        flat.apply_variant(MethodVariant::AblateNoCluster);
        let a = run_prompt(s, &lit, offline(&nli, &embed, &dec)).map_err(|e| e.to_string())?;
        let b = run_prompt(s, &flat, offline(&nli, &embed, &dec)).map_err(|e| e.to_string())?;
        e2e = e2e.max((a.report.score.u_final - b.report.score.u_final).abs());
    }
    ensure(e2e <= 1e-9, || format!("agsc_literal vs ablate_no_cluster differ by {e2e:e}"))?;
    Ok(format!("max |literal - mean| {worst:.1e}, end-to-end {e2e:.1e}"))
}

fn blobs(seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(360);
    for (cx, cy) in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)] {
        for _ in 0..60 {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            v.extend_from_slice(&[cx + dx, cy + dy]);
        }
    }
    DMatrix::from_row_slice(180, 2, &v)
}

fn gmm_oracle() -> Check {
    let mut hits = 0;
    let mut worst_drop: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    for seed in 0..100u64 {
        let data = blobs(1000 + seed);
        let cfg = ClusteringConfig {
            seed,
            ..Default::default()
        };
        let sel = select_k(&data, &cfg).map_err(|e| e.to_string())?;
        if sel.k == 3 {
            hits += 1;
        }
        let mut traces = vec![sel.ll_trace.clone()];
        for k in 2..=4 {
            let fit = fit_gmm(&data, k, &cfg).map_err(|e| e.to_string())?;
            for row in fit.responsibilities.to_rows() {
                worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
            }
            traces.push(fit.ll_trace);
        }
        for row in sel.responsibilities.to_rows() {
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        for t in &traces {
            for w in t.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
        }
    }
    ensure(hits >= 95, || format!("K=3 selected in {hits}/100 seeds"))?;
    ensure(worst_drop <= 1e-8, || format!("log-likelihood dropped by {worst_drop:e}"))?;
    ensure(worst_row <= 1e-9, || format!("responsibility row off by {worst_row:e}"))?;
    Ok(format!("K=3 in {hits}/100, max LL drop {worst_drop:.1e}, max row error {worst_row:.1e}"))
}

fn routing_table() -> Check {
    let cfg = GranularityConfig::default();
    let fixtures = [
        (0.60, 0.10, 0.30),
        (0.20, 0.15, 0.65),
        (0.40, 0.10, 0.50),
        // gap exactly equal to the threshold
        (0.25, 0.15, 0.60),
    ];
    let got: Vec<DecisionKind> = fixtures
        .iter()
        .map(|&(e, c, n)| route(&RoutingSignal::new(SentenceRef::default(), NliDistribution::new(e, c, n)), &cfg))
        .collect();
    let want = [DecisionKind::Keep, DecisionKind::Skip, DecisionKind::Decompose, DecisionKind::Skip];
    ensure(got == want, || format!("got {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn entailment_properties() -> Check {
    for c in [-1000.0, -3.0, 0.0, 2.5, 1000.0] {
        let v = binary_entail(NliLogits::new(0.0, 0.0, c));
        ensure(v == 0.5, || format!("binary_entail((0,0,{c})) = {v}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (e, c, n) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let d = rng.random_range(0.1..2.0);
        let lo = binary_entail(NliLogits::new(e, c, n));
        let hi = binary_entail(NliLogits::new(e + d, c, n));
        ensure(hi > lo, || format!("not increasing at ({e}, {c}, {n}) + {d}"))?;
    }
    let extremes = [
        (NliLogits::new(1000.0, -1000.0, 0.0), 1.0),
        (NliLogits::new(-1000.0, 1000.0, 0.0), 0.0),
        (NliLogits::new(1000.0, 1000.0, -1000.0), 0.5),
        (NliLogits::new(-1000.0, -1000.0, 1000.0), 0.5),
    ];
    for (l, want) in extremes {
        let v = binary_entail(l);
        ensure(v.is_finite() && (v - want).abs() <= 1e-12, || format!("{l:?} -> {v}"))?;
    }
    Ok("symmetry, 1000 monotone draws, |logit| = 1000 finite".into())
}

const ITEMS: [&str; 10] = [
    "bridge", "tower", "library", "canal", "museum", "harbor", "cathedral", "railway", "observatory", "theater",
];

/// Ten-sentence anchors where `h` sentences carry a fabricated claim.
fn synthetic_corpus(n: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| {
            let p = i as f64 / (n - 1) as f64;
            let h = (p * 10.0).round() as usize;
            let anchor: Vec<String> = ITEMS
                .iter()
                .enumerate()
                .map(|(j, item)| {
                    if j < h {
                        format!("The {item} in town {i} was reportedly designed by a fictional engineer in {}.", 1800 + j)
                    } else {
                        format!("The {item} in town {i} opened to the public in {}.", 1800 + j)
                    }
                })
                .collect();
            let reference = |k: usize| {
                ITEMS
                    .iter()
                    .enumerate()
                    .map(|(j, item)| format!("Town {i} has a {item} that opened in {}.", 1800 + j + k))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            SampleSet::new(
                format!("syn{i:02}"),
                format!("Describe the landmarks of town {i}."),
                vec![anchor.join(" "), reference(0), reference(1), reference(2)],
                Some(1.0 - p),
            )
            .unwrap()
        })
        .collect();
    Dataset {
        samples,
        rejected: Vec::new(),
    }
}

fn hallucination_nli() -> ScriptedNli {
    ScriptedNli::new(NliLogits::new(4.0, -2.0, 0.0))
        .with_rule(NliRule::hypothesis("fictional", NliLogits::new(-3.0, 4.0, 0.0)))
}

fn synthetic_correlation() -> Check {
    let ds = synthetic_corpus(50);
    let (nli, embed, dec) = (hallucination_nli(), HashedBowEmbedder::new(64, 0), RuleDecomposer::new());
    let mut cfg = quiet();
    cfg.apply_variant(MethodVariant::Agsc);
    let run = run_corpus(&ds, &cfg, offline(&nli, &embed, &dec), None).map_err(|e| e.to_string())?;
    ensure(run.summary.n_failed == 0, || format!("{} prompts failed", run.summary.n_failed))?;
    let u: Vec<f64> = run.reports.iter().map(|r| r.score.u_final).collect();
    let f: Vec<f64> = run.reports.iter().map(|r| r.factuality.unwrap()).collect();
    let scc = spearman(&u, &f).map_err(|e| e.to_string())?;
    ensure(scc <= -0.8, || format!("spearman {scc:.4}"))?;
    Ok(format!("spearman {scc:.4} over {} prompts", u.len()))
}

/// Five off-topic sentences, three compound partially-supported ones and
/// two supported ones per anchor.
fn efficiency_corpus(n: usize) -> (Dataset, ScriptedNli) {
    let samples = (0..n)
        .map(|i| {
            let mut anchor = Vec::new();
            for j in 0..5 {
                anchor.push(format!("The weather on day {j} of trip {i} was mild."));
            }
            for j in 0..3 {
                anchor.push(format!("Scholar {i} studied optics in year {j} and received award {j}."));
            }
            for j in 0..2 {
                anchor.push(format!("Scholar {i} was born in city {j}."));
            }
            let reference = format!("Scholar {i} was born in city 0. Scholar {i} studied optics.");
            SampleSet::new(format!("eff{i:02}"), format!("Who is scholar {i}?"), vec![anchor.join(" "), reference.clone(), reference], None)
                .unwrap()
        })
        .collect();
    let nli = ScriptedNli::new(NliLogits::new(4.0, -2.0, 0.0))
        .with_rule(NliRule::hypothesis("weather", NliLogits::new(0.0, 0.0, 4.0)))
        .with_rule(NliRule::hypothesis("studied optics in year", NliLogits::new(2.0, -1.0, 2.6)));
    (
        Dataset {
            samples,
            rejected: Vec::new(),
        },
        nli,
    )
}

fn efficiency() -> Check {
    let (ds, nli) = efficiency_corpus(8);
    let embed = HashedBowEmbedder::new(64, 0);
    let measure = |variant| -> Result<(usize, f64), String> {
        let dec = RuleDecomposer::with_latency(Duration::from_millis(4));
        let mut cfg = PipelineConfig {
            workers: 2,
            ..PipelineConfig::default()
        };
        cfg.apply_variant(variant);
        let run = run_corpus(&ds, &cfg, offline(&nli, &embed, &dec), None).map_err(|e| e.to_string())?;
        let t = &run.summary.timing;
        Ok((t.decomposer_calls, t.t_atom_ms / run.summary.n_scored as f64))
    };
    let (a_calls, a_atom) = measure(MethodVariant::Agsc)?;
    let (b_calls, b_atom) = measure(MethodVariant::LuqAtomic)?;
    ensure(b_calls > 0 && a_calls * 2 <= b_calls, || format!("decomposer calls {a_calls} vs {b_calls}"))?;
    ensure(a_atom <= 0.5 * b_atom, || format!("mean t_atom {a_atom:.1} ms vs {b_atom:.1} ms"))?;
    Ok(format!(
        "calls {a_calls}/{b_calls} ({:.0}%), mean t_atom {a_atom:.1}/{b_atom:.1} ms",
        100.0 * a_calls as f64 / b_calls as f64
    ))
}

fn correlation_module() -> Check {
    let r = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).map_err(|e| e.to_string())?;
    ensure(r == -1.0, || format!("pearson = {r:e}"))?;
    // Ranks (1.5, 1.5, 3) against (1, 2, 3): 1.5 / sqrt(1.5 * 2).
    let tied = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    ensure((tied - 0.75f64.sqrt()).abs() <= 1e-9, || format!("tied spearman {tied}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..5.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-3.0..3.0)).collect();
    let base = spearman(&x, &y).map_err(|e| e.to_string())?;
    for m in 0..100 {
        let a = rng.random_range(0.1..3.0);
        let b = rng.random_range(-10.0..10.0);
        let mapped: Vec<f64> = match m % 4 {
            0 => x.iter().map(|v| a * v + b).collect(),
            1 => x.iter().map(|v| (a * v).exp() + b).collect(),
            2 => x.iter().map(|v| v.powi(3) * a + b).collect(),
            _ => x.iter().map(|v| (a * v).atan() + b).collect(),
        };
        let s = spearman(&mapped, &y).map_err(|e| e.to_string())?;
        ensure((s - base).abs() <= 1e-12, || format!("map {m}: {s} vs {base}"))?;
    }
    Ok(format!("pearson -1 exact, tied {tied:.12}, 100 monotone maps"))
}

fn write_dataset(ds: &Dataset, path: &Path) {
    let lines: Vec<String> = ds.samples.iter().map(|s| serde_json::to_string(s).unwrap()).collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = tmp.path().join("data.jsonl");
    write_dataset(&synthetic_corpus(12), &dataset);
    let config = tmp.path().join("run.conf");
    std::fs::write(
        &config,
        "seed = 17\nvariant = agsc\nworkers = 4\nreport.timings = false\nreport.debug_dump = true\nproviders.nli.kind = lexical\n",
    )
    .map_err(|e| e.to_string())?;
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_lfuq"))
            .args(["score", "--dataset"])
            .arg(&dataset)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        snapshots.push(dir_snapshot(&out));
    }
    ensure(snapshots[0].len() == 25, || format!("{} files written", snapshots[0].len()))?;
    ensure(snapshots[0] == snapshots[1], || "report directories differ".into())?;
    let bytes: usize = snapshots[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical", snapshots[0].len()))
}

fn degenerate_inputs() -> Check {
    let (lex, embed, dec) = (LexicalNli::new(), HashedBowEmbedder::new(64, 0), RuleDecomposer::new());
    let neutral = ScriptedNli::new(NliLogits::new(0.0, 0.0, 5.0));
    let cases = [
        sample("n2", &[ADA[0], ADA[1]]),
        sample("single", &["Ada Lovelace wrote an algorithm.", ADA[1], ADA[2]]),
        sample("identical", &[ADA[0], ADA[0], ADA[0]]),
        sample("all_skip", &["Nice weather today. It was fun.", "Something else entirely.", "Unrelated."]),
    ];
    let mut runs = 0;
    for v in MethodVariant::ALL {
        let mut cfg = quiet();
        cfg.apply_variant(v);
        for s in &cases {
            for nli in [&lex as &dyn lfuq_core::providers::NliProvider, &neutral] {
                let r = run_prompt(s, &cfg, offline(nli, &embed, &dec))
                    .map_err(|e| format!("{v} on {}: {e}", s.prompt_id()))?
                    .report;
                ensure((0.0..=1.0).contains(&r.score.u_final), || format!("{v}: U = {}", r.score.u_final))?;
                runs += 1;
            }
        }
    }
    let mut cfg = quiet();
    cfg.apply_variant(MethodVariant::Agsc);
    let skip = run_prompt(&cases[3], &cfg, offline(&neutral, &embed, &dec)).map_err(|e| e.to_string())?.report;
    ensure(skip.score.fallback_used && skip.units.is_empty(), || "all-skip fallback not raised".into())?;
    let two = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    let sel = select_k(&two, &ClusteringConfig::default()).map_err(|e| e.to_string())?;
    ensure(sel.k == 1, || format!("N=2 gave K={}", sel.k))?;
    Ok(format!("{runs} prompt runs, all-skip U {:.4}, N=2 -> K=1", skip.score.u_final))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 telescoping identity", telescoping, Some(Duration::from_secs(1))),
        ("2 gmm oracle suite", gmm_oracle, Some(Duration::from_secs(30))),
        ("3 routing truth table", routing_table, None),
        ("4 entailment properties", entailment_properties, None),
        ("5 synthetic correlation", synthetic_correlation, Some(Duration::from_secs(60))),
        ("6 adaptive efficiency", efficiency, None),
        ("7 correlation module", correlation_module, None),
        ("8 determinism", determinism, None),
        ("9 degenerate inputs", degenerate_inputs, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, budget) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
