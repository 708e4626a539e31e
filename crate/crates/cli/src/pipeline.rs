//! Augmentation, episode and detection wired together, plus artifact I/O.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use revperf_agent::{Checkpoint, Episode, ExecutionTrace, FailedAttemptLedger, MonitoringBundle, TraceStep};
use revperf_augment::{
    enrich_review, filter_relevant, load_corpus, parse_corpus, retrieve_similar, EmbeddingProvider, EnrichedReview,
    EssentialContext, HashedTfEmbedder, HttpEmbedder,
};
use revperf_core::{classify_review, LogEntry, MetricSample, Review};
use revperf_detect::{aggregate_and_decide, render_report, run_detectors, Outcome, ReproductionReport};
use revperf_device::{load_scenario, AdbBackend, AdbConfig, DeviceBackend, SimDevice};
use revperf_reasoner::{HttpReasoner, Reasoner, ScriptedReasoner};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{BackendKind, EmbedderKind, ReasonerKind, RunConfig};

pub const EXIT_REPRODUCED: i32 = 0;
pub const EXIT_NOT_REPRODUCED: i32 = 1;
pub const EXIT_PREFLIGHT: i32 = 2;

pub fn exit_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Reproduced => EXIT_REPRODUCED,
        Outcome::NotReproduced => EXIT_NOT_REPRODUCED,
    }
}

/// Episode bookkeeping that the step lines do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub started_at: i64,
    pub ended_at: i64,
    pub ledger: FailedAttemptLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ReproductionReport,
    pub enriched: EnrichedReview,
    pub trace: ExecutionTrace,
    pub bundle: MonitoringBundle,
    pub aborted: Option<String>,
}

/// A review given by id (looked up in the corpus) or as a JSON file.
pub fn resolve_review(review_ref: &str, corpus: &[Review]) -> Result<Review> {
    let path = Path::new(review_ref);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading review {}", path.display()))?;
        if let Ok(r) = serde_json::from_str::<Review>(&text) {
            r.validate().map_err(|e| anyhow!("review {}: {e}", path.display()))?;
            return Ok(r);
        }
        let mut reviews = parse_corpus(&text)?;
        if reviews.len() != 1 {
            bail!("review file {} holds {} reviews, expected one", path.display(), reviews.len());
        }
        return Ok(reviews.remove(0));
    }
    corpus
        .iter()
        .find(|r| r.id == review_ref)
        .cloned()
        .ok_or_else(|| anyhow!("review `{review_ref}` is neither a file nor an id in the corpus"))
}

pub fn load_reasoner(config: &RunConfig) -> Result<Box<dyn Reasoner>> {
    Ok(match config.reasoner {
        ReasonerKind::Scripted => {
            let path = config.reasoner_script.as_ref().ok_or_else(|| anyhow!("scripted reasoner needs a script file"))?;
            let text = fs::read_to_string(path).with_context(|| format!("reading script {}", path.display()))?;
            Box::new(ScriptedReasoner::parse(&text).with_context(|| format!("parsing script {}", path.display()))?)
        }
        ReasonerKind::Http => Box::new(HttpReasoner::new(&config.reasoner_config())),
    })
}

fn load_backend(config: &RunConfig, app_id: &str) -> Result<Box<dyn DeviceBackend>> {
    Ok(match config.backend {
        BackendKind::Sim => {
            let path = config.scenario.as_ref().ok_or_else(|| anyhow!("sim backend needs a scenario file"))?;
            let scenario = load_scenario(path).with_context(|| format!("loading scenario {}", path.display()))?;
            Box::new(match config.seed {
                Some(seed) => SimDevice::with_seed(scenario, seed),
                None => SimDevice::new(scenario),
            })
        }
        BackendKind::Adb => {
            let adb = AdbConfig {
                adb_binary_path: config.adb.adb_binary_path.clone(),
                device_serial: config.adb.device_serial.clone(),
                package_name: app_id.to_string(),
                poll_interval_ms: config.adb.poll_interval_ms,
            };
            Box::new(AdbBackend::connect(adb)?)
        }
    })
}

fn embedder(config: &RunConfig) -> Box<dyn EmbeddingProvider> {
    let e = &config.embedder;
    match e.kind {
        EmbedderKind::Hashed => Box::new(HashedTfEmbedder),
        EmbedderKind::Http => Box::new(HttpEmbedder::new(e.endpoint.clone(), e.model.clone(), e.dim, e.retries)),
    }
}

fn context_for(config: &RunConfig, review: &Review) -> EssentialContext {
    config.context.clone().unwrap_or_else(|| EssentialContext::new(format!("Android app {}", review.app_id)))
}

/// Retrieval, relevance filtering and enrichment; the passthrough review
/// when augmentation is off or cannot complete.
pub fn augment(review: &Review, corpus: &[Review], config: &RunConfig, reasoner: &dyn Reasoner) -> EnrichedReview {
    let context = context_for(config, review);
    let keywords = config.keyword_map();
    let passthrough = |note: String| {
        let mut e = EnrichedReview::passthrough(review.clone(), context.clone(), classify_review(&review.text, &keywords));
        e.analysis = note;
        e
    };
    if !config.enable_augmentation {
        return passthrough(String::new());
    }
    let budget = config.reproduction_token_budget;
    let enriched = retrieve_similar(review, corpus, config.k, config.enable_version_filter, embedder(config).as_ref())
        .and_then(|similar| filter_relevant(review, &similar, reasoner, budget))
        .and_then(|relevant| enrich_review(review, &relevant, &context, reasoner, &keywords, budget));
    enriched.unwrap_or_else(|e| passthrough(format!("augmentation unavailable: {e}")))
}

/// Runs the whole pipeline. Errors are pre-flight failures; nothing is
/// written unless every pre-flight check passes.
pub fn run_pipeline(review_ref: &str, corpus_path: Option<&Path>, config: &RunConfig, out: &Path) -> Result<RunOutput> {
    let corpus = match corpus_path {
        Some(p) => load_corpus(p)?,
        None => Vec::new(),
    };
    let review = resolve_review(review_ref, &corpus)?;
    let reasoner = load_reasoner(config)?;
    let mut backend = load_backend(config, &review.app_id)?;
    if out.exists() && !out.is_dir() {
        bail!("output path {} is not a directory", out.display());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let output = execute(&review, &corpus, config, reasoner.as_ref(), backend.as_mut());
    if let Err(e) = write_outputs(out, &output) {
        eprintln!("warning: writing outputs to {}: {e:#}", out.display());
    }
    Ok(output)
}

/// The post-pre-flight part: augmentation, rounds of execution and
/// detection, backend cleanup.
pub fn execute(
    review: &Review,
    corpus: &[Review],
    config: &RunConfig,
    reasoner: &dyn Reasoner,
    backend: &mut dyn DeviceBackend,
) -> RunOutput {
    let enriched = augment(review, corpus, config, reasoner);
    let detect_config = config.detect_config();
    let detect_reasoner = config.detection_reasoner.then_some(reasoner);
    let mut episode = Episode::new(&enriched, reasoner, config.agent_config());
    let mut aborted = None;
    let report = aggregate_and_decide(
        |_round| {
            if aborted.is_none() {
                if let Err(e) = episode.run(backend) {
                    aborted = Some(e.to_string());
                }
            }
            let bundle = episode.bundle();
            let trace = episode.trace().clone();
            (run_detectors(&bundle, &trace, &enriched, detect_reasoner, &detect_config), trace)
        },
        &enriched,
        &detect_config,
    );
    let trace = episode.trace().clone();
    let bundle = episode.bundle();
    drop(episode);
    if let Err(e) = backend.finish() {
        eprintln!("warning: device cleanup: {e}");
    }
    RunOutput { report, enriched, trace, bundle, aborted }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    for item in items {
        writeln!(f, "{}", serde_json::to_string(item)?)?;
    }
    Ok(())
}

pub fn write_report(out: &Path, report: &ReproductionReport) -> Result<()> {
    let (md, json) = render_report(report);
    fs::write(out.join("report.md"), md)?;
    fs::write(out.join("report.json"), json + "\n")?;
    let evidence = out.join("evidence");
    if evidence.is_dir() {
        fs::remove_dir_all(&evidence)?;
    }
    fs::create_dir_all(&evidence)?;
    for (i, item) in report.evidence.iter().enumerate() {
        let name = format!("{:02}-{}-{}.json", i + 1, item.source, item.rule);
        write_json(&evidence.join(name), item)?;
    }
    Ok(())
}

pub fn write_outputs(out: &Path, run: &RunOutput) -> Result<()> {
    write_report(out, &run.report)?;
    write_jsonl(&out.join("trace.jsonl"), &run.trace.steps)?;
    write_jsonl(&out.join("logs.jsonl"), &run.bundle.logs)?;
    write_jsonl(&out.join("metrics.jsonl"), &run.bundle.metrics)?;
    write_jsonl(&out.join("checkpoints.jsonl"), &run.bundle.gui_checkpoints)?;
    write_json(&out.join("enriched.json"), &run.enriched)?;
    let meta = EpisodeMeta {
        started_at: run.trace.started_at,
        ended_at: run.trace.ended_at,
        ledger: run.trace.ledger.clone(),
        aborted: run.aborted.clone(),
    };
    write_json(&out.join("episode.json"), &meta)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A persisted run directory loaded back for re-detection.
pub struct PersistedRun {
    pub enriched: EnrichedReview,
    pub trace: ExecutionTrace,
    pub bundle: MonitoringBundle,
}

pub fn load_bundle(dir: &Path) -> Result<PersistedRun> {
    let enriched: EnrichedReview = read_json(&dir.join("enriched.json"))?;
    let meta: EpisodeMeta = read_json(&dir.join("episode.json"))?;
    let steps: Vec<TraceStep> = read_jsonl(&dir.join("trace.jsonl"))?;
    let logs: Vec<LogEntry> = read_jsonl(&dir.join("logs.jsonl"))?;
    let metrics: Vec<MetricSample> = read_jsonl(&dir.join("metrics.jsonl"))?;
    let checkpoints: Vec<Checkpoint> = read_jsonl(&dir.join("checkpoints.jsonl"))?;
    let trace = ExecutionTrace { steps, ledger: meta.ledger, started_at: meta.started_at, ended_at: meta.ended_at };
    Ok(PersistedRun { enriched, trace, bundle: MonitoringBundle::new(logs, metrics, checkpoints) })
}

/// Re-runs the analyzers once over a persisted run. No new evidence can
/// appear between rounds, so a single round is used.
pub fn redetect(run: &PersistedRun, config: &RunConfig, reasoner: Option<&dyn Reasoner>) -> ReproductionReport {
    let mut detect_config = config.detect_config();
    detect_config.detection_rounds_max = 1;
    aggregate_and_decide(
        |_| (run_detectors(&run.bundle, &run.trace, &run.enriched, reasoner, &detect_config), run.trace.clone()),
        &run.enriched,
        &detect_config,
    )
}

/// Output directory paths, for callers that want to inspect a run.
pub fn output_files(out: &Path) -> Vec<PathBuf> {
    ["report.json", "report.md", "trace.jsonl", "logs.jsonl", "metrics.jsonl", "checkpoints.jsonl", "enriched.json", "episode.json"]
        .iter()
        .map(|f| out.join(f))
        .collect()
}
