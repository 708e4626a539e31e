//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revperf::config::{ReasonerKind, RunConfig};
use revperf::pipeline;
use revperf_agent::{run_episode, AgentConfig};
use revperf_augment::{retrieve_similar, EmbeddingProvider, EnrichedReview, EssentialContext, HashedTfEmbedder};
use revperf_core::{extract_frame_stats, parse_logcat_line, IssueCategory, MetricSample, Review};
use revperf_detect::logs::log_rules;
use revperf_detect::resources::resource_rules;
use revperf_detect::ui::ui_rules;
use revperf_detect::{analyze_logs, leak_detected, Artifact, DetectConfig, Outcome, ReproductionReport};
use revperf_device::{load_scenario, FaultSpec, SimDevice};
use revperf_reasoner::{compress_history, estimate_tokens, Conversation, Message, ScriptedReasoner};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn scenario(name: &str) -> PathBuf {
    fixtures().join("scenarios").join(format!("{name}.scenario"))
}

fn script(name: &str) -> PathBuf {
    fixtures().join("scripts").join(format!("{name}.script"))
}

struct CliRun {
    code: i32,
    out: PathBuf,
    stderr: String,
}

impl CliRun {
    fn report(&self) -> Result<ReproductionReport, String> {
        let text = fs::read_to_string(self.out.join("report.json")).map_err(|e| format!("report.json: {e} ({})", self.stderr))?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }

    fn file(&self, name: &str) -> Vec<u8> {
        fs::read(self.out.join(name)).unwrap_or_default()
    }
}

fn revperf_run(review: &str, scenario_name: &str, script_name: &str, out: &Path) -> CliRun {
    let output = Command::new(env!("CARGO_BIN_EXE_revperf"))
        .arg("run")
        .args(["--review", review])
        .arg("--corpus")
        .arg(fixtures().join("corpus.jsonl"))
        .arg("--config")
        .arg(fixtures().join("config.toml"))
        .args(["--backend", "sim"])
        .arg("--scenario")
        .arg(scenario(scenario_name))
        .arg("--reasoner-script")
        .arg(script(script_name))
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    CliRun {
        code: output.status.code().unwrap_or(-1),
        out: out.to_path_buf(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

fn fixture_config(script_name: &str, scenario_name: &str) -> RunConfig {
    let mut c = revperf::validate_config(&fixtures().join("config.toml")).expect("fixture config is valid");
    c.reasoner = ReasonerKind::Scripted;
    c.reasoner_script = Some(script(script_name));
    c.scenario = Some(scenario(scenario_name));
    c
}

fn corpus() -> Vec<Review> {
    revperf_augment::load_corpus(&fixtures().join("corpus.jsonl")).expect("fixture corpus")
}

fn review(id: &str) -> Review {
    corpus().into_iter().find(|r| r.id == id).expect("review in corpus")
}

// 1 ---------------------------------------------------------------------

const FRAME_LINES: [&str; 6] = [
    "06-01 12:00:00.100  1234  1234 I EGL_emulation: app_time_stats: avg=29.89ms min=16.77ms max=34.09ms count=34",
    "06-01 12:00:01.100  1234  1234 I EGL_emulation: app_time_stats: avg=29.90ms min=16.80ms max=36.15ms count=34",
    "06-01 12:00:05.100  1234  1234 I EGL_emulation: app_time_stats: avg=3456.54ms min=3456.54ms max=3456.54ms count=1",
    "06-01 12:00:06.100  1234  1234 I EGL_emulation: app_time_stats: avg=18.71ms min=2.13ms max=33.71ms count=42",
    "06-01 12:00:07.100  1234  1234 I EGL_emulation: app_time_stats: avg=29.93ms min=16.52ms max=33.59ms count=34",
    "06-01 12:00:08.100  1234  1234 I EGL_emulation: app_time_stats: avg=29.92ms min=16.57ms max=35.96ms count=34",
];

/// (avg, min, max, count) for each line, as printed.
const FRAME_VALUES: [(f64, f64, f64, u32); 6] = [
    (29.89, 16.77, 34.09, 34),
    (29.90, 16.80, 36.15, 34),
    (3456.54, 3456.54, 3456.54, 1),
    (18.71, 2.13, 33.71, 42),
    (29.93, 16.52, 33.59, 34),
    (29.92, 16.57, 35.96, 34),
];

fn golden_log_parsing() -> Check {
    let start = Instant::now();
    let mut logs = Vec::new();
    for (line, want) in FRAME_LINES.iter().zip(FRAME_VALUES) {
        let entry = parse_logcat_line(line, 2025).ok_or_else(|| format!("unparsed: {line}"))?;
        let f = extract_frame_stats(&entry).ok_or_else(|| format!("no frame stats: {line}"))?;
        ensure!((f.avg_ms, f.min_ms, f.max_ms, f.count) == want, "{line} -> {f:?}");
        logs.push(entry);
    }
    let bundle = revperf_agent::MonitoringBundle::new(logs, Vec::new(), Vec::new());
    let e = EnrichedReview::passthrough(review("notes-lag"), EssentialContext::new("notes"), Default::default());
    let v = analyze_logs(&bundle, &e, None, &DetectConfig::default());
    ensure!(v.issues.len() == 1 && v.issues[0].rule == "R1", "issues {:?}", v.issues);
    let flagged: Vec<usize> = v.issues[0]
        .artifacts
        .iter()
        .filter_map(|a| match a {
            Artifact::Log { index, .. } => Some(*index),
            _ => None,
        })
        .collect();
    ensure!(flagged == [2], "flagged lines {flagged:?}");
    ensure!(start.elapsed() < Duration::from_secs(1), "took {:?}", start.elapsed());
    Ok(())
}

// 2 ---------------------------------------------------------------------

fn fixture_suite() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = [
        ("notes-clean", "clean", Outcome::NotReproduced, None, 1),
        ("notes-lag", "lag", Outcome::Reproduced, Some(IssueCategory::SlowInteraction), 0),
        ("notes-leak", "leak", Outcome::Reproduced, Some(IssueCategory::ExcessiveResource), 0),
        ("notes-anr", "anr", Outcome::Reproduced, Some(IssueCategory::FreezeUnresponsive), 0),
    ];
    for (id, name, outcome, category, code) in cases {
        let run = revperf_run(id, name, name, &dir.path().join(name));
        ensure!(run.code == code, "{name}: exit {} ({})", run.code, run.stderr.trim());
        let report = run.report()?;
        ensure!(report.outcome == outcome, "{name}: {:?}", report.outcome);
        match category {
            Some(c) => ensure!(report.issue_type.contains(&c), "{name}: issue types {:?}", report.issue_type),
            None => {
                ensure!(report.evidence.is_empty(), "clean evidence {:?}", report.evidence);
                let raised: usize = report.rounds.iter().flat_map(|r| &r.verdicts).map(|v| v.issues.len()).sum();
                ensure!(raised == 0, "clean rounds raised {raised} evidence item(s)");
                let files = fs::read_dir(run.out.join("evidence")).map_err(|e| e.to_string())?.count();
                ensure!(files == 0, "clean wrote {files} evidence files");
            }
        }
    }
    ensure!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
    Ok(())
}

// 3 ---------------------------------------------------------------------

const WORDS: &[&str] = &[
    "slow", "lag", "scroll", "note", "open", "freeze", "battery", "drain", "update", "keyboard", "typing", "crash",
    "list", "image", "load", "sync", "login", "screen", "rotate", "dark", "memory", "hot", "search", "video",
];
const VERSIONS: &[&str] = &["1.0", "1.1", "2.0"];

fn synthetic_reviews(rng: &mut impl Rng, n: usize) -> Vec<Review> {
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..8);
            let words: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            Review {
                id: format!("s{i:04}"),
                app_id: "com.example.app".into(),
                app_version: VERSIONS[rng.random_range(0..VERSIONS.len())].into(),
                rating: rng.random_range(1..=5),
                text: words.join(" "),
                timestamp: i as i64,
                developer_reply: None,
            }
        })
        .collect()
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn retrieval_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let corpus = synthetic_reviews(&mut rng, 1000);
    let provider = HashedTfEmbedder;
    let vectors: Vec<Vec<f64>> =
        corpus.iter().map(|r| provider.embed(&r.text).map(|v| v.values().to_vec())).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    for q in 0..50 {
        let target = &corpus[q * 20];
        let got: Vec<String> = retrieve_similar(target, &corpus, 10, true, &provider)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|r| r.id)
            .collect();
        let qv = &vectors[q * 20];
        let mut all: Vec<(f64, &str)> = corpus
            .iter()
            .zip(&vectors)
            .filter(|(r, _)| r.id != target.id && r.app_version == target.app_version)
            .map(|(r, v)| (oracle_cosine(qv, v), r.id.as_str()))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let want: Vec<String> = all.iter().take(10).map(|(_, id)| id.to_string()).collect();
        ensure!(got == want, "query {}: {got:?} != {want:?}", target.id);
    }
    ensure!(start.elapsed() < Duration::from_secs(5), "took {:?}", start.elapsed());
    Ok(())
}

// 4 ---------------------------------------------------------------------

fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let sx: f64 = (0..ys.len()).map(|i| i as f64).sum();
    let sxx: f64 = (0..ys.len()).map(|i| (i * i) as f64).sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = ys.iter().enumerate().map(|(i, y)| i as f64 * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn worst_drop(ys: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            worst = worst.max(ys[i] - ys[j]);
        }
    }
    worst
}

fn series(rng: &mut ChaCha8Rng, family: usize) -> Vec<f64> {
    let n = rng.random_range(3..50usize);
    let base = 40_960.0;
    match family {
        0 => vec![base; n],
        1 => {
            let step = rng.random_range(-100..500) as f64;
            (0..n).map(|i| base + step * i as f64).collect()
        }
        2 => {
            let period = rng.random_range(2..10usize);
            let dip = rng.random_range(50..1500) as f64;
            (0..n).map(|i| base + 300.0 * i as f64 - if i % period == 0 { dip } else { 0.0 }).collect()
        }
        _ => {
            let drift = rng.random_range(0..400) as f64;
            (0..n).map(|i| base + drift * i as f64 + rng.random_range(-1500..1500) as f64).collect()
        }
    }
}

fn leak_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = DetectConfig::default();
    let mut positives = 0;
    for case in 0..200 {
        let ys = series(&mut rng, case % 4);
        let rise = ys[ys.len() - 1] - ys[0];
        let want = rise > 0.0 && ls_slope(&ys) > 50.0 && worst_drop(&ys) < 0.2 * rise;
        ensure!(leak_detected(&ys, cfg.leak_slope_kb_per_sample, cfg.leak_drawdown_ratio) == want, "case {case}: {ys:?}");
        let metrics: Vec<MetricSample> = ys
            .iter()
            .enumerate()
            .map(|(i, &h)| MetricSample {
                timestamp: i as i64,
                heap_kb: h as u64,
                total_mem_kb: h as u64,
                swap_kb: 0,
                cpu_percent: 5.0,
                activity_count: 1,
                process_running: true,
            })
            .collect();
        let bundle = revperf_agent::MonitoringBundle::new(Vec::new(), metrics, Vec::new());
        let fired = resource_rules(&bundle, "com.example.app", &cfg).iter().any(|i| i.rule == "H1");
        ensure!(fired == want, "case {case}: rule {fired}, oracle {want}");
        positives += want as usize;
    }
    ensure!(positives > 0 && positives < 200, "degenerate sample: {positives} positives");
    Ok(())
}

// 5 ---------------------------------------------------------------------

fn termination() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = revperf_run("notes-clean", "clean", "always-fail", dir.path());
    ensure!(run.code == 1, "exit {} ({})", run.code, run.stderr.trim());
    let report = run.report()?;
    ensure!(report.outcome == Outcome::NotReproduced, "{:?}", report.outcome);
    ensure!(report.rounds_used == 3 && report.rounds.len() == 3, "rounds {}", report.rounds_used);
    for n in 1..=3 {
        ensure!(report.analysis.contains(&format!("Round {n}:")), "analysis lacks round {n}");
    }
    ensure!(report.analysis.contains("no log evidence"), "analysis: {}", report.analysis);

    // the detectors were consulted once per analyzer per round
    let config = fixture_config("always-fail", "clean");
    let text = fs::read_to_string(script("always-fail")).map_err(|e| e.to_string())?;
    let reasoner = ScriptedReasoner::parse(&text).map_err(|e| e.to_string())?;
    let mut dev = SimDevice::new(load_scenario(&scenario("clean")).map_err(|e| e.to_string())?);
    let out = pipeline::execute(&review("notes-clean"), &corpus(), &config, &reasoner, &mut dev);
    let detect_calls = reasoner.transcript().iter().filter(|t| t.channel == "detect").count();
    ensure!(out.report.rounds_used == 3 && detect_calls == 9, "rounds {}, detect calls {detect_calls}", out.report.rounds_used);
    Ok(())
}

// 6 ---------------------------------------------------------------------

fn compression() -> Check {
    let mut conv = Conversation::with_channel("agent");
    conv.push_pinned(Message::system("You drive an Android app to reproduce a complaint. ".repeat(10)));
    conv.push_pinned(Message::user("Complaint to reproduce:\nOpening a note lags for seconds."));
    for i in 0..30 {
        conv.push(Message::user(format!("Step {i} | screen Main\n{}", "node line with bounds and ids ".repeat(60))));
        conv.push(Message::assistant(format!("Thought: try entry {i}\nACTION: CLICK id=item_{i}")));
    }
    ensure!(estimate_tokens(&conv) > 10_000, "history only {} tokens", estimate_tokens(&conv));
    let small = compress_history(&conv, 10_000, None).map_err(|e| e.to_string())?;
    ensure!(estimate_tokens(&small) <= 10_000, "compressed to {}", estimate_tokens(&small));
    for &i in conv.pinned() {
        ensure!(small.messages().contains(&conv.messages()[i]), "pinned message {i} lost");
    }
    let n = conv.messages().len();
    let m = small.messages().len();
    ensure!(small.messages()[m - 6..] == conv.messages()[n - 6..], "last three exchanges changed");
    let again = compress_history(&small, 10_000, None).map_err(|e| e.to_string())?;
    ensure!(again == small, "not idempotent");
    Ok(())
}

// 7 ---------------------------------------------------------------------

fn heap_cap_death() -> Check {
    let sc = load_scenario(&scenario("leak")).map_err(|e| e.to_string())?;
    let per_action = sc
        .faults
        .iter()
        .find_map(|f| match f {
            FaultSpec::MemoryLeak { per_action_kb } => Some(*per_action_kb),
            _ => None,
        })
        .ok_or("leak fixture has no leak fault")?;
    ensure!((sc.baseline.heap_kb, per_action, sc.heap_cap_kb) == (40_960, 2_048, 65_536), "fixture constants changed");
    // the first state-changing action that pushes the heap past the cap
    let death_step = (1..).find(|n| sc.baseline.heap_kb + per_action * n > sc.heap_cap_kb).unwrap() as usize;

    let config = fixture_config("leak", "leak");
    let text = fs::read_to_string(script("leak")).map_err(|e| e.to_string())?;
    let reasoner = ScriptedReasoner::parse(&text).map_err(|e| e.to_string())?;
    let mut dev = SimDevice::new(sc);
    let out = pipeline::execute(&review("notes-leak"), &corpus(), &config, &reasoner, &mut dev);
    let metrics = &out.bundle.metrics;
    // one sample at start, then one after every executed step
    let first_dead = metrics.iter().position(|m| !m.process_running).ok_or("process never died")?;
    ensure!(first_dead == death_step, "died after step {first_dead}, expected {death_step}");
    ensure!(out.report.outcome == Outcome::Reproduced, "{:?}", out.report.outcome);
    let h3 = out.report.evidence.iter().find(|i| i.rule == "H3").ok_or("no H3 evidence")?;
    let death_logged = h3
        .artifacts
        .iter()
        .any(|a| matches!(a, Artifact::Log { entry, .. } if entry.message.contains("has died")));
    ensure!(death_logged, "death log missing from evidence");
    Ok(())
}

// 8 ---------------------------------------------------------------------

fn walk(rng: &mut ChaCha8Rng) -> String {
    let mut screen = "home";
    let mut text = String::new();
    for i in 0..rng.random_range(4..20usize) {
        let cmd = if rng.random_range(0..5) == 0 {
            format!("WAIT ms={}", rng.random_range(100..3000))
        } else {
            let (cmd, next) = match (screen, rng.random_range(0..3)) {
                ("home", 0) => ("CLICK id=open_note".to_string(), "editor"),
                ("home", 1) => ("CLICK id=fab_add".to_string(), "editor"),
                ("home", _) => ("CLICK id=open_archive".to_string(), "archive"),
                ("editor", 0) => (format!("INPUT_TEXT id=note_body value=\"line {i}\""), "editor"),
                ("editor", 1) => ("CLICK id=save".to_string(), "home"),
                ("editor", _) => ("CLICK id=nav_back".to_string(), "home"),
                _ => ("CLICK id=nav_back".to_string(), "home"),
            };
            screen = next;
            cmd
        };
        text.push_str(&format!("[agent]\n{cmd}\n---\n"));
    }
    text + "[agent repeat]\nINVOKE_DETECTOR\n---\n[transition repeat]\nNO\n"
}

fn clean_soundness() -> Check {
    let sc = load_scenario(&scenario("clean")).map_err(|e| e.to_string())?;
    let cfg = DetectConfig::default();
    let e = EnrichedReview::passthrough(review("notes-clean"), EssentialContext::new("notes"), Default::default());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..100 {
        let reasoner = ScriptedReasoner::parse(&walk(&mut rng)).map_err(|e| e.to_string())?;
        let mut dev = SimDevice::with_seed(sc.clone(), seed);
        let agent = AgentConfig { step_budget: 40, ..Default::default() };
        let out = run_episode(&e, &mut dev, &reasoner, &agent).map_err(|e| e.to_string())?;
        let fired: Vec<String> = log_rules(&out.bundle.logs, &cfg)
            .into_iter()
            .chain(resource_rules(&out.bundle, &sc.app_id, &cfg))
            .chain(ui_rules(&out.bundle, &out.trace, &cfg))
            .map(|i| i.rule)
            .collect();
        ensure!(fired.is_empty(), "seed {seed}: {fired:?}");
    }
    Ok(())
}

// 9 ---------------------------------------------------------------------

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = revperf_run("notes-anr", "anr", "anr", &dir.path().join("a"));
    let b = revperf_run("notes-anr", "anr", "anr", &dir.path().join("b"));
    ensure!(a.code == b.code, "exit codes {} vs {}", a.code, b.code);
    for f in ["report.json", "trace.jsonl", "logs.jsonl"] {
        let (x, y) = (a.file(f), b.file(f));
        ensure!(!x.is_empty(), "{f} missing");
        ensure!(x == y, "{f} differs");
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("golden frame-stat log parsing", golden_log_parsing),
        ("end-to-end fixture suite", fixture_suite),
        ("retrieval oracle equivalence", retrieval_oracle),
        ("leak heuristic oracle equivalence", leak_oracle),
        ("termination after three failed rounds", termination),
        ("history compression", compression),
        ("heap-cap death", heap_cap_death),
        ("clean-run soundness", clean_soundness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(()) => println!("criterion {}: PASS  {name}", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
