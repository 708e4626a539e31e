use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revperf::config::{ReasonerKind, RunConfig};
use revperf::pipeline;
use revperf_detect::{Analyzer, Outcome, ReproductionReport};
use revperf_device::{load_scenario, SimDevice};
use revperf_reasoner::ScriptedReasoner;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn revperf<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revperf")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_args(review: &str, scenario: &str, script: &str, config: &str, out: &str) -> Vec<String> {
    let corpus = fixture("corpus.jsonl");
    ["run", "--review", review, "--corpus", &corpus, "--config", config, "--scenario", scenario, "--reasoner-script", script, "--out", out]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_str().unwrap().to_string()
}

#[test]
fn missing_scenario_is_a_preflight_failure_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (config, script) = (fixture("config.toml"), fixture("scripts/lag.script"));
    let o = revperf(&run_args("notes-lag", "/nonexistent/lag.scenario", &script, &config, path(&out)));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario"));
    assert!(!out.exists());
}

#[test]
fn unknown_review_and_bad_config_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (config, script, scenario) =
        (fixture("config.toml"), fixture("scripts/lag.script"), fixture("scenarios/lag.scenario"));
    let o = revperf(&run_args("no-such-review", &scenario, &script, &config, path(&out)));
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "k = 0\nenabled_analyzers = [\"LogAnalyzer\", \"Oracle\"]\n").unwrap();
    let o = revperf(&run_args("notes-lag", &scenario, &script, path(&bad), path(&out)));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("k: ") && err.contains("enabled_analyzers[1]"), "{err}");
    assert!(!out.exists());
}

#[test]
fn review_can_be_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let review = dir.path().join("review.json");
    fs::write(
        &review,
        r#"{"id":"adhoc","app_id":"org.example.notes","app_version":"3.2.0","rating":1,"text":"opening a note is slow","timestamp":0}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let (config, script, scenario) =
        (fixture("config.toml"), fixture("scripts/lag.script"), fixture("scenarios/lag.scenario"));
    let o = revperf(&run_args(path(&review), &scenario, &script, &config, path(&out)));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: ReproductionReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.review_id, "adhoc");
    for f in pipeline::output_files(&out) {
        assert!(f.exists(), "{}", f.display());
    }
}

fn config(script: &str, scenario: &str) -> RunConfig {
    let mut c = revperf::validate_config(&fixtures().join("config.toml")).unwrap();
    c.reasoner = ReasonerKind::Scripted;
    c.reasoner_script = Some(fixtures().join("scripts").join(script));
    c.scenario = Some(fixtures().join("scenarios").join(scenario));
    c
}

fn execute(c: &RunConfig, script: &str, scenario: &str, review: &str) -> pipeline::RunOutput {
    let text = fs::read_to_string(fixtures().join("scripts").join(script)).unwrap();
    let reasoner = ScriptedReasoner::parse(&text).unwrap();
    let mut dev = SimDevice::new(load_scenario(&fixtures().join("scenarios").join(scenario)).unwrap());
    let corpus = revperf_augment::load_corpus(&fixtures().join("corpus.jsonl")).unwrap();
    let r = corpus.iter().find(|r| r.id == review).unwrap().clone();
    pipeline::execute(&r, &corpus, c, &reasoner, &mut dev)
}

#[test]
fn disabling_an_analyzer_removes_only_its_verdicts() {
    let full = execute(&config("clean.script", "clean.scenario"), "clean.script", "clean.scenario", "notes-clean");
    for drop in Analyzer::ALL {
        let mut c = config("clean.script", "clean.scenario");
        c.enabled_analyzers.retain(|a| a.parse::<Analyzer>().unwrap() != drop);
        let out = execute(&c, "clean.script", "clean.scenario", "notes-clean");
        assert_eq!(out.report.rounds.len(), full.report.rounds.len());
        for (a, b) in out.report.rounds.iter().zip(&full.report.rounds) {
            let kept: Vec<_> = b.verdicts.iter().filter(|v| v.source != drop).cloned().collect();
            assert_eq!(a.verdicts, kept, "without {drop}");
        }
    }
}

#[test]
fn ablating_the_matching_analyzer_loses_the_issue() {
    let mut c = config("lag.script", "lag.scenario");
    c.enabled_analyzers = vec!["ResourceDiagnoser".into(), "UIInspector".into()];
    let out = execute(&c, "lag.script", "lag.scenario", "notes-lag");
    assert_eq!(out.report.outcome, Outcome::NotReproduced);
}

#[test]
fn augmentation_off_passes_the_review_through() {
    let mut c = config("lag.script", "lag.scenario");
    c.enable_augmentation = false;
    let out = execute(&c, "lag.script", "lag.scenario", "notes-lag");
    assert!(out.enriched.related.is_empty());
    assert_eq!(out.enriched.symptom_summary, out.enriched.original.text);
    assert_eq!(out.report.outcome, Outcome::Reproduced);

    // retrieval respects the version filter toggle
    let on = execute(&config("lag.script", "lag.scenario"), "lag.script", "lag.scenario", "notes-lag");
    assert!(on.enriched.related.iter().all(|r| r.app_version == "3.2.0"));
    let mut c = config("lag.script", "lag.scenario");
    c.enable_version_filter = false;
    let off = execute(&c, "lag.script", "lag.scenario", "notes-lag");
    assert!(off.enriched.related.iter().any(|r| r.app_version != "3.2.0"));
}

#[test]
fn classify_lists_every_review() {
    let o = revperf(&["classify", "--corpus", &fixture("corpus.jsonl")]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().any(|l| l == "notes-r5\t-"));
    assert!(text.lines().any(|l| l.starts_with("notes-anr\t") && l.contains("FreezeUnresponsive")));
}

#[test]
fn detect_reruns_on_a_persisted_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (config, script, scenario) =
        (fixture("config.toml"), fixture("scripts/leak.script"), fixture("scenarios/leak.scenario"));
    assert_eq!(revperf(&run_args("notes-leak", &scenario, &script, &config, path(&out))).status.code(), Some(0));
    let again = dir.path().join("again");
    let o = revperf(&["detect", "--bundle", path(&out), "--out", path(&again)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first: ReproductionReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let second: ReproductionReport =
        serde_json::from_str(&fs::read_to_string(again.join("report.json")).unwrap()).unwrap();
    let rules = |r: &ReproductionReport| r.evidence.iter().map(|i| i.rule.clone()).collect::<Vec<_>>();
    assert_eq!(rules(&second), rules(&first));
    assert_eq!(second.total_operations, first.total_operations);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Outcome: Reproduced"));

    let o = revperf(&["detect", "--bundle", path(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(2));
}
