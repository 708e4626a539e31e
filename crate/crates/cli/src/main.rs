use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use revperf::config::{BackendKind, ReasonerKind, RunConfig};
use revperf::pipeline::{self, load_reasoner};
use revperf_augment::load_corpus;

#[derive(Parser)]
#[command(name = "revperf", version, about = "Reproduce performance complaints from app reviews")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Augment a review, drive the device and report whether the issue showed up.
    Run {
        /// Review id in the corpus, or a JSON file holding one review.
        #[arg(long)]
        review: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Use the scripted reasoner with this script.
        #[arg(long)]
        reasoner_script: Option<PathBuf>,
        /// Seed for the simulated device.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the keyword categories of every review in a corpus.
    Classify {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-run the analyzers over a persisted run directory.
    Detect {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        reasoner_script: Option<PathBuf>,
        /// Write report.json, report.md and evidence/ here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, ExitCode> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    revperf::validate_config(path).map_err(|diags| {
        for d in diags {
            eprintln!("config error: {d}");
        }
        ExitCode::from(pipeline::EXIT_PREFLIGHT as u8)
    })
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(pipeline::EXIT_PREFLIGHT as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { review, corpus, config, backend, scenario, reasoner_script, seed, out } => {
            let mut cfg = match load_config(config.as_deref()) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(b) = backend {
                cfg.backend = b;
            }
            if scenario.is_some() {
                cfg.scenario = scenario;
            }
            if reasoner_script.is_some() {
                cfg.reasoner_script = reasoner_script;
                cfg.reasoner = ReasonerKind::Scripted;
            }
            if seed.is_some() {
                cfg.seed = seed;
            }
            match pipeline::run_pipeline(&review, corpus.as_deref(), &cfg, &out) {
                Ok(run) => {
                    if let Some(a) = &run.aborted {
                        eprintln!("warning: episode aborted: {a}");
                    }
                    let r = &run.report;
                    println!(
                        "{:?} after {} operation(s) and {} round(s); report in {}",
                        r.outcome,
                        r.total_operations,
                        r.rounds_used,
                        out.join("report.md").display()
                    );
                    ExitCode::from(pipeline::exit_code(r.outcome) as u8)
                }
                Err(e) => fail(format!("{e:#}")),
            }
        }
        Command::Classify { corpus, config } => {
            let cfg = match load_config(config.as_deref()) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let reviews = match load_corpus(&corpus) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            let classifier = cfg.keyword_map().compile();
            for r in &reviews {
                let cats: Vec<_> = classifier.classify(&r.text).iter().map(|c| c.as_str()).collect();
                println!("{}\t{}", r.id, if cats.is_empty() { "-".to_string() } else { cats.join(",") });
            }
            ExitCode::SUCCESS
        }
        Command::Detect { bundle, config, reasoner_script, out } => {
            let mut cfg = match load_config(config.as_deref()) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let run = match pipeline::load_bundle(&bundle) {
                Ok(r) => r,
                Err(e) => return fail(format!("{e:#}")),
            };
            let reasoner = match reasoner_script {
                Some(p) => {
                    cfg.reasoner = ReasonerKind::Scripted;
                    cfg.reasoner_script = Some(p);
                    match load_reasoner(&cfg) {
                        Ok(r) => Some(r),
                        Err(e) => return fail(format!("{e:#}")),
                    }
                }
                None => None,
            };
            let report = pipeline::redetect(&run, &cfg, reasoner.as_deref());
            if let Some(out) = out {
                if let Err(e) = std::fs::create_dir_all(&out).map_err(anyhow::Error::from).and_then(|_| pipeline::write_report(&out, &report)) {
                    eprintln!("warning: writing report to {}: {e:#}", out.display());
                }
            }
            print!("{}", revperf_detect::render_report(&report).0);
            ExitCode::from(pipeline::exit_code(report.outcome) as u8)
        }
    }
}
