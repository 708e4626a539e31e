//! Orchestration for the `revperf` binary: configuration, the end-to-end
//! pipeline and the on-disk run layout.

pub mod config;
pub mod pipeline;

pub use config::{parse_config, validate_config, BackendKind, Diagnostic, ReasonerKind, RunConfig};
pub use pipeline::{
    exit_code, load_bundle, redetect, run_pipeline, write_outputs, RunOutput, EXIT_NOT_REPRODUCED, EXIT_PREFLIGHT,
    EXIT_REPRODUCED,
};
