#![allow(dead_code)]

use std::io::Write;
use std::sync::OnceLock;

use ocr::config::RunConfig;
use ocr::pipeline::{self, Artifacts};

/// Models built once per test binary from the default configuration.
pub fn default_run() -> &'static (RunConfig, Artifacts) {
    static RUN: OnceLock<(RunConfig, Artifacts)> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = RunConfig::default();
        let a = pipeline::build(&cfg, 1).expect("default pipeline builds");
        (cfg, a)
    })
}

/// Writes straight to the process stdout so the line shows up in the test
/// log whether or not the test passes.
pub fn report_line(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}
