//! Experiment configuration, orchestration and reporting.

mod config;
mod report;
mod runner;

pub use config::{
    CodebookSpec, ConfigError, ExperimentConfig, PcbSection, ScalarAllocation, SubbandSection,
    SweepKind, WidebandSection, ZfSection,
};
pub use report::{ReportRow, RunReport};
pub use runner::{run, RunError, RunOptions};

use std::path::Path;

/// Which report files to write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitMode {
    Csv,
    Json,
    Both,
}

/// Write the report (and the resolved-config echo) into `out_dir` as
/// `<name>.csv` / `<name>.json` / `config_echo.toml`.
pub fn emit(report: &RunReport, out_dir: &Path, mode: EmitMode) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    if matches!(mode, EmitMode::Csv | EmitMode::Both) {
        let path = out_dir.join(format!("{}.csv", report.config.name));
        std::fs::write(&path, report.to_csv())?;
        written.push(path);
    }
    if matches!(mode, EmitMode::Json | EmitMode::Both) {
        let path = out_dir.join(format!("{}.json", report.config.name));
        std::fs::write(&path, report.to_json())?;
        written.push(path);
    }
    let echo = out_dir.join("config_echo.toml");
    std::fs::write(&echo, report.config.to_toml_string())?;
    written.push(echo);
    Ok(written)
}
