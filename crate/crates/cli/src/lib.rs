//! Scenario-driven front end for the `ltransport` engine.
//!
//! A scenario file names a coefficient source, solver settings and the
//! outputs of interest; each subcommand turns it into a JSON [`RunReport`].

pub mod commands;
pub mod error;
pub mod model;
pub mod report;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

pub use commands::Command;
pub use error::{exit, CliError};
pub use report::{RunReport, Status};
pub use scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Tabular,
}

/// Per-invocation options shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Record wall time in the report (which then differs between runs).
    pub timing: bool,
    pub format: Format,
    pub out: Option<PathBuf>,
}

/// Loads, applies overrides and runs one scenario.
pub fn run_file(path: &Path, command: &Command, options: &RunOptions) -> Result<RunReport, CliError> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = options.seed {
        scenario.solver.seed = seed;
    }
    let started = Instant::now();
    let mut report = command.run(&scenario)?;
    if options.timing {
        report.wall_time_seconds = Some(started.elapsed().as_secs_f64());
    }
    Ok(report)
}

/// Exit code for a finished run.
pub fn report_exit_code(report: &RunReport) -> u8 {
    match report.status {
        Status::Ok => exit::OK,
        Status::Violation => exit::TOLERANCE,
    }
}

/// The report rendered in the requested format.
pub fn render(report: &RunReport, format: Format) -> String {
    match format {
        Format::Text => report.to_json(),
        Format::Tabular => report.to_tabular(),
    }
}

/// Writes `<stem>.json` and, for tabular output, one `<stem>-<k>.csv` per
/// matrix. Returns the paths written.
pub fn write_outputs(report: &RunReport, dir: &Path, stem: &str, format: Format) -> Result<Vec<PathBuf>, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, report.to_json()).map_err(io(&json_path))?;
    written.push(json_path);
    if format == Format::Tabular {
        for (k, (_, m)) in report.matrices().into_iter().enumerate() {
            let path = dir.join(format!("{stem}-{k}.csv"));
            std::fs::write(&path, report::csv_table(m)).map_err(io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Outcome of one scenario in a batch.
#[derive(Debug)]
pub struct BatchItem {
    pub scenario: PathBuf,
    pub stem: String,
    pub outcome: Result<(RunReport, Vec<PathBuf>), CliError>,
}

impl BatchItem {
    pub fn exit_code(&self) -> u8 {
        match &self.outcome {
            Ok((report, _)) => report_exit_code(report),
            Err(e) => e.exit_code(),
        }
    }
}

/// Output stems `<file stem>-<command>`, suffixed with the position in the
/// batch when two files share a stem.
fn batch_stems(paths: &[PathBuf], command: &Command) -> Vec<String> {
    let base: Vec<String> = paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            format!("{stem}-{}", command.name())
        })
        .collect();
    base.iter()
        .enumerate()
        .map(|(k, b)| {
            if base.iter().filter(|x| *x == b).count() > 1 {
                format!("{b}-{k}")
            } else {
                b.clone()
            }
        })
        .collect()
}

/// Runs `command` on every scenario in parallel, writing each report into
/// `dir` under a unique name.
pub fn run_batch(paths: &[PathBuf], command: &Command, options: &RunOptions, dir: &Path) -> Vec<BatchItem> {
    let stems = batch_stems(paths, command);
    paths
        .par_iter()
        .zip(stems)
        .map(|(path, stem)| {
            let outcome = run_file(path, command, options)
                .and_then(|report| write_outputs(&report, dir, &stem, options.format).map(|w| (report, w)));
            BatchItem {
                scenario: path.clone(),
                stem,
                outcome,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_stems_are_disambiguated() {
        let paths = vec![
            PathBuf::from("a/rot.toml"),
            PathBuf::from("b/rot.toml"),
            PathBuf::from("flat.toml"),
        ];
        assert_eq!(
            batch_stems(&paths, &Command::Check),
            vec!["rot-check-0", "rot-check-1", "flat-check"]
        );
    }
}
