//! Command-line front end: one subcommand per experiment.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Scale;
use crate::error::{CliError, Result};
use crate::experiments::{load_experiment, run_experiment, ExperimentConfig, ExperimentKind, RunContext};
use crate::report::{emit_report, CsvFileSink, Format, NullSink, Report, RowSink};

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_OUT: &str = "results";

#[derive(Debug, Parser)]
#[command(name = "kdlab", version, about = "Uncertainty experiments for knowledge distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inter-student variance against teacher noise.
    TeacherNoiseSweep(RunArgs),
    /// Network student spread against initialization noise.
    InitNoiseSweep(RunArgs),
    /// Teacher-model and ground-truth bootstrap over resample sizes.
    BootstrapSweep(RunArgs),
    /// Teacher and hard-label student entropy by correctness group.
    EntropyCompare(RunArgs),
    /// Averaging and variance weighting over teacher responses.
    VarianceAwareSweep(RunArgs),
    /// Entropy suppression in toy sequence distillation.
    SequenceSuppression(RunArgs),
    /// Teacher-to-student noise transfer in toy sequence distillation.
    SequenceNoise(RunArgs),
}

impl Command {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Command::TeacherNoiseSweep(_) => ExperimentKind::TeacherNoiseSweep,
            Command::InitNoiseSweep(_) => ExperimentKind::InitNoiseSweep,
            Command::BootstrapSweep(_) => ExperimentKind::BootstrapSweep,
            Command::EntropyCompare(_) => ExperimentKind::EntropyCompare,
            Command::VarianceAwareSweep(_) => ExperimentKind::VarianceAwareSweep,
            Command::SequenceSuppression(_) => ExperimentKind::SequenceSuppression,
            Command::SequenceNoise(_) => ExperimentKind::SequenceNoise,
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::TeacherNoiseSweep(a)
            | Command::InitNoiseSweep(a)
            | Command::BootstrapSweep(a)
            | Command::EntropyCompare(a)
            | Command::VarianceAwareSweep(a)
            | Command::SequenceSuppression(a)
            | Command::SequenceNoise(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated output formats.
    #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
    pub format: Vec<Format>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Ensemble and replicate sizes of 1000 instead of 200 where unset.
    #[arg(long)]
    pub paper_scale: bool,
}

/// What a completed run produced.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

/// Runs `config` on a dedicated pool of `threads` workers.
pub fn run_with_threads(
    config: &ExperimentConfig,
    seed: u64,
    scale: Scale,
    threads: usize,
    sink: &mut dyn RowSink,
) -> Result<Report> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| run_experiment(config, RunContext { seed, scale, sink }))
}

/// Loads, runs and emits one experiment. Outputs are written even when a
/// tolerance check fails; the failure is then returned.
pub fn execute(kind: ExperimentKind, args: &RunArgs) -> Result<Outcome> {
    let loaded = load_experiment(kind, args.config.as_deref())?;
    let seed = args.seed.or(loaded.master_seed).unwrap_or(DEFAULT_SEED);
    let out_dir = args
        .out
        .clone()
        .or(loaded.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut formats = args.format.clone();
    formats.sort();
    formats.dedup();
    let scale = Scale { paper: args.paper_scale };

    let report = if formats.contains(&Format::Csv) {
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        let mut sink = CsvFileSink::create(&csv_path(&out_dir, kind))?;
        run_with_threads(&loaded.experiment, seed, scale, args.threads, &mut sink)?
    } else {
        run_with_threads(&loaded.experiment, seed, scale, args.threads, &mut NullSink)?
    };
    let files = emit_report(&report, &formats, &out_dir)?;
    enforce(&report)?;
    Ok(Outcome { report, files })
}

fn csv_path(out_dir: &Path, kind: ExperimentKind) -> PathBuf {
    out_dir.join(format!("{}.csv", kind.name()))
}

/// Fails with every breached check and assertion named.
pub fn enforce(report: &Report) -> Result<()> {
    let mut failures: Vec<String> = report
        .failed_checks()
        .map(|c| {
            format!(
                "row {} ({}) {}: relative error {:.4} > tolerance {:.4}",
                c.row, c.label, c.metric, c.relative_error, c.tolerance
            )
        })
        .collect();
    failures.extend(report.failed_assertions().map(|a| format!("{}: {}", a.label, a.detail)));
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("{}: {}", report.experiment, failures.join("; "))))
    }
}

/// Parses arguments, runs, reports and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let kind = cli.command.kind();
    match execute(kind, cli.command.args()) {
        Ok(outcome) => {
            let r = &outcome.report;
            println!(
                "{}: {} rows, {} checks passed, {:.2}s",
                r.experiment,
                r.rows.len(),
                r.checks.len(),
                r.wall_clock_seconds
            );
            for path in &outcome.files {
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "kdlab",
            "teacher-noise-sweep",
            "--seed",
            "7",
            "--format",
            "csv,svg",
            "--threads",
            "2",
            "--paper-scale",
        ])
        .unwrap();
        let args = cli.command.args();
        assert_eq!(args.seed, Some(7));
        assert_eq!(args.format, vec![Format::Csv, Format::Svg]);
        assert_eq!(args.threads, 2);
        assert!(args.paper_scale);
        assert_eq!(cli.command.kind(), ExperimentKind::TeacherNoiseSweep);
    }

    #[test]
    fn rejects_unknown_format() {
        assert!(Cli::try_parse_from(["kdlab", "sequence-noise", "--format", "xml"]).is_err());
    }

    #[test]
    fn every_experiment_has_a_subcommand() {
        for kind in ExperimentKind::ALL {
            let cli = Cli::try_parse_from(["kdlab", kind.name()]).unwrap();
            assert_eq!(cli.command.kind(), kind);
        }
    }
}
