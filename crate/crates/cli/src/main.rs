use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use plume_survey::config::{parse_config, ExperimentSpec};
use plume_survey::harness::{replicate_draw, run_experiment};
use plume_survey::mission::{run_mission, MissionConfig, MissionResult};
use plume_survey::plume::write_ground_truth;

#[derive(Parser)]
#[command(version, about = "Multi-drone toxic plume survey simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Configuration file (flat key = value)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and print its summary row
    Run {
        #[command(flatten)]
        common: Common,
        /// Directory for the mission log (sample tables and summary)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run the configured experiment and write its result table
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Result CSV; defaults to the config's `out`, else stdout
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Check a configuration and print it with all defaults filled in
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Export the ground-truth box maxima and unsafe mask
    DumpField {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when absent
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(common: &Common) -> Result<ExperimentSpec, Failure> {
    let text = match &common.config {
        Some(path) => {
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => String::new(),
    };
    let mut spec = parse_config(&text).map_err(|e| {
        let origin = common
            .config
            .as_deref()
            .map_or("<defaults>".to_string(), |p| p.display().to_string());
        Failure::Validation(format!("{origin}: {e}"))
    })?;
    if let Some(seed) = common.seed {
        spec.mission.seed = seed;
    }
    Ok(spec)
}

/// Mission of replicate 0: the source and seed the first sweep row uses.
fn first_mission(spec: &ExperimentSpec) -> MissionConfig {
    let (source, seed) = replicate_draw(spec, 0);
    let mut config = spec.mission.clone();
    config.source.position = source;
    config.seed = seed;
    config
}

fn write_to(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let mut f = BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            );
            body(&mut f).with_context(|| format!("writing {}", p.display()))?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock).context("writing to stdout")?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, out } => {
            let spec = load(&common)?;
            let config = first_mission(&spec);
            let result = run_mission(&config).context("mission failed")?;
            println!("{}", MissionResult::SUMMARY_HEADER);
            println!("{}", result.summary_row());
            if let Some(dir) = out {
                result
                    .write_log(&dir)
                    .with_context(|| format!("writing mission log to {}", dir.display()))?;
            }
        }
        Command::Sweep { common, out } => {
            let spec = load(&common)?;
            let table = run_experiment(&spec).map_err(|e| Failure::Validation(e.to_string()))?;
            let target = out.or_else(|| spec.out.clone());
            let csv = table.to_csv();
            write_to(target.as_deref(), |w| w.write_all(csv.as_bytes()))?;
        }
        Command::Validate { common } => {
            let spec = load(&common)?;
            print!("{}", plume_survey::config::serialize_config(&spec));
        }
        Command::DumpField { common, out } => {
            let spec = load(&common)?;
            let config = first_mission(&spec);
            let field = config.field().context("building the plume field")?;
            write_to(out.as_deref(), |w| {
                write_ground_truth(
                    &field,
                    &config.region,
                    config.threshold(),
                    config.subsample_n,
                    w,
                )
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
