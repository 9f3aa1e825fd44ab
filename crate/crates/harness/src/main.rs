//! Command-line entry point for running ablation suites, plotting summary
//! figures, and dumping suite configurations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dawn_harness::{canonical_suite, plot, run_suite, suite_names, ExperimentSuite, Variant};

#[derive(Parser)]
#[command(name = "dawn", about = "residual RL ablation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a shipped suite by name, or a single run config from a JSON file.
    Run {
        /// Suite name or path to a config.json
        target: String,
        /// Seeds to sweep (defaults to the suite's own list, or 0 for a file)
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Config preset the suite variants start from
        #[arg(long, default_value = "desk")]
        profile: String,
        /// Output directory (default: $DAWN_OUT or ./runs)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Render one metric from a summary.csv as an SVG figure.
    Plot {
        /// Path to a suite summary.csv
        summary: PathBuf,
        /// Metric to plot (e.g. success_rate, grounding_error)
        #[arg(long)]
        fig: String,
        /// Output SVG path (default: <fig>.svg next to the summary)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a suite's variants as JSON.
    DumpConfig {
        /// Suite name
        suite: String,
        /// Config preset
        #[arg(long, default_value = "desk")]
        profile: String,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn default_out() -> PathBuf {
    std::env::var_os("DAWN_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn build_suite(target: &str, profile: &str, seeds: Option<Vec<u64>>) -> Result<ExperimentSuite, String> {
    let mut suite = if suite_names().contains(&target) {
        canonical_suite(target, profile).map_err(|e| e.to_string())?
    } else {
        let text = std::fs::read_to_string(target)
            .map_err(|e| format!("{target}: not a suite name and not a readable file ({e})"))?;
        let config = serde_json::from_str(&text).map_err(|e| format!("{target}: {e}"))?;
        let name = PathBuf::from(target)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        ExperimentSuite::new(&name, vec![Variant { name: "run".into(), config }], vec![0])
            .map_err(|e| e.to_string())?
    };
    if let Some(s) = seeds {
        if s.is_empty() {
            return Err("--seeds needs at least one value".into());
        }
        suite.seeds = s;
    }
    Ok(suite)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { target, seeds, profile, out, workers } => {
            let suite = match build_suite(&target, &profile, seeds) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let out = out.unwrap_or_else(default_out);
            match run_suite(&suite, &out, workers) {
                Ok(report) => {
                    println!(
                        "{}: {} runs completed, {} failed, artifacts in {}",
                        suite.name,
                        report.completed,
                        report.failures.len(),
                        report.out_dir.display()
                    );
                    for f in &report.failures {
                        eprintln!("  FAILED {}/seed{}: {}", f.variant, f.seed, f.message);
                    }
                    if report.failures.is_empty() { Ok(()) } else { Err(String::new()) }
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Command::Plot { summary, fig, out } => {
            let out = out.unwrap_or_else(|| {
                summary.with_file_name(format!("{fig}.svg"))
            });
            plot::plot_metric(&summary, &fig, &out)
                .map(|()| println!("wrote {}", out.display()))
                .map_err(|e| e.to_string())
        }
        Command::DumpConfig { suite, profile } => match canonical_suite(&suite, &profile) {
            Ok(s) => {
                let entries: Vec<serde_json::Value> = s
                    .variants
                    .iter()
                    .map(|v| {
                        serde_json::json!({
                            "name": v.name,
                            "config": v.config,
                        })
                    })
                    .collect();
                println!("{}", serde_json::to_string_pretty(&entries).unwrap());
                Ok(())
            }
            Err(e) => Err(e.to_string()),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.is_empty() {
                eprintln!("error: {e}");
            }
            ExitCode::FAILURE
        }
    }
}
