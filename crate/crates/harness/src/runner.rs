//! Seed-sweep runner: dispatches independent (variant, seed) runs to a
//! bounded worker pool, persists per-run artifacts, and aggregates a
//! cross-seed summary. A failed run is recorded and does not kill siblings.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use dawn_core::config::RunConfig;
use dawn_core::trainer::{MetricPoint, Trainer};
use dawn_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::stats::mean_ci;
use crate::suite::ExperimentSuite;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub variant: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug)]
pub struct SuiteReport {
    pub out_dir: PathBuf,
    pub completed: usize,
    pub failures: Vec<RunFailure>,
}

struct Job {
    variant: String,
    seed: u64,
    config: RunConfig,
    dir: PathBuf,
}

fn run_dir(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join(variant).join(format!("seed{seed}"))
}

/// Write one run's metric stream as `step,variant,seed,metric,value` with
/// LF line endings. Float formatting uses Rust's shortest round-trip form,
/// so identical runs produce byte-identical files.
pub fn write_metrics_csv(
    path: &Path,
    variant: &str,
    seed: u64,
    metrics: &[MetricPoint],
) -> Result<()> {
    let mut buf = String::from("step,variant,seed,metric,value\n");
    for m in metrics {
        buf.push_str(&format!("{},{},{},{},{}\n", m.step, variant, seed, m.metric, m.value));
    }
    fs::write(path, buf)?;
    Ok(())
}

fn execute(job: &Job) -> Result<()> {
    fs::create_dir_all(&job.dir)?;
    let mut cfg = job.config.clone();
    cfg.seed = job.seed;
    fs::write(job.dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    let mut trainer = Trainer::new(cfg)?;
    let report = trainer.run(Some(&job.dir))?;
    write_metrics_csv(&job.dir.join("metrics.csv"), &job.variant, job.seed, &report.metrics)?;
    Ok(())
}

/// Run every (variant, seed) pair of the suite under `out`, using at most
/// `workers` threads. Returns the report; artifacts land on disk either way.
pub fn run_suite(suite: &ExperimentSuite, out: &Path, workers: usize) -> Result<SuiteReport> {
    let suite_dir = out.join(&suite.name);
    fs::create_dir_all(&suite_dir)?;
    let mut jobs = Vec::new();
    for v in &suite.variants {
        for &seed in &suite.seeds {
            jobs.push(Job {
                variant: v.name.clone(),
                seed,
                config: v.config.clone(),
                dir: run_dir(&suite_dir, &v.name, seed),
            });
        }
    }
    let total = jobs.len();
    let queue = Arc::new(Mutex::new(jobs));
    let failures = Arc::new(Mutex::new(Vec::<RunFailure>::new()));
    let workers = workers.max(1).min(total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let queue = Arc::clone(&queue);
            let failures = Arc::clone(&failures);
            scope.spawn(move || loop {
                let job = match queue.lock().unwrap().pop() {
                    Some(j) => j,
                    None => break,
                };
                let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    execute(&job)
                }));
                let message = match outcome {
                    Ok(Ok(())) => continue,
                    Ok(Err(e)) => e.to_string(),
                    Err(p) => p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into()),
                };
                failures.lock().unwrap().push(RunFailure {
                    variant: job.variant.clone(),
                    seed: job.seed,
                    message,
                });
            });
        }
    });
    let failures = Arc::try_unwrap(failures).unwrap().into_inner().unwrap();
    fs::write(suite_dir.join("failures.json"), serde_json::to_string_pretty(&failures)?)?;
    write_summary(suite, &suite_dir)?;
    Ok(SuiteReport { out_dir: suite_dir, completed: total - failures.len(), failures })
}

/// Aggregate all per-run metrics.csv files under the suite directory into
/// summary.csv: per (variant, step, metric), the cross-seed mean and 95% CI.
pub fn write_summary(suite: &ExperimentSuite, suite_dir: &Path) -> Result<()> {
    // key: (variant index for ordering, variant, step, metric) -> values
    let mut table: BTreeMap<(usize, String, u64, String), Vec<f64>> = BTreeMap::new();
    for (vi, v) in suite.variants.iter().enumerate() {
        for &seed in &suite.seeds {
            let path = run_dir(suite_dir, &v.name, seed).join("metrics.csv");
            let Ok(text) = fs::read_to_string(&path) else { continue };
            for line in text.lines().skip(1) {
                let mut it = line.split(',');
                let (Some(step), Some(_), Some(_), Some(metric), Some(value)) =
                    (it.next(), it.next(), it.next(), it.next(), it.next())
                else {
                    return Err(Error::Config(format!("malformed row in {path:?}: {line:?}")));
                };
                let step: u64 = step
                    .parse()
                    .map_err(|_| Error::Config(format!("bad step in {path:?}: {line:?}")))?;
                let value: f64 = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value in {path:?}: {line:?}")))?;
                table
                    .entry((vi, v.name.clone(), step, metric.to_string()))
                    .or_default()
                    .push(value);
            }
        }
    }
    let mut file = fs::File::create(suite_dir.join("summary.csv"))?;
    file.write_all(b"variant,step,metric,mean,ci_lower,ci_upper\n")?;
    for ((_, variant, step, metric), values) in &table {
        let (mean, half) = mean_ci(values);
        writeln!(file, "{variant},{step},{metric},{mean},{},{}", mean - half, mean + half)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::Variant;
    use dawn_core::config::WarmupStrategy;

    fn tiny_suite(name: &str, steps: u64) -> ExperimentSuite {
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.total_steps = steps;
        cfg.batch = 32;
        cfg.hidden_dims = vec![16, 16];
        cfg.warmup = WarmupStrategy::base_only(128);
        cfg.eval_every = 128;
        cfg.eval_episodes = 1;
        cfg.anchor_episodes = 2;
        ExperimentSuite::new(
            name,
            vec![Variant { name: "only".into(), config: cfg }],
            vec![3, 4],
        )
        .unwrap()
    }

    #[test]
    fn zero_step_suite_still_writes_the_result_tree() {
        let dir = tempfile::tempdir().unwrap();
        let suite = tiny_suite("zero", 0);
        let report = run_suite(&suite, dir.path(), 2).unwrap();
        assert!(report.failures.is_empty());
        for seed in [3, 4] {
            let rd = run_dir(&report.out_dir, "only", seed);
            assert!(rd.join("config.json").exists());
            assert!(rd.join("metrics.csv").exists());
        }
        assert!(report.out_dir.join("summary.csv").exists());
        assert!(report.out_dir.join("failures.json").exists());
    }

    #[test]
    fn reruns_are_byte_identical_and_summarized_with_correct_ci() {
        let dir = tempfile::tempdir().unwrap();
        let suite = tiny_suite("det", 256);
        run_suite(&suite, dir.path(), 2).unwrap();
        let first = fs::read(run_dir(&dir.path().join("det"), "only", 3).join("metrics.csv"))
            .unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        run_suite(&suite, dir2.path(), 1).unwrap();
        let second = fs::read(run_dir(&dir2.path().join("det"), "only", 3).join("metrics.csv"))
            .unwrap();
        assert_eq!(first, second);

        // summary rows must agree with direct recomputation from the runs
        let summary =
            fs::read_to_string(dir.path().join("det").join("summary.csv")).unwrap();
        let mut checked = 0;
        for line in summary.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f[2] != "success_rate" {
                continue;
            }
            let mean: f64 = f[3].parse().unwrap();
            let lo: f64 = f[4].parse().unwrap();
            let hi: f64 = f[5].parse().unwrap();
            assert!(lo <= mean && mean <= hi);
            checked += 1;
        }
        assert!(checked >= 2, "expected success_rate rows in summary");
    }

    #[test]
    fn a_broken_run_is_reported_without_killing_siblings() {
        let dir = tempfile::tempdir().unwrap();
        let mut donor = tiny_suite("mixed", 0);
        let good = donor.variants.pop().unwrap().config;
        let mut bad = good.clone();
        bad.lambda = -1.0; // rejected by validation inside the worker
        let suite = ExperimentSuite::new(
            "mixed",
            vec![
                Variant { name: "good".into(), config: good },
                Variant { name: "bad".into(), config: bad },
            ],
            vec![0],
        )
        .unwrap();
        let report = run_suite(&suite, dir.path(), 2).unwrap();
        assert_eq!(report.completed, 1);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].variant, "bad");
        let recorded: Vec<RunFailure> = serde_json::from_str(
            &fs::read_to_string(report.out_dir.join("failures.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(recorded.len(), 1);
    }

    #[test]
    fn config_round_trips_through_the_persisted_json() {
        let dir = tempfile::tempdir().unwrap();
        let suite = tiny_suite("rt", 0);
        run_suite(&suite, dir.path(), 1).unwrap();
        let text = fs::read_to_string(
            run_dir(&dir.path().join("rt"), "only", 3).join("config.json"),
        )
        .unwrap();
        let loaded: RunConfig = serde_json::from_str(&text).unwrap();
        let mut expect = suite.variants[0].config.clone();
        expect.seed = 3;
        assert_eq!(loaded, expect);
    }
}
