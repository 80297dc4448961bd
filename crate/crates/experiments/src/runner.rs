//! Seeded batch runs: one learner per seed, traces written as each seed
//! finishes, then the summary, manifest and plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use prosto_core::agent::run_prosto;
use prosto_core::analysis::{tail_window, theoretical_slope_for};
use prosto_core::kernel::eigen_decay_beta;
use prosto_core::{Mdp, Trace};

use crate::config::ExperimentConfig;
use crate::error::RunError;
use crate::output::{manifest_toml, summary_csv, trace_csv, write_atomic, SeedSummary};
use crate::plot::{emit_plots, LogLogFit};

/// Everything a finished experiment wrote.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub traces: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub manifest_path: PathBuf,
    pub plots: Vec<PathBuf>,
    pub summaries: Vec<SeedSummary>,
    pub loglog: Option<LogLogFit>,
}

impl ExperimentOutput {
    pub fn files(&self) -> Vec<&Path> {
        self.traces
            .iter()
            .chain([&self.summary_path, &self.manifest_path])
            .chain(&self.plots)
            .map(PathBuf::as_path)
            .collect()
    }
}

pub fn build_mdp(config: &ExperimentConfig) -> prosto_core::Result<Mdp> {
    Mdp::synthetic(
        config.env.reward_name,
        config.env.m_s,
        config.env.m_a,
        config.env.horizon,
    )
}

/// Exponent of the regret bound for the configured kernel.
pub fn bound_slope(config: &ExperimentConfig) -> prosto_core::Result<f64> {
    theoretical_slope_for(eigen_decay_beta(&config.kernel_spec()?)?)
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

/// One seed's full episode loop.
pub fn run_seed(config: &ExperimentConfig, mdp: &Mdp, seed: u64) -> Result<Trace, RunError> {
    let started = Instant::now();
    let spec = config.kernel_spec()?;
    let trace =
        run_prosto(mdp, spec, &config.agent_config(), seed).map_err(|source| RunError::Seed { seed, source })?;
    if let Some(last) = trace.episodes.last() {
        log::info!(
            "seed {seed}: {} episodes, cumulative regret {:.4}, {:.1}s",
            trace.len(),
            last.cum_regret,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(trace)
}

/// Runs every seed on `config.run.workers` threads, calling `done` (from the
/// worker thread) as each one finishes. Results are in seed-list order.
pub fn run_seeds(
    config: &ExperimentConfig,
    mdp: &Mdp,
    done: impl Fn(u64, &Trace) -> Result<(), RunError> + Sync,
) -> Result<Vec<Trace>, RunError> {
    let seeds = &config.run.seeds;
    let workers = config.run.workers.min(seeds.len()).max(1);
    let slots: Vec<Mutex<Option<Result<Trace, RunError>>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for w in 0..workers {
            let slots = &slots;
            let done = &done;
            scope.spawn(move || {
                for (i, &seed) in seeds.iter().enumerate().skip(w).step_by(workers) {
                    let result = run_seed(config, mdp, seed).and_then(|t| done(seed, &t).map(|_| t));
                    let failed = result.is_err();
                    *slots[i].lock().expect("slot lock") = Some(result);
                    if failed {
                        break;
                    }
                }
            });
        }
    });
    let mut traces = Vec::with_capacity(seeds.len());
    let mut first_err = None;
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(t)) => traces.push(t),
            Some(Err(e)) => {
                first_err.get_or_insert(e);
            }
            None => {}
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(traces),
    }
}

/// Runs all seeds and writes traces, summary, manifest and (optionally) plots
/// into `config.output.out_dir`. On failure every file this call wrote is
/// removed.
pub fn run_experiment(config: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentOutput, RunError> {
    let dir = config.output.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        context: "cannot create output directory",
        path: dir.clone(),
        source,
    })?;
    let written = Mutex::new(Vec::<PathBuf>::new());
    let result = write_all(config, overrides, &dir, &written);
    if result.is_err() {
        for p in written.into_inner().expect("file list lock") {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn write_all(
    config: &ExperimentConfig,
    overrides: &[String],
    dir: &Path,
    written: &Mutex<Vec<PathBuf>>,
) -> Result<ExperimentOutput, RunError> {
    let record = |p: &Path| written.lock().expect("file list lock").push(p.to_path_buf());
    let mdp = build_mdp(config)?;
    let slope = bound_slope(config)?;

    let traces = run_seeds(config, &mdp, |seed, trace| {
        let path = dir.join(trace_file_name(seed));
        record(&path);
        write_atomic(&path, trace_csv(trace).as_bytes())
    })?;
    let trace_paths: Vec<PathBuf> = config.run.seeds.iter().map(|&s| dir.join(trace_file_name(s))).collect();

    let summaries: Vec<SeedSummary> = config
        .run
        .seeds
        .iter()
        .zip(&traces)
        .map(|(&seed, t)| SeedSummary::from_trace(seed, t, slope))
        .collect();
    for s in &summaries {
        log::info!(
            "seed {}: fitted slope {} (bound {:.6}), gain domination {}",
            s.seed,
            s.fitted_slope.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            s.theoretical_slope,
            s.gain_domination.as_str()
        );
    }
    let summary_path = dir.join("summary.csv");
    record(&summary_path);
    write_atomic(&summary_path, summary_csv(&summaries).as_bytes())?;

    let mut plots = Vec::new();
    let mut loglog = None;
    if config.output.emit_plots {
        for name in ["cumulative.svg", "average.svg", "loglog.svg"] {
            record(&dir.join(name));
        }
        let cumulative: Vec<Vec<f64>> = traces.iter().map(Trace::cumulative).collect();
        match emit_plots(&cumulative, slope, tail_window(config.run.episodes), dir) {
            Ok((files, fit)) => {
                plots = files;
                loglog = Some(fit);
            }
            // a run with zero regret everywhere has no log-log curve
            Err(RunError::Plot(msg)) => log::warn!("plots skipped: {msg}"),
            Err(e) => return Err(e),
        }
    }

    let manifest_path = dir.join("manifest.toml");
    let mut names: Vec<String> = trace_paths
        .iter()
        .chain([&summary_path])
        .chain(&plots)
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.push("manifest.toml".into());
    record(&manifest_path);
    write_atomic(&manifest_path, manifest_toml(config, overrides, &names).as_bytes())?;

    Ok(ExperimentOutput {
        traces: trace_paths,
        summary_path,
        manifest_path,
        plots,
        summaries,
        loglog,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path, seeds: &[u64], workers: usize) -> ExperimentConfig {
        let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
        let text = format!(
            "[env]\nreward_name = \"branin\"\nm_s = 3\nm_a = 2\nH = 2\n[kernel]\nlengthscale = 0.5\n\
             [run]\nK = 12\nseeds = [{}]\nworkers = {workers}\n[output]\nout_dir = \"{}\"\n",
            seeds.join(", "),
            dir.display()
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn bound_slope_follows_smoothness() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(dir.path(), &[0], 1);
        assert!((bound_slope(&c).unwrap() - 0.857_954_545).abs() < 1e-8);
        c.kernel.nu = 1.5;
        assert!((bound_slope(&c).unwrap() - 0.916_666_667).abs() < 1e-8);
    }

    #[test]
    fn writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(dir.path(), &[3, 1], 1);
        let out = run_experiment(&c, &[]).unwrap();
        assert_eq!(out.traces.len(), 2);
        assert_eq!(out.plots.len(), 3);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 7);
        let manifest = fs::read_to_string(&out.manifest_path).unwrap();
        assert!(
            manifest.contains("trace_seed3.csv") && manifest.contains("seeds = [3, 1]"),
            "{manifest}"
        );
        assert_eq!(out.summaries[0].seed, 3);
    }

    #[test]
    fn workers_do_not_change_results() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_experiment(&small(d1.path(), &[0, 1, 2], 1), &[]).unwrap();
        run_experiment(&small(d2.path(), &[0, 1, 2], 3), &[]).unwrap();
        for s in 0..3 {
            let name = trace_file_name(s);
            assert_eq!(
                fs::read(d1.path().join(&name)).unwrap(),
                fs::read(d2.path().join(&name)).unwrap()
            );
        }
        assert_eq!(
            fs::read(d1.path().join("summary.csv")).unwrap(),
            fs::read(d2.path().join("summary.csv")).unwrap()
        );
    }

    #[test]
    fn failure_removes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(dir.path(), &[0, 1], 1);
        // a directory squatting on the summary path makes the rename fail
        // after both traces were written
        fs::create_dir(dir.path().join("summary.csv")).unwrap();
        let err = run_experiment(&c, &[]).unwrap_err();
        assert!(err.to_string().contains("summary.csv"), "{err}");
        let left: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(left, vec![std::ffi::OsString::from("summary.csv")]);
    }

    #[test]
    fn hook_errors_stop_the_batch() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(dir.path(), &[0, 1], 1);
        let mdp = build_mdp(&c).unwrap();
        let err = run_seeds(&c, &mdp, |seed, _| {
            if seed == 1 {
                return Err(RunError::Plot("injected".into()));
            }
            Ok(())
        })
        .unwrap_err();
        assert!(err.to_string().contains("injected"));
    }

    #[test]
    fn seed_errors_name_the_seed() {
        let e = RunError::Seed {
            seed: 7,
            source: prosto_core::Error::InvalidInput("x".into()).at_episode(3),
        };
        assert_eq!(e.to_string(), "seed 7: episode 3: invalid input: x");
    }
}
