//! Command-line front end. `main` only forwards to [`run`].

use std::path::PathBuf;

use clap::Parser;

use crate::config::{load_config, Overrides};
use crate::runner::run_experiment;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "prosto",
    version,
    about = "Run seeded preference-based RL regret experiments"
)]
pub struct Cli {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides output.out_dir).
    #[arg(long, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated seeds (overrides run.seeds).
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Episodes per seed (overrides run.K).
    #[arg(long, value_name = "N")]
    pub episodes: Option<usize>,
    /// Skip the SVG plots.
    #[arg(long)]
    pub no_plots: bool,
    /// Debug-level logging.
    #[arg(long)]
    pub verbose: bool,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out_dir.clone(),
            seeds: self.seeds.clone(),
            episodes: self.episodes,
            no_plots: self.no_plots,
            verbose: self.verbose,
        }
    }
}

/// Loads, runs and reports; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let overrides = cli.overrides();
    let config = match load_config(&cli.config).and_then(|c| c.with_overrides(&overrides)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let level = if config.output.verbose { "debug" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match run_experiment(&config, &overrides.describe()) {
        Ok(out) => {
            for s in &out.summaries {
                println!(
                    "seed {:>4}  R(K) = {:<12.6}  R(K)/K = {:<10.6}  slope = {}  bound = {:.6}  gain domination: {}",
                    s.seed,
                    s.final_cum_regret,
                    s.final_avg_regret,
                    s.fitted_slope.map_or("n/a".into(), |v| format!("{v:.4}")),
                    s.theoretical_slope,
                    s.gain_domination.as_str()
                );
            }
            println!(
                "wrote {} files to {}",
                out.files().len(),
                config.output.out_dir.display()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_config(dir: &std::path::Path, body: &str) -> PathBuf {
        let p = dir.join("exp.toml");
        fs::write(&p, body).unwrap();
        p
    }

    const SMALL: &str = "[env]\nreward_name = \"ackley3\"\nm_s = 2\nm_a = 2\nH = 2\n\
                         [run]\nK = 6\nseeds = [0]\n[output]\nemit_plots = false\n";

    #[test]
    fn parses_all_flags() {
        let cli = Cli::try_parse_from([
            "prosto",
            "--config",
            "a.toml",
            "--out-dir",
            "o",
            "--seeds",
            "1,2,5",
            "--episodes",
            "9",
            "--no-plots",
            "--verbose",
        ])
        .unwrap();
        assert_eq!(cli.seeds, Some(vec![1, 2, 5]));
        let o = cli.overrides();
        assert_eq!(o.episodes, Some(9));
        assert!(o.no_plots && o.verbose);
        assert!(Cli::try_parse_from(["prosto"]).is_err());
        assert!(Cli::try_parse_from(["prosto", "--config", "a", "--seeds", "x"]).is_err());
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let run_with = |cfg: PathBuf, extra: &[&str]| {
            let mut args = vec!["prosto".to_string(), "--config".into(), cfg.display().to_string()];
            args.extend(["--out-dir".to_string(), out.display().to_string()]);
            args.extend(extra.iter().map(|s| s.to_string()));
            run(&Cli::try_parse_from(args).unwrap())
        };
        let good = write_config(dir.path(), SMALL);
        assert_eq!(run_with(good.clone(), &[]), EXIT_OK);
        assert_eq!(run_with(good.clone(), &["--episodes", "1"]), EXIT_CONFIG);
        assert_eq!(run_with(dir.path().join("missing.toml"), &[]), EXIT_CONFIG);
        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "[env]\nreward_name = 3\n").unwrap();
        assert_eq!(run_with(bad, &[]), EXIT_CONFIG);

        // output directory path blocked by a regular file
        fs::write(dir.path().join("blocker"), b"x").unwrap();
        let args = [
            "prosto".to_string(),
            "--config".into(),
            good.display().to_string(),
            "--out-dir".into(),
            dir.path().join("blocker/sub").display().to_string(),
        ];
        assert_eq!(run(&Cli::try_parse_from(args).unwrap()), EXIT_RUNTIME);
    }

    #[test]
    fn overrides_land_in_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), SMALL);
        let out = dir.path().join("o");
        let cli = Cli::try_parse_from([
            "prosto".to_string(),
            "--config".into(),
            cfg.display().to_string(),
            "--out-dir".into(),
            out.display().to_string(),
            "--seeds".into(),
            "4,2".into(),
            "--episodes".into(),
            "5".into(),
        ])
        .unwrap();
        assert_eq!(run(&cli), EXIT_OK);
        let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
        assert!(manifest.contains("run.seeds = [4, 2]"), "{manifest}");
        assert!(manifest.contains("run.K = 5"));
        assert!(manifest.contains("K = 5\n"));
        assert!(out.join("trace_seed4.csv").exists() && out.join("trace_seed2.csv").exists());
        assert_eq!(
            fs::read_to_string(out.join("trace_seed4.csv")).unwrap().lines().count(),
            6
        );
    }

    #[test]
    fn two_seeds_fifty_episodes_file_set_and_rerun_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "[env]\nreward_name = \"hartmann3\"\n[run]\nK = 50\nseeds = [0, 1]\n",
        );
        let go = |out: &std::path::Path| {
            let cli = Cli::try_parse_from([
                "prosto".to_string(),
                "--config".into(),
                cfg.display().to_string(),
                "--out-dir".into(),
                out.display().to_string(),
                "--no-plots".into(),
            ])
            .unwrap();
            assert_eq!(run(&cli), EXIT_OK);
        };
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        go(&a);
        go(&b);
        let mut names: Vec<String> = fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert_eq!(
            names,
            ["manifest.toml", "summary.csv", "trace_seed0.csv", "trace_seed1.csv"]
        );
        for n in ["trace_seed0.csv", "trace_seed1.csv", "summary.csv"] {
            assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
        }
        let trace = fs::read_to_string(a.join("trace_seed0.csv")).unwrap();
        assert_eq!(trace.lines().count(), 51);
        assert!(trace.lines().skip(1).all(|l| l.starts_with("1,")));
    }
}
