//! CSV traces, the per-seed summary, and the run manifest.
//!
//! Every CSV starts with a `schema=1` column; data rows carry `1` there so a
//! reader can tell which layout a row belongs to.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use prosto_core::analysis::{fit_loglog_slope, tail_window, GAIN_TOL};
use prosto_core::Trace;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::RunError;

pub const SCHEMA: u32 = 1;

pub const TRACE_HEADER: &str =
    "schema=1,episode,instant_regret,cum_regret,avg_regret,beta_r,gamma_traj,gamma_step1,noise_var_max";

pub const SUMMARY_HEADER: &str = "schema=1,seed,episodes,final_cum_regret,final_avg_regret,fitted_slope,fit_k_min,\
fit_k_max,theoretical_slope,slope_within_bound,gain_domination,min_gain_margin,noise_domination,klrr_converged";

/// `%.9g`: nine significant digits, trailing zeros dropped.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub avg_regret: f64,
    pub beta_r: f64,
    pub gamma_traj: f64,
    pub gamma_step1: f64,
    pub noise_var_max: f64,
}

pub fn trace_csv(trace: &Trace) -> String {
    let mut out = String::with_capacity(96 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.episodes {
        let cols = [
            r.instant_regret,
            r.cum_regret,
            r.avg_regret,
            r.beta_r,
            r.gamma_traj,
            r.gamma_step1,
            r.noise_var_max,
        ];
        out.push_str(&format!("{SCHEMA},{}", r.episode));
        for c in cols {
            out.push(',');
            out.push_str(&fmt_sig9(c));
        }
        out.push('\n');
    }
    out
}

/// Parses text produced by [`trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        Some(h) => return Err(format!("unexpected header `{h}`")),
        None => return Err("empty trace".into()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 || f[0] != "1" {
            return Err(format!("row {}: expected 9 fields with schema 1", i + 1));
        }
        let num = |j: usize| {
            f[j].parse::<f64>()
                .map_err(|e| format!("row {}, column {j}: {e}", i + 1))
        };
        rows.push(TraceRow {
            episode: f[1].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
            instant_regret: num(2)?,
            cum_regret: num(3)?,
            avg_regret: num(4)?,
            beta_r: num(5)?,
            gamma_traj: num(6)?,
            gamma_step1: num(7)?,
            noise_var_max: num(8)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    Unchecked,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Unchecked => "unchecked",
        }
    }

    fn from_checks(checks: impl Iterator<Item = Option<bool>>) -> Self {
        let mut any = false;
        for c in checks {
            match c {
                Some(false) => return Verdict::Violated,
                Some(true) => any = true,
                None => {}
            }
        }
        if any {
            Verdict::Holds
        } else {
            Verdict::Unchecked
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub final_cum_regret: f64,
    pub final_avg_regret: f64,
    /// `None` when the tail window holds a nonpositive cumulative regret.
    pub fitted_slope: Option<f64>,
    pub fit_window: (usize, usize),
    pub theoretical_slope: f64,
    pub gain_domination: Verdict,
    pub min_gain_margin: Option<f64>,
    pub noise_domination: Verdict,
    pub klrr_converged: bool,
}

impl SeedSummary {
    pub fn from_trace(seed: u64, trace: &Trace, theoretical_slope: f64) -> Self {
        let k = trace.len();
        let window = tail_window(k);
        let last = trace.episodes.last();
        let fitted_slope = fit_loglog_slope(trace, window.0, window.1).ok().map(|(s, _)| s);
        let min_gain_margin = trace
            .episodes
            .iter()
            .filter_map(|r| r.gain_margin)
            .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.min(g))));
        Self {
            seed,
            episodes: k,
            final_cum_regret: last.map_or(0.0, |r| r.cum_regret),
            final_avg_regret: last.map_or(0.0, |r| r.avg_regret),
            fitted_slope,
            fit_window: window,
            theoretical_slope,
            gain_domination: Verdict::from_checks(trace.episodes.iter().map(|r| r.gain_margin.map(|g| g >= -GAIN_TOL))),
            min_gain_margin,
            noise_domination: Verdict::from_checks(trace.episodes.iter().map(|r| r.noise_dominated)),
            klrr_converged: trace.episodes.iter().all(|r| r.klrr_converged),
        }
    }

    pub fn slope_within_bound(&self) -> Option<bool> {
        self.fitted_slope.map(|s| s <= self.theoretical_slope)
    }
}

pub fn summary_csv(rows: &[SeedSummary]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), fmt_sig9);
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{SCHEMA},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.episodes,
            fmt_sig9(r.final_cum_regret),
            fmt_sig9(r.final_avg_regret),
            opt(r.fitted_slope),
            r.fit_window.0,
            r.fit_window.1,
            fmt_sig9(r.theoretical_slope),
            r.slope_within_bound()
                .map_or("unknown", |b| if b { "yes" } else { "no" }),
            r.gain_domination.as_str(),
            opt(r.min_gain_margin),
            r.noise_domination.as_str(),
            r.klrr_converged,
        ));
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    csv_schema: u32,
    seeds: &'a [u64],
    overrides: &'a [String],
    files: &'a [String],
    config: &'a ExperimentConfig,
}

/// TOML manifest holding the effective config, overrides and produced files.
pub fn manifest_toml(config: &ExperimentConfig, overrides: &[String], files: &[String]) -> String {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        csv_schema: SCHEMA,
        seeds: &config.run.seeds,
        overrides,
        files,
        config,
    };
    toml::to_string(&m).expect("manifest always serializes")
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let io = |context, source| RunError::Io {
        context,
        path: path.to_path_buf(),
        source,
    };
    let tmp = tmp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io("cannot write", e));
    }
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use prosto_core::Record;

    #[test]
    fn sig9_matches_printf_g() {
        let cases = [
            (1.0, "1"),
            (0.5, "0.5"),
            (1.0 / 3.0, "0.333333333"),
            (2.0 / 3.0, "0.666666667"),
            (123456789.0, "123456789"),
            (1234567891.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (99999999.95, "100000000"),
            (999999999.5, "1e+09"),
            (0.0, "0"),
            (1e100, "1e+100"),
            (std::f64::consts::PI * 1e-7, "3.14159265e-07"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_sig9(x), want, "{x}");
        }
    }

    #[test]
    fn sig9_round_trips_to_nine_digits() {
        for x in [0.123456789123, 98765.4321987, 1.0e-3 / 7.0, 4112.345678901] {
            let y: f64 = fmt_sig9(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 5e-9, "{x} vs {y}");
        }
    }

    fn record(k: usize, regret: f64) -> Record {
        Record {
            episode: k,
            instant_regret: regret,
            cum_regret: 0.0,
            avg_regret: 0.0,
            beta_r: 2.0,
            gamma_traj: 0.5,
            gamma_step1: 0.25,
            noise_var_max: 1.5,
            beta_clip: 3.0,
            klrr_iters: 1,
            klrr_converged: true,
            klrr_grad_norm: 0.0,
            noise_dominated: Some(true),
            noise_clamped: 0.0,
            gain_margin: Some(k as f64),
            initial_state: 0,
            label: true,
            true_prob: 0.5,
        }
    }

    fn planted_trace(k: usize) -> Trace {
        let mut t = Trace::default();
        for i in 1..=k {
            t.push(record(i, (i as f64).sqrt() - ((i - 1) as f64).sqrt()));
        }
        t
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = planted_trace(12);
        let text = trace_csv(&t);
        assert!(text.starts_with(TRACE_HEADER));
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let rows = parse_trace_csv(&text).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[3].episode, 4);
        assert!((rows[3].cum_regret - 2.0).abs() < 1e-8);
        assert_eq!(rows[0].beta_r, 2.0);
        assert!(parse_trace_csv("episode,x\n").is_err());
    }

    #[test]
    fn summary_of_planted_sqrt_trace() {
        let t = planted_trace(40);
        let s = SeedSummary::from_trace(9, &t, 0.857955);
        assert!((s.fitted_slope.unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(s.fit_window, (10, 40));
        assert_eq!(s.slope_within_bound(), Some(true));
        assert_eq!(s.gain_domination, Verdict::Holds);
        assert_eq!(s.min_gain_margin, Some(1.0));
        let csv = summary_csv(&[s]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), SUMMARY_HEADER.split(',').count());
        assert!(row.starts_with("1,9,40,"), "{row}");
    }

    #[test]
    fn verdicts() {
        assert_eq!(Verdict::from_checks([None, None].into_iter()), Verdict::Unchecked);
        assert_eq!(Verdict::from_checks([Some(true), None].into_iter()), Verdict::Holds);
        assert_eq!(
            Verdict::from_checks([Some(true), Some(false)].into_iter()),
            Verdict::Violated
        );
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/b.csv"), b"x").is_err());
    }
}
