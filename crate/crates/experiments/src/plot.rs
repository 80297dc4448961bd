//! Static SVG regret charts: cumulative, average, and log-log with a bound line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use prosto_core::analysis::fit_power_law;

use crate::error::RunError;
use crate::output::{fmt_sig9, write_atomic};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

/// Median and one-standard-deviation band of a per-seed series, per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Band {
    /// `runs[s][k]` is seed `s` at episode `k + 1`.
    pub fn across(runs: &[Vec<f64>]) -> Self {
        let len = runs.iter().map(Vec::len).min().unwrap_or(0);
        let mut band = Band {
            median: Vec::with_capacity(len),
            lo: Vec::with_capacity(len),
            hi: Vec::with_capacity(len),
        };
        for k in 0..len {
            let mut col: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            let m = median(&mut col);
            let sd = std_dev(&col);
            band.median.push(m);
            band.lo.push(m - sd);
            band.hi.push(m + sd);
        }
        band
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Sample standard deviation; zero for a single value.
fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

struct Polyline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    color: &'static str,
    dashed: bool,
    label: String,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    band: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    lines: Vec<Polyline>,
    metadata: Vec<(String, String)>,
}

impl Chart {
    fn render(&self) -> String {
        let mut xs: Vec<f64> = self.lines.iter().flat_map(|l| l.xs.iter().copied()).collect();
        let mut ys: Vec<f64> = self.lines.iter().flat_map(|l| l.ys.iter().copied()).collect();
        if let Some((bx, lo, hi)) = &self.band {
            xs.extend(bx);
            ys.extend(lo.iter().chain(hi));
        }
        let (x0, x1) = padded_range(&xs);
        let (y0, y1) = padded_range(&ys);
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        if !self.metadata.is_empty() {
            s.push_str("<metadata>\n");
            for (k, v) in &self.metadata {
                let _ = writeln!(s, "{}={}", escape(k), escape(v));
            }
            s.push_str("</metadata>\n");
        }
        s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>",
            WIDTH / 2.0,
            escape(&self.title)
        );

        // axes and ticks
        let _ = writeln!(
            s,
            "<path d=\"M{l} {t} L{l} {b} L{r} {b}\" stroke=\"black\" fill=\"none\"/>",
            l = MARGIN_L,
            t = MARGIN_T,
            b = MARGIN_T + ph,
            r = MARGIN_L + pw
        );
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let (tx, ty) = (px(xv), py(yv));
            let _ = writeln!(
                s,
                "<line x1=\"{tx:.2}\" y1=\"{b}\" x2=\"{tx:.2}\" y2=\"{b2}\" stroke=\"black\"/><text x=\"{tx:.2}\" y=\"{b3}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                tick(xv),
                b = MARGIN_T + ph,
                b2 = MARGIN_T + ph + 5.0,
                b3 = MARGIN_T + ph + 18.0,
            );
            let _ = writeln!(
                s,
                "<line x1=\"{l2}\" y1=\"{ty:.2}\" x2=\"{l}\" y2=\"{ty:.2}\" stroke=\"black\"/><text x=\"{l3}\" y=\"{ty4:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                tick(yv),
                l = MARGIN_L,
                l2 = MARGIN_L - 5.0,
                l3 = MARGIN_L - 8.0,
                ty4 = ty + 4.0,
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            MARGIN_L + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            "<text x=\"16\" y=\"{y}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {y})\">{}</text>",
            escape(&self.y_label),
            y = MARGIN_T + ph / 2.0
        );

        if let Some((bx, lo, hi)) = &self.band {
            let mut d = String::new();
            for (i, (&x, &y)) in bx.iter().zip(hi).enumerate() {
                let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(x), py(y));
            }
            for (&x, &y) in bx.iter().zip(lo).rev() {
                let _ = write!(d, "L{:.2} {:.2} ", px(x), py(y));
            }
            let _ = writeln!(
                s,
                "<path d=\"{}Z\" fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\"/>",
                d
            );
        }
        for (i, line) in self.lines.iter().enumerate() {
            let pts: Vec<String> = line
                .xs
                .iter()
                .zip(&line.ys)
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let dash = if line.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{dash}/>",
                pts.join(" "),
                line.color
            );
            let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
            let lx = MARGIN_L + 12.0;
            let _ = writeln!(
                s,
                "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"1.8\"{dash}/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                lx + 22.0,
                line.color,
                lx + 28.0,
                ly + 4.0,
                escape(&line.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.03 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    if v.abs() < 1e-12 {
        return "0".into();
    }
    let s = format!("{v:.3e}");
    let y: f64 = s.parse().unwrap_or(v);
    fmt_sig9(y)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log summary drawn in the third chart.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLogFit {
    pub fitted_slope: Option<f64>,
    pub bound_slope: f64,
    pub window: (usize, usize),
    /// `(ln k_min, median ln R(k_min))`.
    pub anchor: (f64, f64),
    /// Every point of the bound line over the window lies on or above the
    /// median empirical curve.
    pub bound_above: bool,
}

/// Writes `cumulative.svg`, `average.svg` and `loglog.svg` into `dir`.
///
/// `cumulative[s][k]` is seed `s`'s cumulative regret after episode `k + 1`.
pub fn emit_plots(
    cumulative: &[Vec<f64>],
    bound_slope: f64,
    window: (usize, usize),
    dir: &Path,
) -> Result<(Vec<PathBuf>, LogLogFit), RunError> {
    let charts = build_charts(cumulative, bound_slope, window)?;
    let mut files = Vec::new();
    for (name, chart) in [
        ("cumulative.svg", &charts.0),
        ("average.svg", &charts.1),
        ("loglog.svg", &charts.2),
    ] {
        let path = dir.join(name);
        write_atomic(&path, chart.render().as_bytes())?;
        files.push(path);
    }
    Ok((files, charts.3))
}

/// The three SVG documents as strings, plus the log-log fit.
pub fn render_plots(
    cumulative: &[Vec<f64>],
    bound_slope: f64,
    window: (usize, usize),
) -> Result<([String; 3], LogLogFit), RunError> {
    let (a, b, c, fit) = build_charts(cumulative, bound_slope, window)?;
    Ok(([a.render(), b.render(), c.render()], fit))
}

fn build_charts(
    cumulative: &[Vec<f64>],
    bound_slope: f64,
    window: (usize, usize),
) -> Result<(Chart, Chart, Chart, LogLogFit), RunError> {
    if cumulative.is_empty() {
        return Err(RunError::Plot("no seeds to plot".into()));
    }
    let len = cumulative[0].len();
    if len < 2 || cumulative.iter().any(|c| c.len() != len) {
        return Err(RunError::Plot(
            "every seed needs the same number (≥ 2) of episodes".into(),
        ));
    }
    let (k_min, k_max) = window;
    if !(k_min >= 1 && k_min < k_max && k_max <= len) {
        return Err(RunError::Plot(format!(
            "fit window [{k_min}, {k_max}] outside 1..={len}"
        )));
    }
    let ks: Vec<f64> = (1..=len).map(|k| k as f64).collect();
    let n_seeds = cumulative.len();

    let cum = Band::across(cumulative);
    let averages: Vec<Vec<f64>> = cumulative
        .iter()
        .map(|c| c.iter().zip(&ks).map(|(r, k)| r / k).collect())
        .collect();
    let avg = Band::across(&averages);

    let line = |ys: Vec<f64>, label: String| Polyline {
        xs: ks.clone(),
        ys,
        color: "#1f77b4",
        dashed: false,
        label,
    };
    let seeds_note = format!("median over {n_seeds} seed(s), ±1 sd band");
    let cum_chart = Chart {
        title: "Cumulative regret".into(),
        x_label: "episode k".into(),
        y_label: "R(k)".into(),
        band: Some((ks.clone(), cum.lo.clone(), cum.hi.clone())),
        lines: vec![line(cum.median.clone(), seeds_note.clone())],
        metadata: vec![("seeds".into(), n_seeds.to_string())],
    };
    let avg_chart = Chart {
        title: "Average regret".into(),
        x_label: "episode k".into(),
        y_label: "R(k) / k".into(),
        band: Some((ks.clone(), avg.lo.clone(), avg.hi.clone())),
        lines: vec![line(avg.median.clone(), seeds_note)],
        metadata: vec![("seeds".into(), n_seeds.to_string())],
    };

    // log-log: statistics of ln R across seeds, where R > 0
    let mut log_k = Vec::new();
    let mut log_med = Vec::new();
    let mut log_lo = Vec::new();
    let mut log_hi = Vec::new();
    for k in 0..len {
        let col: Vec<f64> = cumulative
            .iter()
            .map(|c| c[k])
            .filter(|&r| r > 0.0)
            .map(f64::ln)
            .collect();
        if col.is_empty() {
            continue;
        }
        let sd = std_dev(&col);
        let m = median(&mut col.clone());
        log_k.push(ks[k].ln());
        log_med.push(m);
        log_lo.push(m - sd);
        log_hi.push(m + sd);
    }
    let fitted_slope = fit_power_law(&cum.median, k_min, k_max).ok().map(|(s, _)| s);
    let anchor_y = cum.median[k_min - 1];
    if anchor_y.is_nan() || anchor_y <= 0.0 {
        return Err(RunError::Plot(format!(
            "median cumulative regret at k = {k_min} is not positive"
        )));
    }
    let anchor = ((k_min as f64).ln(), anchor_y.ln());
    let bound_xs: Vec<f64> = (k_min..=k_max).map(|k| (k as f64).ln()).collect();
    let bound_ys: Vec<f64> = bound_xs
        .iter()
        .map(|x| anchor.1 + bound_slope * (x - anchor.0))
        .collect();
    let bound_above = (k_min..=k_max).zip(&bound_ys).all(|(k, &b)| {
        let r = cum.median[k - 1];
        r <= 0.0 || r.ln() <= b + 1e-12
    });
    let fit = LogLogFit {
        fitted_slope,
        bound_slope,
        window,
        anchor,
        bound_above,
    };
    let loglog = Chart {
        title: "Log-log cumulative regret".into(),
        x_label: "log k".into(),
        y_label: "log R(k)".into(),
        band: Some((log_k.clone(), log_lo, log_hi)),
        lines: vec![
            Polyline {
                xs: log_k,
                ys: log_med,
                color: "#1f77b4",
                dashed: false,
                label: "empirical (median)".into(),
            },
            Polyline {
                xs: bound_xs,
                ys: bound_ys,
                color: "#d62728",
                dashed: true,
                label: format!("bound, slope {}", fmt_sig9(bound_slope)),
            },
        ],
        metadata: vec![
            ("seeds".into(), n_seeds.to_string()),
            ("bound_slope".into(), fmt_sig9(bound_slope)),
            ("fitted_slope".into(), fitted_slope.map_or("nan".into(), fmt_sig9)),
            ("fit_window".into(), format!("{k_min}-{k_max}")),
            ("bound_above_empirical".into(), bound_above.to_string()),
        ],
    };
    Ok((cum_chart, avg_chart, loglog, fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_series(k: usize, scale: f64) -> Vec<f64> {
        (1..=k).map(|i| scale * (i as f64).sqrt()).collect()
    }

    #[test]
    fn single_seed_band_collapses() {
        let b = Band::across(&[vec![1.0, 2.0, 4.0]]);
        assert_eq!(b.lo, b.median);
        assert_eq!(b.hi, b.median);
    }

    #[test]
    fn band_median_and_sd() {
        let b = Band::across(&[vec![1.0], vec![2.0], vec![6.0]]);
        assert_eq!(b.median, vec![2.0]);
        let sd = (((1.0f64 - 3.0).powi(2) + 1.0 + 9.0) / 2.0).sqrt();
        assert!((b.hi[0] - 2.0 - sd).abs() < 1e-12);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn planted_sqrt_trace_reports_half_slope() {
        let runs = vec![sqrt_series(64, 1.0)];
        let (svgs, fit) = render_plots(&runs, 0.5, (16, 64)).unwrap();
        assert!((fit.fitted_slope.unwrap() - 0.5).abs() < 1e-10);
        assert!(fit.bound_above);
        assert!(svgs[2].contains("fitted_slope=0.5\n"), "{}", svgs[2]);
        assert!(svgs[2].contains("bound_slope=0.5\n"));
        for s in &svgs {
            assert!(s.starts_with("<?xml") && s.trim_end().ends_with("</svg>"));
            assert!(s.contains("<polyline"));
        }
    }

    #[test]
    fn steeper_empirical_curve_crosses_bound() {
        let runs = vec![(1..=64).map(|i| i as f64).collect::<Vec<_>>()];
        let (_, fit) = render_plots(&runs, 0.5, (16, 64)).unwrap();
        assert!(!fit.bound_above);
    }

    #[test]
    fn rendering_is_deterministic() {
        let runs = vec![sqrt_series(30, 1.0), sqrt_series(30, 1.5), sqrt_series(30, 0.7)];
        assert_eq!(
            render_plots(&runs, 0.8, (7, 30)).unwrap(),
            render_plots(&runs, 0.8, (7, 30)).unwrap()
        );
    }

    #[test]
    fn rejects_empty_or_ragged_input() {
        assert!(render_plots(&[], 0.5, (1, 2)).is_err());
        assert!(render_plots(&[vec![1.0, 2.0], vec![1.0]], 0.5, (1, 2)).is_err());
        assert!(render_plots(&[vec![1.0, 2.0]], 0.5, (1, 3)).is_err());
    }

    #[test]
    fn writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let (files, _) = emit_plots(&[sqrt_series(10, 1.0)], 0.6, (2, 10), dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert!(files.iter().all(|f| f.exists()));
    }
}
