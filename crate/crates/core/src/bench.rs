//! Simulation sweep comparing the three mean/concentration estimators over a
//! range of true concentrations, plus CSV and SVG reporting.
//!
//! Each trial draws a uniformly random true mean, samples `n` orientations
//! from the group-invariant model and fits every configured estimator on the
//! same sample. Trial seeds are derived from the master seed by
//! `splitmix64(seed ^ splitmix64((kappa_index << 32) | trial))`, so any subset of
//! trials can be rerun in isolation and results do not depend on thread count.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ginv::{em_fit, fz_inner_product, modified_ml_fit, orbit_inner_product, EmConfig, GInvariantVmf};
use crate::orient::UnitQuaternion;
use crate::symgrp::SymmetryGroup;
use crate::vmf::{ml_estimate, VmfParams};

pub const CSV_HEADER: &str = "kappa_o,estimator,inner_raw,inner_sym,kappa_hat_mean,kappa_bias,se_inner,se_kappa";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Closed-form VMF fit ignoring symmetry.
    Naive,
    /// Closed-form fit after folding every sample into the fundamental zone.
    Modified,
    /// EM fit of the group-invariant mixture.
    Em,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Naive, Estimator::Modified, Estimator::Em];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::Modified => "modified",
            Estimator::Em => "em",
        }
    }

    fn fit(&self, samples: &[UnitQuaternion], group: &SymmetryGroup, em: &EmConfig) -> Result<VmfParams> {
        match self {
            Estimator::Naive => Ok(ml_estimate(samples)?.params),
            Estimator::Modified => Ok(modified_ml_fit(samples, group)?.params),
            Estimator::Em => Ok(em_fit(samples, group, em)?.params),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Estimator::Naive),
            "modified" | "fz" => Ok(Estimator::Modified),
            "em" => Ok(Estimator::Em),
            other => Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// Number of log-spaced grid points between `kappa_min` and `kappa_max`.
    pub steps: usize,
    /// Additional concentrations merged into the grid.
    pub extra_kappas: Vec<f64>,
    pub n: usize,
    pub trials: usize,
    /// Builtin group name or path to a group CSV.
    pub group: String,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub em: EmConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kappa_min: 1.0,
            kappa_max: 100.0,
            steps: 25,
            extra_kappas: Vec::new(),
            n: 1000,
            trials: 100,
            group: "cubic_m3m".into(),
            seed: 0,
            estimators: Estimator::ALL.to_vec(),
            em: EmConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |k: f64| k.is_finite() && k > 0.0;
        if !positive(self.kappa_min) || !positive(self.kappa_max) {
            return Err(Error::InvalidConfig("kappa bounds must be positive and finite".into()));
        }
        if self.kappa_min > self.kappa_max {
            return Err(Error::InvalidConfig(format!(
                "kappa_min {} exceeds kappa_max {}",
                self.kappa_min, self.kappa_max
            )));
        }
        if let Some(k) = self.extra_kappas.iter().find(|k| !positive(**k)) {
            return Err(Error::InvalidConfig(format!("extra kappa {k} must be positive")));
        }
        if self.steps < 1 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("n must be at least 2".into()));
        }
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("estimator set is empty".into()));
        }
        Ok(())
    }

    /// Sorted, deduplicated concentrations visited by the sweep.
    pub fn kappa_grid(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = if self.steps == 1 {
            vec![self.kappa_min]
        } else {
            let (lo, hi) = (self.kappa_min.ln(), self.kappa_max.ln());
            (0..self.steps)
                .map(|i| {
                    if i + 1 == self.steps {
                        self.kappa_max
                    } else {
                        (lo + (hi - lo) * i as f64 / (self.steps - 1) as f64).exp()
                    }
                })
                .collect()
        };
        grid.extend_from_slice(&self.extra_kappas);
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        grid
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub kappa_o: f64,
    pub estimator: Estimator,
    /// Mean of `<fz(mu_hat), fz(mu_o)>`.
    pub inner_raw: f64,
    /// Mean of the orbit-maximized inner product.
    pub inner_sym: f64,
    pub kappa_hat_mean: f64,
    /// `kappa_hat_mean - kappa_o`.
    pub kappa_bias: f64,
    /// Standard error of `inner_sym` across trials.
    pub se_inner: f64,
    /// Standard error of the kappa estimate across trials.
    pub se_kappa: f64,
    /// Trials whose fit returned an error; excluded from the means.
    pub failed_trials: usize,
}

struct TrialOutcome {
    inner_raw: f64,
    inner_sym: f64,
    kappa: f64,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(master: u64, kappa_index: usize, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(((kappa_index as u64) << 32) | trial as u64))
}

/// Uniform point on S³ from a normalized vector of independent standard normals.
fn gaussian_direction(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if let Ok(q) = UnitQuaternion::from_array(v) {
            return q;
        }
    }
}

fn run_trial(
    config: &SweepConfig,
    group: &SymmetryGroup,
    kappa_o: f64,
    seed: u64,
) -> Result<Vec<Result<TrialOutcome>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = gaussian_direction(&mut rng);
    let model = GInvariantVmf::new(group.clone(), VmfParams::new(truth, kappa_o)?);
    let samples = model.sample_with_rng(config.n, &mut rng);
    Ok(config
        .estimators
        .iter()
        .map(|est| {
            let fit = est.fit(&samples, group, &config.em)?;
            Ok(TrialOutcome {
                inner_raw: fz_inner_product(&fit.mu, &truth, group)?,
                inner_sym: orbit_inner_product(&fit.mu, &truth, group),
                kappa: fit.kappa,
            })
        })
        .collect())
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Runs every (kappa, trial) cell, in parallel, and aggregates in trial order.
/// Rows are ordered by kappa, then by the configured estimator order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let group = SymmetryGroup::resolve(&config.group, false)?;
    let grid = config.kappa_grid();

    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|k| (0..config.trials).map(move |t| (k, t)))
        .collect();
    let outcomes: Vec<Result<Vec<Result<TrialOutcome>>>> = cells
        .par_iter()
        .map(|&(k, t)| run_trial(config, &group, grid[k], trial_seed(config.seed, k, t)))
        .collect();

    let mut rows = Vec::with_capacity(grid.len() * config.estimators.len());
    for (k, &kappa_o) in grid.iter().enumerate() {
        let block = &outcomes[k * config.trials..(k + 1) * config.trials];
        for (e, &estimator) in config.estimators.iter().enumerate() {
            let mut raw = Vec::with_capacity(config.trials);
            let mut sym = Vec::with_capacity(config.trials);
            let mut kap = Vec::with_capacity(config.trials);
            let mut failed = 0;
            for trial in block {
                match trial.as_ref().map(|per_est| &per_est[e]) {
                    Ok(Ok(o)) => {
                        raw.push(o.inner_raw);
                        sym.push(o.inner_sym);
                        kap.push(o.kappa);
                    }
                    _ => failed += 1,
                }
            }
            let (inner_raw, _) = mean_and_se(&raw);
            let (inner_sym, se_inner) = mean_and_se(&sym);
            let (kappa_hat_mean, se_kappa) = mean_and_se(&kap);
            rows.push(SweepRow {
                kappa_o,
                estimator,
                inner_raw,
                inner_sym,
                kappa_hat_mean,
                kappa_bias: kappa_hat_mean - kappa_o,
                se_inner,
                se_kappa,
                failed_trials: failed,
            });
        }
    }
    Ok(rows)
}

pub fn format_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.kappa_o, r.estimator, r.inner_raw, r.inner_sym, r.kappa_hat_mean, r.kappa_bias, r.se_inner, r.se_kappa
        );
    }
    out
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn series_by_estimator(rows: &[SweepRow], y: impl Fn(&SweepRow) -> f64) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let v = y(r);
        if !v.is_finite() {
            continue;
        }
        match out.iter_mut().find(|s| s.name == r.estimator.name()) {
            Some(s) => s.points.push((r.kappa_o, v)),
            None => out.push(Series {
                name: r.estimator.name().to_string(),
                points: vec![(r.kappa_o, v)],
            }),
        }
    }
    out
}

/// Standalone SVG line chart with a log-scaled x axis.
fn line_chart(title: &str, y_label: &str, series: &[Series], zero_line: bool) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (mut x_lo, mut x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (mut y_lo, mut y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (1.0, 10.0, 0.0, 1.0);
    }
    if zero_line {
        y_lo = y_lo.min(0.0);
        y_hi = y_hi.max(0.0);
    }
    if x_hi <= x_lo {
        x_lo /= 2.0;
        x_hi *= 2.0;
    }
    if y_hi <= y_lo {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let plot_h = CHART_H - MARGIN_T - MARGIN_B;
    let (lx_lo, lx_hi) = (x_lo.ln(), x_hi.ln());
    let px = |x: f64| MARGIN_L + (x.ln() - lx_lo) / (lx_hi - lx_lo) * plot_w;
    let py = |y: f64| MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_W}" height="{CHART_H}" viewBox="0 0 {CHART_W} {CHART_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        title
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    // x ticks at 1, 2, 5 times powers of ten
    let mut decade = 10f64.powf(x_lo.log10().floor());
    while decade <= x_hi {
        for m in [1.0, 2.0, 5.0] {
            let x = decade * m;
            if x >= x_lo * (1.0 - 1e-9) && x <= x_hi * (1.0 + 1e-9) {
                let sx = px(x);
                let _ = writeln!(
                    svg,
                    r##"<line x1="{sx:.2}" y1="{}" x2="{sx:.2}" y2="{}" stroke="#ddd"/><text x="{sx:.2}" y="{}" text-anchor="middle">{}</text>"##,
                    MARGIN_T,
                    MARGIN_T + plot_h,
                    MARGIN_T + plot_h + 16.0,
                    x
                );
            }
        }
        decade *= 10.0;
    }
    for i in 0..=5 {
        let y = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let sy = py(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{sy:.2}" x2="{}" y2="{sy:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_L + plot_w,
            MARGIN_L - 6.0,
            sy + 4.0,
            format_tick(y)
        );
    }
    if zero_line {
        let sy = py(0.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{sy:.2}" x2="{}" y2="{sy:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            MARGIN_L + plot_w
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">true concentration (log scale)</text>"#,
        MARGIN_L + plot_w / 2.0,
        CHART_H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_T + plot_h / 2.0,
        y_label
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_T + 10.0 + 20.0 * i as f64;
        let lx = MARGIN_L + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(y: f64) -> String {
    let s = format!("{y:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

pub fn inner_product_chart(rows: &[SweepRow]) -> String {
    line_chart(
        "Mean inner product with true mean",
        "symmetry-aware inner product",
        &series_by_estimator(rows, |r| r.inner_sym),
        false,
    )
}

pub fn kappa_bias_chart(rows: &[SweepRow]) -> String {
    line_chart(
        "Concentration estimator bias",
        "mean kappa_hat - kappa_o",
        &series_by_estimator(rows, |r| r.kappa_bias),
        true,
    )
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `sweep.csv`, `inner_product.svg` and `kappa_bias.svg` under `out_dir`.
pub fn emit_report(rows: &[SweepRow], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no sweep rows to report".into()));
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("sweep.csv", format_csv(rows)),
        ("inner_product.svg", inner_product_chart(rows)),
        ("kappa_bias.svg", kappa_bias_chart(rows)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}
