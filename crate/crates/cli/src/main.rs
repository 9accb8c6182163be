//! `symvmf`: simulation, estimation and grain indexing for orientation data
//! under crystal symmetry.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use symvmf::bench::{self, Estimator, SweepConfig};
use symvmf::ebsdmap::{self, SynthConfig};
use symvmf::ginv::{self, EmConfig, InitStrategy};
use symvmf::io::{read_quaternion_file, write_quaternion_file, KeyValueReport};
use symvmf::symgrp::{map_to_fz, SymmetryGroup};
use symvmf::vmf;

const GROUP_HELP: &str = "Symmetry group: `trivial`, `cubic_m3m` (alias `cubic`), or a CSV of unit \
quaternions `q1,q2,q3,q4` with the identity first";

#[derive(Parser, Debug)]
#[command(
    name = "symvmf",
    version,
    about = "Mean orientation and concentration estimation under crystal symmetry",
    long_about = "Mean orientation and concentration estimation under crystal symmetry.\n\n\
Quaternion files are CSV with columns q1,q2,q3,q4 (scalar first, header optional, \
'#' comments allowed). Map files are CSV with header x,y,phi1,Phi,phi2[,grain], \
Bunge ZXZ Euler angles in radians, one row per pixel.\n\n\
Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 numerical failure."
)]
struct Cli {
    /// Cap on worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Master seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep the true concentration and compare estimators; writes sweep.csv,
    /// inner_product.svg and kappa_bias.svg under --out
    Simulate(SimulateArgs),
    /// Fit mean and concentration to a quaternion CSV and print a `key = value` report
    Estimate(EstimateArgs),
    /// Fundamental-zone utilities
    Fz {
        #[command(subcommand)]
        command: FzCommand,
    },
    /// Symmetry-group utilities
    Group {
        #[command(subcommand)]
        command: GroupCommand,
    },
    /// Orientation-map grain indexing
    Ebsd {
        #[command(subcommand)]
        command: EbsdCommand,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "cubic_m3m", help = GROUP_HELP)]
    group: String,
    /// Samples per trial
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    kappa_min: f64,
    #[arg(long, default_value_t = 100.0)]
    kappa_max: f64,
    /// Log-spaced grid points between --kappa-min and --kappa-max
    #[arg(long, default_value_t = 25)]
    steps: usize,
    /// Extra concentrations added to the grid (repeatable)
    #[arg(long = "extra-kappa", value_name = "KAPPA")]
    extra_kappa: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Estimators to compare
    #[arg(long, value_delimiter = ',', default_value = "naive,modified,em")]
    estimators: Vec<MethodArg>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    /// EM fit of the group-invariant mixture
    Em,
    /// Closed-form fit ignoring symmetry
    Naive,
    /// Closed-form fit after folding samples into the fundamental zone
    #[value(alias = "modified")]
    Fz,
}

impl From<MethodArg> for Estimator {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Em => Estimator::Em,
            MethodArg::Naive => Estimator::Naive,
            MethodArg::Fz => Estimator::Modified,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    /// Fundamental-zone fold followed by the closed-form fit
    Fz,
    /// Best of several random starts
    Random,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Quaternion CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "em")]
    method: MethodArg,
    #[arg(long, default_value = "cubic_m3m", help = GROUP_HELP)]
    group: String,
    /// EM initialization
    #[arg(long, value_enum, default_value = "fz")]
    init: InitArg,
    /// Number of random starts for --init random
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Relative log-likelihood change that stops EM
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Also write the report to DIR/fit.txt
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum FzCommand {
    /// Replace every quaternion by its fundamental-zone representative
    Map(FzMapArgs),
}

#[derive(Args, Debug)]
struct FzMapArgs {
    /// Quaternion CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "cubic_m3m", help = GROUP_HELP)]
    group: String,
    /// Output directory for fz.csv; prints to stdout when omitted
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GroupCommand {
    /// Verify identity, closure and inverses of a group table by exhaustive products
    Check(GroupCheckArgs),
}

#[derive(Args, Debug)]
struct GroupCheckArgs {
    /// Builtin name or CSV path
    group: String,
    /// Pair every builtin element with its negative
    #[arg(long)]
    antipodal: bool,
}

#[derive(Subcommand, Debug)]
enum EbsdCommand {
    /// Segment a map into grains and fit each grain; writes grains.csv and pixels.csv under --out
    Index(EbsdIndexArgs),
    /// Generate a Voronoi map with known grain means; writes the map and a
    /// sibling `<stem>.truth.csv` (grain,q1,q2,q3,q4,kappa)
    Synth(EbsdSynthArgs),
}

#[derive(Args, Debug)]
struct EbsdIndexArgs {
    /// Map CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "cubic_m3m", help = GROUP_HELP)]
    group: String,
    /// Largest disorientation joining neighbouring pixels, degrees
    #[arg(long, default_value_t = ebsdmap::DEFAULT_THRESHOLD_DEG)]
    threshold_deg: f64,
    /// Smallest grain kept; smaller regions are left unindexed
    #[arg(long, default_value_t = ebsdmap::DEFAULT_MIN_SIZE)]
    min_size: usize,
    /// Segment even if the map carries a grain column
    #[arg(long)]
    resegment: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EbsdSynthArgs {
    /// Number of grains
    #[arg(long, default_value_t = 10)]
    grains: usize,
    /// Grid size as WIDTHxHEIGHT
    #[arg(long, default_value = "128x128", value_parser = parse_size)]
    size: (usize, usize),
    /// Concentration of every grain
    #[arg(long, default_value_t = 200.0)]
    kappa: f64,
    #[arg(long, default_value = "cubic_m3m", help = GROUP_HELP)]
    group: String,
    /// Map CSV to write
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("width and height must be positive".into());
    }
    Ok((w, h))
}

fn group(name: &str) -> Result<SymmetryGroup> {
    Ok(SymmetryGroup::resolve(name, false)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn run_simulate(args: SimulateArgs, seed: u64) -> Result<()> {
    let config = SweepConfig {
        kappa_min: args.kappa_min,
        kappa_max: args.kappa_max,
        steps: args.steps,
        extra_kappas: args.extra_kappa,
        n: args.n,
        trials: args.trials,
        group: args.group,
        seed,
        estimators: args.estimators.into_iter().map(Estimator::from).collect(),
        em: EmConfig::default(),
    };
    config.validate()?;
    group(&config.group)?;
    create_dir(&args.out)?;
    let start = Instant::now();
    let rows = bench::run_sweep(&config)?;
    for r in rows.iter().filter(|r| r.failed_trials > 0) {
        eprintln!(
            "warning: {} of {} trials failed for {} at kappa {}",
            r.failed_trials, config.trials, r.estimator, r.kappa_o
        );
    }
    for path in bench::emit_report(&rows, &args.out)? {
        println!("{}", path.display());
    }
    eprintln!("sweep finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn run_estimate(args: EstimateArgs, seed: u64) -> Result<()> {
    let g = group(&args.group)?;
    let samples = read_quaternion_file(&args.input)?;
    let mut report = KeyValueReport::new();
    report.push("method", format!("{:?}", args.method).to_lowercase());
    report.push("group", g.name());
    report.push("n", samples.len());
    match args.method {
        MethodArg::Naive | MethodArg::Fz => {
            let fit = match args.method {
                MethodArg::Naive => vmf::ml_estimate(&samples)?,
                _ => ginv::modified_ml_fit(&samples, &g)?,
            };
            push_params(&mut report, &fit.params);
            report.push("kappa_saturated", fit.kappa_saturated);
        }
        MethodArg::Em => {
            let init = match args.init {
                InitArg::Fz => InitStrategy::FzMl,
                InitArg::Random => InitStrategy::RandomRestarts {
                    restarts: args.restarts,
                    seed,
                },
            };
            let config = EmConfig {
                tol: args.tol,
                max_iter: args.max_iter,
                init,
            };
            let fit = ginv::em_fit(&samples, &g, &config)?;
            push_params(&mut report, &fit.params);
            report.push("kappa_saturated", fit.kappa_saturated);
            report.push("iterations", fit.iterations);
            report.push("converged", fit.converged);
            report.push("log_likelihood", fit.final_log_likelihood());
        }
    }
    print!("{report}");
    if let Some(dir) = args.out {
        create_dir(&dir)?;
        let path = dir.join("fit.txt");
        fs::write(&path, report.to_string()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn push_params(report: &mut KeyValueReport, p: &vmf::VmfParams) {
    let [a, b, c, d] = p.mu.components();
    report.push("mu_q1", a).push("mu_q2", b).push("mu_q3", c).push("mu_q4", d);
    report.push("kappa", p.kappa);
}

fn run_fz_map(args: FzMapArgs) -> Result<()> {
    let g = group(&args.group)?;
    let qs = read_quaternion_file(&args.input)?;
    let mapped = qs
        .iter()
        .map(|q| map_to_fz(q, &g).map(|(img, _)| img))
        .collect::<symvmf::Result<Vec<_>>>()?;
    match args.out {
        Some(dir) => {
            create_dir(&dir)?;
            let path = dir.join("fz.csv");
            write_quaternion_file(&path, &mapped)?;
            println!("{}", path.display());
        }
        None => print!("{}", symvmf::io::format_quaternions(&mapped)),
    }
    Ok(())
}

fn run_group_check(args: GroupCheckArgs) -> Result<()> {
    let start = Instant::now();
    let g = SymmetryGroup::resolve(&args.group, args.antipodal)?;
    g.verify()?;
    let mut report = KeyValueReport::new();
    report.push("group", g.name());
    report.push("M", g.order());
    report.push("products_checked", g.order() * g.order());
    report.push("identity", "ok").push("closure", "ok").push("inverses", "ok");
    report.push("antipodal", g.is_antipodal_extended());
    report.push("elapsed_ms", format!("{:.3}", start.elapsed().as_secs_f64() * 1e3));
    print!("{report}");
    Ok(())
}

fn run_ebsd_index(args: EbsdIndexArgs) -> Result<()> {
    if !(args.threshold_deg > 0.0) {
        bail!(symvmf::Error::InvalidConfig("--threshold-deg must be positive".into()));
    }
    let g = group(&args.group)?;
    create_dir(&args.out)?;
    let start = Instant::now();
    let mut map = ebsdmap::load_map(&args.input)?;
    if map.labels().is_none() || args.resegment {
        let labels = ebsdmap::segment_grains(&map, &g, args.threshold_deg.to_radians(), args.min_size);
        map = map.with_labels(labels)?;
    }
    let outcome = ebsdmap::index_grains(&map, &g, &EmConfig::default())?;
    for f in &outcome.failures {
        eprintln!("grain {} ({} pixels) not indexed: {}", f.id, f.pixel_count, f.error);
    }
    for path in ebsdmap::emit_outputs(&outcome.records, &map, &args.out)? {
        println!("{}", path.display());
    }
    eprintln!(
        "indexed {} grains ({} failed) in {:.2} s",
        outcome.records.len(),
        outcome.failures.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn truth_path(map_path: &Path) -> PathBuf {
    let stem = map_path.file_stem().map_or_else(|| "map".into(), |s| s.to_string_lossy().into_owned());
    map_path.with_file_name(format!("{stem}.truth.csv"))
}

fn run_ebsd_synth(args: EbsdSynthArgs, seed: u64) -> Result<()> {
    let g = group(&args.group)?;
    let (width, height) = args.size;
    let config = SynthConfig {
        grains: args.grains,
        width,
        height,
        kappa: args.kappa,
        seed,
    };
    let synth = ebsdmap::synthesize(&config, &g)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    ebsdmap::write_map(&synth.map, &args.out)?;
    let mut truth = String::from("grain,q1,q2,q3,q4,kappa\n");
    for (i, mu) in synth.means.iter().enumerate() {
        let [a, b, c, d] = mu.components();
        truth.push_str(&format!("{},{a},{b},{c},{d},{}\n", i + 1, synth.kappa));
    }
    let tpath = truth_path(&args.out);
    fs::write(&tpath, truth).with_context(|| format!("cannot write {}", tpath.display()))?;
    println!("{}", args.out.display());
    println!("{}", tpath.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(symvmf::Error::InvalidConfig("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    match cli.command {
        Command::Simulate(a) => run_simulate(a, cli.seed),
        Command::Estimate(a) => run_estimate(a, cli.seed),
        Command::Fz { command: FzCommand::Map(a) } => run_fz_map(a),
        Command::Group { command: GroupCommand::Check(a) } => run_group_check(a),
        Command::Ebsd { command: EbsdCommand::Index(a) } => run_ebsd_index(a),
        Command::Ebsd { command: EbsdCommand::Synth(a) } => run_ebsd_synth(a, cli.seed),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<symvmf::Error>()) {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
