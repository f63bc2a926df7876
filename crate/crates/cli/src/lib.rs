//! Command-line front end for the robust aggregation solver: argument
//! parsing, the `solve`, `compare`, `map` and `verify` commands, and their
//! exit codes.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use robust_agg::learning::{run_with, LearnConfig, RateMode, RunOutput};
use robust_agg::verify::{run_verify, DistanceFns, VerifyConfig};
use robust_agg::{
    AggregatorGrid, BaselineKind, EnumerateOptions, Family, GridSpec, InformationStructure,
    Paradigm, ParadigmKind,
};

use crate::io::{
    fmt17, fmt_structure, rounds_csv, write_atomic, write_grid_map, KeyValues, WeightsFile,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "robust-agg",
    version,
    about = "Minimax robust aggregation of two forecasters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the minimax aggregator on a discretized family.
    Solve(SolveArgs),
    /// Maximum regret of the baseline aggregators and any supplied grids.
    Compare(CompareArgs),
    /// Per-report regret and report-mass heatmaps.
    Map(MapArgs),
    /// Randomized checks of the discretization and solver guarantees.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

impl std::fmt::Display for Switch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.is_on() { "on" } else { "off" })
    }
}

/// `inf` or a finite nonnegative Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lipschitz(pub Option<f64>);

impl std::str::FromStr for Lipschitz {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if matches!(s, "inf" | "infinity" | "Inf") {
            return Ok(Self(None));
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Self(Some(v))),
            Ok(v) if v == f64::INFINITY => Ok(Self(None)),
            _ => Err(format!("expected 'inf' or a nonnegative number, got '{s}'")),
        }
    }
}

impl std::fmt::Display for Lipschitz {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            None => f.write_str("inf"),
            Some(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Report grid resolution.
    #[arg(long, default_value_t = 20)]
    pub n: u32,
    /// Prior grid resolution.
    #[arg(long, default_value_t = 400)]
    pub m: u32,
    /// Lipschitz bound on the aggregator (1-norm), or `inf`.
    #[arg(long, default_value = "inf")]
    pub lipschitz: Lipschitz,
    /// additive, absolute or ratio.
    #[arg(long, default_value = "additive")]
    pub paradigm: ParadigmKind,
    #[arg(long, default_value_t = 2000)]
    pub rounds: usize,
    /// experiment, theory, or a positive number.
    #[arg(long, default_value = "experiment")]
    pub rate: RateMode<f64>,
    /// Stop once the certified gap is at most this.
    #[arg(long, default_value_t = 1e-3)]
    pub gap: f64,
    /// Reduce the family to orbit representatives and keep responses symmetric.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub symmetry: Switch,
    /// Recorded in the outputs; the solver itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Update weights with `exp(-rate * utility)` instead of `exp(+rate * utility)`.
    #[arg(long)]
    pub paper_sign: bool,
    /// Also write heatmaps of the aggregator, its regret, and nature's report mass.
    #[arg(long)]
    pub heatmaps: bool,
    /// Rounds between certificate evaluations.
    #[arg(long, default_value_t = 10)]
    pub check_every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 20)]
    pub n: u32,
    #[arg(long, default_value_t = 400)]
    pub m: u32,
    #[arg(long, default_value = "additive")]
    pub paradigm: ParadigmKind,
    /// Aggregator CSV files to add to the table; repeatable.
    #[arg(long)]
    pub aggregator: Vec<PathBuf>,
    /// Evaluate orbit representatives only (exact for the maximum).
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub symmetry: Switch,
    /// Also write the table to `compare.csv` here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    #[arg(long, default_value_t = 20)]
    pub n: u32,
    #[arg(long, default_value_t = 400)]
    pub m: u32,
    #[arg(long, default_value = "additive")]
    pub paradigm: ParadigmKind,
    /// Aggregator CSV for the regret map.
    #[arg(long)]
    pub aggregator: Option<PathBuf>,
    /// Weights file for the report-mass map.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub symmetry: Switch,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Write `log10` of the mass map (floored at 1e-12).
    #[arg(long)]
    pub log_mass: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Report grid of the covering and smoothness checks.
    #[arg(long, default_value_t = 10)]
    pub n: u32,
    /// Prior grid of the covering checks; must exceed `n`.
    #[arg(long, default_value_t = 100)]
    pub m: u32,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Instances for the brute-force QP comparison.
    #[arg(long, default_value_t = 10_000)]
    pub qp_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report to `verify.txt` here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// An error paired with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: e.into(),
    }
}

fn solver(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_SOLVER,
        error: e.into(),
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name), runs the command, and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Map(a) => cmd_map(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn grid_spec(n: u32, m: u32) -> Result<GridSpec, Failure> {
    GridSpec::new(n, m).map_err(usage)
}

fn make_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(solver)
}

fn enumerate(spec: GridSpec, symmetry: Switch) -> Family<f64> {
    Family::grid(
        spec,
        EnumerateOptions {
            prune_symmetry: symmetry.is_on(),
            dedup: false,
        },
    )
}

/// Learning-loop configuration for `solve`.
pub fn learn_config(args: &SolveArgs) -> Result<LearnConfig<f64>, Failure> {
    if !(args.gap >= 0.0) {
        return Err(usage(anyhow!("--gap must be nonnegative")));
    }
    let config = LearnConfig {
        rounds: args.rounds,
        rate: args.rate,
        lipschitz: args.lipschitz.0,
        paradigm: Paradigm::new(args.paradigm),
        target_gap: args.gap,
        symmetrize_responses: args.symmetry.is_on(),
        seed: args.seed,
        paper_sign: args.paper_sign,
        check_every: args.check_every,
        ..LearnConfig::default()
    };
    config.validate().map_err(usage)?;
    Ok(config)
}

/// Deterministic summary of a solve: configuration and certified bounds.
pub fn certificate(args: &SolveArgs, family: &Family<f64>, out: &RunOutput<f64>) -> KeyValues {
    let c = &out.certificate;
    let mut kv = KeyValues::default();
    kv.push("n", args.n);
    kv.push("m", args.m);
    kv.push("lipschitz", args.lipschitz);
    kv.push("paradigm", args.paradigm);
    kv.push("rounds_requested", args.rounds);
    kv.push("rate_mode", args.rate);
    kv.push("rate", fmt17(c.rate));
    kv.push("target_gap", fmt17(args.gap));
    kv.push("symmetry", args.symmetry);
    kv.push("seed", args.seed);
    kv.push("paper_sign", args.paper_sign);
    kv.push("structures", family.len());
    kv.push("represented_structures", family.total_multiplicity());
    kv.push("rounds", c.rounds);
    kv.push("converged", c.converged);
    kv.push("lower_bound", fmt17(c.lower_bound));
    kv.push("upper_bound", fmt17(c.upper_bound));
    kv.push("gap", fmt17(c.gap));
    kv.push("argmax", fmt_structure(&family.structures()[c.argmax]));
    kv.push("online_regret", fmt17(c.online_regret));
    kv.push(
        "aggregator_lipschitz",
        fmt17(out.f_star.lipschitz_constant()),
    );
    kv.push("aggregator_center", fmt17(out.f_star.eval(0.5, 0.5)));
    kv
}

pub fn cmd_solve(args: &SolveArgs) -> CmdResult {
    let spec = grid_spec(args.n, args.m)?;
    let config = learn_config(args)?;
    make_dir(&args.out_dir)?;
    let started = Instant::now();
    let family = enumerate(spec, args.symmetry);
    eprintln!(
        "enumerated {} structures ({} before symmetry reduction)",
        family.len(),
        family.total_multiplicity()
    );
    let out = run_with(&family, &config, |r| {
        if let (Some(lo), Some(hi)) = (r.lower, r.upper) {
            if r.round % 100 == 0 {
                eprintln!(
                    "round={} lower={lo:.6} upper={hi:.6} gap={:.2e}",
                    r.round,
                    hi - lo
                );
            }
        }
    })
    .map_err(solver)?;

    let cert = certificate(args, &family, &out);
    let dir = &args.out_dir;
    io::write_aggregator(&dir.join("aggregator.csv"), &out.f_star).map_err(solver)?;
    write_atomic(&dir.join("certificate.txt"), cert.render().as_bytes()).map_err(solver)?;
    let weights = WeightsFile {
        n: args.n,
        m: args.m,
        symmetric: family.is_symmetric(),
        structures: family.structures().to_vec(),
        multiplicity: family.multiplicity().to_vec(),
        weights: out.w_bar.clone(),
    };
    weights.write(&dir.join("weights.csv")).map_err(solver)?;

    let mut report = cert.clone();
    report.push(
        "wall_clock_secs",
        format!("{:.3}", started.elapsed().as_secs_f64()),
    );
    report.push(
        "solver_secs",
        format!("{:.3}", out.certificate.wall_clock_secs),
    );
    report.push("threads", rayon::current_num_threads());
    let text = format!(
        "{}\n{}",
        report.render(),
        rounds_csv(&out.certificate.history)
    );
    write_atomic(&dir.join("report.txt"), text.as_bytes()).map_err(solver)?;

    if args.heatmaps {
        let side = family.side();
        let paradigm = Paradigm::new(args.paradigm);
        write_grid_map(dir, "aggregator_map", side, out.f_star.values(), false).map_err(solver)?;
        let regret = family.regret_map(&out.f_star, &paradigm).map_err(solver)?;
        write_grid_map(dir, "regret_map", side, &regret, false).map_err(solver)?;
        let mass = family.mass_map(&out.w_bar).map_err(solver)?;
        write_grid_map(dir, "mass_map", side, &mass, true).map_err(solver)?;
    }

    print!("{}", cert.render());
    let c = &out.certificate;
    if c.gap <= args.gap {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "error: certified gap {:.3e} above target {:.3e} after {} rounds",
            c.gap, args.gap, c.rounds
        );
        Ok(EXIT_SOLVER)
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub max_regret: f64,
    pub argmax: InformationStructure,
}

/// Maximum regret over `family` of the three baselines, in that order, then of `extra`.
pub fn compare_table(
    family: &Family<f64>,
    paradigm: &Paradigm<f64>,
    extra: &[(String, AggregatorGrid)],
) -> robust_agg::Result<Vec<CompareRow>> {
    let mut entries: Vec<(String, AggregatorGrid)> = BaselineKind::ALL
        .iter()
        .map(|k| (k.name().to_string(), family.sample(k)))
        .collect();
    entries.extend(
        extra
            .iter()
            .map(|(name, g)| (name.clone(), family.sample(g))),
    );
    entries
        .into_iter()
        .map(|(name, grid)| {
            let (max_regret, i) = family.max_regret(&grid, paradigm)?.ok_or_else(|| {
                robust_agg::Error::InvalidArgument("no admissible structure".into())
            })?;
            Ok(CompareRow {
                name,
                max_regret,
                argmax: family.structures()[i],
            })
        })
        .collect()
}

pub fn cmd_compare(args: &CompareArgs) -> CmdResult {
    let spec = grid_spec(args.n, args.m)?;
    let extra = args
        .aggregator
        .iter()
        .map(|p| Ok((p.display().to_string(), io::read_aggregator(p)?)))
        .collect::<robust_agg::Result<Vec<_>>>()
        .map_err(usage)?;
    let family = enumerate(spec, args.symmetry);
    let rows = compare_table(&family, &Paradigm::new(args.paradigm), &extra).map_err(solver)?;
    let mut text = String::from("aggregator,max_regret,argmax\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{}\n",
            r.name,
            fmt17(r.max_regret),
            fmt_structure(&r.argmax)
        ));
    }
    if let Some(dir) = &args.out_dir {
        make_dir(dir)?;
        write_atomic(&dir.join("compare.csv"), text.as_bytes()).map_err(solver)?;
    }
    print!("{text}");
    Ok(EXIT_OK)
}

pub fn cmd_map(args: &MapArgs) -> CmdResult {
    if args.aggregator.is_none() && args.weights.is_none() {
        return Err(usage(anyhow!("map needs --aggregator and/or --weights")));
    }
    let spec = grid_spec(args.n, args.m)?;
    let agg = args
        .aggregator
        .as_deref()
        .map(io::read_aggregator)
        .transpose()
        .map_err(usage)?;
    let weights = args
        .weights
        .as_deref()
        .map(WeightsFile::read)
        .transpose()
        .map_err(usage)?;
    make_dir(&args.out_dir)?;
    if let Some(agg) = agg {
        let family = enumerate(spec, args.symmetry);
        let grid = family.sample(&agg);
        let map = family
            .regret_map(&grid, &Paradigm::new(args.paradigm))
            .map_err(solver)?;
        write_grid_map(&args.out_dir, "regret_map", family.side(), &map, false).map_err(solver)?;
        println!(
            "regret_map={}",
            args.out_dir.join("regret_map.pgm").display()
        );
    }
    if let Some(w) = weights {
        let family = Family::from_structures(w.n, w.structures, Some(w.multiplicity), w.symmetric)
            .map_err(usage)?;
        let mass = family.mass_map(&w.weights).map_err(solver)?;
        write_grid_map(
            &args.out_dir,
            "mass_map",
            family.side(),
            &mass,
            args.log_mass,
        )
        .map_err(solver)?;
        println!("mass_map={}", args.out_dir.join("mass_map.pgm").display());
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &VerifyArgs) -> CmdResult {
    let spec = grid_spec(args.n, args.m)?;
    if spec.m <= spec.n {
        return Err(usage(anyhow!("verify needs --m greater than --n")));
    }
    let config = VerifyConfig {
        samples: args.samples,
        qp_samples: args.qp_samples,
        seed: args.seed,
        spec,
    };
    let report = run_verify(&config, &DistanceFns::default());
    let text = report.render();
    if let Some(dir) = &args.out_dir {
        make_dir(dir)?;
        write_atomic(&dir.join("verify.txt"), text.as_bytes()).map_err(solver)?;
    }
    print!("{text}");
    if report.all_passed() {
        Ok(EXIT_OK)
    } else {
        for p in report.failures() {
            eprintln!("violated: {}", p.line());
        }
        Ok(EXIT_VIOLATION)
    }
}
