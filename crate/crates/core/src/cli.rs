//! The `priorfuse` command line.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on domain errors (bad
//! files, infeasible constraints). Every output file is written through a
//! temporary file in the same directory and renamed into place, and gets a
//! `<output>.manifest.json` describing the run.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::concentration::{ConcentrationSpec, Divergence, RadiusVariant};
use crate::error::{Error, Result};
use crate::fusion::{kl_centroid, l1_barycenter, FusionReport};
use crate::maxent::{solve_maxent, MaxentOptions, ResidualReport};
use crate::model::io::{
    read_constraints_json, read_counts_csv, read_distribution_csv, write_distribution_csv,
};
use crate::model::{empirical_distribution, EmpiricalCounts};
use crate::sim::{
    default_checkpoints, run_coverage, run_trajectory, write_trajectory_csv, CoverageConfig,
    KlRadius, SimulationConfig,
};

const SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "priorfuse",
    version,
    about = "Fuse expert priors with empirical counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the maximum-entropy prior for a constraint file.
    Maxent(MaxentArgs),
    /// Print a concentration radius.
    Radius(RadiusArgs),
    /// Fuse an expert prior with observed counts.
    Fuse(FuseArgs),
    /// Simulate error trajectories against the sample size.
    Simulate(SimulateArgs),
    /// Monte-Carlo coverage of the concentration events and guarantees.
    Coverage(CoverageArgs),
}

#[derive(Debug, Args, Serialize)]
struct MaxentArgs {
    /// Constraint JSON file.
    #[arg(long)]
    constraints: PathBuf,
    /// Output distribution CSV.
    #[arg(long)]
    out: PathBuf,
    /// Output solver report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    max_cycles: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DivergenceArg {
    Kl,
    L1,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum VariantArg {
    Exact,
    Conjecture,
}

#[derive(Debug, Args, Serialize)]
struct RadiusArgs {
    #[arg(long)]
    n: u64,
    /// Number of cells.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = DivergenceArg::Kl)]
    divergence: DivergenceArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Conjecture)]
    variant: VariantArg,
}

#[derive(Debug, Args, Serialize)]
struct FuseArgs {
    /// Expert prior distribution CSV.
    #[arg(long)]
    expert: PathBuf,
    /// Counts CSV.
    #[arg(long)]
    counts: PathBuf,
    /// Declared total sample count; must equal the sum of the counts file.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, value_enum, default_value_t = DivergenceArg::Kl)]
    method: DivergenceArg,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Conjecture)]
    variant: VariantArg,
    /// Output estimate CSV.
    #[arg(long)]
    out: PathBuf,
    /// Output fusion report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    symptoms: usize,
    /// Marginal noise variances, one noisy prior each.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.4")]
    sigma2: Vec<f64>,
    /// Leave out the prior equal to the target.
    #[arg(long)]
    no_exact_prior: bool,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, default_value_t = 2000)]
    n_max: u64,
    /// Sample sizes to record; defaults to 1, 2, 5, 10, ... up to n-max.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<u64>>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Conjecture)]
    variant: VariantArg,
    /// Output trajectory CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CoverageArgs {
    #[arg(long)]
    symptoms: usize,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Exact)]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.4")]
    sigma2: Vec<f64>,
    #[arg(long)]
    no_exact_prior: bool,
    /// Output coverage report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    schema: u32,
    subcommand: &'a str,
    parameters: Value,
    input_digests: Vec<(String, String)>,
    outputs: Vec<String>,
    tool_version: &'static str,
    wall_clock_seconds: f64,
}

/// Runs the command line and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let kind = match &e {
                Error::Infeasible(_) => "infeasible_constraints",
                Error::Format { .. } => "malformed_file",
                Error::Io(_) => "io",
                _ => "invalid_input",
            };
            eprintln!("error: {e}");
            eprintln!("{}", json!({ "error": kind, "message": e.to_string() }));
            1
        }
    }
}

fn run(command: Command) -> Result<()> {
    let started = Instant::now();
    match command {
        Command::Maxent(args) => maxent(&args, started),
        Command::Radius(args) => {
            let eps =
                radius_spec(args.divergence, args.variant, args.delta)?.radius(args.n, args.k)?;
            println!("{eps}");
            Ok(())
        }
        Command::Fuse(args) => fuse(&args, started),
        Command::Simulate(args) => simulate(&args, started),
        Command::Coverage(args) => coverage(&args, started),
    }
}

fn radius_spec(
    divergence: DivergenceArg,
    variant: VariantArg,
    delta: f64,
) -> Result<ConcentrationSpec> {
    let (d, v) = match (divergence, variant) {
        (DivergenceArg::Kl, VariantArg::Exact) => (Divergence::Kl, RadiusVariant::ExactKl),
        (DivergenceArg::Kl, VariantArg::Conjecture) => {
            (Divergence::Kl, RadiusVariant::ConjectureKl)
        }
        (DivergenceArg::L1, VariantArg::Conjecture) => {
            (Divergence::L1, RadiusVariant::ConjectureL1)
        }
        (DivergenceArg::L1, VariantArg::Exact) => {
            return Err(Error::invalid(
                "variant",
                "no exact radius is available for L1",
            ))
        }
    };
    ConcentrationSpec::new(d, delta, v)
}

fn kl_radius(variant: VariantArg) -> KlRadius {
    match variant {
        VariantArg::Exact => KlRadius::Exact,
        VariantArg::Conjecture => KlRadius::Conjecture,
    }
}

fn maxent(args: &MaxentArgs, started: Instant) -> Result<()> {
    let name = args.constraints.display().to_string();
    let constraints = read_constraints_json(open(&args.constraints)?, &name)?;
    let space = Arc::new(
        constraints
            .outcome_space()
            .map_err(|e| Error::format(&name, e.to_string()))?,
    );
    let options = MaxentOptions {
        max_cycles: args.max_cycles,
        ..MaxentOptions::default()
    };
    let solution = solve_maxent(&constraints, space, &options)?;
    write_atomic(&args.out, |w| {
        write_distribution_csv(&solution.distribution, w)
    })?;
    let mut outputs = vec![&args.out];
    if let Some(path) = &args.report {
        let report = json!({
            "schema": SCHEMA,
            "feasible": true,
            "converged": solution.converged,
            "entropy": solution.entropy,
            "residuals": ResidualReport {
                iterations: solution.iterations,
                max_constraint_residual: solution.max_constraint_residual,
                residuals: solution.residuals.clone(),
            },
        });
        write_json(path, &report)?;
        outputs.push(path);
    }
    manifest("maxent", args, &[&args.constraints], &outputs, started)
}

#[derive(Serialize)]
struct FuseReport<'a> {
    schema: u32,
    n: u64,
    cell_count: usize,
    delta: f64,
    variant: VariantArg,
    #[serde(flatten)]
    fusion: &'a FusionReport,
}

fn fuse(args: &FuseArgs, started: Instant) -> Result<()> {
    let expert_name = args.expert.display().to_string();
    let counts_name = args.counts.display().to_string();
    let expert = read_distribution_csv(open(&args.expert)?, &expert_name)?;
    let mut counts = read_counts_csv(open(&args.counts)?, &counts_name)?;
    if let Some(n) = args.n {
        counts = EmpiricalCounts::with_total(counts.counts().to_vec(), n)
            .map_err(|e| Error::format(&counts_name, e.to_string()))?;
    }
    if counts.counts().len() != expert.cell_count() {
        return Err(Error::format(
            &counts_name,
            format!(
                "{} cells but the expert prior has {}",
                counts.counts().len(),
                expert.cell_count()
            ),
        ));
    }
    let emp = empirical_distribution(expert.space().clone(), &counts)
        .map_err(|e| Error::format(&counts_name, e.to_string()))?;
    let epsilon = radius_spec(args.method, args.variant, args.delta)?
        .radius(counts.n(), expert.cell_count())?;
    let fusion = match args.method {
        DivergenceArg::Kl => kl_centroid(&expert, &emp, epsilon)?,
        DivergenceArg::L1 => l1_barycenter(&expert, &emp, epsilon)?,
    };
    write_atomic(&args.out, |w| write_distribution_csv(&fusion.estimate, w))?;
    let mut outputs = vec![&args.out];
    if let Some(path) = &args.report {
        let report = FuseReport {
            schema: SCHEMA,
            n: counts.n(),
            cell_count: expert.cell_count(),
            delta: args.delta,
            variant: args.variant,
            fusion: &fusion,
        };
        write_json(path, &report)?;
        outputs.push(path);
    }
    manifest(
        "fuse",
        args,
        &[&args.expert, &args.counts],
        &outputs,
        started,
    )
}

fn simulate(args: &SimulateArgs, started: Instant) -> Result<()> {
    let config = SimulationConfig {
        symptoms: args.symptoms,
        sigma2s: args.sigma2.clone(),
        include_exact_prior: !args.no_exact_prior,
        delta: args.delta,
        variant: kl_radius(args.variant),
        n_max: args.n_max,
        checkpoints: args
            .checkpoints
            .clone()
            .unwrap_or_else(|| default_checkpoints(args.n_max)),
        replications: args.reps,
        master_seed: args.seed,
    };
    let trajectory = run_trajectory(&config)?;
    write_atomic(&args.out, |w| write_trajectory_csv(&trajectory.records, w))?;
    eprintln!(
        "{}",
        serde_json::to_string(&trajectory.bounds).unwrap_or_default()
    );
    manifest("simulate", args, &[], &[&args.out], started)
}

fn coverage(args: &CoverageArgs, started: Instant) -> Result<()> {
    let config = CoverageConfig {
        symptoms: args.symptoms,
        n: args.n,
        delta: args.delta,
        variant: kl_radius(args.variant),
        replications: args.reps,
        master_seed: args.seed,
        sigma2s: args.sigma2.clone(),
        include_exact_prior: !args.no_exact_prior,
    };
    let report = run_coverage(&config)?;
    write_json(&args.out, &report)?;
    manifest("coverage", args, &[], &[&args.out], started)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn manifest<P: Serialize>(
    subcommand: &str,
    params: &P,
    inputs: &[&PathBuf],
    outputs: &[&PathBuf],
    started: Instant,
) -> Result<()> {
    let input_digests = inputs
        .iter()
        .map(|p| Ok((p.display().to_string(), digest(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        schema: SCHEMA,
        subcommand,
        parameters: serde_json::to_value(params).map_err(|e| Error::Io(e.into()))?,
        input_digests,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let mut path = outputs[0].clone().into_os_string();
    path.push(".manifest.json");
    write_json(Path::new(&path), &manifest)
}
