//! Command-line front end: design, partition, evaluate and simulate joint
//! constellations. Run specs live in JSON config files; every field can be
//! overridden by a command-line flag. dB-to-linear conversion happens here,
//! at the boundary; the library works in linear power throughout.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use noncoh_mac::constellation::{
    self, load_codebook, load_joint, partition, save_codebook, save_joint, PartitionStrategy,
};
use noncoh_mac::metrics;
use noncoh_mac::optimizer::{
    alternating_optimize, optimize, optimize_point, Criterion, IterRecord, ObliquePoint,
    OptimizerConfig,
};
use noncoh_mac::simulator::{simulate_pilot_ser, simulate_ser, Scheme, SerResult, SimConfig};
use noncoh_mac::SystemConfig;

/// Exit status conventions: 0 success, 2 config error, 3 numerical failure.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    /// Single-line machine-parsable form, printed to stderr.
    pub fn to_json_line(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Numerical(m) => ("numerical", m),
        };
        serde_json::json!({"error": {"kind": kind, "message": message}}).to_string()
    }
}

impl From<noncoh_mac::Error> for CliError {
    fn from(e: noncoh_mac::Error) -> Self {
        use noncoh_mac::Error::*;
        match &e {
            LinAlg(_) | Step(_) | Invariant(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

// ---------------------------------------------------------------------------
// JSON run spec
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpecFile {
    pub command: Option<String>,
    #[serde(default)]
    pub sys: SysSection,
    #[serde(default)]
    pub opt: OptSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysSection {
    pub t: Option<usize>,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub n: Option<usize>,
    pub p1_db: Option<f64>,
    pub p2_db: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptSection {
    pub criterion: Option<String>,
    pub epsilon: Option<f64>,
    pub design_snr_db: Option<f64>,
    pub max_iters: Option<usize>,
    pub step_init: Option<f64>,
    pub armijo_c: Option<f64>,
    pub armijo_shrink: Option<f64>,
    pub grad_tol: Option<f64>,
    pub seed: Option<u64>,
    pub anneal: Option<bool>,
    pub rounds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub snr_db: Option<Vec<f64>>,
    pub blocks: Option<usize>,
    pub seed: Option<u64>,
    pub scheme: Option<String>,
    pub bits: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub m: Option<usize>,
    pub size: Option<usize>,
    pub power_db: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub size1: Option<usize>,
    pub size2: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub strategy: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace_output: Option<PathBuf>,
}

fn load_spec(path: &Path) -> Result<RunSpecFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "noncoh-mac",
    about = "Design and simulate joint constellations for the two-user non-coherent MIMO MAC",
    version
)]
pub struct Cli {
    /// JSON run spec; command-line flags override its fields
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimize a single-user codebook (min-max chordal criterion)
    Generate(GenerateArgs),
    /// Optimize a two-user joint codebook
    Design(DesignArgs),
    /// Split a single-user codebook file into a joint codebook
    Partition(PartitionArgs),
    /// Closed-form metrics of a joint codebook over an SNR grid
    Evaluate(EvaluateArgs),
    /// Monte-Carlo symbol error rates over an SNR grid
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Default)]
pub struct GenerateArgs {
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of symbols
    #[arg(long)]
    pub size: Option<usize>,
    /// Symbol power in dB (stored as linear power in the output file)
    #[arg(long)]
    pub power_db: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct DesignArgs {
    /// mean-pllr | dmin | alt-d12 | alt-d21 | chordal | alternating
    #[arg(long)]
    pub criterion: Option<String>,
    /// Joint codebook JSON to start from (e.g. a partitioned base);
    /// otherwise a seeded random start
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub size1: Option<usize>,
    #[arg(long)]
    pub size2: Option<usize>,
    #[arg(long)]
    pub design_snr_db: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub anneal: Option<bool>,
    /// Alternating-optimization rounds (criterion = alternating)
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optimization progress CSV (iter, objective, grad norm, step)
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct PartitionArgs {
    /// Single-user codebook JSON to split
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// random | greedy-swap
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct EvaluateArgs {
    /// Joint codebook JSON
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Comma-separated SNR grid in dB
    #[arg(long, value_delimiter = ',')]
    pub snr_db: Option<Vec<f64>>,
    /// Receive antennas (enters the Cantelli column only)
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    /// joint-ml | pilot-ml | pilot-mmse
    #[arg(long)]
    pub scheme: Option<String>,
    /// Joint codebook JSON (joint-ml scheme)
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Block length (pilot schemes)
    #[arg(long)]
    pub t: Option<usize>,
    /// Data bits per user per block (pilot schemes)
    #[arg(long)]
    pub bits: Option<u32>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub snr_db: Option<Vec<f64>>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

pub fn run(cli: Cli) -> Result<(), CliError> {
    let spec = match &cli.config {
        Some(path) => load_spec(path)?,
        None => RunSpecFile::default(),
    };
    // the CLI subcommand wins over the config's command field
    match cli.command {
        Some(Command::Generate(a)) => cmd_generate(&spec, a),
        Some(Command::Design(a)) => cmd_design(&spec, a),
        Some(Command::Partition(a)) => cmd_partition(&spec, a),
        Some(Command::Evaluate(a)) => cmd_evaluate(&spec, a),
        Some(Command::Simulate(a)) => cmd_simulate(&spec, a),
        None => match spec.command.as_deref() {
            Some("generate") => cmd_generate(&spec, GenerateArgs::default()),
            Some("design") => cmd_design(&spec, DesignArgs::default()),
            Some("partition") => cmd_partition(&spec, PartitionArgs::default()),
            Some("evaluate") => cmd_evaluate(&spec, EvaluateArgs::default()),
            Some("simulate") => cmd_simulate(&spec, SimulateArgs::default()),
            Some(other) => Err(CliError::Config(format!("unknown command '{other}'"))),
            None => Err(CliError::Config(
                "no command given (subcommand or config 'command' field required)".into(),
            )),
        },
    }
}

fn require<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required parameter: {what}")))
}

fn optimizer_config(
    spec: &RunSpecFile,
    criterion: Criterion,
    epsilon: Option<f64>,
    iters: Option<usize>,
    anneal: Option<bool>,
    seed: Option<u64>,
    design_snr_db: Option<f64>,
) -> OptimizerConfig {
    let defaults = OptimizerConfig::default();
    OptimizerConfig {
        criterion,
        epsilon: epsilon.or(spec.opt.epsilon).unwrap_or(defaults.epsilon),
        design_snr: design_snr_db
            .or(spec.opt.design_snr_db)
            .map(db_to_linear)
            .unwrap_or(defaults.design_snr),
        max_iters: iters.or(spec.opt.max_iters).unwrap_or(defaults.max_iters),
        step_init: spec.opt.step_init.unwrap_or(defaults.step_init),
        armijo_c: spec.opt.armijo_c.unwrap_or(defaults.armijo_c),
        armijo_shrink: spec.opt.armijo_shrink.unwrap_or(defaults.armijo_shrink),
        grad_tol: spec.opt.grad_tol.unwrap_or(defaults.grad_tol),
        seed: seed.or(spec.opt.seed).unwrap_or(defaults.seed),
        anneal: anneal.or(spec.opt.anneal).unwrap_or(defaults.anneal),
    }
}

fn write_trace(path: &Path, trace: &[IterRecord]) -> Result<(), CliError> {
    let mut out = String::from("iter,objective,grad_norm,step\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{}\n", r.iter, r.objective, r.grad_norm, r.step));
    }
    std::fs::write(path, out).map_err(|e| CliError::Config(format!("cannot write trace: {e}")))
}

fn cmd_generate(spec: &RunSpecFile, a: GenerateArgs) -> Result<(), CliError> {
    let t = require(a.t.or(spec.sys.t), "--t")?;
    let m = a.m.or(spec.generate.m).unwrap_or(1);
    let size = require(a.size.or(spec.generate.size), "--size")?;
    let power_db = a.power_db.or(spec.generate.power_db).unwrap_or(30.0);
    let power = db_to_linear(power_db);
    let seed = a.seed.or(spec.opt.seed).unwrap_or(0);
    let out = require(a.out.or_else(|| spec.io.output.clone()), "--out")?;
    if m != 1 {
        // multi-antenna bases come from the seeded QR construction; the
        // oblique-manifold optimizer handles lines only
        let cb = constellation::random_grassmannian(t, m, size, power, seed)?;
        save_codebook(&cb, &out)?;
        return Ok(());
    }
    if size < 2 {
        return Err(CliError::Config("generate needs size >= 2".into()));
    }
    let cfg = optimizer_config(
        spec,
        Criterion::Chordal,
        a.epsilon,
        a.iters,
        None,
        Some(seed),
        Some(power_db),
    );
    let init = ObliquePoint::random(t, size, 0, seed)?;
    let (point, _) = optimize_point(&init, &cfg)?;
    let cb = point.to_codebook(power)?;
    save_codebook(&cb, &out)?;
    Ok(())
}

fn cmd_design(spec: &RunSpecFile, a: DesignArgs) -> Result<(), CliError> {
    let name = a
        .criterion
        .or_else(|| spec.opt.criterion.clone())
        .unwrap_or_else(|| "dmin".into());
    let seed = a.seed.or(spec.opt.seed).unwrap_or(0);
    let out = require(a.out.or_else(|| spec.io.output.clone()), "--out")?;
    let trace_out = a.trace_out.or_else(|| spec.io.trace_output.clone());
    let warm = a.init.clone().or_else(|| spec.io.input.clone());

    // the starting point: a partitioned/previous joint codebook, or a
    // seeded random draw of the requested sizes
    let start_point = |cfg: &OptimizerConfig| -> Result<ObliquePoint, CliError> {
        match &warm {
            Some(path) => Ok(ObliquePoint::from_joint(&load_joint(path)?)?),
            None => {
                let t = require(a.t.or(spec.sys.t), "--t")?;
                let size1 = require(a.size1.or(spec.design.size1), "--size1")?;
                let size2 = a.size2.or(spec.design.size2).unwrap_or(size1);
                let _ = cfg;
                Ok(ObliquePoint::random(t, size1, size2, seed)?)
            }
        }
    };

    let make_cfg = |criterion| {
        optimizer_config(spec, criterion, a.epsilon, a.iters, a.anneal, Some(seed), a.design_snr_db)
    };

    let (joint, trace) = match name.as_str() {
        "alternating" => {
            let cfg = make_cfg(Criterion::DMin);
            let rounds = a.rounds.or(spec.opt.rounds).unwrap_or(4);
            let init = start_point(&cfg)?.to_joint(cfg.design_snr)?;
            (alternating_optimize(&init, &cfg, rounds)?, Vec::new())
        }
        "chordal" => {
            // single-user chordal design of the union, then a seeded split:
            // identical to `generate` followed by `partition`
            let cfg = make_cfg(Criterion::Chordal);
            let t = require(a.t.or(spec.sys.t), "--t")?;
            let size1 = require(a.size1.or(spec.design.size1), "--size1")?;
            let size2 = a.size2.or(spec.design.size2).unwrap_or(size1);
            let init = ObliquePoint::random(t, size1 + size2, 0, seed)?;
            let (point, trace) = optimize_point(&init, &cfg)?;
            let base = point.to_codebook(cfg.design_snr)?;
            (partition(&base, PartitionStrategy::Random, seed)?, trace)
        }
        other => {
            let criterion = Criterion::parse(other).map_err(CliError::from)?;
            let cfg = make_cfg(criterion);
            let init = start_point(&cfg)?;
            optimize(&init, &cfg)?
        }
    };
    save_joint(&joint, &out)?;
    if let Some(path) = trace_out {
        write_trace(&path, &trace)?;
    }
    Ok(())
}

fn cmd_partition(spec: &RunSpecFile, a: PartitionArgs) -> Result<(), CliError> {
    let input = require(a.input.or_else(|| spec.io.input.clone()), "--in")?;
    let out = require(a.out.or_else(|| spec.io.output.clone()), "--out")?;
    let seed = a.seed.or(spec.opt.seed).unwrap_or(0);
    let strategy = match a
        .strategy
        .or_else(|| spec.partition.strategy.clone())
        .unwrap_or_else(|| "random".into())
        .as_str()
    {
        "random" => PartitionStrategy::Random,
        "greedy-swap" => PartitionStrategy::GreedySwap,
        other => return Err(CliError::Config(format!("unknown strategy '{other}'"))),
    };
    let base = load_codebook(&input)?;
    let joint = partition(&base, strategy, seed)?;
    save_joint(&joint, &out)?;
    Ok(())
}

fn cmd_evaluate(spec: &RunSpecFile, a: EvaluateArgs) -> Result<(), CliError> {
    let input = require(a.input.or_else(|| spec.io.input.clone()), "--in")?;
    let out = require(a.out.or_else(|| spec.io.output.clone()), "--out")?;
    let grid = require(a.snr_db.or_else(|| spec.sim.snr_db.clone()), "--snr-db")?;
    let n = a.n.or(spec.sys.n).unwrap_or(4);
    if grid.is_empty() {
        return Err(CliError::Config("snr grid is empty".into()));
    }
    let joint = load_joint(&input)?;
    let mut csv = String::from("snr_db,min_mean_pllr,d_min,d12,d21,chordal,cantelli_worst\n");
    for &snr_db in &grid {
        let scaled = joint.with_power(db_to_linear(snr_db))?;
        let report = metrics::metric_report(&scaled)?;
        let cantelli = metrics::cantelli_worst(&scaled, n)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            snr_db,
            report.min_mean_pllr,
            report.d_min,
            report.d12,
            report.d21,
            report.max_cross_corr,
            cantelli
        ));
    }
    std::fs::write(&out, csv).map_err(|e| CliError::Config(format!("cannot write csv: {e}")))?;
    Ok(())
}

pub fn ser_result_to_csv(result: &SerResult) -> String {
    let mut csv = String::from("snr_db,joint_ser,user1_ser,user2_ser,blocks,std_err\n");
    for p in &result.points {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.snr_db, p.joint_ser, p.user1_ser, p.user2_ser, p.blocks, p.std_err
        ));
    }
    csv
}

fn cmd_simulate(spec: &RunSpecFile, a: SimulateArgs) -> Result<(), CliError> {
    let scheme_name = a
        .scheme
        .or_else(|| spec.sim.scheme.clone())
        .unwrap_or_else(|| "joint-ml".into());
    let scheme = match scheme_name.as_str() {
        "joint-ml" => Scheme::JointMl,
        "pilot-ml" => Scheme::PilotMl,
        "pilot-mmse" => Scheme::PilotMmse,
        other => return Err(CliError::Config(format!("unknown scheme '{other}'"))),
    };
    let grid = require(a.snr_db.or_else(|| spec.sim.snr_db.clone()), "--snr-db")?;
    let blocks = a.blocks.or(spec.sim.blocks).unwrap_or(10_000);
    let seed = a.seed.or(spec.sim.seed).unwrap_or(0);
    let n = a.n.or(spec.sys.n).unwrap_or(4);
    let out = require(a.out.or_else(|| spec.io.output.clone()), "--out")?;
    let sim = SimConfig { snr_grid_db: grid, num_blocks: blocks, seed, scheme };

    let result = match scheme {
        Scheme::JointMl => {
            let input = require(a.input.or_else(|| spec.io.input.clone()), "--in")?;
            let joint = load_joint(&input)?;
            let sys = SystemConfig::new(
                joint.t(),
                joint.user1().m(),
                joint.user2().m(),
                n,
                joint.user1().power(),
                joint.user2().power(),
            )?;
            simulate_ser(&joint, &sys, &sim)?
        }
        Scheme::PilotMl | Scheme::PilotMmse => {
            let t = require(a.t.or(spec.sys.t), "--t")?;
            let bits = require(a.bits.or(spec.sim.bits), "--bits")?;
            let sys = SystemConfig::new(t, 1, 1, n, 1.0, 1.0)?;
            simulate_pilot_ser(&sys, bits, &sim)?
        }
    };
    std::fs::write(&out, ser_result_to_csv(&result))
        .map_err(|e| CliError::Config(format!("cannot write csv: {e}")))?;
    Ok(())
}
