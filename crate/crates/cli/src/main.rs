mod render;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use quantmcu::actstats::OutlierRule;
use quantmcu::bits::parse_candidates;
use quantmcu::netgraph::{split_patches, MemoryModel, NetworkSpec};
use quantmcu::pipeline::{sweep, write_atomic, Calibrated, PlanConfig, QuantPlan, SweepParam};
use quantmcu::refengine::format::{load_pack, save_pack, save_tensor};
use quantmcu::refengine::{CalibrationSet, WeightSet};
use quantmcu::synth::{scenes, uniform_inputs, SceneConfig};
use quantmcu::vdqs::{PhiBaseline, SearchConfig};
use quantmcu::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Value-driven mixed-precision planner for patch-based inference.
#[derive(Debug, Parser)]
#[command(name = "quantmcu", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print feature map shapes, MACs, branch regions and input redundancy.
    Inspect(InspectArgs),
    /// Classify patches, search bitwidths and write a JSON plan.
    Plan(PlanArgs),
    /// Re-evaluate a saved plan on a calibration set.
    Simulate(SimulateArgs),
    /// Plan once per value of phi or lambda and write a JSON table.
    Sweep(SweepArgs),
    /// Write synthetic calibration inputs for a network.
    GenCalib(GenCalibArgs),
    /// Write a synthetic weight pack for a network.
    GenWeights(GenWeightsArgs),
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Network description (JSON).
    #[arg(long, value_name = "FILE")]
    net: PathBuf,
    /// Reject patch grids that do not divide the split map evenly.
    #[arg(long)]
    strict_grid: bool,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Directory of .qmtn calibration inputs.
    #[arg(long, value_name = "DIR")]
    calib: PathBuf,
    /// Seed for synthetic weights.
    #[arg(long, conflicts_with = "weights", required_unless_present = "weights")]
    seed: Option<u64>,
    /// Weight pack (.qmtn records in layer order).
    #[arg(long, value_name = "FILE")]
    weights: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Int8,
    Fp32,
}

#[derive(Debug, Args)]
struct HyperArgs {
    /// Outlier threshold in [0, 1).
    #[arg(long, default_value_t = 0.96)]
    phi: f64,
    /// Weight of the entropy term in [0, 1].
    #[arg(long, default_value_t = 0.6)]
    lambda: f64,
    /// Histogram bins for entropy estimates.
    #[arg(long, default_value_t = 256)]
    k: usize,
    /// Memory limit in bytes for two adjacent feature maps (unlimited if absent).
    #[arg(long = "mem-limit", short = 'M', value_name = "BYTES")]
    mem_limit: Option<u64>,
    /// Candidate activation bitwidths.
    #[arg(long, default_value = "8,4,2")]
    candidates: String,
    /// Apply phi to the raw density (outlier iff pdf(x) > phi).
    #[arg(long)]
    eq1_literal: bool,
    /// Precision that BitOPs savings are normalized against.
    #[arg(long, value_enum, default_value = "int8")]
    phi_baseline: Baseline,
    /// Also evaluate per-input patch classes.
    #[arg(long)]
    dynamic: bool,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Also write the table as JSON.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Report path.
    #[arg(long, short, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Plan produced by `plan`.
    #[arg(long, value_name = "FILE")]
    plan: PathBuf,
    /// Report path.
    #[arg(long, short, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Param {
    Phi,
    Lambda,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Hyperparameter to vary.
    #[arg(long, value_enum)]
    param: Param,
    /// Strictly increasing comma separated values.
    #[arg(long, value_name = "LIST")]
    grid: String,
    /// Report path.
    #[arg(long, short, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scene {
    /// Dark posterized scenes with a frequent corner light.
    Scenes,
    /// The same scenes without the corner light.
    NoLight,
    /// Uniform noise in [-1, 1).
    Uniform,
}

#[derive(Debug, Args)]
struct GenCalibArgs {
    /// Network description (JSON); sets the input shape.
    #[arg(long, value_name = "FILE")]
    net: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Number of inputs.
    #[arg(long, default_value_t = 32)]
    count: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Kind of input.
    #[arg(long, value_enum, default_value = "scenes")]
    scene: Scene,
}

#[derive(Debug, Args)]
struct GenWeightsArgs {
    /// Network description (JSON).
    #[arg(long, value_name = "FILE")]
    net: PathBuf,
    /// Weight seed.
    #[arg(long)]
    seed: u64,
    /// Pack path.
    #[arg(long, short, value_name = "FILE")]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INPUT);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Infeasible { .. })));
            ExitCode::from(if infeasible { EXIT_INFEASIBLE } else { EXIT_INPUT })
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("QUANTMCU_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("QUANTMCU_THREADS must be a non-negative integer, got '{raw}'"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Inspect(a) => inspect(a),
        Command::Plan(a) => plan(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::GenCalib(a) => gen_calib(a),
        Command::GenWeights(a) => gen_weights(a),
    }
}

/// Terminal output goes through one locked writer.
fn emit(text: &str, warnings: &[String]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    let mut err = std::io::stderr().lock();
    for w in warnings {
        writeln!(err, "warning: {w}")?;
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<NetworkSpec> {
    NetworkSpec::load(path).with_context(|| format!("reading network {}", path.display()))
}

fn load_context(m: &ModelArgs) -> Result<Calibrated> {
    let net = load_net(&m.net.net)?;
    let weights = match (&m.weights, m.seed) {
        (Some(path), _) => {
            let pack = load_pack(path).with_context(|| format!("reading weights {}", path.display()))?;
            WeightSet::from_pack(&net, pack).with_context(|| format!("weights {}", path.display()))?
        }
        (None, Some(seed)) => WeightSet::synthetic(&net, seed)?,
        (None, None) => bail!("either --seed or --weights is required"),
    };
    let cal = CalibrationSet::load_dir(&m.calib)
        .with_context(|| format!("reading calibration inputs from {}", m.calib.display()))?;
    Ok(Calibrated::new(net, weights, cal, m.net.strict_grid, m.seed)?)
}

fn plan_config(h: &HyperArgs) -> Result<PlanConfig> {
    let cfg = PlanConfig {
        phi: h.phi,
        rule: if h.eq1_literal {
            OutlierRule::Eq1Literal
        } else {
            OutlierRule::NormalizedDensity
        },
        search: SearchConfig {
            lambda: h.lambda,
            candidates: parse_candidates(&h.candidates)?,
            bins: h.k,
            memory: MemoryModel { mem_limit: h.mem_limit },
            phi_baseline: match h.phi_baseline {
                Baseline::Int8 => PhiBaseline::Int8,
                Baseline::Fp32 => PhiBaseline::Fp32,
            },
            ..SearchConfig::default()
        },
        dynamic: h.dynamic,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn inspect(a: InspectArgs) -> Result<()> {
    let net = load_net(&a.net.net)?;
    let split = split_patches(&net, a.net.strict_grid)?;
    let table = render::inspect_table(&net, &split)?;
    if let Some(path) = &a.output {
        let json = render::inspect_json(&net, &split)?;
        write_atomic(path, json.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(&table, &[])
}

fn plan(a: PlanArgs) -> Result<()> {
    let cfg = plan_config(&a.hyper)?;
    let ctx = load_context(&a.model)?;
    let plan = ctx.plan(&cfg)?;
    plan.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    let mut text = render::plan_summary(&plan);
    text.push_str(&format!("report written to {}\n", a.output.display()));
    emit(&text, &plan.warnings)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let plan = QuantPlan::load(&a.plan).with_context(|| format!("reading plan {}", a.plan.display()))?;
    let ctx = load_context(&a.model)?;
    let report = ctx.simulate(&plan)?;
    write_atomic(&a.output, report.to_json()?.as_bytes()).with_context(|| format!("writing {}", a.output.display()))?;
    let mut text = render::simulation_summary(&report);
    text.push_str(&format!("report written to {}\n", a.output.display()));
    emit(&text, &report.warnings)
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let base = plan_config(&a.hyper)?;
    let grid = a
        .grid
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value '{v}'")))
        .collect::<Result<Vec<_>>>()?;
    let param = match a.param {
        Param::Phi => SweepParam::Phi,
        Param::Lambda => SweepParam::Lambda,
    };
    let ctx = load_context(&a.model)?;
    let result = sweep(&ctx, param, &grid, &base)?;
    write_atomic(&a.output, result.to_json()?.as_bytes()).with_context(|| format!("writing {}", a.output.display()))?;
    let mut text = render::sweep_table(&result);
    text.push_str(&format!("report written to {}\n", a.output.display()));
    emit(&text, &[])
}

fn gen_calib(a: GenCalibArgs) -> Result<()> {
    let net = load_net(&a.net)?;
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    let samples = match a.scene {
        Scene::Scenes => scenes(net.input_shape, a.count, a.seed, SceneConfig::default()).samples,
        Scene::NoLight => {
            let cfg = SceneConfig {
                corner_light: 0.0,
                ..SceneConfig::default()
            };
            scenes(net.input_shape, a.count, a.seed, cfg).samples
        }
        Scene::Uniform => uniform_inputs(net.input_shape, a.count, a.seed),
    };
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let width = a.count.to_string().len().max(3);
    for (i, t) in samples.iter().enumerate() {
        save_tensor(&a.out_dir.join(format!("sample_{i:0width$}.qmtn")), t)?;
    }
    emit(&format!("wrote {} inputs to {}\n", samples.len(), a.out_dir.display()), &[])
}

fn gen_weights(a: GenWeightsArgs) -> Result<()> {
    let net = load_net(&a.net)?;
    let w = WeightSet::synthetic(&net, a.seed)?;
    save_pack(&a.output, &w.to_pack()).with_context(|| format!("writing {}", a.output.display()))?;
    emit(&format!("wrote weights for {} to {}\n", net.name, a.output.display()), &[])
}
