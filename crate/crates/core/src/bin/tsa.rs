use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tsa_core::features::{FeatureVector, N_FEATURES};
use tsa_core::harness::{self, PlotSource, SchemeSpec, SweepOptions};
use tsa_core::kbstore::{self, KnowledgeBase, ScenarioPlan};
use tsa_core::netmodel::{self, NetworkCase};
use tsa_core::simulator::{self, Scenario, SwingCurves};
use tsa_core::vbpmkl::{TrainedModel, VbConfig};
use tsa_core::{Error, Result};

#[derive(Parser)]
#[command(name = "tsa", version, about = "Transient stability assessment with multiple-kernel probit classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one disturbance and write the trajectory CSV.
    Simulate(SimulateArgs),
    /// Generate a labeled knowledge base over a scenario plan.
    GenKb(GenKbArgs),
    /// Train a classifier on a seeded split of a knowledge base.
    Train(TrainArgs),
    /// Score a model against a knowledge base.
    Eval(EvalArgs),
    /// Run a scheme grid and write the report tables.
    Sweep(SweepArgs),
    /// Classify feature vectors.
    Predict(PredictArgs),
    /// Write plot data for a model's lower bound or a trajectory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Case file, or `case3` for the bundled case.
    #[arg(long, default_value = "case3")]
    case: String,
    /// TOML scenario file; overrides the individual scenario flags.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    load_scale: f64,
    #[arg(long, default_value_t = 0)]
    dispatch_seed: u64,
    /// Faulted bus id; omit for an undisturbed run.
    #[arg(long)]
    fault_bus: Option<usize>,
    #[arg(long, default_value_t = simulator::DEFAULT_CLEARING_CYCLES)]
    clearing_cycles: usize,
    #[arg(long, default_value_t = simulator::DEFAULT_HORIZON_S)]
    horizon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenKbArgs {
    #[arg(long, default_value = "case3")]
    case: String,
    /// TOML plan file, or `desk` for the built-in 400-scenario plan.
    #[arg(long, default_value = "desk")]
    plan: String,
    /// Master seed (replaces the plan's).
    #[arg(long)]
    seed: u64,
    /// Maximum relative measurement error applied before feature extraction.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct TrainingFlags {
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 500)]
    n_importance: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

impl TrainingFlags {
    fn config(&self) -> VbConfig {
        VbConfig { max_iters: self.max_iters, n_importance: self.n_importance, tol: self.tol, ..VbConfig::default() }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    kb: PathBuf,
    /// Scheme string, e.g. `F1:g,F2:g,F3:g` or `union:g`.
    #[arg(long)]
    scheme: String,
    /// Training-set size; the rest is held out.
    #[arg(long)]
    split: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    /// Score only the held-out side of this split size (with --seed).
    #[arg(long, requires = "seed")]
    split: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    kb: PathBuf,
    /// Aligned noisy knowledge base, needed by noise schemes.
    #[arg(long)]
    noisy_kb: Option<PathBuf>,
    /// `table4`, `table5`, `table6`, `hebei`, or `;`-separated scheme strings.
    #[arg(long)]
    schemes: String,
    /// Number of repetition seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// First repetition seed; the others follow consecutively.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated training sizes (default: half and three quarters).
    #[arg(long, value_delimiter = ',')]
    splits: Vec<usize>,
    /// Table CSV; per-cell details go to `<stem>.cells.csv` next to it.
    #[arg(long)]
    out: PathBuf,
    /// Add wall time per cell to the cell report.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// A knowledge base, or one vector of 23 comma- or space-separated
    /// values per line.
    #[arg(long)]
    features: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["model", "traj"]))]
struct PlotArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    traj: Option<PathBuf>,
    /// CSV output; a `.svg` path writes the chart there and the CSV next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn load_case(spec: &str) -> Result<NetworkCase> {
    if spec == "case3" {
        Ok(NetworkCase::bundled_case3())
    } else {
        NetworkCase::load(spec)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::GenKb(a) => gen_kb(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Predict(a) => predict(a),
        Command::Plot(a) => plot(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    case.validate()?;
    let scenario = match &a.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            toml::from_str::<Scenario>(&text).map_err(|e| Error::Format { line: 0, message: e.to_string() })?
        }
        None => Scenario {
            load_scale: a.load_scale,
            dispatch_seed: a.dispatch_seed,
            fault_bus: a.fault_bus,
            fault_clearing_cycles: a.clearing_cycles,
            observation_horizon_s: a.horizon,
        },
    };
    scenario.validate(case.base_frequency)?;
    if let Some(b) = scenario.fault_bus {
        if case.bus_index(b).is_none() {
            return Err(Error::InvalidArgument(format!("fault bus {b} is not in the case")));
        }
    }
    let pre = netmodel::reduce_to_generators(&case, scenario.load_scale, None)?;
    let pm = kbstore::dispatch(&case, scenario.load_scale, scenario.dispatch_seed);
    let eq = netmodel::solve_equilibrium(&case, &pre, &pm)?;
    let traj = simulator::simulate(&case, &scenario, &eq)?;
    traj.save_csv(&a.out)?;
    let label = simulator::label(&traj)?;
    println!("label {} max_divergence_deg {:.3}", label.value, label.max_divergence_deg);
    Ok(())
}

fn gen_kb(a: GenKbArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let mut plan = if a.plan == "desk" { ScenarioPlan::desk(a.seed) } else { ScenarioPlan::load(&a.plan)? };
    plan.master_seed = a.seed;
    let kb = kbstore::generate_kb(&case, &plan, a.noise)?;
    kbstore::save_kb(&kb, &a.out)?;
    let (stable, unstable) = kb.class_counts();
    println!("{} samples ({stable} stable, {unstable} unstable), {} discarded", kb.len(), kb.discarded.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let kb = kbstore::load_kb(&a.kb)?;
    let scheme: SchemeSpec = a.scheme.parse()?;
    let split = kbstore::split(kb.len(), a.split, a.seed)?;
    let (model, result) =
        harness::run_on(&kb.subset(&split.train), &kb.subset(&split.test), &scheme, &a.training.config(), a.seed)?;
    model.save(&a.out)?;
    println!(
        "held-out accuracy {:.6} after {} iterations (converged: {}), beta {:?}",
        result.metrics.accuracy, result.iterations, result.converged, result.beta
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let kb = kbstore::load_kb(&a.kb)?;
    let samples = match (a.split, a.seed) {
        (Some(n), Some(seed)) => kb.subset(&kbstore::split(kb.len(), n, seed)?.test),
        _ => kb.samples.clone(),
    };
    let m = harness::evaluate(&model, &samples)?;
    let c = m.confusion;
    println!("accuracy {:.6} n {}", m.accuracy, c.total());
    println!(
        "confusion stable_as_stable {} stable_as_unstable {} unstable_as_stable {} unstable_as_unstable {}",
        c.stable_as_stable, c.stable_as_unstable, c.unstable_as_stable, c.unstable_as_unstable
    );
    Ok(())
}

fn cells_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.cells.csv"))
}

fn sweep(a: SweepArgs) -> Result<()> {
    let kb = kbstore::load_kb(&a.kb)?;
    let kb_hash = kbstore::file_hash(&a.kb)?;
    let (noisy, noisy_hash) = match &a.noisy_kb {
        Some(p) => (Some(kbstore::load_kb(p)?), Some(kbstore::file_hash(p)?)),
        None => (None, None),
    };
    let schemes = harness::scheme_set(&a.schemes)?;
    if noisy.is_none() && schemes.iter().any(|s| s.spec.noise.needs_noisy_kb()) {
        return Err(Error::InvalidArgument("noise schemes need --noisy-kb".into()));
    }
    if a.seeds == 0 {
        return Err(Error::InvalidArgument("--seeds must be positive".into()));
    }
    let train_sizes = if a.splits.is_empty() { vec![kb.len() / 2, kb.len() * 3 / 4] } else { a.splits.clone() };
    let options =
        SweepOptions { train_sizes, seeds: (a.seed..a.seed + a.seeds).collect(), config: a.training.config() };
    let report = harness::sweep(&kb, noisy.as_ref(), &schemes, &options, kb_hash, noisy_hash)?;
    let mut table = Vec::new();
    report.write_table(&mut table).expect("write to memory");
    std::fs::write(&a.out, &table).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    let cells = cells_path(&a.out);
    let mut buf = Vec::new();
    report.write_cells(&mut buf, a.timing).expect("write to memory");
    std::fs::write(&cells, buf).map_err(|e| Error::Io { path: cells.clone(), source: e })?;
    print!("{}", String::from_utf8_lossy(&table));
    let failed = report.cells.iter().filter(|c| c.outcome.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see {}", report.cells.len(), cells.display());
    }
    Ok(())
}

fn read_feature_rows(path: &Path) -> Result<Vec<(String, [f64; N_FEATURES])>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    if text.trim_start().starts_with('{') {
        let kb = KnowledgeBase::from_text(&text)?;
        return Ok(kb.samples.iter().map(|s: &FeatureVector| (s.scenario_id.clone(), s.to_array())).collect());
    }
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format { line: i + 1, message: e.to_string() })?;
        let arr: [f64; N_FEATURES] = vals.try_into().map_err(|v: Vec<f64>| Error::Format {
            line: i + 1,
            message: format!("expected {N_FEATURES} values, got {}", v.len()),
        })?;
        rows.push(((i + 1).to_string(), arr));
    }
    Ok(rows)
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let rows = read_feature_rows(&a.features)?;
    let header: Vec<String> = model.class_labels.iter().map(|l| format!("p_{l}")).collect();
    println!("id,label,{}", header.join(","));
    for (id, x) in rows {
        let p = model.predictive_distribution(&x)?;
        let probs: Vec<String> = p.probs.iter().map(|v| format!("{v:.6}")).collect();
        println!("{id},{},{}", p.label, probs.join(","));
    }
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let (csv, svg) = if a.out.extension().is_some_and(|e| e == "svg") {
        (a.out.with_extension("csv"), Some(a.out.clone()))
    } else {
        (a.out.clone(), a.svg.clone())
    };
    if let Some(m) = &a.model {
        let model = TrainedModel::load(m)?;
        harness::emit_plot_data(&PlotSource::LowerBound(&model.lb_trace), &csv, svg.as_deref())
    } else {
        let curves = SwingCurves::load(a.traj.as_ref().expect("clap enforces one source"))?;
        harness::emit_plot_data(&PlotSource::Swing(&curves), &csv, svg.as_deref())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
