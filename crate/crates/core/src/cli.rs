//! Command-line harness behind the `outerloop` binary.
//!
//! Three subcommands share one flag set. A JSON file passed with
//! `--config` supplies defaults under the same names; flags given on the
//! command line win. `run` writes one JSON line per loop iteration and a
//! closing summary line, `benchmark` a CSV table over the cross product of
//! tasks, methods, backends, acquisitions and seeds, and `sensitivity` one
//! JSON report per seed.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 method/backend
//! capability mismatch, 4 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::acquisition::AcquisitionOptimizerConfig;
use crate::bayesopt::{run_optimization, AcquisitionConfig, BayesOptCalculator, RandomSearch};
use crate::blr::{BlrModel, FeatureMap};
use crate::error::Error;
use crate::expdesign::{DesignAcquisition, ExperimentalDesignCalculator};
use crate::gp::GpModel;
use crate::model::{Model, ModelCapabilities};
use crate::multifidelity::forrester_comparison;
use crate::outer_loop::{CandidatePointCalculator, LoopState, ScalarFunction};
use crate::quadrature::{estimate_seir_peak, BqConfig, IntegrableModel, IntegrationBox, QuadratureGp, UncertaintySampling};
use crate::rng::derive_seed;
use crate::sensitivity::function_sobol;
use crate::space::ParameterSpace;
use crate::tasks::{objective, Objective, SeirConfig};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPABILITY: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "outerloop", version, about = "Outer-loop decision making on benchmark tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one method on one task, once per seed; writes JSON lines.
    Run(Flags),
    /// Cross product of tasks, methods, backends and acquisitions; writes CSV.
    Benchmark(Flags),
    /// Sobol indices of a task; writes one JSON report per seed.
    Sensitivity(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    #[arg(long)]
    task: Vec<String>,
    #[arg(long, value_enum)]
    method: Vec<Method>,
    #[arg(long, value_enum)]
    backend: Vec<Backend>,
    #[arg(long, value_enum)]
    acquisition: Vec<AcquisitionName>,
    #[arg(long)]
    iters: Option<usize>,
    /// Repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    /// JSON file with defaults for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path, or `-` for standard output.
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "n-base")]
    n_base: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Method {
    Bo,
    Ed,
    Bq,
    Sensitivity,
    MfDemo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Gp,
    Blr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionName {
    Ei,
    Lcb,
    Pi,
    Random,
    Variance,
    Ivr,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Bo => "bo",
            Method::Ed => "ed",
            Method::Bq => "bq",
            Method::Sensitivity => "sensitivity",
            Method::MfDemo => "mf-demo",
        }
    }

    fn default_acquisition(self) -> Option<AcquisitionName> {
        match self {
            Method::Bo => Some(AcquisitionName::Ei),
            Method::Ed => Some(AcquisitionName::Variance),
            _ => None,
        }
    }
}

impl Backend {
    fn name(self) -> &'static str {
        match self {
            Backend::Gp => "gp",
            Backend::Blr => "blr",
        }
    }
}

impl AcquisitionName {
    fn name(self) -> &'static str {
        match self {
            AcquisitionName::Ei => "ei",
            AcquisitionName::Lcb => "lcb",
            AcquisitionName::Pi => "pi",
            AcquisitionName::Random => "random",
            AcquisitionName::Variance => "variance",
            AcquisitionName::Ivr => "ivr",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    task: Option<OneOrMany<String>>,
    method: Option<OneOrMany<Method>>,
    backend: Option<OneOrMany<Backend>>,
    acquisition: Option<OneOrMany<AcquisitionName>>,
    iters: Option<usize>,
    seed: Option<OneOrMany<u64>>,
    out: Option<String>,
    #[serde(rename = "n-base", alias = "n_base")]
    n_base: Option<usize>,
    initial_points: Option<usize>,
    optimizer: Option<AcquisitionOptimizerConfig>,
    seir: Option<SeirConfig>,
}

/// Fully resolved settings; its JSON form names default output files.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    task: Vec<String>,
    method: Vec<Method>,
    backend: Vec<Backend>,
    acquisition: Vec<AcquisitionName>,
    iters: usize,
    seed: Vec<u64>,
    n_base: usize,
    initial_points: usize,
    optimizer: AcquisitionOptimizerConfig,
    seir: SeirConfig,
    #[serde(skip)]
    out: Option<String>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidSpace(_) | Error::UnsupportedDesign(_) | Error::Json(_) => EXIT_CONFIG,
            Error::CapabilityMismatch(_) => EXIT_CAPABILITY,
            _ => EXIT_RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn pick<T>(flag: Vec<T>, file: Option<OneOrMany<T>>) -> Vec<T> {
    if flag.is_empty() { file.map(OneOrMany::into_vec).unwrap_or_default() } else { flag }
}

fn resolve(flags: Flags) -> CliResult<Settings> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let mut s = Settings {
        task: pick(flags.task, file.task),
        method: pick(flags.method, file.method),
        backend: pick(flags.backend, file.backend),
        acquisition: pick(flags.acquisition, file.acquisition),
        iters: flags.iters.or(file.iters).unwrap_or(20),
        seed: pick(flags.seed, file.seed),
        n_base: flags.n_base.or(file.n_base).unwrap_or(1024),
        initial_points: file.initial_points.unwrap_or(5),
        optimizer: file.optimizer.unwrap_or_default(),
        seir: file.seir.unwrap_or_default(),
        out: flags.out.or(file.out),
    };
    if s.task.is_empty() {
        return Err(CliError::config("no task given (use --task)"));
    }
    if s.method.is_empty() {
        s.method.push(Method::Bo);
    }
    if s.backend.is_empty() {
        s.backend.push(Backend::Gp);
    }
    if s.seed.is_empty() {
        s.seed.push(0);
    }
    if s.initial_points < 2 {
        return Err(CliError::config("initial_points must be at least 2"));
    }
    if s.n_base < 2 {
        return Err(CliError::config("--n-base must be at least 2"));
    }
    s.optimizer.validate()?;
    s.seir.validate()?;
    for t in &s.task {
        lookup_task(t)?;
    }
    Ok(s)
}

enum Task {
    Objective(Objective),
    SeirPeak,
}

fn lookup_task(id: &str) -> CliResult<Task> {
    if id == "seir-peak" {
        return Ok(Task::SeirPeak);
    }
    objective(id).map(Task::Objective).ok_or_else(|| {
        let mut known: Vec<&str> = crate::tasks::standard_objectives().iter().map(|o| o.id).collect();
        known.push("seir-peak");
        CliError::config(format!("unknown task `{id}`; known tasks: {}", known.join(", ")))
    })
}

fn config_hash(command: &str, s: &Settings) -> String {
    let payload = serde_json::to_string(s).expect("settings serialize");
    let digest = Sha256::digest(format!("{command}\n{payload}").as_bytes());
    digest.iter().take(8).fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

fn emit(command: &str, ext: &str, s: &Settings, payload: &str, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let io = |e: std::io::Error| CliError { code: EXIT_RUNTIME, message: format!("cannot write output: {e}") };
    match s.out.as_deref() {
        Some("-") => stdout.write_all(payload.as_bytes()).map_err(io),
        other => {
            let path = other.map(str::to_owned).unwrap_or_else(|| format!("outerloop-{command}-{}.{ext}", config_hash(command, s)));
            std::fs::write(&path, payload).map_err(io)?;
            let _ = writeln!(stderr, "wrote {path}");
            Ok(())
        }
    }
}

/// Parses `args` (program name first) and executes the command; returns
/// the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(rendered.as_bytes()) } else { stderr.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(flags) => resolve(flags).and_then(|s| {
            let payload = cmd_run(&s)?;
            emit("run", "jsonl", &s, &payload, stdout, stderr)
        }),
        Command::Benchmark(flags) => resolve(flags).and_then(|s| {
            let payload = cmd_benchmark(&s)?;
            emit("benchmark", "csv", &s, &payload, stdout, stderr)
        }),
        Command::Sensitivity(flags) => resolve(flags).and_then(|s| {
            let payload = cmd_sensitivity(&s)?;
            emit("sensitivity", "json", &s, &payload, stdout, stderr)
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

#[derive(Serialize)]
struct Record<'a> {
    seed: u64,
    iter: usize,
    x: &'a [f64],
    y: &'a [f64],
    best: Option<f64>,
    acq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantity: Option<&'static str>,
}

fn push_line(out: &mut String, value: &impl Serialize) {
    out.push_str(&serde_json::to_string(value).expect("record serializes"));
    out.push('\n');
}

/// One line per row appended by the loop (initial design rows are skipped).
/// `best` tracks the running minimum of `best_column`, when given.
fn loop_records(out: &mut String, seed: u64, state: &LoopState, best_column: Option<usize>, quantity: Option<&'static str>) {
    let mut best = f64::INFINITY;
    for i in 0..state.len() {
        if let Some(c) = best_column {
            best = best.min(state.output_row(i)[c]);
        }
        let iter = state.row_iteration(i);
        if iter == 0 {
            continue;
        }
        push_line(
            out,
            &Record {
                seed,
                iter,
                x: state.input_row(i),
                y: state.output_row(i),
                best: best_column.map(|_| best),
                acq: state.acquisition_history().get(iter - 1).copied().flatten(),
                quantity,
            },
        );
    }
}

fn one<T: Copy>(values: &[T], what: &str) -> CliResult<T> {
    match values {
        [v] => Ok(*v),
        _ => Err(CliError::config(format!("`run` takes exactly one {what}; use `benchmark` for several"))),
    }
}

fn make_gp(bounds: &[(f64, f64)]) -> GpModel {
    GpModel::for_bounds(bounds)
}

/// Random Fourier features sized to the box.
fn make_blr(bounds: &[(f64, f64)], seed: u64) -> CliResult<BlrModel> {
    let ls: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.15 * (hi - lo)).collect();
    Ok(BlrModel::new(FeatureMap::random_cosine(200, &ls, derive_seed(seed, 0xb1)), 1.0, 1e4)?)
}

/// Loop outcome for one (task, method, backend, acquisition, seed).
struct LoopOutcome {
    state: LoopState,
    extra: serde_json::Value,
}

fn test_rmse(model: &dyn Model, obj: &Objective, seed: u64) -> CliResult<f64> {
    let x = obj.space().sample_uniform(500, derive_seed(seed, 0x7e57));
    let p = model.predict(&x)?;
    let sq: f64 = (0..x.nrows())
        .map(|i| (p.mean[i] - obj.eval(&x.row(i).iter().copied().collect::<Vec<_>>())).powi(2))
        .sum();
    Ok((sq / x.nrows() as f64).sqrt())
}

fn drive<M, C>(model: M, calc: C, obj: &Objective, s: &Settings, seed: u64, method: Method) -> CliResult<LoopOutcome>
where
    M: Model,
    C: CandidatePointCalculator<M>,
{
    let mut f = ScalarFunction::new(obj.function);
    let (state, model) = run_optimization(obj.space(), model, calc, &mut f, s.initial_points, s.iters, seed)?;
    let extra = if method == Method::Ed { json!({ "rmse": test_rmse(&model, obj, seed)? }) } else { json!({}) };
    Ok(LoopOutcome { state, extra })
}

fn with_calculator<M: Model>(
    model: M,
    method: Method,
    acq: AcquisitionName,
    obj: &Objective,
    s: &Settings,
    seed: u64,
) -> CliResult<LoopOutcome> {
    use AcquisitionName::*;
    let bo = |cfg: AcquisitionConfig| BayesOptCalculator::new(cfg).with_optimizer(s.optimizer);
    let ed = |a: DesignAcquisition| ExperimentalDesignCalculator::new(a).map(|c| c.with_optimizer(s.optimizer));
    match (method, acq) {
        (Method::Bo, Ei) => drive(model, bo(AcquisitionConfig::ei()), obj, s, seed, method),
        (Method::Bo, Lcb) => drive(model, bo(AcquisitionConfig::lcb()), obj, s, seed, method),
        (Method::Bo, Pi) => drive(model, bo(AcquisitionConfig::pi()), obj, s, seed, method),
        (Method::Ed, Variance) => drive(model, ed(DesignAcquisition::ModelVariance)?, obj, s, seed, method),
        (Method::Ed, Ivr) => drive(model, ed(DesignAcquisition::ivr())?, obj, s, seed, method),
        (Method::Bo | Method::Ed, Random) => drive(model, RandomSearch, obj, s, seed, method),
        _ => Err(CliError::config(format!(
            "acquisition `{}` does not apply to method `{}`",
            acq.name(),
            method.name()
        ))),
    }
}

/// BO or ED loop on a catalog objective.
fn loop_on_objective(
    obj: &Objective,
    method: Method,
    backend: Backend,
    acq: AcquisitionName,
    s: &Settings,
    seed: u64,
) -> CliResult<LoopOutcome> {
    let bounds = obj.space().encoded_bounds();
    match backend {
        Backend::Gp => with_calculator(make_gp(&bounds), method, acq, obj, s, seed),
        Backend::Blr => with_calculator(make_blr(&bounds, seed)?, method, acq, obj, s, seed),
    }
}

fn resolve_acquisition(method: Method, given: &[AcquisitionName]) -> CliResult<Option<AcquisitionName>> {
    match (given, method.default_acquisition()) {
        ([], d) => Ok(d),
        ([a], Some(_)) => Ok(Some(*a)),
        ([a], None) => Err(CliError::config(format!(
            "method `{}` takes no --acquisition (got `{}`)",
            method.name(),
            a.name()
        ))),
        _ => Err(CliError::config("`run` takes exactly one acquisition; use `benchmark` for several")),
    }
}

fn require_integrability(backend: Backend, bounds: &[(f64, f64)]) -> CliResult<()> {
    if backend == Backend::Blr {
        let needed = ModelCapabilities { has_integrability: true, ..ModelCapabilities::NONE };
        make_blr(bounds, 0)?.capabilities().require(&needed)?;
    }
    Ok(())
}

fn cmd_run(s: &Settings) -> CliResult<String> {
    let task_id = one(&s.task.iter().map(String::as_str).collect::<Vec<_>>(), "task")?;
    let method = one(&s.method, "method")?;
    let backend = one(&s.backend, "backend")?;
    let acq = resolve_acquisition(method, &s.acquisition)?;
    let task = lookup_task(task_id)?;
    let mut out = String::new();
    let mut runs = Vec::new();
    for &seed in &s.seed {
        let run = match (&task, method) {
            (Task::Objective(obj), Method::Bo | Method::Ed) => {
                let o = loop_on_objective(obj, method, backend, acq.expect("loop methods have a default"), s, seed)?;
                loop_records(&mut out, seed, &o.state, Some(0), None);
                let mut summary = json!({
                    "seed": seed,
                    "evaluations": o.state.len(),
                    "best": o.state.best(0).map(|b| b.1),
                    "best_x": o.state.best(0).map(|b| o.state.input_row(b.0).to_vec()),
                });
                if let (Some(m), Some(e)) = (summary.as_object_mut(), o.extra.as_object()) {
                    m.extend(e.clone());
                }
                summary
            }
            (Task::Objective(obj), Method::Bq) => {
                let bounds = obj.space().encoded_bounds();
                require_integrability(backend, &bounds)?;
                let domain = IntegrationBox::new(&bounds)?;
                let model = QuadratureGp::new(make_gp(&bounds), domain)?;
                let calc = UncertaintySampling { optimizer: s.optimizer };
                let mut f = ScalarFunction::new(obj.function);
                let (state, model) = run_optimization(obj.space(), model, calc, &mut f, s.initial_points, s.iters, seed)?;
                loop_records(&mut out, seed, &state, None, None);
                let est = model.integrate()?;
                json!({ "seed": seed, "evaluations": state.len(), "integral": { "mean": est.mean, "std": est.std() } })
            }
            (Task::SeirPeak, Method::Bq) => {
                require_integrability(backend, &[s.seir.rate_bounds()])?;
                let bq = BqConfig { initial_nodes: s.initial_points, iterations: s.iters, fit_restarts: 3, optimizer: s.optimizer };
                let est = estimate_seir_peak(&s.seir, &bq, seed)?;
                loop_records(&mut out, seed, &est.height_state, None, Some("height"));
                loop_records(&mut out, seed, &est.time_state, None, Some("time"));
                json!({
                    "seed": seed,
                    "height": { "mean": est.height.mean, "std": est.height.std() },
                    "time": { "mean": est.time.mean, "std": est.time.std() },
                })
            }
            (Task::Objective(obj), Method::Sensitivity) => {
                let r = function_sobol(obj.function, &obj.space(), s.n_base, seed)?;
                json!({ "seed": seed, "n_base": s.n_base, "sobol": r })
            }
            (Task::Objective(obj), Method::MfDemo) => {
                if obj.id != "forrester" {
                    return Err(CliError::config("mf-demo runs on the `forrester` task only"));
                }
                if backend != Backend::Gp {
                    return Err(CliError { code: EXIT_CAPABILITY, message: "mf-demo needs the gp backend".into() });
                }
                let c = forrester_comparison(11, 4, seed)?;
                json!({ "seed": seed, "rho": c.rho, "rmse_ar1": c.rmse_ar1, "rmse_single": c.rmse_single })
            }
            (Task::SeirPeak, _) => return Err(CliError::config("the seir-peak task supports method `bq` only")),
        };
        runs.push(run);
    }
    push_line(
        &mut out,
        &json!({ "summary": {
            "task": task_id,
            "method": method.name(),
            "backend": backend.name(),
            "acquisition": acq.map(AcquisitionName::name),
            "iters": s.iters,
            "runs": runs,
        }}),
    );
    Ok(out)
}

/// One benchmark row.
#[derive(Debug, Clone)]
struct Row {
    task: String,
    method: Method,
    backend: Backend,
    acquisition: AcquisitionName,
    seed: u64,
    best: f64,
    wall_ms: u128,
}

fn cmd_benchmark(s: &Settings) -> CliResult<String> {
    let mut configs = Vec::new();
    for task in &s.task {
        let Task::Objective(obj) = lookup_task(task)? else {
            return Err(CliError::config("benchmark runs on catalog objectives only"));
        };
        for &method in &s.method {
            if !matches!(method, Method::Bo | Method::Ed) {
                return Err(CliError::config(format!("benchmark supports methods bo and ed, not `{}`", method.name())));
            }
            let acqs = if s.acquisition.is_empty() { vec![method.default_acquisition().unwrap()] } else { s.acquisition.clone() };
            for &backend in &s.backend {
                for &acq in &acqs {
                    configs.push((obj.clone(), method, backend, acq));
                }
            }
        }
    }
    if configs.len() < 2 || s.seed.len() < 2 {
        return Err(CliError::config(format!(
            "benchmark needs at least 2 configurations and 2 seeds (got {} and {})",
            configs.len(),
            s.seed.len()
        )));
    }
    // every job is validated up front so a bad pairing fails before any run
    for (_, method, _, acq) in &configs {
        if !matches!(
            (method, acq),
            (Method::Bo, AcquisitionName::Ei | AcquisitionName::Lcb | AcquisitionName::Pi | AcquisitionName::Random)
                | (Method::Ed, AcquisitionName::Variance | AcquisitionName::Ivr | AcquisitionName::Random)
        ) {
            return Err(CliError::config(format!("acquisition `{}` does not apply to method `{}`", acq.name(), method.name())));
        }
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len()).flat_map(|c| s.seed.iter().map(move |&seed| (c, seed))).collect();
    let rows: Vec<CliResult<Row>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let (obj, method, backend, acq) = &configs[c];
            let start = Instant::now();
            let o = loop_on_objective(obj, *method, *backend, *acq, s, seed)?;
            Ok(Row {
                task: obj.id.to_string(),
                method: *method,
                backend: *backend,
                acquisition: *acq,
                seed,
                best: o.state.best(0).map_or(f64::NAN, |b| b.1),
                wall_ms: start.elapsed().as_millis(),
            })
        })
        .collect();
    let mut out = String::from("task,method,backend,acquisition,seed,iters,best,wall_ms\n");
    for r in rows {
        let r = r?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.task,
            r.method.name(),
            r.backend.name(),
            r.acquisition.name(),
            r.seed,
            s.iters,
            r.best,
            r.wall_ms
        );
    }
    Ok(out)
}

fn cmd_sensitivity(s: &Settings) -> CliResult<String> {
    let task_id = one(&s.task.iter().map(String::as_str).collect::<Vec<_>>(), "task")?;
    let Task::Objective(obj) = lookup_task(task_id)? else {
        return Err(CliError::config("sensitivity needs a catalog objective"));
    };
    let space: ParameterSpace = obj.space();
    if !space.is_continuous() {
        return Err(CliError::config("sensitivity needs a continuous task"));
    }
    let mut out = String::new();
    for &seed in &s.seed {
        let r = function_sobol(obj.function, &space, s.n_base, seed)?;
        push_line(
            &mut out,
            &json!({
                "task": obj.id,
                "n_base": s.n_base,
                "seed": seed,
                "evaluations": r.sample_count,
                "first_order": r.first_order,
                "first_order_std": r.first_order_std,
                "total": r.total,
                "total_std": r.total_std,
                "total_variance": r.total_variance,
            }),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["outerloop"];
        full.extend_from_slice(args);
        let code = run_cli(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn run_emits_one_record_per_iteration() {
        let (code, out, err) = run(&["run", "--task", "quadratic", "--iters", "4", "--seed", "3", "--out", "-"]);
        assert_eq!(code, 0, "{err}");
        let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 5);
        for (k, rec) in lines[..4].iter().enumerate() {
            assert_eq!(rec["iter"], k + 1);
            assert_eq!(rec["seed"], 3);
            assert!(rec["acq"].is_f64() && rec["best"].is_f64());
        }
        assert_eq!(lines[4]["summary"]["runs"][0]["evaluations"], 9);
    }

    #[test]
    fn unknown_task_is_config_error() {
        assert_eq!(run(&["run", "--task", "nope", "--out", "-"]).0, EXIT_CONFIG);
        assert_eq!(run(&["sensitivity", "--task", "nope", "--out", "-"]).0, EXIT_CONFIG);
        assert_eq!(run(&["run", "--task", "branin", "--method", "warp"]).0, EXIT_CONFIG);
    }

    #[test]
    fn mismatched_acquisition_is_config_error() {
        let (code, _, err) = run(&["run", "--task", "quadratic", "--method", "ed", "--acquisition", "ei", "--out", "-"]);
        assert_eq!(code, EXIT_CONFIG, "{err}");
    }

    #[test]
    fn quadrature_on_blr_is_capability_error() {
        let (code, out, err) = run(&["run", "--task", "sin10", "--method", "bq", "--backend", "blr", "--out", "-"]);
        assert_eq!(code, EXIT_CAPABILITY, "{err}");
        assert!(out.is_empty());
        assert!(err.contains("integrability"));
    }

    #[test]
    fn errors_map_to_exit_codes() {
        let code = |e: Error| CliError::from(e).code;
        assert_eq!(code(Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(code(Error::CapabilityMismatch("integrability".into())), EXIT_CAPABILITY);
        assert_eq!(code(Error::DegenerateVariance), EXIT_RUNTIME);
        assert_eq!(code(Error::Evaluation { point: vec![0.5], reason: "nan".into() }), EXIT_RUNTIME);
    }

    #[test]
    fn benchmark_needs_a_matrix() {
        let (code, _, err) = run(&["benchmark", "--task", "quadratic", "--seed", "1", "--seed", "2", "--out", "-"]);
        assert_eq!(code, EXIT_CONFIG, "{err}");
    }

    #[test]
    fn config_file_supplies_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"task":"quadratic","iters":2,"seed":[1,2],"optimizer":{"raw_samples":200}}"#).unwrap();
        let (code, out, err) = run(&["run", "--config", path.to_str().unwrap(), "--out", "-"]);
        assert_eq!(code, 0, "{err}");
        assert_eq!(out.lines().count(), 5);
        std::fs::write(&path, r#"{"task":"quadratic","bogus":1}"#).unwrap();
        assert_eq!(run(&["run", "--config", path.to_str().unwrap(), "--out", "-"]).0, EXIT_CONFIG);
    }

    #[test]
    fn hash_depends_on_settings() {
        let flags = |iters: &str| {
            let cli = Cli::try_parse_from(["outerloop", "run", "--task", "branin", "--iters", iters]).unwrap();
            let Command::Run(f) = cli.command else { unreachable!() };
            resolve(f).unwrap()
        };
        assert_eq!(config_hash("run", &flags("3")), config_hash("run", &flags("3")));
        assert_ne!(config_hash("run", &flags("3")), config_hash("run", &flags("4")));
        assert_ne!(config_hash("run", &flags("3")), config_hash("benchmark", &flags("3")));
    }
}
