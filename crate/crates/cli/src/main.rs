use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use greencap::ccg::{run_basic_ccg, run_ccg_dro, CcgOptions, OutcomeStatus, SolveOutcome};
use greencap::climate::{
    clusters_from_climate, clusters_hash, load_clusters, read_climate_csv, save_clusters, synthetic_climate,
    write_climate_csv, ClimateError, ClusterOptions, ClusterSpec,
};
use greencap::codec::{derive_seed, emit_dataset, Artifact, DatasetManifest, DatasetOptions, Weighting};
use greencap::eval::{compare, comparison_csv, evaluate_sampled, evaluate_worstcase, EvaluationReport, MethodReports};
use greencap::family::{random_decision, truncate_periods};
use greencap::instance::{perturb, random_small, FirstStageDecision, Instance, PerturbRanges, SmallInstanceSpec};
use greencap::solverbridge::Solver;
use greencap::spbaseline::{solve_saa, SaaStatus, SampleSet, SamplerKind};
use greencap::warmstart::{FileDropProvider, HttpProvider, ScenarioProvider};
use greencap::wesp::{run_cg, CgOptions, Mode};

const EXIT_DRO_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_INPUT: u8 = 4;

/// Marks errors caused by bad input files or arguments.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input<E: std::fmt::Display>(what: impl std::fmt::Display) -> impl FnOnce(E) -> anyhow::Error {
    move |e| InputError(format!("{what}: {e}")).into()
}

#[derive(Parser, Debug)]
#[command(name = "greencap", version, about = "Distributionally robust green capacity planning")]
#[command(args_override_self = true)]
struct Cli {
    /// Solver backend.
    #[arg(long, env = "GREENCAP_SOLVER", default_value = "highs", global = true)]
    solver: String,
    /// JSON object of flag overrides, e.g. {"tol": 1e-6}.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a family of instances (and optionally their clusters).
    GenInstances(GenArgs),
    /// Cluster a climate record file into ambiguity sets.
    Cluster(ClusterArgs),
    /// Solve an instance.
    Solve(SolveArgs),
    /// Evaluate a fixed plan.
    Evaluate(EvaluateArgs),
    /// Solve single-cluster instances and write a training image dataset.
    EncodeDataset(EncodeArgs),
    /// Batch of generated instances solved by separate processes.
    Experiment(ExperimentArgs),
    /// Side-by-side table of evaluation reports.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Family {
    /// Perturbations of the built-in base case.
    Base,
    /// Random small instances.
    Small,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Family::Base)]
    family: Family,
    /// Base instance for the `base` family; built-in when omitted.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Keep only the first periods.
    #[arg(long)]
    periods: Option<usize>,
    /// Also cluster the synthetic climate into this many clusters per instance.
    #[arg(long)]
    clusters: Option<usize>,
    /// Write the built-in base case and synthetic climate only.
    #[arg(long)]
    reference_data: bool,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Climate CSV (year,quarter,region,hours); synthetic when omitted.
    #[arg(long)]
    climate: Option<PathBuf>,
    #[arg(long, short = 's', default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    draws_per_period: usize,
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    CcgDro,
    BasicCcg,
    SaaSp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SamplerArg {
    Uniform,
    TruncatedGaussian,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Uniform => SamplerKind::Uniform,
            SamplerArg::TruncatedGaussian => SamplerKind::TruncatedGaussian,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::CcgDro)]
    method: MethodArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Seconds.
    #[arg(long, default_value_t = 3000.0)]
    time_limit: f64,
    #[arg(long)]
    workers: Option<usize>,
    /// Directory with cluster_<id>/*.pbm warm-start images.
    #[arg(long)]
    warmstart_dir: Option<PathBuf>,
    /// Warm-start HTTP endpoint; needs --dataset for the feature model.
    #[arg(long)]
    warmstart_url: Option<String>,
    /// Dataset directory whose manifest holds the feature model.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Replace exact CG by the restricted master over warm-start columns
    /// until the gap is small.
    #[arg(long)]
    surrogate_only: bool,
    #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
    sampler: SamplerArg,
    /// Scenarios per cluster for saa-sp.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Worstcase,
    Sampled,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    decision: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Worstcase)]
    mode: EvalMode,
    #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
    sampler: SamplerArg,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Single-cluster instances to solve.
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    images_per_item: usize,
    #[arg(long, default_value_t = 50)]
    rows: usize,
    /// Sample rows uniformly over the support instead of by probability.
    #[arg(long)]
    uniform: bool,
    /// Use random plans instead of solving each instance.
    #[arg(long)]
    random_decisions: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    periods: usize,
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::CcgDro, MethodArg::BasicCcg])]
    methods: Vec<MethodArg>,
    /// Also run ccg-dro warm-started from this file-drop directory.
    #[arg(long)]
    warmstart_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// LABEL=PATH, PATH a report JSON or a JSON array of reports (null for
    /// failed instances). The first entry is the reference.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = match parse_with_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Parses the command line, then re-parses with `--config` entries appended
/// so they win over flags.
fn parse_with_config() -> Result<Cli> {
    let args: Vec<String> = std::env::args().collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            e.exit()
        }
        anyhow::anyhow!("{e}")
    })?;
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map: serde_json::Map<String, Value> = serde_json::from_str(&text).context("config must be a JSON object")?;
    let mut merged = args;
    for (k, v) in map {
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            Value::Bool(true) => merged.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => merged.extend([flag, s]),
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(|i| i.as_str().map_or(i.to_string(), str::to_string)).collect();
                merged.extend([flag, joined.join(",")]);
            }
            other => merged.extend([flag, other.to_string()]),
        }
    }
    Cli::try_parse_from(&merged).map_err(|e| anyhow::anyhow!("{e}"))
}

fn run(cli: Cli) -> Result<u8> {
    let solver = Solver::by_name(&cli.solver).map_err(input("solver"))?;
    match cli.command {
        Cmd::GenInstances(a) => gen_instances(a),
        Cmd::Cluster(a) => cluster(a),
        Cmd::Solve(a) => solve(&solver, a),
        Cmd::Evaluate(a) => evaluate(&solver, a),
        Cmd::EncodeDataset(a) => encode_dataset(&solver, a),
        Cmd::Experiment(a) => experiment(&cli.solver, a),
        Cmd::Compare(a) => compare_cmd(a),
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    let inst = Instance::load(path).map_err(input(path.display()))?;
    let v = inst.validate();
    if !v.is_empty() {
        let msg: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        return Err(InputError(format!("{}: {}", path.display(), msg.join("; "))).into());
    }
    Ok(inst)
}

fn load_cluster_file(path: &Path, inst: &Instance) -> Result<Vec<ClusterSpec>> {
    let cl = load_clusters(path).map_err(input(path.display()))?;
    if cl.is_empty() {
        return Err(InputError(format!("{}: no clusters", path.display())).into());
    }
    for c in &cl {
        c.check(inst).map_err(input(path.display()))?;
    }
    Ok(cl)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(input(path.display()))?;
    serde_json::from_str(&text).map_err(input(path.display()))
}

fn cluster_options(clusters: usize, seed: u64, draws: usize, restarts: usize) -> ClusterOptions {
    ClusterOptions {
        clusters,
        seed,
        draws_per_period: draws,
        restarts,
    }
}

fn gen_instances(a: GenArgs) -> Result<u8> {
    fs::create_dir_all(&a.out)?;
    if a.reference_data {
        Instance::base_case().save(a.out.join("base_case.json"))?;
        fs::write(a.out.join("synthetic_climate.csv"), write_climate_csv(&synthetic_climate(2024)))?;
        return Ok(0);
    }
    let base = match &a.base {
        Some(p) => load_instance(p)?,
        None => Instance::base_case(),
    };
    let climate = synthetic_climate(2024);
    let mut names = Vec::new();
    for n in 0..a.count {
        let seed = derive_seed(a.seed, n as u64, 1);
        let mut inst = match a.family {
            Family::Base => perturb(&base, seed, &PerturbRanges::default()),
            Family::Small => random_small(&SmallInstanceSpec::default(), seed),
        };
        if let Some(t) = a.periods {
            truncate_periods(&mut inst, t);
        }
        let name = format!("instance_{n:04}");
        inst.save(a.out.join(format!("{name}.json")))?;
        if let Some(s) = a.clusters {
            let cl = match a.family {
                Family::Base => clusters_from_climate(&inst, &climate, &cluster_options(s, seed, 20, 20))?,
                Family::Small => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    greencap::family::random_clusters(&inst, s, &mut rng)
                }
            };
            save_clusters(a.out.join(format!("{name}.clusters.json")), &cl)?;
        }
        names.push(json!({"name": name, "seed": seed}));
    }
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "family": a.family,
            "master_seed": a.seed,
            "count": a.count,
            "periods": a.periods,
            "clusters": a.clusters,
            "instances": names,
        }),
    )?;
    Ok(0)
}

fn cluster(a: ClusterArgs) -> Result<u8> {
    let inst = match &a.instance {
        Some(p) => load_instance(p)?,
        None => Instance::base_case(),
    };
    let records = match &a.climate {
        Some(p) => read_climate_csv(p).map_err(input(p.display()))?,
        None => synthetic_climate(2024),
    };
    let opts = cluster_options(a.clusters, a.seed, a.draws_per_period, a.restarts);
    let cl = match clusters_from_climate(&inst, &records, &opts) {
        Ok(c) => c,
        Err(e @ (ClimateError::DegenerateInput(_) | ClimateError::InsufficientSamples { .. } | ClimateError::MissingRegion { .. })) => {
            return Err(InputError(e.to_string()).into())
        }
        Err(e) => return Err(e.into()),
    };
    save_clusters(&a.out, &cl)?;
    Ok(0)
}

fn provider_for(a: &SolveArgs) -> Result<Option<Box<dyn ScenarioProvider>>> {
    if let Some(dir) = &a.warmstart_dir {
        return Ok(Some(Box::new(FileDropProvider::new(dir))));
    }
    if let Some(url) = &a.warmstart_url {
        let Some(ds) = &a.dataset else {
            return Err(InputError("--warmstart-url needs --dataset for the feature model".into()).into());
        };
        let manifest = DatasetManifest::load(ds).map_err(input(ds.display()))?;
        return Ok(Some(Box::new(HttpProvider::new(url.clone(), manifest.pca, Duration::from_secs(30)))));
    }
    Ok(None)
}

fn solve(solver: &Solver, a: SolveArgs) -> Result<u8> {
    let inst = load_instance(&a.instance)?;
    let clusters = load_cluster_file(&a.clusters, &inst)?;
    fs::create_dir_all(&a.out)?;
    let mut manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "solver": solver.backend_name(),
        "method": a.method,
        "instance": a.instance,
        "instance_hash": inst.content_hash(),
        "clusters": a.clusters,
        "clusters_hash": clusters_hash(&clusters),
        "tol": a.tol,
        "max_iterations": a.max_iterations,
        "time_limit": a.time_limit,
        "seed": a.seed,
        "warmstart_dir": a.warmstart_dir,
        "warmstart_url": a.warmstart_url,
        "surrogate_only": a.surrogate_only,
    });
    if a.method == MethodArg::SaaSp {
        let samples = SampleSet::draw(&clusters, a.sampler.into(), a.samples, a.seed);
        manifest["sampler"] = serde_json::to_value(&samples.descriptor)?;
        let out = solve_saa(solver, &inst, &clusters, &samples, Some(a.time_limit))?;
        write_json(&a.out.join("samples.json"), &samples)?;
        write_json(&a.out.join("outcome.json"), &out)?;
        if let Some(x) = &out.x {
            write_json(&a.out.join("decision.json"), x)?;
        }
        manifest["status"] = serde_json::to_value(out.status)?;
        write_json(&a.out.join("manifest.json"), &manifest)?;
        println!("status {:?} objective {:?}", out.status, out.objective);
        return Ok(match out.status {
            SaaStatus::Optimal => 0,
            SaaStatus::Infeasible => EXIT_DRO_INFEASIBLE,
            SaaStatus::TimeLimit => EXIT_LIMIT,
        });
    }
    let mut opts = CcgOptions {
        tol: a.tol,
        max_iterations: a.max_iterations,
        time_limit: Some(a.time_limit),
        surrogate_only: a.surrogate_only,
        ..CcgOptions::default()
    };
    if let Some(w) = a.workers {
        opts.workers = w;
    }
    let provider = provider_for(&a)?;
    let out: SolveOutcome = match a.method {
        MethodArg::CcgDro => run_ccg_dro(solver, &inst, &clusters, provider.as_deref(), &opts)?,
        MethodArg::BasicCcg => run_basic_ccg(solver, &inst, &clusters, &opts)?,
        MethodArg::SaaSp => unreachable!(),
    };
    write_json(&a.out.join("outcome.json"), &out)?;
    fs::write(a.out.join("trace.csv"), out.trace_csv())?;
    if let Some(x) = &out.x {
        write_json(&a.out.join("decision.json"), x)?;
    }
    manifest["status"] = serde_json::to_value(out.status)?;
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!(
        "status {:?} objective {:?} lower {:?} iterations {}",
        out.status, out.objective, out.lower_bound, out.iterations
    );
    Ok(match out.status {
        OutcomeStatus::Optimal => 0,
        OutcomeStatus::DroInfeasible => EXIT_DRO_INFEASIBLE,
        OutcomeStatus::IterationLimit | OutcomeStatus::TimeLimit => EXIT_LIMIT,
    })
}

fn evaluate(solver: &Solver, a: EvaluateArgs) -> Result<u8> {
    let inst = load_instance(&a.instance)?;
    let clusters = load_cluster_file(&a.clusters, &inst)?;
    let x: FirstStageDecision = read_json(&a.decision)?;
    let errs = x.check(&inst);
    if !errs.is_empty() {
        return Err(InputError(format!("{}: {}", a.decision.display(), errs.join("; "))).into());
    }
    let report = match a.mode {
        EvalMode::Worstcase => evaluate_worstcase(solver, &inst, &clusters, &x)?,
        EvalMode::Sampled => {
            let s = SampleSet::draw(&clusters, a.sampler.into(), a.samples, a.seed);
            evaluate_sampled(solver, &inst, &clusters, &x, &s)?
        }
    };
    write_json(&a.out, &report)?;
    println!(
        "feasible {} total {:?} service level {:?} green penetration {:?}",
        report.feasible, report.total, report.service_level, report.green_penetration
    );
    Ok(0)
}

fn encode_dataset(solver: &Solver, a: EncodeArgs) -> Result<u8> {
    let base = match &a.instance {
        Some(p) => load_instance(p)?,
        None => Instance::base_case(),
    };
    let clusters = load_cluster_file(&a.clusters, &base)?;
    let mut artifacts = Vec::new();
    let opts = CcgOptions {
        workers: 1,
        max_iterations: 50,
        ..CcgOptions::default()
    };
    for n in 0..a.count {
        let seed = derive_seed(a.seed, n as u64, 2);
        let inst = perturb(&base, seed, &PerturbRanges::default());
        let mut cl = clusters[n % clusters.len()].clone();
        cl.probability = 1.0;
        cl.members = cl.total;
        let single = vec![cl.clone()];
        if a.random_decisions {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_decision(&inst, 0.5, &mut rng);
            match run_cg(solver, &inst, &cl, &x, Mode::Optimality, &[], &CgOptions::default()) {
                Ok(r) => artifacts.push(Artifact {
                    instance: inst,
                    cluster: cl,
                    x,
                    distribution: r.distribution,
                }),
                Err(e) => log::warn!("item {n}: {e}"),
            }
            continue;
        }
        let out = run_ccg_dro(solver, &inst, &single, None, &opts)?;
        match (out.x, out.cluster_results.into_iter().next()) {
            (Some(x), Some(r)) if out.status == OutcomeStatus::Optimal => artifacts.push(Artifact {
                instance: inst,
                cluster: cl,
                x,
                distribution: r.distribution,
            }),
            _ => log::warn!("item {n}: status {:?}, skipped", out.status),
        }
    }
    if artifacts.is_empty() {
        bail!("no solvable items");
    }
    let m = emit_dataset(
        &a.out,
        &artifacts,
        &DatasetOptions {
            images_per_item: a.images_per_item,
            rows: a.rows,
            weighting: if a.uniform { Weighting::Uniform } else { Weighting::Probability },
            seed: a.seed,
        },
    )?;
    println!("{} images from {} items, hash {}", m.items, artifacts.len(), m.dataset_hash);
    Ok(0)
}

#[derive(Serialize)]
struct ExperimentRow {
    instance: usize,
    method: String,
    exit_code: i32,
    status: String,
    objective: Option<f64>,
    lower_bound: Option<f64>,
    iterations: usize,
    cut_scenarios: usize,
}

fn experiment(solver_name: &str, a: ExperimentArgs) -> Result<u8> {
    fs::create_dir_all(&a.out)?;
    let exe = std::env::current_exe()?;
    let climate = synthetic_climate(2024);
    let mut rows = Vec::new();
    let mut timings = String::from("instance,method,master_seconds,subproblem_seconds\n");
    let mut runs: Vec<(String, Vec<String>)> = a
        .methods
        .iter()
        .map(|m| {
            let name = format!("{m:?}").to_lowercase();
            let flag = serde_json::to_value(m).unwrap().as_str().unwrap_or_default().to_string();
            (name, vec!["--method".to_string(), flag])
        })
        .collect();
    if let Some(dir) = &a.warmstart_dir {
        runs.push((
            "ccgdro-warm".into(),
            vec!["--method".into(), "ccg-dro".into(), "--warmstart-dir".into(), dir.display().to_string()],
        ));
    }
    for n in 0..a.count {
        let seed = derive_seed(a.seed, n as u64, 3);
        let dir = a.out.join(format!("instance_{n:04}"));
        fs::create_dir_all(&dir)?;
        let mut inst = perturb(&Instance::base_case(), seed, &PerturbRanges::default());
        truncate_periods(&mut inst, a.periods);
        let cl = clusters_from_climate(&inst, &climate, &cluster_options(a.clusters, seed, 20, 20))?;
        inst.save(dir.join("instance.json"))?;
        save_clusters(dir.join("clusters.json"), &cl)?;
        for (name, extra) in &runs {
            let out = dir.join(name);
            let status = Command::new(&exe)
                .arg("--solver")
                .arg(solver_name)
                .arg("solve")
                .arg("--instance")
                .arg(dir.join("instance.json"))
                .arg("--clusters")
                .arg(dir.join("clusters.json"))
                .arg("--out")
                .arg(&out)
                .arg("--time-limit")
                .arg(a.time_limit.to_string())
                .arg("--workers")
                .arg("1")
                .args(extra)
                .status()?;
            let outcome: Option<Value> = fs::read_to_string(out.join("outcome.json"))
                .ok()
                .and_then(|t| serde_json::from_str(&t).ok());
            let get = |k: &str| outcome.as_ref().and_then(|o| o.get(k)).cloned().unwrap_or(Value::Null);
            rows.push(ExperimentRow {
                instance: n,
                method: name.clone(),
                exit_code: status.code().unwrap_or(-1),
                status: get("status").as_str().unwrap_or("error").to_string(),
                objective: get("objective").as_f64(),
                lower_bound: get("lower_bound").as_f64(),
                iterations: get("iterations").as_u64().unwrap_or(0) as usize,
                cut_scenarios: get("cut_scenarios").as_u64().unwrap_or(0) as usize,
            });
            timings.push_str(&format!(
                "{n},{name},{},{}\n",
                get("master_seconds").as_f64().unwrap_or(f64::NAN),
                get("subproblem_seconds").as_f64().unwrap_or(f64::NAN)
            ));
        }
    }
    let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    let mut csv = String::from("instance,method,exit_code,status,objective,lower_bound,iterations,cut_scenarios\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.instance,
            r.method,
            r.exit_code,
            r.status,
            f(r.objective),
            f(r.lower_bound),
            r.iterations,
            r.cut_scenarios
        ));
    }
    fs::write(a.out.join("aggregate.csv"), csv)?;
    fs::write(a.out.join("timings.csv"), timings)?;
    write_json(
        &a.out.join("manifest.json"),
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "solver": solver_name,
            "master_seed": a.seed,
            "count": a.count,
            "periods": a.periods,
            "clusters": a.clusters,
            "methods": runs.iter().map(|r| r.0.clone()).collect::<Vec<_>>(),
            "time_limit": a.time_limit,
        }),
    )?;
    println!("{} runs written to {}", rows.len(), a.out.display());
    Ok(0)
}

fn compare_cmd(a: CompareArgs) -> Result<u8> {
    let mut methods = Vec::new();
    for spec in &a.reports {
        let Some((label, path)) = spec.split_once('=') else {
            return Err(InputError(format!("expected LABEL=PATH, got {spec}")).into());
        };
        let v: Value = read_json(Path::new(path))?;
        let reports: Vec<Option<EvaluationReport>> = match v {
            Value::Array(_) => serde_json::from_value(v).map_err(input(path))?,
            other => vec![Some(serde_json::from_value(other).map_err(input(path))?)],
        };
        methods.push(MethodReports {
            label: label.to_string(),
            reports,
        });
    }
    let csv = comparison_csv(&compare(&methods));
    match &a.out {
        Some(p) => fs::write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}
