//! Column-and-constraint generation for the two-stage problem.
//!
//! The master problem carries, per cluster, the dual form of the
//! worst-case expectation over the scenarios found so far:
//!
//! * optimality cuts: `η_s ≥ α + γ^U·β^U − γ^L·β^L` and, per scenario,
//!   `α + ξ·(β^U − β^L) ≥ C_Y·Y_ξ` with `Y_ξ ∈ 𝒴(X, ξ)`;
//! * feasibility cuts: `0 ≥ α^f + γ^U·β^{Uf} − γ^L·β^{Lf}` and, per
//!   scenario, `α^f + ξ·(β^{Uf} − β^{Lf}) ≥ 1ᵀỸ_ξ` over relaxed blocks.
//!
//! Each iteration solves the master, then for every cluster checks the
//! worst-case violation first and the worst-case cost only when the plan is
//! feasible for that cluster, adding the positive-probability support of
//! the worst-case distribution to the matching cut set.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::climate::ClusterSpec;
use crate::instance::{strategic_breakdown_unchecked, FirstStageDecision, Instance, StrategicCost};
use crate::recourse::{add_block, assemble_standard_form, StandardForm, XLayout, XSource, FEAS_TOL};
use crate::solverbridge::{Model, ObjSense, RowSense, SolveOptions, SolveResult, SolveStatus, Solver, SolverError, VarId, VarKind};
use crate::warmstart::ScenarioProvider;
use crate::wesp::{default_columns, push_unique, run_cg, CgOptions, CgReport, DiscreteDistribution, Mode, Scenario, WespError};

#[derive(Debug, Error)]
pub enum CcgError {
    #[error("cluster {cluster}: {source}")]
    Subproblem { cluster: usize, source: WespError },
    #[error("master problem status {0}")]
    Master(SolveStatus),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

// ---------------------------------------------------------------------------
// First-stage variables.

/// Variable handles of the first-stage block, `[i][j][t]`.
#[derive(Clone, Debug)]
pub struct FirstStageVars {
    pub lines: Vec<Vec<Vec<VarId>>>,
    pub expand: Vec<Vec<Vec<VarId>>>,
    pub terminate: Vec<Vec<Vec<VarId>>>,
    pub old: Vec<Vec<Vec<VarId>>>,
    pub green: Vec<Vec<Vec<VarId>>>,
    pub upgrade: Vec<Vec<Vec<VarId>>>,
    pub renewable: Vec<VarId>,
}

impl FirstStageVars {
    /// Handles ordered like [`XLayout`], for linking recourse blocks.
    pub fn linked(&self, layout: &XLayout) -> Vec<VarId> {
        let mut out = vec![self.renewable[0]; layout.len()];
        for i in 0..layout.factories {
            for j in 0..layout.capacities {
                for t in 0..layout.periods {
                    out[layout.old(i, j, t)] = self.old[i][j][t];
                    out[layout.green(i, j, t)] = self.green[i][j][t];
                }
            }
            out[layout.renewable(i)] = self.renewable[i];
        }
        out
    }

    pub fn extract(&self, r: &SolveResult) -> FirstStageDecision {
        let int = |v: VarId| r.value(v).round().max(0.0) as u32;
        let grid = |a: &Vec<Vec<Vec<VarId>>>| -> Vec<Vec<Vec<u32>>> {
            a.iter()
                .map(|row| row.iter().map(|ts| ts.iter().map(|&v| int(v)).collect()).collect())
                .collect()
        };
        FirstStageDecision {
            lines: grid(&self.lines),
            expand: grid(&self.expand),
            terminate: grid(&self.terminate),
            old: grid(&self.old),
            green: grid(&self.green),
            upgrade: grid(&self.upgrade),
            renewable: self.renewable.iter().map(|&v| r.value(v) > 0.5).collect(),
        }
    }
}

/// Adds the capacity-planning variables, their balance/limit/linking rows,
/// and the strategic cost to `model`.
pub fn add_first_stage(model: &mut Model, instance: &Instance) -> FirstStageVars {
    let (ni, nj, nt) = (instance.num_factories(), instance.num_capacities(), instance.periods);
    let m0 = instance.big_m_lines() as f64;
    let mut fv = FirstStageVars {
        lines: Vec::new(),
        expand: Vec::new(),
        terminate: Vec::new(),
        old: Vec::new(),
        green: Vec::new(),
        upgrade: Vec::new(),
        renewable: Vec::new(),
    };
    for i in 0..ni {
        fv.renewable
            .push(model.add_var(format!("br{i}"), VarKind::Binary, 0.0, 1.0, instance.renewable_cost[i]));
    }
    for i in 0..ni {
        let (mut li, mut ei, mut ti, mut oi, mut gi, mut ui) = (vec![], vec![], vec![], vec![], vec![], vec![]);
        for j in 0..nj {
            let l = instance.lines[i][j];
            let cap = (l.initial + nt as u32 * l.expand_limit) as f64;
            let mut lines = Vec::new();
            let mut expand = Vec::new();
            let mut term = Vec::new();
            let mut old = Vec::new();
            let mut green = Vec::new();
            let mut up = Vec::new();
            for t in 0..nt {
                let (lo, hi) = if t == 0 { (l.initial as f64, l.initial as f64) } else { (0.0, cap) };
                // adjustments in the final period have no successor period
                let last = if t + 1 == nt { 0.0 } else { 1.0 };
                lines.push(model.add_var(format!("x{i}_{j}_{t}"), VarKind::Integer, lo, hi, 0.0));
                expand.push(model.add_var(format!("xp{i}_{j}_{t}"), VarKind::Integer, 0.0, last * l.expand_limit as f64, l.expand_cost));
                term.push(model.add_var(format!("xm{i}_{j}_{t}"), VarKind::Integer, 0.0, last * l.terminate_limit as f64, l.terminate_cost));
                old.push(model.add_var(format!("xo{i}_{j}_{t}"), VarKind::Integer, 0.0, cap, 0.0));
                let (glo, ghi) = if t == 0 {
                    (l.initial_green as f64, l.initial_green as f64)
                } else {
                    (0.0, cap)
                };
                green.push(model.add_var(format!("xn{i}_{j}_{t}"), VarKind::Integer, glo, ghi, 0.0));
                up.push(model.add_var(format!("xu{i}_{j}_{t}"), VarKind::Integer, 0.0, last * m0, l.upgrade_cost));
            }
            for t in 0..nt {
                if t + 1 < nt {
                    model.add_row(
                        format!("bal{i}_{j}_{t}"),
                        [(lines[t + 1], 1.0), (lines[t], -1.0), (expand[t], -1.0), (term[t], 1.0)],
                        RowSense::Eq,
                        0.0,
                    );
                    model.add_row(
                        format!("gbal{i}_{j}_{t}"),
                        [(green[t + 1], 1.0), (green[t], -1.0), (up[t], -1.0)],
                        RowSense::Eq,
                        0.0,
                    );
                }
                model.add_row(
                    format!("split{i}_{j}_{t}"),
                    [(old[t], 1.0), (green[t], 1.0), (lines[t], -1.0)],
                    RowSense::Eq,
                    0.0,
                );
                model.add_row(
                    format!("upbr{i}_{j}_{t}"),
                    [(up[t], 1.0), (fv.renewable[i], -m0)],
                    RowSense::Le,
                    0.0,
                );
            }
            li.push(lines);
            ei.push(expand);
            ti.push(term);
            oi.push(old);
            gi.push(green);
            ui.push(up);
        }
        let mut link: Vec<(VarId, f64)> = vec![(fv.renewable[i], 1.0)];
        for ups in &ui {
            link.extend(ups.iter().map(|&v| (v, -1.0)));
        }
        model.add_row(format!("brlink{i}"), link, RowSense::Le, 0.0);
        fv.lines.push(li);
        fv.expand.push(ei);
        fv.terminate.push(ti);
        fv.old.push(oi);
        fv.green.push(gi);
        fv.upgrade.push(ui);
    }
    fv
}

// ---------------------------------------------------------------------------
// Master problem.

/// Scenario sets per cluster, indexed by position in the cluster list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CutSets {
    pub optimality: Vec<Vec<Scenario>>,
    pub feasibility: Vec<Vec<Scenario>>,
}

impl CutSets {
    pub fn empty(clusters: usize) -> Self {
        Self {
            optimality: vec![Vec::new(); clusters],
            feasibility: vec![Vec::new(); clusters],
        }
    }

    pub fn total(&self) -> usize {
        self.optimality.iter().chain(&self.feasibility).map(Vec::len).sum()
    }
}

/// Handles into a built master problem.
pub struct MasterVars {
    pub first_stage: FirstStageVars,
    pub eta: Vec<VarId>,
}

/// Builds the master MILP. `eta_lower` bounds each η_s from below (`None`
/// leaves it free).
pub fn build_master(
    instance: &Instance,
    clusters: &[ClusterSpec],
    forms: &[StandardForm],
    cuts: &CutSets,
    eta_lower: Option<f64>,
) -> (Model, MasterVars) {
    let mut m = Model::new(ObjSense::Minimize);
    let fs = add_first_stage(&mut m, instance);
    let xvars = fs.linked(&XLayout::of(instance));
    let mut eta = Vec::new();
    for (s, cl) in clusters.iter().enumerate() {
        let n = cl.num_cells();
        let e = m.add_continuous(format!("eta{s}"), eta_lower.unwrap_or(f64::NEG_INFINITY), f64::INFINITY, cl.probability);
        eta.push(e);
        for (kind, scenarios) in [(Mode::Optimality, &cuts.optimality[s]), (Mode::Feasibility, &cuts.feasibility[s])] {
            if scenarios.is_empty() {
                continue;
            }
            let tag = if kind == Mode::Optimality { "o" } else { "f" };
            let alpha = m.add_continuous(format!("{tag}a{s}"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
            let bu: Vec<_> = (0..n)
                .map(|c| m.add_continuous(format!("{tag}bu{s}_{c}"), 0.0, f64::INFINITY, 0.0))
                .collect();
            let bl: Vec<_> = (0..n)
                .map(|c| m.add_continuous(format!("{tag}bl{s}_{c}"), 0.0, f64::INFINITY, 0.0))
                .collect();
            // η_s (or 0) ≥ α + γ^U·β^U − γ^L·β^L
            let mut head: Vec<(VarId, f64)> = vec![(alpha, -1.0)];
            for c in 0..n {
                head.push((bu[c], -cl.gamma_upper[c]));
                head.push((bl[c], cl.gamma_lower[c]));
            }
            if kind == Mode::Optimality {
                head.push((e, 1.0));
            }
            m.add_row(format!("{tag}head{s}"), head, RowSense::Ge, 0.0);
            for (q, xi) in scenarios.iter().enumerate() {
                let relaxed = kind == Mode::Feasibility;
                let b = add_block(&mut m, &forms[s], XSource::Vars(&xvars), xi, relaxed, 0.0, &format!("{tag}{s}_{q}_"));
                let mut row: Vec<(VarId, f64)> = vec![(alpha, 1.0)];
                for c in 0..n {
                    row.push((bu[c], xi[c]));
                    row.push((bl[c], -xi[c]));
                }
                if relaxed {
                    row.extend(b.slack.iter().map(|&v| (v, -1.0)));
                } else {
                    row.extend(b.y.iter().zip(&forms[s].cost).map(|(&v, &c)| (v, -c)));
                }
                m.add_row(format!("{tag}cut{s}_{q}"), row, RowSense::Ge, 0.0);
            }
        }
    }
    (m, MasterVars { first_stage: fs, eta })
}

// ---------------------------------------------------------------------------
// Driver.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeStatus {
    Optimal,
    DroInfeasible,
    IterationLimit,
    TimeLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CcgDro,
    BasicCcg,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CcgOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Wall-clock seconds for the whole run.
    pub time_limit: Option<f64>,
    /// Lower bound on every η_s; `None` leaves η free.
    pub eta_lower: Option<f64>,
    /// Worker threads for per-cluster subproblems.
    pub workers: usize,
    pub cg: CgOptions,
    /// Use the restricted master over provider columns instead of exact CG
    /// until the gap is within 10·tol.
    pub surrogate_only: bool,
}

impl Default for CcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iterations: 200,
            time_limit: None,
            eta_lower: Some(0.0),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()).min(8),
            cg: CgOptions {
                epsilon: 1e-9,
                ..CgOptions::default()
            },
            surrogate_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub iteration: usize,
    /// `None` while unbounded below.
    pub lower: Option<f64>,
    /// `None` while no feasible plan has been evaluated.
    pub upper: Option<f64>,
    pub master_seconds: f64,
    pub subproblem_seconds: f64,
    pub cut_scenarios: usize,
    pub cg_iterations: usize,
}

/// Result of one cluster's subproblem phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub cluster: usize,
    pub violation: f64,
    /// Worst-case expected recourse cost; `None` when the plan is infeasible
    /// for the cluster.
    pub value: Option<f64>,
    pub distribution: DiscreteDistribution,
    pub cg_iterations: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub method: Method,
    pub status: OutcomeStatus,
    /// Best plan found (the incumbent behind `upper`).
    pub x: Option<FirstStageDecision>,
    pub objective: Option<f64>,
    pub lower_bound: Option<f64>,
    pub strategic: Option<StrategicCost>,
    pub trace: Vec<BoundRecord>,
    pub iterations: usize,
    pub cut_scenarios: usize,
    pub master_seconds: f64,
    pub subproblem_seconds: f64,
    /// Subproblem results for the incumbent plan.
    pub cluster_results: Vec<ClusterResult>,
    pub cuts: CutSets,
}

impl SolveOutcome {
    pub fn trace_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        let mut s = String::from("iteration,lower,upper,master_seconds,subproblem_seconds,cut_scenarios,cg_iterations\n");
        for r in &self.trace {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iteration,
                f(r.lower),
                f(r.upper),
                r.master_seconds,
                r.subproblem_seconds,
                r.cut_scenarios,
                r.cg_iterations
            ));
        }
        s
    }
}

fn check_inputs(instance: &Instance, clusters: &[ClusterSpec]) -> Result<(), CcgError> {
    let v = instance.validate();
    if !v.is_empty() {
        return Err(CcgError::Input(v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")));
    }
    if clusters.is_empty() {
        return Err(CcgError::Input("no clusters".into()));
    }
    for c in clusters {
        c.check(instance).map_err(CcgError::Input)?;
    }
    let q: f64 = clusters.iter().map(|c| c.probability).sum();
    if (q - 1.0).abs() > 1e-9 {
        return Err(CcgError::Input(format!("cluster probabilities sum to {q}")));
    }
    Ok(())
}

/// Solves the per-cluster subproblems for a plan: violation first, cost only
/// when feasible.
pub fn evaluate_clusters(
    solver: &Solver,
    instance: &Instance,
    clusters: &[ClusterSpec],
    x: &FirstStageDecision,
    seeds: &CutSets,
    provider: Option<&dyn ScenarioProvider>,
    surrogate: bool,
    opts: &CcgOptions,
) -> Result<Vec<ClusterResult>, CcgError> {
    let work = |s: usize| -> Result<ClusterResult, CcgError> {
        let cl = &clusters[s];
        let start = Instant::now();
        let wrap = |e| CcgError::Subproblem { cluster: cl.id, source: e };
        let mut extra: Vec<Scenario> = provider.map(|p| p.columns(instance, cl, x)).unwrap_or_default();
        extra.retain(|xi| xi.len() == cl.num_cells());
        let mut cols = default_columns(cl);
        for xi in seeds.feasibility[s].iter().chain(&extra) {
            push_unique(&mut cols, xi.clone());
        }
        let feas = run_cg(solver, instance, cl, x, Mode::Feasibility, &cols, &opts.cg).map_err(wrap)?;
        if feas.value > FEAS_TOL {
            return Ok(ClusterResult {
                cluster: s,
                violation: feas.value,
                value: None,
                distribution: feas.distribution,
                cg_iterations: feas.iterations,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let mut cols = default_columns(cl);
        for xi in seeds.optimality[s].iter().chain(&extra) {
            push_unique(&mut cols, xi.clone());
        }
        let opt: CgReport = if surrogate {
            crate::warmstart::restricted_report(solver, instance, cl, x, &cols).map_err(wrap)?
        } else {
            run_cg(solver, instance, cl, x, Mode::Optimality, &cols, &opts.cg).map_err(wrap)?
        };
        Ok(ClusterResult {
            cluster: s,
            violation: 0.0,
            value: Some(opt.value),
            distribution: opt.distribution,
            cg_iterations: feas.iterations + opt.iterations,
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    let n = clusters.len();
    let workers = opts.workers.max(1).min(n);
    let mut results: Vec<Option<Result<ClusterResult, CcgError>>> = (0..n).map(|_| None).collect();
    if workers <= 1 {
        for (s, slot) in results.iter_mut().enumerate() {
            *slot = Some(work(s));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let out = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let s = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if s >= n {
                        break;
                    }
                    let r = work(s);
                    out.lock().expect("result lock")[s] = Some(r);
                });
            }
        });
    }
    results.into_iter().map(|r| r.expect("every cluster evaluated")).collect()
}

/// `Σ q_s w_s`, or `None` when some cluster is infeasible.
fn worst_case_total(clusters: &[ClusterSpec], results: &[ClusterResult]) -> Option<f64> {
    results
        .iter()
        .map(|r| r.value.map(|v| clusters[r.cluster].probability * v))
        .sum()
}

/// C&CG with distribution-support cuts.
pub fn run_ccg_dro(
    solver: &Solver,
    instance: &Instance,
    clusters: &[ClusterSpec],
    provider: Option<&dyn ScenarioProvider>,
    opts: &CcgOptions,
) -> Result<SolveOutcome, CcgError> {
    run(solver, instance, clusters, provider, opts, Method::CcgDro)
}

/// Baseline adding one scenario per cluster per iteration: the most
/// probable support point of the worst-case distribution not yet cut.
pub fn run_basic_ccg(solver: &Solver, instance: &Instance, clusters: &[ClusterSpec], opts: &CcgOptions) -> Result<SolveOutcome, CcgError> {
    run(solver, instance, clusters, None, opts, Method::BasicCcg)
}

fn run(
    solver: &Solver,
    instance: &Instance,
    clusters: &[ClusterSpec],
    provider: Option<&dyn ScenarioProvider>,
    opts: &CcgOptions,
    method: Method,
) -> Result<SolveOutcome, CcgError> {
    check_inputs(instance, clusters)?;
    let start = Instant::now();
    let forms: Vec<StandardForm> = clusters.iter().map(|c| assemble_standard_form(instance, c)).collect();
    let mut cuts = CutSets::empty(clusters.len());
    let mut lb: Option<f64> = None;
    let mut ub: Option<f64> = None;
    let mut incumbent: Option<(FirstStageDecision, Vec<ClusterResult>)> = None;
    let mut trace = Vec::new();
    let (mut master_total, mut sub_total) = (0.0, 0.0);
    let mip = SolveOptions {
        mip_rel_gap: 0.0,
        mip_abs_gap: opts.tol / 10.0,
        time_limit: None,
    };
    let mut status = OutcomeStatus::IterationLimit;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if let Some(tl) = opts.time_limit {
            if start.elapsed().as_secs_f64() > tl {
                status = OutcomeStatus::TimeLimit;
                break;
            }
        }
        iterations += 1;
        // step 2: master
        let t0 = Instant::now();
        let (mut model, vars) = build_master(instance, clusters, &forms, &cuts, opts.eta_lower);
        let mut mip_opts = mip;
        if let Some(tl) = opts.time_limit {
            mip_opts.time_limit = Some((tl - start.elapsed().as_secs_f64()).max(1.0));
        }
        let mut r = solver.solve(&model, &mip_opts)?;
        let mut bounded = true;
        if r.status == SolveStatus::Unbounded {
            // η without cuts is unbounded below: take any plan feasible for
            // the cuts so far
            bounded = false;
            for &e in &vars.eta {
                model.set_cost(e, 0.0);
            }
            r = solver.solve(&model, &mip_opts)?;
        }
        let master_seconds = t0.elapsed().as_secs_f64();
        master_total += master_seconds;
        match r.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                status = OutcomeStatus::DroInfeasible;
                trace.push(BoundRecord {
                    iteration: iterations,
                    lower: lb,
                    upper: ub,
                    master_seconds,
                    subproblem_seconds: 0.0,
                    cut_scenarios: cuts.total(),
                    cg_iterations: 0,
                });
                break;
            }
            SolveStatus::TimeLimit => {
                status = OutcomeStatus::TimeLimit;
                break;
            }
            s => return Err(CcgError::Master(s)),
        }
        if bounded {
            lb = Some(lb.map_or(r.objective, |l: f64| l.max(r.objective)));
        }
        let x = vars.first_stage.extract(&r);
        // step 3: subproblems
        let t1 = Instant::now();
        let surrogate = opts.surrogate_only && provider.is_some();
        let mut results = evaluate_clusters(solver, instance, clusters, &x, &cuts, provider, surrogate, opts)?;
        let mut exact = !surrogate;
        if surrogate {
            let tentative = worst_case_total(clusters, &results).map(|w| strategic_breakdown_unchecked(instance, &x).total() + w);
            let close = match (tentative, lb) {
                (Some(t), Some(l)) => t - l <= 10.0 * opts.tol,
                _ => false,
            };
            let stale = results.iter().all(|r| {
                let set = if r.value.is_some() { &cuts.optimality[r.cluster] } else { &cuts.feasibility[r.cluster] };
                r.distribution.scenarios.iter().all(|xi| set.contains(xi))
            });
            if close || stale {
                results = evaluate_clusters(solver, instance, clusters, &x, &cuts, provider, false, opts)?;
                exact = true;
            }
        }
        let sub_seconds = t1.elapsed().as_secs_f64();
        sub_total += sub_seconds;
        let mut added = 0;
        for res in &results {
            let s = res.cluster;
            let target = if res.value.is_some() { &mut cuts.optimality[s] } else { &mut cuts.feasibility[s] };
            match method {
                Method::CcgDro => {
                    for xi in &res.distribution.scenarios {
                        if push_unique(target, xi.clone()) {
                            added += 1;
                        }
                    }
                }
                Method::BasicCcg => {
                    let mut order: Vec<usize> = (0..res.distribution.len()).collect();
                    order.sort_by(|&a, &b| {
                        res.distribution.probabilities[b]
                            .total_cmp(&res.distribution.probabilities[a])
                            .then(a.cmp(&b))
                    });
                    for i in order {
                        if push_unique(target, res.distribution.scenarios[i].clone()) {
                            added += 1;
                            break;
                        }
                    }
                }
            }
        }
        // step 4: upper bound; surrogate values only bound from below
        if let Some(w) = worst_case_total(clusters, &results).filter(|_| exact) {
            let total = strategic_breakdown_unchecked(instance, &x).total() + w;
            if ub.map_or(true, |u| total < u) {
                ub = Some(total);
                incumbent = Some((x.clone(), results.clone()));
            }
        }
        trace.push(BoundRecord {
            iteration: iterations,
            lower: if bounded { lb } else { None },
            upper: ub,
            master_seconds,
            subproblem_seconds: sub_seconds,
            cut_scenarios: cuts.total(),
            cg_iterations: results.iter().map(|r| r.cg_iterations).sum(),
        });
        log::debug!("iteration {iterations}: lb {lb:?} ub {ub:?} cuts {}", cuts.total());
        if let (Some(l), Some(u)) = (lb, ub) {
            if u - l <= opts.tol {
                status = OutcomeStatus::Optimal;
                break;
            }
        }
        if added == 0 && bounded {
            // nothing new to cut: the master already prices this plan
            if let (Some(l), Some(u)) = (lb, ub) {
                if u - l <= 10.0 * opts.tol {
                    status = OutcomeStatus::Optimal;
                    break;
                }
            }
            log::warn!("no new scenarios at iteration {iterations}; gap {:?}", ub.zip(lb).map(|(u, l)| u - l));
            status = OutcomeStatus::IterationLimit;
            break;
        }
    }
    let (x, cluster_results) = match incumbent {
        Some((x, r)) => (Some(x), r),
        None => (None, Vec::new()),
    };
    Ok(SolveOutcome {
        method,
        status,
        strategic: x.as_ref().map(|x| strategic_breakdown_unchecked(instance, x)),
        objective: if status == OutcomeStatus::DroInfeasible { None } else { ub },
        lower_bound: lb,
        x,
        trace,
        iterations,
        cut_scenarios: cuts.total(),
        master_seconds: master_total,
        subproblem_seconds: sub_total,
        cluster_results,
        cuts,
    })
}
