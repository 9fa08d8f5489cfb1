//! Worst-case expected second-stage problem for a fixed plan, solved by
//! column generation over box-corner scenarios.
//!
//! The master LP maximizes `Σ P_ξ·v(ξ)` over the probability simplex and the
//! moment window `γ^L ≤ Σ P_ξ·ξ ≤ γ^U`. Its prices (α, β^U, β^L) give the
//! reduced cost `v(ξ) − α − β^U·ξ + β^L·ξ` of a new scenario. Pricing writes
//! `v` in dual form, substitutes `ξ = ξ^L + Δ∘z` with binary `z`, and
//! linearizes each product `z_c·(B_ξᵀπ)_c` exactly using bounds on π.
//!
//! In feasibility mode `v` is the minimum total row violation and the duals
//! lie in [0, 1]. In optimality mode `v` is the recourse cost; duals are
//! capped at a penalty `M`, which turns `v` into its elastic form. That form
//! agrees with the recourse cost at every feasible scenario once `M` exceeds
//! the optimal duals, so `M` is raised until a confirmation round at a much
//! larger cap finds no improving scenario.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::climate::ClusterSpec;
use crate::instance::{FirstStageDecision, Instance};
use crate::recourse::{
    assemble_standard_form, solve_feasibility_sf, solve_recourse_sf, RecourseError, StandardForm,
    FEAS_TOL,
};
use crate::solverbridge::{Model, ObjSense, RowSense, SolveOptions, SolveStatus, Solver, SolverError, VarKind, LP_TOL};

/// Demand per cell, product-major.
pub type Scenario = Vec<f64>;

#[derive(Debug, Error)]
pub enum WespError {
    #[error("no distribution over the given columns satisfies the moment window")]
    MasterInfeasible,
    #[error("{cells} non-degenerate cells exceed the enumeration guard of {limit}")]
    TooLarge { cells: usize, limit: usize },
    #[error("column generation stopped after {iterations} iterations (last bound {value})")]
    IterationLimit { iterations: usize, value: f64 },
    #[error("column generation hit its time limit after {iterations} iterations")]
    TimeLimit { iterations: usize },
    #[error("every corner scenario is recourse-infeasible")]
    NoFeasibleCorner,
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Recourse(#[from] RecourseError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Optimality,
    Feasibility,
}

/// Finite scenario set with probabilities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub scenarios: Vec<Scenario>,
    pub probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.scenarios.first().map_or(0, |s| s.len());
        let mut m = vec![0.0; n];
        for (s, p) in self.scenarios.iter().zip(&self.probabilities) {
            for (mc, v) in m.iter_mut().zip(s) {
                *mc += p * v;
            }
        }
        m
    }

    /// Simplex and moment-window membership within `tol`.
    pub fn in_window(&self, cluster: &ClusterSpec, tol: f64) -> bool {
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.probabilities.iter().any(|&p| p < -1e-12) {
            return false;
        }
        self.mean().iter().enumerate().all(|(c, &m)| {
            m >= cluster.gamma_lower[c] - tol && m <= cluster.gamma_upper[c] + tol
        })
    }
}

/// Master LP prices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShadowPrices {
    pub alpha: f64,
    pub beta_upper: Vec<f64>,
    pub beta_lower: Vec<f64>,
}

impl ShadowPrices {
    /// `value − α − β^U·ξ + β^L·ξ`.
    pub fn reduced_cost(&self, value: f64, xi: &[f64]) -> f64 {
        let mut r = value - self.alpha;
        for (c, &v) in xi.iter().enumerate() {
            r += (self.beta_lower[c] - self.beta_upper[c]) * v;
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterSolution {
    pub value: f64,
    /// One per input column.
    pub probabilities: Vec<f64>,
    pub prices: ShadowPrices,
}

/// Maximizes `Σ P·values` over distributions on `columns` meeting the
/// cluster's moment window.
pub fn solve_master(solver: &Solver, columns: &[Scenario], values: &[f64], cluster: &ClusterSpec) -> Result<MasterSolution, WespError> {
    assert_eq!(columns.len(), values.len());
    if columns.is_empty() {
        return Err(WespError::MasterInfeasible);
    }
    let n = cluster.num_cells();
    let mut m = Model::new(ObjSense::Maximize);
    let p: Vec<_> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| m.add_continuous(format!("p{i}"), 0.0, f64::INFINITY, v))
        .collect();
    let simplex = m.add_row("simplex", p.iter().map(|&v| (v, 1.0)), RowSense::Eq, 1.0);
    let mut upper = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    for c in 0..n {
        let coeffs: Vec<_> = p.iter().zip(columns).map(|(&v, s)| (v, s[c])).collect();
        upper.push(m.add_row(format!("mu{c}"), coeffs.clone(), RowSense::Le, cluster.gamma_upper[c]));
        lower.push(m.add_row(format!("ml{c}"), coeffs, RowSense::Ge, cluster.gamma_lower[c]));
    }
    let r = solver.solve(&m, &SolveOptions::default())?;
    match r.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(WespError::MasterInfeasible),
        s => return Err(WespError::Internal(format!("master LP status {s}"))),
    }
    let duals = r.duals()?;
    Ok(MasterSolution {
        value: r.objective,
        probabilities: p.iter().map(|&v| r.value(v).max(0.0)).collect(),
        prices: ShadowPrices {
            alpha: duals[simplex.index()],
            beta_upper: upper.iter().map(|row| duals[row.index()].max(0.0)).collect(),
            beta_lower: lower.iter().map(|row| (-duals[row.index()]).max(0.0)).collect(),
        },
    })
}

/// Box corner for a binary vector over cells.
pub fn corner(cluster: &ClusterSpec, z: &[bool]) -> Scenario {
    (0..cluster.num_cells())
        .map(|c| if z[c] { cluster.xi_upper[c] } else { cluster.xi_lower[c] })
        .collect()
}

/// True when every cell sits at one of its two box bounds.
pub fn is_corner(cluster: &ClusterSpec, xi: &[f64]) -> bool {
    xi.iter()
        .enumerate()
        .all(|(c, &v)| v == cluster.xi_lower[c] || v == cluster.xi_upper[c])
}

/// The default initial columns: all-lower and all-upper corners plus the
/// γ-window midpoint clamped to the box.
pub fn default_columns(cluster: &ClusterSpec) -> Vec<Scenario> {
    let n = cluster.num_cells();
    let mid: Scenario = (0..n)
        .map(|c| (0.5 * (cluster.gamma_lower[c] + cluster.gamma_upper[c])).clamp(cluster.xi_lower[c], cluster.xi_upper[c]))
        .collect();
    let mut out = vec![cluster.xi_lower.clone(), cluster.xi_upper.clone()];
    push_unique(&mut out, mid);
    out.dedup();
    out
}

pub(crate) fn push_unique(columns: &mut Vec<Scenario>, s: Scenario) -> bool {
    if columns.iter().any(|c| *c == s) {
        false
    } else {
        columns.push(s);
        true
    }
}

// ---------------------------------------------------------------------------
// Column values.

/// Evaluates `v(ξ)` for a fixed plan in one mode.
pub struct ColumnOracle<'a> {
    solver: &'a Solver,
    pub sf: StandardForm,
    pub x: Vec<f64>,
    pub mode: Mode,
    /// Largest dual seen at an evaluated feasible scenario.
    pub max_dual: f64,
}

impl<'a> ColumnOracle<'a> {
    pub fn new(solver: &'a Solver, instance: &Instance, cluster: &ClusterSpec, x: &FirstStageDecision, mode: Mode) -> Self {
        let sf = assemble_standard_form(instance, cluster);
        let x = sf.xlayout.vector(x);
        Self {
            solver,
            sf,
            x,
            mode,
            max_dual: 0.0,
        }
    }

    /// `Some(value)`, or `None` for a recourse-infeasible scenario in
    /// optimality mode.
    pub fn value(&mut self, xi: &[f64]) -> Result<Option<f64>, WespError> {
        match self.mode {
            Mode::Feasibility => {
                let v = solve_feasibility_sf(self.solver, &self.sf, &self.x, xi)?.violation;
                Ok(Some(if v <= FEAS_TOL { 0.0 } else { v }))
            }
            Mode::Optimality => match solve_recourse_sf(self.solver, &self.sf, &self.x, xi) {
                Ok(sol) => {
                    let d = sol.duals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                    self.max_dual = self.max_dual.max(d);
                    Ok(Some(sol.objective))
                }
                Err(RecourseError::Infeasible) => Ok(None),
                Err(e) => Err(e.into()),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Pricing.

/// Outcome of one pricing call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    /// Exact reduced cost at `scenario`, floored at 0.
    pub reduced_cost: f64,
    pub scenario: Scenario,
    pub z: Vec<bool>,
    /// `v(scenario)`.
    pub value: f64,
}

/// Pricing MILP: maximize the reduced cost over box corners with duals
/// capped at `cap`. Corners in `exclude` are cut off.
fn pricing_milp(
    solver: &Solver,
    sf: &StandardForm,
    x: &[f64],
    cluster: &ClusterSpec,
    prices: &ShadowPrices,
    mode: Mode,
    cap: f64,
    exclude: &[Vec<bool>],
) -> Result<Option<(Vec<bool>, f64)>, WespError> {
    let n = cluster.num_cells();
    let mut m = Model::new(ObjSense::Maximize);
    let zero_xi = vec![0.0; n];
    let pi: Vec<_> = sf
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| m.add_continuous(format!("pi{r}"), 0.0, cap, row.rhs(x, &zero_xi)))
        .collect();
    // B_Yᵀπ ≤ C_Y (optimality) or ≤ 0 (feasibility)
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); sf.num_y()];
    for (r, row) in sf.rows.iter().enumerate() {
        for &(v, a) in &row.y {
            cols[v].push((r, a));
        }
    }
    for (v, col) in cols.iter().enumerate() {
        let rhs = match mode {
            Mode::Optimality => sf.cost[v],
            Mode::Feasibility => 0.0,
        };
        m.add_row(format!("dy{v}"), col.iter().map(|&(r, a)| (pi[r], a)), RowSense::Le, rhs);
    }
    let mut constant = -prices.alpha;
    let mut z_vars = vec![None; n];
    for c in 0..n {
        let lo = cluster.xi_lower[c];
        let delta = cluster.box_width(c);
        let col = sf.xi_column(c);
        let (g_lo, g_hi) = col.iter().fold((0.0, 0.0), |(l, h), &(_, a)| {
            if a < 0.0 {
                (l + a * cap, h)
            } else {
                (l, h + a * cap)
            }
        });
        let g = m.add_continuous(format!("g{c}"), g_lo, g_hi, -lo);
        let mut def: Vec<_> = col.iter().map(|&(r, a)| (pi[r], a)).collect();
        def.push((g, -1.0));
        m.add_row(format!("gdef{c}"), def, RowSense::Eq, 0.0);
        let shift = prices.beta_lower[c] - prices.beta_upper[c];
        constant += shift * lo;
        if delta > 0.0 {
            let z = m.add_var(format!("z{c}"), VarKind::Binary, 0.0, 1.0, shift * delta);
            let w = m.add_continuous(format!("w{c}"), g_lo.min(0.0), g_hi.max(0.0), -delta);
            m.add_row(format!("mc1_{c}"), [(w, 1.0), (z, -g_hi)], RowSense::Le, 0.0);
            m.add_row(format!("mc2_{c}"), [(w, 1.0), (z, -g_lo)], RowSense::Ge, 0.0);
            m.add_row(format!("mc3_{c}"), [(w, 1.0), (g, -1.0), (z, -g_lo)], RowSense::Le, -g_lo);
            m.add_row(format!("mc4_{c}"), [(w, 1.0), (g, -1.0), (z, -g_hi)], RowSense::Ge, -g_hi);
            z_vars[c] = Some(z);
        }
    }
    for (e, bad) in exclude.iter().enumerate() {
        // Σ_{bad=1}(1 − z) + Σ_{bad=0} z ≥ 1
        let mut coeffs = Vec::new();
        let mut rhs = 1.0;
        for c in 0..n {
            if let Some(z) = z_vars[c] {
                if bad[c] {
                    coeffs.push((z, -1.0));
                    rhs -= 1.0;
                } else {
                    coeffs.push((z, 1.0));
                }
            }
        }
        if coeffs.is_empty() {
            return Ok(None);
        }
        m.add_row(format!("nogood{e}"), coeffs, RowSense::Ge, rhs);
    }
    m.set_objective_offset(constant);
    let r = solver.solve(&m, &SolveOptions::pricing())?;
    match r.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(None),
        SolveStatus::Unbounded => {
            return Err(WespError::Internal("pricing reported unbounded with capped duals".into()))
        }
        s => return Err(WespError::Internal(format!("pricing status {s}"))),
    }
    let z: Vec<bool> = (0..n)
        .map(|c| z_vars[c].map_or(false, |v| r.value(v) > 0.5))
        .collect();
    Ok(Some((z, r.objective)))
}

/// Prices a corner exactly: returns `None` for an infeasible corner in
/// optimality mode.
fn exact_reduced_cost(
    oracle: &mut ColumnOracle<'_>,
    cluster: &ClusterSpec,
    prices: &ShadowPrices,
    z: &[bool],
) -> Result<Option<(f64, f64)>, WespError> {
    let xi = corner(cluster, z);
    Ok(oracle.value(&xi)?.map(|v| (prices.reduced_cost(v, &xi), v)))
}

/// Finds the corner with the largest reduced cost, breaking ties toward
/// zeros in the first cells. Infeasible corners (optimality mode) are
/// excluded; `excluded` accumulates them across calls.
pub fn solve_pricing(
    oracle: &mut ColumnOracle<'_>,
    cluster: &ClusterSpec,
    prices: &ShadowPrices,
    cap: f64,
    excluded: &mut Vec<Vec<bool>>,
    canonicalize: bool,
) -> Result<Option<PricingResult>, WespError> {
    let cap = if oracle.mode == Mode::Feasibility { 1.0 } else { cap };
    loop {
        let Some((z, _milp_value)) = pricing_milp(
            oracle.solver,
            &oracle.sf,
            &oracle.x,
            cluster,
            prices,
            oracle.mode,
            cap,
            excluded,
        )?
        else {
            return Ok(None);
        };
        let Some((r_star, value)) = exact_reduced_cost(oracle, cluster, prices, &z)? else {
            excluded.push(z);
            continue;
        };
        let mut best = (z, r_star, value);
        if canonicalize {
            let tie = 1e-9 * r_star.abs().max(1.0);
            for c in 0..best.0.len() {
                if !best.0[c] {
                    continue;
                }
                let mut trial = best.0.clone();
                trial[c] = false;
                if let Some((r, v)) = exact_reduced_cost(oracle, cluster, prices, &trial)? {
                    if r >= r_star - tie {
                        best = (trial, best.1.max(r), v);
                    }
                }
            }
        }
        let (z, r, value) = best;
        return Ok(Some(PricingResult {
            reduced_cost: r.max(0.0),
            scenario: corner(cluster, &z),
            z,
            value,
        }));
    }
}

// ---------------------------------------------------------------------------
// Column generation.

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CgOptions {
    /// Termination when the best reduced cost is ≤ epsilon·max(1, |η|).
    pub epsilon: f64,
    /// Defaults to 2^(non-degenerate cells) + 10.
    pub max_iterations: Option<usize>,
    pub time_limit: Option<f64>,
    /// Tie-break pricing maximizers toward the all-lower corner.
    pub canonicalize: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iterations: None,
            time_limit: None,
            canonicalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgIteration {
    pub iteration: usize,
    pub master_value: f64,
    pub reduced_cost: f64,
    pub pricing_seconds: f64,
    pub master_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub mode: Mode,
    /// w (optimality) or w̃ (feasibility).
    pub value: f64,
    /// Support with P > 0.
    pub distribution: DiscreteDistribution,
    pub prices: ShadowPrices,
    /// Pricing rounds performed.
    pub iterations: usize,
    pub trace: Vec<CgIteration>,
    /// Every column in the final master with its value.
    pub columns: Vec<Scenario>,
    pub column_values: Vec<f64>,
    pub column_probabilities: Vec<f64>,
    /// Scenarios returned by pricing, in order.
    pub priced: Vec<Scenario>,
    /// Dual cap used by optimality-mode pricing at termination.
    pub dual_cap: f64,
}

impl CgReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,master_value,reduced_cost,pricing_seconds,master_seconds\n");
        for it in &self.trace {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                it.iteration, it.master_value, it.reduced_cost, it.pricing_seconds, it.master_seconds
            ));
        }
        s
    }
}

const SUPPORT_TOL: f64 = 1e-10;

fn non_degenerate_cells(cluster: &ClusterSpec) -> usize {
    (0..cluster.num_cells()).filter(|&c| !cluster.is_degenerate_cell(c)).count()
}

/// Algorithm: alternate master LP and pricing until no corner has positive
/// reduced cost.
pub fn run_cg(
    solver: &Solver,
    instance: &Instance,
    cluster: &ClusterSpec,
    x: &FirstStageDecision,
    mode: Mode,
    initial_columns: &[Scenario],
    opts: &CgOptions,
) -> Result<CgReport, WespError> {
    let mut oracle = ColumnOracle::new(solver, instance, cluster, x, mode);
    run_cg_with(&mut oracle, cluster, initial_columns, opts)
}

pub fn run_cg_with(
    oracle: &mut ColumnOracle<'_>,
    cluster: &ClusterSpec,
    initial_columns: &[Scenario],
    opts: &CgOptions,
) -> Result<CgReport, WespError> {
    let start = Instant::now();
    let mode = oracle.mode;
    let nd = non_degenerate_cells(cluster);
    let limit = opts
        .max_iterations
        .unwrap_or_else(|| if nd >= 60 { usize::MAX } else { (1usize << nd).saturating_add(10) });
    let mut columns: Vec<Scenario> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut excluded: Vec<Vec<bool>> = Vec::new();
    let add = |oracle: &mut ColumnOracle<'_>, s: Scenario, columns: &mut Vec<Scenario>, values: &mut Vec<f64>, excluded: &mut Vec<Vec<bool>>| -> Result<(), WespError> {
        if columns.contains(&s) {
            return Ok(());
        }
        match oracle.value(&s)? {
            Some(v) => {
                columns.push(s);
                values.push(v);
            }
            None => {
                if is_corner(cluster, &s) {
                    let z: Vec<bool> = (0..s.len())
                        .map(|c| !cluster.is_degenerate_cell(c) && s[c] == cluster.xi_upper[c])
                        .collect();
                    if !excluded.contains(&z) {
                        excluded.push(z);
                    }
                }
            }
        }
        Ok(())
    };
    for s in initial_columns {
        add(oracle, s.clone(), &mut columns, &mut values, &mut excluded)?;
    }
    let mut trace = Vec::new();
    let mut priced = Vec::new();
    let cost_scale = oracle.sf.cost.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-3);
    let mut cap = match mode {
        Mode::Feasibility => 1.0,
        Mode::Optimality => 1e3 * cost_scale,
    };
    let mut iterations = 0;
    let mut seeded_defaults = false;
    loop {
        let t_master = Instant::now();
        let master = match solve_master(oracle.solver, &columns, &values, cluster) {
            Ok(m) => m,
            Err(WespError::MasterInfeasible) if !seeded_defaults => {
                seeded_defaults = true;
                for s in default_columns(cluster) {
                    add(oracle, s, &mut columns, &mut values, &mut excluded)?;
                }
                continue;
            }
            Err(WespError::MasterInfeasible) if columns.is_empty() => return Err(WespError::NoFeasibleCorner),
            Err(e) => return Err(e),
        };
        let master_seconds = t_master.elapsed().as_secs_f64();
        let eps = opts.epsilon * master.value.abs().max(1.0);
        if let Some(tl) = opts.time_limit {
            if start.elapsed().as_secs_f64() > tl {
                return Err(WespError::TimeLimit { iterations });
            }
        }
        if iterations >= limit {
            return Err(WespError::IterationLimit {
                iterations,
                value: master.value,
            });
        }
        iterations += 1;
        let t_price = Instant::now();
        if mode == Mode::Optimality {
            cap = cap.max(10.0 * oracle.max_dual);
        }
        let mut found = solve_pricing(oracle, cluster, &master.prices, cap, &mut excluded, opts.canonicalize)?;
        let improving = |f: &Option<PricingResult>, cols: &Vec<Scenario>| {
            f.as_ref().map_or(false, |p| p.reduced_cost > eps && !cols.contains(&p.scenario))
        };
        if mode == Mode::Optimality && !improving(&found, &columns) {
            // confirm with a much larger dual cap before stopping
            let confirm = solve_pricing(oracle, cluster, &master.prices, 100.0 * cap, &mut excluded, opts.canonicalize)?;
            if improving(&confirm, &columns) {
                cap *= 100.0;
                found = confirm;
            }
        }
        let pricing_seconds = t_price.elapsed().as_secs_f64();
        let rc = found.as_ref().map_or(0.0, |p| p.reduced_cost);
        trace.push(CgIteration {
            iteration: iterations,
            master_value: master.value,
            reduced_cost: rc,
            pricing_seconds,
            master_seconds,
        });
        if let Some(p) = &found {
            priced.push(p.scenario.clone());
        }
        if !improving(&found, &columns) {
            if let Some(p) = &found {
                if p.reduced_cost > eps {
                    log::warn!("pricing returned an existing column with reduced cost {}", p.reduced_cost);
                }
            }
            let mut dist = DiscreteDistribution::default();
            for (i, &pr) in master.probabilities.iter().enumerate() {
                if pr > SUPPORT_TOL {
                    dist.scenarios.push(columns[i].clone());
                    dist.probabilities.push(pr);
                }
            }
            return Ok(CgReport {
                mode,
                value: master.value,
                distribution: dist,
                prices: master.prices,
                iterations,
                trace,
                column_probabilities: master.probabilities,
                columns,
                column_values: values,
                priced,
                dual_cap: cap,
            });
        }
        let p = found.expect("improving implies found");
        columns.push(p.scenario);
        values.push(p.value);
    }
}

// ---------------------------------------------------------------------------
// Enumeration oracle and tightness.

/// Largest number of non-degenerate cells [`oracle_wesp`] enumerates.
pub const ORACLE_CELL_LIMIT: usize = 20;

/// All distinct box corners, in increasing binary order with the first cell
/// as the most significant bit.
pub fn all_corners(cluster: &ClusterSpec) -> Result<Vec<Scenario>, WespError> {
    let cells: Vec<usize> = (0..cluster.num_cells()).filter(|&c| !cluster.is_degenerate_cell(c)).collect();
    if cells.len() > ORACLE_CELL_LIMIT {
        return Err(WespError::TooLarge {
            cells: cells.len(),
            limit: ORACLE_CELL_LIMIT,
        });
    }
    let n = cells.len();
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0u64..(1u64 << n) {
        let mut s = cluster.xi_lower.clone();
        for (bit, &c) in cells.iter().enumerate() {
            if mask >> (n - 1 - bit) & 1 == 1 {
                s[c] = cluster.xi_upper[c];
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Value of the worst-case problem by enumerating every corner and solving a
/// single LP over all of them. Infeasible corners are left out in
/// optimality mode.
pub fn oracle_wesp(
    solver: &Solver,
    instance: &Instance,
    cluster: &ClusterSpec,
    x: &FirstStageDecision,
    mode: Mode,
) -> Result<f64, WespError> {
    let corners = all_corners(cluster)?;
    let sf = assemble_standard_form(instance, cluster);
    let xv = sf.xlayout.vector(x);
    let mut kept = Vec::new();
    let mut vals = Vec::new();
    for s in corners {
        let v = match mode {
            Mode::Feasibility => Some(solve_feasibility_sf(solver, &sf, &xv, &s)?.violation),
            Mode::Optimality => match solve_recourse_sf(solver, &sf, &xv, &s) {
                Ok(sol) => Some(sol.objective),
                Err(RecourseError::Infeasible) => None,
                Err(e) => return Err(e.into()),
            },
        };
        if let Some(v) = v {
            kept.push(s);
            vals.push(if mode == Mode::Feasibility && v <= FEAS_TOL { 0.0 } else { v });
        }
    }
    if kept.is_empty() {
        return Err(WespError::NoFeasibleCorner);
    }
    // The master LP is written out here rather than shared with the CG path.
    let n = cluster.num_cells();
    let mut m = Model::new(ObjSense::Maximize);
    let p: Vec<_> = vals
        .iter()
        .enumerate()
        .map(|(i, &v)| m.add_continuous(format!("p{i}"), 0.0, 1.0, v))
        .collect();
    m.add_row("sum", p.iter().map(|&v| (v, 1.0)), RowSense::Eq, 1.0);
    for c in 0..n {
        let coeffs: Vec<_> = p.iter().zip(&kept).map(|(&v, s)| (v, s[c])).collect();
        m.add_row(format!("hi{c}"), coeffs.clone(), RowSense::Le, cluster.gamma_upper[c]);
        m.add_row(format!("lo{c}"), coeffs, RowSense::Ge, cluster.gamma_lower[c]);
    }
    let r = solver.solve(&m, &SolveOptions::default())?;
    match r.status {
        SolveStatus::Optimal => Ok(r.objective),
        SolveStatus::Infeasible => Err(WespError::MasterInfeasible),
        s => Err(WespError::Internal(format!("oracle master status {s}"))),
    }
}

/// Looks for a cell whose mean reaches γ^U under some distribution over the
/// report's columns that keeps the optimal master value. Returns the first
/// such cell.
pub fn check_tightness(solver: &Solver, report: &CgReport, cluster: &ClusterSpec) -> Result<Option<usize>, WespError> {
    tightness_over(solver, &report.columns, &report.column_values, report.value, cluster)
}

pub(crate) fn tightness_over(
    solver: &Solver,
    columns: &[Scenario],
    values: &[f64],
    optimum: f64,
    cluster: &ClusterSpec,
) -> Result<Option<usize>, WespError> {
    let n = cluster.num_cells();
    let mut m = Model::new(ObjSense::Maximize);
    let p: Vec<_> = columns
        .iter()
        .enumerate()
        .map(|(i, s)| m.add_continuous(format!("p{i}"), 0.0, f64::INFINITY, s.iter().sum()))
        .collect();
    m.add_row("sum", p.iter().map(|&v| (v, 1.0)), RowSense::Eq, 1.0);
    let keep = optimum - LP_TOL * optimum.abs().max(1.0) * 1e-3;
    m.add_row("keep", p.iter().zip(values).map(|(&v, &w)| (v, w)), RowSense::Ge, keep);
    for c in 0..n {
        let coeffs: Vec<_> = p.iter().zip(columns).map(|(&v, s)| (v, s[c])).collect();
        m.add_row(format!("hi{c}"), coeffs.clone(), RowSense::Le, cluster.gamma_upper[c]);
        m.add_row(format!("lo{c}"), coeffs, RowSense::Ge, cluster.gamma_lower[c]);
    }
    let r = solver.solve(&m, &SolveOptions::default())?;
    if r.status != SolveStatus::Optimal {
        return Ok(None);
    }
    for c in 0..n {
        let mean: f64 = p.iter().zip(columns).map(|(&v, s)| r.value(v) * s[c]).sum();
        if (mean - cluster.gamma_upper[c]).abs() <= 1e-6 * cluster.gamma_upper[c].abs().max(1.0) {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(lo: Vec<f64>, hi: Vec<f64>, gl: Vec<f64>, gu: Vec<f64>) -> ClusterSpec {
        ClusterSpec {
            id: 0,
            probability: 1.0,
            members: 1,
            total: 1,
            sunshine: vec![vec![1.0]],
            xi_lower: lo,
            xi_upper: hi,
            gamma_lower: gl,
            gamma_upper: gu,
        }
    }

    #[test]
    fn master_single_column_is_forced() {
        let c = cluster(vec![0.0], vec![10.0], vec![2.0], vec![8.0]);
        let m = solve_master(&Solver::default(), &[vec![5.0]], &[3.5], &c).unwrap();
        assert!((m.value - 3.5).abs() < 1e-9);
        assert!((m.probabilities[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn master_two_corners_at_midpoint() {
        let c = cluster(vec![0.0], vec![10.0], vec![5.0], vec![5.0]);
        let m = solve_master(&Solver::default(), &[vec![0.0], vec![10.0]], &[0.0, 1.0], &c).unwrap();
        assert!((m.value - 0.5).abs() < 1e-9);
        assert!((m.probabilities[0] - 0.5).abs() < 1e-9);
        assert!((m.probabilities[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn master_infeasible_when_columns_miss_window() {
        let c = cluster(vec![0.0], vec![10.0], vec![5.0], vec![6.0]);
        let e = solve_master(&Solver::default(), &[vec![1.0], vec![2.0]], &[0.0, 1.0], &c).unwrap_err();
        assert!(matches!(e, WespError::MasterInfeasible));
    }

    #[test]
    fn reduced_costs_vanish_on_basic_columns() {
        let c = cluster(vec![0.0, 0.0], vec![4.0, 4.0], vec![1.0, 1.0], vec![3.0, 2.0]);
        let cols = vec![vec![0.0, 0.0], vec![4.0, 4.0], vec![4.0, 0.0], vec![0.0, 4.0]];
        let vals = vec![0.0, 3.0, 1.0, 2.0];
        let m = solve_master(&Solver::default(), &cols, &vals, &c).unwrap();
        for (i, s) in cols.iter().enumerate() {
            let r = m.prices.reduced_cost(vals[i], s);
            assert!(r <= 1e-7, "column {i} reduced cost {r}");
            if m.probabilities[i] > 1e-9 {
                assert!(r.abs() <= 1e-7);
            }
        }
        let dual_obj = m.prices.alpha + (0..2).map(|k| m.prices.beta_upper[k] * c.gamma_upper[k] - m.prices.beta_lower[k] * c.gamma_lower[k]).sum::<f64>();
        assert!((dual_obj - m.value).abs() < 1e-7);
    }

    #[test]
    fn corner_enumeration_order() {
        let c = cluster(vec![0.0, 5.0, 1.0], vec![1.0, 5.0, 2.0], vec![0.0, 5.0, 1.0], vec![1.0, 5.0, 2.0]);
        let cs = all_corners(&c).unwrap();
        assert_eq!(cs, vec![vec![0.0, 5.0, 1.0], vec![0.0, 5.0, 2.0], vec![1.0, 5.0, 1.0], vec![1.0, 5.0, 2.0]]);
    }

    #[test]
    fn default_columns_fit_window() {
        let c = cluster(vec![0.0, 1.0], vec![4.0, 3.0], vec![1.0, 2.5], vec![2.0, 3.0]);
        let cols = default_columns(&c);
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[2], vec![1.5, 2.75]);
        assert!(solve_master(&Solver::default(), &cols, &[0.0, 0.0, 0.0], &c).is_ok());
    }
}
