//! Second-stage (operational) model for a fixed capacity plan and demand
//! scenario.
//!
//! The feasible set is kept in standard form
//! `B_X·x + B_Y·Y + B_ξ·ξ ≥ d, Y ≥ 0`, where `x` is the flattened vector of
//! first-stage quantities the recourse depends on (conventional lines, green
//! lines, renewable flags; see [`XLayout`]). Row groups, in order:
//!
//! 1. eligibility: `b·X^O − Y^OT ≥ 0`, `b·X^N − Y^NT ≥ 0`, `b·X^N − Y^NG ≥ 0`
//!    per factory, eligible (capacity, product) and period;
//! 2. line capacity: `n^O·X^O − Σ_k a^O·Y^OT ≥ 0` and
//!    `n^N·X^N − Σ_k a^N·(Y^NT + Y^NG) ≥ 0` per factory, capacity, period;
//! 3. green share over the horizon: `(1−τ)·ΣY^NG − τ·Σ(Y^OT + Y^NT) ≥ 0`;
//! 4. demand balance as a pair: `ΣY + Y^U − ξ ≥ 0` and `−ΣY − Y^U + ξ ≥ 0`;
//! 5. service level: `(1−λ)·ξ − Y^U ≥ 0`;
//! 6. renewable energy: `E·ω·X^BR / demand_unit − Σ e·Y^NG ≥ 0` per factory
//!    and period.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::climate::ClusterSpec;
use crate::instance::{FirstStageDecision, Instance};
use crate::solverbridge::{Model, ObjSense, RowId, RowSense, SolveOptions, SolveStatus, Solver, SolverError, VarId};

#[derive(Debug, Error)]
pub enum RecourseError {
    #[error("recourse problem is infeasible for this plan and scenario")]
    Infeasible,
    #[error("unexpected recourse status {0}")]
    Status(SolveStatus),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Index map of the first-stage quantities appearing in recourse rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct XLayout {
    pub factories: usize,
    pub capacities: usize,
    pub periods: usize,
}

impl XLayout {
    pub fn of(instance: &Instance) -> Self {
        Self {
            factories: instance.num_factories(),
            capacities: instance.num_capacities(),
            periods: instance.periods,
        }
    }

    fn ijt(&self, i: usize, j: usize, t: usize) -> usize {
        (i * self.capacities + j) * self.periods + t
    }

    fn block(&self) -> usize {
        self.factories * self.capacities * self.periods
    }

    pub fn old(&self, i: usize, j: usize, t: usize) -> usize {
        self.ijt(i, j, t)
    }

    pub fn green(&self, i: usize, j: usize, t: usize) -> usize {
        self.block() + self.ijt(i, j, t)
    }

    pub fn renewable(&self, i: usize) -> usize {
        2 * self.block() + i
    }

    pub fn len(&self) -> usize {
        2 * self.block() + self.factories
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens the recourse-relevant part of a decision.
    pub fn vector(&self, x: &FirstStageDecision) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for i in 0..self.factories {
            for j in 0..self.capacities {
                for t in 0..self.periods {
                    v[self.old(i, j, t)] = x.old[i][j][t] as f64;
                    v[self.green(i, j, t)] = x.green[i][j][t] as f64;
                }
            }
            v[self.renewable(i)] = if x.renewable[i] { 1.0 } else { 0.0 };
        }
        v
    }
}

/// Kind of a recourse variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum YKind {
    /// Conventional technology.
    Old,
    /// Green technology on grid power.
    GreenGrid,
    /// Green technology on renewable power.
    GreenRenewable,
    /// Unmet demand of a cell.
    Unmet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct YVar {
    pub kind: YKind,
    /// Factory, capacity (unused for `Unmet`).
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowGroup {
    Eligibility,
    Capacity,
    GreenShare,
    DemandCover,
    DemandCap,
    ServiceLevel,
    Energy,
}

/// One standard-form row `x·B_X + y·B_Y + ξ·B_ξ ≥ d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SfRow {
    pub group: RowGroup,
    pub x: Vec<(usize, f64)>,
    pub y: Vec<(usize, f64)>,
    pub xi: Vec<(usize, f64)>,
    pub d: f64,
}

impl SfRow {
    /// Right-hand side after moving the fixed x and ξ terms across.
    pub fn rhs(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.d - self.x.iter().map(|&(c, v)| v * x[c]).sum::<f64>() - self.xi.iter().map(|&(c, v)| v * xi[c]).sum::<f64>()
    }
}

/// Standard-form recourse data for one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardForm {
    pub xlayout: XLayout,
    pub num_cells: usize,
    pub yvars: Vec<YVar>,
    /// C_Y in money units per stored quantity.
    pub cost: Vec<f64>,
    pub rows: Vec<SfRow>,
}

impl StandardForm {
    pub fn num_y(&self) -> usize {
        self.yvars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Index of Y^U for a cell.
    pub fn unmet_index(&self, cell: usize) -> usize {
        self.yvars.len() - self.num_cells + cell
    }

    /// Coefficient of ξ_c in each row, i.e. column c of B_ξ.
    pub fn xi_column(&self, c: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &(cc, v) in &row.xi {
                if cc == c {
                    out.push((r, v));
                }
            }
        }
        out
    }

    /// Sparse triplets `(matrix, row, col, value)` for debugging dumps.
    pub fn triplets(&self) -> String {
        let mut s = String::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in &row.x {
                s.push_str(&format!("BX {r} {c} {v}\n"));
            }
            for &(c, v) in &row.y {
                s.push_str(&format!("BY {r} {c} {v}\n"));
            }
            for &(c, v) in &row.xi {
                s.push_str(&format!("BXI {r} {c} {v}\n"));
            }
            s.push_str(&format!("D {r} 0 {}\n", row.d));
        }
        s
    }
}

/// Builds `(B_X, B_Y, B_ξ, d)` for `instance` with PV rows using the
/// cluster's sunshine hours.
pub fn assemble_standard_form(instance: &Instance, cluster: &ClusterSpec) -> StandardForm {
    let xl = XLayout::of(instance);
    let (ni, nj, nt) = (instance.num_factories(), instance.num_capacities(), instance.periods);
    let pairs = instance.eligible_pairs();
    let factor = instance.recourse_cost_factor();
    let mut yvars = Vec::new();
    let mut cost = Vec::new();
    // (i, pair index, t) -> first of three consecutive production variables
    let prod = |i: usize, p: usize, t: usize| 3 * ((i * pairs.len() + p) * nt + t);
    for i in 0..ni {
        for &(j, k) in &pairs {
            let pc = instance.production_cost[i][j][k].expect("eligible cell has a cost");
            for t in 0..nt {
                for (kind, c) in [
                    (YKind::Old, pc.old),
                    (YKind::GreenGrid, pc.green),
                    (YKind::GreenRenewable, pc.green),
                ] {
                    yvars.push(YVar { kind, i, j, k, t });
                    cost.push(c * factor);
                }
            }
        }
    }
    let unmet0 = yvars.len();
    for k in 0..instance.num_products() {
        for t in 0..nt {
            yvars.push(YVar {
                kind: YKind::Unmet,
                i: 0,
                j: 0,
                k,
                t,
            });
            cost.push(instance.shortage_penalty[k] * factor);
        }
    }
    let mut rows = Vec::new();
    let row = |group, x, y, xi| SfRow { group, x, y, xi, d: 0.0 };
    // eligibility
    for i in 0..ni {
        for (p, &(j, k)) in pairs.iter().enumerate() {
            let b_old = instance.eligibility_bound(j, k, false);
            let b_new = instance.eligibility_bound(j, k, true);
            for t in 0..nt {
                let y0 = prod(i, p, t);
                rows.push(row(RowGroup::Eligibility, vec![(xl.old(i, j, t), b_old)], vec![(y0, -1.0)], vec![]));
                rows.push(row(RowGroup::Eligibility, vec![(xl.green(i, j, t), b_new)], vec![(y0 + 1, -1.0)], vec![]));
                rows.push(row(RowGroup::Eligibility, vec![(xl.green(i, j, t), b_new)], vec![(y0 + 2, -1.0)], vec![]));
            }
        }
    }
    // line capacity
    for i in 0..ni {
        for j in 0..nj {
            for t in 0..nt {
                let mut old = Vec::new();
                let mut new = Vec::new();
                for (p, &(jj, k)) in pairs.iter().enumerate() {
                    if jj != j {
                        continue;
                    }
                    let proc_ = instance.processes[j][k].expect("eligible");
                    let y0 = prod(i, p, t);
                    old.push((y0, -proc_.utilization_old));
                    new.push((y0 + 1, -proc_.utilization_green));
                    new.push((y0 + 2, -proc_.utilization_green));
                }
                rows.push(row(RowGroup::Capacity, vec![(xl.old(i, j, t), instance.throughput_old[j])], old, vec![]));
                rows.push(row(RowGroup::Capacity, vec![(xl.green(i, j, t), instance.throughput_green[j])], new, vec![]));
            }
        }
    }
    // green share over the horizon
    let tau = instance.green_target;
    let share: Vec<(usize, f64)> = (0..unmet0)
        .map(|v| match yvars[v].kind {
            YKind::GreenRenewable => (v, 1.0 - tau),
            _ => (v, -tau),
        })
        .collect();
    rows.push(row(RowGroup::GreenShare, vec![], share, vec![]));
    // demand balance, paired
    let ncells = instance.num_cells();
    let mut cover: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncells];
    for v in 0..unmet0 {
        let y = yvars[v];
        cover[instance.cell(y.k, y.t)].push((v, 1.0));
    }
    for (c, terms) in cover.iter().enumerate() {
        let mut plus = terms.clone();
        plus.push((unmet0 + c, 1.0));
        let minus: Vec<(usize, f64)> = plus.iter().map(|&(v, a)| (v, -a)).collect();
        rows.push(row(RowGroup::DemandCover, vec![], plus, vec![(c, -1.0)]));
        rows.push(row(RowGroup::DemandCap, vec![], minus, vec![(c, 1.0)]));
    }
    // service level
    let lambda = instance.service_level;
    for c in 0..ncells {
        rows.push(row(RowGroup::ServiceLevel, vec![], vec![(unmet0 + c, -1.0)], vec![(c, 1.0 - lambda)]));
    }
    // renewable energy
    for i in 0..ni {
        for t in 0..nt {
            let budget = instance.pv_capacity[i] * cluster.sunshine[i][t] / instance.units.demand;
            let mut y = Vec::new();
            for (p, &(j, k)) in pairs.iter().enumerate() {
                let e = instance.processes[j][k].expect("eligible").energy;
                y.push((prod(i, p, t) + 2, -e));
            }
            rows.push(row(RowGroup::Energy, vec![(xl.renewable(i), budget)], y, vec![]));
        }
    }
    StandardForm {
        xlayout: xl,
        num_cells: ncells,
        yvars,
        cost,
        rows,
    }
}

/// Where the first-stage quantities of a recourse block come from.
#[derive(Clone, Copy, Debug)]
pub enum XSource<'a> {
    Fixed(&'a [f64]),
    Vars(&'a [VarId]),
}

/// Variables and rows of one recourse block added to a larger model.
#[derive(Clone, Debug)]
pub struct Block {
    pub y: Vec<VarId>,
    /// One per row when the block is relaxed, empty otherwise.
    pub slack: Vec<VarId>,
    pub rows: Vec<RowId>,
}

/// Adds `Y ∈ 𝒴(x, ξ)` to `model`. Y costs are `weight·C_Y`; with `relaxed`,
/// each row gets a slack costing `weight` instead and Y costs nothing.
pub fn add_block(
    model: &mut Model,
    sf: &StandardForm,
    x: XSource<'_>,
    xi: &[f64],
    relaxed: bool,
    weight: f64,
    tag: &str,
) -> Block {
    let y: Vec<VarId> = (0..sf.num_y())
        .map(|v| {
            let c = if relaxed { 0.0 } else { weight * sf.cost[v] };
            model.add_continuous(format!("{tag}y{v}"), 0.0, f64::INFINITY, c)
        })
        .collect();
    let slack: Vec<VarId> = if relaxed {
        (0..sf.num_rows())
            .map(|r| model.add_continuous(format!("{tag}s{r}"), 0.0, f64::INFINITY, weight))
            .collect()
    } else {
        Vec::new()
    };
    let rows = sf
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let xi_term: f64 = row.xi.iter().map(|&(c, v)| v * xi[c]).sum();
            let mut coeffs: Vec<(VarId, f64)> = row.y.iter().map(|&(v, a)| (y[v], a)).collect();
            if relaxed {
                coeffs.push((slack[r], 1.0));
            }
            let rhs = match x {
                XSource::Fixed(xv) => row.d - xi_term - row.x.iter().map(|&(c, v)| v * xv[c]).sum::<f64>(),
                XSource::Vars(vars) => {
                    coeffs.extend(row.x.iter().map(|&(c, v)| (vars[c], v)));
                    row.d - xi_term
                }
            };
            model.add_row(format!("{tag}r{r}"), coeffs, RowSense::Ge, rhs)
        })
        .collect();
    Block { y, slack, rows }
}

/// Optimal recourse for one (x, ξ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecourseSolution {
    /// Indexed like [`StandardForm::yvars`].
    pub y: Vec<f64>,
    /// C_Y·Y in money units.
    pub objective: f64,
    /// π ≥ 0, one per standard-form row.
    pub duals: Vec<f64>,
}

/// Feasibility relaxation: recourse plus per-row slack, minimizing 1ᵀslack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRelaxSolution {
    pub y: Vec<f64>,
    pub slack: Vec<f64>,
    /// 1ᵀslack.
    pub violation: f64,
    /// 0 ≤ π ≤ 1.
    pub duals: Vec<f64>,
}

/// Production summary of a recourse solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductionSummary {
    pub old: f64,
    pub green_grid: f64,
    pub green_renewable: f64,
    pub unmet: f64,
}

impl ProductionSummary {
    pub fn total_production(&self) -> f64 {
        self.old + self.green_grid + self.green_renewable
    }

    /// Renewable-powered green share of production, in [0, 1]; 1 when
    /// nothing is produced.
    pub fn green_share(&self) -> f64 {
        let p = self.total_production();
        if p > 0.0 {
            self.green_renewable / p
        } else {
            1.0
        }
    }
}

pub fn summarize(sf: &StandardForm, y: &[f64]) -> ProductionSummary {
    let mut s = ProductionSummary::default();
    for (v, var) in sf.yvars.iter().enumerate() {
        let val = y[v].max(0.0);
        match var.kind {
            YKind::Old => s.old += val,
            YKind::GreenGrid => s.green_grid += val,
            YKind::GreenRenewable => s.green_renewable += val,
            YKind::Unmet => s.unmet += val,
        }
    }
    s
}

fn build_lp(sf: &StandardForm, x: &[f64], xi: &[f64], relaxed: bool) -> (Model, Block) {
    let mut m = Model::new(ObjSense::Minimize);
    let b = add_block(&mut m, sf, XSource::Fixed(x), xi, relaxed, 1.0, "");
    (m, b)
}

/// Solves the recourse LP at flattened first-stage vector `x` (see
/// [`XLayout::vector`]) and scenario `xi`.
pub fn solve_recourse_sf(solver: &Solver, sf: &StandardForm, x: &[f64], xi: &[f64]) -> Result<RecourseSolution, RecourseError> {
    let (m, b) = build_lp(sf, x, xi, false);
    let r = solver.solve(&m, &SolveOptions::default())?;
    match r.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(RecourseError::Infeasible),
        s => return Err(RecourseError::Status(s)),
    }
    let duals = r.duals()?;
    Ok(RecourseSolution {
        y: b.y.iter().map(|&v| r.value(v)).collect(),
        objective: r.objective,
        duals: b.rows.iter().map(|row| duals[row.index()]).collect(),
    })
}

pub fn solve_feasibility_sf(solver: &Solver, sf: &StandardForm, x: &[f64], xi: &[f64]) -> Result<FeasibilityRelaxSolution, RecourseError> {
    let (m, b) = build_lp(sf, x, xi, true);
    let r = solver.solve(&m, &SolveOptions::default())?;
    if r.status != SolveStatus::Optimal {
        return Err(RecourseError::Status(r.status));
    }
    let duals = r.duals()?;
    Ok(FeasibilityRelaxSolution {
        y: b.y.iter().map(|&v| r.value(v)).collect(),
        slack: b.slack.iter().map(|&v| r.value(v)).collect(),
        violation: r.objective.max(0.0),
        duals: b.rows.iter().map(|row| duals[row.index()]).collect(),
    })
}

/// Recourse with every row made elastic at unit price `penalty`. Equals the
/// recourse value whenever `penalty` exceeds the largest optimal dual.
pub fn solve_elastic_sf(
    solver: &Solver,
    sf: &StandardForm,
    x: &[f64],
    xi: &[f64],
    penalty: f64,
) -> Result<(f64, f64), RecourseError> {
    let mut m = Model::new(ObjSense::Minimize);
    let b = add_block(&mut m, sf, XSource::Fixed(x), xi, true, penalty, "");
    for (v, &id) in b.y.iter().enumerate() {
        m.set_cost(id, sf.cost[v]);
    }
    let r = solver.solve(&m, &SolveOptions::default())?;
    if r.status != SolveStatus::Optimal {
        return Err(RecourseError::Status(r.status));
    }
    let slack: f64 = b.slack.iter().map(|&v| r.value(v)).sum();
    Ok((r.objective, slack))
}

/// Q^s(x, ξ) for a decision.
pub fn solve_recourse(
    solver: &Solver,
    instance: &Instance,
    cluster: &ClusterSpec,
    x: &FirstStageDecision,
    xi: &[f64],
) -> Result<RecourseSolution, RecourseError> {
    let sf = assemble_standard_form(instance, cluster);
    solve_recourse_sf(solver, &sf, &sf.xlayout.vector(x), xi)
}

pub fn solve_feasibility(
    solver: &Solver,
    instance: &Instance,
    cluster: &ClusterSpec,
    x: &FirstStageDecision,
    xi: &[f64],
) -> Result<FeasibilityRelaxSolution, RecourseError> {
    let sf = assemble_standard_form(instance, cluster);
    solve_feasibility_sf(solver, &sf, &sf.xlayout.vector(x), xi)
}

/// Violation below this is treated as zero.
pub const FEAS_TOL: f64 = 1e-7;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{random_small, SmallInstanceSpec};

    fn tiny() -> Instance {
        let mut inst = random_small(
            &SmallInstanceSpec {
                factories: 1,
                capacities: 1,
                products: 1,
                periods: 1,
                green_target: 0.1,
                service_level: 0.99,
            },
            3,
        );
        inst.lines[0][0].initial = 1;
        inst
    }

    fn cluster_for(inst: &Instance, lo: f64, hi: f64) -> ClusterSpec {
        let n = inst.num_cells();
        ClusterSpec::with_boxes(inst, 400.0, vec![lo; n], vec![hi; n], vec![lo; n], vec![hi; n])
    }

    #[test]
    fn minimal_instance_row_count() {
        let inst = tiny();
        let sf = assemble_standard_form(&inst, &cluster_for(&inst, 0.0, 1.0));
        // 3 eligibility + 2 capacity + 1 share + 2 demand + 1 service + 1 energy
        assert_eq!(sf.num_rows(), 10);
        assert_eq!(sf.num_y(), 4);
    }

    #[test]
    fn row_count_formula() {
        let inst = random_small(&SmallInstanceSpec::default(), 5);
        let sf = assemble_standard_form(&inst, &cluster_for(&inst, 0.0, 1.0));
        let (ni, nj, nt, nk) = (2, 2, 3, 2);
        let pairs = inst.eligible_pairs().len();
        assert_eq!(sf.num_rows(), 3 * ni * pairs * nt + 2 * ni * nj * nt + 1 + 2 * nk * nt + nk * nt + ni * nt);
    }

    #[test]
    fn zero_target_share_row_is_vacuous() {
        let mut inst = tiny();
        inst.green_target = 0.0;
        let sf = assemble_standard_form(&inst, &cluster_for(&inst, 0.0, 1.0));
        let share = sf.rows.iter().find(|r| r.group == RowGroup::GreenShare).unwrap();
        assert_eq!(share.d, 0.0);
        assert!(share.y.iter().all(|&(v, a)| a >= 0.0 || sf.yvars[v].kind != YKind::GreenRenewable));
        let zero = vec![0.0; sf.num_y()];
        let lhs: f64 = share.y.iter().map(|&(v, a)| a * zero[v]).sum();
        assert!(lhs >= share.d);
    }

    #[test]
    fn zero_demand_costs_nothing() {
        let inst = tiny();
        let cl = cluster_for(&inst, 0.0, 10.0);
        let x = FirstStageDecision::hold_initial(&inst);
        let sol = solve_recourse(&Solver::default(), &inst, &cl, &x, &[0.0]).unwrap();
        assert!(sol.objective.abs() < 1e-12);
        assert!(sol.y.iter().all(|v| v.abs() < 1e-9));
    }
}
