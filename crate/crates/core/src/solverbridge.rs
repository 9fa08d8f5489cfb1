//! Backend-neutral linear and mixed-integer model representation.
//!
//! Every model in the crate is assembled as a [`Model`] and handed to a
//! [`Solver`], which forwards it to a concrete [`Backend`]. The only backend
//! shipped is HiGHS. Duals follow one convention regardless of the objective
//! sense: a row dual is the derivative of the optimal objective with respect
//! to that row's right-hand side.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use highs::{HighsModelStatus, RowProblem, Sense as HighsSense};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Primal feasibility and strong-duality tolerance for LPs.
pub const LP_TOL: f64 = 1e-6;
/// Relative gap used for pricing MILPs. Pricing decides whether a column is
/// added, so it is solved to (numerical) optimality.
pub const PRICING_MIP_GAP: f64 = 1e-9;
/// Default relative gap for master MILPs.
pub const MASTER_MIP_GAP: f64 = 1e-6;
/// Environment variable consulted when no backend is named explicitly.
pub const SOLVER_ENV: &str = "GREENCAP_SOLVER";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver backend `{0}` is not available")]
    BackendUnavailable(String),
    #[error("backend returned no usable status: {0}")]
    NumericalFailure(String),
    #[error("dual values requested from a model with integer variables")]
    DualsOnMip,
    #[error("dual values unavailable: model status is {0}")]
    DualsUnavailable(SolveStatus),
    #[error("model has no variables")]
    EmptyModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A linear model: variables with bounds, linear rows, linear objective.
///
/// Variable and row identifiers are positional and therefore unique.
#[derive(Clone, Debug)]
pub struct Model {
    sense: ObjSense,
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
    objective_offset: f64,
}

impl Model {
    pub fn new(sense: ObjSense) -> Self {
        Self {
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
            objective_offset: 0.0,
        }
    }

    pub fn sense(&self) -> ObjSense {
        self.sense
    }

    /// Adds a variable. Panics when `lower > upper`.
    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> VarId {
        let name = name.into();
        assert!(
            lower <= upper,
            "variable `{name}` has lower bound {lower} above upper bound {upper}"
        );
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable {
            name,
            kind,
            lower,
            upper,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper, cost)
    }

    /// Adds a row. Zero coefficients are dropped and repeated variables merged.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> RowId {
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, c) in coeffs {
            assert!(v.0 < self.vars.len(), "row references unknown variable {v:?}");
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some((_, acc)) => *acc += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        self.rows.push(Constraint {
            name: name.into(),
            coeffs: merged,
            sense,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.vars[var.0].cost = cost;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        assert!(lower <= upper, "invalid bounds [{lower}, {upper}]");
        self.vars[var.0].lower = lower;
        self.vars[var.0].upper = upper;
    }

    /// Constant added to the reported objective value.
    pub fn set_objective_offset(&mut self, offset: f64) {
        self.objective_offset = offset;
    }

    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_mip(&self) -> bool {
        self.vars.iter().any(|v| v.kind != VarKind::Continuous)
    }

    /// Row activity for a primal vector.
    pub fn row_activity(&self, row: RowId, primal: &[f64]) -> f64 {
        self.rows[row.0]
            .coeffs
            .iter()
            .map(|(v, c)| c * primal[v.0])
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::TimeLimit => "time-limit",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Wall-clock limit in seconds; `None` means unlimited.
    pub time_limit: Option<f64>,
    pub mip_rel_gap: f64,
    pub mip_abs_gap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: None,
            mip_rel_gap: MASTER_MIP_GAP,
            mip_abs_gap: 1e-9,
        }
    }
}

impl SolveOptions {
    pub fn pricing() -> Self {
        Self {
            mip_rel_gap: PRICING_MIP_GAP,
            mip_abs_gap: 1e-10,
            ..Self::default()
        }
    }

    pub fn with_time_limit(mut self, seconds: Option<f64>) -> Self {
        self.time_limit = seconds;
        self
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective including the model's offset; NaN when no solution exists.
    pub objective: f64,
    pub primal: Vec<f64>,
    duals: Option<Vec<f64>>,
    reduced_costs: Option<Vec<f64>>,
    pub wall_seconds: f64,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn has_solution(&self) -> bool {
        !self.primal.is_empty()
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.primal[var.0]
    }

    /// All row duals. Fails for integer models and non-optimal statuses.
    pub fn duals(&self) -> Result<&[f64], SolverError> {
        self.duals.as_deref().ok_or(match self.status {
            SolveStatus::Optimal => SolverError::DualsOnMip,
            other => SolverError::DualsUnavailable(other),
        })
    }

    pub fn dual(&self, row: RowId) -> Result<f64, SolverError> {
        Ok(self.duals()?[row.0])
    }

    pub fn reduced_costs(&self) -> Result<&[f64], SolverError> {
        self.reduced_costs.as_deref().ok_or(match self.status {
            SolveStatus::Optimal => SolverError::DualsOnMip,
            other => SolverError::DualsUnavailable(other),
        })
    }

    /// Dual objective `Σ y·rhs + Σ d·bound + offset` of an optimal LP.
    pub fn dual_objective(&self, model: &Model) -> Result<f64, SolverError> {
        let duals = self.duals()?;
        let rc = self.reduced_costs()?;
        let mut total = model.objective_offset();
        for (row, y) in model.rows().iter().zip(duals) {
            total += y * row.rhs;
        }
        for ((var, d), x) in model.vars().iter().zip(rc).zip(&self.primal) {
            if d.abs() <= 1e-12 {
                continue;
            }
            let at_lower = var.lower.is_finite() && (x - var.lower).abs() <= (x - var.upper).abs();
            let bound = if at_lower { var.lower } else { var.upper };
            total += d * bound;
        }
        Ok(total)
    }
}

/// A concrete LP/MIP engine.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, model: &Model, options: &SolveOptions) -> Result<SolveResult, SolverError>;
}

/// HiGHS, configured single-threaded with a fixed seed so that repeated
/// solves of the same model are reproducible.
#[derive(Clone, Copy, Debug, Default)]
pub struct HighsBackend;

impl HighsBackend {
    fn run(
        &self,
        model: &Model,
        options: &SolveOptions,
        zero_objective: bool,
    ) -> Result<highs::SolvedModel, SolverError> {
        let mut problem = RowProblem::default();
        let cols: Vec<highs::Col> = model
            .vars()
            .iter()
            .map(|v| {
                let cost = if zero_objective { 0.0 } else { v.cost };
                let integral = v.kind != VarKind::Continuous;
                problem.add_column_with_integrality(cost, v.lower..=v.upper, integral)
            })
            .collect();
        for row in model.rows() {
            let coeffs: Vec<(highs::Col, f64)> = row.coeffs.iter().map(|(v, c)| (cols[v.0], *c)).collect();
            match row.sense {
                RowSense::Le => problem.add_row(..=row.rhs, &coeffs),
                RowSense::Ge => problem.add_row(row.rhs.., &coeffs),
                RowSense::Eq => problem.add_row(row.rhs..=row.rhs, &coeffs),
            }
        }
        let sense = match model.sense() {
            ObjSense::Minimize => HighsSense::Minimise,
            ObjSense::Maximize => HighsSense::Maximise,
        };
        let mut hm = problem
            .try_optimise(sense)
            .map_err(|e| SolverError::NumericalFailure(format!("{e:?}")))?;
        hm.make_quiet();
        hm.set_option("threads", 1);
        hm.set_option("random_seed", 0);
        hm.set_option("mip_rel_gap", options.mip_rel_gap);
        hm.set_option("mip_abs_gap", options.mip_abs_gap);
        hm.set_option("primal_feasibility_tolerance", 1e-9);
        hm.set_option("dual_feasibility_tolerance", 1e-9);
        hm.set_option("mip_feasibility_tolerance", 1e-9);
        if let Some(limit) = options.time_limit {
            hm.set_option("time_limit", limit.max(0.0));
        }
        hm.try_solve()
            .map_err(|e| SolverError::NumericalFailure(format!("{e:?}")))
    }
}

impl Backend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, model: &Model, options: &SolveOptions) -> Result<SolveResult, SolverError> {
        if model.num_vars() == 0 {
            return Err(SolverError::EmptyModel);
        }
        let started = Instant::now();
        let solved = self.run(model, options, false)?;
        let raw_status = solved.status();
        let status = match raw_status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::UnboundedOrInfeasible => {
                // Disambiguate by checking feasibility alone.
                let probe = self.run(model, options, true)?;
                match probe.status() {
                    HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                        SolveStatus::Infeasible
                    }
                    _ => SolveStatus::Unbounded,
                }
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit => SolveStatus::TimeLimit,
            other => return Err(SolverError::NumericalFailure(format!("{other:?}"))),
        };
        let has_primal = matches!(
            solved.primal_solution_status(),
            highs::HighsSolutionStatus::Feasible
        );
        let (primal, objective) = if status == SolveStatus::Optimal || (status == SolveStatus::TimeLimit && has_primal) {
            let sol = solved.get_solution();
            (sol.columns().to_vec(), solved.objective_value() + model.objective_offset())
        } else {
            (Vec::new(), f64::NAN)
        };
        let (duals, reduced_costs) = if status == SolveStatus::Optimal && !model.is_mip() {
            // HiGHS reports row duals as d(objective)/d(rhs) for both senses.
            let sol = solved.get_solution();
            (
                Some(sol.dual_rows().to_vec()),
                Some(sol.dual_columns().to_vec()),
            )
        } else {
            (None, None)
        };
        Ok(SolveResult {
            status,
            objective,
            primal,
            duals,
            reduced_costs,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

/// Resolves a backend by name.
pub fn backend_by_name(name: &str) -> Result<Arc<dyn Backend>, SolverError> {
    match name.to_ascii_lowercase().as_str() {
        "highs" => Ok(Arc::new(HighsBackend)),
        other => Err(SolverError::BackendUnavailable(other.to_string())),
    }
}

/// Cheap-to-clone handle to a backend; all model solves go through it.
#[derive(Clone)]
pub struct Solver {
    backend: Arc<dyn Backend>,
}

impl fmt::Debug for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Solver").field("backend", &self.backend.name()).finish()
    }
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            backend: Arc::new(HighsBackend),
        }
    }
}

impl Solver {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self { backend }
    }

    pub fn by_name(name: &str) -> Result<Self, SolverError> {
        backend_by_name(name).map(Self::new)
    }

    /// Backend named by `GREENCAP_SOLVER`, or HiGHS when unset.
    pub fn from_env() -> Result<Self, SolverError> {
        match std::env::var(SOLVER_ENV) {
            Ok(name) if !name.trim().is_empty() => Self::by_name(name.trim()),
            _ => Ok(Self::default()),
        }
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn solve(&self, model: &Model, options: &SolveOptions) -> Result<SolveResult, SolverError> {
        let result = self.backend.solve(model, options)?;
        log::trace!(
            "solve backend={} vars={} rows={} status={} obj={} t={:.4}",
            self.backend.name(),
            model.num_vars(),
            model.num_rows(),
            result.status,
            result.objective,
            result.wall_seconds
        );
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver() -> Solver {
        Solver::default()
    }

    #[test]
    fn one_variable_lp_has_unit_dual() {
        let mut m = Model::new(ObjSense::Minimize);
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let r = m.add_row("lb", [(x, 1.0)], RowSense::Ge, 3.0);
        let res = solver().solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.objective - 3.0).abs() < 1e-9);
        assert!((res.dual(r).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = Model::new(ObjSense::Maximize);
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        m.add_row("ub", [(x, 1.0)], RowSense::Le, 0.0);
        m.add_row("lb", [(x, 1.0)], RowSense::Ge, 1.0);
        let res = solver().solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
        assert!(res.duals().is_err());
    }

    #[test]
    fn zero_objective_over_box() {
        let mut m = Model::new(ObjSense::Minimize);
        m.add_continuous("x", 0.0, 1.0, 0.0);
        let res = solver().solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.objective, 0.0);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut m = Model::new(ObjSense::Maximize);
        let x = m.add_continuous("x", 0.0, f64::INFINITY, 1.0);
        m.add_row("r", [(x, 1.0)], RowSense::Ge, 1.0);
        let res = solver().solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Unbounded);
    }

    #[test]
    fn maximization_duals_are_rhs_sensitivities() {
        // max x + y  s.t. x + 2y <= 4, x <= 3  ->  x = 3, y = 0.5, obj 3.5
        let mut m = Model::new(ObjSense::Maximize);
        let x = m.add_continuous("x", 0.0, f64::INFINITY, 1.0);
        let y = m.add_continuous("y", 0.0, f64::INFINITY, 1.0);
        let r1 = m.add_row("r1", [(x, 1.0), (y, 2.0)], RowSense::Le, 4.0);
        let r2 = m.add_row("r2", [(x, 1.0)], RowSense::Le, 3.0);
        let res = solver().solve(&m, &SolveOptions::default()).unwrap();
        assert!((res.objective - 3.5).abs() < 1e-9);
        assert!((res.dual(r1).unwrap() - 0.5).abs() < 1e-9);
        assert!((res.dual(r2).unwrap() - 0.5).abs() < 1e-9);
        let dual_obj = res.dual_objective(&m).unwrap();
        assert!((dual_obj - res.objective).abs() < LP_TOL);
    }

    #[test]
    fn mip_rejects_dual_queries() {
        let mut m = Model::new(ObjSense::Minimize);
        let x = m.add_var("x", VarKind::Integer, 0.0, 10.0, 1.0);
        let r = m.add_row("r", [(x, 1.0)], RowSense::Ge, 2.5);
        let res = solver().solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.objective - 3.0).abs() < 1e-9);
        assert!(matches!(res.dual(r), Err(SolverError::DualsOnMip)));
    }

    #[test]
    fn resolve_is_deterministic() {
        let mut m = Model::new(ObjSense::Minimize);
        let vars: Vec<_> = (0..6)
            .map(|i| m.add_var(format!("x{i}"), VarKind::Integer, 0.0, 5.0, 1.0 + i as f64 * 0.1))
            .collect();
        m.add_row("cover", vars.iter().map(|v| (*v, 1.0)), RowSense::Ge, 7.5);
        let a = solver().solve(&m, &SolveOptions::default()).unwrap();
        let b = solver().solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.primal, b.primal);
    }

    #[test]
    fn unknown_backend_is_unavailable() {
        assert!(matches!(
            Solver::by_name("cplex"),
            Err(SolverError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn empty_model_is_rejected() {
        let m = Model::new(ObjSense::Minimize);
        assert!(matches!(
            solver().solve(&m, &SolveOptions::default()),
            Err(SolverError::EmptyModel)
        ));
    }

    #[test]
    #[should_panic]
    fn inverted_bounds_panic() {
        let mut m = Model::new(ObjSense::Minimize);
        m.add_continuous("x", 2.0, 1.0, 0.0);
    }
}
