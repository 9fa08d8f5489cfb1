//! Fixed-plan evaluation under worst-case or sampled distributions, and
//! side-by-side comparison of reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccg::{evaluate_clusters, CcgError, CcgOptions, CutSets};
use crate::climate::ClusterSpec;
use crate::instance::{strategic_breakdown, FirstStageDecision, Instance, InstanceError, StrategicCost};
use crate::recourse::{assemble_standard_form, solve_recourse_sf, summarize, RecourseError};
use crate::solverbridge::Solver;
use crate::spbaseline::SampleSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Decision(#[from] InstanceError),
    #[error(transparent)]
    Subproblem(#[from] CcgError),
    #[error(transparent)]
    Recourse(#[from] RecourseError),
    #[error("samples reference unknown cluster {0}")]
    UnknownCluster(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub cluster_id: usize,
    pub feasible: bool,
    /// Worst-case expected violation (worst-case mode) or infeasible
    /// scenario count (sampled mode).
    pub violation: f64,
    /// Expected recourse cost under the evaluated distribution.
    pub value: Option<f64>,
}

/// Recourse outcome of one evaluated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetric {
    pub cluster_id: usize,
    pub weight: f64,
    pub cost: f64,
    /// Percent of production that is renewable-powered green.
    pub green_penetration: f64,
    pub unmet: f64,
    pub demand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `worst-case` or the sample set's descriptor.
    pub distribution: String,
    pub feasible: bool,
    pub strategic: StrategicCost,
    pub tactical: Option<f64>,
    pub total: Option<f64>,
    /// Percent, probability-weighted over scenarios.
    pub green_penetration: Option<f64>,
    /// Percent, `100·(1 − ΣE[unmet] / ΣE[demand])`.
    pub service_level: Option<f64>,
    pub clusters: Vec<ClusterVerdict>,
    pub scenarios: usize,
    pub infeasible_scenarios: usize,
    pub per_scenario: Vec<ScenarioMetric>,
}

fn finish(distribution: String, strategic: StrategicCost, clusters: Vec<ClusterVerdict>, per: Vec<ScenarioMetric>, infeasible: usize, scenarios: usize) -> EvaluationReport {
    let feasible = infeasible == 0 && clusters.iter().all(|c| c.feasible);
    let tactical = if feasible {
        Some(per.iter().map(|m| m.weight * m.cost).sum::<f64>())
    } else {
        None
    };
    let (mut green, mut unmet, mut demand, mut wsum) = (0.0, 0.0, 0.0, 0.0);
    for m in &per {
        green += m.weight * m.green_penetration;
        unmet += m.weight * m.unmet;
        demand += m.weight * m.demand;
        wsum += m.weight;
    }
    let metrics = feasible && wsum > 0.0;
    EvaluationReport {
        distribution,
        feasible,
        total: tactical.map(|t| strategic.total() + t),
        strategic,
        tactical,
        green_penetration: metrics.then(|| green / wsum),
        service_level: (metrics && demand > 0.0).then(|| 100.0 * (1.0 - unmet / demand)),
        clusters,
        scenarios,
        infeasible_scenarios: infeasible,
        per_scenario: per,
    }
}

/// Worst-case check per cluster; metrics come from recourse solutions on
/// the worst-case distributions' supports.
pub fn evaluate_worstcase(
    solver: &Solver,
    instance: &Instance,
    clusters: &[ClusterSpec],
    x: &FirstStageDecision,
) -> Result<EvaluationReport, EvalError> {
    let strategic = strategic_breakdown(instance, x)?;
    let opts = CcgOptions {
        workers: 1,
        ..CcgOptions::default()
    };
    let results = evaluate_clusters(solver, instance, clusters, x, &CutSets::empty(clusters.len()), None, false, &opts)?;
    let mut verdicts = Vec::new();
    let mut per = Vec::new();
    let mut scenarios = 0;
    for r in &results {
        let cl = &clusters[r.cluster];
        verdicts.push(ClusterVerdict {
            cluster_id: cl.id,
            feasible: r.value.is_some(),
            violation: r.violation,
            value: r.value,
        });
        scenarios += r.distribution.len();
        if r.value.is_none() {
            continue;
        }
        let sf = assemble_standard_form(instance, cl);
        let xv = sf.xlayout.vector(x);
        for (xi, &p) in r.distribution.scenarios.iter().zip(&r.distribution.probabilities) {
            let sol = solve_recourse_sf(solver, &sf, &xv, xi)?;
            let s = summarize(&sf, &sol.y);
            per.push(ScenarioMetric {
                cluster_id: cl.id,
                weight: cl.probability * p,
                cost: sol.objective,
                green_penetration: 100.0 * s.green_share(),
                unmet: s.unmet,
                demand: xi.iter().sum(),
            });
        }
    }
    Ok(finish("worst-case".into(), strategic, verdicts, per, 0, scenarios))
}

/// Recourse solved per sampled scenario, weighted by sample weights.
pub fn evaluate_sampled(
    solver: &Solver,
    instance: &Instance,
    clusters: &[ClusterSpec],
    x: &FirstStageDecision,
    samples: &SampleSet,
) -> Result<EvaluationReport, EvalError> {
    let strategic = strategic_breakdown(instance, x)?;
    let mut verdicts = Vec::new();
    let mut per = Vec::new();
    let mut infeasible = 0;
    for cs in &samples.clusters {
        let cl = clusters
            .iter()
            .find(|c| c.id == cs.cluster_id)
            .ok_or(EvalError::UnknownCluster(cs.cluster_id))?;
        let sf = assemble_standard_form(instance, cl);
        let xv = sf.xlayout.vector(x);
        let mut bad = 0;
        let mut value = 0.0;
        for xi in &cs.scenarios {
            match solve_recourse_sf(solver, &sf, &xv, xi) {
                Ok(sol) => {
                    let s = summarize(&sf, &sol.y);
                    value += sol.objective / cs.scenarios.len() as f64;
                    per.push(ScenarioMetric {
                        cluster_id: cl.id,
                        weight: cs.weight,
                        cost: sol.objective,
                        green_penetration: 100.0 * s.green_share(),
                        unmet: s.unmet,
                        demand: xi.iter().sum(),
                    });
                }
                Err(RecourseError::Infeasible) => bad += 1,
                Err(e) => return Err(e.into()),
            }
        }
        infeasible += bad;
        verdicts.push(ClusterVerdict {
            cluster_id: cl.id,
            feasible: bad == 0,
            violation: bad as f64,
            value: (bad == 0).then_some(value),
        });
    }
    let d = &samples.descriptor;
    let label = format!("{:?}-n{}-seed{}", d.kind, d.count, d.seed).to_lowercase();
    Ok(finish(label, strategic, verdicts, per, infeasible, samples.len()))
}

// ---------------------------------------------------------------------------
// Comparison.

/// Reports of one method across a family of instances, aligned by index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodReports {
    pub label: String,
    pub reports: Vec<Option<EvaluationReport>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub instances: usize,
    pub feasible: usize,
    /// Instances feasible for both this method and the reference.
    pub jointly_feasible: usize,
    pub total: Option<f64>,
    pub strategic: Option<f64>,
    pub tactical: Option<f64>,
    pub green_penetration: Option<f64>,
    pub service_level: Option<f64>,
    /// `total − reference total` over the jointly feasible instances.
    pub total_delta: Option<f64>,
}

/// Metric table with averages over instances where the first (reference)
/// method is feasible.
pub fn compare(methods: &[MethodReports]) -> Vec<ComparisonRow> {
    let Some(reference) = methods.first() else {
        return Vec::new();
    };
    let ok = |r: &Option<EvaluationReport>| r.as_ref().is_some_and(|r| r.feasible);
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    methods
        .iter()
        .map(|m| {
            let joint: Vec<usize> = (0..m.reports.len())
                .filter(|&i| ok(&m.reports[i]) && reference.reports.get(i).is_some_and(ok))
                .collect();
            let pick = |f: &dyn Fn(&EvaluationReport) -> Option<f64>| {
                mean(joint.iter().filter_map(|&i| m.reports[i].as_ref().and_then(f)).collect())
            };
            let deltas: Vec<f64> = joint
                .iter()
                .filter_map(|&i| {
                    let a = m.reports[i].as_ref()?.total?;
                    let b = reference.reports[i].as_ref()?.total?;
                    Some(a - b)
                })
                .collect();
            ComparisonRow {
                label: m.label.clone(),
                instances: m.reports.len(),
                feasible: m.reports.iter().filter(|r| ok(r)).count(),
                jointly_feasible: joint.len(),
                total: pick(&|r| r.total),
                strategic: pick(&|r| Some(r.strategic.total())),
                tactical: pick(&|r| r.tactical),
                green_penetration: pick(&|r| r.green_penetration),
                service_level: pick(&|r| r.service_level),
                total_delta: mean(deltas),
            }
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    let mut s = String::from(
        "method,instances,feasible,jointly_feasible,total,strategic,tactical,green_penetration,service_level,total_delta\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.label,
            r.instances,
            r.feasible,
            r.jointly_feasible,
            f(r.total),
            f(r.strategic),
            f(r.tactical),
            f(r.green_penetration),
            f(r.service_level),
            f(r.total_delta)
        ));
    }
    s
}
