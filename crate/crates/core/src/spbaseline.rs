//! Sample-average two-stage stochastic program used as a baseline.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccg::{add_first_stage, FirstStageVars};
use crate::climate::ClusterSpec;
use crate::codec::derive_seed;
use crate::instance::{strategic_breakdown_unchecked, FirstStageDecision, Instance, StrategicCost};
use crate::recourse::{add_block, assemble_standard_form, XLayout, XSource};
use crate::solverbridge::{Model, ObjSense, SolveOptions, SolveStatus, Solver, SolverError};
use crate::wesp::Scenario;

#[derive(Debug, Error)]
pub enum SpError {
    #[error("sample set is empty")]
    Empty,
    #[error("samples reference unknown cluster {0}")]
    UnknownCluster(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Uniform,
    TruncatedGaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerDescriptor {
    pub kind: SamplerKind,
    pub seed: u64,
    pub count: usize,
}

/// Draws `count` scenarios from the cluster box. Returns the scenarios and
/// the number of rejected Gaussian draws.
pub fn sample_counted(cluster: &ClusterSpec, kind: SamplerKind, count: usize, seed: u64) -> (Vec<Scenario>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cluster.num_cells();
    let mut rejected = 0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut xi = Vec::with_capacity(n);
        for c in 0..n {
            let (lo, hi) = (cluster.xi_lower[c], cluster.xi_upper[c]);
            if hi <= lo {
                xi.push(lo);
                continue;
            }
            match kind {
                SamplerKind::Uniform => xi.push(rng.gen_range(lo..=hi)),
                SamplerKind::TruncatedGaussian => {
                    let normal = Normal::new(0.5 * (lo + hi), (hi - lo) / 6.0).expect("positive spread");
                    loop {
                        let v = normal.sample(&mut rng);
                        if (lo..=hi).contains(&v) {
                            xi.push(v);
                            break;
                        }
                        rejected += 1;
                    }
                }
            }
        }
        out.push(xi);
    }
    (out, rejected)
}

pub fn sample(cluster: &ClusterSpec, kind: SamplerKind, count: usize, seed: u64) -> Vec<Scenario> {
    sample_counted(cluster, kind, count, seed).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSamples {
    pub cluster_id: usize,
    /// Weight of each scenario (q_s / |M_s|).
    pub weight: f64,
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub descriptor: SamplerDescriptor,
    pub clusters: Vec<ClusterSamples>,
}

impl SampleSet {
    /// `count` scenarios per cluster; per-cluster seeds derive from `seed`.
    pub fn draw(clusters: &[ClusterSpec], kind: SamplerKind, count: usize, seed: u64) -> Self {
        Self {
            descriptor: SamplerDescriptor { kind, seed, count },
            clusters: clusters
                .iter()
                .map(|c| ClusterSamples {
                    cluster_id: c.id,
                    weight: c.probability / count.max(1) as f64,
                    scenarios: sample(c, kind, count, derive_seed(seed, c.id as u64, 0x5a)),
                })
                .collect(),
        }
    }

    /// One scenario per cluster with the cluster's probability.
    pub fn single(clusters: &[ClusterSpec], scenarios: Vec<Scenario>) -> Self {
        Self {
            descriptor: SamplerDescriptor {
                kind: SamplerKind::Uniform,
                seed: 0,
                count: 1,
            },
            clusters: clusters
                .iter()
                .zip(scenarios)
                .map(|(c, s)| ClusterSamples {
                    cluster_id: c.id,
                    weight: c.probability,
                    scenarios: vec![s],
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.iter().map(|c| c.scenarios.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every cluster's empirical mean lies in its moment window.
    pub fn means_in_window(&self, clusters: &[ClusterSpec], tol: f64) -> bool {
        self.clusters.iter().all(|cs| {
            let Some(cl) = clusters.iter().find(|c| c.id == cs.cluster_id) else {
                return false;
            };
            let m = cs.scenarios.len() as f64;
            (0..cl.num_cells()).all(|c| {
                let mean = cs.scenarios.iter().map(|s| s[c]).sum::<f64>() / m;
                mean >= cl.gamma_lower[c] - tol && mean <= cl.gamma_upper[c] + tol
            })
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaaStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaaOutcome {
    pub status: SaaStatus,
    pub x: Option<FirstStageDecision>,
    pub objective: Option<f64>,
    pub strategic: Option<StrategicCost>,
    /// Recourse cost per sampled scenario, `[cluster][m]`.
    pub recourse: Vec<Vec<f64>>,
    pub seconds: f64,
    pub descriptor: SamplerDescriptor,
}

/// Extensive-form MILP over every sampled scenario.
pub fn solve_saa(
    solver: &Solver,
    instance: &Instance,
    clusters: &[ClusterSpec],
    samples: &SampleSet,
    time_limit: Option<f64>,
) -> Result<SaaOutcome, SpError> {
    if samples.is_empty() {
        return Err(SpError::Empty);
    }
    let start = Instant::now();
    let mut m = Model::new(ObjSense::Minimize);
    let fs: FirstStageVars = add_first_stage(&mut m, instance);
    let xvars = fs.linked(&XLayout::of(instance));
    let mut blocks = Vec::new();
    for cs in &samples.clusters {
        let cl = clusters
            .iter()
            .find(|c| c.id == cs.cluster_id)
            .ok_or(SpError::UnknownCluster(cs.cluster_id))?;
        let sf = assemble_standard_form(instance, cl);
        let mut per = Vec::new();
        for (q, xi) in cs.scenarios.iter().enumerate() {
            let b = add_block(&mut m, &sf, XSource::Vars(&xvars), xi, false, cs.weight, &format!("s{}_{q}_", cl.id));
            per.push(b);
        }
        blocks.push((sf, per));
    }
    let opts = SolveOptions {
        mip_rel_gap: 1e-9,
        mip_abs_gap: 1e-6,
        time_limit,
    };
    let r = solver.solve(&m, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    let status = match r.status {
        SolveStatus::Optimal => SaaStatus::Optimal,
        SolveStatus::Infeasible => SaaStatus::Infeasible,
        _ => SaaStatus::TimeLimit,
    };
    if status != SaaStatus::Optimal {
        return Ok(SaaOutcome {
            status,
            x: None,
            objective: None,
            strategic: None,
            recourse: Vec::new(),
            seconds,
            descriptor: samples.descriptor.clone(),
        });
    }
    let x = fs.extract(&r);
    let recourse = blocks
        .iter()
        .map(|(sf, per)| {
            per.iter()
                .map(|b| b.y.iter().zip(&sf.cost).map(|(&v, &c)| r.value(v) * c).sum())
                .collect()
        })
        .collect();
    Ok(SaaOutcome {
        status,
        strategic: Some(strategic_breakdown_unchecked(instance, &x)),
        x: Some(x),
        objective: Some(r.objective),
        recourse,
        seconds,
        descriptor: samples.descriptor.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl(lo: f64, hi: f64) -> ClusterSpec {
        ClusterSpec {
            id: 0,
            probability: 1.0,
            members: 1,
            total: 1,
            sunshine: vec![vec![1.0]],
            xi_lower: vec![lo, 3.0],
            xi_upper: vec![hi, 3.0],
            gamma_lower: vec![lo, 3.0],
            gamma_upper: vec![hi, 3.0],
        }
    }

    #[test]
    fn degenerate_cells_are_constant_and_seeded() {
        for kind in [SamplerKind::Uniform, SamplerKind::TruncatedGaussian] {
            let s = sample(&cl(1.0, 2.0), kind, 50, 7);
            assert!(s.iter().all(|x| x[1] == 3.0 && (1.0..=2.0).contains(&x[0])));
            assert_eq!(s, sample(&cl(1.0, 2.0), kind, 50, 7));
        }
    }
}
