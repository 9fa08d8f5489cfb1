//! Generated scenario images as initial CG columns.
//!
//! Providers hand back images for a (plan, cluster) pair. Two transports
//! exist: a directory drop (`<root>/cluster_<id>/*.pbm`) and an HTTP
//! endpoint taking `{cluster_id, feature}` and answering
//! `{cluster_id, images, provenance}` with PBM text images. Provider
//! failures never stop a solve; the CG simply starts from its defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::climate::ClusterSpec;
use crate::codec::{build_feature, decode_image, list_pbm, CodecError, PcaModel, ScenarioImage};
use crate::instance::{FirstStageDecision, Instance};
use crate::wesp::{
    default_columns, push_unique, solve_master, tightness_over, CgReport, ColumnOracle, DiscreteDistribution, Mode,
    Scenario, WespError,
};
use crate::solverbridge::Solver;

#[derive(Debug, Error)]
pub enum WarmstartError {
    #[error("no valid images for cluster {0}")]
    NoValidImages(usize),
    #[error("provider request failed: {0}")]
    Transport(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedBatch {
    pub cluster_id: usize,
    pub feature: Option<Vec<f64>>,
    pub images: Vec<ScenarioImage>,
    pub provenance: String,
}

/// Keeps images whose shape fits the cluster, warning about the rest.
fn validated(cluster: &ClusterSpec, candidates: Vec<(String, Result<ScenarioImage, CodecError>)>) -> Vec<ScenarioImage> {
    let n = cluster.num_cells();
    let mut out = Vec::new();
    for (name, img) in candidates {
        match img {
            Ok(img) if img.cols == n && !img.rows.is_empty() => out.push(img),
            Ok(img) => log::warn!("{name}: {} columns for {n} cells; dropped", img.cols),
            Err(e) => log::warn!("{name}: {e}; dropped"),
        }
    }
    out
}

/// Reads every `*.pbm` in `dir` for one cluster.
pub fn load_batch(dir: &Path, cluster: &ClusterSpec) -> Result<GeneratedBatch, WarmstartError> {
    let files = if dir.is_dir() { list_pbm(dir)? } else { Vec::new() };
    let candidates = files
        .into_iter()
        .map(|p| (p.display().to_string(), ScenarioImage::read(&p)))
        .collect();
    let images = validated(cluster, candidates);
    if images.is_empty() {
        return Err(WarmstartError::NoValidImages(cluster.id));
    }
    Ok(GeneratedBatch {
        cluster_id: cluster.id,
        feature: None,
        images,
        provenance: "file".into(),
    })
}

/// Decoded distinct corners followed by the default seed columns.
pub fn to_initial_columns(batch: &GeneratedBatch, cluster: &ClusterSpec) -> Vec<Scenario> {
    let mut cols = Vec::new();
    for img in &batch.images {
        match decode_image(img, cluster) {
            Ok(s) => {
                for xi in s {
                    push_unique(&mut cols, xi);
                }
            }
            Err(e) => log::warn!("cluster {}: {e}; image skipped", cluster.id),
        }
    }
    for xi in default_columns(cluster) {
        push_unique(&mut cols, xi);
    }
    cols
}

/// Source of initial columns. Must tolerate concurrent calls.
pub trait ScenarioProvider: Send + Sync {
    fn columns(&self, instance: &Instance, cluster: &ClusterSpec, x: &FirstStageDecision) -> Vec<Scenario>;
}

/// Reads `<root>/cluster_<id>/*.pbm`.
#[derive(Clone, Debug)]
pub struct FileDropProvider {
    pub root: PathBuf,
}

impl FileDropProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn cluster_dir(&self, cluster_id: usize) -> PathBuf {
        self.root.join(format!("cluster_{cluster_id}"))
    }
}

impl ScenarioProvider for FileDropProvider {
    fn columns(&self, _: &Instance, cluster: &ClusterSpec, _: &FirstStageDecision) -> Vec<Scenario> {
        match load_batch(&self.cluster_dir(cluster.id), cluster) {
            Ok(b) => to_initial_columns(&b, cluster),
            Err(e) => {
                log::debug!("file drop: {e}");
                Vec::new()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmstartRequest {
    pub cluster_id: usize,
    pub feature: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmstartResponse {
    pub cluster_id: usize,
    /// PBM text per image.
    pub images: Vec<String>,
    #[serde(default)]
    pub provenance: String,
}

/// POSTs the projected feature of (plan, cluster) to `url`.
pub struct HttpProvider {
    pub url: String,
    pub pca: PcaModel,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, pca: PcaModel, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            pca,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn fetch(&self, instance: &Instance, cluster: &ClusterSpec, x: &FirstStageDecision) -> Result<GeneratedBatch, WarmstartError> {
        let feature = build_feature(x, instance, cluster, &self.pca)?;
        let req = WarmstartRequest {
            cluster_id: cluster.id,
            feature: feature.clone(),
        };
        let resp: WarmstartResponse = self
            .agent
            .post(&self.url)
            .send_json(&req)
            .map_err(|e| WarmstartError::Transport(e.to_string()))?
            .into_json()
            .map_err(|e| WarmstartError::Transport(e.to_string()))?;
        if resp.cluster_id != cluster.id {
            return Err(WarmstartError::Transport(format!(
                "asked for cluster {}, got {}",
                cluster.id, resp.cluster_id
            )));
        }
        let candidates = resp
            .images
            .iter()
            .enumerate()
            .map(|(n, t)| (format!("response image {n}"), ScenarioImage::from_pbm(t)))
            .collect();
        let images = validated(cluster, candidates);
        if images.is_empty() {
            return Err(WarmstartError::NoValidImages(cluster.id));
        }
        Ok(GeneratedBatch {
            cluster_id: cluster.id,
            feature: Some(feature),
            images,
            provenance: if resp.provenance.is_empty() { "http".into() } else { resp.provenance },
        })
    }
}

impl ScenarioProvider for HttpProvider {
    fn columns(&self, instance: &Instance, cluster: &ClusterSpec, x: &FirstStageDecision) -> Vec<Scenario> {
        match self.fetch(instance, cluster, x) {
            Ok(b) => to_initial_columns(&b, cluster),
            Err(e) => {
                log::warn!("warm-start endpoint: {e}");
                Vec::new()
            }
        }
    }
}

/// Fixed column list, mostly for tests and replay.
#[derive(Clone, Debug, Default)]
pub struct StaticProvider {
    /// Columns per cluster id.
    pub columns: Vec<(usize, Vec<Scenario>)>,
}

impl ScenarioProvider for StaticProvider {
    fn columns(&self, _: &Instance, cluster: &ClusterSpec, _: &FirstStageDecision) -> Vec<Scenario> {
        self.columns
            .iter()
            .filter(|(id, _)| *id == cluster.id)
            .flat_map(|(_, c)| c.clone())
            .collect()
    }
}

/// Optimality-mode master over `columns` only, with no pricing. Infeasible
/// columns are dropped.
pub fn restricted_report(
    solver: &Solver,
    instance: &Instance,
    cluster: &ClusterSpec,
    x: &FirstStageDecision,
    columns: &[Scenario],
) -> Result<CgReport, WespError> {
    let mut oracle = ColumnOracle::new(solver, instance, cluster, x, Mode::Optimality);
    let mut kept = Vec::new();
    let mut values = Vec::new();
    for xi in columns {
        if kept.contains(xi) {
            continue;
        }
        if let Some(v) = oracle.value(xi)? {
            kept.push(xi.clone());
            values.push(v);
        }
    }
    if kept.is_empty() {
        return Err(WespError::MasterInfeasible);
    }
    let m = solve_master(solver, &kept, &values, cluster)?;
    let mut dist = DiscreteDistribution::default();
    for (i, &p) in m.probabilities.iter().enumerate() {
        if p > 1e-10 {
            dist.scenarios.push(kept[i].clone());
            dist.probabilities.push(p);
        }
    }
    Ok(CgReport {
        mode: Mode::Optimality,
        value: m.value,
        distribution: dist,
        prices: m.prices,
        iterations: 0,
        trace: Vec::new(),
        column_probabilities: m.probabilities,
        columns: kept,
        column_values: values,
        priced: Vec::new(),
        dual_cap: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateBound {
    /// `-inf` when no distribution over the columns fits the window.
    pub value: f64,
    pub tight: bool,
}

/// Lower bound on the worst-case cost from the given columns alone, and
/// whether the restricted optimum has a distribution with some mean at γ^U.
pub fn surrogate_bound(
    solver: &Solver,
    instance: &Instance,
    cluster: &ClusterSpec,
    x: &FirstStageDecision,
    columns: &[Scenario],
) -> Result<SurrogateBound, WespError> {
    match restricted_report(solver, instance, cluster, x, columns) {
        Ok(r) => {
            let tight = tightness_over(solver, &r.columns, &r.column_values, r.value, cluster)?.is_some();
            Ok(SurrogateBound { value: r.value, tight })
        }
        Err(WespError::MasterInfeasible) => Ok(SurrogateBound {
            value: f64::NEG_INFINITY,
            tight: false,
        }),
        Err(e) => Err(e),
    }
}
