//! Scenario ↔ binary image codec and training-dataset emission.
//!
//! A box-corner scenario becomes one bit per demand cell (1 = upper bound),
//! cells in product-major order with the first cell most significant.
//! Images stack sampled label rows sorted ascending by that integer.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::climate::ClusterSpec;
use crate::instance::{FirstStageDecision, Instance};
use crate::wesp::{DiscreteDistribution, Scenario};

/// Length of every projected feature vector.
pub const FEATURE_LEN: usize = 50;
/// Default sampled rows per image.
pub const IMAGE_ROWS: usize = 50;
/// Fraction of variance the projection keeps before padding/truncation.
pub const PCA_VARIANCE: f64 = 0.99;
/// Relative tolerance for recognising a bound value.
pub const BOUNDARY_TOL: f64 = 1e-9;

const PBM_HEADER: &str = "# cells product-major, first cell most significant, rows ascending";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("cell {cell}: value {value} is not at a box bound")]
    NonBoundary { cell: usize, value: f64 },
    #[error("expected {expected} cells, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("distribution has no support")]
    EmptySupport,
    #[error("feature model is not fitted")]
    UnfittedPca,
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Labels.

fn at(v: f64, bound: f64) -> bool {
    (v - bound).abs() <= BOUNDARY_TOL * bound.abs().max(1.0)
}

/// Bit per cell: 1 at the upper bound, 0 at the lower bound. Degenerate
/// cells encode 0.
pub fn encode_scenario(xi: &[f64], cluster: &ClusterSpec) -> Result<Vec<u8>, CodecError> {
    let n = cluster.num_cells();
    if xi.len() != n {
        return Err(CodecError::DimensionMismatch { expected: n, found: xi.len() });
    }
    xi.iter()
        .enumerate()
        .map(|(c, &v)| {
            if at(v, cluster.xi_lower[c]) {
                Ok(0)
            } else if at(v, cluster.xi_upper[c]) {
                Ok(1)
            } else {
                Err(CodecError::NonBoundary { cell: c, value: v })
            }
        })
        .collect()
}

pub fn decode_labels(bits: &[u8], cluster: &ClusterSpec) -> Result<Scenario, CodecError> {
    let n = cluster.num_cells();
    if bits.len() != n {
        return Err(CodecError::DimensionMismatch { expected: n, found: bits.len() });
    }
    Ok(bits
        .iter()
        .enumerate()
        .map(|(c, &b)| if b == 1 { cluster.xi_upper[c] } else { cluster.xi_lower[c] })
        .collect())
}

/// Rewrites each non-corner scenario as a mixture of at most n+1 box
/// corners with the same mean, using one shared threshold across cells.
/// Corners pass through; repeated corners are merged.
pub fn corner_mixture(dist: &DiscreteDistribution, cluster: &ClusterSpec) -> Result<DiscreteDistribution, CodecError> {
    let n = cluster.num_cells();
    let mut mass: std::collections::BTreeMap<Vec<u8>, f64> = std::collections::BTreeMap::new();
    for (xi, &w) in dist.scenarios.iter().zip(&dist.probabilities) {
        if xi.len() != n {
            return Err(CodecError::DimensionMismatch { expected: n, found: xi.len() });
        }
        let p: Vec<f64> = (0..n)
            .map(|c| {
                let (lo, hi) = (cluster.xi_lower[c], cluster.xi_upper[c]);
                if at(xi[c], lo) || hi <= lo {
                    0.0
                } else if at(xi[c], hi) {
                    1.0
                } else {
                    ((xi[c] - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            })
            .collect();
        let mut cuts: Vec<f64> = p.iter().copied().chain([0.0, 1.0]).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for pair in cuts.windows(2) {
            let bits: Vec<u8> = p.iter().map(|&pc| u8::from(pc >= pair[1])).collect();
            *mass.entry(bits).or_default() += w * (pair[1] - pair[0]);
        }
    }
    let mut out = DiscreteDistribution::default();
    for (bits, w) in mass {
        if w > 0.0 {
            out.scenarios.push(decode_labels(&bits, cluster)?);
            out.probabilities.push(w);
        }
    }
    Ok(out)
}

/// Integer value of a label vector, first cell most significant. `None`
/// beyond 128 cells.
pub fn label_value(bits: &[u8]) -> Option<u128> {
    if bits.len() > 128 {
        return None;
    }
    Some(bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128))
}

// ---------------------------------------------------------------------------
// Images.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    Probability,
}

/// Binary matrix, one label vector per row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioImage {
    pub cols: usize,
    pub rows: Vec<Vec<u8>>,
}

impl ScenarioImage {
    /// Same-length rows compare lexicographically exactly as their integers.
    pub fn is_sorted(&self) -> bool {
        self.rows.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn to_pbm(&self) -> String {
        let mut s = format!("P1\n{PBM_HEADER}\n{} {}\n", self.cols, self.rows.len());
        for r in &self.rows {
            let line: Vec<&str> = r.iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parses plain (P1) PBM. Comments and free whitespace are accepted.
    pub fn from_pbm(text: &str) -> Result<Self, CodecError> {
        let mut tokens = Vec::new();
        for line in text.lines() {
            let body = line.split('#').next().unwrap_or("");
            tokens.extend(body.split_whitespace());
        }
        let mut it = tokens.into_iter();
        if it.next() != Some("P1") {
            return Err(CodecError::Malformed("missing P1 magic".into()));
        }
        let mut dim = |what: &str| -> Result<usize, CodecError> {
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| CodecError::Malformed(format!("bad {what}")))
        };
        let cols = dim("width")?;
        let height = dim("height")?;
        // P1 pixels may also be packed without separators
        let bits: Vec<u8> = it
            .flat_map(|t| t.chars())
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(CodecError::Malformed(format!("bad pixel {ch:?}"))),
            })
            .collect::<Result<_, _>>()?;
        if bits.len() != cols * height {
            return Err(CodecError::Malformed(format!(
                "{} pixels for a {cols}x{height} image",
                bits.len()
            )));
        }
        let rows = if cols == 0 {
            vec![Vec::new(); height]
        } else {
            bits.chunks(cols).map(|c| c.to_vec()).collect()
        };
        Ok(Self { cols, rows })
    }

    pub fn read(path: &Path) -> Result<Self, CodecError> {
        Self::from_pbm(&fs::read_to_string(path)?)
    }
}

/// Draws `rows` labels from the support with replacement and sorts them.
pub fn sample_image(
    dist: &DiscreteDistribution,
    cluster: &ClusterSpec,
    rows: usize,
    weighting: Weighting,
    seed: u64,
) -> Result<ScenarioImage, CodecError> {
    if dist.is_empty() {
        return Err(CodecError::EmptySupport);
    }
    let labels: Vec<Vec<u8>> = dist
        .scenarios
        .iter()
        .map(|s| encode_scenario(s, cluster))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<u8>> = match weighting {
        Weighting::Uniform => (0..rows).map(|_| labels[rng.gen_range(0..labels.len())].clone()).collect(),
        Weighting::Probability => {
            let w = WeightedIndex::new(dist.probabilities.iter().map(|p| p.max(0.0)))
                .map_err(|_| CodecError::EmptySupport)?;
            (0..rows).map(|_| labels[w.sample(&mut rng)].clone()).collect()
        }
    };
    out.sort();
    let img = ScenarioImage {
        cols: cluster.num_cells(),
        rows: out,
    };
    assert!(img.is_sorted());
    Ok(img)
}

/// Distinct rows decoded to corners, first occurrence order.
pub fn decode_image(image: &ScenarioImage, cluster: &ClusterSpec) -> Result<Vec<Scenario>, CodecError> {
    let n = cluster.num_cells();
    if image.cols != n {
        return Err(CodecError::DimensionMismatch { expected: n, found: image.cols });
    }
    let mut seen: Vec<&Vec<u8>> = Vec::new();
    let mut out = Vec::new();
    for r in &image.rows {
        if r.len() != n {
            return Err(CodecError::DimensionMismatch { expected: n, found: r.len() });
        }
        if !seen.contains(&r) {
            seen.push(r);
            out.push(decode_labels(r, cluster)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Features.

/// Named raw feature blocks in concatenation order.
pub fn feature_blocks(instance: &Instance) -> Vec<(&'static str, usize)> {
    let (ni, nj, nk, nt) = (
        instance.num_factories(),
        instance.num_capacities(),
        instance.num_products(),
        instance.periods,
    );
    vec![
        ("x_lines", ni * nj * nt),
        ("x_green", ni * nj * nt),
        ("x_renewable", ni),
        ("cost_expand_terminate_upgrade", 3 * ni * nj),
        ("cost_renewable", ni),
        ("cost_production_old_green", 2 * ni * nj * nk),
        ("cost_shortage", nk),
        ("bound_initial_lines", 2 * ni * nj),
        ("bound_expand_terminate_limits", 2 * ni * nj),
        ("bound_pv_capacity", ni),
        ("rhs_green_target_service_level", 2),
        ("cluster_probability", 1),
        ("cluster_sunshine", ni * nt),
        ("cluster_box_lower_upper", 2 * nk * nt),
        ("cluster_window_lower_upper", 2 * nk * nt),
    ]
}

/// Raw feature vector in [`feature_blocks`] order.
pub fn raw_features(x: &FirstStageDecision, instance: &Instance, cluster: &ClusterSpec) -> Vec<f64> {
    let (ni, nj, nk) = (instance.num_factories(), instance.num_capacities(), instance.num_products());
    let mut v = Vec::new();
    v.extend(x.lines.iter().flatten().flatten().map(|&a| a as f64));
    v.extend(x.green.iter().flatten().flatten().map(|&a| a as f64));
    v.extend(x.renewable.iter().map(|&b| b as u8 as f64));
    for i in 0..ni {
        for j in 0..nj {
            let l = instance.lines[i][j];
            v.extend([l.expand_cost, l.terminate_cost, l.upgrade_cost]);
        }
    }
    v.extend(&instance.renewable_cost);
    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                let c = instance.production_cost[i][j][k].unwrap_or_default();
                v.extend([c.old, c.green]);
            }
        }
    }
    v.extend(&instance.shortage_penalty);
    for i in 0..ni {
        for j in 0..nj {
            let l = instance.lines[i][j];
            v.extend([l.initial as f64, l.initial_green as f64]);
        }
    }
    for i in 0..ni {
        for j in 0..nj {
            let l = instance.lines[i][j];
            v.extend([l.expand_limit as f64, l.terminate_limit as f64]);
        }
    }
    v.extend(&instance.pv_capacity);
    v.extend([instance.green_target, instance.service_level]);
    v.push(cluster.probability);
    v.extend(cluster.sunshine.iter().flatten());
    v.extend(&cluster.xi_lower);
    v.extend(&cluster.xi_upper);
    v.extend(&cluster.gamma_lower);
    v.extend(&cluster.gamma_upper);
    v
}

/// z-score normalisation followed by a principal-component projection,
/// padded or truncated to [`FEATURE_LEN`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Components needed for [`PCA_VARIANCE`] before truncation.
    pub needed: usize,
    pub explained: f64,
}

impl PcaModel {
    pub fn fit(corpus: &[Vec<f64>]) -> Result<Self, CodecError> {
        let n = corpus.len();
        let d = corpus.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(CodecError::EmptySupport);
        }
        if let Some(r) = corpus.iter().find(|r| r.len() != d) {
            return Err(CodecError::DimensionMismatch { expected: d, found: r.len() });
        }
        let mut mean = vec![0.0; d];
        for r in corpus {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n as f64;
            }
        }
        let mut std = vec![0.0; d];
        for r in corpus {
            for c in 0..d {
                std[c] += (r[c] - mean[c]).powi(2) / n as f64;
            }
        }
        for s in &mut std {
            *s = s.sqrt();
        }
        let mut model = Self {
            mean,
            std,
            components: Vec::new(),
            needed: 0,
            explained: 1.0,
        };
        let z = DMatrix::from_fn(n, d, |r, c| model.normalize_one(c, corpus[r][c]));
        let cov = z.transpose() * &z / n as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total <= 1e-12 {
            model.needed = 0;
            return Ok(model);
        }
        let mut acc = 0.0;
        for &i in &order {
            if acc / total >= PCA_VARIANCE - 1e-12 {
                break;
            }
            acc += eig.eigenvalues[i].max(0.0);
            let mut dir: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // sign convention: largest-magnitude entry positive
            let pivot = dir
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map_or(0, |(k, _)| k);
            if dir[pivot] < 0.0 {
                dir.iter_mut().for_each(|v| *v = -*v);
            }
            model.components.push(dir);
        }
        model.needed = model.components.len();
        if model.needed > FEATURE_LEN {
            log::warn!(
                "{} components needed for {:.0}% variance; keeping {FEATURE_LEN}",
                model.needed,
                PCA_VARIANCE * 100.0
            );
            model.components.truncate(FEATURE_LEN);
        }
        let kept: f64 = order[..model.components.len()].iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
        model.explained = kept / total;
        Ok(model)
    }

    fn normalize_one(&self, c: usize, v: f64) -> f64 {
        if self.std[c] <= 1e-12 {
            0.0
        } else {
            (v - self.mean[c]) / self.std[c]
        }
    }

    pub fn project(&self, raw: &[f64]) -> Result<Vec<f64>, CodecError> {
        if self.mean.is_empty() {
            return Err(CodecError::UnfittedPca);
        }
        if raw.len() != self.mean.len() {
            return Err(CodecError::DimensionMismatch { expected: self.mean.len(), found: raw.len() });
        }
        let z: Vec<f64> = raw.iter().enumerate().map(|(c, &v)| self.normalize_one(c, v)).collect();
        let mut out: Vec<f64> = self
            .components
            .iter()
            .map(|dir| dir.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect();
        out.resize(FEATURE_LEN, 0.0);
        Ok(out)
    }
}

pub fn build_feature(
    x: &FirstStageDecision,
    instance: &Instance,
    cluster: &ClusterSpec,
    pca: &PcaModel,
) -> Result<Vec<f64>, CodecError> {
    pca.project(&raw_features(x, instance, cluster))
}

// ---------------------------------------------------------------------------
// Dataset.

/// One solved (plan, cluster) pair and its worst-case distribution.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub instance: Instance,
    pub cluster: ClusterSpec,
    pub x: FirstStageDecision,
    pub distribution: DiscreteDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub images_per_item: usize,
    pub rows: usize,
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            images_per_item: 12,
            rows: IMAGE_ROWS,
            weighting: Weighting::Probability,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub id: String,
    pub cluster_id: usize,
    pub artifact: usize,
    pub seed: u64,
    pub feature: Vec<f64>,
    pub cell_order: String,
    pub sort: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub items: usize,
    pub artifacts: usize,
    pub skipped: Vec<usize>,
    pub options: DatasetOptions,
    pub cell_order: String,
    pub sort: String,
    pub feature_len: usize,
    /// Raw feature blocks per distinct instance shape, in order.
    pub feature_blocks: Vec<(String, usize)>,
    pub pca: PcaModel,
    /// sha256 per written file, sorted by relative path.
    pub files: Vec<(String, String)>,
    /// sha256 over the `files` list.
    pub dataset_hash: String,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self, CodecError> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?)
    }
}

/// Seed for image `b` of artifact `a` under `master`.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut h = Sha256::new();
    for v in [master, a, b] {
        h.update(v.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `features.csv`, `images/<id>.pbm` with sidecar JSON, and
/// `manifest.json` under `dir`. Features are fitted on the artifacts
/// themselves. Artifacts with empty support are skipped; non-corner support
/// points are split into corner mixtures with the same mean.
pub fn emit_dataset(dir: &Path, artifacts: &[Artifact], opts: &DatasetOptions) -> Result<DatasetManifest, CodecError> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir)?;
    let mut skipped = Vec::new();
    let usable: Vec<usize> = (0..artifacts.len())
        .filter(|&a| {
            let ok = !artifacts[a].distribution.is_empty();
            if !ok {
                log::warn!("artifact {a} has an empty distribution; skipped");
                skipped.push(a);
            }
            ok
        })
        .collect();
    let raws: Vec<Vec<f64>> = usable
        .iter()
        .map(|&a| raw_features(&artifacts[a].x, &artifacts[a].instance, &artifacts[a].cluster))
        .collect();
    let pca = if raws.is_empty() { PcaModel::default() } else { PcaModel::fit(&raws)? };
    let mut csv = String::new();
    let mut files: Vec<(String, String)> = Vec::new();
    let mut item = 0usize;
    for (pos, &a) in usable.iter().enumerate() {
        let art = &artifacts[a];
        let feature = pca.project(&raws[pos])?;
        let row: Vec<String> = feature.iter().map(|v| format!("{v}")).collect();
        let support = corner_mixture(&art.distribution, &art.cluster)?;
        for b in 0..opts.images_per_item {
            let seed = derive_seed(opts.seed, a as u64, b as u64);
            let img = sample_image(&support, &art.cluster, opts.rows, opts.weighting, seed)?;
            let id = format!("{item:06}");
            let pbm = img.to_pbm();
            let side = ImageSidecar {
                id: id.clone(),
                cluster_id: art.cluster.id,
                artifact: a,
                seed,
                feature: feature.clone(),
                cell_order: "product-major, first cell most significant".into(),
                sort: "ascending".into(),
            };
            let side_json = serde_json::to_string_pretty(&side)?;
            fs::write(images_dir.join(format!("{id}.pbm")), &pbm)?;
            fs::write(images_dir.join(format!("{id}.json")), &side_json)?;
            files.push((format!("images/{id}.pbm"), sha256_hex(pbm.as_bytes())));
            files.push((format!("images/{id}.json"), sha256_hex(side_json.as_bytes())));
            csv.push_str(&row.join(","));
            csv.push('\n');
            item += 1;
        }
    }
    fs::write(dir.join("features.csv"), &csv)?;
    files.push(("features.csv".into(), sha256_hex(csv.as_bytes())));
    files.sort();
    let mut h = Sha256::new();
    for (name, digest) in &files {
        h.update(name.as_bytes());
        h.update(b"\0");
        h.update(digest.as_bytes());
        h.update(b"\n");
    }
    let manifest = DatasetManifest {
        items: item,
        artifacts: artifacts.len(),
        skipped,
        options: opts.clone(),
        cell_order: "product-major, first cell most significant".into(),
        sort: "ascending".into(),
        feature_len: FEATURE_LEN,
        feature_blocks: usable
            .first()
            .map(|&a| feature_blocks(&artifacts[a].instance))
            .unwrap_or_default()
            .into_iter()
            .map(|(n, l)| (n.to_string(), l))
            .collect(),
        pca,
        files,
        dataset_hash: hex::encode(h.finalize()),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads `features.csv` back as rows of [`FEATURE_LEN`] numbers.
pub fn read_features(dir: &Path) -> Result<Vec<Vec<f64>>, CodecError> {
    let text = fs::read_to_string(dir.join("features.csv"))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            let row: Vec<f64> = l
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CodecError::Malformed(format!("features.csv line {}: {e}", n + 1)))?;
            if row.len() != FEATURE_LEN {
                return Err(CodecError::DimensionMismatch { expected: FEATURE_LEN, found: row.len() });
            }
            Ok(row)
        })
        .collect()
}

/// Sorted `*.pbm` paths in a directory.
pub fn list_pbm(dir: &Path) -> Result<Vec<PathBuf>, CodecError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pbm"))
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box2() -> ClusterSpec {
        ClusterSpec {
            id: 3,
            probability: 1.0,
            members: 1,
            total: 1,
            sunshine: vec![vec![1.0, 1.0]],
            xi_lower: vec![1.0, 2.0],
            xi_upper: vec![5.0, 6.0],
            gamma_lower: vec![2.0, 3.0],
            gamma_upper: vec![4.0, 5.0],
        }
    }

    #[test]
    fn upper_then_lower_is_two() {
        let c = box2();
        let bits = encode_scenario(&[5.0, 2.0], &c).unwrap();
        assert_eq!(bits, vec![1, 0]);
        assert_eq!(label_value(&bits), Some(2));
        assert!(matches!(encode_scenario(&[3.0, 2.0], &c), Err(CodecError::NonBoundary { cell: 0, .. })));
    }

    #[test]
    fn pbm_round_trip_and_packed_pixels() {
        let img = ScenarioImage {
            cols: 2,
            rows: vec![vec![0, 0], vec![0, 1], vec![1, 1]],
        };
        assert_eq!(ScenarioImage::from_pbm(&img.to_pbm()).unwrap(), img);
        assert_eq!(ScenarioImage::from_pbm("P1 2 3\n00\n01 11").unwrap(), img);
        assert!(ScenarioImage::from_pbm("P1 2 2\n0 1 1").is_err());
        assert!(ScenarioImage::from_pbm("P4 2 2\n").is_err());
    }

    #[test]
    fn decode_keeps_first_occurrence_order() {
        let c = box2();
        let img = ScenarioImage {
            cols: 2,
            rows: vec![vec![0, 0], vec![0, 1], vec![0, 1], vec![1, 1]],
        };
        let s = decode_image(&img, &c).unwrap();
        assert_eq!(s, vec![vec![1.0, 2.0], vec![1.0, 6.0], vec![5.0, 6.0]]);
        let bad = ScenarioImage { cols: 3, rows: vec![] };
        assert!(matches!(decode_image(&bad, &c), Err(CodecError::DimensionMismatch { .. })));
    }

    #[test]
    fn constant_corpus_projects_to_zero() {
        let corpus = vec![vec![1.0, 2.0, 3.0]; 4];
        let pca = PcaModel::fit(&corpus).unwrap();
        assert_eq!(pca.project(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; FEATURE_LEN]);
        assert!(matches!(PcaModel::default().project(&[1.0]), Err(CodecError::UnfittedPca)));
    }
}
