//! Climate regimes: feature augmentation, k-means clustering, and per-cluster
//! moment ambiguity sets built from demand samples.

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;

#[derive(Debug, Error)]
pub enum ClimateError {
    #[error("period {year}-Q{quarter} has no record for region {region}")]
    MissingRegion { year: i32, quarter: u8, region: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("cluster {cluster} has {count} demand samples; at least 2 are needed")]
    InsufficientSamples { cluster: usize, count: usize },
    #[error("malformed climate data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClimateRecord {
    pub year: i32,
    pub quarter: u8,
    /// Zero-based region index; region i hosts factory i.
    pub region: usize,
    pub hours: f64,
}

/// One climate regime with its ambiguity set. Boxes are indexed by cell
/// (product-major, see [`Instance::cell`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub id: usize,
    pub probability: f64,
    /// Member count and total behind `probability`.
    pub members: u64,
    pub total: u64,
    /// ω_it: peak sunshine hours per factory and period.
    pub sunshine: Vec<Vec<f64>>,
    pub xi_lower: Vec<f64>,
    pub xi_upper: Vec<f64>,
    pub gamma_lower: Vec<f64>,
    pub gamma_upper: Vec<f64>,
}

impl ClusterSpec {
    pub fn num_cells(&self) -> usize {
        self.xi_lower.len()
    }

    pub fn box_width(&self, c: usize) -> f64 {
        self.xi_upper[c] - self.xi_lower[c]
    }

    pub fn is_degenerate_cell(&self, c: usize) -> bool {
        self.xi_upper[c] == self.xi_lower[c]
    }

    /// Box ordering ξ^L ≤ γ^L ≤ γ^U ≤ ξ^U and shape agreement with `instance`.
    pub fn check(&self, instance: &Instance) -> Result<(), String> {
        let n = instance.num_cells();
        if [&self.xi_lower, &self.xi_upper, &self.gamma_lower, &self.gamma_upper]
            .iter()
            .any(|v| v.len() != n)
        {
            return Err(format!("cluster {}: boxes must have {n} cells", self.id));
        }
        if self.sunshine.len() != instance.num_factories()
            || self.sunshine.iter().any(|r| r.len() != instance.periods)
        {
            return Err(format!("cluster {}: sunshine must be factories x periods", self.id));
        }
        for c in 0..n {
            let ok = self.xi_lower[c] <= self.gamma_lower[c]
                && self.gamma_lower[c] <= self.gamma_upper[c]
                && self.gamma_upper[c] <= self.xi_upper[c]
                && self.xi_lower[c] >= 0.0;
            if !ok {
                return Err(format!("cluster {}: box ordering violated at cell {c}", self.id));
            }
        }
        if !(self.probability > 0.0 && self.probability <= 1.0) {
            return Err(format!("cluster {}: probability outside (0, 1]", self.id));
        }
        Ok(())
    }

    /// A cluster whose box and moment window are given directly.
    pub fn with_boxes(
        instance: &Instance,
        sunshine_hours: f64,
        xi_lower: Vec<f64>,
        xi_upper: Vec<f64>,
        gamma_lower: Vec<f64>,
        gamma_upper: Vec<f64>,
    ) -> Self {
        Self {
            id: 0,
            probability: 1.0,
            members: 1,
            total: 1,
            sunshine: vec![vec![sunshine_hours; instance.periods]; instance.num_factories()],
            xi_lower,
            xi_upper,
            gamma_lower,
            gamma_upper,
        }
    }
}

/// Loads a cluster list written by [`save_clusters`].
pub fn load_clusters(path: impl AsRef<Path>) -> Result<Vec<ClusterSpec>, ClimateError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn save_clusters(path: impl AsRef<Path>, clusters: &[ClusterSpec]) -> Result<(), ClimateError> {
    std::fs::write(path, serde_json::to_string_pretty(clusters)?)?;
    Ok(())
}

/// sha256 of the compact JSON encoding of a cluster list.
pub fn clusters_hash(clusters: &[ClusterSpec]) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(clusters).unwrap_or_default();
    hex::encode(Sha256::digest(json.as_bytes()))
}

// ---------------------------------------------------------------------------
// Records and features.

/// Reads `year,quarter,region,hours` rows. Regions are 1-based in the file.
pub fn read_climate_csv(path: impl AsRef<Path>) -> Result<Vec<ClimateRecord>, ClimateError> {
    parse_climate_csv(&std::fs::read_to_string(path)?)
}

pub fn parse_climate_csv(text: &str) -> Result<Vec<ClimateRecord>, ClimateError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("year")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || ClimateError::Malformed(format!("line {}: `{line}`", n + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let region: usize = f[2].parse().map_err(|_| bad())?;
        let rec = ClimateRecord {
            year: f[0].parse().map_err(|_| bad())?,
            quarter: f[1].parse().map_err(|_| bad())?,
            region: region.checked_sub(1).ok_or_else(bad)?,
            hours: f[3].parse().map_err(|_| bad())?,
        };
        if !(rec.hours > 0.0) || !(1..=4).contains(&rec.quarter) {
            return Err(bad());
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_climate_csv(records: &[ClimateRecord]) -> String {
    let mut s = String::from("year,quarter,region,hours\n");
    for r in records {
        s.push_str(&format!("{},{},{},{:.1}\n", r.year, r.quarter, r.region + 1, r.hours));
    }
    s
}

/// Historical periods in chronological order with per-region hours.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodTable {
    pub periods: Vec<(i32, u8)>,
    /// `[period][region]`
    pub hours: Vec<Vec<f64>>,
}

/// Groups records by (year, quarter); every period must cover every region.
pub fn period_table(records: &[ClimateRecord]) -> Result<PeriodTable, ClimateError> {
    let regions = records.iter().map(|r| r.region + 1).max().unwrap_or(0);
    let mut by_period: BTreeMap<(i32, u8), Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        by_period.entry((r.year, r.quarter)).or_insert_with(|| vec![None; regions])[r.region] = Some(r.hours);
    }
    let mut periods = Vec::new();
    let mut hours = Vec::new();
    for ((year, quarter), row) in by_period {
        let mut vals = Vec::with_capacity(regions);
        for (region, v) in row.into_iter().enumerate() {
            vals.push(v.ok_or(ClimateError::MissingRegion { year, quarter, region })?);
        }
        periods.push((year, quarter));
        hours.push(vals);
    }
    Ok(PeriodTable { periods, hours })
}

/// One row per period: per-region hours, then cross-region mean and range.
pub fn augment_features(records: &[ClimateRecord]) -> Result<Vec<Vec<f64>>, ClimateError> {
    Ok(period_table(records)?.hours.iter().map(|h| augment_row(h)).collect())
}

pub fn augment_row<F: Float>(hours: &[F]) -> Vec<F> {
    let n = F::from(hours.len()).unwrap();
    let sum = hours.iter().fold(F::zero(), |a, &b| a + b);
    let max = hours.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let min = hours.iter().fold(F::infinity(), |a, &b| a.min(b));
    let mut row = hours.to_vec();
    row.push(sum / n);
    row.push(max - min);
    row
}

// ---------------------------------------------------------------------------
// k-means.

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult<F> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<F>>,
    /// Within-cluster sum of squares.
    pub sse: F,
    /// SSE after each Lloyd update of the winning restart.
    pub sse_trace: Vec<F>,
}

#[derive(Clone, Copy, Debug)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 100,
            max_iterations: 300,
        }
    }
}

fn sq_dist<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn nearest<F: Float>(p: &[F], centroids: &[Vec<F>]) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (c, ctr) in centroids.iter().enumerate() {
        let d = sq_dist(p, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn sse_of<F: Float>(points: &[Vec<F>], assign: &[usize], centroids: &[Vec<F>]) -> F {
    points
        .iter()
        .zip(assign)
        .fold(F::zero(), |acc, (p, &a)| acc + sq_dist(p, &centroids[a]))
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs by SSE.
/// Clusters are relabelled by their smallest member index.
pub fn kmeans<F: Float>(points: &[Vec<F>], k: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansResult<F>, ClimateError> {
    if k == 0 || points.is_empty() {
        return Err(ClimateError::DegenerateInput("need at least one point and one cluster".into()));
    }
    let mut distinct: Vec<&Vec<F>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|q| q.as_slice() == p.as_slice()) {
            distinct.push(p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if distinct.len() < k {
        return Err(ClimateError::DegenerateInput(format!(
            "{} distinct rows cannot form {k} clusters",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult<F>> = None;
    for _ in 0..opts.restarts.max(1) {
        let run = lloyd(points, k, &mut rng, opts.max_iterations);
        if best.as_ref().map_or(true, |b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(relabel(best.expect("at least one restart")))
}

fn seed_plus_plus<F: Float>(points: &[Vec<F>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| nearest(p, &centroids).1.to_f64().unwrap_or(0.0))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    chosen = i;
                    break;
                }
                u -= di;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

fn lloyd<F: Float>(points: &[Vec<F>], k: usize, rng: &mut ChaCha8Rng, max_iter: usize) -> KMeansResult<F> {
    let dim = points[0].len();
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        repair_empty(points, &mut assign, &centroids, k);
        // update step
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(p) {
                *s = *s + v;
            }
        }
        for c in 0..k {
            let n = F::from(counts[c]).unwrap();
            centroids[c] = sums[c].iter().map(|&s| s / n).collect();
        }
        trace.push(sse_of(points, &assign, &centroids));
        // assignment step; keep the current cluster on ties so SSE cannot rise
        let mut changed = false;
        for (p, a) in points.iter().zip(assign.iter_mut()) {
            let (c, d) = nearest(p, &centroids);
            if d < sq_dist(p, &centroids[*a]) && c != *a {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let sse = sse_of(points, &assign, &centroids);
    KMeansResult {
        assignments: assign,
        centroids,
        sse,
        sse_trace: trace,
    }
}

/// Moves, for each empty cluster, the point farthest from its centroid into it.
fn repair_empty<F: Float>(points: &[Vec<F>], assign: &mut [usize], centroids: &[Vec<F>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assign.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = F::neg_infinity();
        for (i, p) in points.iter().enumerate() {
            if counts[assign[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assign[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        match far {
            Some(i) => assign[i] = empty,
            None => return,
        }
    }
}

fn relabel<F: Float>(mut r: KMeansResult<F>) -> KMeansResult<F> {
    let k = r.centroids.len();
    let mut first = vec![usize::MAX; k];
    for (i, &a) in r.assignments.iter().enumerate() {
        first[a] = first[a].min(i);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&c| first[c]);
    let mut new_of = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        new_of[old] = new;
    }
    r.assignments = r.assignments.iter().map(|&a| new_of[a]).collect();
    r.centroids = order.iter().map(|&old| r.centroids[old].clone()).collect();
    r
}

// ---------------------------------------------------------------------------
// Ambiguity sets.

/// Percentile by linear interpolation between order statistics at position
/// `p·(n−1)` of the sorted sample. `p` in [0, 1].
pub fn percentile<F: Float>(sorted: &[F], p: F) -> F {
    let n = sorted.len();
    assert!(n > 0, "percentile of an empty sample");
    let pos = p * F::from(n - 1).unwrap();
    let lo = pos.floor();
    let lo_i = lo.to_usize().unwrap_or(0).min(n - 1);
    let hi_i = (lo_i + 1).min(n - 1);
    let frac = pos - lo;
    sorted[lo_i] + (sorted[hi_i] - sorted[lo_i]) * frac
}

/// Per-cluster ambiguity boxes from demand samples `samples[s][m][cell]`.
/// Box widths are scaled about their midpoints, then clamped to keep
/// 0 ≤ ξ^L ≤ γ^L ≤ γ^U ≤ ξ^U. Probabilities are `members[s] / Σ members`.
pub fn build_ambiguity(
    samples: &[Vec<Vec<f64>>],
    members: &[u64],
    sunshine: &[Vec<Vec<f64>>],
    scale: f64,
) -> Result<Vec<ClusterSpec>, ClimateError> {
    assert_eq!(samples.len(), members.len());
    assert_eq!(samples.len(), sunshine.len());
    let total: u64 = members.iter().sum();
    if total == 0 {
        return Err(ClimateError::DegenerateInput("clusters have no members".into()));
    }
    let mut out = Vec::with_capacity(samples.len());
    for (s, cluster) in samples.iter().enumerate() {
        if cluster.len() < 2 {
            return Err(ClimateError::InsufficientSamples {
                cluster: s,
                count: cluster.len(),
            });
        }
        let cells = cluster[0].len();
        let (mut xl, mut xu, mut gl, mut gu) = (vec![0.0; cells], vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]);
        for c in 0..cells {
            let mut col: Vec<f64> = cluster.iter().map(|m| m[c]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            let (lo, hi) = (col[0], col[col.len() - 1]);
            let (p10, p90) = (percentile(&col, 0.10), percentile(&col, 0.90));
            let (l, u) = scale_about_mid(lo, hi, scale);
            let (pl, pu) = scale_about_mid(p10, p90, scale);
            xl[c] = l.max(0.0);
            xu[c] = u.max(xl[c]);
            gl[c] = pl.clamp(xl[c], xu[c]);
            gu[c] = pu.clamp(gl[c], xu[c]);
        }
        let q = Ratio::new(members[s], total);
        out.push(ClusterSpec {
            id: s,
            probability: *q.numer() as f64 / *q.denom() as f64,
            members: members[s],
            total,
            sunshine: sunshine[s].clone(),
            xi_lower: xl,
            xi_upper: xu,
            gamma_lower: gl,
            gamma_upper: gu,
        });
    }
    Ok(out)
}

fn scale_about_mid(lo: f64, hi: f64, scale: f64) -> (f64, f64) {
    if scale == 1.0 {
        return (lo, hi);
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo) * scale;
    (mid - half, mid + half)
}

/// Options for [`clusters_from_climate`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub clusters: usize,
    pub seed: u64,
    /// Demand samples drawn per historical period in a cluster.
    pub draws_per_period: usize,
    pub restarts: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            clusters: 10,
            seed: 0,
            draws_per_period: 20,
            restarts: 100,
        }
    }
}

/// Full pipeline: features, k-means, demand samples per member period, and
/// ambiguity sets scaled by `instance.ambiguity_scale`.
pub fn clusters_from_climate(
    instance: &Instance,
    records: &[ClimateRecord],
    opts: &ClusterOptions,
) -> Result<Vec<ClusterSpec>, ClimateError> {
    let table = period_table(records)?;
    let regions = table.hours.first().map_or(0, |r| r.len());
    if regions != instance.num_factories() {
        return Err(ClimateError::Malformed(format!(
            "climate data has {regions} regions but the instance has {} factories",
            instance.num_factories()
        )));
    }
    if instance.nominal_demand.is_empty() {
        return Err(ClimateError::Malformed("instance has no nominal demand".into()));
    }
    if opts.clusters > table.periods.len() {
        return Err(ClimateError::DegenerateInput(format!(
            "{} clusters requested from {} periods",
            opts.clusters,
            table.periods.len()
        )));
    }
    let features: Vec<Vec<f64>> = table.hours.iter().map(|h| augment_row(h)).collect();
    let km = kmeans(
        &features,
        opts.clusters,
        opts.seed,
        KMeansOptions {
            restarts: opts.restarts,
            ..KMeansOptions::default()
        },
    )?;
    let mean_hours: Vec<f64> = (0..regions)
        .map(|r| table.hours.iter().map(|h| h[r]).sum::<f64>() / table.hours.len() as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_d3a4);
    let mut samples = vec![Vec::new(); opts.clusters];
    let mut members = vec![0u64; opts.clusters];
    for (p, &s) in km.assignments.iter().enumerate() {
        members[s] += 1;
        let factors: Vec<f64> = (0..regions).map(|r| table.hours[p][r] / mean_hours[r]).collect();
        for _ in 0..opts.draws_per_period.max(1) {
            samples[s].push(crate::instance::sample_demand(instance, &factors, &mut rng));
        }
    }
    let sunshine: Vec<Vec<Vec<f64>>> = km
        .centroids
        .iter()
        .map(|c| (0..regions).map(|r| vec![c[r]; instance.periods]).collect())
        .collect();
    build_ambiguity(&samples, &members, &sunshine, instance.ambiguity_scale)
}

/// Synthetic quarterly peak-sunshine history for three regions, 1992–2022.
/// Region 3 has the highest irradiance and region 2 the weakest seasonality.
pub fn synthetic_climate(seed: u64) -> Vec<ClimateRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (annual mean, seasonal amplitude, noise) in hours per quarter
    let profile = [(330.0, 85.0, 14.0), (300.0, 25.0, 12.0), (420.0, 75.0, 15.0)];
    let season = [-0.9, 0.35, 1.0, -0.45];
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::new();
    for year in 1992..=2022 {
        let trend = (year - 1992) as f64 * 0.4;
        for q in 0..4u8 {
            for (r, (mean, amp, noise)) in profile.iter().enumerate() {
                let z: f64 = rng.sample(normal);
                let h = mean + amp * season[q as usize] + trend + noise * z;
                out.push(ClimateRecord {
                    year,
                    quarter: q + 1,
                    region: r,
                    hours: (h * 10.0).round() / 10.0,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augment_constant_and_arithmetic_rows() {
        assert_eq!(augment_row(&[10.0, 10.0, 10.0]), vec![10.0, 10.0, 10.0, 10.0, 0.0]);
        assert_eq!(augment_row(&[8.0, 10.0, 12.0]), vec![8.0, 10.0, 12.0, 10.0, 4.0]);
    }

    #[test]
    fn synthetic_history_has_124_periods() {
        let recs = synthetic_climate(1);
        let feats = augment_features(&recs).unwrap();
        assert_eq!(feats.len(), 124);
        assert!(feats.iter().all(|r| r.len() == 5));
    }

    #[test]
    fn missing_region_is_reported() {
        let mut recs = synthetic_climate(1);
        recs.retain(|r| !(r.year == 2000 && r.quarter == 2 && r.region == 1));
        assert!(matches!(augment_features(&recs), Err(ClimateError::MissingRegion { year: 2000, quarter: 2, region: 1 })));
    }

    #[test]
    fn csv_round_trip() {
        let recs = synthetic_climate(3);
        let parsed = parse_climate_csv(&write_climate_csv(&recs)).unwrap();
        assert_eq!(parsed, recs);
    }

    #[test]
    fn percentiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 0.10) - 10.9).abs() < 1e-12);
        assert!((percentile(&v, 0.90) - 90.1).abs() < 1e-12);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let pts: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let r = kmeans(&pts, 1, 0, KMeansOptions::default()).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 0]);
        assert!((r.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((r.centroids[0][1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters_is_degenerate() {
        let pts: Vec<Vec<f64>> = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(matches!(kmeans(&pts, 3, 0, KMeansOptions::default()), Err(ClimateError::DegenerateInput(_))));
    }

    #[test]
    fn distinct_rows_give_zero_variance() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![5.0, 1.0], vec![5.0, 1.0], vec![9.0, 9.0]];
        let r = kmeans(&pts, 3, 4, KMeansOptions::default()).unwrap();
        assert_eq!(r.sse, 0.0);
        assert_eq!(r.assignments[1], r.assignments[2]);
    }

    #[test]
    fn generic_over_f32() {
        let pts: Vec<Vec<f32>> = vec![vec![0.0], vec![0.5], vec![10.0], vec![10.5]];
        let r = kmeans(&pts, 2, 9, KMeansOptions::default()).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 1, 1]);
    }

    #[test]
    fn identical_samples_give_degenerate_boxes() {
        let samples = vec![vec![vec![7.0, 3.0]; 5]];
        let c = build_ambiguity(&samples, &[5], &[vec![vec![1.0]]], 2.5).unwrap();
        assert_eq!(c[0].xi_lower, vec![7.0, 3.0]);
        assert_eq!(c[0].xi_upper, vec![7.0, 3.0]);
        assert_eq!(c[0].gamma_lower, vec![7.0, 3.0]);
        assert_eq!(c[0].gamma_upper, vec![7.0, 3.0]);
    }

    #[test]
    fn cardinality_probabilities() {
        let samples = vec![vec![vec![1.0], vec![2.0]], vec![vec![1.0], vec![2.0]]];
        let sun = vec![vec![vec![1.0]], vec![vec![1.0]]];
        let c = build_ambiguity(&samples, &[30, 70], &sun, 1.0).unwrap();
        assert_eq!(c[0].probability, 0.3);
        assert_eq!(c[1].probability, 0.7);
    }

    #[test]
    fn single_sample_is_insufficient() {
        let samples = vec![vec![vec![1.0]]];
        assert!(matches!(
            build_ambiguity(&samples, &[1], &[vec![vec![1.0]]], 1.0),
            Err(ClimateError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn base_case_pipeline_gives_ten_ordered_clusters() {
        let inst = Instance::base_case();
        let recs = synthetic_climate(2024);
        let clusters = clusters_from_climate(&inst, &recs, &ClusterOptions { restarts: 10, ..Default::default() }).unwrap();
        assert_eq!(clusters.len(), 10);
        let total: f64 = clusters.iter().map(|c| c.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for c in &clusters {
            c.check(&inst).unwrap();
        }
    }
}
