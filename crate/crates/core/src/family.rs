//! Generated problem families: tiny instances small enough for corner
//! enumeration, and desk-scale perturbations of the base case.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::climate::{clusters_from_climate, synthetic_climate, ClusterOptions, ClusterSpec};
use crate::instance::{perturb, random_small, FirstStageDecision, Instance, PerturbRanges, SmallInstanceSpec};

/// Cluster boxes around the instance's nominal demand. Box bounds are drawn
/// at 60–90 % and 110–140 % of nominal; the moment window is a random
/// sub-interval strictly inside the box.
pub fn random_clusters(instance: &Instance, count: usize, rng: &mut impl Rng) -> Vec<ClusterSpec> {
    let nominal = instance.nominal_cell_demand();
    let weights: Vec<u64> = (0..count).map(|_| rng.gen_range(1..=9)).collect();
    let total: u64 = weights.iter().sum();
    (0..count)
        .map(|s| {
            let level = rng.gen_range(0.85..1.15);
            let mut cl = ClusterSpec {
                id: s,
                probability: weights[s] as f64 / total as f64,
                members: weights[s],
                total,
                sunshine: (0..instance.num_factories())
                    .map(|_| (0..instance.periods).map(|_| rng.gen_range(250.0..450.0)).collect())
                    .collect(),
                xi_lower: Vec::new(),
                xi_upper: Vec::new(),
                gamma_lower: Vec::new(),
                gamma_upper: Vec::new(),
            };
            for &n in &nominal {
                let lo = n * level * rng.gen_range(0.6..0.9);
                let hi = n * level * rng.gen_range(1.1..1.4);
                let a = rng.gen_range(0.05..0.45);
                let b = rng.gen_range(0.55..0.95);
                cl.xi_lower.push(lo);
                cl.xi_upper.push(hi);
                cl.gamma_lower.push(lo + a * (hi - lo));
                cl.gamma_upper.push(lo + b * (hi - lo));
            }
            cl
        })
        .collect()
}

/// A random plan satisfying the first-stage constraints. `upgrade_bias` is
/// the chance of upgrading an available line in a period.
pub fn random_decision(instance: &Instance, upgrade_bias: f64, rng: &mut impl Rng) -> FirstStageDecision {
    let mut x = FirstStageDecision::hold_initial(instance);
    let nt = instance.periods;
    for i in 0..instance.num_factories() {
        let mut any_upgrade = false;
        for j in 0..instance.num_capacities() {
            let l = instance.lines[i][j];
            for t in 0..nt.saturating_sub(1) {
                let cur = x.lines[i][j][t];
                let green = x.green[i][j][t];
                let plus = rng.gen_range(0..=l.expand_limit);
                let removable = (cur + plus - green).min(l.terminate_limit);
                let minus = if rng.gen_bool(0.3) { rng.gen_range(0..=removable) } else { 0 };
                let next = cur + plus - minus;
                let room = next - green;
                let up = if room > 0 && rng.gen_bool(upgrade_bias) { rng.gen_range(1..=room) } else { 0 };
                x.expand[i][j][t] = plus;
                x.terminate[i][j][t] = minus;
                x.upgrade[i][j][t] = up;
                any_upgrade |= up > 0;
                x.lines[i][j][t + 1] = next;
                x.green[i][j][t + 1] = green + up;
            }
            for t in 0..nt {
                x.old[i][j][t] = x.lines[i][j][t] - x.green[i][j][t];
            }
        }
        x.renewable[i] = any_upgrade;
    }
    x
}

/// Tiny instance for exhaustive checks: at most two factories, capacity
/// types and products, at most three periods, so at most six demand cells.
pub fn tiny_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11);
    let spec = SmallInstanceSpec {
        factories: rng.gen_range(1..=2),
        capacities: rng.gen_range(1..=2),
        products: rng.gen_range(1..=2),
        periods: rng.gen_range(1..=3),
        green_target: if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.01..0.2) },
        service_level: rng.gen_range(0.9..0.99),
    };
    let mut inst = random_small(&spec, seed);
    // keep demand within reach of a few lines so both feasible and
    // infeasible plans occur
    for region in inst.nominal_demand.iter_mut() {
        for series in region.iter_mut() {
            for v in series.iter_mut() {
                *v *= 0.5;
            }
        }
    }
    for row in inst.lines.iter_mut() {
        for l in row.iter_mut() {
            l.initial = l.initial.max(1);
        }
    }
    inst.name = format!("tiny-{seed}");
    inst
}

/// A tiny instance with one or two clusters and a random plan.
pub fn tiny_case(seed: u64) -> (Instance, Vec<ClusterSpec>, FirstStageDecision) {
    let inst = tiny_instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let count = rng.gen_range(1..=2);
    let clusters = random_clusters(&inst, count, &mut rng);
    let x = random_decision(&inst, 0.6, &mut rng);
    (inst, clusters, x)
}

/// Perturbed base case with clusters from the shipped synthetic climate.
/// `periods` and `clusters` shrink the problem for desk-scale batches.
pub fn perturbed_base_case(seed: u64, periods: usize, clusters: usize, ranges: &PerturbRanges) -> (Instance, Vec<ClusterSpec>) {
    let mut inst = perturb(&Instance::base_case(), seed, ranges);
    truncate_periods(&mut inst, periods);
    let recs = synthetic_climate(2024);
    let cl = clusters_from_climate(
        &inst,
        &recs,
        &ClusterOptions {
            clusters,
            seed,
            restarts: 20,
            ..ClusterOptions::default()
        },
    )
    .expect("synthetic climate supports the requested cluster count");
    (inst, cl)
}

/// Keeps the first `periods` periods of an instance.
pub fn truncate_periods(inst: &mut Instance, periods: usize) {
    if periods >= inst.periods {
        return;
    }
    inst.periods = periods;
    for region in inst.nominal_demand.iter_mut() {
        for series in region.iter_mut() {
            series.truncate(periods);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_decisions_are_valid() {
        for seed in 0..200 {
            let (inst, clusters, x) = tiny_case(seed);
            assert!(inst.validate().is_empty());
            assert!(x.check(&inst).is_empty(), "{:?}", x.check(&inst));
            assert!(inst.num_cells() <= 6);
            for c in &clusters {
                c.check(&inst).unwrap();
            }
        }
    }
}
