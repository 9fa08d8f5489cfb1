use greencap::ccg::{run_ccg_dro, CcgOptions};
use greencap::eval::{compare, comparison_csv, evaluate_sampled, evaluate_worstcase, MethodReports};
use greencap::family::tiny_case;
use greencap::instance::FirstStageDecision;
use greencap::solverbridge::Solver;
use greencap::spbaseline::{sample_counted, solve_saa, SaaStatus, SampleSet, SamplerKind};

#[test]
fn samplers_stay_in_the_box_and_center_the_gaussian() {
    let (_, clusters, _) = tiny_case(2);
    let cl = &clusters[0];
    for kind in [SamplerKind::Uniform, SamplerKind::TruncatedGaussian] {
        let (s, rejected) = sample_counted(cl, kind, 4000, 11);
        assert_eq!(s.len(), 4000);
        for c in 0..cl.num_cells() {
            let (lo, hi) = (cl.xi_lower[c], cl.xi_upper[c]);
            assert!(s.iter().all(|x| x[c] >= lo && x[c] <= hi));
            let mean = s.iter().map(|x| x[c]).sum::<f64>() / s.len() as f64;
            // both samplers are symmetric about the box midpoint
            assert!((mean - 0.5 * (lo + hi)).abs() < 0.03 * (hi - lo), "{kind:?} cell {c}");
            if kind == SamplerKind::TruncatedGaussian {
                let sd = (s.iter().map(|x| (x[c] - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
                // a normal with σ = width/6 truncated at ±3σ keeps ~98.7 % of σ
                assert!((sd / ((hi - lo) / 6.0) - 0.987).abs() < 0.05, "sd ratio {}", sd / ((hi - lo) / 6.0));
            }
        }
        if kind == SamplerKind::Uniform {
            assert_eq!(rejected, 0);
        } else {
            // about 0.27 % of draws fall outside ±3σ
            let rate = rejected as f64 / (4000 * cl.num_cells()) as f64;
            assert!(rate < 0.01, "{rate}");
        }
    }
}

#[test]
fn sample_sets_are_seeded_per_cluster() {
    let (_, clusters, _) = tiny_case(7);
    let a = SampleSet::draw(&clusters, SamplerKind::Uniform, 5, 3);
    assert_eq!(a, SampleSet::draw(&clusters, SamplerKind::Uniform, 5, 3));
    assert_ne!(a, SampleSet::draw(&clusters, SamplerKind::Uniform, 5, 4));
    assert_eq!(a.len(), 5 * clusters.len());
    let w: f64 = a.clusters.iter().map(|c| c.weight * c.scenarios.len() as f64).sum();
    assert!((w - 1.0).abs() < 1e-12);
}

#[test]
fn saa_recourse_matches_sampled_evaluation() {
    let solver = Solver::default();
    let mut solved = 0;
    for seed in 0..15 {
        let (inst, clusters, _) = tiny_case(seed);
        let samples = SampleSet::draw(&clusters, SamplerKind::TruncatedGaussian, 6, seed);
        let out = solve_saa(&solver, &inst, &clusters, &samples, None).unwrap();
        if out.status != SaaStatus::Optimal {
            assert_eq!(out.status, SaaStatus::Infeasible);
            continue;
        }
        let x = out.x.as_ref().unwrap();
        assert!(x.check(&inst).is_empty());
        let rep = evaluate_sampled(&solver, &inst, &clusters, x, &samples).unwrap();
        assert!(rep.feasible);
        // the extensive form and per-scenario re-solves price the plan alike
        let total = rep.total.unwrap();
        assert!((total - out.objective.unwrap()).abs() <= 1e-5 * total.abs().max(1.0), "{total} vs {:?}", out.objective);
        let recourse: f64 = out
            .recourse
            .iter()
            .zip(&samples.clusters)
            .map(|(r, cs)| cs.weight * r.iter().sum::<f64>())
            .sum();
        assert!((recourse - rep.tactical.unwrap()).abs() <= 1e-5 * recourse.abs().max(1.0));
        solved += 1;
    }
    assert!(solved > 5);
}

#[test]
fn worstcase_evaluation_reproduces_the_dro_objective() {
    let solver = Solver::default();
    let opts = CcgOptions {
        workers: 1,
        ..CcgOptions::default()
    };
    let mut checked = 0;
    for seed in 0..15 {
        let (inst, clusters, _) = tiny_case(seed);
        let out = run_ccg_dro(&solver, &inst, &clusters, None, &opts).unwrap();
        let Some(x) = &out.x else { continue };
        let rep = evaluate_worstcase(&solver, &inst, &clusters, x).unwrap();
        assert!(rep.feasible);
        let (a, b) = (rep.total.unwrap(), out.objective.unwrap());
        assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        let sl = rep.service_level.unwrap();
        assert!((100.0 * inst.service_level - 1e-6..=100.0 + 1e-9).contains(&sl), "{sl}");
        let g = rep.green_penetration.unwrap();
        assert!(g >= 100.0 * inst.green_target - 1e-6);
        checked += 1;
    }
    assert!(checked > 3);
}

#[test]
fn invalid_plans_are_rejected_by_evaluation() {
    let solver = Solver::default();
    let (inst, clusters, _) = tiny_case(3);
    let mut x = FirstStageDecision::hold_initial(&inst);
    x.renewable[0] = true;
    assert!(evaluate_worstcase(&solver, &inst, &clusters, &x).is_err());
}

#[test]
fn comparison_averages_over_jointly_feasible_instances() {
    let solver = Solver::default();
    let mut dro = Vec::new();
    let mut held = Vec::new();
    let opts = CcgOptions {
        workers: 1,
        ..CcgOptions::default()
    };
    for seed in 0..6 {
        let (inst, clusters, _) = tiny_case(seed);
        let out = run_ccg_dro(&solver, &inst, &clusters, None, &opts).unwrap();
        dro.push(out.x.as_ref().map(|x| evaluate_worstcase(&solver, &inst, &clusters, x).unwrap()));
        let h = FirstStageDecision::hold_initial(&inst);
        held.push(Some(evaluate_worstcase(&solver, &inst, &clusters, &h).unwrap()));
    }
    let rows = compare(&[
        MethodReports {
            label: "dro".into(),
            reports: dro.clone(),
        },
        MethodReports {
            label: "hold".into(),
            reports: held.clone(),
        },
    ]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].total_delta, (rows[0].jointly_feasible > 0).then_some(0.0));
    let joint = (0..6).filter(|&i| dro[i].as_ref().is_some_and(|r| r.feasible) && held[i].as_ref().unwrap().feasible).count();
    assert_eq!(rows[1].jointly_feasible, joint);
    if joint > 0 {
        // the robust optimum never loses to holding the initial plan
        assert!(rows[1].total_delta.unwrap() >= -1e-6);
    }
    let csv = comparison_csv(&rows);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("method,instances,feasible,"));
}
