//! Shared oracles for integration tests.
#![allow(dead_code)]

use greencap::climate::ClusterSpec;
use greencap::instance::Instance;
use greencap::recourse::{add_block, assemble_standard_form, XLayout, XSource};
use greencap::solverbridge::{Model, ObjSense, RowSense, SolveOptions, SolveStatus, Solver, VarId, VarKind};
use greencap::wesp::all_corners;

/// Single MILP with every box corner of every cluster embedded through the
/// dual of its worst-case expectation LP. Exact when every corner can carry
/// positive probability. `None` when infeasible.
pub fn monolith(solver: &Solver, inst: &Instance, clusters: &[ClusterSpec]) -> Option<f64> {
    let (ni, nj, nt) = (inst.num_factories(), inst.num_capacities(), inst.periods);
    let m0 = inst.big_m_lines() as f64;
    let mut m = Model::new(ObjSense::Minimize);
    let layout = XLayout::of(inst);
    let mut xv: Vec<Option<VarId>> = vec![None; layout.len()];
    for i in 0..ni {
        let br = m.add_var(format!("br{i}"), VarKind::Binary, 0.0, 1.0, inst.renewable_cost[i]);
        xv[layout.renewable(i)] = Some(br);
        let mut ups = Vec::new();
        for j in 0..nj {
            let l = inst.lines[i][j];
            let mut prev: Option<(VarId, VarId)> = None;
            for t in 0..nt {
                let total = m.add_var("", VarKind::Integer, 0.0, 1e4, 0.0);
                let old = m.add_var("", VarKind::Integer, 0.0, 1e4, 0.0);
                let green = m.add_var("", VarKind::Integer, 0.0, 1e4, 0.0);
                m.add_row("", [(old, 1.0), (green, 1.0), (total, -1.0)], RowSense::Eq, 0.0);
                match prev {
                    None => {
                        m.add_row("", [(total, 1.0)], RowSense::Eq, l.initial as f64);
                        m.add_row("", [(green, 1.0)], RowSense::Eq, l.initial_green as f64);
                    }
                    Some((pt, pg)) => {
                        let plus = m.add_var("", VarKind::Integer, 0.0, l.expand_limit as f64, l.expand_cost);
                        let minus = m.add_var("", VarKind::Integer, 0.0, l.terminate_limit as f64, l.terminate_cost);
                        let up = m.add_var("", VarKind::Integer, 0.0, 1e4, l.upgrade_cost);
                        m.add_row("", [(total, 1.0), (pt, -1.0), (plus, -1.0), (minus, 1.0)], RowSense::Eq, 0.0);
                        m.add_row("", [(green, 1.0), (pg, -1.0), (up, -1.0)], RowSense::Eq, 0.0);
                        m.add_row("", [(up, 1.0), (br, -m0)], RowSense::Le, 0.0);
                        ups.push(up);
                    }
                }
                xv[layout.old(i, j, t)] = Some(old);
                xv[layout.green(i, j, t)] = Some(green);
                prev = Some((total, green));
            }
        }
        let mut link = vec![(br, 1.0)];
        link.extend(ups.iter().map(|&u| (u, -1.0)));
        m.add_row("", link, RowSense::Le, 0.0);
    }
    let xv: Vec<VarId> = xv.into_iter().map(|v| v.expect("every x slot filled")).collect();
    for (s, cl) in clusters.iter().enumerate() {
        let sf = assemble_standard_form(inst, cl);
        let n = cl.num_cells();
        let eta = m.add_continuous("", 0.0, f64::INFINITY, cl.probability);
        let a = m.add_continuous("", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let bu: Vec<_> = (0..n).map(|_| m.add_continuous("", 0.0, f64::INFINITY, 0.0)).collect();
        let bl: Vec<_> = (0..n).map(|_| m.add_continuous("", 0.0, f64::INFINITY, 0.0)).collect();
        let mut head = vec![(eta, 1.0), (a, -1.0)];
        for c in 0..n {
            head.push((bu[c], -cl.gamma_upper[c]));
            head.push((bl[c], cl.gamma_lower[c]));
        }
        m.add_row("", head, RowSense::Ge, 0.0);
        for (q, xi) in all_corners(cl).unwrap().iter().enumerate() {
            let b = add_block(&mut m, &sf, XSource::Vars(&xv), xi, false, 0.0, &format!("m{s}_{q}_"));
            let mut row = vec![(a, 1.0)];
            for c in 0..n {
                row.push((bu[c], xi[c]));
                row.push((bl[c], -xi[c]));
            }
            row.extend(b.y.iter().zip(&sf.cost).map(|(&v, &c)| (v, -c)));
            m.add_row("", row, RowSense::Ge, 0.0);
        }
    }
    let opts = SolveOptions {
        mip_rel_gap: 0.0,
        mip_abs_gap: 1e-7,
        time_limit: None,
    };
    let r = solver.solve(&m, &opts).unwrap();
    match r.status {
        SolveStatus::Optimal => Some(r.objective),
        SolveStatus::Infeasible => None,
        s => panic!("monolith status {s}"),
    }
}
