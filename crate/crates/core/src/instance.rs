//! Capacity-planning instance data, its JSON document form, validation,
//! strategic cost evaluation, and random instance families.
//!
//! Monetary first-stage parameters are stored in `units.money` (10^6 by
//! default). Per-product production and shortage costs are stored in raw
//! currency per product, as they are quoted; [`Instance::recourse_cost_factor`]
//! converts `cost × quantity` into money units when recourse objectives are
//! built.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance document is malformed: {0}")]
    Schema(String),
    #[error("invalid first-stage decision: {0}")]
    InvalidDecision(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    /// Currency units per stored monetary value (first-stage costs).
    pub money: f64,
    /// Products per stored demand / production unit.
    pub demand: f64,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            money: 1e6,
            demand: 1e4,
        }
    }
}

/// Per (factory, capacity type) line data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Lines installed at the start of the horizon.
    pub initial: u32,
    /// Of which already green.
    #[serde(default)]
    pub initial_green: u32,
    pub expand_cost: f64,
    /// May be negative (residual value recovered).
    pub terminate_cost: f64,
    pub upgrade_cost: f64,
    pub expand_limit: u32,
    pub terminate_limit: u32,
}

/// How capacity type j processes product k; absent when ineligible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Process {
    pub utilization_old: f64,
    pub utilization_green: f64,
    /// kWh per product made with renewable power.
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductionCost {
    pub old: f64,
    pub green: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub factories: Vec<String>,
    pub capacities: Vec<String>,
    pub products: Vec<String>,
    pub periods: usize,
    pub units: Units,
    /// `[i][j]`
    pub lines: Vec<Vec<LineParams>>,
    /// I^R_i
    pub renewable_cost: Vec<f64>,
    /// E_i in kW.
    pub pv_capacity: Vec<f64>,
    /// n^O_j, n^N_j in demand units per line per period.
    pub throughput_old: Vec<f64>,
    pub throughput_green: Vec<f64>,
    /// `[j][k]`
    pub processes: Vec<Vec<Option<Process>>>,
    /// `[i][j][k]`, present exactly where `processes[j][k]` is.
    pub production_cost: Vec<Vec<Vec<Option<ProductionCost>>>>,
    /// c^U_k
    pub shortage_penalty: Vec<f64>,
    /// τ
    pub green_target: f64,
    /// λ
    pub service_level: f64,
    /// M₀; `None` means derive the tightest bound from the limits.
    pub max_lines: Option<u32>,
    /// Scale applied to ambiguity-set box widths by the clustering step.
    pub ambiguity_scale: f64,
    /// `[i][k][t]` nominal demand of the region hosting factory i.
    pub nominal_demand: Vec<Vec<Vec<f64>>>,
}

/// One rule violation found by [`Instance::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub indices: Vec<String>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]: {}", self.field, self.indices.join(","), self.rule)
    }
}

impl Instance {
    pub fn num_factories(&self) -> usize {
        self.factories.len()
    }

    pub fn num_capacities(&self) -> usize {
        self.capacities.len()
    }

    pub fn num_products(&self) -> usize {
        self.products.len()
    }

    /// Number of demand cells |K|·|T|.
    pub fn num_cells(&self) -> usize {
        self.products.len() * self.periods
    }

    /// Cell index of (k, t), product-major.
    pub fn cell(&self, k: usize, t: usize) -> usize {
        k * self.periods + t
    }

    pub fn is_eligible(&self, j: usize, k: usize) -> bool {
        self.processes[j][k].is_some()
    }

    /// Eligible (j, k) pairs in (j, k) lexicographic order.
    pub fn eligible_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.num_capacities() {
            for k in 0..self.num_products() {
                if self.is_eligible(j, k) {
                    out.push((j, k));
                }
            }
        }
        out
    }

    /// Converts `raw cost per product × stored quantity` into money units.
    pub fn recourse_cost_factor(&self) -> f64 {
        self.units.demand / self.units.money
    }

    /// M₀, derived as max (x̂ + T·f⁺) when not given.
    pub fn big_m_lines(&self) -> u32 {
        self.max_lines.unwrap_or_else(|| self.derived_max_lines())
    }

    fn derived_max_lines(&self) -> u32 {
        self.lines
            .iter()
            .flatten()
            .map(|l| l.initial + self.periods as u32 * l.expand_limit)
            .max()
            .unwrap_or(0)
    }

    /// Eligibility bound b_jk for the conventional (`green = false`) or green
    /// technology: the production one line can reach, rounded up.
    pub fn eligibility_bound(&self, j: usize, k: usize, green: bool) -> f64 {
        match self.processes[j][k] {
            None => 0.0,
            Some(p) => {
                let (n, a) = if green {
                    (self.throughput_green[j], p.utilization_green)
                } else {
                    (self.throughput_old[j], p.utilization_old)
                };
                (n / a).ceil()
            }
        }
    }

    /// Total nominal demand per cell, summed over regions.
    pub fn nominal_cell_demand(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_cells()];
        for region in &self.nominal_demand {
            for (k, row) in region.iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    out[k * self.periods + t] += v;
                }
            }
        }
        out
    }

    /// Checks every data invariant; never fails, returns the violations.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &str, indices: Vec<String>, rule: String| {
            out.push(Violation {
                field: field.to_string(),
                indices,
                rule,
            })
        };
        let (ni, nj, nk) = (self.num_factories(), self.num_capacities(), self.num_products());
        if ni == 0 || nj == 0 || nk == 0 || self.periods == 0 {
            push("sets", vec![], "every index set must be nonempty".into());
            return out;
        }
        let shape_ok = self.lines.len() == ni
            && self.lines.iter().all(|r| r.len() == nj)
            && self.renewable_cost.len() == ni
            && self.pv_capacity.len() == ni
            && self.throughput_old.len() == nj
            && self.throughput_green.len() == nj
            && self.processes.len() == nj
            && self.processes.iter().all(|r| r.len() == nk)
            && self.production_cost.len() == ni
            && self.production_cost.iter().all(|r| r.len() == nj && r.iter().all(|c| c.len() == nk))
            && self.shortage_penalty.len() == nk
            && (self.nominal_demand.is_empty()
                || (self.nominal_demand.len() == ni
                    && self
                        .nominal_demand
                        .iter()
                        .all(|r| r.len() == nk && r.iter().all(|c| c.len() == self.periods))));
        if !shape_ok {
            push("shape", vec![], "array dimensions do not match the index sets".into());
            return out;
        }
        for i in 0..ni {
            for j in 0..nj {
                let l = &self.lines[i][j];
                let idx = vec![self.factories[i].clone(), self.capacities[j].clone()];
                if l.initial_green > l.initial {
                    push(
                        "initial_green",
                        idx.clone(),
                        format!("initial green lines {} exceed initial lines {}", l.initial_green, l.initial),
                    );
                }
                for (name, v) in [
                    ("expand_cost", l.expand_cost),
                    ("terminate_cost", l.terminate_cost),
                    ("upgrade_cost", l.upgrade_cost),
                ] {
                    if !v.is_finite() {
                        push(name, idx.clone(), "must be finite".into());
                    }
                }
            }
            if !(self.renewable_cost[i].is_finite()) {
                push("renewable_cost", vec![self.factories[i].clone()], "must be finite".into());
            }
            if !(self.pv_capacity[i] >= 0.0) {
                push("pv_capacity", vec![self.factories[i].clone()], "must be nonnegative".into());
            }
        }
        for j in 0..nj {
            for (name, v) in [
                ("throughput_old", self.throughput_old[j]),
                ("throughput_green", self.throughput_green[j]),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    push(name, vec![self.capacities[j].clone()], "must be positive".into());
                }
            }
            for k in 0..nk {
                let idx = vec![self.capacities[j].clone(), self.products[k].clone()];
                if let Some(p) = self.processes[j][k] {
                    if !(p.utilization_old > 0.0 && p.utilization_green > 0.0) {
                        push("processes", idx.clone(), "utilization rates must be positive where eligible".into());
                    }
                    if !(p.energy >= 0.0) {
                        push("processes", idx.clone(), "energy intensity must be nonnegative".into());
                    }
                }
                for i in 0..ni {
                    let present = self.production_cost[i][j][k].is_some();
                    if present != self.processes[j][k].is_some() {
                        push(
                            "production_cost",
                            vec![self.factories[i].clone(), self.capacities[j].clone(), self.products[k].clone()],
                            "production cost must be given exactly for eligible cells".into(),
                        );
                    }
                }
            }
        }
        // Recourse monotonicity needs production to cost at least the shortage
        // penalty on every eligible cell; one violation per offending product.
        for k in 0..nk {
            let penalty = self.shortage_penalty[k];
            if !(penalty >= 0.0 && penalty.is_finite()) {
                push("shortage_penalty", vec![self.products[k].clone()], "must be nonnegative".into());
                continue;
            }
            let mut offending = Vec::new();
            for i in 0..ni {
                for j in 0..nj {
                    if let Some(c) = self.production_cost[i][j][k] {
                        if c.old < penalty || c.green < penalty {
                            offending.push(format!("{}/{}", self.factories[i], self.capacities[j]));
                        }
                    }
                }
            }
            if !offending.is_empty() {
                push(
                    "shortage_penalty",
                    vec![self.products[k].clone()],
                    format!(
                        "shortage penalty {penalty} exceeds a production cost (cells {}); production must cost at least the penalty",
                        offending.join(" ")
                    ),
                );
            }
        }
        if !(0.0..=1.0).contains(&self.green_target) {
            push("green_target", vec![], "must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.service_level) {
            push("service_level", vec![], "must lie in [0, 1]".into());
        }
        if let Some(m) = self.max_lines {
            let need = self.derived_max_lines();
            if m < need {
                push("max_lines", vec![], format!("M0 = {m} is below max(x0 + T*f+) = {need}"));
            }
        }
        if !(self.ambiguity_scale > 0.0 && self.ambiguity_scale.is_finite()) {
            push("ambiguity_scale", vec![], "must be positive".into());
        }
        if self.nominal_demand.iter().flatten().flatten().any(|v| !(*v >= 0.0)) {
            push("nominal_demand", vec![], "must be nonnegative".into());
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    pub fn to_json(&self) -> Result<String, InstanceError> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    /// Stable content hash of the JSON document.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(&self.to_doc()).unwrap_or_default();
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

// ---------------------------------------------------------------------------
// JSON document: explicit labels, ineligible (capacity, product) pairs absent.

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InstanceDoc {
    name: String,
    factories: Vec<String>,
    capacities: Vec<String>,
    products: Vec<String>,
    periods: usize,
    #[serde(default)]
    units: Units,
    green_target: f64,
    service_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_lines: Option<u32>,
    #[serde(default = "one")]
    ambiguity_scale: f64,
    capacity_types: BTreeMap<String, CapacityDoc>,
    factory_data: BTreeMap<String, FactoryDoc>,
    shortage_penalty: BTreeMap<String, f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CapacityDoc {
    throughput_old: f64,
    throughput_green: f64,
    /// Absent product ⇒ the capacity type cannot make it.
    processes: BTreeMap<String, Process>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FactoryDoc {
    pv_capacity_kw: f64,
    renewable_cost: f64,
    lines: BTreeMap<String, LineParams>,
    production_costs: BTreeMap<String, BTreeMap<String, ProductionCost>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    nominal_demand: BTreeMap<String, Vec<f64>>,
}

fn lookup<'a, V>(map: &'a BTreeMap<String, V>, key: &str, what: &str) -> Result<&'a V, InstanceError> {
    map.get(key)
        .ok_or_else(|| InstanceError::Schema(format!("missing {what} `{key}`")))
}

fn reject_unknown<V>(map: &BTreeMap<String, V>, known: &[String], what: &str) -> Result<(), InstanceError> {
    match map.keys().find(|k| !known.contains(k)) {
        Some(k) => Err(InstanceError::Schema(format!("unknown {what} `{k}`"))),
        None => Ok(()),
    }
}

impl Instance {
    fn from_doc(doc: InstanceDoc) -> Result<Self, InstanceError> {
        reject_unknown(&doc.capacity_types, &doc.capacities, "capacity type")?;
        reject_unknown(&doc.factory_data, &doc.factories, "factory")?;
        reject_unknown(&doc.shortage_penalty, &doc.products, "product")?;
        let mut throughput_old = Vec::new();
        let mut throughput_green = Vec::new();
        let mut processes = Vec::new();
        for j in &doc.capacities {
            let c = lookup(&doc.capacity_types, j, "capacity type")?;
            reject_unknown(&c.processes, &doc.products, "product")?;
            throughput_old.push(c.throughput_old);
            throughput_green.push(c.throughput_green);
            processes.push(doc.products.iter().map(|k| c.processes.get(k).copied()).collect::<Vec<_>>());
        }
        let mut lines = Vec::new();
        let mut renewable_cost = Vec::new();
        let mut pv_capacity = Vec::new();
        let mut production_cost = Vec::new();
        let mut nominal_demand = Vec::new();
        let mut any_demand = false;
        for i in &doc.factories {
            let f = lookup(&doc.factory_data, i, "factory")?;
            reject_unknown(&f.lines, &doc.capacities, "capacity type")?;
            reject_unknown(&f.production_costs, &doc.capacities, "capacity type")?;
            reject_unknown(&f.nominal_demand, &doc.products, "product")?;
            renewable_cost.push(f.renewable_cost);
            pv_capacity.push(f.pv_capacity_kw);
            let mut row = Vec::new();
            let mut costs = Vec::new();
            for (jx, j) in doc.capacities.iter().enumerate() {
                row.push(*lookup(&f.lines, j, "line data for capacity")?);
                let per_product = f.production_costs.get(j);
                if let Some(pp) = per_product {
                    reject_unknown(pp, &doc.products, "product")?;
                }
                let mut ck = Vec::new();
                for (kx, k) in doc.products.iter().enumerate() {
                    let cost = per_product.and_then(|m| m.get(k)).copied();
                    match (cost.is_some(), processes[jx][kx].is_some()) {
                        (true, false) => {
                            return Err(InstanceError::Schema(format!(
                                "production cost for ineligible cell {i}/{j}/{k}"
                            )))
                        }
                        (false, true) => {
                            return Err(InstanceError::Schema(format!(
                                "missing production cost for eligible cell {i}/{j}/{k}"
                            )))
                        }
                        _ => {}
                    }
                    ck.push(cost);
                }
                costs.push(ck);
            }
            lines.push(row);
            production_cost.push(costs);
            if !f.nominal_demand.is_empty() {
                any_demand = true;
            }
            let mut dem = Vec::new();
            for k in &doc.products {
                let series = f.nominal_demand.get(k).cloned().unwrap_or_else(|| vec![0.0; doc.periods]);
                if series.len() != doc.periods {
                    return Err(InstanceError::Schema(format!(
                        "nominal demand for {i}/{k} has {} periods, expected {}",
                        series.len(),
                        doc.periods
                    )));
                }
                dem.push(series);
            }
            nominal_demand.push(dem);
        }
        if !any_demand {
            nominal_demand.clear();
        }
        let shortage_penalty = doc
            .products
            .iter()
            .map(|k| lookup(&doc.shortage_penalty, k, "shortage penalty for product").copied())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            name: doc.name,
            factories: doc.factories,
            capacities: doc.capacities,
            products: doc.products,
            periods: doc.periods,
            units: doc.units,
            lines,
            renewable_cost,
            pv_capacity,
            throughput_old,
            throughput_green,
            processes,
            production_cost,
            shortage_penalty,
            green_target: doc.green_target,
            service_level: doc.service_level,
            max_lines: doc.max_lines,
            ambiguity_scale: doc.ambiguity_scale,
            nominal_demand,
        })
    }

    fn to_doc(&self) -> InstanceDoc {
        let capacity_types = self
            .capacities
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let processes = self
                    .products
                    .iter()
                    .enumerate()
                    .filter_map(|(k, p)| self.processes[j][k].map(|proc_| (p.clone(), proc_)))
                    .collect();
                (
                    name.clone(),
                    CapacityDoc {
                        throughput_old: self.throughput_old[j],
                        throughput_green: self.throughput_green[j],
                        processes,
                    },
                )
            })
            .collect();
        let factory_data = self
            .factories
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let lines = self
                    .capacities
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (c.clone(), self.lines[i][j]))
                    .collect();
                let production_costs = self
                    .capacities
                    .iter()
                    .enumerate()
                    .filter_map(|(j, c)| {
                        let m: BTreeMap<String, ProductionCost> = self
                            .products
                            .iter()
                            .enumerate()
                            .filter_map(|(k, p)| self.production_cost[i][j][k].map(|v| (p.clone(), v)))
                            .collect();
                        (!m.is_empty()).then(|| (c.clone(), m))
                    })
                    .collect();
                let nominal_demand = if self.nominal_demand.is_empty() {
                    BTreeMap::new()
                } else {
                    self.products
                        .iter()
                        .enumerate()
                        .map(|(k, p)| (p.clone(), self.nominal_demand[i][k].clone()))
                        .collect()
                };
                (
                    name.clone(),
                    FactoryDoc {
                        pv_capacity_kw: self.pv_capacity[i],
                        renewable_cost: self.renewable_cost[i],
                        lines,
                        production_costs,
                        nominal_demand,
                    },
                )
            })
            .collect();
        InstanceDoc {
            name: self.name.clone(),
            factories: self.factories.clone(),
            capacities: self.capacities.clone(),
            products: self.products.clone(),
            periods: self.periods,
            units: self.units,
            green_target: self.green_target,
            service_level: self.service_level,
            max_lines: self.max_lines,
            ambiguity_scale: self.ambiguity_scale,
            capacity_types,
            factory_data,
            shortage_penalty: self
                .products
                .iter()
                .cloned()
                .zip(self.shortage_penalty.iter().copied())
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// First-stage decisions.

/// Integer capacity plan. All per-line arrays are indexed `[i][j][t]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstStageDecision {
    pub lines: Vec<Vec<Vec<u32>>>,
    pub expand: Vec<Vec<Vec<u32>>>,
    pub terminate: Vec<Vec<Vec<u32>>>,
    pub old: Vec<Vec<Vec<u32>>>,
    pub green: Vec<Vec<Vec<u32>>>,
    pub upgrade: Vec<Vec<Vec<u32>>>,
    /// X^BR_i
    pub renewable: Vec<bool>,
}

/// Strategic cost split into its reporting components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategicCost {
    pub capacity_adjustment: f64,
    pub tech_upgrade: f64,
    pub renewable_investment: f64,
}

impl StrategicCost {
    pub fn total(&self) -> f64 {
        self.capacity_adjustment + self.tech_upgrade + self.renewable_investment
    }
}

impl FirstStageDecision {
    /// The plan that keeps the initial configuration and invests in nothing.
    pub fn hold_initial(instance: &Instance) -> Self {
        let (ni, nj, nt) = (instance.num_factories(), instance.num_capacities(), instance.periods);
        let zeros = vec![vec![vec![0u32; nt]; nj]; ni];
        let mut lines = zeros.clone();
        let mut old = zeros.clone();
        let mut green = zeros.clone();
        for i in 0..ni {
            for j in 0..nj {
                let l = instance.lines[i][j];
                for t in 0..nt {
                    lines[i][j][t] = l.initial;
                    green[i][j][t] = l.initial_green;
                    old[i][j][t] = l.initial - l.initial_green.min(l.initial);
                }
            }
        }
        Self {
            lines,
            expand: zeros.clone(),
            terminate: zeros.clone(),
            old,
            green,
            upgrade: zeros,
            renewable: vec![false; ni],
        }
    }

    /// Lists every violated first-stage constraint (balance, limits, split,
    /// green balance, renewable linking).
    pub fn check(&self, instance: &Instance) -> Vec<String> {
        let (ni, nj, nt) = (instance.num_factories(), instance.num_capacities(), instance.periods);
        let mut errs = Vec::new();
        let shaped = |a: &Vec<Vec<Vec<u32>>>| a.len() == ni && a.iter().all(|r| r.len() == nj && r.iter().all(|c| c.len() == nt));
        if ![&self.lines, &self.expand, &self.terminate, &self.old, &self.green, &self.upgrade]
            .iter()
            .all(|a| shaped(a))
            || self.renewable.len() != ni
        {
            errs.push("decision arrays do not match instance dimensions".to_string());
            return errs;
        }
        let m0 = instance.big_m_lines() as u64;
        for i in 0..ni {
            let mut upgrades = 0u64;
            for j in 0..nj {
                let l = instance.lines[i][j];
                let tag = format!("{}/{}", instance.factories[i], instance.capacities[j]);
                if self.lines[i][j][0] != l.initial {
                    errs.push(format!("{tag}: period-1 lines differ from the initial configuration"));
                }
                if self.green[i][j][0] != l.initial_green {
                    errs.push(format!("{tag}: period-1 green lines differ from the initial configuration"));
                }
                for t in 0..nt {
                    let (x, xp, xm) = (
                        self.lines[i][j][t] as i64,
                        self.expand[i][j][t] as i64,
                        self.terminate[i][j][t] as i64,
                    );
                    if t + 1 < nt && self.lines[i][j][t + 1] as i64 != x + xp - xm {
                        errs.push(format!("{tag} t={}: capacity balance violated", t + 1));
                    }
                    if t + 1 < nt && self.green[i][j][t + 1] != self.green[i][j][t] + self.upgrade[i][j][t] {
                        errs.push(format!("{tag} t={}: green balance violated", t + 1));
                    }
                    if t + 1 == nt && (xp != 0 || xm != 0 || self.upgrade[i][j][t] != 0) {
                        errs.push(format!("{tag} t={}: adjustment in the final period", t + 1));
                    }
                    if self.expand[i][j][t] > l.expand_limit {
                        errs.push(format!("{tag} t={}: expansion above limit", t + 1));
                    }
                    if self.terminate[i][j][t] > l.terminate_limit {
                        errs.push(format!("{tag} t={}: termination above limit", t + 1));
                    }
                    if self.old[i][j][t] + self.green[i][j][t] != self.lines[i][j][t] {
                        errs.push(format!("{tag} t={}: conventional + green != total lines", t + 1));
                    }
                    if self.upgrade[i][j][t] as u64 > m0 * self.renewable[i] as u64 {
                        errs.push(format!("{tag} t={}: upgrade without renewable investment", t + 1));
                    }
                    upgrades += self.upgrade[i][j][t] as u64;
                }
            }
            if self.renewable[i] && upgrades == 0 {
                errs.push(format!("{}: renewable investment without any upgrade", instance.factories[i]));
            }
        }
        errs
    }

    /// Sum of X^O·(total), convenience for reporting.
    pub fn total_lines(&self) -> u64 {
        self.lines.iter().flatten().flatten().map(|&v| v as u64).sum()
    }
}

/// Strategic (first-stage) cost split into components; fails when the
/// decision violates the first-stage constraints.
pub fn strategic_breakdown(instance: &Instance, x: &FirstStageDecision) -> Result<StrategicCost, InstanceError> {
    let errs = x.check(instance);
    if !errs.is_empty() {
        return Err(InstanceError::InvalidDecision(errs.join("; ")));
    }
    Ok(strategic_breakdown_unchecked(instance, x))
}

pub(crate) fn strategic_breakdown_unchecked(instance: &Instance, x: &FirstStageDecision) -> StrategicCost {
    let mut c = StrategicCost::default();
    for i in 0..instance.num_factories() {
        for j in 0..instance.num_capacities() {
            let l = instance.lines[i][j];
            for t in 0..instance.periods {
                c.capacity_adjustment +=
                    l.expand_cost * x.expand[i][j][t] as f64 + l.terminate_cost * x.terminate[i][j][t] as f64;
                c.tech_upgrade += l.upgrade_cost * x.upgrade[i][j][t] as f64;
            }
        }
        if x.renewable[i] {
            c.renewable_investment += instance.renewable_cost[i];
        }
    }
    c
}

/// Σ(I⁺X⁺ + I⁻X⁻) + Σ I^{N+}X^{N+} + Σ I^R X^{BR}.
pub fn strategic_cost(instance: &Instance, x: &FirstStageDecision) -> Result<f64, InstanceError> {
    strategic_breakdown(instance, x).map(|c| c.total())
}

// ---------------------------------------------------------------------------
// Random perturbation family.

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbRanges {
    pub cost_factor: (f64, f64),
    pub green_target: (f64, f64),
    pub ambiguity_scale: (f64, f64),
}

impl Default for PerturbRanges {
    fn default() -> Self {
        Self {
            cost_factor: (0.8, 1.2),
            green_target: (0.01, 0.20),
            ambiguity_scale: (1.0, 4.0),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Multiplies every cost by an independent factor, redraws τ, and records an
/// ambiguity scale. Deterministic in `seed`.
pub fn perturb(instance: &Instance, seed: u64, ranges: &PerturbRanges) -> Instance {
    assert!(
        ranges.cost_factor.0 <= ranges.cost_factor.1
            && ranges.green_target.0 <= ranges.green_target.1
            && ranges.ambiguity_scale.0 <= ranges.ambiguity_scale.1,
        "perturbation ranges must be nonempty"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = instance.clone();
    let f = ranges.cost_factor;
    for row in out.lines.iter_mut() {
        for l in row.iter_mut() {
            l.expand_cost *= draw(&mut rng, f);
            l.terminate_cost *= draw(&mut rng, f);
            l.upgrade_cost *= draw(&mut rng, f);
        }
    }
    for v in out.renewable_cost.iter_mut() {
        *v *= draw(&mut rng, f);
    }
    for c in out.production_cost.iter_mut().flatten().flatten().flatten() {
        c.old *= draw(&mut rng, f);
        c.green *= draw(&mut rng, f);
    }
    for v in out.shortage_penalty.iter_mut() {
        *v *= draw(&mut rng, f);
    }
    out.green_target = draw(&mut rng, ranges.green_target);
    out.ambiguity_scale = draw(&mut rng, ranges.ambiguity_scale);
    out.name = format!("{}-p{seed}", instance.name);
    out
}

/// One demand scenario (summed over regions, cell-indexed) drawn around the
/// nominal demand. `irradiance_factor[r]` scales region r's nominal demand
/// (period hours relative to the historical mean). Each region/product/period
/// draw is uniform within ±20 % of its centre or Gaussian with σ = 10 % of it,
/// with equal odds, and floored at zero.
pub fn sample_demand(instance: &Instance, irradiance_factor: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![0.0; instance.num_cells()];
    for (r, region) in instance.nominal_demand.iter().enumerate() {
        let f = irradiance_factor.get(r).copied().unwrap_or(1.0);
        for (k, series) in region.iter().enumerate() {
            for (t, &nominal) in series.iter().enumerate() {
                let centre = nominal * f;
                let v = if centre <= 0.0 {
                    0.0
                } else if rng.gen_bool(0.5) {
                    rng.gen_range(0.8 * centre..=1.2 * centre)
                } else {
                    let g = rand_distr::Normal::new(centre, 0.1 * centre).expect("positive sigma");
                    rng.sample(g)
                };
                out[instance.cell(k, t)] += v.max(0.0);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Reference data.

impl Instance {
    /// The three-factory, three-capacity, three-product industrial base case
    /// over four quarters (τ = 10 %, λ = 99 %, one line of adjustment per
    /// period).
    pub fn base_case() -> Self {
        let factories = vec!["F1".to_string(), "F2".to_string(), "F3".to_string()];
        let capacities = vec!["I".to_string(), "II".to_string(), "III".to_string()];
        let products = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let initial = [[3, 1, 2], [2, 0, 0], [0, 0, 2]];
        let expand = [55.00, 14.00, 42.00];
        let terminate = [-8.00, 0.20, -5.40];
        let upgrade = [5.50, 2.10, 8.00];
        let lines = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| LineParams {
                        initial: initial[i][j],
                        initial_green: 0,
                        expand_cost: expand[j],
                        terminate_cost: terminate[j],
                        upgrade_cost: upgrade[j],
                        expand_limit: 1,
                        terminate_limit: 1,
                    })
                    .collect()
            })
            .collect();
        // (utilization, cost, energy) for old and green technology; None = "-/-/-".
        type Cell = Option<((f64, f64, f64), (f64, f64, f64))>;
        let table: [[Cell; 3]; 3] = [
            // capacity I: A, B, C
            [
                Some(((1.00, 1.86, 0.34), (1.01, 1.91, 0.34))),
                Some(((1.00, 1.50, 0.37), (1.01, 1.53, 0.37))),
                Some(((1.04, 1.33, 0.39), (1.04, 1.03, 0.39))),
            ],
            // capacity II
            [None, None, Some(((1.00, 1.50, 0.29), (1.01, 1.54, 0.29)))],
            // capacity III
            [
                Some(((1.13, 2.47, 0.39), (1.13, 2.53, 0.39))),
                Some(((1.00, 1.66, 0.37), (1.00, 1.69, 0.37))),
                Some(((1.04, 1.93, 0.39), (1.04, 1.97, 0.39))),
            ],
        ];
        let processes: Vec<Vec<Option<Process>>> = table
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| {
                        c.map(|(o, g)| Process {
                            utilization_old: o.0,
                            utilization_green: g.0,
                            energy: g.2,
                        })
                    })
                    .collect()
            })
            .collect();
        let production_cost = (0..3)
            .map(|_| {
                table
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|c| c.map(|(o, g)| ProductionCost { old: o.1, green: g.1 }))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let nominal_demand = vec![
            vec![
                vec![319.52, 538.68, 745.55, 546.87],
                vec![301.60, 508.46, 703.73, 516.20],
                vec![287.49, 484.68, 670.81, 492.05],
            ],
            vec![
                vec![131.83, 222.25, 307.60, 225.63],
                vec![79.68, 134.34, 185.93, 136.38],
                vec![75.28, 126.91, 175.65, 128.84],
            ],
            vec![
                vec![110.06, 185.56, 256.81, 188.38],
                vec![56.67, 95.55, 132.24, 97.00],
                vec![83.35, 140.52, 194.48, 142.66],
            ],
        ];
        Self {
            name: "base-case".to_string(),
            factories,
            capacities,
            products,
            periods: 4,
            units: Units::default(),
            lines,
            renewable_cost: vec![14.00, 8.75, 10.50],
            pv_capacity: vec![4000.0, 2500.0, 3000.0],
            throughput_old: vec![449.97, 97.85, 262.08],
            throughput_green: vec![440.30, 95.89, 256.05],
            processes,
            production_cost,
            shortage_penalty: vec![0.15, 0.18, 0.12],
            green_target: 0.10,
            service_level: 0.99,
            max_lines: None,
            ambiguity_scale: 1.0,
            nominal_demand,
        }
    }
}

// ---------------------------------------------------------------------------
// Tiny random instances used by exactness tests and desk-scale studies.

/// Dimensions and knobs for [`random_small`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallInstanceSpec {
    pub factories: usize,
    pub capacities: usize,
    pub products: usize,
    pub periods: usize,
    pub green_target: f64,
    pub service_level: f64,
}

impl Default for SmallInstanceSpec {
    fn default() -> Self {
        Self {
            factories: 2,
            capacities: 2,
            products: 2,
            periods: 3,
            green_target: 0.1,
            service_level: 0.99,
        }
    }
}

/// A random instance whose shape follows `spec` and whose magnitudes follow
/// the base case (demand in the hundreds, costs in the tens). Every capacity
/// type can make at least one product and every product has a maker.
pub fn random_small(spec: &SmallInstanceSpec, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ni, nj, nk, nt) = (spec.factories, spec.capacities, spec.products, spec.periods);
    let mut processes = vec![vec![None; nk]; nj];
    for j in 0..nj {
        for k in 0..nk {
            if rng.gen_bool(0.7) || k == j % nk || j == k % nj {
                let u_old = rng.gen_range(0.9..1.15);
                processes[j][k] = Some(Process {
                    utilization_old: u_old,
                    utilization_green: u_old * rng.gen_range(1.0..1.03),
                    energy: rng.gen_range(0.28..0.40),
                });
            }
        }
    }
    let shortage_penalty: Vec<f64> = (0..nk).map(|_| rng.gen_range(0.10..0.20)).collect();
    let production_cost = (0..ni)
        .map(|_| {
            (0..nj)
                .map(|j| {
                    (0..nk)
                        .map(|k| {
                            processes[j][k].map(|_| ProductionCost {
                                old: rng.gen_range(1.0..2.5),
                                green: rng.gen_range(1.0..2.6),
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let throughput_old: Vec<f64> = (0..nj).map(|_| rng.gen_range(150.0..450.0)).collect();
    let throughput_green: Vec<f64> = throughput_old.iter().map(|n| n * rng.gen_range(0.96..0.99)).collect();
    let lines = (0..ni)
        .map(|_| {
            (0..nj)
                .map(|_| LineParams {
                    initial: rng.gen_range(0..=2),
                    initial_green: 0,
                    expand_cost: rng.gen_range(10.0..55.0),
                    terminate_cost: rng.gen_range(-8.0..1.0),
                    upgrade_cost: rng.gen_range(2.0..8.0),
                    expand_limit: 1,
                    terminate_limit: 1,
                })
                .collect()
        })
        .collect();
    let nominal_demand = (0..ni)
        .map(|_| {
            (0..nk)
                .map(|_| (0..nt).map(|_| rng.gen_range(40.0..220.0)).collect())
                .collect()
        })
        .collect();
    Instance {
        name: format!("small-{seed}"),
        factories: (1..=ni).map(|i| format!("F{i}")).collect(),
        capacities: (1..=nj).map(|j| format!("C{j}")).collect(),
        products: (0..nk).map(|k| ((b'A' + k as u8) as char).to_string()).collect(),
        periods: nt,
        units: Units::default(),
        lines,
        renewable_cost: (0..ni).map(|_| rng.gen_range(8.0..15.0)).collect(),
        pv_capacity: (0..ni).map(|_| rng.gen_range(2500.0..4000.0)).collect(),
        throughput_old,
        throughput_green,
        processes,
        production_cost,
        shortage_penalty,
        green_target: spec.green_target,
        service_level: spec.service_level,
        max_lines: None,
        ambiguity_scale: 1.0,
        nominal_demand,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_case_is_valid() {
        let inst = Instance::base_case();
        assert_eq!(inst.validate(), vec![]);
        let initial: Vec<Vec<u32>> = inst.lines.iter().map(|r| r.iter().map(|l| l.initial).collect()).collect();
        assert_eq!(initial, vec![vec![3, 1, 2], vec![2, 0, 0], vec![0, 0, 2]]);
    }

    #[test]
    fn penalty_above_production_cost_is_one_violation() {
        let mut inst = Instance::base_case();
        inst.shortage_penalty[0] = 2.0;
        let v = inst.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "shortage_penalty");
        assert_eq!(v[0].indices, vec!["A".to_string()]);
    }

    #[test]
    fn green_above_initial_is_one_violation() {
        let mut inst = Instance::base_case();
        inst.lines[2][0].initial_green = 1; // F3 has no type-I lines
        let v = inst.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "initial_green");
    }

    #[test]
    fn negative_termination_cost_is_accepted() {
        let inst = Instance::base_case();
        assert!(inst.lines[0][0].terminate_cost < 0.0);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn undersized_big_m_is_flagged() {
        let mut inst = Instance::base_case();
        inst.max_lines = Some(2);
        assert_eq!(inst.validate().len(), 1);
        inst.max_lines = None;
        assert_eq!(inst.big_m_lines(), 3 + 4);
    }

    #[test]
    fn holding_initial_configuration_costs_nothing() {
        let inst = Instance::base_case();
        let x = FirstStageDecision::hold_initial(&inst);
        assert!(x.check(&inst).is_empty());
        assert_eq!(strategic_cost(&inst, &x).unwrap(), 0.0);
    }

    #[test]
    fn single_expansion_costs_its_unit_price() {
        let inst = Instance::base_case();
        let mut x = FirstStageDecision::hold_initial(&inst);
        x.expand[0][0][0] = 1;
        for t in 1..4 {
            x.lines[0][0][t] = 4;
            x.old[0][0][t] = 4;
        }
        assert!((strategic_cost(&inst, &x).unwrap() - 55.00).abs() < 1e-12);
    }

    #[test]
    fn green_investment_components() {
        // One type-I upgrade at F2, a new type-I line at F3 upgraded one
        // period later, and PV at F2 and F3.
        let inst = Instance::base_case();
        let mut x = FirstStageDecision::hold_initial(&inst);
        x.upgrade[1][0][0] = 1;
        for t in 1..4 {
            x.green[1][0][t] = 1;
            x.old[1][0][t] = 1;
        }
        x.expand[2][0][0] = 1;
        x.upgrade[2][0][1] = 1;
        for t in 1..4 {
            x.lines[2][0][t] = 1;
        }
        x.old[2][0][1] = 1;
        for t in 2..4 {
            x.green[2][0][t] = 1;
        }
        x.renewable = vec![false, true, true];
        assert_eq!(x.check(&inst), Vec::<String>::new());
        let c = strategic_breakdown(&inst, &x).unwrap();
        assert!((c.tech_upgrade - 11.00).abs() < 1e-12);
        assert!((c.renewable_investment - 19.25).abs() < 1e-12);
        assert!((c.capacity_adjustment - 55.00).abs() < 1e-12);
    }

    #[test]
    fn invalid_decision_is_rejected() {
        let inst = Instance::base_case();
        let mut x = FirstStageDecision::hold_initial(&inst);
        x.expand[0][0][0] = 2;
        assert!(matches!(strategic_cost(&inst, &x), Err(InstanceError::InvalidDecision(_))));
        let mut y = FirstStageDecision::hold_initial(&inst);
        y.renewable[0] = true;
        assert!(strategic_cost(&inst, &y).is_err());
    }

    #[test]
    fn degenerate_perturbation_is_identity() {
        let inst = Instance::base_case();
        let ranges = PerturbRanges {
            cost_factor: (1.0, 1.0),
            green_target: (inst.green_target, inst.green_target),
            ambiguity_scale: (1.0, 1.0),
        };
        let mut p = perturb(&inst, 7, &ranges);
        p.name = inst.name.clone();
        assert_eq!(p, inst);
    }

    #[test]
    fn perturbation_is_deterministic_and_in_range() {
        let inst = Instance::base_case();
        let r = PerturbRanges::default();
        assert_eq!(perturb(&inst, 11, &r), perturb(&inst, 11, &r));
        assert_ne!(perturb(&inst, 11, &r), perturb(&inst, 12, &r));
        for seed in 0..5000 {
            let p = perturb(&inst, seed, &r);
            assert!((0.01..=0.20).contains(&p.green_target));
            assert!((1.0..=4.0).contains(&p.ambiguity_scale));
        }
    }

    #[test]
    fn json_marks_ineligible_cells_by_absence() {
        let inst = Instance::base_case();
        let json = inst.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let procs = &v["capacity_types"]["II"]["processes"];
        assert!(procs.get("A").is_none());
        assert!(procs.get("C").is_some());
    }

    #[test]
    fn eligible_cost_missing_is_schema_error() {
        let inst = Instance::base_case();
        let mut v: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
        v["factory_data"]["F1"]["production_costs"]["II"]
            .as_object_mut()
            .unwrap()
            .remove("C");
        let err = Instance::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, InstanceError::Schema(_)));
    }

    #[test]
    fn small_instances_are_valid() {
        for seed in 0..50 {
            let inst = random_small(&SmallInstanceSpec::default(), seed);
            assert!(inst.validate().is_empty(), "{:?}", inst.validate());
        }
    }
}
