//! Oracles shared by the integration tests: a small LP-format reader and
//! naive reference solvers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ispo_core::adjust::AdjustProblem;
use ispo_core::model::{inventory_from_assignment, opening_cost, Instance, LotAssignment, LotChoice};
use ispo_core::salesdyn::simulate_sales;
use ispo_core::trajectory::{instance_trajectories, ScenarioTrajectoryMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(f64, String)>,
    pub op: Op,
    pub rhs: f64,
}

#[derive(Debug, Default)]
pub struct LpModel {
    pub maximize: bool,
    pub objective: Vec<(f64, String)>,
    pub rows: Vec<Row>,
    pub bounds: HashMap<String, (f64, f64)>,
    pub binaries: BTreeSet<String>,
    pub generals: BTreeSet<String>,
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    let Some(first) = chars.next() else { return false };
    if !(first.is_ascii_alphabetic() || first == '_') {
        return false;
    }
    if (first == 'e' || first == 'E') && s[1..].starts_with(|c: char| c.is_ascii_digit()) {
        return false;
    }
    s.len() <= 255 && s.chars().all(|c| c.is_ascii_alphanumeric() || "_(),.".contains(c))
}

fn parse_terms(tokens: &[&str]) -> Result<Vec<(f64, String)>, String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut sign = 1.0;
        if tokens[i] == "+" || tokens[i] == "-" {
            if tokens[i] == "-" {
                sign = -1.0;
            }
            i += 1;
        } else if !out.is_empty() {
            return Err(format!("missing sign before {}", tokens[i]));
        }
        let tok = tokens.get(i).ok_or("dangling sign")?;
        let coef = if let Ok(c) = tok.parse::<f64>() {
            i += 1;
            c
        } else {
            1.0
        };
        let name = tokens.get(i).ok_or("coefficient without variable")?;
        if !valid_name(name) {
            return Err(format!("bad variable name {name}"));
        }
        out.push((sign * coef, name.to_string()));
        i += 1;
    }
    Ok(out)
}

fn parse_row(name: &str, tokens: &[&str]) -> Result<Row, String> {
    let pos = tokens
        .iter()
        .position(|t| matches!(*t, "<=" | ">=" | "="))
        .ok_or_else(|| format!("row {name} has no relation"))?;
    if pos + 2 != tokens.len() {
        return Err(format!("row {name}: expected one number after the relation"));
    }
    let rhs: f64 = tokens[pos + 1]
        .parse()
        .map_err(|_| format!("row {name}: bad right-hand side"))?;
    let op = match tokens[pos] {
        "<=" => Op::Le,
        ">=" => Op::Ge,
        _ => Op::Eq,
    };
    Ok(Row {
        name: name.to_string(),
        terms: parse_terms(&tokens[..pos])?,
        op,
        rhs,
    })
}

#[derive(PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    End,
}

/// Parses the subset of the LP format the exporter uses; any deviation
/// from the grammar is an error.
pub fn parse_lp(text: &str) -> Result<LpModel, String> {
    let mut model = LpModel::default();
    let mut section = Section::None;
    // pending named row: name and tokens so far
    let mut pending: Option<(String, Vec<String>)> = None;
    let flush = |pending: &mut Option<(String, Vec<String>)>, section: &Section, model: &mut LpModel| -> Result<(), String> {
        if let Some((name, toks)) = pending.take() {
            let toks: Vec<&str> = toks.iter().map(String::as_str).collect();
            match section {
                Section::Objective => model.objective = parse_terms(&toks)?,
                Section::Constraints => model.rows.push(parse_row(&name, &toks)?),
                _ => return Err("row outside a row section".into()),
            }
        }
        Ok(())
    };
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let next = match lower.as_str() {
            "maximize" | "maximum" | "max" => Some(Section::Objective),
            "minimize" | "minimum" | "min" => Some(Section::Objective),
            "subject to" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "generals" | "general" | "gen" => Some(Section::Generals),
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(next) = next {
            flush(&mut pending, &section, &mut model)?;
            if next == Section::Objective {
                if section != Section::None {
                    return Err("objective must come first".into());
                }
                model.maximize = lower.starts_with("max");
            }
            section = next;
            continue;
        }
        match section {
            Section::None | Section::End => return Err(format!("text outside sections: {line}")),
            Section::Objective | Section::Constraints => {
                let mut toks: Vec<&str> = line.split_whitespace().collect();
                if let Some(first) = toks.first() {
                    if let Some(name) = first.strip_suffix(':') {
                        flush(&mut pending, &section, &mut model)?;
                        if !valid_name(name) {
                            return Err(format!("bad row name {name}"));
                        }
                        pending = Some((name.to_string(), Vec::new()));
                        toks.remove(0);
                    }
                }
                let p = pending.as_mut().ok_or_else(|| format!("continuation without row: {line}"))?;
                p.1.extend(toks.iter().map(|t| t.to_string()));
            }
            Section::Bounds => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                match toks.as_slice() {
                    [lo, "<=", v, "<=", hi] => {
                        let lo: f64 = lo.parse().map_err(|_| "bad bound")?;
                        let hi: f64 = hi.parse().map_err(|_| "bad bound")?;
                        model.bounds.insert(v.to_string(), (lo, hi));
                    }
                    [v, ">=", lo] => {
                        let lo: f64 = lo.parse().map_err(|_| "bad bound")?;
                        model.bounds.insert(v.to_string(), (lo, f64::INFINITY));
                    }
                    [v, "<=", hi] => {
                        let hi: f64 = hi.parse().map_err(|_| "bad bound")?;
                        model.bounds.insert(v.to_string(), (0.0, hi));
                    }
                    _ => return Err(format!("bad bound line {line}")),
                }
            }
            Section::Binaries | Section::Generals => {
                for t in line.split_whitespace() {
                    if !valid_name(t) {
                        return Err(format!("bad name {t}"));
                    }
                    let set = if section == Section::Binaries {
                        &mut model.binaries
                    } else {
                        &mut model.generals
                    };
                    set.insert(t.to_string());
                }
            }
        }
    }
    if section != Section::End {
        return Err("missing End".into());
    }
    let mut seen = BTreeSet::new();
    for r in &model.rows {
        if !seen.insert(r.name.clone()) {
            return Err(format!("duplicate row {}", r.name));
        }
    }
    Ok(model)
}

/// Family of a name: the part before the index list.
pub fn family(name: &str) -> &str {
    name.split('(').next().unwrap_or(name)
}

impl LpModel {
    pub fn variables(&self) -> BTreeSet<String> {
        let mut v: BTreeSet<String> = self.objective.iter().map(|t| t.1.clone()).collect();
        for r in &self.rows {
            v.extend(r.terms.iter().map(|t| t.1.clone()));
        }
        v.extend(self.bounds.keys().cloned());
        v.extend(self.binaries.iter().cloned());
        v.extend(self.generals.iter().cloned());
        v
    }

    pub fn variable_families(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for v in self.variables() {
            *m.entry(family(&v).to_string()).or_default() += 1;
        }
        m
    }

    pub fn row_families(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            *m.entry(family(&r.name).to_string()).or_default() += 1;
        }
        m
    }

    pub fn objective_value(&self, x: &HashMap<String, f64>) -> f64 {
        self.objective.iter().map(|(c, v)| c * x.get(v).copied().unwrap_or(0.0)).sum()
    }

    /// Names of violated rows, bounds and integrality conditions.
    pub fn violations(&self, x: &HashMap<String, f64>, tol: f64) -> Vec<String> {
        let val = |v: &str| x.get(v).copied().unwrap_or(0.0);
        let mut bad = Vec::new();
        for r in &self.rows {
            let lhs: f64 = r.terms.iter().map(|(c, v)| c * val(v)).sum();
            let ok = match r.op {
                Op::Le => lhs <= r.rhs + tol,
                Op::Ge => lhs >= r.rhs - tol,
                Op::Eq => (lhs - r.rhs).abs() <= tol,
            };
            if !ok {
                bad.push(r.name.clone());
            }
        }
        for v in self.variables() {
            let (lo, hi) = self.bounds.get(&v).copied().unwrap_or((0.0, f64::INFINITY));
            let y = val(&v);
            if y < lo - tol || y > hi + tol {
                bad.push(format!("bound {v}"));
            }
            if self.binaries.contains(&v) && !(y.abs() < tol || (y - 1.0).abs() < tol) {
                bad.push(format!("binary {v}"));
            }
            if self.generals.contains(&v) && (y - y.round()).abs() > tol {
                bad.push(format!("integer {v}"));
            }
        }
        bad
    }
}

/// Variable values of the model for a given assignment and map, derived
/// from the mean-value simulation.
pub fn lp_point(instance: &Instance, a: &LotAssignment, map: &ScenarioTrajectoryMap) -> HashMap<String, f64> {
    let mut x = HashMap::new();
    for (b, c) in a.choices.iter().enumerate() {
        let mi = instance.multiplicity_index(c.multiplicity).unwrap();
        x.insert(format!("x({b},{},{mi})", c.lot), 1.0);
    }
    let used = a.used_lot_types();
    for l in &used {
        x.insert(format!("y({l})"), 1.0);
    }
    for i in 0..used.len() {
        x.insert(format!("z({i})"), 1.0);
    }
    let inv = inventory_from_assignment(a, instance);
    for b in 0..instance.n_branches() {
        for s in 0..instance.n_sizes() {
            x.insert(format!("I({b},{s})"), inv.get(b, s) as f64);
        }
    }
    x.insert("Itot".into(), inv.total() as f64);
    let supply = inv.to_supply();
    for e in 0..instance.n_scenarios() {
        let t = map.get(e);
        let sim = simulate_sales(&supply, e, t, instance).unwrap();
        for (k, &p) in t.indices().iter().enumerate() {
            x.insert(format!("u({e},{k},{p})"), 1.0);
            if sim.markdown[k] {
                x.insert(format!("v({e},{k})"), 1.0);
            }
            for b in 0..instance.n_branches() {
                for s in 0..instance.n_sizes() {
                    x.insert(format!("stock({e},{k},{b},{s})"), sim.stock(k, b, s));
                    x.insert(format!("sales({e},{k},{b},{s},{p})"), sim.sales_at(k, b, s));
                    x.insert(format!("yield({e},{k},{b},{s})"), sim.yield_at(k, b, s));
                }
            }
        }
    }
    x
}

/// Optimum by enumerating every assignment; the price stage is solved per
/// scenario by simulating every trajectory.
pub fn naive_ispo_optimum(instance: &Instance) -> Option<f64> {
    let trajectories = instance_trajectories(instance);
    let options: Vec<LotChoice> = (0..instance.n_lot_types())
        .flat_map(|lot| instance.multiplicities.iter().map(move |&multiplicity| LotChoice { lot, multiplicity }))
        .collect();
    let nb = instance.n_branches();
    let mut idx = vec![0usize; nb];
    let mut best: Option<f64> = None;
    loop {
        let a = LotAssignment::new(idx.iter().map(|&i| options[i]).collect());
        if instance.check_assignment(&a).is_ok() {
            let mut v = -opening_cost(&instance.opening_costs, a.used_lot_types().len());
            for (b, c) in a.choices.iter().enumerate() {
                v -= instance.handling_cost_of(b, *c).unwrap();
            }
            let supply = inventory_from_assignment(&a, instance).to_supply();
            for (e, sc) in instance.scenarios.iter().enumerate() {
                let m = trajectories
                    .iter()
                    .map(|t| simulate_sales(&supply, e, t, instance).unwrap().discounted_profit)
                    .fold(f64::NEG_INFINITY, f64::max);
                v += sc.probability * m;
            }
            if best.is_none_or(|bv| v > bv) {
                best = Some(v);
            }
        }
        let mut j = 0;
        loop {
            if j == nb {
                return best;
            }
            idx[j] += 1;
            if idx[j] < options.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Every feasible objective value of an adjust problem.
pub fn adjust_feasible_values(p: &AdjustProblem) -> Vec<f64> {
    let (nv, na, nb) = (p.n_entities(), p.n_alternatives(), p.n_levels());
    let per = na * nb;
    let mut out = Vec::new();
    let mut idx = vec![0usize; nv];
    loop {
        let choice: Vec<(usize, usize)> = idx.iter().map(|&i| (i / nb, i % nb)).collect();
        if let Some(v) = p.evaluate(&choice) {
            out.push(v);
        }
        let mut j = 0;
        loop {
            if j == nv {
                return out;
            }
            idx[j] += 1;
            if idx[j] < per {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Random micro adjust instance: resource grows linearly with the level,
/// costs are quadratic in the resource (so convex) unless `convex` is off.
pub fn micro_adjust<R: rand::Rng>(rng: &mut R, convex: bool) -> AdjustProblem {
    let nv = rng.random_range(1..=4);
    let na = rng.random_range(1..=3);
    let nb = rng.random_range(1..=4);
    let unit: Vec<f64> = (0..na).map(|_| rng.random_range(1..=5) as f64).collect();
    let target: Vec<f64> = (0..nv).map(|_| rng.random_range(0.0..12.0)).collect();
    let weight: Vec<f64> = (0..nv).map(|_| rng.random_range(0.1..2.0)).collect();
    let tilt: Vec<f64> = (0..na).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise: Vec<f64> = (0..nv * na * nb).map(|_| rng.random_range(-3.0..3.0)).collect();
    let max_phi: f64 = unit.iter().cloned().fold(0.0, f64::max) * nb as f64 * nv as f64;
    let lo = rng.random_range(0.0..max_phi * 0.6).floor();
    let hi = (lo + rng.random_range(0.0..max_phi * 0.6)).ceil();
    AdjustProblem::from_fn(
        nv,
        na,
        nb,
        |v, a, b| {
            let phi = unit[a] * (b + 1) as f64;
            let base = weight[v] * (phi - target[v]).powi(2) + tilt[a] * phi;
            if convex {
                base
            } else {
                base + noise[(v * na + a) * nb + b]
            }
        },
        |a, b| unit[a] * (b + 1) as f64,
        lo,
        hi,
    )
    .unwrap()
}
