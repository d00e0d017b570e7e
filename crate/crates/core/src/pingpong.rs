//! Ping-pong heuristic: alternate the size stage (trajectories fixed) and
//! the price stage (supply fixed) until nothing changes.
//!
//! The alternation is well defined because the problem has reversible
//! complete recourse: fixing either stage leaves the whole feasible set of
//! the other stage available.

use std::collections::HashSet;
use std::io::Write;

use crate::bnb::{IspoSolution, SolveStatus};
use crate::bounds::BoundTable;
use crate::error::{Error, Result};
use crate::model::{inventory_from_assignment, opening_cost, Instance, LotAssignment};
use crate::salesdyn::solve_pop_over;
use crate::sop::{modified_costs, sfa_heuristic, SfaParams};
use crate::trajectory::{instance_trajectories, preference_cmp, PriceTrajectory, ScenarioTrajectoryMap};

#[derive(Debug, Clone, PartialEq)]
pub struct PingPongParams {
    pub max_iters: usize,
    pub sfa: SfaParams,
}

impl Default for PingPongParams {
    fn default() -> Self {
        Self {
            max_iters: 10,
            sfa: SfaParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Objective after the size step, with the current map.
    pub sop_value: f64,
    /// Objective after the price step, with the new map.
    pub pop_value: f64,
    /// Whether the price step changed the map.
    pub changed: bool,
}

#[derive(Debug, Clone)]
pub struct PingPongOutcome {
    pub solution: IspoSolution,
    pub trace: Vec<TraceRow>,
}

impl PingPongOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// CSV with columns iter, sop_value, pop_value, changed.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "sop_value", "pop_value", "changed"])?;
        for row in &self.trace {
            w.write_record([
                row.iter.to_string(),
                format!("{:.4}", row.sop_value),
                format!("{:.4}", row.pop_value),
                if row.changed { "yes" } else { "no" }.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trajectory with the largest Gamma for every scenario.
pub fn best_bound_map(table: &BoundTable, trajectories: &[PriceTrajectory]) -> Result<ScenarioTrajectoryMap> {
    let mut entries = Vec::with_capacity(table.n_scenarios());
    for e in 0..table.n_scenarios() {
        let mut best: Option<usize> = None;
        for t in 0..trajectories.len() {
            let v = table.value(e, t);
            if !v.is_finite() {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let w = table.value(e, b);
                    v > w || (v == w && preference_cmp(&trajectories[t], &trajectories[b]).is_lt())
                }
            };
            if better {
                best = Some(t);
            }
        }
        let t = best.ok_or_else(|| Error::Infeasible("no trajectory can meet the supply bounds".into()))?;
        entries.push(trajectories[t].clone());
    }
    Ok(ScenarioTrajectoryMap::new(entries))
}

pub fn solve_pingpong(instance: &Instance, params: &PingPongParams) -> Result<PingPongOutcome> {
    let trajectories = instance_trajectories(instance);
    let table = BoundTable::compute(instance, &trajectories)?;
    solve_pingpong_with_table(instance, &trajectories, &table, params)
}

pub fn solve_pingpong_with_table(
    instance: &Instance,
    trajectories: &[PriceTrajectory],
    table: &BoundTable,
    params: &PingPongParams,
) -> Result<PingPongOutcome> {
    let mut map = best_bound_map(table, trajectories)?;
    let mut seen: HashSet<(LotAssignment, ScenarioTrajectoryMap)> = HashSet::new();
    let mut best: Option<(f64, LotAssignment, ScenarioTrajectoryMap)> = None;
    let mut trace = Vec::new();
    for iter in 1..=params.max_iters.max(1) {
        let coeffs = modified_costs(instance, &map)?;
        let sop = sfa_heuristic(&coeffs, instance, &params.sfa)?;
        if best.as_ref().is_none_or(|b| sop.value > b.0) {
            best = Some((sop.value, sop.assignment.clone(), map.clone()));
        }
        if !seen.insert((sop.assignment.clone(), map.clone())) {
            break;
        }
        let supply = inventory_from_assignment(&sop.assignment, instance).to_supply();
        let pop = solve_pop_over(&supply, instance, trajectories)?;
        let mut fixed = -opening_cost(&instance.opening_costs, sop.assignment.used_lot_types().len());
        for (b, c) in sop.assignment.choices.iter().enumerate() {
            fixed -= instance.handling_cost_of(b, *c)?;
        }
        let next = ScenarioTrajectoryMap::new(
            pop.per_scenario.into_iter().map(|s| s.trajectory).collect(),
        );
        let changed = next != map;
        trace.push(TraceRow {
            iter,
            sop_value: sop.value,
            pop_value: fixed + pop.expected,
            changed,
        });
        if !changed {
            break;
        }
        map = next;
    }
    let (objective, assignment, map) = best.expect("at least one iteration");
    Ok(PingPongOutcome {
        solution: IspoSolution {
            assignment,
            map,
            objective,
            status: SolveStatus::Heuristic,
            dual_bound: table.dual_bound(instance).max(objective),
        },
        trace,
    })
}
