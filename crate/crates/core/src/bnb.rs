//! Exact solver: depth-first branch-and-bound over scenario-trajectory maps.
//!
//! A node at depth `j` fixes the trajectories of scenarios `0..j`. Its bound
//! is the probability-weighted Gamma of the fixed trajectories plus the best
//! Gamma of every free scenario. Candidates are visited in descending Gamma,
//! so once one is pruned all later siblings are too. A leaf fixes the whole
//! map and is solved exactly on the size stage.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering as AtomicOrdering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bounds::BoundTable;
use crate::error::{Error, Result};
use crate::model::{
    inventory_from_assignment, ispo_objective, opening_cost, Instance, LotAssignment, LotChoice,
};
use crate::salesdyn::CellCurves;
use crate::sop::{solve_sop_exact, ProfitCoefficients};
use crate::trajectory::{instance_trajectories, preference_cmp, PriceTrajectory, ScenarioTrajectoryMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Heuristic,
    /// Stopped early; the dual bound is still valid.
    GapBounded,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Heuristic => "heuristic",
            SolveStatus::GapBounded => "gap-bounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IspoSolution {
    pub assignment: LotAssignment,
    pub map: ScenarioTrajectoryMap,
    pub objective: f64,
    pub status: SolveStatus,
    pub dual_bound: f64,
}

impl IspoSolution {
    /// (dual - objective) / |dual|, zero when both vanish.
    pub fn relative_gap(&self) -> f64 {
        let diff = self.dual_bound - self.objective;
        if diff <= 0.0 {
            0.0
        } else if self.dual_bound.abs() > 0.0 {
            diff / self.dual_bound.abs()
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeAction {
    Expand,
    Prune,
    Leaf,
}

impl fmt::Display for NodeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeAction::Expand => "expand",
            NodeAction::Prune => "prune",
            NodeAction::Leaf => "leaf",
        })
    }
}

/// One search-log line; `prefix` holds trajectory ids of the fixed
/// scenarios, the node's own choice last.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLog {
    pub depth: usize,
    pub prefix: Vec<usize>,
    pub bound: f64,
    pub action: NodeAction,
}

impl fmt::Display for NodeLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.prefix.iter().map(ToString::to_string).collect();
        write!(
            f,
            "depth={} prefix={} bound={:.4} action={}",
            self.depth,
            ids.join(","),
            self.bound,
            self.action
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct BnbParams {
    pub time_limit: Option<Duration>,
    /// A feasible warm start.
    pub incumbent: Option<(LotAssignment, ScenarioTrajectoryMap)>,
    pub record_log: bool,
    /// Search depth-0 subtrees concurrently.
    pub parallel: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BnbStats {
    pub nodes: usize,
    pub leaves: usize,
    pub pruned: usize,
    /// Leaves that improved the incumbent.
    pub improvements: usize,
    pub bound_evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct BnbOutcome {
    pub solution: IspoSolution,
    pub stats: BnbStats,
    pub log: Vec<NodeLog>,
}

/// Shared monotone incumbent value.
struct Incumbent(AtomicU64);

impl Incumbent {
    fn new(v: f64) -> Self {
        Self(AtomicU64::new(v.to_bits()))
    }

    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(AtomicOrdering::Acquire))
    }

    fn raise(&self, v: f64) -> bool {
        let mut cur = self.0.load(AtomicOrdering::Acquire);
        loop {
            if v <= f64::from_bits(cur) {
                return false;
            }
            match self.0.compare_exchange_weak(cur, v.to_bits(), AtomicOrdering::AcqRel, AtomicOrdering::Acquire) {
                Ok(_) => return true,
                Err(actual) => cur = actual,
            }
        }
    }
}

struct Shared<'a> {
    instance: &'a Instance,
    trajectories: &'a [PriceTrajectory],
    table: &'a BoundTable,
    order: Vec<Vec<usize>>,
    /// rest[j] = sum over h >= j of prob(h) max_t Gamma(h, t).
    rest: Vec<f64>,
    incumbent: Incumbent,
    deadline: Option<Instant>,
    timed_out: AtomicBool,
    record_log: bool,
}

#[derive(Default)]
struct Local {
    best: Option<(f64, LotAssignment, Vec<usize>)>,
    stats: BnbStats,
    log: Vec<NodeLog>,
    /// Bound of the highest node left unexplored by a timeout.
    open_bound: f64,
}

fn prune_slack(incumbent: f64) -> f64 {
    1e-10 * (1.0 + incumbent.abs())
}

impl Shared<'_> {
    fn prob(&self, e: usize) -> f64 {
        self.instance.scenarios[e].probability
    }

    fn bound(&self, depth: usize, prefix_value: f64, t: usize) -> f64 {
        prefix_value + self.prob(depth) * self.table.value(depth, t) + self.rest[depth + 1]
    }

    fn out_of_time(&self) -> bool {
        if self.timed_out.load(AtomicOrdering::Relaxed) {
            return true;
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out.store(true, AtomicOrdering::Relaxed);
            return true;
        }
        false
    }

    fn log(&self, local: &mut Local, depth: usize, prefix: &[usize], bound: f64, action: NodeAction) {
        if self.record_log {
            local.log.push(NodeLog {
                depth,
                prefix: prefix.to_vec(),
                bound,
                action,
            });
        }
    }

    /// Visits the children of a node at `depth` (scenario `depth` is free).
    fn children(
        &self,
        local: &mut Local,
        depth: usize,
        prefix: &mut Vec<usize>,
        prefix_value: f64,
        coeffs: &ProfitCoefficients,
    ) -> Result<()> {
        for &t in &self.order[depth] {
            let bound = self.bound(depth, prefix_value, t);
            if self.out_of_time() {
                local.open_bound = local.open_bound.max(bound);
                return Ok(());
            }
            local.stats.bound_evaluations += 1;
            let inc = self.incumbent.get();
            prefix.push(t);
            if bound <= inc + prune_slack(inc) {
                local.stats.pruned += 1;
                self.log(local, depth, prefix, bound, NodeAction::Prune);
                prefix.pop();
                break;
            }
            self.node(local, depth, prefix, prefix_value, bound, coeffs, t)?;
            prefix.pop();
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn node(
        &self,
        local: &mut Local,
        depth: usize,
        prefix: &mut Vec<usize>,
        prefix_value: f64,
        bound: f64,
        coeffs: &ProfitCoefficients,
        t: usize,
    ) -> Result<()> {
        local.stats.nodes += 1;
        let mut next = coeffs.clone();
        next.add_scenario(self.instance, depth, &self.trajectories[t], self.prob(depth));
        let value = prefix_value + self.prob(depth) * self.table.value(depth, t);
        if depth + 1 < self.instance.n_scenarios() {
            self.log(local, depth, prefix, bound, NodeAction::Expand);
            return self.children(local, depth + 1, prefix, value, &next);
        }
        self.log(local, depth, prefix, bound, NodeAction::Leaf);
        local.stats.leaves += 1;
        match solve_sop_exact(&next, self.instance) {
            Ok(sol) => {
                let inc = self.incumbent.get();
                if sol.value <= inc + prune_slack(inc) {
                    return Ok(());
                }
                if self.incumbent.raise(sol.value) {
                    local.stats.improvements += 1;
                }
                let better = local.best.as_ref().is_none_or(|(v, _, _)| sol.value > *v);
                if better {
                    local.best = Some((sol.value, sol.assignment, prefix.clone()));
                }
                Ok(())
            }
            Err(Error::Infeasible(_)) => Ok(()),
            Err(e) => Err(e),
        }
    }
}

/// Exact optimum by branch-and-bound over maps.
pub fn solve_ispo_exact(instance: &Instance, params: &BnbParams) -> Result<BnbOutcome> {
    let trajectories = instance_trajectories(instance);
    let table = BoundTable::compute(instance, &trajectories)?;
    solve_with_table(instance, &trajectories, &table, params)
}

/// As [`solve_ispo_exact`] with a precomputed bound table over
/// `trajectories`.
pub fn solve_with_table(
    instance: &Instance,
    trajectories: &[PriceTrajectory],
    table: &BoundTable,
    params: &BnbParams,
) -> Result<BnbOutcome> {
    let ne = instance.n_scenarios();
    let order: Vec<Vec<usize>> = (0..ne)
        .map(|e| {
            let mut ids: Vec<usize> = (0..trajectories.len())
                .filter(|&t| table.value(e, t).is_finite())
                .collect();
            ids.sort_by(|&a, &b| {
                table
                    .value(e, b)
                    .partial_cmp(&table.value(e, a))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| preference_cmp(&trajectories[a], &trajectories[b]))
            });
            ids
        })
        .collect();
    if order.iter().any(Vec::is_empty) {
        return Err(Error::Infeasible("no trajectory can meet the supply bounds".into()));
    }
    let mut rest = vec![0.0; ne + 1];
    for e in (0..ne).rev() {
        rest[e] = rest[e + 1] + instance.scenarios[e].probability * table.value(e, order[e][0]);
    }
    let mut warm: Option<(f64, LotAssignment, ScenarioTrajectoryMap)> = None;
    if let Some((a, map)) = &params.incumbent {
        let v = ispo_objective(a, map, instance)?;
        warm = Some((v, a.clone(), map.clone()));
    }
    let shared = Shared {
        instance,
        trajectories,
        table,
        order,
        rest,
        incumbent: Incumbent::new(warm.as_ref().map_or(f64::NEG_INFINITY, |w| w.0)),
        deadline: params.time_limit.map(|d| Instant::now() + d),
        timed_out: AtomicBool::new(false),
        record_log: params.record_log,
    };
    let root = ProfitCoefficients::handling_only(instance);
    let first = shared.order[0].clone();
    let run = |t: usize| -> Result<Local> {
        let mut local = Local {
            open_bound: f64::NEG_INFINITY,
            ..Local::default()
        };
        let bound = shared.bound(0, 0.0, t);
        let mut prefix = vec![t];
        if shared.out_of_time() {
            local.open_bound = bound;
            return Ok(local);
        }
        local.stats.bound_evaluations += 1;
        let inc = shared.incumbent.get();
        if bound <= inc + prune_slack(inc) {
            local.stats.pruned += 1;
            shared.log(&mut local, 0, &prefix, bound, NodeAction::Prune);
            return Ok(local);
        }
        shared.node(&mut local, 0, &mut prefix, 0.0, bound, &root, t)?;
        Ok(local)
    };
    let locals: Vec<Local> = if params.parallel {
        first.par_iter().map(|&t| run(t)).collect::<Result<Vec<_>>>()?
    } else {
        let mut out = Vec::with_capacity(first.len());
        for &t in &first {
            let local = run(t)?;
            let pruned_root = local.stats.nodes == 0 && local.stats.pruned == 1;
            out.push(local);
            if pruned_root {
                // later roots have smaller bounds
                break;
            }
        }
        out
    };

    let mut stats = BnbStats::default();
    let mut log = Vec::new();
    let mut best: Option<(f64, LotAssignment, Vec<usize>)> = None;
    let mut open = f64::NEG_INFINITY;
    for local in locals {
        stats.nodes += local.stats.nodes;
        stats.leaves += local.stats.leaves;
        stats.pruned += local.stats.pruned;
        stats.improvements += local.stats.improvements;
        stats.bound_evaluations += local.stats.bound_evaluations;
        log.extend(local.log);
        open = open.max(local.open_bound);
        if let Some(candidate) = local.best {
            if best.as_ref().is_none_or(|b| candidate.0 > b.0) {
                best = Some(candidate);
            }
        }
    }
    let timed_out = shared.timed_out.load(AtomicOrdering::Relaxed);
    let (objective, assignment, map) = match (best, warm) {
        (Some((v, a, ids)), Some((wv, wa, wm))) => {
            if v > wv + prune_slack(wv) {
                (v, a, ids_to_map(trajectories, &ids))
            } else {
                (wv, wa, wm)
            }
        }
        (Some((v, a, ids)), None) => (v, a, ids_to_map(trajectories, &ids)),
        (None, Some((wv, wa, wm))) => (wv, wa, wm),
        (None, None) => {
            return Err(if timed_out {
                Error::WorkLimit("time limit reached before a feasible solution was found".into())
            } else {
                Error::Infeasible("no feasible assignment".into())
            });
        }
    };
    let (status, dual_bound) = if timed_out {
        (SolveStatus::GapBounded, objective.max(open))
    } else {
        (SolveStatus::Optimal, objective)
    };
    Ok(BnbOutcome {
        solution: IspoSolution {
            assignment,
            map,
            objective,
            status,
            dual_bound,
        },
        stats,
        log,
    })
}

fn ids_to_map(trajectories: &[PriceTrajectory], ids: &[usize]) -> ScenarioTrajectoryMap {
    ScenarioTrajectoryMap::new(ids.iter().map(|&t| trajectories[t].clone()).collect())
}

/// opt(e, t): best single-scenario contribution for a fixed trajectory,
/// solved exactly on the size stage.
pub fn exact_pair_optimum(instance: &Instance, e: usize, t: &PriceTrajectory) -> Result<f64> {
    let mut coeffs = ProfitCoefficients::handling_only(instance);
    coeffs.add_scenario(instance, e, t, 1.0);
    Ok(solve_sop_exact(&coeffs, instance)?.value)
}

const BRUTE_LIMIT: u128 = 200_000_000;

/// Flat maximization over every assignment and every map. Test oracle.
pub fn brute_force_ispo(instance: &Instance) -> Result<IspoSolution> {
    brute_force_with_limit(instance, BRUTE_LIMIT)
}

pub fn brute_force_with_limit(instance: &Instance, limit: u128) -> Result<IspoSolution> {
    let trajectories = instance_trajectories(instance);
    let nb = instance.n_branches();
    let ne = instance.n_scenarios();
    let options: Vec<LotChoice> = (0..instance.n_lot_types())
        .flat_map(|lot| {
            instance
                .multiplicities
                .iter()
                .map(move |&multiplicity| LotChoice { lot, multiplicity })
        })
        .collect();
    let assignments = (options.len() as u128).checked_pow(nb as u32);
    let maps = (trajectories.len() as u128).checked_pow(ne as u32);
    let work = match (assignments, maps) {
        (Some(a), Some(m)) => a.checked_mul(m),
        _ => None,
    };
    if work.is_none_or(|w| w > limit) {
        return Err(Error::WorkLimit("brute force search space too large".into()));
    }
    let curves: Vec<Vec<CellCurves>> = (0..ne)
        .map(|e| trajectories.iter().map(|t| CellCurves::new(instance, e, t)).collect())
        .collect();
    let mut best: Option<(f64, LotAssignment, Vec<usize>)> = None;
    let mut idx = vec![0usize; nb];
    let mut pop = vec![vec![0.0; trajectories.len()]; ne];
    let mut map = vec![0usize; ne];
    'outer: loop {
        let assignment = LotAssignment::new(idx.iter().map(|&i| options[i]).collect());
        if instance.check_assignment(&assignment).is_ok() {
            let supply = inventory_from_assignment(&assignment, instance).to_supply();
            let mut fixed = -opening_cost(&instance.opening_costs, assignment.used_lot_types().len());
            for (b, c) in assignment.choices.iter().enumerate() {
                fixed -= instance.handling_cost_of(b, *c)?;
            }
            for e in 0..ne {
                for (t, c) in curves[e].iter().enumerate() {
                    pop[e][t] = c.pop_value(&supply);
                }
            }
            map.iter_mut().for_each(|x| *x = 0);
            loop {
                let v = fixed
                    + (0..ne)
                        .map(|e| instance.scenarios[e].probability * pop[e][map[e]])
                        .sum::<f64>();
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, assignment.clone(), map.clone()));
                }
                let mut e = 0;
                loop {
                    if e == ne {
                        break;
                    }
                    map[e] += 1;
                    if map[e] < trajectories.len() {
                        break;
                    }
                    map[e] = 0;
                    e += 1;
                }
                if e == ne {
                    break;
                }
            }
        }
        let mut i = 0;
        loop {
            if i == nb {
                break 'outer;
            }
            idx[i] += 1;
            if idx[i] < options.len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
    let (objective, assignment, ids) =
        best.ok_or_else(|| Error::Infeasible("no feasible assignment".into()))?;
    Ok(IspoSolution {
        assignment,
        map: ids_to_map(&trajectories, &ids),
        objective,
        status: SolveStatus::Optimal,
        dual_bound: objective,
    })
}
