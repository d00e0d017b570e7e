//! Size stage for fixed trajectories.
//!
//! With one trajectory per scenario the price stage is fixed, and the
//! objective becomes separable over branches: every (branch, lot-type,
//! multiplicity) choice has a profit coefficient, and only the lot-type
//! count and the total supply couple the branches.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::adjust::AdjustProblem;
use crate::error::{Error, Result};
use crate::model::{opening_cost, Instance, LotAssignment, LotChoice, LotType};
use crate::salesdyn::CellCurves;
use crate::trajectory::{PriceTrajectory, ScenarioTrajectoryMap};

const SUBSET_LIMIT: u128 = 200_000;

/// pi~(b, lot, m) indexed `[b][lot][multiplicity index]`, plus a constant
/// that does not depend on the assignment (the mark-down costs).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitCoefficients {
    n_branches: usize,
    n_lots: usize,
    n_mult: usize,
    values: Vec<f64>,
    pub constant: f64,
}

impl ProfitCoefficients {
    /// Just the handling costs, negated.
    pub fn handling_only(instance: &Instance) -> Self {
        Self::from_fn(instance, |b, lot, mi| -instance.handling_cost(b, lot, mi))
    }

    pub fn from_fn(instance: &Instance, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let (nb, nl, nm) = (
            instance.n_branches(),
            instance.n_lot_types(),
            instance.multiplicities.len(),
        );
        let mut values = Vec::with_capacity(nb * nl * nm);
        for b in 0..nb {
            for l in 0..nl {
                for mi in 0..nm {
                    values.push(f(b, l, mi));
                }
            }
        }
        Self {
            n_branches: nb,
            n_lots: nl,
            n_mult: nm,
            values,
            constant: 0.0,
        }
    }

    pub fn get(&self, b: usize, lot: usize, mi: usize) -> f64 {
        self.values[(b * self.n_lots + lot) * self.n_mult + mi]
    }

    /// Adds `weight` times the discounted yield of scenario `e` under `t`.
    pub fn add_scenario(&mut self, instance: &Instance, e: usize, t: &PriceTrajectory, weight: f64) {
        let curves = CellCurves::new(instance, e, t);
        for b in 0..self.n_branches {
            for (l, lot) in instance.lot_types.iter().enumerate() {
                for (mi, &m) in instance.multiplicities.iter().enumerate() {
                    let y: f64 = lot
                        .counts()
                        .iter()
                        .enumerate()
                        .map(|(s, &c)| curves.eval(b, s, f64::from(m * c)))
                        .sum();
                    self.values[(b * self.n_lots + l) * self.n_mult + mi] += weight * y;
                }
            }
        }
        self.constant -= weight * curves.markdown_cost();
    }

    /// Full objective of an assignment: coefficients, opening costs and the
    /// constant.
    pub fn value_of(&self, instance: &Instance, assignment: &LotAssignment) -> Result<f64> {
        let mut v = self.constant
            - opening_cost(&instance.opening_costs, assignment.used_lot_types().len());
        for (b, c) in assignment.choices.iter().enumerate() {
            let mi = instance
                .multiplicity_index(c.multiplicity)
                .ok_or_else(|| Error::Infeasible(format!("multiplicity {}", c.multiplicity)))?;
            v += self.get(b, c.lot, mi);
        }
        Ok(v)
    }
}

/// pi~ for a scenario-trajectory map.
pub fn modified_costs(instance: &Instance, map: &ScenarioTrajectoryMap) -> Result<ProfitCoefficients> {
    map.check(instance)?;
    let mut coeffs = ProfitCoefficients::handling_only(instance);
    for (e, sc) in instance.scenarios.iter().enumerate() {
        coeffs.add_scenario(instance, e, map.get(e), sc.probability);
    }
    Ok(coeffs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SopSolution {
    pub assignment: LotAssignment,
    pub value: f64,
    pub subsets_evaluated: usize,
}

/// Best assignment using only lot-types in `subset`, charged with the
/// opening cost of the lot-types it actually uses.
fn solve_subset(
    coeffs: &ProfitCoefficients,
    instance: &Instance,
    subset: &[usize],
) -> Result<Option<(f64, LotAssignment)>> {
    let mults = &instance.multiplicities;
    let problem = AdjustProblem::from_fn(
        instance.n_branches(),
        subset.len(),
        mults.len(),
        |b, a, mi| -coeffs.get(b, subset[a], mi),
        |a, mi| f64::from(mults[mi]) * instance.lot_types[subset[a]].pieces() as f64,
        instance.supply_lower as f64,
        instance.supply_upper as f64,
    )?;
    let solution = match problem.solve_integral() {
        Ok(s) => s,
        Err(Error::Infeasible(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let choices = solution
        .integral_choices()
        .expect("integral solve")
        .into_iter()
        .map(|(a, mi)| LotChoice {
            lot: subset[a],
            multiplicity: mults[mi],
        })
        .collect();
    let assignment = LotAssignment::new(choices);
    let value = -solution.objective + coeffs.constant
        - opening_cost(&instance.opening_costs, assignment.used_lot_types().len());
    Ok(Some((value, assignment)))
}

/// Evaluates subsets concurrently and keeps the first best in list order.
fn best_of(
    coeffs: &ProfitCoefficients,
    instance: &Instance,
    subsets: &[Vec<usize>],
) -> Result<Option<(f64, LotAssignment)>> {
    let results: Vec<Result<Option<(f64, LotAssignment)>>> = subsets
        .par_iter()
        .map(|s| solve_subset(coeffs, instance, s))
        .collect();
    let mut best: Option<(f64, LotAssignment)> = None;
    for r in results {
        if let Some((v, a)) = r? {
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, a));
            }
        }
    }
    Ok(best)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of lot-type subsets the exact solver would visit.
pub fn exact_subset_count(instance: &Instance) -> u128 {
    let l = instance.n_lot_types() as u128;
    (1..=instance.max_lot_types.min(instance.n_lot_types()) as u128)
        .map(|k| binomial(l, k))
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// Optimal assignment over all subsets of at most `max_lot_types`
/// lot-types.
pub fn solve_sop_exact(coeffs: &ProfitCoefficients, instance: &Instance) -> Result<SopSolution> {
    solve_sop_exact_with_limit(coeffs, instance, SUBSET_LIMIT)
}

pub fn solve_sop_exact_with_limit(
    coeffs: &ProfitCoefficients,
    instance: &Instance,
    subset_limit: u128,
) -> Result<SopSolution> {
    let count = exact_subset_count(instance);
    if count > subset_limit {
        return Err(Error::WorkLimit(format!(
            "{count} lot-type subsets exceed the limit of {subset_limit}"
        )));
    }
    let n = instance.n_lot_types();
    let mut subsets = Vec::with_capacity(count as usize);
    for k in 1..=instance.max_lot_types.min(n) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            subsets.push(idx.clone());
            // next k-combination in lexicographic order
            let mut i = k;
            while i > 0 && idx[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    match best_of(coeffs, instance, &subsets)? {
        Some((value, assignment)) => Ok(SopSolution {
            assignment,
            value,
            subsets_evaluated: subsets.len(),
        }),
        None => Err(Error::Infeasible(
            "no lot-type subset meets the supply bounds".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfaParams {
    /// Scores of the best, second best, ... lot-type of every branch.
    pub scores: Vec<f64>,
    /// Subsets evaluated per cardinality.
    pub subset_budget: usize,
}

impl Default for SfaParams {
    fn default() -> Self {
        Self {
            scores: vec![100.0, 10.0, 1.0],
            subset_budget: 50,
        }
    }
}

/// Total score per lot-type: each branch hands out `scores` to its best
/// lot-types, ranked by max over m of pi~.
pub fn lot_scores(coeffs: &ProfitCoefficients, scores: &[f64]) -> Vec<f64> {
    let mut total = vec![0.0; coeffs.n_lots];
    for b in 0..coeffs.n_branches {
        let mut ranked: Vec<(f64, usize)> = (0..coeffs.n_lots)
            .map(|l| {
                let best = (0..coeffs.n_mult)
                    .map(|mi| coeffs.get(b, l, mi))
                    .fold(f64::NEG_INFINITY, f64::max);
                (best, l)
            })
            .collect();
        ranked.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal).then(x.1.cmp(&y.1)));
        for ((_, l), s) in ranked.iter().zip(scores) {
            total[*l] += s;
        }
    }
    total
}

#[derive(PartialEq)]
struct Ranked {
    score: f64,
    positions: Vec<usize>,
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .partial_cmp(&other.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.positions.cmp(&self.positions))
    }
}

/// The first `budget` k-subsets of lot-types in descending total score,
/// generated lazily best-first.
pub fn top_subsets(scores: &[f64], k: usize, budget: usize) -> Vec<Vec<usize>> {
    let n = scores.len();
    if k == 0 || k > n || budget == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| scores[y].partial_cmp(&scores[x]).unwrap_or(Ordering::Equal).then(x.cmp(&y)));
    let sorted: Vec<f64> = order.iter().map(|&l| scores[l]).collect();
    let score_of = |pos: &[usize]| pos.iter().map(|&p| sorted[p]).sum::<f64>();
    let start: Vec<usize> = (0..k).collect();
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    seen.insert(start.clone());
    heap.push(Ranked {
        score: score_of(&start),
        positions: start,
    });
    let mut out = Vec::with_capacity(budget);
    while let Some(Ranked { positions, .. }) = heap.pop() {
        let mut subset: Vec<usize> = positions.iter().map(|&p| order[p]).collect();
        subset.sort_unstable();
        out.push(subset);
        if out.len() == budget {
            break;
        }
        for j in 0..k {
            let limit = if j + 1 < k { positions[j + 1] } else { n };
            if positions[j] + 1 < limit {
                let mut next = positions.clone();
                next[j] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Ranked {
                        score: score_of(&next),
                        positions: next,
                    });
                }
            }
        }
    }
    out
}

/// Score-Fix-Adjust: score lot-types per branch, fix promising subsets of
/// each size, adjust multiplicities exactly, keep the best in hindsight.
pub fn sfa_heuristic(
    coeffs: &ProfitCoefficients,
    instance: &Instance,
    params: &SfaParams,
) -> Result<SopSolution> {
    let scores = lot_scores(coeffs, &params.scores);
    let mut subsets = Vec::new();
    for k in 1..=instance.max_lot_types.min(instance.n_lot_types()) {
        subsets.extend(top_subsets(&scores, k, params.subset_budget));
    }
    match best_of(coeffs, instance, &subsets)? {
        Some((value, assignment)) => Ok(SopSolution {
            assignment,
            value,
            subsets_evaluated: subsets.len(),
        }),
        None => Err(Error::Infeasible(
            "no scored lot-type subset meets the supply bounds".into(),
        )),
    }
}

fn lot_text(lot: &LotType) -> String {
    lot.to_string()
}

/// CSV with columns branch, lot_type, multiplicity, delivered; the last
/// column reads like `4(2,2,3,4,3,3)`.
pub fn write_assignment_csv<W: Write>(out: W, instance: &Instance, assignment: &LotAssignment) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["branch", "lot_type", "multiplicity", "delivered"])?;
    for (b, c) in assignment.choices.iter().enumerate() {
        let lot = lot_text(&instance.lot_types[c.lot]);
        w.write_record([
            instance.branches[b].clone(),
            lot.clone(),
            c.multiplicity.to_string(),
            format!("{}{}", c.multiplicity, lot),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_assignment_csv`]; rows may come in any
/// order but must cover every branch once.
pub fn read_assignment_csv<R: Read>(input: R, instance: &Instance) -> Result<LotAssignment> {
    let mut r = csv::Reader::from_reader(input);
    let mut choices: Vec<Option<LotChoice>> = vec![None; instance.n_branches()];
    for row in r.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let b = instance
            .branches
            .iter()
            .position(|x| *x == field(0))
            .ok_or_else(|| Error::Dimension(format!("unknown branch {:?}", field(0))))?;
        let lot_str = field(1);
        let lot = instance
            .lot_types
            .iter()
            .position(|l| lot_text(l) == lot_str)
            .ok_or_else(|| Error::Dimension(format!("unknown lot-type {lot_str}")))?;
        let multiplicity: u32 = field(2)
            .parse()
            .map_err(|_| Error::Dimension(format!("bad multiplicity {:?}", field(2))))?;
        if choices[b].replace(LotChoice { lot, multiplicity }).is_some() {
            return Err(Error::Dimension(format!("branch {} listed twice", field(0))));
        }
    }
    let choices = choices
        .into_iter()
        .enumerate()
        .map(|(b, c)| c.ok_or_else(|| Error::Dimension(format!("branch {b} missing"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(LotAssignment::new(choices))
}
