//! Cheap upper bounds Gamma(e, t) on the best profit contribution of a
//! single scenario `e` under a fixed trajectory `t`:
//!
//! opt(e, t) = max over assignments of
//!     sum lambda(I_bs) - handling - opening - markdown cost of t.
//!
//! All bounds drop the lot-type cardinality limit and charge only the first
//! opening cost.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::adjust::AdjustProblem;
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::salesdyn::CellCurves;
use crate::trajectory::PriceTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Itemwise,
    ItemwiseSupply,
    Lotwise,
    Exact,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Itemwise => "itemwise",
            Provenance::ItemwiseSupply => "itemwise-supply",
            Provenance::Lotwise => "lotwise",
            Provenance::Exact => "exact",
        })
    }
}

/// How much handling cost is charged to a single item of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostApportionment {
    /// Cheapest per-item handling cost over all lots containing the size.
    #[default]
    MinPerItem,
    Zero,
}

/// Per-cell data shared by the itemwise bounds.
struct CellTerms {
    /// Largest achievable supply per size.
    max_level: Vec<usize>,
    /// Per-item cost `[b][s]`.
    rate: Vec<f64>,
    n_sizes: usize,
}

impl CellTerms {
    fn new(instance: &Instance, apportion: CostApportionment) -> Self {
        let ns = instance.n_sizes();
        let max_m = *instance.multiplicities.last().unwrap_or(&0) as usize;
        let max_level = (0..ns)
            .map(|s| {
                let l = instance
                    .lot_types
                    .iter()
                    .map(|lot| lot.count(s) as usize)
                    .max()
                    .unwrap_or(0);
                max_m * l
            })
            .collect();
        let mut rate = vec![0.0; instance.n_branches() * ns];
        if apportion == CostApportionment::MinPerItem {
            for b in 0..instance.n_branches() {
                for s in 0..ns {
                    let mut best = f64::INFINITY;
                    for (li, lot) in instance.lot_types.iter().enumerate() {
                        if lot.count(s) == 0 {
                            continue;
                        }
                        for (mi, &m) in instance.multiplicities.iter().enumerate() {
                            let items = f64::from(m) * lot.pieces() as f64;
                            best = best.min(instance.handling_cost(b, li, mi) / items);
                        }
                    }
                    rate[b * ns + s] = if best.is_finite() { best.max(0.0) } else { 0.0 };
                }
            }
        }
        Self {
            max_level,
            rate,
            n_sizes: ns,
        }
    }

    fn net(&self, curves: &CellCurves, b: usize, s: usize, i: usize) -> f64 {
        curves.eval(b, s, i as f64) - self.rate[b * self.n_sizes + s] * i as f64
    }
}

/// max over `lo..=hi` of a concave integer function, by bisection on the
/// forward difference.
fn maximize_concave(f: impl Fn(usize) -> f64, lo: usize, hi: usize) -> f64 {
    let (mut l, mut h) = (lo, hi);
    while l < h {
        let mid = l + (h - l) / 2;
        if f(mid + 1) > f(mid) {
            l = mid + 1;
        } else {
            h = mid;
        }
    }
    f(l)
}

fn maximize_scan(f: impl Fn(usize) -> f64, lo: usize, hi: usize) -> f64 {
    (lo..=hi).map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// lambda is concave when the period weights e^{-rho k} pi_{p(k)} never
/// increase, which holds for every feasible trajectory; checked anyway.
fn curve_weights_concave(instance: &Instance, t: &PriceTrajectory) -> bool {
    let w: Vec<f64> = t
        .indices()
        .iter()
        .enumerate()
        .map(|(k, &p)| instance.discount(k) * instance.prices[p])
        .collect();
    w.windows(2).all(|x| x[1] <= x[0] + 1e-12)
}

pub fn bound_itemwise(instance: &Instance, e: usize, t: &PriceTrajectory) -> f64 {
    bound_itemwise_with(instance, e, t, CostApportionment::default())
}

pub fn bound_itemwise_with(
    instance: &Instance,
    e: usize,
    t: &PriceTrajectory,
    apportion: CostApportionment,
) -> f64 {
    let curves = CellCurves::new(instance, e, t);
    let terms = CellTerms::new(instance, apportion);
    itemwise(instance, t, &curves, &terms)
}

fn itemwise(instance: &Instance, t: &PriceTrajectory, curves: &CellCurves, terms: &CellTerms) -> f64 {
    let concave = curve_weights_concave(instance, t);
    let mut total = -instance.opening_costs[0] - curves.markdown_cost();
    for b in 0..instance.n_branches() {
        for s in 0..instance.n_sizes() {
            let f = |i: usize| terms.net(curves, b, s, i);
            total += if concave {
                maximize_concave(f, 0, terms.max_level[s])
            } else {
                maximize_scan(f, 0, terms.max_level[s])
            };
        }
    }
    total
}

pub fn bound_itemwise_supply(instance: &Instance, e: usize, t: &PriceTrajectory) -> Result<f64> {
    let curves = CellCurves::new(instance, e, t);
    let terms = CellTerms::new(instance, CostApportionment::default());
    itemwise_supply(instance, &curves, &terms)
}

fn itemwise_supply(instance: &Instance, curves: &CellCurves, terms: &CellTerms) -> Result<f64> {
    let ns = instance.n_sizes();
    let nv = instance.n_branches() * ns;
    let levels = terms.max_level.iter().copied().max().unwrap_or(0) + 1;
    let problem = AdjustProblem::from_fn(
        nv,
        1,
        levels,
        |v, _, i| {
            let (b, s) = (v / ns, v % ns);
            if i > terms.max_level[s] {
                f64::INFINITY
            } else {
                -terms.net(curves, b, s, i)
            }
        },
        |_, i| i as f64,
        instance.supply_lower as f64,
        instance.supply_upper as f64,
    )?;
    let relaxed = problem.solve_relaxed().map_err(|err| match err {
        Error::Infeasible(_) => Error::Infeasible("supply bounds unreachable for this trajectory".into()),
        other => other,
    })?;
    Ok(-instance.opening_costs[0] - relaxed.objective - curves.markdown_cost())
}

/// `None` when the lot profit is not convex in the multiplicity index.
pub fn bound_lotwise(instance: &Instance, e: usize, t: &PriceTrajectory) -> Result<Option<f64>> {
    let curves = CellCurves::new(instance, e, t);
    lotwise(instance, &curves)
}

/// Discounted yield of branch `b` receiving `m` lots of lot-type `lot`.
fn lot_yield(instance: &Instance, curves: &CellCurves, b: usize, lot: usize, m: u32) -> f64 {
    instance.lot_types[lot]
        .counts()
        .iter()
        .enumerate()
        .map(|(s, &l)| curves.eval(b, s, f64::from(m * l)))
        .sum()
}

fn lotwise(instance: &Instance, curves: &CellCurves) -> Result<Option<f64>> {
    let problem = AdjustProblem::from_fn(
        instance.n_branches(),
        instance.n_lot_types(),
        instance.multiplicities.len(),
        |b, lot, mi| {
            let m = instance.multiplicities[mi];
            instance.handling_cost(b, lot, mi) - lot_yield(instance, curves, b, lot, m)
        },
        |lot, mi| f64::from(instance.multiplicities[mi]) * instance.lot_types[lot].pieces() as f64,
        instance.supply_lower as f64,
        instance.supply_upper as f64,
    )?;
    if !problem.is_convex() {
        return Ok(None);
    }
    let relaxed = problem.solve_relaxed()?;
    Ok(Some(
        -instance.opening_costs[0] - relaxed.objective - curves.markdown_cost(),
    ))
}

/// The tightest of the three bounds and which one won.
pub fn gamma(instance: &Instance, e: usize, t: &PriceTrajectory) -> Result<(f64, Provenance)> {
    let terms = CellTerms::new(instance, CostApportionment::default());
    gamma_with(instance, e, t, &terms)
}

fn gamma_with(
    instance: &Instance,
    e: usize,
    t: &PriceTrajectory,
    terms: &CellTerms,
) -> Result<(f64, Provenance)> {
    let curves = CellCurves::new(instance, e, t);
    let mut best = (itemwise(instance, t, &curves, terms), Provenance::Itemwise);
    let supply = itemwise_supply(instance, &curves, terms)?;
    if supply < best.0 {
        best = (supply, Provenance::ItemwiseSupply);
    }
    if let Some(lot) = lotwise(instance, &curves)? {
        if lot < best.0 {
            best = (lot, Provenance::Lotwise);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEntry {
    pub value: f64,
    pub provenance: Provenance,
}

/// Gamma for every (scenario, trajectory id); entries only ever decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTable {
    entries: Vec<Vec<BoundEntry>>,
}

impl BoundTable {
    /// Computes every entry concurrently. A trajectory that cannot meet the
    /// supply bounds gets `-inf`.
    pub fn compute(instance: &Instance, trajectories: &[PriceTrajectory]) -> Result<Self> {
        let terms = CellTerms::new(instance, CostApportionment::default());
        let ne = instance.n_scenarios();
        let flat: Vec<Result<BoundEntry>> = (0..ne * trajectories.len())
            .into_par_iter()
            .map(|idx| {
                let (e, j) = (idx / trajectories.len(), idx % trajectories.len());
                match gamma_with(instance, e, &trajectories[j], &terms) {
                    Ok((value, provenance)) => Ok(BoundEntry { value, provenance }),
                    Err(Error::Infeasible(_)) => Ok(BoundEntry {
                        value: f64::NEG_INFINITY,
                        provenance: Provenance::ItemwiseSupply,
                    }),
                    Err(err) => Err(err),
                }
            })
            .collect();
        let mut entries = Vec::with_capacity(ne);
        let mut it = flat.into_iter();
        for _ in 0..ne {
            let row = it
                .by_ref()
                .take(trajectories.len())
                .collect::<Result<Vec<_>>>()?;
            entries.push(row);
        }
        Ok(Self { entries })
    }

    pub fn n_scenarios(&self) -> usize {
        self.entries.len()
    }

    pub fn n_trajectories(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn get(&self, e: usize, t: usize) -> BoundEntry {
        self.entries[e][t]
    }

    pub fn value(&self, e: usize, t: usize) -> f64 {
        self.entries[e][t].value
    }

    pub fn row(&self, e: usize) -> &[BoundEntry] {
        &self.entries[e]
    }

    /// Min-merge; returns whether the entry changed.
    pub fn tighten(&mut self, e: usize, t: usize, value: f64, provenance: Provenance) -> bool {
        let entry = &mut self.entries[e][t];
        if value < entry.value {
            *entry = BoundEntry { value, provenance };
            true
        } else {
            false
        }
    }

    /// max_t Gamma(e, t).
    pub fn best(&self, e: usize) -> f64 {
        self.entries[e]
            .iter()
            .map(|x| x.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// sum_e prob(e) max_t Gamma(e, t): an upper bound on the optimum.
    pub fn dual_bound(&self, instance: &Instance) -> f64 {
        instance
            .scenarios
            .iter()
            .enumerate()
            .map(|(e, sc)| sc.probability * self.best(e))
            .sum()
    }

    /// CSV with columns scenario, trajectory, bound, provenance.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "trajectory", "bound", "provenance"])?;
        for (e, row) in self.entries.iter().enumerate() {
            for (t, entry) in row.iter().enumerate() {
                w.write_record([
                    e.to_string(),
                    t.to_string(),
                    format!("{:.4}", entry.value),
                    entry.provenance.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tiny_instance, DemandTensor, HandlingCost};
    use crate::trajectory::instance_trajectories;
    use proptest::prelude::*;

    fn zero_demand(seed: u64) -> Instance {
        let mut inst = tiny_instance(seed);
        let [k, p, b, s] = inst.scenarios[0].demand.dims();
        for sc in &mut inst.scenarios {
            sc.demand = DemandTensor::zeros(k, p, b, s);
        }
        inst.markdown_costs = vec![0.0; inst.n_periods()];
        inst
    }

    #[test]
    fn zero_demand_gives_minus_first_opening_cost() {
        let mut inst = zero_demand(4);
        inst.supply_lower = 0;
        for t in instance_trajectories(&inst) {
            assert_eq!(bound_itemwise(&inst, 0, &t), -inst.opening_costs[0]);
            // every branch pays for at least one lot
            let (g, prov) = gamma(&inst, 1, &t).unwrap();
            assert_eq!(prov, Provenance::Lotwise);
            let cheapest: f64 = (0..inst.n_branches())
                .map(|b| {
                    (0..inst.n_lot_types())
                        .map(|l| inst.handling_cost(b, l, 0))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            assert!((g + inst.opening_costs[0] + cheapest).abs() < 1e-9);
        }
        inst.handling = HandlingCost::Parametric {
            acquisition_per_item: 0.0,
            pick_cost: 0.0,
        };
        for t in instance_trajectories(&inst) {
            let (g, _) = gamma(&inst, 0, &t).unwrap();
            assert_eq!(g, -inst.opening_costs[0]);
        }
    }

    #[test]
    fn inactive_supply_bounds_match_itemwise() {
        let mut inst = tiny_instance(5);
        inst.supply_lower = 0;
        inst.supply_upper = u64::MAX / 4;
        for t in instance_trajectories(&inst) {
            let a = bound_itemwise(&inst, 0, &t);
            let b = bound_itemwise_supply(&inst, 0, &t).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_upper_supply() {
        let mut inst = tiny_instance(6);
        inst.supply_lower = 0;
        inst.supply_upper = 0;
        inst.markdown_costs = vec![0.0; inst.n_periods()];
        let t = &instance_trajectories(&inst)[0];
        let v = bound_itemwise_supply(&inst, 0, t).unwrap();
        assert!((v + inst.opening_costs[0]).abs() < 1e-9);
    }

    #[test]
    fn free_handling_lotwise_is_separable() {
        let mut inst = tiny_instance(7);
        inst.handling = HandlingCost::Parametric {
            acquisition_per_item: 0.0,
            pick_cost: 0.0,
        };
        inst.supply_lower = 0;
        inst.supply_upper = u64::MAX / 4;
        for t in instance_trajectories(&inst) {
            let curves = CellCurves::new(&inst, 1, &t);
            let mut expect = -inst.opening_costs[0] - curves.markdown_cost();
            for b in 0..inst.n_branches() {
                let mut best = f64::NEG_INFINITY;
                for lot in 0..inst.n_lot_types() {
                    for &m in &inst.multiplicities {
                        best = best.max(lot_yield(&inst, &curves, b, lot, m));
                    }
                }
                expect += best;
            }
            let got = bound_lotwise(&inst, 1, &t).unwrap().unwrap();
            assert!((got - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn table_tightens_only() {
        let inst = tiny_instance(8);
        let trajs = instance_trajectories(&inst);
        let mut table = BoundTable::compute(&inst, &trajs).unwrap();
        let before = table.get(0, 0);
        assert!(!table.tighten(0, 0, before.value + 1.0, Provenance::Exact));
        assert_eq!(table.get(0, 0), before);
        assert!(table.tighten(0, 0, before.value - 1.0, Provenance::Exact));
        assert_eq!(table.get(0, 0).provenance, Provenance::Exact);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scenario,trajectory,bound,provenance\n"));
        assert_eq!(text.lines().count(), 1 + 2 * trajs.len());
    }

    proptest! {
        #[test]
        fn bisection_matches_scan(seed in 0u64..200) {
            let inst = tiny_instance(seed);
            let terms = CellTerms::new(&inst, CostApportionment::MinPerItem);
            for e in 0..inst.n_scenarios() {
                for t in instance_trajectories(&inst) {
                    let curves = CellCurves::new(&inst, e, &t);
                    prop_assert!(curve_weights_concave(&inst, &t));
                    for b in 0..inst.n_branches() {
                        for s in 0..inst.n_sizes() {
                            let f = |i: usize| terms.net(&curves, b, s, i);
                            let hi = terms.max_level[s];
                            let x = maximize_concave(f, 0, hi);
                            let y = maximize_scan(f, 0, hi);
                            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
                        }
                    }
                }
            }
        }

        #[test]
        fn supply_bound_not_above_itemwise(seed in 0u64..200) {
            let inst = tiny_instance(seed);
            for e in 0..inst.n_scenarios() {
                for t in instance_trajectories(&inst) {
                    let a = bound_itemwise(&inst, e, &t);
                    if let Ok(b) = bound_itemwise_supply(&inst, e, &t) {
                        prop_assert!(b <= a + 1e-9);
                    }
                    let zero = bound_itemwise_with(&inst, e, &t, CostApportionment::Zero);
                    prop_assert!(a <= zero + 1e-9);
                }
            }
        }
    }
}
