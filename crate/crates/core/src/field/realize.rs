//! Stochastic sales: Poisson demand around the scenario means, truncated
//! at the stock on hand.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::model::{Instance, Inventory};
use crate::trajectory::{PriceTrajectory, ScenarioTrajectoryMap};

use super::rhpop::{RhPlanner, RhState};

/// Poisson means above this are treated as selling out.
const SELL_OUT_MEAN: f64 = 1e15;

#[derive(Debug, Clone, PartialEq)]
pub enum PricingPolicy {
    /// One trajectory per scenario, followed blindly.
    OpenLoop(ScenarioTrajectoryMap),
    Fixed(PriceTrajectory),
    RhPop { smoothing: f64 },
}

/// Realized sales of one article. Arrays are `[k][b][s]` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub scenario: usize,
    pub n_branches: usize,
    pub n_sizes: usize,
    /// Price index per period.
    pub prices: Vec<usize>,
    pub stock_before: Vec<u64>,
    pub sales: Vec<u64>,
    pub terminal_stock: Vec<u64>,
    /// Demand scale estimate before each period; empty unless planned
    /// with RH-POP.
    pub alpha: Vec<f64>,
}

impl Realization {
    fn idx(&self, k: usize, b: usize, s: usize) -> usize {
        (k * self.n_branches + b) * self.n_sizes + s
    }

    pub fn n_periods(&self) -> usize {
        self.prices.len()
    }

    pub fn sales_at(&self, k: usize, b: usize, s: usize) -> u64 {
        self.sales[self.idx(k, b, s)]
    }

    pub fn stock_at(&self, k: usize, b: usize, s: usize) -> u64 {
        self.stock_before[self.idx(k, b, s)]
    }

    pub fn yield_at(&self, k: usize, b: usize, s: usize, instance: &Instance) -> f64 {
        instance.prices[self.prices[k]] * self.sales_at(k, b, s) as f64
    }

    /// Price change flag per period, the move to salvage included.
    pub fn markdown_flags(&self) -> Vec<bool> {
        (0..self.prices.len())
            .map(|k| k > 0 && self.prices[k] != self.prices[k - 1])
            .collect()
    }

    pub fn total_sales(&self) -> u64 {
        self.sales.iter().sum()
    }
}

fn draw_sales<R: Rng>(rng: &mut R, mean: f64, stock: u64) -> u64 {
    if stock == 0 || mean <= 0.0 {
        return 0;
    }
    if !mean.is_finite() || mean >= SELL_OUT_MEAN {
        return stock;
    }
    let d: f64 = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(f64::INFINITY);
    if d >= stock as f64 {
        stock
    } else {
        d as u64
    }
}

/// Scenario drawn from the instance probabilities.
pub fn draw_scenario<R: Rng>(instance: &Instance, rng: &mut R) -> Result<usize> {
    let w = WeightedIndex::new(instance.scenarios.iter().map(|s| s.probability))
        .map_err(|e| Error::Dimension(format!("scenario weights: {e}")))?;
    Ok(w.sample(rng))
}

/// Draws the scenario, then the sales path. Deterministic in `seed`.
pub fn realize_sales(
    instance: &Instance,
    supply: &Inventory,
    policy: &PricingPolicy,
    seed: u64,
) -> Result<Realization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = draw_scenario(instance, &mut rng)?;
    realize_with_scenario(instance, supply, policy, e, &mut rng)
}

/// Sales path for a known scenario.
pub fn realize_with_scenario<R: Rng>(
    instance: &Instance,
    supply: &Inventory,
    policy: &PricingPolicy,
    e: usize,
    rng: &mut R,
) -> Result<Realization> {
    let nb = instance.n_branches();
    let ns = instance.n_sizes();
    if supply.cells().len() != nb * ns {
        return Err(Error::Dimension(format!(
            "supply has {} cells, instance has {}",
            supply.cells().len(),
            nb * ns
        )));
    }
    if e >= instance.n_scenarios() {
        return Err(Error::Dimension(format!("scenario {e} does not exist")));
    }
    let fixed = match policy {
        PricingPolicy::OpenLoop(map) => {
            map.check(instance)?;
            Some(map.get(e).clone())
        }
        PricingPolicy::Fixed(t) => {
            t.check(instance)?;
            Some(t.clone())
        }
        PricingPolicy::RhPop { .. } => None,
    };
    let planner = match policy {
        PricingPolicy::RhPop { smoothing } => {
            if !(*smoothing > 0.0 && *smoothing <= 1.0) {
                return Err(Error::Dimension(format!("smoothing {smoothing} outside (0, 1]")));
            }
            Some(RhPlanner::new(instance))
        }
        _ => None,
    };
    let demand = &instance.scenarios[e].demand;
    let nk = instance.n_periods();
    let mut stock: Vec<u64> = supply.cells().to_vec();
    let mut state = planner.as_ref().map(|_| {
        let smoothing = match policy {
            PricingPolicy::RhPop { smoothing } => *smoothing,
            _ => unreachable!(),
        };
        RhState::new(stock.iter().map(|&x| x as f64).collect(), smoothing)
    });
    let mut out = Realization {
        scenario: e,
        n_branches: nb,
        n_sizes: ns,
        prices: Vec::with_capacity(nk),
        stock_before: Vec::with_capacity(nk * nb * ns),
        sales: Vec::with_capacity(nk * nb * ns),
        terminal_stock: Vec::new(),
        alpha: Vec::new(),
    };
    for k in 0..nk {
        let p = match (&fixed, &state) {
            (Some(t), _) => t.indices()[k],
            (None, Some(st)) => {
                out.alpha.push(st.alpha);
                st.price
            }
            _ => unreachable!(),
        };
        out.prices.push(p);
        let mut observed = Vec::with_capacity(nb * ns);
        for b in 0..nb {
            for s in 0..ns {
                let cell = b * ns + s;
                let sold = draw_sales(rng, demand.get(k, p, b, s), stock[cell]);
                out.stock_before.push(stock[cell]);
                out.sales.push(sold);
                stock[cell] -= sold;
                observed.push(sold as f64);
            }
        }
        if let (Some(pl), Some(st)) = (&planner, &state) {
            state = Some(pl.step(st, &observed).0);
        }
    }
    out.terminal_stock = stock;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tiny_instance, DemandTensor, LotAssignment, LotChoice};
    use crate::inventory_from_assignment;

    fn one_cell(mean: f64, stock: u64) -> (Instance, Inventory) {
        let mut inst = tiny_instance(0);
        inst.branches.truncate(1);
        inst.sizes.truncate(1);
        for l in inst.lot_types.iter_mut() {
            *l = crate::LotType::new(vec![1]);
        }
        inst.handling = crate::model::HandlingCost::Parametric {
            acquisition_per_item: 1.0,
            pick_cost: 0.0,
        };
        inst.supply_lower = 0;
        inst.supply_upper = 1000;
        let nk = inst.n_periods();
        let np = inst.prices.len();
        for sc in inst.scenarios.iter_mut() {
            let mut d = DemandTensor::zeros(nk, np, 1, 1);
            for k in 0..nk {
                for p in 0..np {
                    d.set(k, p, 0, 0, mean);
                }
            }
            sc.demand = d;
        }
        inst.validate().unwrap();
        let inv = inventory_from_assignment(
            &LotAssignment::new(vec![LotChoice {
                lot: 0,
                multiplicity: inst.multiplicities[0],
            }]),
            &inst,
        );
        let mut cells = inv.cells().to_vec();
        cells[0] = stock;
        (inst, Inventory::from_cells(1, cells))
    }

    #[test]
    fn zero_demand_sells_nothing() {
        let (inst, inv) = one_cell(0.0, 7);
        let r = realize_sales(&inst, &inv, &PricingPolicy::RhPop { smoothing: 0.5 }, 3).unwrap();
        assert_eq!(r.total_sales(), 0);
        assert_eq!(r.terminal_stock, vec![7]);
    }

    #[test]
    fn huge_demand_truncates_at_stock() {
        let (inst, inv) = one_cell(1e6, 5);
        let t = PriceTrajectory::from_indices(
            (0..inst.n_periods()).map(|k| if k == inst.k_max { inst.p_max() } else { 0 }).collect(),
        );
        let r = realize_sales(&inst, &inv, &PricingPolicy::Fixed(t), 1).unwrap();
        assert_eq!(r.sales_at(0, 0, 0), 5);
        assert_eq!(r.total_sales(), 5);
    }

    #[test]
    fn deterministic_in_seed() {
        let inst = tiny_instance(2);
        let a = crate::sop::solve_sop_exact(&crate::sop::ProfitCoefficients::handling_only(&inst), &inst);
        let choices = a.map(|s| s.assignment).unwrap();
        let inv = inventory_from_assignment(&choices, &inst);
        let pol = PricingPolicy::RhPop { smoothing: 0.5 };
        let x = realize_sales(&inst, &inv, &pol, 42).unwrap();
        let y = realize_sales(&inst, &inv, &pol, 42).unwrap();
        assert_eq!(x, y);
        let total: u64 = inv.cells().iter().sum();
        assert_eq!(x.total_sales() + x.terminal_stock.iter().sum::<u64>(), total);
    }

    #[test]
    fn truncated_mean_matches_analytic() {
        // E[min(X, c)] for X ~ Poisson(mu): sum_{j<c} P(X > j)
        let (mu, c) = (3.0f64, 4u64);
        let mut pmf = (-mu).exp();
        let mut cdf = 0.0;
        let mut analytic = 0.0;
        for j in 0..c {
            cdf += pmf;
            analytic += 1.0 - cdf;
            pmf *= mu / (j + 1) as f64;
        }
        let (inst, inv) = one_cell(mu, c);
        let t = PriceTrajectory::from_indices(
            (0..inst.n_periods()).map(|k| if k == inst.k_max { inst.p_max() } else { 0 }).collect(),
        );
        let pol = PricingPolicy::Fixed(t);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|seed| realize_sales(&inst, &inv, &pol, seed).unwrap().sales_at(0, 0, 0) as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - analytic).abs() < 3.0 * (var / n as f64).sqrt());
    }
}
