//! Mean-value sales dynamics and the exact price stage.
//!
//! Sales in a period are `min(stock, demand)`. Cells never interact, so the
//! discounted yield of a cell depends only on its own supply; [`CellCurves`]
//! tabulates it as a concave piecewise-linear function of the supply.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Instance, SupplyMatrix};
use crate::trajectory::{instance_trajectories, preference_cmp, PriceTrajectory};

/// Per-period book-keeping of one (supply, scenario, trajectory) run.
/// Period-major arrays are indexed `[k][b][s]` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub n_branches: usize,
    pub n_sizes: usize,
    pub prices: Vec<usize>,
    pub stock_before: Vec<f64>,
    pub sales: Vec<f64>,
    pub yields: Vec<f64>,
    pub markdown: Vec<bool>,
    pub terminal_stock: Vec<f64>,
    pub discounted_profit: f64,
}

impl SimulationResult {
    fn idx(&self, k: usize, b: usize, s: usize) -> usize {
        (k * self.n_branches + b) * self.n_sizes + s
    }

    pub fn n_periods(&self) -> usize {
        self.prices.len()
    }

    pub fn stock(&self, k: usize, b: usize, s: usize) -> f64 {
        self.stock_before[self.idx(k, b, s)]
    }

    pub fn sales_at(&self, k: usize, b: usize, s: usize) -> f64 {
        self.sales[self.idx(k, b, s)]
    }

    pub fn yield_at(&self, k: usize, b: usize, s: usize) -> f64 {
        self.yields[self.idx(k, b, s)]
    }

    pub fn terminal(&self, b: usize, s: usize) -> f64 {
        self.terminal_stock[b * self.n_sizes + s]
    }

    /// CSV with columns period, branch, size, price, sales, stock, yield.
    pub fn write_csv<W: Write>(&self, out: W, instance: &Instance) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "branch", "size", "price", "sales", "stock", "yield"])?;
        for k in 0..self.n_periods() {
            for b in 0..self.n_branches {
                for s in 0..self.n_sizes {
                    w.write_record([
                        k.to_string(),
                        instance.branches[b].clone(),
                        instance.sizes[s].clone(),
                        format!("{:.4}", instance.prices[self.prices[k]]),
                        format!("{:.4}", self.sales_at(k, b, s)),
                        format!("{:.4}", self.stock(k, b, s)),
                        format!("{:.4}", self.yield_at(k, b, s)),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_supply(supply: &SupplyMatrix, instance: &Instance) -> Result<()> {
    if supply.n_branches() != instance.n_branches() || supply.n_sizes() != instance.n_sizes() {
        return Err(Error::Dimension(format!(
            "supply is {}x{}, instance is {}x{}",
            supply.n_branches(),
            supply.n_sizes(),
            instance.n_branches(),
            instance.n_sizes()
        )));
    }
    if supply.cells().iter().any(|&x| !(x >= 0.0) || x.is_infinite()) {
        return Err(Error::Dimension("supply entries must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Discounted mark-down cost sum_k e^{-rho k} gamma_k mkdn_k of a trajectory.
pub fn markdown_cost(instance: &Instance, t: &PriceTrajectory) -> f64 {
    t.markdown_flags()
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(k, _)| instance.discount(k) * instance.markdown_costs[k])
        .sum()
}

/// Runs the mean-value dynamics for one scenario and trajectory.
pub fn simulate_sales(
    supply: &SupplyMatrix,
    e: usize,
    t: &PriceTrajectory,
    instance: &Instance,
) -> Result<SimulationResult> {
    check_supply(supply, instance)?;
    if e >= instance.n_scenarios() {
        return Err(Error::Dimension(format!("scenario {e} does not exist")));
    }
    t.check(instance)?;
    let nb = instance.n_branches();
    let ns = instance.n_sizes();
    let nk = instance.n_periods();
    let demand = &instance.scenarios[e].demand;
    let mut stock: Vec<f64> = supply.cells().to_vec();
    let mut stock_before = Vec::with_capacity(nk * nb * ns);
    let mut sales = Vec::with_capacity(nk * nb * ns);
    let mut yields = Vec::with_capacity(nk * nb * ns);
    let markdown = t.markdown_flags();
    let mut value = 0.0;
    for k in 0..nk {
        let p = t.indices()[k];
        let price = instance.prices[p];
        let disc = instance.discount(k);
        let mut period_yield = 0.0;
        for b in 0..nb {
            for s in 0..ns {
                let cell = b * ns + s;
                let sold = stock[cell].min(demand.get(k, p, b, s));
                stock_before.push(stock[cell]);
                sales.push(sold);
                yields.push(price * sold);
                period_yield += price * sold;
                stock[cell] -= sold;
            }
        }
        let md = if markdown[k] {
            instance.markdown_costs[k]
        } else {
            0.0
        };
        value += disc * (period_yield - md);
    }
    Ok(SimulationResult {
        n_branches: nb,
        n_sizes: ns,
        prices: t.indices().to_vec(),
        stock_before,
        sales,
        yields,
        markdown,
        terminal_stock: stock,
        discounted_profit: value,
    })
}

/// lambda^{e,t}_{b,s}(i): discounted yield of `i` items in one cell.
pub fn branch_size_profit(
    instance: &Instance,
    e: usize,
    t: &PriceTrajectory,
    b: usize,
    s: usize,
    i: f64,
) -> f64 {
    let demand = &instance.scenarios[e].demand;
    let mut stock = i;
    let mut value = 0.0;
    for (k, &p) in t.indices().iter().enumerate() {
        let sold = stock.min(demand.get(k, p, b, s));
        value += instance.discount(k) * instance.prices[p] * sold;
        stock -= sold;
    }
    value
}

/// Piecewise-linear lambda for every cell under one (scenario, trajectory):
/// `lambda(i) = sum_k w_k (min(i, D_k) - min(i, D_{k-1}))` with cumulative
/// demand `D_k` and nonincreasing weights `w_k = e^{-rho k} pi_{p(k)}`.
#[derive(Debug, Clone)]
pub struct CellCurves {
    n_sizes: usize,
    weights: Vec<f64>,
    /// `[cell][k]`, cumulative demand through period k.
    cumulative: Vec<Vec<f64>>,
    markdown_cost: f64,
}

impl CellCurves {
    pub fn new(instance: &Instance, e: usize, t: &PriceTrajectory) -> Self {
        let demand = &instance.scenarios[e].demand;
        let weights: Vec<f64> = t
            .indices()
            .iter()
            .enumerate()
            .map(|(k, &p)| instance.discount(k) * instance.prices[p])
            .collect();
        let ns = instance.n_sizes();
        let mut cumulative = Vec::with_capacity(instance.n_branches() * ns);
        for b in 0..instance.n_branches() {
            for s in 0..ns {
                let mut acc = 0.0;
                let row = t
                    .indices()
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| {
                        acc += demand.get(k, p, b, s);
                        acc
                    })
                    .collect();
                cumulative.push(row);
            }
        }
        Self {
            n_sizes: ns,
            weights,
            cumulative,
            markdown_cost: markdown_cost(instance, t),
        }
    }

    pub fn eval(&self, b: usize, s: usize, i: f64) -> f64 {
        let cum = &self.cumulative[b * self.n_sizes + s];
        let mut value = 0.0;
        let mut prev = 0.0;
        for (w, &d) in self.weights.iter().zip(cum) {
            let upto = i.min(d);
            if upto > prev {
                value += w * (upto - prev);
            }
            if i <= d {
                break;
            }
            prev = d;
        }
        value
    }

    /// POP value of a whole supply matrix, mark-down costs included.
    pub fn pop_value(&self, supply: &SupplyMatrix) -> f64 {
        let mut total = 0.0;
        for b in 0..supply.n_branches() {
            for s in 0..supply.n_sizes() {
                total += self.eval(b, s, supply.get(b, s));
            }
        }
        total - self.markdown_cost
    }

    /// sum_k e^{-rho k} gamma_k mkdn_k.
    pub fn markdown_cost(&self) -> f64 {
        self.markdown_cost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPop {
    pub trajectory: PriceTrajectory,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopSolution {
    pub per_scenario: Vec<ScenarioPop>,
    pub expected: f64,
}

/// Best trajectory for every scenario by exhaustive enumeration.
pub fn solve_pop_exact(supply: &SupplyMatrix, instance: &Instance) -> Result<PopSolution> {
    let trajectories = instance_trajectories(instance);
    solve_pop_over(supply, instance, &trajectories)
}

/// As [`solve_pop_exact`] but over a given candidate list.
pub fn solve_pop_over(
    supply: &SupplyMatrix,
    instance: &Instance,
    trajectories: &[PriceTrajectory],
) -> Result<PopSolution> {
    check_supply(supply, instance)?;
    if trajectories.is_empty() {
        return Err(Error::Infeasible("no feasible price trajectory".into()));
    }
    let mut ordered: Vec<&PriceTrajectory> = trajectories.iter().collect();
    ordered.sort_by(|a, b| preference_cmp(a, b));
    let ne = instance.n_scenarios();
    let values: Vec<Vec<f64>> = (0..ne)
        .into_par_iter()
        .map(|e| {
            ordered
                .iter()
                .map(|t| CellCurves::new(instance, e, t).pop_value(supply))
                .collect()
        })
        .collect();
    let mut per_scenario = Vec::with_capacity(ne);
    let mut expected = 0.0;
    for (e, vals) in values.iter().enumerate() {
        let mut best = 0;
        for (j, &v) in vals.iter().enumerate() {
            if v > vals[best] + crate::model::MONEY_TOL {
                best = j;
            }
        }
        expected += instance.scenarios[e].probability * vals[best];
        per_scenario.push(ScenarioPop {
            trajectory: ordered[best].clone(),
            value: vals[best],
        });
    }
    Ok(PopSolution {
        per_scenario,
        expected,
    })
}
