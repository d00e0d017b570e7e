//! Relative realized objective: realized profit over the revenue of
//! selling the whole supply at the start price, for a subset of branches.

use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::model::{inventory_from_assignment, opening_cost, Instance, LotAssignment};

use super::realize::Realization;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RroParts {
    pub numerator: f64,
    pub denominator: f64,
}

impl RroParts {
    pub fn ratio(&self) -> Result<f64> {
        if self.denominator == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(self.numerator / self.denominator)
    }
}

impl Add for RroParts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            numerator: self.numerator + o.numerator,
            denominator: self.denominator + o.denominator,
        }
    }
}

impl AddAssign for RroParts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Numerator and denominator for `branches`. Opening and mark-down costs
/// are charged in proportion to the share of branches considered.
pub fn rro_parts(
    realization: &Realization,
    assignment: &LotAssignment,
    instance: &Instance,
    branches: &[usize],
) -> Result<RroParts> {
    instance.check_assignment(assignment)?;
    let nb = instance.n_branches();
    let ns = instance.n_sizes();
    if realization.n_branches != nb || realization.n_sizes != ns || realization.n_periods() != instance.n_periods() {
        return Err(Error::Dimension("realization does not match the instance".into()));
    }
    if let Some(&b) = branches.iter().find(|&&b| b >= nb) {
        return Err(Error::Dimension(format!("branch {b} does not exist")));
    }
    let share = branches.len() as f64 / nb as f64;
    let inventory = inventory_from_assignment(assignment, instance);
    let mut fixed = share * opening_cost(&instance.opening_costs, assignment.used_lot_types().len());
    for &b in branches {
        fixed += instance.handling_cost_of(b, assignment.choices[b])?;
    }
    let flags = realization.markdown_flags();
    let mut earned = 0.0;
    for k in 0..instance.n_periods() {
        let mut y = 0.0;
        for &b in branches {
            for s in 0..ns {
                y += realization.yield_at(k, b, s, instance);
            }
        }
        let md = if flags[k] { share * instance.markdown_costs[k] } else { 0.0 };
        earned += instance.discount(k) * (y - md);
    }
    let mut potential = 0.0;
    for &b in branches {
        for s in 0..ns {
            potential += inventory.get(b, s) as f64 * instance.prices[0];
        }
    }
    Ok(RroParts {
        numerator: earned - fixed,
        denominator: potential - fixed,
    })
}

pub fn compute_rro(
    realization: &Realization,
    assignment: &LotAssignment,
    instance: &Instance,
    branches: &[usize],
) -> Result<f64> {
    rro_parts(realization, assignment, instance, branches)?.ratio()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tiny_instance, HandlingCost, LotChoice};

    fn setup() -> (Instance, LotAssignment) {
        let mut inst = tiny_instance(0);
        inst.supply_lower = 0;
        let a = LotAssignment::new(
            (0..inst.n_branches())
                .map(|_| LotChoice {
                    lot: 0,
                    multiplicity: inst.multiplicities[0],
                })
                .collect(),
        );
        (inst, a)
    }

    fn realization(inst: &Instance, a: &LotAssignment, sell_k: Option<usize>) -> Realization {
        let inv = inventory_from_assignment(a, inst);
        let (nb, ns, nk) = (inst.n_branches(), inst.n_sizes(), inst.n_periods());
        let mut r = Realization {
            scenario: 0,
            n_branches: nb,
            n_sizes: ns,
            prices: (0..nk).map(|k| if k == inst.k_max { inst.p_max() } else { 0 }).collect(),
            stock_before: Vec::new(),
            sales: Vec::new(),
            terminal_stock: Vec::new(),
            alpha: Vec::new(),
        };
        let mut stock = inv.cells().to_vec();
        for k in 0..nk {
            for c in 0..nb * ns {
                r.stock_before.push(stock[c]);
                let sold = if Some(k) == sell_k { stock[c] } else { 0 };
                r.sales.push(sold);
                stock[c] -= sold;
            }
        }
        r.terminal_stock = stock;
        r
    }

    #[test]
    fn sell_out_at_start_price_is_one() {
        let (mut inst, a) = setup();
        inst.discount_rate = 0.0;
        inst.opening_costs.iter_mut().for_each(|c| *c = 0.0);
        inst.markdown_costs.iter_mut().for_each(|c| *c = 0.0);
        let r = realization(&inst, &a, Some(0));
        let all: Vec<usize> = (0..inst.n_branches()).collect();
        assert!((compute_rro(&r, &a, &inst, &all).unwrap() - 1.0).abs() < 1e-12);
        assert!((compute_rro(&r, &a, &inst, &[1]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nothing_sold_collapses() {
        let (mut inst, a) = setup();
        let pm = inst.p_max();
        inst.prices[pm] = 0.0;
        let r = realization(&inst, &a, None);
        let b = 1;
        let share = 1.0 / inst.n_branches() as f64;
        let c = inst.handling_cost_of(b, a.choices[b]).unwrap() + share * inst.opening_costs[0];
        let inv = inventory_from_assignment(&a, &inst);
        let i: f64 = (0..inst.n_sizes()).map(|s| inv.get(b, s) as f64).sum();
        let expected = -c / (-c + i * inst.prices[0]);
        assert!((compute_rro(&r, &a, &inst, &[b]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_partial_sale() {
        // one unit per cell in period 1, rest at salvage in the last period
        let (inst, a) = setup();
        let mut r = realization(&inst, &a, Some(inst.k_max));
        let ns = inst.n_sizes();
        let nb = inst.n_branches();
        let per = nb * ns;
        for c in 0..per {
            if r.stock_before[c] > 0 {
                r.sales[per + c] = 1;
                for k in 2..inst.n_periods() {
                    r.stock_before[k * per + c] -= 1;
                }
                r.sales[inst.k_max * per + c] -= 1;
            }
        }
        let b = 0;
        let inv = inventory_from_assignment(&a, &inst);
        let mut earned = 0.0;
        let mut potential = 0.0;
        for s in 0..ns {
            let i = inv.get(b, s) as f64;
            if i > 0.0 {
                earned += inst.discount(1) * inst.prices[0] + inst.discount(inst.k_max) * inst.prices[inst.p_max()] * (i - 1.0);
            }
            potential += i * inst.prices[0];
        }
        let fixed = inst.handling_cost_of(b, a.choices[b]).unwrap() + inst.opening_costs[0] / nb as f64;
        let want = (earned - fixed) / (potential - fixed);
        assert!((compute_rro(&r, &a, &inst, &[b]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn scale_invariant() {
        let (inst, a) = setup();
        let r = realization(&inst, &a, Some(3));
        let mut scaled = inst.clone();
        let f = 7.5;
        scaled.prices.iter_mut().for_each(|p| *p *= f);
        scaled.opening_costs.iter_mut().for_each(|c| *c *= f);
        scaled.markdown_costs.iter_mut().for_each(|c| *c *= f);
        scaled.handling = match &inst.handling {
            HandlingCost::Parametric { acquisition_per_item, pick_cost } => HandlingCost::Parametric {
                acquisition_per_item: acquisition_per_item * f,
                pick_cost: pick_cost * f,
            },
            HandlingCost::Table(t) => HandlingCost::Table(
                t.iter().map(|r| r.iter().map(|c| c.iter().map(|x| x * f).collect()).collect()).collect(),
            ),
        };
        let all: Vec<usize> = (0..inst.n_branches()).collect();
        let x = compute_rro(&r, &a, &inst, &all).unwrap();
        let y = compute_rro(&r, &a, &scaled, &all).unwrap();
        assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let parts = RroParts::default();
        assert!(matches!(parts.ratio(), Err(Error::ZeroDenominator)));
    }
}
