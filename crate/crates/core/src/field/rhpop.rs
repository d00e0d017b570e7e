//! Receding-horizon price planning with a learned demand scale.

use crate::model::{DemandTensor, Instance, MONEY_TOL};

/// Planner state before period `period` is priced and sold.
#[derive(Debug, Clone, PartialEq)]
pub struct RhState {
    pub period: usize,
    /// Stock per cell, `[b][s]` flattened.
    pub stock: Vec<f64>,
    /// Price index in effect for `period`.
    pub price: usize,
    /// Ratio of actual to forecast demand.
    pub alpha: f64,
    pub smoothing: f64,
    /// A mark-down already committed for a later period.
    pub scheduled: Option<(usize, usize)>,
}

impl RhState {
    pub fn new(stock: Vec<f64>, smoothing: f64) -> Self {
        Self {
            period: 0,
            stock,
            price: 0,
            alpha: 1.0,
            smoothing,
            scheduled: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkdownDecision {
    Hold,
    /// Mark down to this index in the next period.
    Now(usize),
    /// Mark down to `index` in `period`, one period later.
    Scheduled { period: usize, index: usize },
    /// The next period is the salvage period.
    Salvage,
    /// The season is over.
    Finished,
}

/// Caches the forecast (probability-weighted mean demand) of one instance.
#[derive(Debug, Clone)]
pub struct RhPlanner<'a> {
    instance: &'a Instance,
    forecast: DemandTensor,
}

impl<'a> RhPlanner<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let [nk, np, nb, ns] = instance.scenarios[0].demand.dims();
        let mut forecast = DemandTensor::zeros(nk, np, nb, ns);
        for k in 0..nk {
            for p in 0..np {
                for b in 0..nb {
                    for s in 0..ns {
                        let mut d = 0.0;
                        for sc in instance.scenarios.iter().filter(|sc| sc.probability > 0.0) {
                            d += sc.probability * sc.demand.get(k, p, b, s);
                        }
                        forecast.set(k, p, b, s, d);
                    }
                }
            }
        }
        Self { instance, forecast }
    }

    pub fn forecast(&self) -> &DemandTensor {
        &self.forecast
    }

    fn demand(&self, alpha: f64, k: usize, p: usize, b: usize, s: usize) -> f64 {
        let d = self.forecast.get(k, p, b, s);
        if d.is_infinite() {
            d
        } else {
            alpha * d
        }
    }

    /// Forecast sales of one period at the given scale.
    pub fn predicted_sales(&self, state: &RhState) -> f64 {
        let ns = self.instance.n_sizes();
        let mut total = 0.0;
        for b in 0..self.instance.n_branches() {
            for s in 0..ns {
                total += state.stock[b * ns + s].min(self.demand(state.alpha, state.period, state.price, b, s));
            }
        }
        total
    }

    /// Feeds back the sales of `state.period` and decides the price of the
    /// following period.
    pub fn step(&self, state: &RhState, observed: &[f64]) -> (RhState, MarkdownDecision) {
        let inst = self.instance;
        let mut next = state.clone();
        let predicted = self.predicted_sales(state);
        let actual: f64 = observed.iter().sum();
        if predicted > 0.0 && predicted.is_finite() {
            let g = state.smoothing;
            next.alpha = state.alpha * (1.0 - g) + g * state.alpha * actual / predicted;
        }
        for (st, &o) in next.stock.iter_mut().zip(observed) {
            *st = (*st - o).max(0.0);
        }
        next.period = state.period + 1;
        if next.period > inst.k_max {
            next.period = inst.k_max + 1;
            return (next, MarkdownDecision::Finished);
        }
        if next.period == inst.k_max {
            next.price = inst.p_max();
            next.scheduled = None;
            return (next, MarkdownDecision::Salvage);
        }
        let fixed_first = match state.scheduled {
            Some((k, idx)) if k == next.period => Some(idx),
            _ => None,
        };
        next.scheduled = None;
        if let Some(idx) = fixed_first {
            next.price = idx;
        }
        let plan = self.plan(next.period, state.price, fixed_first, next.alpha, &next.stock);
        let k0 = next.period;
        let decision = if fixed_first.is_none() && plan[0] > state.price {
            next.price = plan[0];
            MarkdownDecision::Now(plan[0])
        } else if plan.len() > 2 && plan[1] > plan[0] {
            next.scheduled = Some((k0 + 1, plan[1]));
            MarkdownDecision::Scheduled {
                period: k0 + 1,
                index: plan[1],
            }
        } else {
            MarkdownDecision::Hold
        };
        (next, decision)
    }

    /// Best price indices for periods `from..=k_max` given the price of the
    /// previous period, optionally with the first one fixed.
    pub fn plan(&self, from: usize, previous: usize, fixed_first: Option<usize>, alpha: f64, stock: &[f64]) -> Vec<usize> {
        let inst = self.instance;
        let pm = inst.p_max();
        let len = inst.k_max - from;
        let mut candidates = Vec::new();
        let mut cur = Vec::with_capacity(len + 1);
        suffixes(inst, from, previous, fixed_first, &mut cur, &mut candidates);
        let count = |v: &Vec<usize>| {
            let mut last = previous;
            let mut c = 0;
            for &p in v.iter().take(len) {
                if p != last {
                    c += 1;
                }
                last = p;
            }
            c
        };
        candidates.sort_by(|a, b| count(a).cmp(&count(b)).then_with(|| a.cmp(b)));
        let mut best: Option<(f64, usize)> = None;
        for (j, c) in candidates.iter().enumerate() {
            let v = self.suffix_value(from, previous, c, alpha, stock);
            if best.is_none_or(|(bv, _)| v > bv + MONEY_TOL) {
                best = Some((v, j));
            }
        }
        let mut plan = candidates.swap_remove(best.map_or(0, |b| b.1));
        debug_assert_eq!(plan.last(), Some(&pm));
        plan.shrink_to_fit();
        plan
    }

    fn suffix_value(&self, from: usize, previous: usize, plan: &[usize], alpha: f64, stock: &[f64]) -> f64 {
        let inst = self.instance;
        let ns = inst.n_sizes();
        let mut stock = stock.to_vec();
        let mut last = previous;
        let mut value = 0.0;
        for (j, &p) in plan.iter().enumerate() {
            let k = from + j;
            let mut y = 0.0;
            for b in 0..inst.n_branches() {
                for s in 0..ns {
                    let cell = b * ns + s;
                    let sold = stock[cell].min(self.demand(alpha, k, p, b, s));
                    y += inst.prices[p] * sold;
                    stock[cell] -= sold;
                }
            }
            let md = if p != last {
                inst.markdown_costs[k]
            } else {
                0.0
            };
            value += inst.discount(k) * (y - md);
            last = p;
        }
        value
    }
}

fn suffixes(
    inst: &Instance,
    from: usize,
    previous: usize,
    fixed_first: Option<usize>,
    cur: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let k = from + cur.len();
    if k == inst.k_max {
        cur.push(inst.p_max());
        out.push(cur.clone());
        cur.pop();
        return;
    }
    let last = cur.last().copied().unwrap_or(previous);
    let (lo, hi) = match (cur.is_empty(), fixed_first) {
        (true, Some(f)) => (f, f),
        _ if k < inst.k_observ => (last, last),
        _ => (last, inst.p_max() - 1),
    };
    for p in lo..=hi {
        cur.push(p);
        suffixes(inst, from, previous, fixed_first, cur, out);
        cur.pop();
    }
}

/// One planner step built from scratch.
pub fn rhpop_step(state: &RhState, observed: &[f64], instance: &Instance) -> (RhState, MarkdownDecision) {
    RhPlanner::new(instance).step(state, observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tiny_instance;
    use crate::salesdyn::solve_pop_over;
    use crate::trajectory::{instance_trajectories, PriceTrajectory};
    use crate::SupplyMatrix;

    fn state_for(inst: &Instance, smoothing: f64) -> RhState {
        RhState::new(vec![3.0; inst.n_branches() * inst.n_sizes()], smoothing)
    }

    #[test]
    fn alpha_unchanged_when_observed_matches() {
        let inst = tiny_instance(3);
        let planner = RhPlanner::new(&inst);
        let st = state_for(&inst, 0.5);
        let ns = inst.n_sizes();
        let obs: Vec<f64> = (0..st.stock.len())
            .map(|c| st.stock[c].min(planner.forecast().get(0, 0, c / ns, c % ns)))
            .collect();
        let (next, _) = planner.step(&st, &obs);
        assert!((next.alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_smoothing_doubles_alpha() {
        let inst = tiny_instance(3);
        let planner = RhPlanner::new(&inst);
        let mut st = state_for(&inst, 1.0);
        st.stock = vec![1e6; st.stock.len()];
        let pred = planner.predicted_sales(&st);
        assert!(pred > 0.0);
        let n = st.stock.len() as f64;
        let obs = vec![2.0 * pred / n; st.stock.len()];
        let (next, _) = planner.step(&st, &obs);
        assert!((next.alpha - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_prediction_keeps_alpha() {
        let inst = tiny_instance(3);
        let mut st = state_for(&inst, 0.7);
        st.stock = vec![0.0; st.stock.len()];
        let (next, _) = rhpop_step(&st, &vec![0.0; st.stock.len()], &inst);
        assert_eq!(next.alpha, 1.0);
    }

    #[test]
    fn initial_plan_matches_forecast_pop() {
        // the plan at period 0 with alpha 1 equals the open-loop optimum of a
        // single-scenario instance carrying the forecast
        for seed in 0..20 {
            let inst = tiny_instance(seed);
            let planner = RhPlanner::new(&inst);
            let mut single = inst.clone();
            single.scenarios.truncate(1);
            single.scenarios[0].probability = 1.0;
            single.scenarios[0].demand = planner.forecast().clone();
            let stock: Vec<f64> = (0..inst.n_branches() * inst.n_sizes()).map(|c| (c % 4 + 1) as f64).collect();
            let supply = SupplyMatrix::new(inst.n_branches(), inst.n_sizes(), stock.clone());
            let pop = solve_pop_over(&supply, &single, &instance_trajectories(&single)).unwrap();
            let plan = planner.plan(0, 0, Some(0), 1.0, &stock);
            let t = PriceTrajectory::from_indices(plan);
            let v = crate::salesdyn::CellCurves::new(&single, 0, &t).pop_value(&supply);
            assert!((v - pop.per_scenario[0].value).abs() < 1e-7, "seed {seed}");
        }
    }

    #[test]
    fn prices_never_rise_and_end_at_salvage() {
        for seed in 0..20 {
            let inst = tiny_instance(seed);
            let planner = RhPlanner::new(&inst);
            let mut st = state_for(&inst, 0.5);
            let mut prices = vec![st.price];
            loop {
                let obs: Vec<f64> = st.stock.iter().map(|s| (s * 0.3).floor()).collect();
                let (next, d) = planner.step(&st, &obs);
                if d == MarkdownDecision::Finished {
                    break;
                }
                if next.period < inst.k_observ {
                    assert_eq!(next.price, 0);
                }
                prices.push(next.price);
                st = next;
            }
            assert_eq!(prices.len(), inst.k_max + 1);
            assert!(prices.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*prices.last().unwrap(), inst.p_max());
        }
    }
}
