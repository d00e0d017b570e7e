use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};
use crate::salesdyn;
use crate::trajectory::ScenarioTrajectoryMap;

use super::io::RawInstance;

/// A pre-packed size assortment: pieces per size in one lot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LotType {
    counts: Vec<u32>,
}

impl LotType {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, size: usize) -> u32 {
        self.counts[size]
    }

    /// Total pieces in one lot.
    pub fn pieces(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

impl std::fmt::Display for LotType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Mean demand d[k][p][b][s]. `f64::INFINITY` is the unbounded sentinel and
/// is only accepted at the salvage price in the last period.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTensor {
    dims: [usize; 4],
    values: Vec<f64>,
}

impl DemandTensor {
    pub fn zeros(periods: usize, prices: usize, branches: usize, sizes: usize) -> Self {
        Self {
            dims: [periods, prices, branches, sizes],
            values: vec![0.0; periods * prices * branches * sizes],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    fn offset(&self, k: usize, p: usize, b: usize, s: usize) -> usize {
        let [_, np, nb, ns] = self.dims;
        ((k * np + p) * nb + b) * ns + s
    }

    #[inline]
    pub fn get(&self, k: usize, p: usize, b: usize, s: usize) -> f64 {
        self.values[self.offset(k, p, b, s)]
    }

    pub fn set(&mut self, k: usize, p: usize, b: usize, s: usize, value: f64) {
        let i = self.offset(k, p, b, s);
        self.values[i] = value;
    }

    /// Entrywise multiple; the unbounded sentinel stays unbounded.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dims: self.dims,
            values: self
                .values
                .iter()
                .map(|&d| if d.is_infinite() { d } else { d * factor })
                .collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub probability: f64,
    pub demand: DemandTensor,
}

/// Lot handling cost c(b, lot, m).
#[derive(Debug, Clone, PartialEq)]
pub enum HandlingCost {
    /// Explicit table indexed `[branch][lot][multiplicity index]`.
    Table(Vec<Vec<Vec<f64>>>),
    /// `m * (acquisition_per_item * pieces(lot) + pick_cost)`.
    Parametric {
        acquisition_per_item: f64,
        pick_cost: f64,
    },
}

/// Validated problem data. Build through [`validate_instance`] or the
/// generator; after that it is treated as immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub branches: Vec<String>,
    pub sizes: Vec<String>,
    pub lot_types: Vec<LotType>,
    /// Strictly increasing positive multiplicities.
    pub multiplicities: Vec<u32>,
    pub max_lot_types: usize,
    pub supply_lower: u64,
    pub supply_upper: u64,
    pub k_max: usize,
    pub k_observ: usize,
    /// Strictly decreasing; the last entry is the salvage value.
    pub prices: Vec<f64>,
    pub scenarios: Vec<Scenario>,
    pub handling: HandlingCost,
    /// Marginal opening cost of the i-th used lot-type, length `max_lot_types`.
    pub opening_costs: Vec<f64>,
    /// Mark-down cost per period, length `k_max + 1`.
    pub markdown_costs: Vec<f64>,
    pub discount_rate: f64,
}

/// One (lot-type, multiplicity) decision for a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LotChoice {
    pub lot: usize,
    pub multiplicity: u32,
}

/// First-stage decision: one lot choice per branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LotAssignment {
    pub choices: Vec<LotChoice>,
}

impl LotAssignment {
    pub fn new(choices: Vec<LotChoice>) -> Self {
        Self { choices }
    }

    /// Sorted distinct lot-type indices in use.
    pub fn used_lot_types(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self.choices.iter().map(|c| c.lot).collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

/// Integral supply I[b][s] induced by a lot assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inventory {
    n_sizes: usize,
    cells: Vec<u64>,
    total: u64,
}

impl Inventory {
    /// Cells in `[b][s]` order.
    pub fn from_cells(n_sizes: usize, cells: Vec<u64>) -> Self {
        let total = cells.iter().sum();
        Self {
            n_sizes,
            cells,
            total,
        }
    }

    pub fn get(&self, b: usize, s: usize) -> u64 {
        self.cells[b * self.n_sizes + s]
    }

    pub fn branch_total(&self, b: usize) -> u64 {
        self.cells[b * self.n_sizes..(b + 1) * self.n_sizes].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub fn to_supply(&self) -> SupplyMatrix {
        SupplyMatrix::new(
            self.cells.len() / self.n_sizes.max(1),
            self.n_sizes,
            self.cells.iter().map(|&c| c as f64).collect(),
        )
    }
}

/// Possibly fractional stock per (branch, size), row-major by branch.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyMatrix {
    n_branches: usize,
    n_sizes: usize,
    cells: Vec<f64>,
}

impl SupplyMatrix {
    pub fn new(n_branches: usize, n_sizes: usize, cells: Vec<f64>) -> Self {
        assert_eq!(cells.len(), n_branches * n_sizes, "supply matrix shape");
        Self {
            n_branches,
            n_sizes,
            cells,
        }
    }

    pub fn zeros(n_branches: usize, n_sizes: usize) -> Self {
        Self::new(n_branches, n_sizes, vec![0.0; n_branches * n_sizes])
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn n_sizes(&self) -> usize {
        self.n_sizes
    }

    #[inline]
    pub fn get(&self, b: usize, s: usize) -> f64 {
        self.cells[b * self.n_sizes + s]
    }

    pub fn set(&mut self, b: usize, s: usize, value: f64) {
        self.cells[b * self.n_sizes + s] = value;
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }
}

impl Instance {
    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_sizes(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_lot_types(&self) -> usize {
        self.lot_types.len()
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Index of the salvage price.
    pub fn p_max(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn n_periods(&self) -> usize {
        self.k_max + 1
    }

    pub fn discount(&self, k: usize) -> f64 {
        (-self.discount_rate * k as f64).exp()
    }

    pub fn multiplicity_index(&self, m: u32) -> Option<usize> {
        self.multiplicities.binary_search(&m).ok()
    }

    /// c(b, lot, m) for the multiplicity at index `mi`.
    pub fn handling_cost(&self, b: usize, lot: usize, mi: usize) -> f64 {
        match &self.handling {
            HandlingCost::Table(t) => t[b][lot][mi],
            HandlingCost::Parametric {
                acquisition_per_item,
                pick_cost,
            } => {
                let m = f64::from(self.multiplicities[mi]);
                m * (acquisition_per_item * self.lot_types[lot].pieces() as f64 + pick_cost)
            }
        }
    }

    pub fn handling_cost_of(&self, b: usize, choice: LotChoice) -> Result<f64> {
        let mi = self.multiplicity_index(choice.multiplicity).ok_or_else(|| {
            Error::Infeasible(format!(
                "multiplicity {} is not admissible",
                choice.multiplicity
            ))
        })?;
        Ok(self.handling_cost(b, choice.lot, mi))
    }

    /// Checks every type invariant; returns the first violation.
    pub fn validate(&self) -> std::result::Result<(), ValidationError> {
        let (nb, ns) = (self.n_branches(), self.n_sizes());
        if nb == 0 {
            return Err(ValidationError::NoBranches);
        }
        if ns == 0 {
            return Err(ValidationError::NoSizes);
        }
        if self.lot_types.is_empty() {
            return Err(ValidationError::NoLotTypes);
        }
        for (index, lot) in self.lot_types.iter().enumerate() {
            if lot.counts.len() != ns {
                return Err(ValidationError::LotTypeLength {
                    index,
                    found: lot.counts.len(),
                    expected: ns,
                });
            }
            if lot.pieces() == 0 {
                return Err(ValidationError::EmptyLotType(index));
            }
        }
        if self.multiplicities.is_empty()
            || self.multiplicities[0] == 0
            || self.multiplicities.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ValidationError::Multiplicities);
        }
        if self.max_lot_types == 0 {
            return Err(ValidationError::MaxLotTypes);
        }
        if self.supply_lower > self.supply_upper {
            return Err(ValidationError::SupplyBounds {
                lower: self.supply_lower,
                upper: self.supply_upper,
            });
        }
        if self.k_max < 2 {
            return Err(ValidationError::Horizon(self.k_max));
        }
        if self.k_observ < 1 || self.k_observ >= self.k_max {
            return Err(ValidationError::ObservePeriod {
                k_observ: self.k_observ,
                k_max: self.k_max,
            });
        }
        if self.prices.len() < 2 {
            return Err(ValidationError::TooFewPrices);
        }
        if self.prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ValidationError::NegativePrice);
        }
        if self.prices.windows(2).any(|w| w[0] <= w[1]) {
            return Err(ValidationError::PricesNotDecreasing);
        }
        if self.scenarios.is_empty() {
            return Err(ValidationError::NoScenarios);
        }
        let expected = [self.n_periods(), self.prices.len(), nb, ns];
        let mut sum = 0.0;
        for (i, sc) in self.scenarios.iter().enumerate() {
            if !sc.probability.is_finite() || sc.probability < 0.0 {
                return Err(ValidationError::Probability(i));
            }
            sum += sc.probability;
            if sc.demand.dims != expected {
                return Err(ValidationError::DemandShape {
                    scenario: i,
                    found: sc.demand.dims.to_vec(),
                    expected,
                });
            }
            for k in 0..expected[0] {
                for p in 0..expected[1] {
                    let sentinel_ok = k == self.k_max && p == self.p_max();
                    for b in 0..nb {
                        for s in 0..ns {
                            let d = sc.demand.get(k, p, b, s);
                            let ok = (d.is_finite() && d >= 0.0)
                                || (sentinel_ok && d == f64::INFINITY);
                            if !ok {
                                return Err(ValidationError::DemandValue {
                                    scenario: i,
                                    k,
                                    p,
                                    b,
                                    s,
                                });
                            }
                        }
                    }
                }
            }
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ValidationError::ProbabilitySum(sum));
        }
        match &self.handling {
            HandlingCost::Table(t) => {
                let shape_ok = t.len() == nb
                    && t.iter().all(|row| {
                        row.len() == self.n_lot_types()
                            && row.iter().all(|c| c.len() == self.multiplicities.len())
                    });
                if !shape_ok {
                    return Err(ValidationError::HandlingShape);
                }
                if t.iter().flatten().flatten().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(ValidationError::HandlingValue);
                }
            }
            HandlingCost::Parametric {
                acquisition_per_item,
                pick_cost,
            } => {
                let bad = |x: &f64| !x.is_finite() || *x < 0.0;
                if bad(acquisition_per_item) || bad(pick_cost) {
                    return Err(ValidationError::HandlingValue);
                }
            }
        }
        if self.opening_costs.len() != self.max_lot_types {
            return Err(ValidationError::OpeningLength {
                expected: self.max_lot_types,
                found: self.opening_costs.len(),
            });
        }
        if self.markdown_costs.len() != self.n_periods() {
            return Err(ValidationError::MarkdownLength {
                expected: self.n_periods(),
                found: self.markdown_costs.len(),
            });
        }
        if self
            .opening_costs
            .iter()
            .chain(&self.markdown_costs)
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(ValidationError::NegativeCost);
        }
        if !self.discount_rate.is_finite() || self.discount_rate < 0.0 {
            return Err(ValidationError::DiscountRate);
        }
        Ok(())
    }

    /// Checks the assignment invariants: one admissible choice per branch,
    /// at most `max_lot_types` distinct lot-types, total supply in bounds.
    pub fn check_assignment(&self, assignment: &LotAssignment) -> Result<()> {
        if assignment.choices.len() != self.n_branches() {
            return Err(Error::Dimension(format!(
                "assignment covers {} branches, instance has {}",
                assignment.choices.len(),
                self.n_branches()
            )));
        }
        for (b, c) in assignment.choices.iter().enumerate() {
            if c.lot >= self.n_lot_types() {
                return Err(Error::Infeasible(format!(
                    "branch {b}: lot-type {} does not exist",
                    c.lot
                )));
            }
            if self.multiplicity_index(c.multiplicity).is_none() {
                return Err(Error::Infeasible(format!(
                    "branch {b}: multiplicity {} is not admissible",
                    c.multiplicity
                )));
            }
        }
        let used = assignment.used_lot_types().len();
        if used > self.max_lot_types {
            return Err(Error::Infeasible(format!(
                "{used} lot-types used, at most {} allowed",
                self.max_lot_types
            )));
        }
        let total = inventory_from_assignment(assignment, self).total();
        if total < self.supply_lower || total > self.supply_upper {
            return Err(Error::Infeasible(format!(
                "total supply {total} outside [{}, {}]",
                self.supply_lower, self.supply_upper
            )));
        }
        Ok(())
    }

    pub fn to_raw(&self) -> RawInstance {
        RawInstance::from_instance(self)
    }
}

/// Parses and validates raw instance data.
pub fn validate_instance(raw: RawInstance) -> std::result::Result<Instance, ValidationError> {
    let instance = raw.into_instance()?;
    instance.validate()?;
    Ok(instance)
}

/// I[b][s] = m(b) * lot(b)[s], plus the total.
pub fn inventory_from_assignment(assignment: &LotAssignment, instance: &Instance) -> Inventory {
    let ns = instance.n_sizes();
    let mut cells = Vec::with_capacity(assignment.choices.len() * ns);
    for c in &assignment.choices {
        let lot = &instance.lot_types[c.lot];
        cells.extend(lot.counts.iter().map(|&l| u64::from(c.multiplicity) * u64::from(l)));
    }
    let total = cells.iter().sum();
    Inventory {
        n_sizes: ns,
        cells,
        total,
    }
}

/// Cumulative opening cost kappa_1 + ... + kappa_n for n used lot-types.
pub fn opening_cost(opening_costs: &[f64], used: usize) -> f64 {
    opening_costs.iter().take(used).sum()
}

/// Full expected discounted profit of a first-stage assignment together
/// with one trajectory per scenario.
pub fn ispo_objective(
    assignment: &LotAssignment,
    trajectories: &ScenarioTrajectoryMap,
    instance: &Instance,
) -> Result<f64> {
    instance.check_assignment(assignment)?;
    if trajectories.len() != instance.n_scenarios() {
        return Err(Error::Dimension(format!(
            "map covers {} scenarios, instance has {}",
            trajectories.len(),
            instance.n_scenarios()
        )));
    }
    let mut value = 0.0;
    for (b, c) in assignment.choices.iter().enumerate() {
        value -= instance.handling_cost_of(b, *c)?;
    }
    value -= opening_cost(&instance.opening_costs, assignment.used_lot_types().len());
    let supply = inventory_from_assignment(assignment, instance).to_supply();
    for (e, sc) in instance.scenarios.iter().enumerate() {
        let t = trajectories.get(e);
        t.check(instance)?;
        let sim = salesdyn::simulate_sales(&supply, e, t, instance)?;
        value += sc.probability * sim.discounted_profit;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tiny_instance;

    fn lot(v: &[u32]) -> LotType {
        LotType::new(v.to_vec())
    }

    #[test]
    fn inventory_from_table6_lot() {
        let mut inst = tiny_instance(0);
        inst.sizes = (0..6).map(|s| format!("s{s}")).collect();
        inst.lot_types = vec![lot(&[2, 2, 3, 4, 3, 3]), lot(&[1, 1, 1, 1, 1, 1])];
        inst.branches = vec!["b0".into()];
        let a = LotAssignment::new(vec![LotChoice {
            lot: 0,
            multiplicity: 4,
        }]);
        let inv = inventory_from_assignment(&a, &inst);
        assert_eq!(inv.cells(), &[8, 8, 12, 16, 12, 12]);
        assert_eq!(inv.branch_total(0), 68);
        let a = LotAssignment::new(vec![LotChoice {
            lot: 1,
            multiplicity: 1,
        }]);
        let inv = inventory_from_assignment(&a, &inst);
        assert_eq!(inv.cells(), &[1; 6]);
        assert_eq!(inv.total(), 6);
    }

    #[test]
    fn inventory_two_branches_hand_sum() {
        let mut inst = tiny_instance(0);
        inst.sizes = vec!["s".into(), "m".into()];
        inst.branches = vec!["b0".into(), "b1".into()];
        inst.lot_types = vec![lot(&[1, 2]), lot(&[1, 1])];
        let a = LotAssignment::new(vec![
            LotChoice {
                lot: 0,
                multiplicity: 2,
            },
            LotChoice {
                lot: 1,
                multiplicity: 3,
            },
        ]);
        let inv = inventory_from_assignment(&a, &inst);
        assert_eq!(inv.cells(), &[2, 4, 3, 3]);
        assert_eq!(inv.total(), 12);
    }

    #[test]
    fn opening_cost_is_cumulative() {
        let k = [100.0, 50.0, 50.0, 50.0];
        assert_eq!(opening_cost(&k, 0), 0.0);
        assert_eq!(opening_cost(&k, 1), 100.0);
        assert_eq!(opening_cost(&k, 3), 200.0);
    }

    #[test]
    fn parametric_handling_cost() {
        let mut inst = tiny_instance(0);
        inst.handling = HandlingCost::Parametric {
            acquisition_per_item: 2.0,
            pick_cost: 0.0545,
        };
        let mi = inst.multiplicities.len() - 1;
        let m = f64::from(inst.multiplicities[mi]);
        let pieces = inst.lot_types[0].pieces() as f64;
        let c = inst.handling_cost(0, 0, mi);
        assert!((c - (m * 2.0 * pieces + m * 0.0545)).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_probability_sum() {
        let mut inst = tiny_instance(0);
        let d = inst.scenarios[0].demand.clone();
        inst.scenarios = (0..3)
            .map(|_| Scenario {
                probability: 0.3,
                demand: d.clone(),
            })
            .collect();
        let err = inst.validate().unwrap_err();
        assert!(err.to_string().starts_with("probabilities sum 0.9"), "{err}");
    }

    #[test]
    fn validation_rejects_flat_prices() {
        let mut inst = tiny_instance(0);
        inst.prices = vec![10.0, 10.0, 4.0];
        // keep the demand shape consistent so the price check is what fires
        for sc in &mut inst.scenarios {
            let [np, _, nb, ns] = sc.demand.dims();
            sc.demand = DemandTensor::zeros(np, 3, nb, ns);
        }
        assert_eq!(
            inst.validate().unwrap_err(),
            ValidationError::PricesNotDecreasing
        );
        assert_eq!(
            ValidationError::PricesNotDecreasing.to_string(),
            "prices not strictly decreasing"
        );
    }

    #[test]
    fn validation_rejects_misplaced_sentinel() {
        let mut inst = tiny_instance(0);
        inst.scenarios[0].demand.set(0, 0, 0, 0, f64::INFINITY);
        assert!(matches!(
            inst.validate(),
            Err(ValidationError::DemandValue { k: 0, p: 0, .. })
        ));
    }

    #[test]
    fn assignment_check_rejects_too_many_lot_types() {
        let inst = tiny_instance(0);
        let n = inst.max_lot_types + 1;
        if inst.n_branches() >= n && inst.n_lot_types() >= n {
            let mut choices: Vec<LotChoice> = (0..inst.n_branches())
                .map(|b| LotChoice {
                    lot: b.min(n - 1),
                    multiplicity: inst.multiplicities[0],
                })
                .collect();
            choices.truncate(inst.n_branches());
            let a = LotAssignment::new(choices);
            assert!(inst.check_assignment(&a).is_err());
        }
    }
}
