//! Problem data, validation, decision-dependent quantities and the full
//! two-stage objective.

mod generate;
mod instance;
mod io;

pub use generate::{
    desk_config, generate_instance, tiny_config, tiny_instance, GeneratorConfig, SupplyBoundsSpec,
};
pub use instance::{
    inventory_from_assignment, ispo_objective, opening_cost, validate_instance, DemandTensor,
    HandlingCost, Instance, Inventory, LotAssignment, LotChoice, LotType, Scenario, SupplyMatrix,
};
pub use io::{RawCosts, RawHandling, RawInstance, RawPeriods, RawScenario};

/// Absolute tolerance for money comparisons.
pub const MONEY_TOL: f64 = 1e-9;
