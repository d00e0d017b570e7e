//! Integrated size and price optimization for pre-packed fashion articles.
//!
//! The first stage assigns one lot-type and multiplicity to every branch;
//! the second stage picks one mark-down trajectory per demand scenario.

pub mod adjust;
pub mod bnb;
pub mod bounds;
pub mod error;
pub mod field;
pub mod lp;
pub mod model;
pub mod pingpong;
pub mod salesdyn;
pub mod sop;
pub mod trajectory;

pub use error::{Error, Result, StatsError, ValidationError};
pub use model::{
    inventory_from_assignment, ispo_objective, validate_instance, Instance, Inventory,
    LotAssignment, LotChoice, LotType, SupplyMatrix,
};
pub use salesdyn::{simulate_sales, solve_pop_exact, SimulationResult};
pub use trajectory::{
    enumerate_trajectories, trajectory_count, PriceTrajectory, ScenarioTrajectoryMap,
};
