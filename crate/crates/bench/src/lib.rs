//! Shared inputs for the benchmarks.

use ispo_core::adjust::AdjustProblem;
use ispo_core::bounds::BoundTable;
use ispo_core::field::read_differences;
use ispo_core::model::{desk_config, generate_instance};
use ispo_core::pingpong::{best_bound_map, solve_pingpong, PingPongParams};
use ispo_core::sop::{modified_costs, ProfitCoefficients};
use ispo_core::trajectory::instance_trajectories;
use ispo_core::{inventory_from_assignment, Instance, SupplyMatrix};

pub fn desk_instance(seed: u64) -> Instance {
    generate_instance(&desk_config(), seed)
}

/// Size-stage coefficients for the best-bound map.
pub fn desk_coefficients(instance: &Instance) -> ProfitCoefficients {
    let trajectories = instance_trajectories(instance);
    let table = BoundTable::compute(instance, &trajectories).expect("bound table");
    let map = best_bound_map(&table, &trajectories).expect("best-bound map");
    modified_costs(instance, &map).expect("coefficients")
}

/// Supply of the ping-pong solution.
pub fn desk_supply(instance: &Instance) -> SupplyMatrix {
    let outcome = solve_pingpong(instance, &PingPongParams::default()).expect("ping-pong");
    inventory_from_assignment(&outcome.solution.assignment, instance).to_supply()
}

/// Convex separable problem: entity v prefers level `(3v + 5a) % levels`
/// of alternative a, quadratic penalty around it.
pub fn convex_adjust(entities: usize, alternatives: usize, levels: usize) -> AdjustProblem {
    let target = |v: usize, a: usize| ((3 * v + 5 * a) % levels) as f64;
    let size = |a: usize, b: usize| ((a % 3 + 1) * (b + 1)) as f64;
    let total: f64 = (0..entities)
        .map(|v| size(0, target(v, 0) as usize))
        .sum();
    AdjustProblem::from_fn(
        entities,
        alternatives,
        levels,
        |v, a, b| {
            let d = b as f64 - target(v, a);
            d * d + a as f64
        },
        size,
        0.8 * total,
        0.9 * total,
    )
    .expect("valid adjust problem")
}

/// Difference column of the shipped 30-pair fixture.
pub fn table3() -> Vec<f64> {
    read_differences(include_str!("../../../fixtures/table3.csv").as_bytes()).expect("fixture")
}
