//! Seeded synthetic instances.
//!
//! Nominal demand is `scale * branch_weight * size_share * season(k) *
//! (p0 / p)^elasticity`; scenario demands are scalar multiples of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instance::{DemandTensor, HandlingCost, Instance, LotType, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplyBoundsSpec {
    Fixed { lower: u64, upper: u64 },
    /// Fractions of the nominal season demand at the start price.
    RelativeToDemand { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub branches: usize,
    pub sizes: usize,
    pub lot_types: usize,
    /// Largest piece count per size inside a generated lot-type.
    pub max_pieces_per_size: u32,
    pub multiplicities: Vec<u32>,
    pub max_lot_types: usize,
    pub k_max: usize,
    pub k_observ: usize,
    pub prices: Vec<f64>,
    pub scenario_multipliers: Vec<f64>,
    pub scenario_probabilities: Vec<f64>,
    /// Mean nominal season demand per branch at the start price.
    pub demand_scale: f64,
    pub price_elasticity: f64,
    pub season_decay: f64,
    /// Spread of branch weights around 1 (uniform in `1 +- spread`).
    pub branch_spread: f64,
    pub unbounded_salvage: bool,
    pub acquisition_per_item: f64,
    pub pick_cost: f64,
    pub opening_costs: Vec<f64>,
    pub markdown_cost: f64,
    pub discount_rate: f64,
    pub supply_bounds: SupplyBoundsSpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        desk_config()
    }
}

/// Desk-scale configuration: 30 branches, 20 lot-types, four usable, 13
/// sales weeks, five prices and low/normal/high success.
pub fn desk_config() -> GeneratorConfig {
    let branches = 30;
    // opening costs of the field setting, scaled to the branch count
    let share = branches as f64 / 1000.0;
    GeneratorConfig {
        branches,
        sizes: 4,
        lot_types: 20,
        max_pieces_per_size: 4,
        multiplicities: vec![1, 2, 3, 4, 5, 6],
        max_lot_types: 4,
        k_max: 13,
        k_observ: 2,
        prices: vec![30.0, 24.0, 18.0, 12.0, 4.0],
        scenario_multipliers: vec![0.7, 1.0, 1.3],
        scenario_probabilities: vec![0.25, 0.5, 0.25],
        demand_scale: 24.0,
        price_elasticity: 1.5,
        season_decay: 0.93,
        branch_spread: 0.6,
        unbounded_salvage: true,
        acquisition_per_item: 8.0,
        pick_cost: 0.0545,
        opening_costs: vec![100.0 * share, 50.0 * share, 50.0 * share, 50.0 * share],
        markdown_cost: 0.0,
        discount_rate: 0.000974868,
        supply_bounds: SupplyBoundsSpec::RelativeToDemand {
            lower: 0.9,
            upper: 1.1,
        },
    }
}

/// Member `seed` of the tiny family used by the exhaustive oracles: at most
/// 4 branches, 2 sizes, 5 lot-types, two usable, `k_max <= 5`, `p_max <= 2`
/// and two scenarios.
pub fn tiny_config(seed: u64) -> GeneratorConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7469_6e79);
    let k_max = rng.random_range(3..=5);
    let p_max = rng.random_range(1..=2);
    let prices = match p_max {
        1 => vec![10.0, 3.0],
        _ => vec![10.0, 7.0, 2.0],
    };
    let lower = rng.random_range(0.3..0.9);
    let width = if rng.random_bool(0.3) { 10.0 } else { 0.6 };
    let p_low = rng.random_range(0.2..0.8);
    GeneratorConfig {
        branches: rng.random_range(2..=4),
        sizes: rng.random_range(1..=2),
        lot_types: rng.random_range(2..=5),
        max_pieces_per_size: 3,
        multiplicities: if rng.random_bool(0.5) {
            vec![1, 2]
        } else {
            vec![1, 2, 3]
        },
        max_lot_types: rng.random_range(1..=2),
        k_max,
        k_observ: rng.random_range(1..k_max),
        prices,
        scenario_multipliers: vec![0.7, 1.3],
        scenario_probabilities: vec![p_low, 1.0 - p_low],
        demand_scale: rng.random_range(2.0..8.0),
        price_elasticity: 1.2,
        season_decay: 0.85,
        branch_spread: 0.6,
        unbounded_salvage: rng.random_bool(0.5),
        acquisition_per_item: rng.random_range(1.0..4.0),
        pick_cost: 0.0545,
        opening_costs: vec![1.0, 0.5],
        markdown_cost: if rng.random_bool(0.5) { 0.0 } else { 0.3 },
        discount_rate: if rng.random_bool(0.5) { 0.0 } else { 0.05 },
        supply_bounds: SupplyBoundsSpec::RelativeToDemand {
            lower,
            upper: lower + width,
        },
    }
}

/// The tiny-family member `seed`, generated with the same seed.
pub fn tiny_instance(seed: u64) -> Instance {
    generate_instance(&tiny_config(seed), seed)
}

/// Deterministic in `(config, seed)`.
pub fn generate_instance(config: &GeneratorConfig, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = config.branches;
    let ns = config.sizes;
    let np = config.prices.len();
    let nk = config.k_max + 1;

    // bell-shaped size profile, mildly perturbed per branch
    let centre = (ns as f64 - 1.0) / 2.0;
    let base_profile: Vec<f64> = (0..ns)
        .map(|s| {
            let z = (s as f64 - centre) / (ns as f64 / 2.0).max(1.0);
            (-z * z).exp()
        })
        .collect();
    let weights: Vec<f64> = (0..nb)
        .map(|_| {
            let spread = config.branch_spread.clamp(0.0, 0.99);
            if spread > 0.0 {
                rng.random_range(1.0 - spread..=1.0 + spread)
            } else {
                1.0
            }
        })
        .collect();
    let shares: Vec<Vec<f64>> = (0..nb)
        .map(|_| {
            let raw: Vec<f64> = base_profile
                .iter()
                .map(|w| w * rng.random_range(0.8..1.25))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        })
        .collect();
    let selling = config.k_max.max(1);
    let season_norm: f64 = (0..selling)
        .map(|k| config.season_decay.powi(k as i32))
        .sum();
    let season: Vec<f64> = (0..nk)
        .map(|k| config.season_decay.powi(k as i32) / season_norm)
        .collect();
    let p0 = config.prices[0];
    let response: Vec<f64> = config
        .prices
        .iter()
        .map(|&p| {
            if p > 0.0 {
                (p0 / p).powf(config.price_elasticity)
            } else {
                (p0 / config.prices[np.saturating_sub(2)].max(1e-9)).powf(config.price_elasticity)
            }
        })
        .collect();

    let mut nominal = DemandTensor::zeros(nk, np, nb, ns);
    for k in 0..nk {
        for (p, r) in response.iter().enumerate() {
            for b in 0..nb {
                for s in 0..ns {
                    let d = config.demand_scale * weights[b] * shares[b][s] * season[k] * r;
                    nominal.set(k, p, b, s, d);
                }
            }
        }
    }
    if config.unbounded_salvage {
        for b in 0..nb {
            for s in 0..ns {
                nominal.set(config.k_max, np - 1, b, s, f64::INFINITY);
            }
        }
    }

    let lot_types = generate_lot_types(&mut rng, config, &base_profile);

    let prob_total: f64 = config.scenario_probabilities.iter().sum();
    let mut probs: Vec<f64> = config
        .scenario_probabilities
        .iter()
        .map(|p| p / prob_total)
        .collect();
    // make the sum exact to the last bit where possible
    if let Some(last) = probs.len().checked_sub(1) {
        let head: f64 = probs[..last].iter().sum();
        probs[last] = 1.0 - head;
    }
    let scenarios = config
        .scenario_multipliers
        .iter()
        .zip(&probs)
        .map(|(&alpha, &probability)| Scenario {
            probability,
            demand: nominal.scaled(alpha),
        })
        .collect();

    let (supply_lower, supply_upper) = match config.supply_bounds {
        SupplyBoundsSpec::Fixed { lower, upper } => (lower, upper),
        SupplyBoundsSpec::RelativeToDemand { lower, upper } => {
            let mut season_total = 0.0;
            for k in 0..config.k_max {
                for b in 0..nb {
                    for s in 0..ns {
                        season_total += nominal.get(k, 0, b, s);
                    }
                }
            }
            (
                (lower * season_total).floor() as u64,
                (upper * season_total).ceil() as u64,
            )
        }
    };

    let mut opening_costs = config.opening_costs.clone();
    let fill = opening_costs.last().copied().unwrap_or(0.0);
    opening_costs.resize(config.max_lot_types, fill);

    Instance {
        branches: (0..nb).map(|b| format!("B{b:03}")).collect(),
        sizes: (0..ns).map(|s| format!("S{s}")).collect(),
        lot_types,
        multiplicities: config.multiplicities.clone(),
        max_lot_types: config.max_lot_types,
        supply_lower,
        supply_upper,
        k_max: config.k_max,
        k_observ: config.k_observ,
        prices: config.prices.clone(),
        scenarios,
        handling: HandlingCost::Parametric {
            acquisition_per_item: config.acquisition_per_item,
            pick_cost: config.pick_cost,
        },
        opening_costs,
        markdown_costs: vec![config.markdown_cost; nk],
        discount_rate: config.discount_rate,
    }
}

fn generate_lot_types(
    rng: &mut ChaCha8Rng,
    config: &GeneratorConfig,
    profile: &[f64],
) -> Vec<LotType> {
    let ns = config.sizes;
    let cap = config.max_pieces_per_size.max(1);
    let mut lots: Vec<LotType> = vec![LotType::new(vec![1; ns])];
    let peak = profile.iter().cloned().fold(0.0, f64::max);
    let mut attempts = 0;
    while lots.len() < config.lot_types {
        attempts += 1;
        let scale = rng.random_range(1.0..=f64::from(cap));
        let counts: Vec<u32> = profile
            .iter()
            .map(|w| {
                let jitter = rng.random_range(0.75..1.3);
                let v = (scale * w / peak * jitter).round() as u32;
                v.clamp(1, cap)
            })
            .collect();
        let lot = LotType::new(counts);
        if !lots.contains(&lot) || attempts > 1000 {
            lots.push(lot);
        }
    }
    lots
}
