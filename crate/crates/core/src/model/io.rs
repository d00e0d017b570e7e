//! JSON instance format.

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

use super::instance::{DemandTensor, HandlingCost, Instance, LotType, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInstance {
    pub branches: Vec<String>,
    pub sizes: Vec<String>,
    pub lot_types: Vec<Vec<u32>>,
    pub multiplicities: Vec<u32>,
    pub max_lot_types: usize,
    pub supply_bounds: [u64; 2],
    pub periods: RawPeriods,
    pub prices: Vec<f64>,
    pub scenarios: Vec<RawScenario>,
    pub costs: RawCosts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPeriods {
    pub k_max: usize,
    pub k_observ: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub prob: f64,
    /// Nested `[k][p][b][s]`.
    pub demand: Vec<Vec<Vec<Vec<DemandValue>>>>,
}

/// A demand entry: a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandValue(pub f64);

impl Serialize for DemandValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for DemandValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(DemandValue(x)),
            Repr::Str(s) if s == "inf" => Ok(DemandValue(f64::INFINITY)),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "invalid demand value {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCosts {
    pub handling: RawHandling,
    pub opening: Vec<f64>,
    pub markdown: Vec<f64>,
    pub discount_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawHandling {
    /// `[branch][lot][multiplicity index]`
    Table(Vec<Vec<Vec<f64>>>),
    Parametric {
        acquisition_per_item: f64,
        pick_cost: f64,
    },
}

impl RawInstance {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn from_instance(inst: &Instance) -> Self {
        let scenarios = inst
            .scenarios
            .iter()
            .map(|sc| {
                let [nk, np, nb, ns] = sc.demand.dims();
                let demand = (0..nk)
                    .map(|k| {
                        (0..np)
                            .map(|p| {
                                (0..nb)
                                    .map(|b| {
                                        (0..ns)
                                            .map(|s| DemandValue(sc.demand.get(k, p, b, s)))
                                            .collect()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
                RawScenario {
                    prob: sc.probability,
                    demand,
                }
            })
            .collect();
        let handling = match &inst.handling {
            HandlingCost::Table(t) => RawHandling::Table(t.clone()),
            HandlingCost::Parametric {
                acquisition_per_item,
                pick_cost,
            } => RawHandling::Parametric {
                acquisition_per_item: *acquisition_per_item,
                pick_cost: *pick_cost,
            },
        };
        Self {
            branches: inst.branches.clone(),
            sizes: inst.sizes.clone(),
            lot_types: inst.lot_types.iter().map(|l| l.counts().to_vec()).collect(),
            multiplicities: inst.multiplicities.clone(),
            max_lot_types: inst.max_lot_types,
            supply_bounds: [inst.supply_lower, inst.supply_upper],
            periods: RawPeriods {
                k_max: inst.k_max,
                k_observ: inst.k_observ,
            },
            prices: inst.prices.clone(),
            scenarios,
            costs: RawCosts {
                handling,
                opening: inst.opening_costs.clone(),
                markdown: inst.markdown_costs.clone(),
                discount_rate: inst.discount_rate,
            },
        }
    }

    /// Structural conversion; semantic checks are left to
    /// [`Instance::validate`].
    pub fn into_instance(self) -> Result<Instance, ValidationError> {
        let mut scenarios = Vec::with_capacity(self.scenarios.len());
        for (i, rs) in self.scenarios.into_iter().enumerate() {
            let nk = rs.demand.len();
            let np = rs.demand.first().map_or(0, Vec::len);
            let nb = rs
                .demand
                .first()
                .and_then(|v| v.first())
                .map_or(0, Vec::len);
            let ns = rs
                .demand
                .first()
                .and_then(|v| v.first())
                .and_then(|v| v.first())
                .map_or(0, Vec::len);
            let ragged = rs.demand.iter().any(|pk| {
                pk.len() != np
                    || pk
                        .iter()
                        .any(|pb| pb.len() != nb || pb.iter().any(|ps| ps.len() != ns))
            });
            if ragged {
                return Err(ValidationError::Format(format!(
                    "scenario {i}: ragged demand tensor"
                )));
            }
            let mut demand = DemandTensor::zeros(nk, np, nb, ns);
            for (k, pk) in rs.demand.iter().enumerate() {
                for (p, pb) in pk.iter().enumerate() {
                    for (b, ps) in pb.iter().enumerate() {
                        for (s, v) in ps.iter().enumerate() {
                            demand.set(k, p, b, s, v.0);
                        }
                    }
                }
            }
            scenarios.push(Scenario {
                probability: rs.prob,
                demand,
            });
        }
        let handling = match self.costs.handling {
            RawHandling::Table(t) => HandlingCost::Table(t),
            RawHandling::Parametric {
                acquisition_per_item,
                pick_cost,
            } => HandlingCost::Parametric {
                acquisition_per_item,
                pick_cost,
            },
        };
        Ok(Instance {
            branches: self.branches,
            sizes: self.sizes,
            lot_types: self.lot_types.into_iter().map(LotType::new).collect(),
            multiplicities: self.multiplicities,
            max_lot_types: self.max_lot_types,
            supply_lower: self.supply_bounds[0],
            supply_upper: self.supply_bounds[1],
            k_max: self.periods.k_max,
            k_observ: self.periods.k_observ,
            prices: self.prices,
            scenarios,
            handling,
            opening_costs: self.costs.opening,
            markdown_costs: self.costs.markdown,
            discount_rate: self.costs.discount_rate,
        })
    }
}

impl Instance {
    pub fn from_json(text: &str) -> crate::Result<Instance> {
        let raw = RawInstance::from_json(text)?;
        Ok(super::validate_instance(raw)?)
    }

    pub fn to_json(&self) -> String {
        self.to_raw().to_json()
    }
}
