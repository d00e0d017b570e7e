//! Paired test/control experiment over a set of articles.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StatsError};
use crate::model::{
    generate_instance, inventory_from_assignment, DemandTensor, GeneratorConfig, HandlingCost, Instance,
    LotAssignment, Scenario,
};
use crate::pingpong::{solve_pingpong, PingPongParams};
use crate::salesdyn::solve_pop_exact;
use crate::sop::{sfa_heuristic, ProfitCoefficients, SfaParams};
use crate::trajectory::{PriceTrajectory, ScenarioTrajectoryMap};

use super::realize::{draw_scenario, realize_with_scenario, PricingPolicy};
use super::rro::{rro_parts, RroParts};
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupplyMethod {
    /// Two-stage model solved by ping-pong.
    PingPong,
    /// Closest supply to the forecast demand, ignoring prices and costs.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PricingMethod {
    RhPop,
    /// Open-loop trajectories of the price stage for the chosen supply.
    OpenLoop,
    /// Mark-downs spread evenly after the observation period.
    EvenSchedule,
    Fixed(PriceTrajectory),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub supply: SupplyMethod,
    pub pricing: PricingMethod,
}

impl ArmConfig {
    pub fn optimized() -> Self {
        Self {
            supply: SupplyMethod::PingPong,
            pricing: PricingMethod::RhPop,
        }
    }

    pub fn baseline() -> Self {
        Self {
            supply: SupplyMethod::Distance,
            pricing: PricingMethod::EvenSchedule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldStudyConfig {
    pub test: ArmConfig,
    pub control: ArmConfig,
    /// Smoothing of the demand scale estimate.
    pub smoothing: f64,
    pub max_iters: usize,
    pub subset_budget: usize,
}

impl Default for FieldStudyConfig {
    fn default() -> Self {
        Self {
            test: ArmConfig::optimized(),
            control: ArmConfig::baseline(),
            smoothing: 0.5,
            max_iters: 10,
            subset_budget: SfaParams::default().subset_budget,
        }
    }
}

impl FieldStudyConfig {
    fn sfa(&self) -> SfaParams {
        SfaParams {
            subset_budget: self.subset_budget,
            ..SfaParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedOutcome {
    pub pair: usize,
    pub test_branch: usize,
    pub control_branch: usize,
    pub rro_test: f64,
    pub rro_control: f64,
    pub difference: f64,
    /// Missing when the rank test rejected the sample.
    pub signed_rank: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct FieldStudyReport {
    pub branch_names: Vec<String>,
    pub outcomes: Vec<PairedOutcome>,
    pub wilcoxon: std::result::Result<WilcoxonResult, StatsError>,
}

impl FieldStudyReport {
    pub fn differences(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.difference).collect()
    }

    pub fn mean_rro_test(&self) -> f64 {
        self.outcomes.iter().map(|o| o.rro_test).sum::<f64>() / self.outcomes.len() as f64
    }

    pub fn mean_rro_control(&self) -> f64 {
        self.outcomes.iter().map(|o| o.rro_control).sum::<f64>() / self.outcomes.len() as f64
    }

    /// Pair rows followed by `#` summary lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "pair",
                "test_branch",
                "control_branch",
                "rro_test",
                "rro_control",
                "difference",
                "signed_rank",
            ])?;
            for o in &self.outcomes {
                w.write_record([
                    (o.pair + 1).to_string(),
                    self.branch_names[o.test_branch].clone(),
                    self.branch_names[o.control_branch].clone(),
                    format!("{:.6}", o.rro_test),
                    format!("{:.6}", o.rro_control),
                    format!("{:.6}", o.difference),
                    o.signed_rank.map_or(String::new(), |r| r.to_string()),
                ])?;
            }
            w.flush()?;
        }
        writeln!(out, "# pairs: {}", self.outcomes.len())?;
        writeln!(out, "# mean_rro_test: {:.6}", self.mean_rro_test())?;
        writeln!(out, "# mean_rro_control: {:.6}", self.mean_rro_control())?;
        match &self.wilcoxon {
            Ok(w) => {
                writeln!(out, "# w_plus: {}", w.w_plus)?;
                writeln!(out, "# p_value: {:.6}", w.p_value)?;
            }
            Err(e) => writeln!(out, "# wilcoxon: {e}")?,
        }
        Ok(())
    }
}

/// Branches restricted to `branches` (in that order). Supply bounds,
/// opening and mark-down costs shrink with the share of branches kept.
pub fn sub_instance(instance: &Instance, branches: &[usize]) -> Result<Instance> {
    let nb = instance.n_branches();
    if branches.is_empty() || branches.iter().any(|&b| b >= nb) {
        return Err(Error::Dimension("branch subset out of range".into()));
    }
    let share = branches.len() as f64 / nb as f64;
    let [nk, np, _, ns] = instance.scenarios[0].demand.dims();
    let scenarios = instance
        .scenarios
        .iter()
        .map(|sc| {
            let mut d = DemandTensor::zeros(nk, np, branches.len(), ns);
            for k in 0..nk {
                for p in 0..np {
                    for (j, &b) in branches.iter().enumerate() {
                        for s in 0..ns {
                            d.set(k, p, j, s, sc.demand.get(k, p, b, s));
                        }
                    }
                }
            }
            Scenario {
                probability: sc.probability,
                demand: d,
            }
        })
        .collect();
    let handling = match &instance.handling {
        HandlingCost::Table(t) => HandlingCost::Table(branches.iter().map(|&b| t[b].clone()).collect()),
        h => h.clone(),
    };
    let sub = Instance {
        branches: branches.iter().map(|&b| instance.branches[b].clone()).collect(),
        scenarios,
        handling,
        supply_lower: (instance.supply_lower as f64 * share).floor() as u64,
        supply_upper: (instance.supply_upper as f64 * share).ceil() as u64,
        opening_costs: instance.opening_costs.iter().map(|c| c * share).collect(),
        markdown_costs: instance.markdown_costs.iter().map(|c| c * share).collect(),
        ..instance.clone()
    };
    sub.validate()?;
    Ok(sub)
}

/// `p_max - 1` mark-downs at evenly spaced periods after the observation
/// period, ending at the last regular price.
pub fn even_schedule(instance: &Instance) -> PriceTrajectory {
    let (k_max, k_obs, pm) = (instance.k_max, instance.k_observ, instance.p_max());
    let steps = pm - 1;
    let span = k_max - k_obs;
    let at: Vec<usize> = (1..=steps).map(|j| k_obs + (j * span) / pm).collect();
    let indices = (0..=k_max)
        .map(|k| if k == k_max { pm } else { at.iter().filter(|&&m| m <= k).count() })
        .collect();
    PriceTrajectory::from_indices(indices)
}

/// Expected regular-season demand per cell when prices follow `t`.
pub fn expected_season_demand(instance: &Instance, t: &PriceTrajectory) -> Vec<f64> {
    let ns = instance.n_sizes();
    let mut out = vec![0.0; instance.n_branches() * ns];
    for sc in &instance.scenarios {
        for k in 0..instance.k_max {
            let p = t.indices()[k];
            for b in 0..instance.n_branches() {
                for s in 0..ns {
                    out[b * ns + s] += sc.probability * sc.demand.get(k, p, b, s);
                }
            }
        }
    }
    out
}

/// Supply as close as possible, in summed absolute deviation, to the
/// expected demand under `t`. Costs play no role.
pub fn distance_baseline(instance: &Instance, t: &PriceTrajectory, sfa: &SfaParams) -> Result<LotAssignment> {
    let target = expected_season_demand(instance, t);
    let ns = instance.n_sizes();
    let coeffs = ProfitCoefficients::from_fn(instance, |b, l, mi| {
        let m = f64::from(instance.multiplicities[mi]);
        let lot = &instance.lot_types[l];
        -(0..ns)
            .map(|s| (m * f64::from(lot.count(s)) - target[b * ns + s]).abs())
            .sum::<f64>()
    });
    let mut free = instance.clone();
    free.opening_costs.iter_mut().for_each(|c| *c = 0.0);
    Ok(sfa_heuristic(&coeffs, &free, sfa)?.assignment)
}

/// Expected full-price revenue potential per branch, summed over articles.
pub fn branch_metrics(articles: &[Instance]) -> Vec<f64> {
    let nb = articles.first().map_or(0, |a| a.n_branches());
    let mut m = vec![0.0; nb];
    for a in articles {
        for sc in &a.scenarios {
            for k in 0..a.k_max {
                for (b, mb) in m.iter_mut().enumerate() {
                    for s in 0..a.n_sizes() {
                        *mb += sc.probability * a.prices[0] * sc.demand.get(k, 0, b, s);
                    }
                }
            }
        }
    }
    m
}

/// Adjacent pairs after sorting by metric; the first of each tuple is the
/// test branch.
pub fn pair_branches<R: Rng>(metrics: &[f64], rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if metrics.len() % 2 == 1 {
        return Err(Error::OddBranchCount(metrics.len()));
    }
    let mut order: Vec<usize> = (0..metrics.len()).collect();
    order.sort_by(|&a, &b| metrics[a].total_cmp(&metrics[b]).then(a.cmp(&b)));
    Ok(order
        .chunks(2)
        .map(|c| if rng.random_bool(0.5) { (c[0], c[1]) } else { (c[1], c[0]) })
        .collect())
}

struct ArmPlan {
    instance: Instance,
    assignment: LotAssignment,
    policy: PricingPolicy,
}

fn plan_arm(instance: &Instance, arm: &ArmConfig, config: &FieldStudyConfig) -> Result<ArmPlan> {
    let schedule = even_schedule(instance);
    let (assignment, map) = match arm.supply {
        SupplyMethod::PingPong => {
            let params = PingPongParams {
                max_iters: config.max_iters,
                sfa: config.sfa(),
            };
            let out = solve_pingpong(instance, &params)?;
            (out.solution.assignment, Some(out.solution.map))
        }
        SupplyMethod::Distance => {
            let basis = match &arm.pricing {
                PricingMethod::Fixed(t) => t.clone(),
                _ => schedule.clone(),
            };
            (distance_baseline(instance, &basis, &config.sfa())?, None)
        }
    };
    let policy = match &arm.pricing {
        PricingMethod::RhPop => PricingPolicy::RhPop {
            smoothing: config.smoothing,
        },
        PricingMethod::OpenLoop => {
            let map = match map {
                Some(m) => m,
                None => {
                    let supply = inventory_from_assignment(&assignment, instance).to_supply();
                    let pop = solve_pop_exact(&supply, instance)?;
                    ScenarioTrajectoryMap::new(pop.per_scenario.into_iter().map(|p| p.trajectory).collect())
                }
            };
            PricingPolicy::OpenLoop(map)
        }
        PricingMethod::EvenSchedule => PricingPolicy::Fixed(schedule),
        PricingMethod::Fixed(t) => PricingPolicy::Fixed(t.clone()),
    };
    Ok(ArmPlan {
        instance: instance.clone(),
        assignment,
        policy,
    })
}

/// Per-pair RRO parts of one article for the test and control arms.
fn article_parts(
    article: &Instance,
    pairs: &[(usize, usize)],
    config: &FieldStudyConfig,
    seed: u64,
) -> Result<(Vec<RroParts>, Vec<RroParts>)> {
    let test_branches: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let control_branches: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = draw_scenario(article, &mut rng)?;
    let mut out = Vec::with_capacity(2);
    for (stream, (branches, arm)) in [(&test_branches, &config.test), (&control_branches, &config.control)]
        .into_iter()
        .enumerate()
    {
        let sub = sub_instance(article, branches)?;
        let plan = plan_arm(&sub, arm, config)?;
        let mut arm_rng = ChaCha8Rng::seed_from_u64(seed);
        arm_rng.set_stream(stream as u64 + 1);
        let inv = inventory_from_assignment(&plan.assignment, &plan.instance);
        let real = realize_with_scenario(&plan.instance, &inv, &plan.policy, e, &mut arm_rng)?;
        let parts = (0..pairs.len())
            .map(|j| rro_parts(&real, &plan.assignment, &plan.instance, &[j]))
            .collect::<Result<Vec<_>>>()?;
        out.push(parts);
    }
    let control = out.pop().expect("two arms");
    let test = out.pop().expect("two arms");
    Ok((test, control))
}

/// Runs both arms on every article and compares the pairs.
pub fn run_field_study(
    articles: &[Instance],
    metrics: &[f64],
    config: &FieldStudyConfig,
    seed: u64,
) -> Result<FieldStudyReport> {
    let Some(first) = articles.first() else {
        return Err(Error::Dimension("no articles".into()));
    };
    let nb = first.n_branches();
    if metrics.len() != nb || articles.iter().any(|a| a.n_branches() != nb) {
        return Err(Error::Dimension("articles and metrics disagree on the branches".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let pairs = pair_branches(metrics, &mut master)?;
    let seeds: Vec<u64> = articles.iter().map(|_| master.next_u64()).collect();
    let per_article: Vec<Result<(Vec<RroParts>, Vec<RroParts>)>> = articles
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(a, &s)| article_parts(a, &pairs, config, s))
        .collect();
    let mut test = vec![RroParts::default(); pairs.len()];
    let mut control = vec![RroParts::default(); pairs.len()];
    for r in per_article {
        let (t, c) = r?;
        for j in 0..pairs.len() {
            test[j] += t[j];
            control[j] += c[j];
        }
    }
    let mut outcomes = Vec::with_capacity(pairs.len());
    for (j, &(tb, cb)) in pairs.iter().enumerate() {
        let rro_test = test[j].ratio()?;
        let rro_control = control[j].ratio()?;
        outcomes.push(PairedOutcome {
            pair: j,
            test_branch: tb,
            control_branch: cb,
            rro_test,
            rro_control,
            difference: rro_test - rro_control,
            signed_rank: None,
        });
    }
    let diffs: Vec<f64> = outcomes.iter().map(|o| o.difference).collect();
    let wilcoxon = wilcoxon_signed_rank(&diffs);
    if let Ok(w) = &wilcoxon {
        for (o, &r) in outcomes.iter_mut().zip(&w.signed_ranks) {
            o.signed_rank = Some(r);
        }
    }
    Ok(FieldStudyReport {
        branch_names: first.branches.clone(),
        outcomes,
        wilcoxon,
    })
}

/// Input of the `fieldstudy` command: how to generate the articles and
/// how to run the arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldStudySpec {
    pub generator: GeneratorConfig,
    pub articles: usize,
    /// Pairing metric per branch; defaults to [`branch_metrics`].
    pub metrics: Option<Vec<f64>>,
    pub study: FieldStudyConfig,
}

impl Default for FieldStudySpec {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig {
                branches: 60,
                ..GeneratorConfig::default()
            },
            articles: 5,
            metrics: None,
            study: FieldStudyConfig::default(),
        }
    }
}

impl FieldStudySpec {
    pub fn generate_articles(&self, seed: u64) -> Vec<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        (0..self.articles)
            .map(|_| generate_instance(&self.generator, rng.next_u64()))
            .collect()
    }

    pub fn run(&self, seed: u64) -> Result<FieldStudyReport> {
        let articles = self.generate_articles(seed);
        let metrics = self.metrics.clone().unwrap_or_else(|| branch_metrics(&articles));
        run_field_study(&articles, &metrics, &self.study, seed)
    }
}

/// Wilcoxon p-values of `runs` studies with seeds `base..base + runs`.
pub fn calibration_p_values(spec: &FieldStudySpec, runs: u64, base: u64) -> Result<Vec<f64>> {
    (base..base + runs)
        .into_par_iter()
        .map(|seed| Ok(spec.run(seed)?.wilcoxon?.p_value))
        .collect()
}
