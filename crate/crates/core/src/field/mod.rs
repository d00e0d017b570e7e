//! Field experiment machinery: receding-horizon pricing, stochastic sales,
//! the relative realized objective, paired studies and the exact signed
//! rank test.

mod realize;
mod rhpop;
mod rro;
mod study;
mod wilcoxon;

pub use realize::{draw_scenario, realize_sales, realize_with_scenario, PricingPolicy, Realization};
pub use rhpop::{rhpop_step, MarkdownDecision, RhPlanner, RhState};
pub use rro::{compute_rro, rro_parts, RroParts};
pub use study::{
    branch_metrics, calibration_p_values, distance_baseline, even_schedule, expected_season_demand,
    pair_branches, run_field_study, sub_instance, ArmConfig, FieldStudyConfig, FieldStudyReport,
    FieldStudySpec, PairedOutcome, PricingMethod, SupplyMethod,
};
pub use wilcoxon::{
    ks_critical_1pct, ks_distance_discrete, null_counts, p_value_null, read_differences,
    wilcoxon_exact_tail, wilcoxon_signed_rank, WilcoxonResult,
};
