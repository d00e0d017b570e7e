use thiserror::Error;

/// The first violated instance invariant found by validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("instance has no branches")]
    NoBranches,
    #[error("instance has no sizes")]
    NoSizes,
    #[error("instance has no lot-types")]
    NoLotTypes,
    #[error("lot-type {index} has {found} entries, expected {expected}")]
    LotTypeLength {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("lot-type {0} contains no pieces")]
    EmptyLotType(usize),
    #[error("multiplicities must be positive and strictly increasing")]
    Multiplicities,
    #[error("max_lot_types must be positive")]
    MaxLotTypes,
    #[error("supply bounds reversed: lower {lower} > upper {upper}")]
    SupplyBounds { lower: u64, upper: u64 },
    #[error("k_max must be at least 2, got {0}")]
    Horizon(usize),
    #[error("k_observ must satisfy 1 <= k_observ < k_max, got {k_observ} with k_max {k_max}")]
    ObservePeriod { k_observ: usize, k_max: usize },
    #[error("at least two prices are required")]
    TooFewPrices,
    #[error("prices not strictly decreasing")]
    PricesNotDecreasing,
    #[error("prices must be finite and nonnegative")]
    NegativePrice,
    #[error("instance has no scenarios")]
    NoScenarios,
    #[error("scenario {0} has an invalid probability")]
    Probability(usize),
    #[error("probabilities sum {}", short_decimal(*.0))]
    ProbabilitySum(f64),
    #[error("scenario {scenario} demand tensor has shape {found:?}, expected {expected:?}")]
    DemandShape {
        scenario: usize,
        found: Vec<usize>,
        expected: [usize; 4],
    },
    #[error("scenario {scenario} has invalid demand at [{k}][{p}][{b}][{s}]")]
    DemandValue {
        scenario: usize,
        k: usize,
        p: usize,
        b: usize,
        s: usize,
    },
    #[error("handling cost table has wrong shape")]
    HandlingShape,
    #[error("handling costs must be finite and nonnegative")]
    HandlingValue,
    #[error("expected {expected} opening costs, got {found}")]
    OpeningLength { expected: usize, found: usize },
    #[error("expected {expected} mark-down costs, got {found}")]
    MarkdownLength { expected: usize, found: usize },
    #[error("cost values must be finite and nonnegative")]
    NegativeCost,
    #[error("discount rate must be finite and nonnegative")]
    DiscountRate,
    #[error("{0}")]
    Format(String),
}

/// Errors from the statistics routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no differences supplied")]
    Empty,
    #[error("zero difference at position {0}")]
    ZeroDifference(usize),
    #[error("tied absolute differences at positions {0} and {1}")]
    TiedDifferences(usize, usize),
    #[error("difference at position {0} is not finite")]
    NonFinite(usize),
    #[error("sample size {0} exceeds the supported maximum of 64")]
    TooManyPairs(usize),
    #[error("rank sum {k} outside 0..={max}")]
    RankSumOutOfRange { k: u64, max: u64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    Validation(#[from] ValidationError),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("work limit exceeded: {0}")]
    WorkLimit(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("costs are not convex in the level index; relaxation refused")]
    NotConvex,
    #[error("resource function is not monotone in the level index")]
    NotMonotone,
    #[error("period {period} outside 0..={k_max}")]
    PeriodOutOfRange { period: usize, k_max: usize },
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
    #[error("zero denominator in relative realized objective")]
    ZeroDenominator,
    #[error("odd number of branches ({0}); pairing impossible")]
    OddBranchCount(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Up to 12 decimals, trailing zeros dropped, so that 0.8999999999999999
/// prints as 0.9.
fn short_decimal(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}
