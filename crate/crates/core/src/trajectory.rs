//! Mark-down strategies.
//!
//! A trajectory is written as the sales periods `1..k_max-1` with `p_max - 1`
//! stars inserted; the price index of period `k` is the number of stars in
//! front of item `k`. Stars behind the last item are unused mark-downs.
//! Period 0 always sells at the start price and period `k_max` at salvage.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTrajectory {
    indices: Vec<usize>,
}

impl PriceTrajectory {
    /// Wraps a price-index vector `p(0..=k_max)` without checking it.
    pub fn from_indices(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// Builds the trajectory for sorted star gap positions. Gap `g` sits in
    /// front of item `g + 1`; gap `k_max - 1` is behind the last item.
    pub fn from_stars(k_max: usize, p_max: usize, gaps: &[usize]) -> Result<Self> {
        if k_max < 2 || p_max < 1 {
            return Err(Error::Trajectory(format!(
                "need k_max >= 2 and p_max >= 1, got {k_max} and {p_max}"
            )));
        }
        if gaps.len() != p_max - 1 {
            return Err(Error::Trajectory(format!(
                "{} stars given, {} expected",
                gaps.len(),
                p_max - 1
            )));
        }
        if gaps.windows(2).any(|w| w[0] > w[1]) || gaps.iter().any(|&g| g >= k_max) {
            return Err(Error::Trajectory("star positions unsorted or out of range".into()));
        }
        let mut indices = vec![0; k_max + 1];
        for (k, slot) in indices.iter_mut().enumerate().take(k_max).skip(1) {
            *slot = gaps.iter().filter(|&&g| g < k).count();
        }
        indices[k_max] = p_max;
        Ok(Self { indices })
    }

    /// Star gap positions, sorted. Inverse of [`PriceTrajectory::from_stars`].
    pub fn stars(&self, p_max: usize) -> Vec<usize> {
        let k_max = self.k_max();
        let mut gaps = Vec::with_capacity(p_max.saturating_sub(1));
        let mut prev = 0;
        for k in 1..k_max {
            for _ in prev..self.indices[k] {
                gaps.push(k - 1);
            }
            prev = self.indices[k];
        }
        while gaps.len() + 1 < p_max {
            gaps.push(k_max - 1);
        }
        gaps
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn k_max(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn price_at(&self, k: usize) -> Result<usize> {
        self.indices
            .get(k)
            .copied()
            .ok_or(Error::PeriodOutOfRange {
                period: k,
                k_max: self.k_max(),
            })
    }

    /// mkdn_k for every period; period 0 is never a mark-down.
    pub fn markdown_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.indices.len()];
        for k in 1..self.indices.len() {
            flags[k] = self.indices[k] != self.indices[k - 1];
        }
        flags
    }

    /// Mark-downs inside the selling season, i.e. before the salvage period.
    pub fn markdown_count(&self) -> usize {
        let k_max = self.k_max();
        (1..k_max)
            .filter(|&k| self.indices[k] > self.indices[k - 1])
            .count()
    }

    pub fn check_shape(&self, k_max: usize, p_max: usize, k_observ: usize) -> Result<()> {
        if self.indices.len() != k_max + 1 {
            return Err(Error::Trajectory(format!(
                "trajectory has {} periods, expected {}",
                self.indices.len(),
                k_max + 1
            )));
        }
        if self.indices[..k_observ].iter().any(|&p| p != 0) {
            return Err(Error::Trajectory(format!(
                "mark-down before period {k_observ}"
            )));
        }
        if self.indices[k_max] != p_max {
            return Err(Error::Trajectory("last period is not at salvage price".into()));
        }
        if self.indices.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Trajectory("price increases".into()));
        }
        if self.indices[..k_max].iter().any(|&p| p >= p_max) {
            return Err(Error::Trajectory("salvage price before the last period".into()));
        }
        Ok(())
    }

    pub fn check(&self, instance: &Instance) -> Result<()> {
        self.check_shape(instance.k_max, instance.p_max(), instance.k_observ)
    }
}

impl fmt::Display for PriceTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, p) in self.indices.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "p{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PriceTrajectory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indices = s
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.strip_prefix('p')
                    .unwrap_or(tok)
                    .parse::<usize>()
                    .map_err(|_| Error::Trajectory(format!("bad price token {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if indices.len() < 3 {
            return Err(Error::Trajectory("too few periods".into()));
        }
        Ok(Self { indices })
    }
}

/// Deterministic preference among equally good trajectories: fewer
/// mark-downs first, then later ones.
pub fn preference_cmp(a: &PriceTrajectory, b: &PriceTrajectory) -> Ordering {
    a.markdown_count()
        .cmp(&b.markdown_count())
        .then_with(|| a.indices.cmp(&b.indices))
}

/// One trajectory per scenario.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioTrajectoryMap {
    entries: Vec<PriceTrajectory>,
}

impl ScenarioTrajectoryMap {
    pub fn new(entries: Vec<PriceTrajectory>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, e: usize) -> &PriceTrajectory {
        &self.entries[e]
    }

    pub fn entries(&self) -> &[PriceTrajectory] {
        &self.entries
    }

    pub fn check(&self, instance: &Instance) -> Result<()> {
        if self.entries.len() != instance.n_scenarios() {
            return Err(Error::Dimension(format!(
                "map covers {} scenarios, instance has {}",
                self.entries.len(),
                instance.n_scenarios()
            )));
        }
        self.entries.iter().try_for_each(|t| t.check(instance))
    }
}

/// C(k_max + p_max - 2, p_max - 1): the number of star encodings.
pub fn trajectory_count(k_max: usize, p_max: usize) -> Result<u128> {
    if k_max < 2 || p_max < 1 {
        return Err(Error::Trajectory(format!(
            "need k_max >= 2 and p_max >= 1, got {k_max} and {p_max}"
        )));
    }
    binomial((k_max + p_max - 2) as u128, (p_max - 1) as u128)
}

fn binomial(n: u128, k: u128) -> Result<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc
            .checked_mul(n - i)
            .ok_or(Error::Overflow("trajectory count"))?
            / (i + 1);
    }
    Ok(acc)
}

/// Every feasible trajectory, in lexicographic order of star positions.
pub fn enumerate_trajectories(k_max: usize, p_max: usize, k_observ: usize) -> Vec<PriceTrajectory> {
    if k_max < 2 || p_max < 1 {
        return Vec::new();
    }
    let stars = p_max - 1;
    let mut out = Vec::new();
    let mut gaps = vec![0usize; stars];
    loop {
        let t = PriceTrajectory::from_stars(k_max, p_max, &gaps)
            .expect("generated star positions are valid");
        if t.indices[..k_observ.min(k_max)].iter().all(|&p| p == 0) {
            out.push(t);
        }
        // next nondecreasing tuple over 0..k_max
        let mut i = stars;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if gaps[i] + 1 < k_max {
                let v = gaps[i] + 1;
                for g in &mut gaps[i..] {
                    *g = v;
                }
                break;
            }
        }
    }
}

/// Feasible trajectories of an instance.
pub fn instance_trajectories(instance: &Instance) -> Vec<PriceTrajectory> {
    enumerate_trajectories(instance.k_max, instance.p_max(), instance.k_observ)
}

pub fn price_at(t: &PriceTrajectory, k: usize) -> Result<usize> {
    t.price_at(k)
}
