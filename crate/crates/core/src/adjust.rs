//! Assignment with one coupling resource constraint.
//!
//! Every entity `v` picks one (alternative, level) pair `(a, b)`, paying
//! `psi(v, a, b)` and consuming `phi(a, b)`; the total consumption must lie
//! in `[lower, upper]`. The continuous relaxation is solved by greedy
//! exchanges along the lower convex hull of each entity's (phi, psi) points,
//! the integral problem by depth-first branch-and-bound on top of it.
//!
//! `psi = +inf` marks an unavailable option.

use std::cmp::Ordering;

use crate::error::{Error, Result};

const NODE_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustProblem {
    n_entities: usize,
    n_alternatives: usize,
    n_levels: usize,
    psi: Vec<f64>,
    phi: Vec<f64>,
    lower: f64,
    upper: f64,
    convex: bool,
}

/// The value one entity takes in a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntityChoice {
    Integral { a: usize, b: usize },
    /// `(1 - weight) * from + weight * to`, with `0 < weight < 1`.
    Mixed {
        from: (usize, usize),
        to: (usize, usize),
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustSolution {
    pub choices: Vec<EntityChoice>,
    pub objective: f64,
    pub resource: f64,
    pub exchanges: usize,
}

impl AdjustSolution {
    /// Number of variables strictly between 0 and 1.
    pub fn fractional_count(&self) -> usize {
        self.choices
            .iter()
            .map(|c| match c {
                EntityChoice::Integral { .. } => 0,
                EntityChoice::Mixed { .. } => 2,
            })
            .sum()
    }

    pub fn is_integral(&self) -> bool {
        self.fractional_count() == 0
    }

    /// The chosen pair per entity, if the solution is integral.
    pub fn integral_choices(&self) -> Option<Vec<(usize, usize)>> {
        self.choices
            .iter()
            .map(|c| match *c {
                EntityChoice::Integral { a, b } => Some((a, b)),
                EntityChoice::Mixed { .. } => None,
            })
            .collect()
    }

    fn fractional_entity(&self) -> Option<(usize, (usize, usize), (usize, usize))> {
        self.choices.iter().enumerate().find_map(|(v, c)| match *c {
            EntityChoice::Mixed { from, to, .. } => Some((v, from, to)),
            EntityChoice::Integral { .. } => None,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Down,
    Up,
}

impl AdjustProblem {
    /// `psi` is indexed `[v][a][b]`, `phi` `[a][b]`, both flattened.
    pub fn new(
        n_entities: usize,
        n_alternatives: usize,
        n_levels: usize,
        psi: Vec<f64>,
        phi: Vec<f64>,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        if psi.len() != n_entities * n_alternatives * n_levels
            || phi.len() != n_alternatives * n_levels
        {
            return Err(Error::Dimension("adjust tables do not match dimensions".into()));
        }
        if n_alternatives == 0 || n_levels == 0 {
            return Err(Error::Dimension("no alternatives or levels".into()));
        }
        if psi.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
            return Err(Error::Dimension("psi must be finite or +inf".into()));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dimension("phi must be finite".into()));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::Dimension("resource bounds".into()));
        }
        for a in 0..n_alternatives {
            for b in 1..n_levels {
                if phi[a * n_levels + b] < phi[a * n_levels + b - 1] {
                    return Err(Error::NotMonotone);
                }
            }
        }
        let mut problem = Self {
            n_entities,
            n_alternatives,
            n_levels,
            psi,
            phi,
            lower,
            upper,
            convex: true,
        };
        problem.convex = problem.check_convex();
        Ok(problem)
    }

    pub fn from_fn(
        n_entities: usize,
        n_alternatives: usize,
        n_levels: usize,
        psi: impl Fn(usize, usize, usize) -> f64,
        phi: impl Fn(usize, usize) -> f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        let mut psi_table = Vec::with_capacity(n_entities * n_alternatives * n_levels);
        for v in 0..n_entities {
            for a in 0..n_alternatives {
                for b in 0..n_levels {
                    psi_table.push(psi(v, a, b));
                }
            }
        }
        let mut phi_table = Vec::with_capacity(n_alternatives * n_levels);
        for a in 0..n_alternatives {
            for b in 0..n_levels {
                phi_table.push(phi(a, b));
            }
        }
        Self::new(
            n_entities,
            n_alternatives,
            n_levels,
            psi_table,
            phi_table,
            lower,
            upper,
        )
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_alternatives(&self) -> usize {
        self.n_alternatives
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn psi(&self, v: usize, a: usize, b: usize) -> f64 {
        self.psi[(v * self.n_alternatives + a) * self.n_levels + b]
    }

    pub fn phi(&self, a: usize, b: usize) -> f64 {
        self.phi[a * self.n_levels + b]
    }

    /// Whether psi is convex in the level for every (v, a) on a contiguous
    /// finite domain.
    pub fn is_convex(&self) -> bool {
        self.convex
    }

    fn check_convex(&self) -> bool {
        for v in 0..self.n_entities {
            for a in 0..self.n_alternatives {
                let row: Vec<f64> = (0..self.n_levels).map(|b| self.psi(v, a, b)).collect();
                let Some(lo) = row.iter().position(|x| x.is_finite()) else {
                    continue;
                };
                let hi = row.iter().rposition(|x| x.is_finite()).unwrap_or(lo);
                if row[lo..=hi].iter().any(|x| !x.is_finite()) {
                    return false;
                }
                for b in lo + 1..hi {
                    let second = row[b + 1] - 2.0 * row[b] + row[b - 1];
                    let scale = row[b - 1].abs().max(row[b].abs()).max(row[b + 1].abs()).max(1.0);
                    if second < -1e-9 * scale {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Finite level range `[lo, hi]` of (v, a).
    fn finite_range(&self, v: usize, a: usize) -> Option<(usize, usize)> {
        let lo = (0..self.n_levels).find(|&b| self.psi(v, a, b).is_finite())?;
        let hi = (0..self.n_levels)
            .rev()
            .find(|&b| self.psi(v, a, b).is_finite())?;
        Some((lo, hi))
    }

    /// Level minimizing psi(v, a, .), smallest on ties.
    fn best_level(&self, v: usize, a: usize) -> Option<usize> {
        let (lo, hi) = self.finite_range(v, a)?;
        if self.convex {
            // first level whose forward difference is nonnegative
            let (mut l, mut h) = (lo, hi);
            while l < h {
                let mid = (l + h) / 2;
                if self.psi(v, a, mid + 1) >= self.psi(v, a, mid) {
                    h = mid;
                } else {
                    l = mid + 1;
                }
            }
            Some(l)
        } else {
            let mut best = lo;
            for b in lo..=hi {
                if self.psi(v, a, b) < self.psi(v, a, best) {
                    best = b;
                }
            }
            Some(best)
        }
    }

    /// Unconstrained best (a, b) of every entity; smallest (a, b) on ties.
    pub fn local_optima(&self) -> Result<Vec<(usize, usize)>> {
        (0..self.n_entities)
            .map(|v| {
                let mut best: Option<(usize, usize)> = None;
                for a in 0..self.n_alternatives {
                    if let Some(b) = self.best_level(v, a) {
                        let better = match best {
                            None => true,
                            Some((ba, bb)) => self.psi(v, a, b) < self.psi(v, ba, bb),
                        };
                        if better {
                            best = Some((a, b));
                        }
                    }
                }
                best.ok_or_else(|| Error::Infeasible(format!("entity {v} has no option")))
            })
            .collect()
    }

    /// Optimal value of the continuous relaxation. Refuses non-convex
    /// problems.
    pub fn solve_relaxed(&self) -> Result<AdjustSolution> {
        if !self.convex {
            return Err(Error::NotConvex);
        }
        self.relax(&vec![None; self.n_entities])
    }

    fn tolerance(&self) -> f64 {
        let finite = |x: f64| if x.is_finite() { x.abs() } else { 0.0 };
        1e-9 * (1.0 + finite(self.lower).max(finite(self.upper)))
    }

    /// Cheapest exchange away from `cur` for one entity:
    /// `(slope, phi step, a, b)`.
    fn best_move(&self, v: usize, cur: (usize, usize), dir: Direction) -> Option<(f64, f64, usize, usize)> {
        let psi_cur = self.psi(v, cur.0, cur.1);
        let phi_cur = self.phi(cur.0, cur.1);
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for a in 0..self.n_alternatives {
            for b in 0..self.n_levels {
                let psi = self.psi(v, a, b);
                if !psi.is_finite() {
                    continue;
                }
                let step = match dir {
                    Direction::Down => phi_cur - self.phi(a, b),
                    Direction::Up => self.phi(a, b) - phi_cur,
                };
                if step <= 0.0 {
                    continue;
                }
                let slope = (psi - psi_cur) / step;
                let better = match best {
                    None => true,
                    // smaller slope, then the shorter step
                    Some((s, st, _, _)) => slope < s || (slope == s && step < st),
                };
                if better {
                    best = Some((slope, step, a, b));
                }
            }
        }
        best
    }

    /// Relaxation with some entities fixed.
    fn relax(&self, fixed: &[Option<(usize, usize)>]) -> Result<AdjustSolution> {
        let local = self.local_optima()?;
        let mut cur: Vec<(usize, usize)> = local
            .iter()
            .zip(fixed)
            .map(|(&l, f)| f.unwrap_or(l))
            .collect();
        for (v, &(a, b)) in cur.iter().enumerate() {
            if !self.psi(v, a, b).is_finite() {
                return Err(Error::Infeasible(format!("entity {v} fixed to unavailable option")));
            }
        }
        let mut resource: f64 = cur.iter().map(|&(a, b)| self.phi(a, b)).sum();
        let tol = self.tolerance();
        let dir = if resource > self.upper + tol {
            Direction::Down
        } else if resource < self.lower - tol {
            Direction::Up
        } else {
            return Ok(self.integral_solution(cur, 0));
        };
        let target = match dir {
            Direction::Down => self.upper,
            Direction::Up => self.lower,
        };
        let mut moves: Vec<Option<(f64, f64, usize, usize)>> = (0..self.n_entities)
            .map(|v| match fixed[v] {
                Some(_) => None,
                None => self.best_move(v, cur[v], dir),
            })
            .collect();
        let mut exchanges = 0;
        loop {
            let mut pick: Option<usize> = None;
            for (v, m) in moves.iter().enumerate() {
                if let Some((slope, ..)) = m {
                    let better = match pick {
                        None => true,
                        Some(p) => *slope < moves[p].unwrap().0,
                    };
                    if better {
                        pick = Some(v);
                    }
                }
            }
            let Some(v) = pick else {
                return Err(Error::Infeasible(
                    "resource bounds cannot be met".into(),
                ));
            };
            let (_, step, a, b) = moves[v].unwrap();
            let remaining = (resource - target).abs();
            exchanges += 1;
            if step <= remaining + tol {
                cur[v] = (a, b);
                resource += match dir {
                    Direction::Down => -step,
                    Direction::Up => step,
                };
                if (resource - target).abs() <= tol
                    || (dir == Direction::Down && resource < target)
                    || (dir == Direction::Up && resource > target)
                {
                    return Ok(self.integral_solution(cur, exchanges));
                }
                moves[v] = self.best_move(v, cur[v], dir);
            } else {
                let weight = remaining / step;
                let mut sol = self.integral_solution(cur.clone(), exchanges);
                let from = cur[v];
                sol.objective += weight * (self.psi(v, a, b) - self.psi(v, from.0, from.1));
                sol.resource = target;
                sol.choices[v] = EntityChoice::Mixed {
                    from,
                    to: (a, b),
                    weight,
                };
                return Ok(sol);
            }
        }
    }

    fn integral_solution(&self, cur: Vec<(usize, usize)>, exchanges: usize) -> AdjustSolution {
        let objective = cur
            .iter()
            .enumerate()
            .map(|(v, &(a, b))| self.psi(v, a, b))
            .sum();
        let resource = cur.iter().map(|&(a, b)| self.phi(a, b)).sum();
        AdjustSolution {
            choices: cur
                .into_iter()
                .map(|(a, b)| EntityChoice::Integral { a, b })
                .collect(),
            objective,
            resource,
            exchanges,
        }
    }

    /// Objective of an integral choice vector, `None` if unavailable or
    /// outside the resource bounds.
    pub fn evaluate(&self, choice: &[(usize, usize)]) -> Option<f64> {
        let tol = self.tolerance();
        let resource: f64 = choice.iter().map(|&(a, b)| self.phi(a, b)).sum();
        if resource < self.lower - tol || resource > self.upper + tol {
            return None;
        }
        let value: f64 = choice
            .iter()
            .enumerate()
            .map(|(v, &(a, b))| self.psi(v, a, b))
            .sum();
        value.is_finite().then_some(value)
    }

    /// Optimal integral solution.
    pub fn solve_integral(&self) -> Result<AdjustSolution> {
        self.solve_integral_with_limit(NODE_LIMIT)
    }

    pub fn solve_integral_with_limit(&self, node_limit: usize) -> Result<AdjustSolution> {
        if let Some(sol) = self.solve_integral_dp()? {
            return Ok(sol);
        }
        self.solve_integral_bnb(node_limit)
    }

    /// Exact dynamic program over the resource total. Applies when every
    /// phi is a nonnegative integer and the table stays small; `None`
    /// otherwise.
    fn solve_integral_dp(&self) -> Result<Option<AdjustSolution>> {
        if self.phi.iter().any(|&x| x < 0.0 || x.fract() != 0.0 || x > 1e7) {
            return Ok(None);
        }
        let options: Vec<Vec<(usize, usize, usize)>> = (0..self.n_entities)
            .map(|v| {
                (0..self.n_alternatives)
                    .flat_map(|a| (0..self.n_levels).map(move |b| (a, b)))
                    .filter(|&(a, b)| self.psi(v, a, b).is_finite())
                    .map(|(a, b)| (a, b, self.phi(a, b) as usize))
                    .collect()
            })
            .collect();
        if let Some(v) = options.iter().position(Vec::is_empty) {
            return Err(Error::Infeasible(format!("entity {v} has no option")));
        }
        let cap_total: usize = options
            .iter()
            .map(|o| o.iter().map(|x| x.2).max().unwrap_or(0))
            .sum();
        let cap = if self.upper.is_finite() {
            cap_total.min(self.upper.max(0.0).floor() as usize)
        } else {
            cap_total
        };
        let work: usize = options.iter().map(Vec::len).sum::<usize>().saturating_mul(cap + 1);
        if work > 400_000_000 {
            return Ok(None);
        }
        let width = cap + 1;
        let mut cost = vec![f64::INFINITY; width];
        cost[0] = 0.0;
        // choice[v * width + r]: option index reaching r after entity v
        let mut choice = vec![u32::MAX; self.n_entities * width];
        let mut next = vec![f64::INFINITY; width];
        for (v, opts) in options.iter().enumerate() {
            next.iter_mut().for_each(|x| *x = f64::INFINITY);
            for r in 0..width {
                let base = cost[r];
                if !base.is_finite() {
                    continue;
                }
                for (oi, &(a, b, w)) in opts.iter().enumerate() {
                    let nr = r + w;
                    if nr >= width {
                        continue;
                    }
                    let c = base + self.psi(v, a, b);
                    if c < next[nr] {
                        next[nr] = c;
                        choice[v * width + nr] = oi as u32;
                    }
                }
            }
            std::mem::swap(&mut cost, &mut next);
        }
        let lo = self.lower.max(0.0).ceil() as usize;
        let mut best: Option<usize> = None;
        for r in lo..width {
            if cost[r].is_finite() && best.is_none_or(|b| cost[r] < cost[b]) {
                best = Some(r);
            }
        }
        let Some(mut r) = best else {
            return Err(Error::Infeasible("resource bounds cannot be met".into()));
        };
        let mut picks = vec![(0, 0); self.n_entities];
        for v in (0..self.n_entities).rev() {
            let (a, b, w) = options[v][choice[v * width + r] as usize];
            picks[v] = (a, b);
            r -= w;
        }
        Ok(Some(self.integral_solution(picks, 0)))
    }

    fn solve_integral_bnb(&self, node_limit: usize) -> Result<AdjustSolution> {
        let mut search = Search {
            problem: self,
            best: None,
            nodes: 0,
            node_limit,
        };
        let mut fixed = vec![None; self.n_entities];
        search.dfs(&mut fixed)?;
        match search.best {
            Some((_, choice)) => Ok(self.integral_solution(choice, 0)),
            None => Err(Error::Infeasible("resource bounds cannot be met".into())),
        }
    }
}

struct Search<'a> {
    problem: &'a AdjustProblem,
    best: Option<(f64, Vec<(usize, usize)>)>,
    nodes: usize,
    node_limit: usize,
}

impl Search<'_> {
    fn offer(&mut self, choice: Vec<(usize, usize)>) {
        if let Some(value) = self.problem.evaluate(&choice) {
            let better = match &self.best {
                None => true,
                Some((b, c)) => value < *b || (value == *b && choice < *c),
            };
            if better {
                self.best = Some((value, choice));
            }
        }
    }

    fn dfs(&mut self, fixed: &mut Vec<Option<(usize, usize)>>) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            return Err(Error::WorkLimit(format!(
                "integral adjustment exceeded {} nodes",
                self.node_limit
            )));
        }
        let relaxed = match self.problem.relax(fixed) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) => return Ok(()),
            Err(e) => return Err(e),
        };
        if let Some((best, _)) = &self.best {
            let slack = 1e-12 * (1.0 + best.abs());
            if relaxed.objective > *best + slack
                || (relaxed.objective >= *best - slack && !relaxed.is_integral())
            {
                return Ok(());
            }
        }
        let Some((v, from, to)) = relaxed.fractional_entity() else {
            self.offer(relaxed.integral_choices().expect("integral"));
            return Ok(());
        };
        let base: Vec<(usize, usize)> = relaxed
            .choices
            .iter()
            .map(|c| match *c {
                EntityChoice::Integral { a, b } => (a, b),
                EntityChoice::Mixed { from, .. } => from,
            })
            .collect();
        let mut rounded = base.clone();
        rounded[v] = to;
        self.offer(rounded);

        let p = self.problem;
        let mut options: Vec<(usize, usize)> = Vec::new();
        options.push(to);
        options.push(from);
        let mut rest: Vec<(usize, usize)> = (0..p.n_alternatives)
            .flat_map(|a| (0..p.n_levels).map(move |b| (a, b)))
            .filter(|&(a, b)| p.psi(v, a, b).is_finite() && (a, b) != to && (a, b) != from)
            .collect();
        rest.sort_by(|x, y| {
            p.psi(v, x.0, x.1)
                .partial_cmp(&p.psi(v, y.0, y.1))
                .unwrap_or(Ordering::Equal)
                .then(x.cmp(y))
        });
        options.extend(rest);
        for opt in options {
            fixed[v] = Some(opt);
            self.dfs(fixed)?;
        }
        fixed[v] = None;
        Ok(())
    }
}
