//! Deterministic-equivalent MILP in LP text format, with closed-form sizes.
//!
//! Names use parentheses for indices (`x(b,l,m)`, `sop_assign(b)`), which
//! every common LP reader accepts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::model::Instance;

const LINE_TERMS: usize = 8;

/// Dimensions that determine the model size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpDims {
    pub branches: usize,
    pub sizes: usize,
    pub lot_types: usize,
    pub multiplicities: usize,
    pub max_lot_types: usize,
    pub scenarios: usize,
    pub k_max: usize,
    pub k_observ: usize,
    /// Number of prices including salvage.
    pub prices: usize,
    /// Demand entries equal to the unbounded sentinel; their demand bound
    /// is not emitted.
    pub unbounded_demands: usize,
}

impl LpDims {
    pub fn of(instance: &Instance) -> Self {
        let unbounded_demands = instance
            .scenarios
            .iter()
            .map(|sc| sc.demand.values().iter().filter(|d| d.is_infinite()).count())
            .sum();
        Self {
            branches: instance.n_branches(),
            sizes: instance.n_sizes(),
            lot_types: instance.n_lot_types(),
            multiplicities: instance.multiplicities.len(),
            max_lot_types: instance.max_lot_types,
            scenarios: instance.n_scenarios(),
            k_max: instance.k_max,
            k_observ: instance.k_observ,
            prices: instance.prices.len(),
            unbounded_demands,
        }
    }

    /// A production-size article: 1500 branches, 5 sizes, 2000 lot-types
    /// (at most 5 used), multiplicities 1..6, 13 periods, 4 prices, 3
    /// scenarios, unbounded salvage demand.
    pub fn full_scale() -> Self {
        Self {
            branches: 1500,
            sizes: 5,
            lot_types: 2000,
            multiplicities: 6,
            max_lot_types: 5,
            scenarios: 3,
            k_max: 13,
            k_observ: 2,
            prices: 4,
            unbounded_demands: 3 * 1500 * 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LpCounts {
    pub variables: BTreeMap<&'static str, usize>,
    pub constraints: BTreeMap<&'static str, usize>,
}

impl LpCounts {
    pub fn n_variables(&self) -> usize {
        self.variables.values().sum()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.values().sum()
    }
}

impl std::fmt::Display for LpCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "variables {}", self.n_variables())?;
        for (k, v) in &self.variables {
            writeln!(f, "  {k:<24}{v}")?;
        }
        writeln!(f, "constraints {}", self.n_constraints())?;
        for (k, v) in &self.constraints {
            writeln!(f, "  {k:<24}{v}")?;
        }
        Ok(())
    }
}

/// Size of every variable and constraint family.
pub fn lp_counts(d: &LpDims, tight: bool) -> LpCounts {
    let (nb, ns, nl, nm) = (d.branches, d.sizes, d.lot_types, d.multiplicities);
    let (ne, np) = (d.scenarios, d.prices);
    let nk = d.k_max + 1;
    let mut c = LpCounts::default();
    let v = &mut c.variables;
    v.insert("x", nb * nl * nm);
    v.insert("y", nl);
    v.insert("z", d.max_lot_types);
    v.insert("I", nb * ns);
    v.insert("Itot", 1);
    v.insert("u", ne * nk * np);
    v.insert("v", ne * d.k_max);
    v.insert("stock", ne * nk * nb * ns);
    v.insert("sales", ne * nk * nb * ns * np);
    v.insert("yield", ne * nk * nb * ns);
    let r = &mut c.constraints;
    r.insert("sop_assign", nb);
    r.insert("sop_lotused", nb * nl);
    r.insert("sop_lotcount", 1);
    r.insert("sop_usedlotsfirst", d.max_lot_types.saturating_sub(1));
    r.insert("sop_inventory", nb * ns);
    r.insert("sop_totalinventory", 1);
    r.insert("link_startinventory", ne * nb * ns);
    r.insert("pop_assign", ne * nk);
    r.insert("pop_startprice", ne * d.k_observ);
    r.insert("pop_salvage", ne);
    r.insert("pop_salvageonly", ne * d.k_max);
    let nomarkup = if tight {
        ne * d.k_max * (np - 1)
    } else {
        ne * d.k_max * np * (np - 1) / 2
    };
    r.insert("pop_nomarkup", nomarkup);
    r.insert("pop_markdownused", ne * d.k_max * np * (np - 1));
    r.insert("pop_stockdyn", ne * d.k_max * nb * ns);
    r.insert("pop_stocksales", ne * nk * nb * ns);
    r.insert("pop_demandsales", ne * nk * nb * ns * np - d.unbounded_demands);
    r.insert("pop_yield", ne * nk * nb * ns);
    c
}

fn num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

struct LpWriter<W: Write> {
    out: W,
    counts: BTreeMap<&'static str, usize>,
}

impl<W: Write> LpWriter<W> {
    /// Writes `name: terms op rhs`; zero coefficients are dropped.
    fn row(&mut self, family: &'static str, index: &str, terms: &[(f64, String)], op: &str, rhs: f64) -> std::io::Result<()> {
        write!(self.out, " {family}({index}):")?;
        self.terms(terms)?;
        writeln!(self.out, " {op} {}", num(rhs))?;
        *self.counts.entry(family).or_default() += 1;
        Ok(())
    }

    fn terms(&mut self, terms: &[(f64, String)]) -> std::io::Result<()> {
        let mut written = 0;
        for (coef, var) in terms {
            if *coef == 0.0 {
                continue;
            }
            if written > 0 && written % LINE_TERMS == 0 {
                write!(self.out, "\n   ")?;
            }
            let sign = if *coef < 0.0 { '-' } else { '+' };
            let a = coef.abs();
            if a == 1.0 {
                write!(self.out, " {sign} {var}")?;
            } else {
                write!(self.out, " {sign} {} {var}", num(a))?;
            }
            written += 1;
        }
        if written == 0 {
            // keep the row well-formed
            if let Some((_, var)) = terms.first() {
                write!(self.out, " 0 {var}")?;
            }
        }
        Ok(())
    }
}

fn x(b: usize, l: usize, m: usize) -> String {
    format!("x({b},{l},{m})")
}
fn u(e: usize, k: usize, p: usize) -> String {
    format!("u({e},{k},{p})")
}
fn stock(e: usize, k: usize, b: usize, s: usize) -> String {
    format!("stock({e},{k},{b},{s})")
}
fn sales(e: usize, k: usize, b: usize, s: usize, p: usize) -> String {
    format!("sales({e},{k},{b},{s},{p})")
}
fn yld(e: usize, k: usize, b: usize, s: usize) -> String {
    format!("yield({e},{k},{b},{s})")
}

/// Writes the model and returns the emitted family sizes.
pub fn write_lp<W: Write>(instance: &Instance, out: W, tight: bool) -> Result<LpCounts> {
    let inst = instance;
    let (nb, ns, nl, nm) = (inst.n_branches(), inst.n_sizes(), inst.n_lot_types(), inst.multiplicities.len());
    let (ne, np, nk, km) = (inst.n_scenarios(), inst.prices.len(), inst.n_periods(), inst.k_max);
    let kappa = inst.max_lot_types;
    let mut counts = lp_counts(&LpDims::of(inst), tight);
    let mut w = LpWriter {
        out,
        counts: counts.constraints.keys().map(|&k| (k, 0)).collect(),
    };

    writeln!(w.out, "\\ integrated size and price optimization, deterministic equivalent")?;
    writeln!(w.out, "Maximize")?;
    write!(w.out, " obj:")?;
    let mut obj = Vec::new();
    for b in 0..nb {
        for l in 0..nl {
            for m in 0..nm {
                obj.push((-inst.handling_cost(b, l, m), x(b, l, m)));
            }
        }
    }
    for i in 0..kappa {
        obj.push((-inst.opening_costs.get(i).copied().unwrap_or(0.0), format!("z({i})")));
    }
    for (e, sc) in inst.scenarios.iter().enumerate() {
        for k in 0..nk {
            let wgt = sc.probability * inst.discount(k);
            for b in 0..nb {
                for s in 0..ns {
                    obj.push((wgt, yld(e, k, b, s)));
                }
            }
            if k >= 1 {
                obj.push((-wgt * inst.markdown_costs[k], format!("v({e},{k})")));
            }
        }
    }
    w.terms(&obj)?;
    writeln!(w.out)?;
    drop(obj);

    writeln!(w.out, "Subject To")?;
    for b in 0..nb {
        let t: Vec<_> = (0..nl).flat_map(|l| (0..nm).map(move |m| (1.0, x(b, l, m)))).collect();
        w.row("sop_assign", &b.to_string(), &t, "=", 1.0)?;
    }
    for b in 0..nb {
        for l in 0..nl {
            let mut t: Vec<_> = (0..nm).map(|m| (1.0, x(b, l, m))).collect();
            t.push((-1.0, format!("y({l})")));
            w.row("sop_lotused", &format!("{b},{l}"), &t, "<=", 0.0)?;
        }
    }
    {
        let mut t: Vec<_> = (0..nl).map(|l| (1.0, format!("y({l})"))).collect();
        t.extend((0..kappa).map(|i| (-1.0, format!("z({i})"))));
        w.row("sop_lotcount", "0", &t, "<=", 0.0)?;
    }
    for i in 1..kappa {
        let t = [(1.0, format!("z({i})")), (-1.0, format!("z({})", i - 1))];
        w.row("sop_usedlotsfirst", &i.to_string(), &t, "<=", 0.0)?;
    }
    for b in 0..nb {
        for s in 0..ns {
            let mut t = vec![(1.0, format!("I({b},{s})"))];
            for (l, lot) in inst.lot_types.iter().enumerate() {
                for (mi, &m) in inst.multiplicities.iter().enumerate() {
                    let c = f64::from(m) * f64::from(lot.count(s));
                    if c != 0.0 {
                        t.push((-c, x(b, l, mi)));
                    }
                }
            }
            w.row("sop_inventory", &format!("{b},{s}"), &t, "=", 0.0)?;
        }
    }
    {
        let mut t = vec![(1.0, "Itot".to_string())];
        for b in 0..nb {
            for s in 0..ns {
                t.push((-1.0, format!("I({b},{s})")));
            }
        }
        w.row("sop_totalinventory", "0", &t, "=", 0.0)?;
    }
    for e in 0..ne {
        for b in 0..nb {
            for s in 0..ns {
                let t = [(1.0, format!("I({b},{s})")), (-1.0, stock(e, 0, b, s))];
                w.row("link_startinventory", &format!("{e},{b},{s}"), &t, "=", 0.0)?;
            }
        }
    }
    for e in 0..ne {
        for k in 0..nk {
            let t: Vec<_> = (0..np).map(|p| (1.0, u(e, k, p))).collect();
            w.row("pop_assign", &format!("{e},{k}"), &t, "=", 1.0)?;
        }
        for k in 0..inst.k_observ {
            w.row("pop_startprice", &format!("{e},{k}"), &[(1.0, u(e, k, 0))], "=", 1.0)?;
        }
        w.row("pop_salvage", &e.to_string(), &[(1.0, u(e, km, np - 1))], "=", 1.0)?;
        // the salvage price is reserved for the last period
        for k in 0..km {
            w.row("pop_salvageonly", &format!("{e},{k}"), &[(1.0, u(e, k, np - 1))], "=", 0.0)?;
        }
        for k in 1..nk {
            if tight {
                // price index may only grow: P(k-1) >= p implies P(k) >= p
                for p in 1..np {
                    let mut t: Vec<_> = (p..np).map(|q| (1.0, u(e, k - 1, q))).collect();
                    t.extend((p..np).map(|q| (-1.0, u(e, k, q))));
                    w.row("pop_nomarkup", &format!("{e},{k},{p}"), &t, "<=", 0.0)?;
                }
            } else {
                for p1 in 0..np {
                    for p2 in 0..p1 {
                        let t = [(1.0, u(e, k - 1, p1)), (1.0, u(e, k, p2))];
                        w.row("pop_nomarkup", &format!("{e},{k},{p1},{p2}"), &t, "<=", 1.0)?;
                    }
                }
            }
        }
        for k in 1..nk {
            for p1 in 0..np {
                for p2 in (0..np).filter(|&p2| p2 != p1) {
                    let t = [
                        (1.0, format!("v({e},{k})")),
                        (-1.0, u(e, k - 1, p1)),
                        (-1.0, u(e, k, p2)),
                    ];
                    w.row("pop_markdownused", &format!("{e},{k},{p1},{p2}"), &t, ">=", -1.0)?;
                }
            }
        }
    }
    for e in 0..ne {
        for k in 1..nk {
            for b in 0..nb {
                for s in 0..ns {
                    let mut t = vec![(1.0, stock(e, k - 1, b, s)), (-1.0, stock(e, k, b, s))];
                    t.extend((0..np).map(|p| (-1.0, sales(e, k - 1, b, s, p))));
                    w.row("pop_stockdyn", &format!("{e},{k},{b},{s}"), &t, "=", 0.0)?;
                }
            }
        }
    }
    for e in 0..ne {
        for k in 0..nk {
            for b in 0..nb {
                for s in 0..ns {
                    let mut t: Vec<_> = (0..np).map(|p| (1.0, sales(e, k, b, s, p))).collect();
                    t.push((-1.0, stock(e, k, b, s)));
                    w.row("pop_stocksales", &format!("{e},{k},{b},{s}"), &t, "<=", 0.0)?;
                }
            }
        }
    }
    for (e, sc) in inst.scenarios.iter().enumerate() {
        for k in 0..nk {
            for b in 0..nb {
                for s in 0..ns {
                    for p in 0..np {
                        let d = sc.demand.get(k, p, b, s);
                        if d.is_infinite() {
                            continue;
                        }
                        let t = [(1.0, sales(e, k, b, s, p)), (-d, u(e, k, p))];
                        w.row("pop_demandsales", &format!("{e},{k},{b},{s},{p}"), &t, "<=", 0.0)?;
                    }
                }
            }
        }
    }
    for e in 0..ne {
        for k in 0..nk {
            for b in 0..nb {
                for s in 0..ns {
                    let mut t = vec![(1.0, yld(e, k, b, s))];
                    t.extend((0..np).map(|p| (-inst.prices[p], sales(e, k, b, s, p))));
                    w.row("pop_yield", &format!("{e},{k},{b},{s}"), &t, "=", 0.0)?;
                }
            }
        }
    }

    writeln!(w.out, "Bounds")?;
    writeln!(w.out, " {} <= Itot <= {}", inst.supply_lower, inst.supply_upper)?;
    writeln!(w.out, "Binaries")?;
    let mut names = Vec::new();
    for b in 0..nb {
        for l in 0..nl {
            for m in 0..nm {
                names.push(x(b, l, m));
            }
        }
    }
    names.extend((0..nl).map(|l| format!("y({l})")));
    names.extend((0..kappa).map(|i| format!("z({i})")));
    for e in 0..ne {
        for k in 0..nk {
            for p in 0..np {
                names.push(u(e, k, p));
            }
        }
        for k in 1..nk {
            names.push(format!("v({e},{k})"));
        }
    }
    for chunk in names.chunks(LINE_TERMS) {
        writeln!(w.out, " {}", chunk.join(" "))?;
    }
    writeln!(w.out, "Generals")?;
    let mut names: Vec<String> = Vec::new();
    for b in 0..nb {
        for s in 0..ns {
            names.push(format!("I({b},{s})"));
        }
    }
    names.push("Itot".into());
    for chunk in names.chunks(LINE_TERMS) {
        writeln!(w.out, " {}", chunk.join(" "))?;
    }
    writeln!(w.out, "End")?;
    w.out.flush()?;

    counts.constraints = w.counts;
    Ok(counts)
}

/// Writes the model to `path`.
pub fn export_lp(instance: &Instance, path: &Path, tight: bool) -> Result<LpCounts> {
    let file = BufWriter::new(File::create(path)?);
    write_lp(instance, file, tight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tiny_instance;

    #[test]
    fn emitted_rows_match_closed_form() {
        for seed in 0..10 {
            let inst = tiny_instance(seed);
            for tight in [false, true] {
                let got = write_lp(&inst, std::io::sink(), tight).unwrap();
                let want = lp_counts(&LpDims::of(&inst), tight);
                assert_eq!(got, want, "seed {seed} tight {tight}");
            }
        }
    }

    #[test]
    fn full_scale_exceeds_three_and_a_half_million() {
        let c = lp_counts(&LpDims::full_scale(), false);
        assert!(c.n_variables() > 3_500_000);
        assert!(c.n_constraints() > 3_500_000);
        assert!(c.n_variables() + c.n_constraints() < 100_000_000);
    }

    #[test]
    fn tight_form_is_smaller() {
        let d = LpDims::of(&tiny_instance(0));
        let loose = lp_counts(&d, false).constraints["pop_nomarkup"];
        let tight = lp_counts(&d, true).constraints["pop_nomarkup"];
        assert!(tight <= loose);
    }
}
