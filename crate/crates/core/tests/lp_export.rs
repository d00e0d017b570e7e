mod common;

use common::{family, lp_point, parse_lp};
use ispo_core::bnb::brute_force_ispo;
use ispo_core::lp::{lp_counts, write_lp, LpDims};
use ispo_core::model::tiny_instance;
use ispo_core::Instance;

fn tiny1() -> Instance {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/tiny-1.json");
    Instance::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn export(inst: &Instance, tight: bool) -> String {
    let mut buf = Vec::new();
    write_lp(inst, &mut buf, tight).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn tiny1_counts_match_closed_form_after_parse() {
    let inst = tiny1();
    for tight in [false, true] {
        let model = parse_lp(&export(&inst, tight)).unwrap();
        let want = lp_counts(&LpDims::of(&inst), tight);
        let vars = model.variable_families();
        for (fam, n) in &want.variables {
            assert_eq!(vars.get(*fam).copied().unwrap_or(0), *n, "variables {fam}");
        }
        assert_eq!(model.variables().len(), want.n_variables());
        let rows = model.row_families();
        for (fam, n) in &want.constraints {
            assert_eq!(rows.get(*fam).copied().unwrap_or(0), *n, "rows {fam}");
        }
        assert_eq!(model.rows.len(), want.n_constraints());
        assert!(model.maximize);
    }
}

#[test]
fn integer_declarations() {
    let model = parse_lp(&export(&tiny1(), false)).unwrap();
    assert!(model.binaries.iter().all(|v| matches!(family(v), "x" | "y" | "z" | "u" | "v")));
    assert!(model.generals.iter().all(|v| matches!(family(v), "I" | "Itot")));
    let inst = tiny1();
    assert_eq!(model.bounds["Itot"], (inst.supply_lower as f64, inst.supply_upper as f64));
}

#[test]
fn brute_force_optimum_is_a_feasible_point_with_equal_objective() {
    for seed in 0..25 {
        let inst = tiny_instance(seed);
        let Ok(best) = brute_force_ispo(&inst) else { continue };
        for tight in [false, true] {
            let model = parse_lp(&export(&inst, tight)).unwrap();
            let x = lp_point(&inst, &best.assignment, &best.map);
            let bad = model.violations(&x, 1e-7);
            assert!(bad.is_empty(), "seed {seed}: {bad:?}");
            let obj = model.objective_value(&x);
            assert!((obj - best.objective).abs() < 1e-7, "seed {seed}: {obj} vs {}", best.objective);
        }
    }
}

#[test]
fn price_rise_violates_no_markup() {
    let inst = tiny1();
    let best = brute_force_ispo(&inst).unwrap();
    let model = parse_lp(&export(&inst, false)).unwrap();
    let mut x = lp_point(&inst, &best.assignment, &best.map);
    // price index 1 in period 2 and back to 0 in period 3
    let km = inst.k_max;
    for k in 0..km {
        for p in 0..inst.prices.len() {
            x.remove(&format!("u(0,{k},{p})"));
        }
        let p = usize::from(k == 2);
        x.insert(format!("u(0,{k},{p})"), 1.0);
    }
    let bad = model.violations(&x, 1e-7);
    assert!(bad.iter().any(|r| r.starts_with("pop_nomarkup(0,3,")), "{bad:?}");
}

#[test]
fn parser_rejects_malformed_text() {
    assert!(parse_lp("Maximize\n obj: + x\nSubject To\n c(0): + x <=\nEnd\n").is_err());
    assert!(parse_lp("Maximize\n obj: + x\nSubject To\n c(0): + x[1] <= 1\nEnd\n").is_err());
    assert!(parse_lp("Maximize\n obj: + x\nSubject To\n c(0): + x <= 1\n").is_err());
    assert!(parse_lp("Maximize\n obj: + x\nSubject To\n c(0): + x <= 1\n c(0): + x <= 2\nEnd\n").is_err());
}

#[test]
fn full_scale_size() {
    let c = lp_counts(&LpDims::full_scale(), false);
    assert!(c.n_variables() + c.n_constraints() > 3_500_000);
    assert!(c.n_variables() > 3_500_000);
}
