use ispo_core::field::{read_differences, wilcoxon_signed_rank};
use ispo_core::model::tiny_instance;
use ispo_core::Instance;

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn tiny1_is_seed_zero_of_the_tiny_family() {
    let text = std::fs::read_to_string(fixture("tiny-1.json")).unwrap();
    let inst = Instance::from_json(&text).unwrap();
    assert_eq!(inst, tiny_instance(0));
    assert_eq!(Instance::from_json(&inst.to_json()).unwrap(), inst);
}

#[test]
fn tiny1_is_within_the_tiny_limits() {
    let inst = tiny_instance(0);
    assert!(inst.n_branches() <= 4);
    assert!(inst.n_sizes() <= 2);
    assert!(inst.n_lot_types() <= 5);
    assert!(inst.max_lot_types <= 2);
    assert!(inst.k_max <= 5);
    assert!(inst.p_max() <= 2);
    assert_eq!(inst.n_scenarios(), 2);
}

#[test]
fn rank_test_on_shipped_tables() {
    let t3 = read_differences(std::fs::File::open(fixture("table3.csv")).unwrap()).unwrap();
    let r = wilcoxon_signed_rank(&t3).unwrap();
    assert_eq!((r.n, r.w_plus), (30, 318));
    assert!((0.0397..=0.0407).contains(&r.p_value));
    let t4 = read_differences(std::fs::File::open(fixture("table4.csv")).unwrap()).unwrap();
    let r = wilcoxon_signed_rank(&t4).unwrap();
    assert_eq!((r.n, r.w_plus), (30, 271));
    assert!((0.215..=0.225).contains(&r.p_value));
}
