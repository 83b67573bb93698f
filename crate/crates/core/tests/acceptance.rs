//! End-to-end acceptance checks, one per release criterion. Each test
//! prints a single `criterion NN [PASS|FAIL]` line (visible with
//! `--nocapture`) and asserts it. The five- and ten-item trainings are
//! `#[ignore]`d as slow; include them with `-- --include-ignored`.

use std::sync::OnceLock;

use gcf_core::approx::assignment_optimum;
use gcf_core::auction::{train_auction, MechanismArtifact, TrainConfig, TrainOutcome};
use gcf_core::ot::{bundled_instances, DualProblem, DualSolveConfig};
use gcf_core::validate;

const SEED: u64 = 14;

fn check(num: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {num:02} [{status}] {name}: {detail}");
    assert!(pass, "criterion {num:02} ({name}) failed: {detail}");
}

fn train(items: usize) -> TrainOutcome {
    let mut cfg = TrainConfig::for_items(items).expect("valid item count");
    cfg.seed = SEED;
    train_auction(&cfg).expect("training completes")
}

/// The one- and two-item runs are shared across criteria 1, 2, and 4.
fn trained(items: usize) -> &'static TrainOutcome {
    static ONE: OnceLock<TrainOutcome> = OnceLock::new();
    static TWO: OnceLock<TrainOutcome> = OnceLock::new();
    match items {
        1 => ONE.get_or_init(|| train(1)),
        2 => TWO.get_or_init(|| train(2)),
        _ => unreachable!("only the shared runs live here"),
    }
}

fn suite_summary(reports: &[validate::ValidationReport]) -> String {
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.check_name.as_str())
        .collect();
    if failed.is_empty() {
        format!("all {} checks passed", reports.len())
    } else {
        format!("failed: {}", failed.join(", "))
    }
}

#[test]
fn c01_single_item_profit_and_posted_price() {
    let out = trained(1);
    let profit = out.report.mean_profit_per_item;
    let profit_ok = (profit - 0.250).abs() <= 0.005;

    // every purchasing type on a dense sweep pays nearly the same price,
    // and that price is close to 1/2
    let menu = &out.menu;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=1000 {
        let y = [i as f64 / 1000.0];
        if menu.choice(&y) != 0 {
            let t = menu.payment(&y);
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    let price_ok = lo.is_finite() && (lo - 0.5).abs() <= 0.02 && (hi - 0.5).abs() <= 0.02;

    check(
        1,
        "single_item_auction",
        profit_ok && price_ok,
        &format!(
            "profit/item {profit:.4} (target 0.250 +/- 0.005), \
             payments span [{lo:.4}, {hi:.4}] (target 0.5 +/- 0.02)"
        ),
    );
}

#[test]
fn c02_two_item_profit() {
    let profit = trained(2).report.mean_profit_per_item;
    check(
        2,
        "two_item_auction",
        (profit - 0.274).abs() <= 0.006,
        &format!("profit/item {profit:.4} (target 0.274 +/- 0.006)"),
    );
}

#[test]
#[ignore = "slow: five-item training run"]
fn c03_five_item_profit() {
    let profit = train(5).report.mean_profit_per_item;
    check(
        3,
        "five_item_auction",
        (profit - 0.314).abs() <= 0.010,
        &format!("profit/item {profit:.4} (target 0.314 +/- 0.010)"),
    );
}

#[test]
#[ignore = "slow: ten-item training run"]
fn c03_ten_item_profit() {
    let profit = train(10).report.mean_profit_per_item;
    check(
        3,
        "ten_item_auction",
        (profit - 0.346).abs() <= 0.010,
        &format!("profit/item {profit:.4} (target 0.346 +/- 0.010)"),
    );
}

#[test]
fn c04_surplus_and_utility_columns() {
    let one = &trained(1).report;
    let two = &trained(2).report;
    let ok = (one.mean_surplus_per_item - 0.375).abs() <= 0.01
        && (one.mean_utility_per_item - 0.125).abs() <= 0.01
        && (two.mean_surplus_per_item - 0.407).abs() <= 0.01
        && (two.mean_utility_per_item - 0.133).abs() <= 0.01;
    check(
        4,
        "surplus_and_utility",
        ok,
        &format!(
            "one item surplus/utility {:.4}/{:.4} (targets 0.375/0.125 +/- 0.01), \
             two items {:.4}/{:.4} (targets 0.407/0.133 +/- 0.01)",
            one.mean_surplus_per_item,
            one.mean_utility_per_item,
            two.mean_surplus_per_item,
            two.mean_utility_per_item,
        ),
    );
}

#[test]
fn c05_strong_duality_on_bundled_instances() {
    let cfg = DualSolveConfig::default();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (_, instance) in bundled_instances() {
        let exact = assignment_optimum(&instance).expect("instances are small and uniform");
        let sol = DualProblem::new(instance)
            .expect("bundled instances are valid")
            .solve(&cfg)
            .expect("solver runs");
        worst = worst.max((sol.value - exact).abs());
        count += 1;
    }
    check(
        5,
        "strong_duality",
        count == 10 && worst <= 1e-6,
        &format!("{count} instances, worst |dual - exhaustive| = {worst:.2e} (bound 1e-6)"),
    );
}

#[test]
fn c06_transform_lemma_suite() {
    let reports = validate::lemma_suite(SEED).expect("suite runs");
    check(
        6,
        "transform_lemmas",
        validate::all_pass(&reports),
        &format!("{} on 1000 instances each", suite_summary(&reports)),
    );
}

#[test]
fn c07_leanness_suite() {
    let reports = validate::lean_suite(SEED).expect("suite runs");
    check(
        7,
        "leanness",
        validate::all_pass(&reports),
        &suite_summary(&reports),
    );
}

#[test]
fn c08_approximation_suite() {
    let reports = validate::uap_suite(SEED).expect("suite runs");
    check(
        8,
        "net_approximation",
        validate::all_pass(&reports),
        &suite_summary(&reports),
    );
}

#[test]
fn c09_gradient_suite() {
    let reports = validate::gradient_suite(SEED).expect("suite runs");
    check(
        9,
        "gradient_oracles",
        validate::all_pass(&reports),
        &suite_summary(&reports),
    );
}

#[test]
fn c10_determinism() {
    // two complete trainings from the same config, serialized end to end
    let a = train(1);
    let b = train(1);
    let art_a = MechanismArtifact::new(&a.menu, Some(a.report.clone()))
        .to_json()
        .expect("serializes");
    let art_b = MechanismArtifact::new(&b.menu, Some(b.report.clone()))
        .to_json()
        .expect("serializes");

    // and the validation reports twice over
    let rep_a = serde_json::to_string(&validate::run_suite("lean", SEED).expect("suite runs"))
        .expect("serializes");
    let rep_b = serde_json::to_string(&validate::run_suite("lean", SEED).expect("suite runs"))
        .expect("serializes");

    check(
        10,
        "determinism",
        art_a == art_b && rep_a == rep_b,
        &format!(
            "mechanism artifacts identical: {}; validation reports identical: {}",
            art_a == art_b,
            rep_a == rep_b
        ),
    );
}
