use spikelda::online::{DirectionField, Integrator, LearningMode};
use spikelda::verify::{run, run_check, Check, VerifyConfig};

#[test]
fn default_suite_passes() {
    let reports = run(&VerifyConfig::default()).unwrap();
    for r in &reports {
        println!(
            "{:?} {:?} passed={} measured={:.3e} tol={:.1e} {}",
            r.mode, r.check, r.passed, r.measured, r.tolerance, r.detail
        );
    }
    assert!(reports.iter().all(|r| r.passed));
}

fn drop_exp_factor(g: &mut DirectionField<f64>) {
    g.alpha.iter_mut().for_each(|x| *x *= 1.5);
}

#[test]
fn corrupted_rule_fails_natural_gradient() {
    let cfg = VerifyConfig {
        hook: Some(drop_exp_factor),
        ..VerifyConfig::default()
    };
    let r = run_check(Check::NaturalGradient, LearningMode::Map, &cfg).unwrap();
    assert!(!r.passed, "{r:?}");
}

#[test]
fn euler_leaves_manifold_at_default_step() {
    let cfg = VerifyConfig {
        integrator: Integrator::Euler,
        ..VerifyConfig::default()
    };
    let r = run_check(Check::ObjectiveMonotone, LearningMode::Semi, &cfg).unwrap();
    assert!(r.measured <= r.tolerance);
    assert!(!r.passed, "{r:?}");
}
