use g2inst::metric_profiles::{
    asymptotic_series, classify_beta, cone_profile, cone_scaled, hitchin_constraint, integrate_ac_profile, near_orbit_series, tuned_ac_profile,
    BetaClass, MetricParams, MetricProfile, TuneOptions,
};

fn p11(beta: f64) -> MetricParams {
    MetricParams::new(1, 1, 1.0, beta)
}

#[test]
fn cone_is_exact_solution() {
    let c = cone_profile(p11(1.0));
    for t in [0.5, 3.0, 40.0] {
        let s = c.sample(t);
        let (sa, sb) = cone_scaled(&s);
        assert!((sa - 1.0).abs() < 1e-15 && (sb - 1.0).abs() < 1e-15);
    }
}

#[test]
fn series_and_integrator_agree() {
    let p = p11(1.3);
    let series = near_orbit_series(p, 16).unwrap();
    let num = integrate_ac_profile(p, 1e-3, 0.2, 1e-12).unwrap();
    for t in [0.02, 0.05, 0.1] {
        let (a, b) = (series.sample(t), num.sample(t));
        assert!((a.a - b.a).abs() < 1e-10 && (a.b - b.b).abs() < 1e-10 && (a.db - b.db).abs() < 1e-9, "t = {t}");
    }
}

#[test]
fn constraint_propagates() {
    let num = integrate_ac_profile(p11(1.3), 1e-3, 5.0, 1e-12).unwrap();
    for t in [0.01, 0.1, 1.0, 5.0] {
        let s = num.sample(t);
        assert!(hitchin_constraint(&s, num.params()).abs() < 1e-9 * (1.0 + s.a * s.a));
    }
}

#[test]
fn beta_dichotomy() {
    let o = TuneOptions::default();
    assert!(matches!(classify_beta(p11(1.2), &o).unwrap(), BetaClass::Low { .. }));
    assert!(matches!(classify_beta(p11(1.5), &o).unwrap(), BetaClass::High { .. }));
}

#[test]
fn tuning_is_deterministic() {
    let a = tuned_ac_profile(p11(1.0), 1e-15).unwrap();
    let b = tuned_ac_profile(p11(1.0), 1e-15).unwrap();
    assert_eq!(a.tuning.beta.to_bits(), b.tuning.beta.to_bits());
    assert_eq!(a.sample(123.0), b.sample(123.0));
    assert!((a.tuning.beta - 1.33466821923265).abs() < 1e-12);
}

#[test]
fn asymptotic_end_approaches_cone() {
    let z = asymptotic_series(p11(1.0), 0.0, 12);
    let far = cone_scaled(&z.sample(1e5));
    assert!((far.0 - 1.0).abs() < 1e-9 && (far.1 - 1.0).abs() < 1e-9);
}
