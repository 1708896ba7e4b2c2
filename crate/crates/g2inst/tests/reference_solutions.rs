use g2inst::cone_dynamics::{autonomous_f, FixedPoint};
use g2inst::instanton_system::sign_gauge;
use g2inst::metric_profiles::{tuned_ac_profile, MetricParams, MetricProfile};
use g2inst::reference_solutions::{abelian_solution, flat_connections, limit_state};
use g2inst::su2_invariant_algebra::{curvature_norm, embed_reduced, InvariantConnection};
use rand::{Rng, SeedableRng};

#[test]
fn abelian_on_tuned_profile() {
    let ac = tuned_ac_profile(MetricParams::new(1, 1, 1.0, 1.0), 1e-15).unwrap();
    let ab = abelian_solution(1, 0.2, &ac).unwrap();
    assert!((ab.g(0.0) - 1.0).abs() < 1e-14);
    assert!(ab.g(1e4) < 1e-20);
    // ḣ/h matches the quadrature integrand
    for t in [0.05, 0.7, 3.0, 20.0, 60.0] {
        let e = 1e-5 * t;
        let num = (ab.h(t + e).unwrap() - ab.h(t - e).unwrap()) / (2.0 * e);
        let ana = ab.derivative(t).unwrap().h;
        assert!((num - ana).abs() < 1e-6 * (1.0 + ana.abs()), "t = {t}: {num} vs {ana}");
    }
    let zero = abelian_solution(1, 0.0, &ac).unwrap();
    assert_eq!(zero.h(10.0).unwrap(), 0.0);
}

#[test]
fn flat_states_have_zero_curvature_norm() {
    let ac = tuned_ac_profile(MetricParams::new(1, 1, 1.0, 1.0), 1e-15).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let flats = flat_connections(1);
    for _ in 0..20 {
        let t = 10f64.powf(rng.random_range(-2.0..3.0));
        let s = ac.sample(t);
        for z in &flats[..2] {
            let n = curvature_norm(&embed_reduced(*z), &InvariantConnection::zero(), &s, ac.params()).unwrap();
            assert!(n < 1e-12, "t = {t}: {n}");
        }
    }
}

#[test]
fn limit_state_is_z_plus() {
    let z = limit_state();
    assert_eq!(z.to_array(), FixedPoint::ZPlus.location());
    assert_eq!(sign_gauge(&z).to_array(), FixedPoint::ZMinus.location());
    assert!(autonomous_f(&z.to_array()).iter().all(|v| v.abs() < 1e-15));
}
