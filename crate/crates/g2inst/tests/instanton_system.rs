use g2inst::instanton_system::{
    factor_swap, general_rhs, integrate_connection, local_family, reduced_rhs, sign_gauge, BundleIndex, LocalData,
};
use g2inst::metric_profiles::{near_orbit_series, tuned_ac_profile, MetricParams, MetricProfile};
use g2inst::singular_ivp::series_residual;
use g2inst::su2_invariant_algebra::{embed_reduced, ConnectionState};
use proptest::prelude::*;

fn p11() -> MetricParams {
    MetricParams::new(1, 1, 1.0, 1.3)
}

fn state() -> impl Strategy<Value = ConnectionState> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c, d)| ConnectionState::new(a, b, c, d))
}

proptest! {
    #[test]
    fn reduction_commutes(z in state(), t in 0.05..0.4f64) {
        let s = near_orbit_series(p11(), 12).unwrap().sample(t);
        let red = embed_reduced(reduced_rhs(&z, &s, &p11()).unwrap());
        let gen = general_rhs(&embed_reduced(z), &s, &p11()).unwrap();
        let scale = 1.0 + red.to_vec().iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(red.max_abs_diff(&gen) < 1e-12 * scale);
    }

    #[test]
    fn symmetries_commute_with_rhs(z in state(), t in 0.05..0.4f64) {
        let s = near_orbit_series(p11(), 12).unwrap().sample(t);
        let r = reduced_rhs(&z, &s, &p11()).unwrap();
        let g = reduced_rhs(&sign_gauge(&z), &s, &p11()).unwrap();
        prop_assert_eq!(g, sign_gauge(&r));
        let w = reduced_rhs(&factor_swap(&z), &s, &p11()).unwrap();
        let fw = factor_swap(&r);
        let d = w.to_array().iter().zip(fw.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d < 1e-12 * (1.0 + r.to_array().iter().map(|v| v.abs()).fold(0.0, f64::max)));
    }
}

#[test]
fn local_series_solves_system() {
    for nu in 1..=3 {
        let loc = local_family(BundleIndex::from_nu(nu).unwrap(), LocalData { f0: 0.3, h0: -0.1 }, p11()).unwrap();
        let s = loc.series(12).unwrap();
        assert!(series_residual(&loc, &s, 1e-2) < 1e-12, "nu = {nu}");
        let z = loc.unscale(0.0, &s.eval(0.0));
        if nu == 1 {
            assert_eq!((z.f, z.h), (0.3, -0.1));
        }
        assert_eq!(z.g, (2 * nu - 1) as f64);
    }
}

#[test]
fn plane_f_zero_stays_invariant() {
    let ac = tuned_ac_profile(MetricParams::new(1, 1, 1.0, 1.0), 1e-15).unwrap();
    let tr = integrate_connection(BundleIndex::from_nu(1).unwrap(), LocalData { f0: 0.0, h0: 0.2 }, &ac, 1e-3, 50.0, 1e-11).unwrap();
    for p in tr.sample_log(&ac, 1e-3, 10) {
        assert!(p.z.f.abs() + p.z.fp.abs() < 1e-12);
    }
    let mirrored = integrate_connection(BundleIndex::from_nu(1).unwrap(), LocalData { f0: -0.1, h0: 0.2 }, &ac, 1e-3, 50.0, 1e-11).unwrap();
    let plain = integrate_connection(BundleIndex::from_nu(1).unwrap(), LocalData { f0: 0.1, h0: 0.2 }, &ac, 1e-3, 50.0, 1e-11).unwrap();
    let t = plain.t_end().min(mirrored.t_end()).min(5.0);
    assert_eq!(sign_gauge(&plain.state(t).unwrap()), mirrored.state(t).unwrap());
    assert!(ac.params().m == 1);
}
