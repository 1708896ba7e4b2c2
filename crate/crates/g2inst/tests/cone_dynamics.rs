use g2inst::cone_dynamics::{
    classify_samples, far_field, heteroclinic_oracle, run_shot, shoot_h0, stage2_linearization, stable_manifold_iteration, Classification,
    FixedPoint, LpOptions, Perturbation, ShootOptions,
};
use g2inst::metric_profiles::{tuned_ac_profile, AcProfile, MetricParams};
use g2inst::Exec;

fn ac() -> AcProfile {
    tuned_ac_profile(MetricParams::new(1, 1, 1.0, 1.0), 1e-15).unwrap()
}

#[test]
fn oracle_samples_classify_as_converged() {
    let samples: Vec<_> = (0..=100).map(|i| (i as f64 * 0.12, heteroclinic_oracle(i as f64 * 0.12, 1.0).z)).collect();
    let (c, d, _, _) = classify_samples(&samples, false, 8.0, 1e-3);
    assert_eq!(c, Classification::ConvergedPlus);
    assert!(d < 1e-6);
    let minus: Vec<_> = samples.iter().map(|(t, _)| (*t, heteroclinic_oracle(*t, -1.0).z)).collect();
    assert_eq!(classify_samples(&minus, false, 8.0, 1e-3).0, Classification::ConvergedMinus);
}

#[test]
fn abelian_members() {
    let ac = ac();
    let opts = ShootOptions::default();
    let (r, _) = run_shot(0.0, 0.0, &ac, &opts).unwrap();
    assert_eq!(r.classification, Classification::Undecided);
    assert!(r.distance_z0 < 1e-3);
    let (up, _) = run_shot(0.0, 0.1, &ac, &opts).unwrap();
    assert_eq!(up.classification, Classification::DivergedUp);
    let (down, _) = run_shot(0.0, -0.1, &ac, &opts).unwrap();
    assert_eq!(down.classification, Classification::DivergedDown);
    let shot = shoot_h0(0.0, (-0.5, 0.5), &ac, 0.0, Exec::Sequential).unwrap();
    assert_eq!(shot.result.h0, 0.0);
}

#[test]
fn converged_member_tracks_heteroclinic() {
    let ac = ac();
    let shot = shoot_h0(0.1, (-0.5, 0.5), &ac, 0.0, Exec::Sequential).unwrap();
    assert_eq!(shot.result.classification, Classification::ConvergedPlus);
    let ff = far_field(&shot.trajectory, &ac, 8.0);
    assert!(ff.heteroclinic_distance < 1e-2, "{ff:?}");
    assert!(ff.g_monotone && (ff.h_at_t - 1.0 / 3.0).abs() < 1e-3);
}

#[test]
fn policies_agree() {
    let ac = ac();
    let a = shoot_h0(0.07, (-0.5, 0.5), &ac, 0.0, Exec::Sequential).unwrap();
    let b = shoot_h0(0.07, (-0.5, 0.5), &ac, 0.0, Exec::Parallel).unwrap();
    assert_eq!(a.result.h0.to_bits(), b.result.h0.to_bits());
    assert_eq!(a.scan, b.scan);
}

#[test]
fn stage2_blocks_decouple() {
    let ac = ac();
    for t in [0.01, 1.0, 100.0] {
        let a = stage2_linearization(&ac, t, 1).unwrap();
        for (r, c) in [(0, 2), (0, 3), (1, 2), (1, 3), (2, 0), (3, 1), (2, 3), (3, 2)] {
            assert_eq!(a[(r, c)], 0.0);
        }
    }
}

#[test]
fn manifold_iteration_with_decaying_forcing() {
    let s = stable_manifold_iteration(FixedPoint::ZPlus, [1e-4, 0.0, 1e-4], 8.0, Perturbation::Leading { r0: 1.0 }, &LpOptions::default()).unwrap();
    assert!(s.contraction < 0.1);
    assert!(s.diffs.last().unwrap() < &1e-13);
}
