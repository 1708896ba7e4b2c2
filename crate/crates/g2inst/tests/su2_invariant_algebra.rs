use g2inst::su2_invariant_algebra::{bracket, constraint_residual, curvature, embed_reduced, ConnectionState, InvariantConnection, Su2Element};
use g2inst::metric_profiles::{cone_profile, MetricParams, MetricProfile};

#[test]
fn structure_constants() {
    let e = [Su2Element::E1, Su2Element::E2, Su2Element::E3];
    for i in 0..3 {
        assert_eq!(bracket(e[i], e[(i + 1) % 3]), e[(i + 2) % 3]);
        assert_eq!(bracket(e[i], e[i]), Su2Element::ZERO);
    }
    assert_eq!(bracket(Su2Element::E2, Su2Element::E1), -Su2Element::E3);
}

#[test]
fn embedding_layout() {
    let c = embed_reduced(ConnectionState::new(1.0, 0.0, 1.0, 0.5));
    assert_eq!(c.alpha, [Su2Element::E1, Su2Element::E2, Su2Element::E3]);
    assert_eq!(c.alpha_p, [Su2Element::ZERO; 3]);
    assert_eq!(curvature(&InvariantConnection::zero()).max_norm(), 0.0);
}

#[test]
fn reduced_states_satisfy_constraint() {
    let s = cone_profile(MetricParams::new(1, 1, 1.0, 1.0)).sample(2.0);
    let c = embed_reduced(ConnectionState::new(0.3, -0.7, 1.1, 0.2));
    assert_eq!(constraint_residual(&c, &s), 0.0);
}
