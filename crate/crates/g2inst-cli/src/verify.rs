//! The `verify` suites: module invariants and oracle comparisons, one row per check.

use std::path::Path;

use g2inst::cone_dynamics::{autonomous_f, heteroclinic_oracle, shoot_h0_with};
use g2inst::instanton_system::{
    expected_exponents, general_rhs, local_family, parity_check, reduced_rhs, reduced_rhs_with, reduction_consistency, to_a_basis,
    BundleIndex, LocalData,
};
use g2inst::metric_profiles::{coefficients, hitchin_constraint, near_orbit_series, nu_infinity, MetricProfile, Which};
use g2inst::reference_solutions::{abelian_solution, flat_connections};
use g2inst::singular_ivp::{check_conditions, ConditionOptions, JacobianMethod};
use g2inst::su2_invariant_algebra::{bracket, curvature_norm, embed_reduced, ConnectionState, InvariantConnection, Su2Element};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::commands::{build_profile, exec_policy, fixed_point_report, log_grid, shoot_options, FixedPointReport, Outcome};
use crate::config::RunConfig;
use crate::output::{Cell, Table};
use crate::{CliError, Profile};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub check: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn below(suite: &'static str, check: &'static str, value: f64, tolerance: f64) -> Check {
    Check { suite, check, value, tolerance, pass: value < tolerance }
}

fn flag(suite: &'static str, check: &'static str, ok: bool) -> Check {
    Check { suite, check, value: if ok { 0.0 } else { 1.0 }, tolerance: 0.5, pass: ok }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn su2(rng: &mut ChaCha8Rng, n: usize) -> Vec<Check> {
    let mut el = || Su2Element::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let (mut jac, mut anti): (f64, f64) = (0.0, 0.0);
    for _ in 0..n * 8 {
        let (x, y, z) = (el(), el(), el());
        jac = jac.max((bracket(x, bracket(y, z)) + bracket(y, bracket(z, x)) + bracket(z, bracket(x, y))).norm());
        anti = anti.max((bracket(x, y) + bracket(y, x)).norm());
    }
    let e = [Su2Element::E1, Su2Element::E2, Su2Element::E3];
    let cyclic = (0..3).all(|i| bracket(e[i], e[(i + 1) % 3]) == e[(i + 2) % 3]);
    vec![below("su2", "jacobi identity", jac, 1e-14), below("su2", "antisymmetry", anti, 1e-300), flag("su2", "[E_i, E_j] = E_k", cyclic)]
}

/// General system on embedded states vs the reduced system, pointwise and along trajectories.
fn reduction(rng: &mut ChaCha8Rng, n: usize, prof: &dyn MetricProfile) -> Result<Vec<Check>, CliError> {
    let p = *prof.params();
    let series = near_orbit_series(p, 16)?;
    let mut pointwise: f64 = 0.0;
    for _ in 0..n * 8 {
        let z = ConnectionState::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let s = if rng.random_bool(0.5) { series.sample(rng.random_range(0.05..0.4)) } else { prof.sample(10f64.powf(rng.random_range(-1.0..3.0))) };
        let red = embed_reduced(reduced_rhs(&z, &s, &p)?);
        let gen = general_rhs(&embed_reduced(z), &s, &p)?;
        let scale = 1.0 + red.to_vec().iter().map(|v| v.abs()).fold(0.0, f64::max);
        pointwise = pointwise.max(red.max_abs_diff(&gen) / scale);
    }
    let (mut accepted, mut drawn) = (0, 0);
    let (mut diff, mut cons): (f64, f64) = (0.0, 0.0);
    while accepted < n && drawn < 40 * n {
        drawn += 1;
        let z = ConnectionState::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        // many draws blow up before t = 10; those carry no information about the reduction
        if let Ok(rep) = reduction_consistency(z, prof, 0.1, 10.0, 1e-12) {
            accepted += 1;
            diff = diff.max(rep.max_diff);
            cons = cons.max(rep.max_constraint);
        }
    }
    Ok(vec![
        below("reduction", "general vs reduced rhs (relative)", pointwise, 1e-12),
        below("reduction", "general vs reduced trajectories on [0.1, 10]", if accepted == n { diff } else { f64::INFINITY }, 1e-8),
        below("reduction", "constraint along general trajectories", if accepted == n { cons } else { f64::INFINITY }, 1e-8),
    ])
}

/// Closed-form abelian solutions against the reduced system; `mutate_phi` scales Φ.
fn abelian(prof: &dyn MetricProfile, mutate_phi: f64) -> Result<Vec<Check>, CliError> {
    let p = *prof.params();
    let t_hi = 1e2f64.min(0.5 * prof.validity().1);
    let mut worst: f64 = 0.0;
    for h0 in [0.0, 0.5] {
        let ab = abelian_solution(1, h0, prof)?;
        for t in log_grid(1e-3, t_hi, 30) {
            let s = prof.sample(t);
            let z = ab.state(t)?;
            let lhs = ab.derivative(t)?.to_array();
            let mut c = coefficients(&s, &p, Which::M);
            c.phi *= mutate_phi;
            let rhs = reduced_rhs_with(&z, &s, &c)?.to_array();
            let scale = 1.0 + rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
            worst = worst.max(max_abs(&lhs, &rhs) / scale);
        }
    }
    let mut flat: f64 = 0.0;
    for t in log_grid(1e-3, t_hi, 10) {
        let s = prof.sample(t);
        for z in &flat_connections(1)[..2] {
            flat = flat.max(curvature_norm(&embed_reduced(*z), &InvariantConnection::zero(), &s, &p)?);
        }
    }
    Ok(vec![below("abelian", "closed form vs reduced rhs", worst, 1e-6), below("flat", "curvature norm of flat states", flat, 1e-12)])
}

fn fixed_points() -> Result<Vec<Check>, CliError> {
    let r = fixed_point_report()?;
    let eig = r.fixed_points.iter().map(|e| e.eigenvalue_error).fold(0.0, f64::max);
    let fd = r.fixed_points.iter().map(|e| e.fd_error).fold(0.0, f64::max);
    let exact = r.fixed_points.iter().all(|e| e.jacobian_matches_printed);
    let text = serde_json::to_string(&r).map_err(|e| CliError::Io(e.to_string()))?;
    let back: FixedPointReport = serde_json::from_str(&text).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(vec![
        flag("fixed-points", "analytic Jacobians equal the printed ones", exact),
        below("fixed-points", "eigenvalues vs printed spectra", eig, 1e-10),
        below("fixed-points", "finite-difference Jacobian", fd, 1e-6),
        flag("fixed-points", "report JSON round-trip", back == r),
    ])
}

fn heteroclinic() -> Vec<Check> {
    let mut worst: f64 = 0.0;
    for i in 0..=2000 {
        let tau = -10.0 + 0.01 * i as f64;
        let e = (2.0 * tau).exp();
        let w = e / (1.0 + 3.0 * e);
        for sign in [1.0, -1.0] {
            let z = heteroclinic_oracle(tau, sign).z;
            let f = autonomous_f(&z);
            // z = w·v with v fixed, and ẇ = 2w(1 − 3w)
            let dz = z.map(|c| 2.0 * (1.0 - 3.0 * w) * c);
            worst = worst.max(max_abs(&dz, &f));
        }
    }
    vec![below("heteroclinic", "oracle residual on [-10, 10]", worst, 1e-12)]
}

fn metric(profile: &Profile) -> Vec<Check> {
    let prof = profile.as_dyn();
    let p = *prof.params();
    let t_hi = match profile {
        Profile::Ac(ac) => ac.t_match,
        Profile::Fixed(n) => n.t_end(),
    };
    let cons = log_grid(1e-3, t_hi, 20)
        .iter()
        .map(|t| {
            let s = prof.sample(*t);
            hitchin_constraint(&s, &p).abs() / (1.0 + s.a * s.a).powi(2)
        })
        .fold(0.0, f64::max);
    let mut out = vec![below("metric", "first-order constraint along the profile", cons, 1e-9)];
    if let Profile::Ac(ac) = profile {
        let nu = ac.decay_exponent(5.0, ac.t_match, 200);
        out.push(below("metric", "decay exponent vs nu_inf (relative)", (nu - nu_infinity()).abs() / nu_infinity(), 0.02));
        let grid = log_grid(1e-3, 1e6, 20);
        let failures = grid.iter().filter(|t| !ac.audit(**t).all()).count();
        out.push(below("metric", "inequality audit failures", failures as f64, 0.5));
    }
    out
}

fn sivp(p: g2inst::metric_profiles::MetricParams) -> Result<Vec<Check>, CliError> {
    let mut exact = true;
    for nu in 1..=4 {
        let loc = local_family(BundleIndex::from_nu(nu)?, LocalData { f0: 0.3, h0: -0.2 }, p)?;
        let rep = check_conditions(&loc, &loc.initial_vector(), &ConditionOptions { method: JacobianMethod::Exact, ..Default::default() })?;
        for (h, d) in &rep.determinants {
            let h = *h as f64;
            exact &= *d == h.powi(3) * (h + 2.0 * nu as f64);
        }
    }
    let i3 = BundleIndex::new(1, 1, 3)?;
    let loc = local_family(i3, LocalData { f0: 0.2, h0: 0.1 }, p)?;
    let rep = parity_check(&i3, &to_a_basis(&i3, &loc.series(12)?)?)?;
    let exps = (expected_exponents(&i3)?, expected_exponents(&BundleIndex::new(1, 2, 2)?)?);
    Ok(vec![
        flag("sivp", "det(h - dM) = h^3 (h + 2 nu), nu = 1..4", exact),
        flag("parity", "smooth extension of the j = 3 series", rep.pass),
        flag("parity", "leading exponents (1,1,3) and (1,2,2)", exps == ((1, 2), (0, 1))),
    ])
}

pub fn checks(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let profile = build_profile(cfg)?;
    let prof = profile.as_dyn();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = su2(&mut rng, cfg.samples);
    out.extend(fixed_points()?);
    out.extend(heteroclinic());
    out.extend(metric(&profile));
    out.extend(sivp(*prof.params())?);
    out.extend(abelian(prof, cfg.mutate_phi)?);
    out.extend(reduction(&mut rng, cfg.samples, prof)?);
    let opts = shoot_options(&RunConfig { f0: 0.0, ..cfg.clone() })?;
    let shot = shoot_h0_with(0.0, prof, &opts, exec_policy(cfg))?;
    out.push(flag("shooting", "f0 = 0 selects the abelian member h0 = 0", shot.result.h0 == 0.0));
    Ok(out)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let rows = checks(cfg)?;
    let mut table = Table::new(&["suite", "check", "value", "tolerance", "pass"]);
    println!("{:<14} {:<48} {:>10} {:>10}  result", "suite", "check", "value", "tol");
    for r in &rows {
        println!("{:<14} {:<48} {:>10.2e} {:>10.1e}  {}", r.suite, r.check, r.value, r.tolerance, if r.pass { "PASS" } else { "FAIL" });
        table.push(vec![r.suite.into(), r.check.into(), r.value.into(), r.tolerance.into(), Cell::Text(r.pass.to_string())]);
    }
    table.write(&out.join("verify.csv"))?;
    let failed: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| format!("{}: {}", r.suite, r.check)).collect();
    println!("{} checks, {} failed", rows.len(), failed.len());
    let failure = (!failed.is_empty()).then(|| format!("verification failed: {}", failed.join("; ")));
    Ok(Outcome { summary: json!({ "checks": rows, "failed": failed.len() }), artifacts: vec!["verify.csv".into()], failure })
}
