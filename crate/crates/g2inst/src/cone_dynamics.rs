//! The instanton system in conical time `τ = log t`: `z' = F(z) + G(z, τ)`.
//!
//! Fixed points and their linearisations, the explicit heteroclinic orbit
//! `z₀ → z±`, shooting on `h₀` for the family converging to `z₊`, the
//! linearisation at the abelian solution, and a Lyapunov–Perron iteration for
//! the stable manifold of `z₊`.

use nalgebra::{DMatrix, Matrix4, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::instanton_system::{integrate_connection_with, local_family, to_a_basis, parity_check, reduced_rhs, BundleIndex, ConnectionOptions, Exit, LocalData, Trajectory};
use crate::metric_profiles::{coefficients, MetricProfile, Which};
use crate::ode::{self, OdeOptions, Status};
use crate::su2_invariant_algebra::ConnectionState;

pub type Z = [f64; 4];

/// Compensated accumulator for sums of small products; the result is correctly
/// rounded in all but pathological cases.
#[derive(Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn add(&mut self, c: f64, x: f64, y: f64) -> &mut Self {
        let p = x * y;
        let e = x.mul_add(y, -p);
        let q = c * p;
        let eq = c.mul_add(p, -q);
        let s = self.hi + q;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (q - bb);
        self.hi = s;
        self.lo += err + eq + c * e;
        self
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// `F(z)`, the cone limit of the reduced system in `τ`.
///
/// Evaluated monomial by monomial with compensated summation, so that on the
/// invariant lines `ℓ± = {f = f' = ±h, g = 0}` all four components round to the
/// same value and the lines are preserved exactly by any Runge–Kutta step
/// (off the line, the unstable eigenvalue 4 at `z±` would amplify rounding by `e^{4τ}`).
pub fn autonomous_f(z: &Z) -> Z {
    let [f, fp, g, h] = *z;
    [
        Dd::default().add(4.0, fp, 1.0).add(-6.0, fp, h).add(1.0, fp, g).add(2.0, f, g).add(-2.0, f, 1.0).value(),
        Dd::default().add(4.0, f, 1.0).add(-6.0, f, h).add(-1.0, f, g).add(-2.0, fp, g).add(-2.0, fp, 1.0).value(),
        Dd::default().add(6.0, f, f).add(-6.0, fp, fp).add(-6.0, g, 1.0).value(),
        Dd::default().add(2.0, h, 1.0).add(-1.0, fp, fp).add(-1.0, f, f).add(-4.0, f, fp).value(),
    ]
}

/// `DF(z)` in closed form.
pub fn jacobian_f(z: &Z) -> Matrix4<f64> {
    let [f, fp, g, h] = *z;
    #[rustfmt::skip]
    let m = Matrix4::new(
        2.0 * (g - 1.0), 2.0 * (2.0 - 3.0 * h + g / 2.0), fp + 2.0 * f, -6.0 * fp,
        2.0 * (2.0 - 3.0 * h - g / 2.0), -2.0 * (g + 1.0), -f - 2.0 * fp, -6.0 * f,
        12.0 * f, -12.0 * fp, -6.0, 0.0,
        -2.0 * f - 4.0 * fp, -2.0 * fp - 4.0 * f, 0.0, 2.0,
    );
    m
}

/// Central differences of `F`, step `1e-6`.
pub fn jacobian_f_fd(z: &Z) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    let e = 1e-6;
    for c in 0..4 {
        let mut zp = *z;
        let mut zm = *z;
        zp[c] += e;
        zm[c] -= e;
        let (a, b) = (autonomous_f(&zp), autonomous_f(&zm));
        for r in 0..4 {
            m[(r, c)] = (a[r] - b[r]) / (2.0 * e);
        }
    }
    m
}

/// Leading non-autonomous correction `36√3 r₀³ e^{−3τ}(…)` (the `O(e^{−6τ})` tail dropped).
pub fn nonautonomous_g(z: &Z, tau: f64, r0: f64) -> Z {
    let [f, fp, g, h] = *z;
    let k = 36.0 * 3f64.sqrt() * r0.powi(3) * (-3.0 * tau).exp();
    [
        k * fp * (h - 1.0 - g / 2.0),
        k * f * (h + g / 2.0 - 1.0),
        k * 6.0 * (fp * fp - f * f + g),
        k * (fp * fp / 2.0 + f * f / 2.0 - h),
    ]
}

/// The leading `e^{−3τ}` term as it actually arises from the asymptotic
/// metric: the same as [`nonautonomous_g`] except that the `g` entry carries
/// `(f'² − f² + g)` without the extra factor 6.
pub fn nonautonomous_g_leading(z: &Z, tau: f64, r0: f64) -> Z {
    let mut out = nonautonomous_g(z, tau, r0);
    out[2] /= 6.0;
    out
}

/// The exact vector field in `τ` on a metric profile: `t·ż` at `t = e^τ`.
pub fn profile_field(z: &Z, tau: f64, profile: &dyn MetricProfile) -> Result<Z> {
    let t = tau.exp();
    let d = reduced_rhs(&ConnectionState::from_array(*z), &profile.sample(t), profile.params())?;
    Ok(d.to_array().map(|v| t * v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RescaledState {
    pub z: Z,
    pub tau: f64,
}

/// `(±w, ±w, 0, w)`, `w = e^{2τ}/(1 + 3e^{2τ})`: the orbit from `z₀` to `z±` in `Π₂`.
pub fn heteroclinic_oracle(tau: f64, sign: f64) -> RescaledState {
    let e = (2.0 * tau).exp();
    let w = if e.is_finite() { e / (1.0 + 3.0 * e) } else { 1.0 / 3.0 };
    let s = sign.signum();
    RescaledState { z: [s * w, s * w, 0.0, w], tau }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FixedPoint {
    Z0,
    ZPlus,
    ZMinus,
}

impl FixedPoint {
    pub fn location(self) -> Z {
        let t = 1.0 / 3.0;
        match self {
            FixedPoint::Z0 => [0.0; 4],
            FixedPoint::ZPlus => [t, t, 0.0, t],
            FixedPoint::ZMinus => [-t, -t, 0.0, t],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FixedPoint::Z0 => "z0",
            FixedPoint::ZPlus => "z+",
            FixedPoint::ZMinus => "z-",
        }
    }

    pub const ALL: [FixedPoint; 3] = [FixedPoint::Z0, FixedPoint::ZPlus, FixedPoint::ZMinus];
}

/// The linearisation as tabulated: `(DF, eigenvalues, eigenvector columns)`.
pub fn printed_linearisation(fp: FixedPoint) -> ([[f64; 4]; 4], [f64; 4], [[f64; 4]; 4]) {
    match fp {
        FixedPoint::Z0 => (
            [[-2.0, 4.0, 0.0, 0.0], [4.0, -2.0, 0.0, 0.0], [0.0, 0.0, -6.0, 0.0], [0.0, 0.0, 0.0, 2.0]],
            [-6.0, -6.0, 2.0, 2.0],
            [[0.0, -1.0, 0.0, 1.0], [0.0, 1.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        ),
        FixedPoint::ZPlus => (
            [[-2.0, 2.0, 1.0, -2.0], [2.0, -2.0, -1.0, -2.0], [4.0, -4.0, -6.0, 0.0], [-2.0, -2.0, 0.0, 2.0]],
            [4.0, -8.0, -2.0, -2.0],
            [[-1.0, -1.0, 1.0, 1.0], [-1.0, 1.0, 1.0, -1.0], [0.0, 4.0, 0.0, 2.0], [2.0, 0.0, 1.0, 0.0]],
        ),
        FixedPoint::ZMinus => (
            [[-2.0, 2.0, -1.0, 2.0], [2.0, -2.0, 1.0, 2.0], [-4.0, 4.0, -6.0, 0.0], [2.0, 2.0, 0.0, 2.0]],
            [4.0, -8.0, -2.0, -2.0],
            [[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0], [0.0, 4.0, 0.0, 2.0], [2.0, 0.0, 1.0, 0.0]],
        ),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointRecord {
    pub location: FixedPoint,
    pub z: Z,
    pub residual: f64,
    pub jacobian: [[f64; 4]; 4],
    /// `max |DF_fd − DF|`.
    pub fd_error: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors, one per eigenvalue (a basis of each eigenspace).
    pub eigenvectors: Vec<[f64; 4]>,
    pub stable: Vec<usize>,
    pub unstable: Vec<usize>,
}

impl FixedPointRecord {
    /// Eigenvector matrix (columns in `eigenvalues` order).
    pub fn eigenvector_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.eigenvectors[c][r])
    }
}

fn rows(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

/// Real spectrum and eigenbasis of `m` (eigenvalues clustered to `1e-8`).
pub fn real_eigen(m: &Matrix4<f64>) -> Result<(Vec<f64>, Vec<[f64; 4]>)> {
    let ev = m.complex_eigenvalues();
    let scale = 1.0 + m.abs().max();
    let mut vals = Vec::with_capacity(4);
    for e in ev.iter() {
        if e.im.abs() > 1e-9 * scale || !e.re.is_finite() {
            return Err(Error::EigenSolveFailure(format!("non-real eigenvalue {e}")));
        }
        vals.push(e.re);
    }
    vals.sort_by(f64::total_cmp);
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for v in vals {
        match clusters.last_mut() {
            Some((c, k)) if (v - *c).abs() <= 1e-8 * scale => {
                *c = (*c * *k as f64 + v) / (*k as f64 + 1.0);
                *k += 1;
            }
            _ => clusters.push((v, 1)),
        }
    }
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for (lambda, k) in clusters {
        let a = m - Matrix4::identity() * lambda;
        let svd = a.svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::EigenSolveFailure("SVD without V".into()))?;
        let mut idx: Vec<usize> = (0..4).collect();
        idx.sort_by(|i, j| svd.singular_values[*i].total_cmp(&svd.singular_values[*j]));
        for &i in idx.iter().take(k) {
            if svd.singular_values[i] > 1e-6 * scale {
                return Err(Error::EigenSolveFailure(format!("defective eigenvalue {lambda}")));
            }
            let mut v = [vt[(i, 0)], vt[(i, 1)], vt[(i, 2)], vt[(i, 3)]];
            let big = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if big < 0.0 {
                v = v.map(|x| -x);
            }
            values.push(lambda);
            vectors.push(v);
        }
    }
    Ok((values, vectors))
}

pub fn linearize(fp: FixedPoint) -> Result<FixedPointRecord> {
    let z = fp.location();
    let j = jacobian_f(&z);
    let fd = jacobian_f_fd(&z);
    let residual = autonomous_f(&z).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let (eigenvalues, eigenvectors) = real_eigen(&j)?;
    let stable = (0..4).filter(|i| eigenvalues[*i] < 0.0).collect();
    let unstable = (0..4).filter(|i| eigenvalues[*i] > 0.0).collect();
    Ok(FixedPointRecord {
        location: fp,
        z,
        residual,
        jacobian: rows(&j),
        fd_error: (fd - j).abs().max(),
        eigenvalues,
        eigenvectors,
        stable,
        unstable,
    })
}

/// Largest distance from a column of the printed eigenvector matrix to the
/// computed eigenspace of the same eigenvalue.
pub fn printed_eigenvector_defect(rec: &FixedPointRecord) -> f64 {
    let (_, vals, vecs) = printed_linearisation(rec.location);
    let mut worst: f64 = 0.0;
    for (c, lambda) in vals.iter().enumerate() {
        let v = Vector4::from_fn(|r, _| vecs[r][c]);
        let basis: Vec<Vector4<f64>> = rec
            .eigenvalues
            .iter()
            .zip(&rec.eigenvectors)
            .filter(|(l, _)| (*l - lambda).abs() < 1e-8)
            .map(|(_, e)| Vector4::from_column_slice(e))
            .collect();
        let mut rem = v / v.norm();
        // basis vectors come from one SVD, hence orthonormal
        for b in &basis {
            rem -= *b * b.dot(&rem);
        }
        worst = worst.max(rem.norm());
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    ConvergedPlus,
    ConvergedMinus,
    DivergedUp,
    DivergedDown,
    Undecided,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::ConvergedPlus => "converged_plus",
            Classification::ConvergedMinus => "converged_minus",
            Classification::DivergedUp => "diverged_up",
            Classification::DivergedDown => "diverged_down",
            Classification::Undecided => "undecided",
        }
    }

    pub fn is_converged(self) -> bool {
        matches!(self, Classification::ConvergedPlus | Classification::ConvergedMinus)
    }
}

/// Direction of escape, read off `sign(h)` once `‖z‖` is large.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Escape {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShootResult {
    pub f0: f64,
    pub h0: f64,
    pub classification: Classification,
    pub exit_tau: f64,
    /// `|z(T) − z₊|` (or `z₋` for the minus branch).
    pub distance_to_target: f64,
    /// `|z(T) − z₀|`.
    pub distance_z0: f64,
    pub escape: Option<Escape>,
    /// Final `h₀` bracket width (0 outside bisection).
    pub bracket_width: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ShootOptions {
    pub idx: BundleIndex,
    pub connection: ConnectionOptions,
    /// `τ` at which convergence is judged.
    pub tau_t: f64,
    /// Integration horizon in `τ` (trajectories are followed until they escape).
    pub tau_max: f64,
    pub eps_conv: f64,
    pub h0_bracket: (f64, f64),
    pub scan_points: usize,
    /// Bisection stops once the bracket is this narrow (or adjacent in floating point).
    pub h0_tol: f64,
    pub max_bisect: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            idx: BundleIndex { m: 1, n: 1, j: 1 },
            connection: ConnectionOptions { t0: 1e-3, rtol: 1e-11, atol: 1e-13, r_big: 1e2, ..Default::default() },
            tau_t: 8.0,
            tau_max: 14.0,
            eps_conv: 1e-3,
            h0_bracket: (-0.5, 0.5),
            scan_points: 17,
            h0_tol: 0.0,
            max_bisect: 200,
        }
    }
}

fn dist(a: &Z, b: &Z) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Classify sampled `(τ, z)` data; `escaped` marks a run that left the ball `‖z‖ ≤ R_big`.
pub fn classify_samples(samples: &[(f64, Z)], escaped: bool, tau_t: f64, eps_conv: f64) -> (Classification, f64, f64, Option<Escape>) {
    let last = samples.last().map(|s| s.1).unwrap_or([f64::NAN; 4]);
    let escape = if escaped { Some(if last[3] > 0.0 { Escape::Up } else { Escape::Down }) } else { None };
    let at_t = samples.iter().rev().find(|(tau, _)| *tau <= tau_t + 1e-12).map(|s| s.1);
    let reached = samples.last().is_some_and(|s| s.0 >= tau_t - 1e-12);
    let (dp, dm, d0) = match (at_t, reached) {
        (Some(z), true) => (dist(&z, &FixedPoint::ZPlus.location()), dist(&z, &FixedPoint::ZMinus.location()), dist(&z, &[0.0; 4])),
        _ => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };
    let class = if dp < eps_conv {
        Classification::ConvergedPlus
    } else if dm < eps_conv {
        Classification::ConvergedMinus
    } else {
        match escape {
            Some(Escape::Up) => Classification::DivergedUp,
            Some(Escape::Down) => Classification::DivergedDown,
            None => Classification::Undecided,
        }
    };
    let target = if class == Classification::ConvergedMinus || (dm < dp) { dm } else { dp };
    (class, target, d0, escape)
}

pub fn classify_trajectory(traj: &Trajectory, opts: &ShootOptions) -> ShootResult {
    let t_t = opts.tau_t.exp();
    let mut samples: Vec<(f64, Z)> = Vec::new();
    if let Some(z) = traj.state(t_t) {
        samples.push((opts.tau_t, z.to_array()));
    }
    let t_end = traj.t_end();
    samples.push((t_end.ln(), traj.final_state().to_array()));
    let escaped = !matches!(traj.exit, Exit::Reached);
    let (classification, distance_to_target, distance_z0, escape) = classify_samples(&samples, escaped, opts.tau_t, opts.eps_conv);
    ShootResult {
        f0: traj.local.data.f0,
        h0: traj.local.data.h0,
        classification,
        exit_tau: t_end.ln(),
        distance_to_target,
        distance_z0,
        escape,
        bracket_width: 0.0,
        iterations: 0,
    }
}

/// Follow `(f₀, h₀)` from the singular orbit until escape or `τ_max`.
pub fn run_shot(f0: f64, h0: f64, profile: &dyn MetricProfile, opts: &ShootOptions) -> Result<(ShootResult, Trajectory)> {
    let co = ConnectionOptions { t_max: opts.tau_max.exp(), ..opts.connection.clone() };
    let traj = integrate_connection_with(opts.idx, LocalData { f0, h0 }, profile, &co)?;
    Ok((classify_trajectory(&traj, opts), traj))
}

#[derive(Clone, Debug)]
pub struct Shot {
    pub result: ShootResult,
    pub trajectory: Trajectory,
    /// The bracket scan `(h₀, classification)`.
    pub scan: Vec<(f64, Classification)>,
}

/// Bisection on `h₀` between escapes in opposite directions.
pub fn shoot_h0(f0: f64, bracket: (f64, f64), profile: &dyn MetricProfile, tol: f64, exec: Exec) -> Result<Shot> {
    let opts = ShootOptions { h0_bracket: bracket, h0_tol: tol, ..Default::default() };
    shoot_h0_with(f0, profile, &opts, exec)
}

pub fn shoot_h0_with(f0: f64, profile: &dyn MetricProfile, opts: &ShootOptions, exec: Exec) -> Result<Shot> {
    let (a, b) = opts.h0_bracket;
    let k = opts.scan_points.max(2);
    let grid: Vec<f64> = (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect();
    let scanned = exec.map(&grid, |h| run_shot(f0, *h, profile, opts).map(|(r, _)| r));
    let mut results = Vec::with_capacity(k);
    for r in scanned {
        results.push(r?);
    }
    let scan: Vec<(f64, Classification)> = results.iter().map(|r| (r.h0, r.classification)).collect();
    // sign changes of the escape direction; prefer the one nearest h₀ = 0
    let mut best: Option<(usize, f64)> = None;
    for i in 0..k - 1 {
        let (l, r) = (results[i].escape, results[i + 1].escape);
        if let (Some(x), Some(y)) = (l, r) {
            if x != y {
                let c = (grid[i].abs()).min(grid[i + 1].abs());
                if best.map_or(true, |(_, d)| c < d) {
                    best = Some((i, c));
                }
            }
        }
    }
    let Some((i, _)) = best else {
        if let Some(r) = results.iter().find(|r| r.escape.is_none()) {
            // no sign change, but a member that never escapes (f₀ = 0 lands on h₀ = 0 exactly)
            let (result, trajectory) = run_shot(f0, r.h0, profile, opts)?;
            return Ok(Shot { result, trajectory, scan });
        }
        let labels: Vec<&str> = results.iter().map(|r| r.classification.label()).collect();
        return Err(Error::NoBracket(format!("{labels:?}")));
    };
    let (mut lo, mut hi) = (grid[i], grid[i + 1]);
    let side_lo = results[i].escape;
    let mut it = 0;
    let mut stall: Option<(ShootResult, Trajectory)> = None;
    while it < opts.max_bisect {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= opts.h0_tol {
            break;
        }
        it += 1;
        let (r, traj) = run_shot(f0, mid, profile, opts)?;
        match r.escape {
            Some(e) if Some(e) == side_lo => lo = mid,
            Some(_) => hi = mid,
            None => {
                if r.classification.is_converged() || f0 == 0.0 {
                    stall = Some((r, traj));
                    break;
                }
                return Err(Error::NoConvergence(mid));
            }
        }
    }
    let (mut result, trajectory) = match stall {
        Some(s) => s,
        None => {
            let (rl, tl) = run_shot(f0, lo, profile, opts)?;
            let (rh, th) = run_shot(f0, hi, profile, opts)?;
            if rh.distance_to_target < rl.distance_to_target {
                (rh, th)
            } else {
                (rl, tl)
            }
        }
    };
    result.bracket_width = hi - lo;
    result.iterations = it;
    Ok(Shot { result, trajectory, scan })
}

/// Far-field diagnostics of a converged member.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FarField {
    /// `g` is monotone in `|g|` decreasing on `[τ_T − 3, τ_T]`.
    pub g_monotone: bool,
    pub g_at_t: f64,
    pub h_at_t: f64,
    /// `max |F_A|²` on `[t0, T]`.
    pub max_curvature: f64,
    /// `max |F_A|²` over the last decade before `T`.
    pub late_curvature: f64,
    /// Sup distance to the best `τ`-translate of the heteroclinic orbit over the last decade.
    pub heteroclinic_distance: f64,
}

pub fn far_field(traj: &Trajectory, profile: &dyn MetricProfile, tau_t: f64) -> FarField {
    let t_t = tau_t.exp().min(traj.t_end());
    let pts = traj.sample_log(profile, traj.t0, 40);
    let pts: Vec<_> = pts.into_iter().filter(|p| p.t <= t_t * (1.0 + 1e-12)).collect();
    let max_curvature = pts.iter().map(|p| p.curvature_norm).fold(0.0, f64::max);
    let late_curvature = pts.iter().filter(|p| p.t >= t_t / 10.0).map(|p| p.curvature_norm).fold(0.0, f64::max);
    let tail: Vec<_> = pts.iter().filter(|p| p.t.ln() >= tau_t - 3.0).collect();
    let g_monotone = tail.windows(2).all(|w| w[1].z.g.abs() <= w[0].z.g.abs());
    let last = pts.last().map(|p| p.z).unwrap_or_default();
    let decade: Vec<(f64, Z)> = pts.iter().filter(|p| p.t >= t_t / 10.0).map(|p| (p.t.ln(), p.z.to_array())).collect();
    let sign = if last.f >= 0.0 { 1.0 } else { -1.0 };
    FarField {
        g_monotone,
        g_at_t: last.g,
        h_at_t: last.h,
        max_curvature,
        late_curvature,
        heteroclinic_distance: heteroclinic_fit(&decade, sign).1,
    }
}

/// Best shift `s` and the sup distance `max |z(τ) − oracle(τ − s)|` (golden section on `s`).
pub fn heteroclinic_fit(samples: &[(f64, Z)], sign: f64) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, f64::NAN);
    }
    let cost = |s: f64| samples.iter().map(|(tau, z)| dist(z, &heteroclinic_oracle(tau - s, sign).z)).fold(0.0, f64::max);
    let (mut a, mut b) = (-20.0, 20.0);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..120 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let s = 0.5 * (a + b);
    (s, cost(s))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub f0: f64,
    pub h0: f64,
    pub classification: Classification,
    pub exit_tau: f64,
    pub distance: f64,
    pub max_curvature: f64,
    pub late_curvature: f64,
    pub g_monotone: bool,
    pub heteroclinic_distance: f64,
    pub parity_pass: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `max |h₀(f₀ᵢ₊₁) − h₀(f₀ᵢ)|` over adjacent converged rows.
    pub max_adjacent_jump: f64,
    /// Contiguous converged interval `[f_lo, f_hi]` containing the smallest `|f₀|`.
    pub achieved: Option<(f64, f64)>,
}

fn sweep_row(f0: f64, profile: &dyn MetricProfile, opts: &ShootOptions) -> SweepRow {
    match shoot_h0_with(f0, profile, opts, Exec::Sequential) {
        Ok(shot) => {
            let ff = far_field(&shot.trajectory, profile, opts.tau_t);
            let parity_pass = to_a_basis(&opts.idx, &shot.trajectory.series)
                .and_then(|a| parity_check(&opts.idx, &a))
                .map(|r| r.pass)
                .unwrap_or(false);
            SweepRow {
                f0,
                h0: shot.result.h0,
                classification: shot.result.classification,
                exit_tau: shot.result.exit_tau,
                distance: shot.result.distance_to_target,
                max_curvature: ff.max_curvature,
                late_curvature: ff.late_curvature,
                g_monotone: ff.g_monotone,
                heteroclinic_distance: ff.heteroclinic_distance,
                parity_pass,
                error: None,
            }
        }
        Err(e) => SweepRow {
            f0,
            h0: f64::NAN,
            classification: Classification::Undecided,
            exit_tau: f64::NAN,
            distance: f64::NAN,
            max_curvature: f64::NAN,
            late_curvature: f64::NAN,
            g_monotone: false,
            heteroclinic_distance: f64::NAN,
            parity_pass: false,
            error: Some(e.to_string()),
        },
    }
}

/// Shoot every `f₀` of the grid (concurrently under `exec`; each bisection is sequential).
pub fn family_sweep(f0_grid: &[f64], profile: &dyn MetricProfile, opts: &ShootOptions, exec: Exec) -> SweepReport {
    let rows = exec.map(f0_grid, |f0| sweep_row(*f0, profile, opts));
    let conv: Vec<&SweepRow> = rows.iter().filter(|r| r.classification.is_converged()).collect();
    let max_adjacent_jump = conv.windows(2).map(|w| (w[1].h0 - w[0].h0).abs()).fold(0.0, f64::max);
    let mut achieved: Option<(f64, f64)> = None;
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.f0.total_cmp(&b.f0));
    for r in sorted.iter().filter(|r| r.f0 > 0.0) {
        if !r.classification.is_converged() {
            break;
        }
        achieved = Some(match achieved {
            None => (r.f0, r.f0),
            Some((lo, _)) => (lo, r.f0),
        });
    }
    SweepReport { rows, max_adjacent_jump, achieved }
}

/// Linearisation `A(t)` at the abelian solution `(0, 0, g, 0)` on `P_j`.
pub fn stage2_linearization(profile: &dyn MetricProfile, t: f64, j: i32) -> Result<Matrix4<f64>> {
    let s = profile.sample(t);
    if s.db == 0.0 || s.da == 0.0 {
        return Err(Error::SingularTime(t));
    }
    let p = profile.params();
    let c = coefficients(&s, p, Which::M);
    let r = p.r3();
    let g = 4.0 * j as f64 * r * r / (s.b + r).powi(2);
    let d1 = 2.0 * s.da.powi(3) * s.db * s.db;
    let d2 = 2.0 * s.da.powi(4) * s.db;
    let (pt, qt, xt) = (c.phi / d1, c.psi / d1, c.chi / d1);
    let (ph, qh) = (c.phi / d2, c.psi / d2);
    #[rustfmt::skip]
    let a = Matrix4::new(
        xt * (g - 1.0), pt + 0.5 * g * (pt + qt), 0.0, 0.0,
        pt - 0.5 * g * (pt + qt), -xt * (g + 1.0), 0.0, 0.0,
        0.0, 0.0, qh - ph, 0.0,
        0.0, 0.0, 0.0, ph + qh,
    );
    Ok(a)
}

/// `(3Φ̃ + (g/2)(8χ̃ − 5(Φ̃+Ψ̃)),  −g(Φ̃ + Ψ̃ + 2χ̃))`; the first should be positive, the second negative.
pub fn stage2_functionals(profile: &dyn MetricProfile, t: f64, j: i32) -> Result<(f64, f64)> {
    let s = profile.sample(t);
    if s.db == 0.0 || s.da == 0.0 {
        return Err(Error::SingularTime(t));
    }
    let p = profile.params();
    let c = coefficients(&s, p, Which::M);
    let r = p.r3();
    let g = 4.0 * j as f64 * r * r / (s.b + r).powi(2);
    let d1 = 2.0 * s.da.powi(3) * s.db * s.db;
    let (pt, qt, xt) = (c.phi / d1, c.psi / d1, c.chi / d1);
    Ok((3.0 * pt + 0.5 * g * (8.0 * xt - 5.0 * (pt + qt)), -g * (pt + qt + 2.0 * xt)))
}

/// `N(t, w) = D₂Z(t, 0)w`: the derivative of the local family with respect to
/// `(f₀, h₀)` at the abelian member, carried by `A(t)` from `t0` to `t1`.
pub fn stage2_flow(profile: &dyn MetricProfile, j: i32, w: [f64; 2], t0: f64, t1: f64) -> Result<Vec<(f64, Z)>> {
    let idx = BundleIndex::new(1, 1, j)?;
    let params = *profile.params();
    let eps = 1e-6;
    let at = |f0: f64, h0: f64| -> Result<Z> {
        let loc = local_family(idx, LocalData { f0, h0 }, params)?;
        let s = loc.series(12)?;
        Ok(loc.unscale(t0, &s.eval(t0)).to_array())
    };
    let (p, m) = (at(eps * w[0], eps * w[1])?, at(-eps * w[0], -eps * w[1])?);
    let v0: Vec<f64> = (0..4).map(|i| (p[i] - m[i]) / (2.0 * eps)).collect();
    let field = |t: f64, v: &[f64], dv: &mut [f64]| match stage2_linearization(profile, t, j) {
        Ok(a) => {
            let r = a * Vector4::from_column_slice(v);
            dv.copy_from_slice(r.as_slice());
            true
        }
        Err(_) => false,
    };
    let sol = ode::integrate(field, t0, &v0, t1, &OdeOptions::tol(1e-11, 1e-14), |_, _| true);
    if sol.status != Status::Completed {
        return Err(Error::StepFailure(sol.last_t()));
    }
    Ok(sol.t.iter().zip(&sol.y).map(|(t, y)| (*t, [y[0], y[1], y[2], y[3]])).collect())
}

/// Stage-2 region `{f ≥ f', f ≥ −2f'} ∪ {f ≤ f', f ≤ −2f'}`, with a relative
/// slack of `1e-12` (the flow approaches the edge `f = f'`).
pub fn in_stage2_region(v: &Z) -> bool {
    let (f, fp) = (v[0], v[1]);
    let e = 1e-12 * f.abs().max(fp.abs());
    (f >= fp - e && f >= -2.0 * fp - e) || (f <= fp + e && f <= -2.0 * fp + e)
}

/// Smallest singular value of `[Π₂ tangent | stable plane of z₊ transported back along the oracle]`
/// at each `τ` (all columns orthonormalised within their block).
pub fn transversality_along_oracle(taus: &[f64], tau_far: f64) -> Result<Vec<(f64, f64)>> {
    // the transported plane degenerates under naive transport (rates −8 and −2),
    // so it is re-orthonormalised every half unit of τ
    let transport = |plane: [Z; 2], from: f64, to: f64| -> Result<[Z; 2]> {
        let mut out = [[0.0; 4]; 2];
        for (k, v) in plane.iter().enumerate() {
            // σ = −τ: v' = −DF(z(−σ)) v forward in σ
            let field = |s: f64, y: &[f64], dy: &mut [f64]| {
                let z = heteroclinic_oracle(-s, 1.0).z;
                let r = -(jacobian_f(&z) * Vector4::from_column_slice(y));
                dy.copy_from_slice(r.as_slice());
                true
            };
            let sol = ode::integrate(field, -from, v, -to, &OdeOptions::tol(1e-12, 1e-14), |_, _| true);
            if sol.status != Status::Completed {
                return Err(Error::StepFailure(-sol.last_t()));
            }
            let y = sol.last_y();
            out[k] = [y[0], y[1], y[2], y[3]];
        }
        let q = nalgebra::Matrix4x2::from_fn(|r, c| out[c][r]).qr().q();
        Ok([[q[(0, 0)], q[(1, 0)], q[(2, 0)], q[(3, 0)]], [q[(0, 1)], q[(1, 1)], q[(2, 1)], q[(3, 1)]]])
    };
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|i, j| taus[*j].total_cmp(&taus[*i]));
    let q0 = nalgebra::Matrix4x2::new(-1.0, 1.0, 1.0, -1.0, 4.0, 2.0, 0.0, 0.0).qr().q();
    let mut plane = [[q0[(0, 0)], q0[(1, 0)], q0[(2, 0)], q0[(3, 0)]], [q0[(0, 1)], q0[(1, 1)], q0[(2, 1)], q0[(3, 1)]]];
    let mut at = tau_far;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![(0.0, 0.0); taus.len()];
    for i in order {
        let target = taus[i];
        while at > target {
            let next = (at - 0.5).max(target);
            plane = transport(plane, at, next)?;
            at = next;
        }
        let cols = [[r, r, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], plane[0], plane[1]];
        let m = Matrix4::from_fn(|r, c| cols[c][r]);
        out[i] = (target, m.singular_values().min());
    }
    Ok(out)
}

/// Non-autonomous part used by the Lyapunov–Perron operator.
#[derive(Clone, Copy)]
pub enum Perturbation<'a> {
    None,
    /// The leading `e^{−3τ}` term (see [`nonautonomous_g_leading`]).
    Leading { r0: f64 },
    /// `t·ż − F(z)` on an actual profile.
    Profile(&'a dyn MetricProfile),
}

impl Perturbation<'_> {
    fn eval(&self, z: &Z, tau: f64) -> Result<Z> {
        Ok(match self {
            Perturbation::None => [0.0; 4],
            Perturbation::Leading { r0 } => nonautonomous_g_leading(z, tau, *r0),
            Perturbation::Profile(p) => {
                let full = profile_field(z, tau, *p)?;
                let f = autonomous_f(z);
                [full[0] - f[0], full[1] - f[1], full[2] - f[2], full[3] - f[3]]
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    /// Truncated horizon `[τ₀, τ₀ + L]`.
    pub length: f64,
    pub step: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Drop the nonlinear remainder of `F` (linear test case).
    pub linear: bool,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { length: 12.0, step: 0.01, max_iter: 200, tol: 1e-13, linear: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifoldSample {
    pub tau0: f64,
    /// Stable eigen-coordinates prescribed at `τ₀` (eigenvalues −8, −2, −2 at `z₊`).
    pub xi_s: [f64; 3],
    /// Resulting state at `τ₀` on the local stable manifold.
    pub z0: Z,
    pub iterations: usize,
    /// Sup-norm differences of successive iterates.
    pub diffs: Vec<f64>,
    /// Largest ratio of successive differences once the iteration has settled.
    pub contraction: f64,
}

/// Eigenbasis at `z±` ordered (unstable, stable…) and its inverse.
fn lp_basis(fp: FixedPoint) -> Result<(Vec<f64>, Matrix4<f64>, Matrix4<f64>)> {
    let rec = linearize(fp)?;
    if rec.unstable.len() != 1 {
        return Err(Error::InvalidParams(format!("{} does not have a one-dimensional unstable manifold", fp.name())));
    }
    let order: Vec<usize> = rec.unstable.iter().chain(&rec.stable).copied().collect();
    let lambdas: Vec<f64> = order.iter().map(|i| rec.eigenvalues[*i]).collect();
    let p = Matrix4::from_fn(|r, c| rec.eigenvectors[order[c]][r]);
    let pinv = p.try_inverse().ok_or_else(|| Error::EigenSolveFailure("singular eigenvector matrix".into()))?;
    Ok((lambdas, p, pinv))
}

/// Eigen-coordinates of `z − z_fp` in the ordering used by [`stable_manifold_iteration`].
pub fn eigen_coordinates(fp: FixedPoint, z: &Z) -> Result<Z> {
    let (_, _, pinv) = lp_basis(fp)?;
    let c = fp.location();
    let y = pinv * Vector4::new(z[0] - c[0], z[1] - c[1], z[2] - c[2], z[3] - c[3]);
    Ok([y[0], y[1], y[2], y[3]])
}

/// Exponential-trapezoid weights for `∫₀^Δ e^{λ(Δ−s)} N(s) ds` with `N` linear on the panel.
fn exp_weights(lambda: f64, d: f64) -> (f64, f64, f64) {
    let x = lambda * d;
    let e = x.exp();
    let (int, w1) = if x.abs() < 1e-6 {
        (d * (1.0 + x / 2.0 + x * x / 6.0), d * (0.5 + x / 6.0 + x * x / 24.0))
    } else {
        (x.exp_m1() / lambda, (x.exp_m1() - x) / (lambda * lambda * d))
    };
    (e, int - w1, w1)
}

/// Picard iteration of the Lyapunov–Perron operator on `[τ₀, τ₀ + L]`:
/// stable coordinates `y_s(τ) = e^{Λ_s(τ−τ₀)}ξ_s + ∫_{τ₀}^τ e^{Λ_s(τ−σ)}N_s`,
/// unstable `y_u(τ) = −∫_τ^{τ₀+L} e^{λ_u(τ−σ)}N_u`, with `N` the nonlinear
/// remainder of `F` plus the perturbation.
pub fn stable_manifold_iteration(fp: FixedPoint, xi_s: [f64; 3], tau0: f64, pert: Perturbation<'_>, opts: &LpOptions) -> Result<ManifoldSample> {
    let (lambdas, p, pinv) = lp_basis(fp)?;
    let zc = fp.location();
    let dfz = jacobian_f(&zc);
    let k = (opts.length / opts.step).round().max(1.0) as usize;
    let d = opts.length / k as f64;
    let taus: Vec<f64> = (0..=k).map(|i| tau0 + i as f64 * d).collect();
    let weights: Vec<(f64, f64, f64)> = lambdas.iter().map(|l| exp_weights(*l, d)).collect();
    let back_u = exp_weights(-lambdas[0], d);

    let mut y: Vec<Vector4<f64>> = taus
        .iter()
        .map(|tau| {
            let s = tau - tau0;
            Vector4::new(0.0, (lambdas[1] * s).exp() * xi_s[0], (lambdas[2] * s).exp() * xi_s[1], (lambdas[3] * s).exp() * xi_s[2])
        })
        .collect();
    let mut diffs = Vec::new();
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let mut nl: Vec<Vector4<f64>> = Vec::with_capacity(y.len());
        for (tau, yk) in taus.iter().zip(&y) {
            let dz = p * yk;
            let z: Z = [zc[0] + dz[0], zc[1] + dz[1], zc[2] + dz[2], zc[3] + dz[3]];
            let mut rem = Vector4::zeros();
            if !opts.linear {
                let f = autonomous_f(&z);
                rem = Vector4::from_column_slice(&f) - dfz * dz;
            }
            let g = pert.eval(&z, *tau)?;
            rem += Vector4::from_column_slice(&g);
            nl.push(pinv * rem);
        }
        let mut next = vec![Vector4::zeros(); y.len()];
        for c in 1..4 {
            let (e, w0, w1) = weights[c];
            let mut acc = 0.0;
            next[0][c] = xi_s[c - 1];
            for i in 1..=k {
                acc = e * acc + w0 * nl[i - 1][c] + w1 * nl[i][c];
                next[i][c] = (lambdas[c] * (taus[i] - tau0)).exp() * xi_s[c - 1] + acc;
            }
        }
        // unstable: J_i = ∫_{τ_i}^{τ_K} e^{λ_u(τ_i−σ)} N_u, recursion from the right
        let (e, w0, w1) = back_u;
        let mut acc = 0.0;
        next[k][0] = 0.0;
        for i in (0..k).rev() {
            acc = e * acc + w0 * nl[i + 1][0] + w1 * nl[i][0];
            next[i][0] = -acc;
        }
        let diff = next.iter().zip(&y).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        y = next;
        diffs.push(diff);
        if diffs.len() >= 3 {
            let n = diffs.len();
            if diffs[n - 1] > diffs[n - 2] * 1.0001 && diffs[n - 1] > 1e-14 {
                return Err(Error::NoContraction(it));
            }
        }
        if diff <= opts.tol {
            break;
        }
    }
    let ratios: Vec<f64> = diffs.windows(2).filter(|w| w[0] > 1e-14 && w[1] > 1e-15).map(|w| w[1] / w[0]).collect();
    let contraction = ratios.iter().skip(1).copied().fold(ratios.first().copied().unwrap_or(0.0), f64::max);
    let dz = p * y[0];
    Ok(ManifoldSample {
        tau0,
        xi_s,
        z0: [zc[0] + dz[0], zc[1] + dz[1], zc[2] + dz[2], zc[3] + dz[3]],
        iterations,
        diffs,
        contraction,
    })
}

/// Integrate `z' = F(z)` (optionally `+ G`) in `τ`.
pub fn integrate_autonomous(z0: Z, tau0: f64, tau1: f64, pert: Perturbation<'_>, tol: f64) -> Result<Vec<(f64, Z)>> {
    let field = |tau: f64, z: &[f64], dz: &mut [f64]| {
        let zz = [z[0], z[1], z[2], z[3]];
        let f = autonomous_f(&zz);
        match pert.eval(&zz, tau) {
            Ok(g) => {
                for i in 0..4 {
                    dz[i] = f[i] + g[i];
                }
                true
            }
            Err(_) => false,
        }
    };
    let sol = ode::integrate(field, tau0, &z0, tau1, &OdeOptions::tol(tol, tol * 1e-2).with_dense(), |_, _| true);
    if sol.status != Status::Completed {
        return Err(Error::StepFailure(sol.last_t()));
    }
    Ok(sol.t.iter().zip(&sol.y).map(|(t, y)| (*t, [y[0], y[1], y[2], y[3]])).collect())
}

/// `DF` on a dynamic matrix (for callers mixing with the singular-IVP tooling).
pub fn jacobian_f_dyn(z: &Z) -> DMatrix<f64> {
    let m = jacobian_f(z);
    DMatrix::from_fn(4, 4, |r, c| m[(r, c)])
}
