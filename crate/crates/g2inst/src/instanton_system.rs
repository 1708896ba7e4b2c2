//! Invariant SU(2) instanton equations over a fixed metric profile: the
//! general matrix system, the reduced `(f, f', g, h)` system on `M(1,1)`, the
//! local family at the singular orbit, and the smooth-extension parity check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Scalar;
use crate::metric_profiles::{coefficients, CoefficientTriple, near_orbit_series, MetricParams, MetricProfile, MetricSample, Which};
use crate::ode::{self, OdeOptions, Solution, Status};
use crate::singular_ivp::{self, SeriesSolution, SingularSystem};
use crate::su2_invariant_algebra::{bracket, curvature_norm, embed_reduced, ConnectionState, InvariantConnection, Su2Element};

/// The bundle `P_j` over `M(m, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleIndex {
    pub m: u32,
    pub n: u32,
    pub j: i32,
}

impl BundleIndex {
    /// Checks `j ≡ n` or `j ≡ −m (mod 2(m+n))`.
    pub fn new(m: u32, n: u32, j: i32) -> Result<Self> {
        let idx = BundleIndex { m, n, j };
        idx.branch()?;
        Ok(idx)
    }

    /// `m = n = 1`, `j = 2ν − 1`.
    pub fn from_nu(nu: i32) -> Result<Self> {
        BundleIndex::new(1, 1, 2 * nu - 1)
    }

    /// `ν` with `j = 2ν − 1` (meaningful on `M(1,1)`).
    pub fn nu(&self) -> i32 {
        (self.j + 1).div_euclid(2)
    }

    /// `true` when `j ≡ n`, `false` when `j ≡ −m`.
    fn branch(&self) -> Result<bool> {
        let (m, n, j) = (self.m as i64, self.n as i64, self.j as i64);
        let k = 2 * (m + n);
        if m == 0 || n == 0 {
            return Err(Error::InvalidParams("m and n must be positive".into()));
        }
        if (j - n).rem_euclid(k) == 0 {
            Ok(true)
        } else if (j + m).rem_euclid(k) == 0 {
            Ok(false)
        } else {
            Err(Error::WrongBundle { m: self.m, n: self.n, j: self.j })
        }
    }
}

/// Free data `(f₀, h₀)` of the local family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalData {
    pub f0: f64,
    pub h0: f64,
}

fn require_11(p: &MetricParams) -> Result<()> {
    if p.m != 1 || p.n != 1 {
        return Err(Error::InvalidParams(format!("the reduced system lives on M(1,1), got (m, n) = ({}, {})", p.m, p.n)));
    }
    Ok(())
}

fn denominators(s: &MetricSample) -> Result<(f64, f64)> {
    let d1 = 2.0 * s.da.powi(3) * s.db * s.db;
    let d2 = 2.0 * s.da.powi(4) * s.db;
    if s.db == 0.0 || s.da == 0.0 || !d1.is_finite() || !d2.is_finite() {
        return Err(Error::SingularTime(s.t));
    }
    Ok((d1, d2))
}

/// `ż` for the reduced ansatz on `M(1,1)`.
pub fn reduced_rhs(z: &ConnectionState, s: &MetricSample, p: &MetricParams) -> Result<ConnectionState> {
    require_11(p)?;
    reduced_rhs_with(z, s, &coefficients(s, p, Which::M))
}

/// [`reduced_rhs`] with the coefficient triple supplied by the caller.
pub fn reduced_rhs_with(z: &ConnectionState, s: &MetricSample, c: &CoefficientTriple) -> Result<ConnectionState> {
    let (d1, d2) = denominators(s)?;
    let (phi, psi, chi) = (c.phi, c.psi, c.chi);
    let ConnectionState { f, fp, g, h } = *z;
    Ok(ConnectionState {
        f: (fp * (1.0 - h + g / 2.0) * phi + f * (g - 1.0) * chi + fp * (g / 2.0 + h) * psi) / d1,
        fp: (f * (1.0 - g / 2.0 - h) * phi - fp * (g + 1.0) * chi + f * (h - g / 2.0) * psi) / d1,
        g: (f * f - fp * fp - g) * (phi - psi) / d2,
        h: ((h - fp * fp / 2.0 - f * f / 2.0) * (phi + psi) - 2.0 * f * fp * chi) / d2,
    })
}

/// `α̇` for a general invariant connection `(α_i, α_i')` on `M(m,n)`.
pub fn general_rhs(c: &InvariantConnection, s: &MetricSample, p: &MetricParams) -> Result<InvariantConnection> {
    let (d1, d2) = denominators(s)?;
    let cm = coefficients(s, p, Which::M);
    let cn = coefficients(s, p, Which::N);
    let (a, ap) = (&c.alpha, &c.alpha_p);
    let mut out = InvariantConnection::zero();
    let row = |x: Su2Element, xp: Su2Element, c1: Su2Element, c2: Su2Element, c3: Su2Element, c4: Su2Element| {
        (1.0 / d1) * (cm.phi * (xp - c1) - cm.chi * c2 + cm.psi * c3 + cn.chi * (c4 - x))
    };
    let row_p = |x: Su2Element, xp: Su2Element, c1: Su2Element, c2: Su2Element, c3: Su2Element, c4: Su2Element| {
        (1.0 / d1) * (cn.phi * (x - c1) - cn.chi * c2 + cn.psi * c3 + cm.chi * (c4 - xp))
    };
    out.alpha[0] = row(a[0], ap[0], bracket(ap[1], ap[2]), bracket(a[1], ap[2]), bracket(ap[1], a[2]), bracket(a[1], a[2]));
    out.alpha[1] = row(a[1], ap[1], bracket(ap[2], ap[0]), bracket(ap[2], a[0]), bracket(a[2], ap[0]), bracket(a[2], a[0]));
    out.alpha_p[0] = row_p(a[0], ap[0], bracket(a[1], a[2]), bracket(ap[1], a[2]), bracket(a[1], ap[2]), bracket(ap[1], ap[2]));
    out.alpha_p[1] = row_p(a[1], ap[1], bracket(a[2], a[0]), bracket(a[2], ap[0]), bracket(ap[2], a[0]), bracket(ap[2], ap[0]));
    let v = cm.phi * (ap[2] - bracket(ap[0], ap[1])) - cm.chi * (bracket(a[0], ap[1]) + bracket(ap[0], a[1]))
        + cn.psi * (a[2] - bracket(a[0], a[1]));
    out.alpha[2] = (1.0 / d2) * v;
    let v = cn.phi * (a[2] - bracket(a[0], a[1])) - cn.chi * (bracket(ap[0], a[1]) + bracket(a[0], ap[1]))
        + cm.psi * (ap[2] - bracket(ap[0], ap[1]));
    out.alpha_p[2] = (1.0 / d2) * v;
    Ok(out)
}

/// General system as a flat 18-vector field (cross-validation only).
pub fn general_field(c: &[f64], s: &MetricSample, p: &MetricParams) -> Result<Vec<f64>> {
    Ok(general_rhs(&InvariantConnection::from_slice(c), s, p)?.to_vec())
}

fn horner<S: Scalar>(c: &[f64], t: &S) -> S {
    let mut acc = t.cst(0.0);
    for ck in c.iter().rev() {
        acc = acc * t.clone() + *ck;
    }
    acc
}

/// The local family at `t = 0` in `f = u_f t^{ν−1}`, `f' = u_{f'} t^ν`,
/// `g = u_g`, `h = u_h`, with the metric entering through its near-orbit series.
#[derive(Clone, Debug)]
pub struct InstantonLocal {
    pub idx: BundleIndex,
    pub data: LocalData,
    pub params: MetricParams,
    metric: SeriesSolution,
    metric_cols: [Vec<f64>; 4],
}

/// Order of the metric series carried by [`InstantonLocal`].
pub const LOCAL_METRIC_ORDER: usize = 24;

pub fn local_family(idx: BundleIndex, d: LocalData, params: MetricParams) -> Result<InstantonLocal> {
    params.validate()?;
    require_11(&params)?;
    if idx.m != 1 || idx.n != 1 || idx.nu() < 1 {
        return Err(Error::InvalidParams(format!("local family needs m = n = 1 and ν ≥ 1, got {idx:?}")));
    }
    let metric = match near_orbit_series(params, LOCAL_METRIC_ORDER)? {
        crate::metric_profiles::NearOrbitSeries::Recursive { series, .. } => series,
        crate::metric_profiles::NearOrbitSeries::Printed { .. } => unreachable!("recursion requested"),
    };
    let metric_cols = [metric.component(0), metric.component(1), metric.component(2), metric.component(3)];
    Ok(InstantonLocal { idx, data: d, params, metric, metric_cols })
}

impl InstantonLocal {
    pub fn nu(&self) -> i32 {
        self.idx.nu()
    }

    /// `(f₀, ((β³(1−2h₀)+1−ν)/(4νr₀β²))f₀, 2ν−1, h₀)`.
    pub fn initial_vector(&self) -> [f64; 4] {
        let nu = self.nu() as f64;
        let (r0, beta) = (self.params.r0, self.params.beta);
        let LocalData { f0, h0 } = self.data;
        let k = (beta.powi(3) * (1.0 - 2.0 * h0) + 1.0 - nu) / (4.0 * nu * r0 * beta * beta);
        [f0, k * f0, 2.0 * nu - 1.0, h0]
    }

    pub fn metric_series(&self) -> &SeriesSolution {
        &self.metric
    }

    /// `(f, f', g, h)` from `u` at `t`.
    pub fn unscale(&self, t: f64, u: &[f64]) -> ConnectionState {
        let nu = self.nu();
        ConnectionState::new(u[0] * t.powi(nu - 1), u[1] * t.powi(nu), u[2], u[3])
    }

    pub fn series(&self, order: usize) -> Result<SeriesSolution> {
        singular_ivp::series_coefficients(self, &self.initial_vector(), order)
    }

    fn coeff(&self) -> f64 {
        let b = self.params.beta;
        4.0 * self.params.r0 * b * b
    }
}

impl SingularSystem for InstantonLocal {
    fn dim(&self) -> usize {
        4
    }

    fn rhs_t<S: Scalar>(&self, t: &S, u: &[S]) -> Vec<S> {
        let nu = self.nu();
        let nuf = nu as f64;
        let r = self.params.r3();
        let y: Vec<S> = self.metric_cols.iter().map(|c| horner(c, t)).collect();
        let (pp, q, s, w) = (&y[0], &y[1], &y[2], &y[3]);
        let b = t.sq() * s.clone() + r;
        let p2 = pp.sq();
        let bpr = b.clone() + r;
        let phi = p2.clone() * b.clone() * 2.0 + (p2.clone() * 2.0 + s.clone() * bpr.clone()) * r;
        let psi = b.clone() * (s.clone() * bpr.clone() - p2.clone() * 2.0) - p2 * (2.0 * r);
        let chi = pp.clone() * bpr.sq();
        let d = q.powi(3) * w.sq() * 2.0;
        let d2 = q.powi(4) * w.clone() * 2.0;
        let (uf, ufp, g, h) = (&u[0], &u[1], &u[2], &u[3]);
        let t2 = t.sq();
        let tn2 = t.powi(2 * nu - 2);
        let tn = t.powi(2 * nu);
        let f2 = uf.sq() * tn2;
        let fp2 = ufp.sq() * tn.clone();
        let half_g = g.clone() * 0.5;
        let r1 = t2.clone()
            * ufp.clone()
            * ((-(h.clone()) + half_g.clone() + 1.0) * phi.clone() + (half_g.clone() + h.clone()) * psi.clone())
            / d.clone()
            + uf.clone() * (g.clone() - 1.0) * chi.clone() / d.clone()
            - uf.clone() * (nuf - 1.0);
        let r2 = uf.clone() * ((-(half_g.clone()) - h.clone() + 1.0) * phi.clone() + (h.clone() - half_g) * psi.clone()) / d.clone()
            - ufp.clone() * (g.clone() + 1.0) * chi.clone() / d
            - ufp.clone() * nuf;
        let r3 = t2.clone() * (f2.clone() - fp2.clone() - g.clone()) * (phi.clone() - psi.clone()) / d2.clone();
        let r4 = (t2 * (h.clone() - fp2 * 0.5 - f2 * 0.5) * (phi + psi) - uf.clone() * ufp.clone() * tn * chi * 2.0) / d2;
        vec![r1, r2, r3, r4]
    }

    fn m_minus1(&self, u: &[f64]) -> Vec<f64> {
        let nu = self.nu() as f64;
        let b3 = self.params.beta.powi(3);
        let (uf, ufp, g, h) = (u[0], u[1], u[2], u[3]);
        vec![
            ((g + 1.0) / 2.0 - nu) * uf,
            (-(g + 1.0) / 2.0 - nu) * ufp + (1.0 - g + 2.0 * b3 * (1.0 - 2.0 * h)) / self.coeff() * uf,
            0.0,
            0.0,
        ]
    }

    fn jacobian(&self, u: &[f64]) -> Option<DMatrix<f64>> {
        let nu = self.nu() as f64;
        let b3 = self.params.beta.powi(3);
        let k = self.coeff();
        let (uf, ufp, g, h) = (u[0], u[1], u[2], u[3]);
        #[rustfmt::skip]
        let j = DMatrix::from_row_slice(4, 4, &[
            (g + 1.0) / 2.0 - nu, 0.0, uf / 2.0, 0.0,
            (1.0 - g + 2.0 * b3 * (1.0 - 2.0 * h)) / k, -(g + 1.0) / 2.0 - nu, -ufp / 2.0 - uf / k, -4.0 * b3 * uf / k,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ]);
        Some(j)
    }
}

#[derive(Clone, Debug)]
pub struct ConnectionOptions {
    pub t0: f64,
    pub t_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub series_order: usize,
    /// Largest admissible truncation estimate at `t0`.
    pub trust_tol: f64,
    /// `‖z‖_∞` beyond this is divergence.
    pub r_big: f64,
}

impl Default for ConnectionOptions {
    fn default() -> Self {
        ConnectionOptions { t0: 1e-3, t_max: 1e3, rtol: 1e-11, atol: 1e-13, series_order: 12, trust_tol: 1e-10, r_big: 1e6 }
    }
}

impl ConnectionOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.rtol = tol;
        self.atol = tol * 1e-2;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Exit {
    Reached,
    BlowUp { t: f64 },
    StepFailure { t: f64 },
}

impl Exit {
    pub fn label(&self) -> &'static str {
        match self {
            Exit::Reached => "reached",
            Exit::BlowUp { .. } => "blow-up",
            Exit::StepFailure { .. } => "step-failure",
        }
    }
}

/// One row of the trajectory table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub z: ConnectionState,
    /// `‖ż_dense − rhs(z)‖_∞`.
    pub residual: f64,
    /// `|F_A|²`.
    pub curvature_norm: f64,
}

/// A connection on `[0, t_end]`: local series up to `t0`, dense numerical solution beyond.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub local: InstantonLocal,
    pub series: SeriesSolution,
    pub t0: f64,
    pub segments: Vec<Solution>,
    pub exit: Exit,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.segments.last().map(|s| s.last_t()).unwrap_or(self.t0)
    }

    pub fn final_state(&self) -> ConnectionState {
        match self.segments.last() {
            Some(s) => ConnectionState::from_slice(s.last_y()),
            None => self.local.unscale(self.t0, &self.series.eval(self.t0)),
        }
    }

    pub fn state(&self, t: f64) -> Option<ConnectionState> {
        if t <= self.t0 {
            return Some(self.local.unscale(t, &self.series.eval(t)));
        }
        let seg = self.segments.iter().find(|s| t <= s.last_t())?;
        seg.eval(t).map(|v| ConnectionState::from_slice(&v))
    }

    pub fn derivative(&self, t: f64) -> Option<ConnectionState> {
        if t <= self.t0 {
            let nu = self.local.nu();
            let u = self.series.eval(t);
            let du = self.series.eval_derivative(t);
            let tp = |k: i32| if k == 0 { 0.0 } else { k as f64 * t.powi(k - 1) };
            return Some(ConnectionState::new(
                du[0] * t.powi(nu - 1) + u[0] * tp(nu - 1),
                du[1] * t.powi(nu) + u[1] * tp(nu),
                du[2],
                du[3],
            ));
        }
        let seg = self.segments.iter().find(|s| t <= s.last_t())?;
        seg.eval_derivative(t).map(|v| ConnectionState::from_slice(&v))
    }

    /// Accepted steps `(t, z)` of the numerical part.
    pub fn steps(&self) -> Vec<(f64, ConnectionState)> {
        let mut out = Vec::new();
        for s in &self.segments {
            for (t, y) in s.t.iter().zip(&s.y) {
                out.push((*t, ConnectionState::from_slice(y)));
            }
        }
        out
    }

    /// Table rows at `t` (requires the profile the trajectory was integrated on).
    pub fn point(&self, t: f64, profile: &dyn MetricProfile) -> Option<TrajectoryPoint> {
        let z = self.state(t)?;
        let dz = self.derivative(t)?;
        let s = profile.sample(t);
        let p = profile.params();
        let residual = match reduced_rhs(&z, &s, p) {
            Ok(r) => {
                let (a, b) = (dz.to_array(), r.to_array());
                a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            }
            Err(_) => f64::NAN,
        };
        let curv = curvature_norm(&embed_reduced(z), &embed_reduced(dz), &s, p).unwrap_or(f64::NAN);
        Some(TrajectoryPoint { t, z, residual, curvature_norm: curv })
    }

    /// Log-spaced samples over `[t_lo, t_end]`.
    pub fn sample_log(&self, profile: &dyn MetricProfile, t_lo: f64, per_decade: usize) -> Vec<TrajectoryPoint> {
        let t_hi = self.t_end();
        if !(t_hi > t_lo) {
            return Vec::new();
        }
        let n = (((t_hi / t_lo).log10() * per_decade as f64).ceil() as usize).max(1);
        (0..=n)
            .filter_map(|i| {
                let t = if i == n { t_hi } else { t_lo * (t_hi / t_lo).powf(i as f64 / n as f64) };
                self.point(t, profile)
            })
            .collect()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.exit {
            Exit::Reached => Ok(self),
            Exit::BlowUp { t } => Err(Error::BlowUp(t)),
            Exit::StepFailure { t } => Err(Error::StepFailure(t)),
        }
    }
}

/// Series handoff at `t0`, then the reduced system on the profile up to `t_max`,
/// restarting the integrator at each profile breakpoint.
pub fn integrate_connection(idx: BundleIndex, d: LocalData, profile: &dyn MetricProfile, t0: f64, t_max: f64, tol: f64) -> Result<Trajectory> {
    let opts = ConnectionOptions { t0, t_max, ..Default::default() }.with_tol(tol);
    integrate_connection_with(idx, d, profile, &opts)
}

pub fn integrate_connection_with(idx: BundleIndex, d: LocalData, profile: &dyn MetricProfile, opts: &ConnectionOptions) -> Result<Trajectory> {
    let params = *profile.params();
    let local = local_family(idx, d, params)?;
    let series = local.series(opts.series_order)?;
    let u0 = series.handoff(opts.t0, opts.trust_tol)?;
    let z0 = local.unscale(opts.t0, &u0);
    let (segments, exit) = follow(profile, z0.to_array(), opts.t0, opts)?;
    Ok(Trajectory { local, series, t0: opts.t0, segments, exit })
}

/// Integrate the reduced system from `(t0, z0)`.
pub fn follow(profile: &dyn MetricProfile, z0: [f64; 4], t0: f64, opts: &ConnectionOptions) -> Result<(Vec<Solution>, Exit)> {
    let params = *profile.params();
    require_11(&params)?;
    let mut cuts: Vec<f64> = profile.breakpoints().into_iter().filter(|b| *b > t0 && *b < opts.t_max).collect();
    cuts.push(opts.t_max);
    let mut segments = Vec::new();
    let mut y = z0.to_vec();
    let mut t = t0;
    let mut h0 = None;
    let big = opts.r_big;
    for t1 in cuts {
        let field = |tt: f64, z: &[f64], dz: &mut [f64]| {
            let s = profile.sample(tt);
            match reduced_rhs(&ConnectionState::from_slice(z), &s, &params) {
                Ok(r) => {
                    dz.copy_from_slice(&r.to_array());
                    true
                }
                Err(_) => false,
            }
        };
        let o = OdeOptions { rtol: opts.rtol, atol: opts.atol, h0, dense: true, ..Default::default() };
        let sol = ode::integrate(field, t, &y, t1, &o, |_, z| z.iter().all(|v| v.abs() <= big));
        let status = sol.status;
        let (tl, yl) = (sol.last_t(), sol.last_y().to_vec());
        if sol.t.len() >= 2 {
            let n = sol.t.len();
            h0 = Some(sol.t[n - 1] - sol.t[n - 2]);
        }
        segments.push(sol);
        match status {
            Status::Completed => {
                t = tl;
                y = yl;
            }
            Status::Stopped | Status::NonFinite(_) => return Ok((segments, Exit::BlowUp { t: tl })),
            Status::RhsFailure(tf) | Status::StepUnderflow(tf) | Status::MaxSteps(tf) => {
                if yl.iter().any(|v| v.abs() > 0.1 * big) {
                    return Ok((segments, Exit::BlowUp { t: tf }));
                }
                return Ok((segments, Exit::StepFailure { t: tf }));
            }
        }
    }
    Ok((segments, Exit::Reached))
}

/// General (18-dimensional) versus reduced trajectory from the same reduced data.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReductionReport {
    pub t0: f64,
    pub t_end: f64,
    /// `max |embed(z_reduced) − α_general|` over the general solver's steps.
    pub max_diff: f64,
    /// `max` constraint residual along the general trajectory.
    pub max_constraint: f64,
}

pub fn reduction_consistency(z0: ConnectionState, profile: &dyn MetricProfile, t0: f64, t1: f64, tol: f64) -> Result<ReductionReport> {
    let params = *profile.params();
    require_11(&params)?;
    let opts = ConnectionOptions { t_max: t1, ..ConnectionOptions::default().with_tol(tol) };
    let (segs, exit) = follow(profile, z0.to_array(), t0, &opts)?;
    if exit != Exit::Reached {
        return Err(Error::BlowUp(segs.last().map_or(t0, |s| s.last_t())));
    }
    let field = |t: f64, c: &[f64], dc: &mut [f64]| match general_field(c, &profile.sample(t), &params) {
        Ok(v) => {
            dc.copy_from_slice(&v);
            true
        }
        Err(_) => false,
    };
    let c0 = embed_reduced(z0).to_vec();
    let o = OdeOptions { rtol: tol, atol: tol * 1e-2, ..Default::default() };
    let gen = ode::integrate(field, t0, &c0, t1, &o, |_, _| true);
    if gen.status != Status::Completed {
        return Err(Error::StepFailure(gen.last_t()));
    }
    let reduced_at = |t: f64| segs.iter().find(|s| t <= s.last_t() + 1e-12 * t.abs().max(1.0)).and_then(|s| s.eval(t));
    let (mut max_diff, mut max_constraint) = (0.0f64, 0.0f64);
    for (t, c) in gen.t.iter().zip(&gen.y) {
        let z = reduced_at(*t).ok_or(Error::StepFailure(*t))?;
        let emb = embed_reduced(ConnectionState::from_slice(&z));
        let ic = InvariantConnection::from_slice(c);
        max_diff = max_diff.max(emb.max_abs_diff(&ic));
        max_constraint = max_constraint.max(crate::su2_invariant_algebra::constraint_residual(&ic, &profile.sample(*t)));
    }
    Ok(ReductionReport { t0, t_end: gen.last_t(), max_diff, max_constraint })
}

/// Coefficients `(A₁₂, A₁₂', A_rs, A_mn)` as power series in `t`.
#[derive(Clone, Debug, Serialize)]
pub struct ABasisSeries {
    pub a12: Vec<f64>,
    pub a12p: Vec<f64>,
    pub a_rs: Vec<f64>,
    pub a_mn: Vec<f64>,
}

/// On `M(1,1)`: `A₁₂ = f = u_f t^{ν−1}`, `A₁₂' = f' = u_{f'} t^ν`, `A_rs = g − j`, `A_mn = h`.
pub fn to_a_basis(idx: &BundleIndex, u: &SeriesSolution) -> Result<ABasisSeries> {
    if idx.m != 1 || idx.n != 1 {
        return Err(Error::InvalidParams("the local family is only available on M(1,1)".into()));
    }
    let nu = idx.nu();
    if nu < 1 {
        return Err(Error::InvalidParams(format!("ν = {nu} < 1")));
    }
    let shift = |c: Vec<f64>, k: usize| {
        let mut out = vec![0.0; k];
        out.extend(c);
        out
    };
    let mut a_rs = u.component(2);
    a_rs[0] -= idx.j as f64;
    Ok(ABasisSeries {
        a12: shift(u.component(0), (nu - 1) as usize),
        a12p: shift(u.component(1), nu as usize),
        a_rs,
        a_mn: u.component(3),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SeriesParity {
    Even,
    Odd,
    Mixed,
    /// Identically zero: compatible with either parity and any order.
    Zero,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoefficientCheck {
    pub name: &'static str,
    /// First non-negligible order (`None` for a zero series).
    pub leading_order: Option<usize>,
    pub parity: SeriesParity,
    pub expected_order: usize,
    pub expected_parity: SeriesParity,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParityReport {
    pub idx: BundleIndex,
    /// `j ≡ n` (true) or `j ≡ −m` (false).
    pub j_congruent_n: bool,
    pub checks: Vec<CoefficientCheck>,
    pub a_rs_vanishes_at_zero: bool,
    pub pass: bool,
}

fn classify(c: &[f64], scale: f64) -> (Option<usize>, SeriesParity) {
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let lead = c.iter().position(|v| v.abs() > tol);
    if lead.is_none() {
        return (None, SeriesParity::Zero);
    }
    let odd_zero = c.iter().skip(1).step_by(2).all(|v| v.abs() <= tol);
    let even_zero = c.iter().step_by(2).all(|v| v.abs() <= tol);
    let parity = match (odd_zero, even_zero) {
        (true, _) => SeriesParity::Even,
        (false, true) => SeriesParity::Odd,
        _ => SeriesParity::Mixed,
    };
    (lead, parity)
}

/// Exponents of the smooth-extension conditions for `A₁₂` and `A₁₂'`.
pub fn expected_exponents(idx: &BundleIndex) -> Result<(usize, usize)> {
    idx.branch()?;
    let mn = (idx.m + idx.n) as i64;
    let e12 = ((idx.j as i64 - idx.n as i64) / mn).unsigned_abs() as usize;
    let e12p = ((idx.j as i64 + idx.m as i64) / mn).unsigned_abs() as usize;
    Ok((e12, e12p))
}

fn parity_of_order(k: usize) -> SeriesParity {
    if k % 2 == 0 {
        SeriesParity::Even
    } else {
        SeriesParity::Odd
    }
}

/// Smooth extension over the singular orbit: `A_rs`, `A_mn` even with
/// `A_rs(0) = 0`; `A₁₂`, `A₁₂'` of the prescribed order and parity.
pub fn parity_check(idx: &BundleIndex, a: &ABasisSeries) -> Result<ParityReport> {
    let branch = idx.branch()?;
    let (e12, e12p) = expected_exponents(idx)?;
    let scale = [&a.a12, &a.a12p, &a.a_rs, &a.a_mn].iter().flat_map(|c| c.iter()).map(|v| v.abs()).fold(0.0, f64::max);
    let check = |name: &'static str, c: &[f64], order: usize, parity: SeriesParity, exact_order: bool| {
        let (lead, got) = classify(c, scale);
        let pass = match got {
            SeriesParity::Zero => true,
            SeriesParity::Mixed => false,
            p => p == parity && lead.map_or(true, |l| if exact_order { l == order } else { l >= order }),
        };
        CoefficientCheck { name, leading_order: lead, parity: got, expected_order: order, expected_parity: parity, pass }
    };
    let checks = vec![
        check("A12", &a.a12, e12, parity_of_order(e12), true),
        check("A12'", &a.a12p, e12p, parity_of_order(e12p), true),
        check("A_rs", &a.a_rs, 2, SeriesParity::Even, false),
        check("A_mn", &a.a_mn, 0, SeriesParity::Even, false),
    ];
    let a_rs_vanishes_at_zero = a.a_rs.first().map_or(true, |v| v.abs() <= 1e-12 * scale.max(1.0));
    let pass = a_rs_vanishes_at_zero && checks.iter().all(|c| c.pass);
    Ok(ParityReport { idx: *idx, j_congruent_n: branch, checks, a_rs_vanishes_at_zero, pass })
}

/// Sign gauge map `(f, f', g, h) → (−f, −f', g, h)`.
pub fn sign_gauge(z: &ConnectionState) -> ConnectionState {
    ConnectionState::new(-z.f, -z.fp, z.g, z.h)
}

/// Factor swap `(f, f', g, h) → (f', f, −g, h)`.
pub fn factor_swap(z: &ConnectionState) -> ConnectionState {
    ConnectionState::new(z.fp, z.f, -z.g, z.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_profiles::near_orbit_series;
    use crate::singular_ivp::{check_conditions, jacobian, ConditionOptions, JacobianMethod};

    fn p11() -> MetricParams {
        MetricParams::new(1, 1, 1.0, 1.25)
    }

    fn sample_at(t: f64) -> MetricSample {
        near_orbit_series(p11(), 10).unwrap().sample(t)
    }

    #[test]
    fn flat_state_is_stationary() {
        let s = sample_at(0.3);
        let r = reduced_rhs(&ConnectionState::new(1.0, 0.0, 1.0, 0.5), &s, &p11()).unwrap();
        assert!(r.to_array().iter().all(|v| v.abs() < 1e-13), "{r:?}");
    }

    #[test]
    fn plane_f_zero_is_invariant() {
        let s = sample_at(0.4);
        let r = reduced_rhs(&ConnectionState::new(0.0, 0.0, 0.7, -0.2), &s, &p11()).unwrap();
        assert_eq!((r.f, r.fp), (0.0, 0.0));
    }

    #[test]
    fn reduction_matches_general_system() {
        let s = sample_at(0.35);
        for z in [[0.3, -0.2, 0.9, 0.1], [1.2, 0.4, -0.3, 0.8], [-0.5, 0.7, 2.0, -1.1]] {
            let z = ConnectionState::from_array(z);
            let red = embed_reduced(reduced_rhs(&z, &s, &p11()).unwrap());
            let gen = general_rhs(&embed_reduced(z), &s, &p11()).unwrap();
            assert!(red.max_abs_diff(&gen) < 1e-12, "{:?}\n{:?}", red, gen);
        }
    }

    #[test]
    fn bundle_congruences() {
        assert!(BundleIndex::new(1, 1, 3).is_ok());
        assert!(BundleIndex::new(1, 1, 2).is_err());
        assert!(BundleIndex::new(1, 2, 2).is_ok());
        assert!(BundleIndex::new(1, 2, 5).is_ok());
        assert!(matches!(BundleIndex::new(1, 2, 3), Err(Error::WrongBundle { .. })));
    }

    #[test]
    fn printed_singular_part_and_jacobian() {
        for nu in 1..=3 {
            let loc = local_family(BundleIndex::from_nu(nu).unwrap(), LocalData { f0: 0.4, h0: -0.3 }, p11()).unwrap();
            let y0 = loc.initial_vector();
            let y = [0.3, -0.7, 1.4, 0.2];
            let a = loc.m_minus1(&y);
            let b = loc.rhs_t(&0.0, &y);
            for (x, z) in a.iter().zip(&b) {
                assert!((x - z).abs() < 1e-13, "{a:?} {b:?}");
            }
            let je = jacobian(&loc, &y, JacobianMethod::Exact);
            let ja = jacobian(&loc, &y, JacobianMethod::Automatic);
            assert!((je - ja).abs().max() < 1e-13);
            let rep = check_conditions(&loc, &y0, &ConditionOptions { method: JacobianMethod::Exact, ..Default::default() }).unwrap();
            for (h, d) in rep.determinants {
                let h = h as f64;
                assert_eq!(d, h.powi(3) * (h + 2.0 * nu as f64));
            }
        }
    }

    #[test]
    fn local_series_parity() {
        for nu in 1..=2 {
            let idx = BundleIndex::from_nu(nu).unwrap();
            let loc = local_family(idx, LocalData { f0: 0.2, h0: 0.1 }, p11()).unwrap();
            let s = loc.series(10).unwrap();
            let rep = parity_check(&idx, &to_a_basis(&idx, &s).unwrap()).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }
}
