//! The torsion-free SU(2)²×U(1)-invariant G₂-structures on M(m,n): profile
//! functions `a, b`, the coefficient functions Φ, Ψ, χ, and four
//! interchangeable profiles (cone, near-orbit series, asymptotic series,
//! numerically tuned AC solution).

use nalgebra::SMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::jet::{Jet, Scalar};
use crate::ode::{self, OdeOptions, Solution, Status};
use crate::singular_ivp::{self, SeriesSolution, SingularSystem};

/// `√3/54`, the cone coefficient in `a = b = C₀ t³`.
pub const CONE_C: f64 = 0.032_075_014_954_979_206;

/// Decay rate of the `b − a` channel at infinity.
pub fn nu_infinity() -> f64 {
    (145f64.sqrt() + 7.0) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricParams {
    pub m: u32,
    pub n: u32,
    pub r0: f64,
    pub beta: f64,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MetricParams {
    pub fn new(m: u32, n: u32, r0: f64, beta: f64) -> Self {
        MetricParams { m, n, r0, beta }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || gcd(self.m, self.n) != 1 {
            return Err(Error::InvalidParams(format!("(m, n) = ({}, {}) must be coprime positive integers", self.m, self.n)));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::InvalidParams(format!("r0 = {} must be positive", self.r0)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta = {} must be positive", self.beta)));
        }
        Ok(())
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        MetricParams { beta, ..*self }
    }

    /// `r₀³`.
    pub fn r3(&self) -> f64 {
        self.r0.powi(3)
    }

    pub fn mn(&self) -> f64 {
        (self.m * self.n) as f64
    }

    fn weights(&self) -> (f64, f64) {
        (self.m as f64, self.n as f64)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MetricSample {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub da: f64,
    pub db: f64,
}

impl MetricSample {
    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.da.is_finite() && self.db.is_finite()
    }

    fn nan(t: f64) -> Self {
        MetricSample { t, a: f64::NAN, b: f64::NAN, da: f64::NAN, db: f64::NAN }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoefficientTriple {
    pub phi: f64,
    pub psi: f64,
    pub chi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    M,
    N,
}

/// `(Φ_w, Ψ_w, χ_w)` with `R = r₀³`.
pub fn coefficient_triple<S: Scalar>(a: &S, b: &S, r3: f64, mn: f64, w: f64) -> (S, S, S) {
    let w2r = w * w * r3;
    let k = mn * mn * r3 * r3;
    let a2 = a.sq();
    let b2 = b.sq();
    let phi = a2.clone() * b.clone() * 2.0 + (a2.clone() * 2.0 + b2.clone() - k) * w2r;
    let psi = b.clone() * (b2.clone() - a2.clone() * 2.0 - k) - a2 * (2.0 * w2r);
    let chi = a.clone() * (b2 + k) + a.clone() * b.clone() * (2.0 * w2r);
    (phi, psi, chi)
}

pub fn coefficients(s: &MetricSample, p: &MetricParams, which: Which) -> CoefficientTriple {
    let w = match which {
        Which::M => p.m as f64,
        Which::N => p.n as f64,
    };
    let (phi, psi, chi) = coefficient_triple(&s.a, &s.b, p.r3(), p.mn(), w);
    CoefficientTriple { phi, psi, chi }
}

/// `(ä, b̈)` for the state `(a, ȧ, b, ḃ)`.
pub fn hitchin_rhs(state: [f64; 4], _t: f64, p: &MetricParams) -> Result<(f64, f64)> {
    let [a, da, b, db] = state;
    if !(da > 0.0 && db > 0.0) {
        return Err(Error::DegenerateFrame { da, db });
    }
    let (m, n) = p.weights();
    let (_, psm, chm) = coefficient_triple(&a, &b, p.r3(), p.mn(), m);
    let (_, psn, chn) = coefficient_triple(&a, &b, p.r3(), p.mn(), n);
    let psi = psm + psn;
    let chi = chm + chn;
    let da3 = da * da * da;
    let dda = -psi / (4.0 * da3 * db);
    let ddb = chi / (2.0 * da3 * db) + psi / (4.0 * da3 * da);
    Ok((dda, ddb))
}

/// `Q(a, b) = 2[4a²(b + m²R)(b + n²R) − (b² − m²n²R²)²]`; torsion-free data has `8ȧ⁴ḃ² = Q`.
pub fn hitchin_quartic(a: f64, b: f64, p: &MetricParams) -> f64 {
    let r = p.r3();
    let (m, n) = p.weights();
    let k = p.mn() * p.mn() * r * r;
    2.0 * (4.0 * a * a * (b + m * m * r) * (b + n * n * r) - (b * b - k).powi(2))
}

/// Relative violation of the first-order constraint `8ȧ⁴ḃ² = Q(a, b)`.
pub fn hitchin_constraint(s: &MetricSample, p: &MetricParams) -> f64 {
    let lhs = 8.0 * s.da.powi(4) * s.db * s.db;
    let q = hitchin_quartic(s.a, s.b, p);
    (lhs - q).abs() / lhs.abs().max(q.abs()).max(f64::MIN_POSITIVE)
}

pub fn metric_tensor(s: &MetricSample, p: &MetricParams) -> Result<SMatrix<f64, 7, 7>> {
    if s.da * s.db == 0.0 || !(s.da * s.db).is_finite() {
        return Err(Error::DegenerateFrame { da: s.da, db: s.db });
    }
    Ok(crate::su2_invariant_algebra::metric_matrix(s, p))
}

/// The global inequalities known for the AC solution, evaluated at one sample.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InequalityAudit {
    pub t: f64,
    pub b_gt_a: bool,
    pub a_pos: bool,
    pub da_gt_db: bool,
    pub db_pos: bool,
    pub b_gt_mn_r: bool,
    pub quartic: bool,
    /// `k a > (b² − m²n²R²)/√((b + m²R)(b + n²R))` at the sharpest end `k = 1`.
    pub ka_bound: bool,
}

impl InequalityAudit {
    pub fn all(&self) -> bool {
        self.b_gt_a && self.a_pos && self.da_gt_db && self.db_pos && self.b_gt_mn_r && self.quartic && self.ka_bound
    }
}

pub fn audit_inequalities(s: &MetricSample, p: &MetricParams) -> InequalityAudit {
    audit_with_gap(s, s.b - s.a, s.da - s.db, p)
}

/// The audit with `b − a` and `ȧ − ḃ` supplied separately, so the
/// gap-sensitive inequalities stay meaningful when `b − a` is below the
/// resolution of `a`.
pub fn audit_with_gap(s: &MetricSample, gap: f64, dgap: f64, p: &MetricParams) -> InequalityAudit {
    let r = p.r3();
    let (m, n) = p.weights();
    let k = p.mn() * p.mn() * r * r;
    let (a, b) = (s.a, s.b);
    let pq = (b + m * m * r) * (b + n * n * r);
    let root = pq.sqrt();
    // b − (b² − k)/√pq without cancellation
    let b_minus_x = (b * (pq - b * b) / (root + b) + k) / root;
    let ka = b_minus_x - gap;
    InequalityAudit {
        t: s.t,
        b_gt_a: gap > 0.0,
        a_pos: a > 0.0,
        da_gt_db: dgap > 0.0,
        db_pos: s.db > 0.0,
        b_gt_mn_r: b > p.mn() * r,
        // ⇔ 2a√pq > b² − k, given b > mnR
        quartic: a + ka > 0.0,
        ka_bound: ka > 0.0,
    }
}

pub trait MetricProfile: Send + Sync {
    fn params(&self) -> &MetricParams;
    fn sample(&self, t: f64) -> MetricSample;
    /// Interval on which samples are meaningful.
    fn validity(&self) -> (f64, f64);
    /// Interior points where the profile switches representation.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Clone, Debug)]
pub struct ConeProfile {
    params: MetricParams,
}

pub fn cone_profile(params: MetricParams) -> ConeProfile {
    ConeProfile { params }
}

impl MetricProfile for ConeProfile {
    fn params(&self) -> &MetricParams {
        &self.params
    }
    fn sample(&self, t: f64) -> MetricSample {
        let a = CONE_C * t * t * t;
        let da = 3.0 * CONE_C * t * t;
        MetricSample { t, a, b: a, da, db: da }
    }
    fn validity(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

/// The metric equations near the singular orbit in the variables
/// `p = a/t, q = ȧ, s = (b − mnR)/t², w = ḃ/t`.
#[derive(Clone, Debug)]
pub struct MetricSivp {
    pub params: MetricParams,
}

impl MetricSivp {
    /// `(a, ȧ, b, ḃ)` expressed through the singular variables, over any scalar.
    pub fn unpack<S: Scalar>(&self, t: &S, y: &[S]) -> [S; 4] {
        let base = self.params.mn() * self.params.r3();
        [t.clone() * y[0].clone(), y[1].clone(), t.sq() * y[2].clone() + base, t.clone() * y[3].clone()]
    }

    pub fn fixed_point(&self) -> [f64; 4] {
        let p = &self.params;
        let q = p.r0 * p.r0 * p.beta;
        let (m, n) = p.weights();
        let w = p.mn().sqrt() * (m + n) * p.r0 / p.beta;
        [q, q, w / 2.0, w]
    }
}

impl SingularSystem for MetricSivp {
    fn dim(&self) -> usize {
        4
    }

    fn rhs_t<S: Scalar>(&self, t: &S, y: &[S]) -> Vec<S> {
        let p = &self.params;
        let r = p.r3();
        let mn = p.mn();
        let (m, n) = p.weights();
        let (pp, q, s, w) = (&y[0], &y[1], &y[2], &y[3]);
        let b = t.sq() * s.clone() + mn * r;
        let p2 = pp.sq();
        // Ψ = t²·Ψr, χ = t·χr
        let psi_r = b.clone() * (s.clone() * (b.clone() + mn * r) - p2.clone() * 2.0) * 2.0 - p2 * (2.0 * (m * m + n * n) * r);
        let chi_r = pp.clone() * ((b.sq() + mn * mn * r * r) * 2.0 + b * (2.0 * (m * m + n * n) * r));
        let q3 = q.powi(3);
        let nq = -(t.sq() * psi_r.clone()) / (q3.clone() * w.clone() * 4.0);
        let nw = chi_r / (q3.clone() * w.clone() * 2.0) + t.sq() * psi_r / (q3 * q.clone() * 4.0) - w.clone();
        vec![q.clone() - pp.clone(), nq, w.clone() - s.clone() * 2.0, nw]
    }
}

/// Closed-form low-order coefficients as printed for the near-orbit family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrintedSeries {
    pub a1: f64,
    pub a3: f64,
    pub b0: f64,
    pub b2: f64,
    pub b4: f64,
}

pub fn printed_series(p: &MetricParams) -> PrintedSeries {
    let (m, n) = p.weights();
    let mn = p.mn();
    let b3 = p.beta.powi(3);
    PrintedSeries {
        a1: p.r0 * p.r0 * p.beta,
        a3: ((m + n) * b3 - mn.powf(2.5)) / (12.0 * mn.sqrt() * b3),
        b0: mn * p.r3(),
        b2: mn.sqrt() * (m + n) * p.r0 / (2.0 * p.beta),
        b4: (m + n) / (96.0 * p.r0 * p.beta.powi(5)) * (7.0 - 4.0 * (m + n) * b3),
    }
}

#[derive(Clone, Debug)]
pub enum NearOrbitSeries {
    /// Recursively generated to the requested order.
    Recursive { params: MetricParams, series: SeriesSolution },
    /// The printed coefficients through `t³` (a) and `t⁴` (b).
    Printed { params: MetricParams, coeffs: PrintedSeries },
}

/// Near-orbit family by singular-IVP recursion of order `order` (≥ 4) in the
/// singular variables, so `a` is retained through `t^{order+1}` and `b` through `t^{order+2}`.
pub fn near_orbit_series(params: MetricParams, order: usize) -> Result<NearOrbitSeries> {
    params.validate()?;
    if order < 4 {
        return Err(Error::InvalidParams(format!("near-orbit series needs order >= 4, got {order}")));
    }
    let sys = MetricSivp { params };
    let series = singular_ivp::series_coefficients(&sys, &sys.fixed_point(), order)?;
    Ok(NearOrbitSeries::Recursive { params, series })
}

/// The printed truncation; anything beyond it needs the recursion.
pub fn near_orbit_printed(params: MetricParams, order: usize) -> Result<NearOrbitSeries> {
    params.validate()?;
    if order > 4 {
        return Err(Error::SeriesOrderUnavailable(order));
    }
    Ok(NearOrbitSeries::Printed { params, coeffs: printed_series(&params) })
}

impl NearOrbitSeries {
    pub fn series(&self) -> Option<&SeriesSolution> {
        match self {
            NearOrbitSeries::Recursive { series, .. } => Some(series),
            NearOrbitSeries::Printed { .. } => None,
        }
    }

    /// Taylor coefficients of `a` and `b` in `t`.
    pub fn ab_coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            NearOrbitSeries::Recursive { params, series } => {
                let mut a = vec![0.0];
                a.extend(series.component(0));
                let mut b = vec![params.mn() * params.r3(), 0.0];
                b.extend(series.component(2));
                (a, b)
            }
            NearOrbitSeries::Printed { coeffs, .. } => {
                (vec![0.0, coeffs.a1, 0.0, coeffs.a3], vec![coeffs.b0, 0.0, coeffs.b2, 0.0, coeffs.b4])
            }
        }
    }
}

fn poly(c: &[f64], t: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    for (k, ck) in c.iter().enumerate().rev() {
        v = v * t + ck;
        if k > 0 {
            d = d * t + k as f64 * ck;
        }
    }
    (v, d)
}

impl MetricProfile for NearOrbitSeries {
    fn params(&self) -> &MetricParams {
        match self {
            NearOrbitSeries::Recursive { params, .. } | NearOrbitSeries::Printed { params, .. } => params,
        }
    }

    fn sample(&self, t: f64) -> MetricSample {
        match self {
            NearOrbitSeries::Recursive { params, series } => {
                let y = series.eval(t);
                let sys = MetricSivp { params: *params };
                let [a, da, b, db] = sys.unpack(&t, &y);
                MetricSample { t, a, b, da, db }
            }
            NearOrbitSeries::Printed { .. } => {
                let (ca, cb) = self.ab_coefficients();
                let (a, da) = poly(&ca, t);
                let (b, db) = poly(&cb, t);
                MetricSample { t, a, b, da, db }
            }
        }
    }

    fn validity(&self) -> (f64, f64) {
        match self {
            NearOrbitSeries::Recursive { series, .. } => (0.0, series.radius),
            NearOrbitSeries::Printed { params, .. } => (0.0, 0.1 * params.r0),
        }
    }
}

/// Conical end: the `a = b` backbone `A(T)` (exact solution of the reduced
/// first-order equation, as a series in `R/A`) plus the decaying `b − a` mode,
/// in the shifted time `T = t + shift`.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticProfile {
    pub params: MetricParams,
    pub c: f64,
    pub shift: f64,
    pub nu: f64,
    /// Coefficients of `(P(y)/3)^{-1/6}` with `y = R/A`.
    pub gammas: Vec<f64>,
}

pub fn asymptotic_series(params: MetricParams, c: f64, order: usize) -> AsymptoticProfile {
    let (m, n) = params.weights();
    let y = Jet::variable(0.0, order.max(1));
    let pm = y.clone() * (m * m) + 1.0;
    let pn = y.clone() * (n * n) + 1.0;
    let k = (y.sq() * (-(m * m * n * n))) + 1.0;
    let p = pm * pn * 4.0 - k.sq();
    let g = (p / 3.0).powf(-1.0 / 6.0);
    AsymptoticProfile { params, c, shift: 0.0, nu: nu_infinity(), gammas: g.coeffs().to_vec() }
}

impl AsymptoticProfile {
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    fn pref() -> f64 {
        (4.0f64 / 3.0).powf(1.0 / 6.0)
    }

    /// `Θ(A)` with `dΘ/dA = 1/Ȧ`, normalised so `Θ ~ 3(4/3)^{1/6} A^{1/3}`.
    pub fn theta(&self, a: f64) -> f64 {
        let r = self.params.r3();
        let mut s = 0.0;
        for (k, g) in self.gammas.iter().enumerate() {
            let e = 1.0 / 3.0 - k as f64;
            s += g * r.powi(k as i32) * a.powf(e) / e;
        }
        Self::pref() * s
    }

    /// `Ȧ` on the invariant line `a = b`, exact: `8Ȧ⁶ = Q(A, A)`.
    pub fn backbone_rate(&self, a: f64) -> f64 {
        (hitchin_quartic(a, a, &self.params) / 8.0).powf(1.0 / 6.0)
    }

    /// Solve `Θ(A) = T`.
    pub fn backbone(&self, tt: f64) -> f64 {
        let mut a = CONE_C * tt.powi(3);
        for _ in 0..60 {
            let rate = self.backbone_rate(a);
            let step = (self.theta(a) - tt) * rate;
            let next = a - step;
            let next = if next <= 0.0 { 0.5 * a } else { next };
            let done = (next - a).abs() <= 1e-15 * a.abs();
            a = next;
            if done {
                break;
            }
        }
        a
    }

    /// Smallest `T` for which the backbone series is trusted (`R/A ≤ 1/(4 max(m,n)²)`).
    pub fn t_min(&self) -> f64 {
        let w = self.params.m.max(self.params.n) as f64;
        let a_min = 4.0 * w * w * self.params.r3();
        self.theta(a_min) - self.shift
    }
}

impl MetricProfile for AsymptoticProfile {
    fn params(&self) -> &MetricParams {
        &self.params
    }

    fn sample(&self, t: f64) -> MetricSample {
        let tt = t + self.shift;
        let aa = self.backbone(tt);
        let daa = self.backbone_rate(aa);
        let d = self.c * CONE_C * tt.powf(3.0 - self.nu);
        let dd = (3.0 - self.nu) * d / tt;
        MetricSample { t, a: aa - d / 3.0, b: aa + 2.0 * d / 3.0, da: daa - dd / 3.0, db: daa + 2.0 * dd / 3.0 }
    }

    fn validity(&self) -> (f64, f64) {
        (self.t_min(), f64::INFINITY)
    }
}

#[derive(Clone, Debug)]
pub struct IntegrationOptions {
    /// Series/integrator handoff.
    pub t0: f64,
    pub series_order: usize,
    pub rtol: f64,
    pub atol: f64,
    /// `|a|` or `|b|` beyond this counts as blow-up.
    pub overflow: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions { t0: 1e-3, series_order: 8, rtol: 1e-12, atol: 1e-14, overflow: 1e100 }
    }
}

impl IntegrationOptions {
    pub fn for_params(p: &MetricParams) -> Self {
        IntegrationOptions { t0: 1e-3 * p.r0, ..Default::default() }
    }
}

/// Series on `[0, t0]`, dense numerical solution on `[t0, t_end]`.
#[derive(Clone, Debug)]
pub struct NumericProfile {
    params: MetricParams,
    pub t0: f64,
    pub series: NearOrbitSeries,
    pub solution: Solution,
}

impl NumericProfile {
    pub fn t_end(&self) -> f64 {
        self.solution.last_t()
    }

    pub fn status(&self) -> Status {
        self.solution.status
    }
}

impl MetricProfile for NumericProfile {
    fn params(&self) -> &MetricParams {
        &self.params
    }

    fn sample(&self, t: f64) -> MetricSample {
        if t <= self.t0 {
            return self.series.sample(t);
        }
        match self.solution.eval(t) {
            Some(y) => MetricSample { t, a: y[0], da: y[1], b: y[2], db: y[3] },
            None => MetricSample::nan(t),
        }
    }

    fn validity(&self) -> (f64, f64) {
        (0.0, self.t_end())
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.t0]
    }
}

fn metric_field(p: MetricParams) -> impl FnMut(f64, &[f64], &mut [f64]) -> bool {
    move |t, y, d| match hitchin_rhs([y[0], y[1], y[2], y[3]], t, &p) {
        Ok((dda, ddb)) => {
            d[0] = y[1];
            d[1] = dda;
            d[2] = y[3];
            d[3] = ddb;
            true
        }
        Err(_) => false,
    }
}

fn seed(params: &MetricParams, opts: &IntegrationOptions) -> Result<(NearOrbitSeries, Vec<f64>)> {
    let series = near_orbit_series(*params, opts.series_order)?;
    let s = series.sample(opts.t0);
    Ok((series, vec![s.a, s.da, s.b, s.db]))
}

/// Integrate from the near-orbit series at `t0` to `t_max`, running `observe` after each step.
pub fn integrate_profile_with<O>(params: MetricParams, t_max: f64, opts: &IntegrationOptions, dense: bool, observe: O) -> Result<NumericProfile>
where
    O: FnMut(f64, &[f64]) -> bool,
{
    params.validate()?;
    let (series, y0) = seed(&params, opts)?;
    let mut o = OdeOptions::tol(opts.rtol, opts.atol);
    o.dense = dense;
    let solution = ode::integrate(metric_field(params), opts.t0, &y0, t_max, &o, observe);
    Ok(NumericProfile { params, t0: opts.t0, series, solution })
}

/// Numerical AC-type profile on `[t0, t_max]`.
pub fn integrate_ac_profile(params: MetricParams, t0: f64, t_max: f64, tol: f64) -> Result<NumericProfile> {
    let opts = IntegrationOptions { t0, rtol: tol, atol: tol * 1e-2, ..Default::default() };
    let big = opts.overflow;
    let prof = integrate_profile_with(params, t_max, &opts, true, |_, y| y[0].abs() < big && y[2].abs() < big)?;
    match prof.status() {
        Status::Completed => Ok(prof),
        Status::Stopped | Status::NonFinite(_) | Status::RhsFailure(_) | Status::StepUnderflow(_) | Status::MaxSteps(_) => {
            Err(Error::BlowUp(prof.t_end()))
        }
    }
}

/// Outcome of following one β far into the end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum BetaClass {
    /// `ȧ` or `ḃ` reaches zero: the end collapses (β below the AC value).
    Low { t: f64 },
    /// `b − a` changes sign: the circle fibre stabilises (β above, ALC side).
    High { t: f64 },
    /// Neither happened before the horizon.
    Undecided,
}

impl BetaClass {
    pub fn label(&self) -> &'static str {
        match self {
            BetaClass::Low { .. } => "low",
            BetaClass::High { .. } => "high",
            BetaClass::Undecided => "undecided",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TuneOptions {
    pub integration: IntegrationOptions,
    /// Classification horizon.
    pub t_end: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { integration: IntegrationOptions::default(), t_end: 1e9 }
    }
}

pub fn classify_beta(params: MetricParams, opts: &TuneOptions) -> Result<BetaClass> {
    let mut class = BetaClass::Undecided;
    let prof = integrate_profile_with(params, opts.t_end, &opts.integration, false, |t, y| {
        if y[2] - y[0] < 0.0 {
            class = BetaClass::High { t };
            return false;
        }
        if y[1] <= 0.0 || y[3] <= 0.0 {
            class = BetaClass::Low { t };
            return false;
        }
        true
    })?;
    Ok(match (class, prof.status()) {
        (BetaClass::Undecided, Status::RhsFailure(t) | Status::NonFinite(t) | Status::StepUnderflow(t)) => BetaClass::Low { t },
        (c, _) => c,
    })
}

/// Classify each β on `grid` (independent trajectories, scheduled by `exec`).
pub fn scan_beta(params: MetricParams, grid: &[f64], opts: &TuneOptions, exec: Exec) -> Vec<(f64, Result<BetaClass>)> {
    exec.map(grid, |b| (*b, classify_beta(params.with_beta(*b), opts)))
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaTuning {
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Bisection on β between a collapsing and an ALC-like endpoint until the
/// bracket is narrower than `tol·β` (or adjacent in floating point).
pub fn tune_beta_ac(params: MetricParams, bracket: (f64, f64), tol: f64, opts: &TuneOptions) -> Result<BetaTuning> {
    let (mut lo, mut hi) = bracket;
    let cl = classify_beta(params.with_beta(lo), opts)?;
    let ch = classify_beta(params.with_beta(hi), opts)?;
    match (cl, ch) {
        (BetaClass::Low { .. }, BetaClass::High { .. }) => {}
        (BetaClass::High { .. }, BetaClass::Low { .. }) => std::mem::swap(&mut lo, &mut hi),
        (a, b) => {
            let label = if a.label() == b.label() { a.label().to_string() } else { format!("{} / {}", a.label(), b.label()) };
            return Err(Error::NoBracket(label));
        }
    }
    let mut it = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol * mid.abs() || mid == lo || mid == hi {
            break;
        }
        it += 1;
        match classify_beta(params.with_beta(mid), opts)? {
            BetaClass::Low { .. } => lo = mid,
            BetaClass::High { .. } => hi = mid,
            BetaClass::Undecided => {
                return Ok(BetaTuning { beta: mid, lo, hi, iterations: it });
            }
        }
    }
    Ok(BetaTuning { beta: 0.5 * (lo + hi), lo, hi, iterations: it })
}

#[derive(Clone, Debug)]
pub struct AcOptions {
    pub integration: IntegrationOptions,
    /// Horizon for comparing the two bracket trajectories.
    pub t_probe: f64,
    /// Hand over to the asymptotic end once the bracket trajectories disagree
    /// in `b − a` by this relative amount.
    pub match_rel: f64,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions { integration: IntegrationOptions::default(), t_probe: 400.0, match_rel: 1e-2 }
    }
}

/// The tuned AC metric: near-orbit series, then the numerical solution for
/// `β_ac` while it is still determined by the bisection bracket, then the
/// conical end matched in value of `a` and `b − a`.
#[derive(Clone, Debug)]
pub struct AcProfile {
    pub tuning: BetaTuning,
    pub numeric: NumericProfile,
    pub asymptotic: AsymptoticProfile,
    pub t_match: f64,
    /// `|ȧ|, |ḃ|` jumps at `t_match`, relative.
    pub derivative_jump: f64,
}

pub fn build_ac_profile(params: MetricParams, tuning: BetaTuning, opts: &AcOptions) -> Result<AcProfile> {
    let probe = |beta: f64| {
        integrate_profile_with(params.with_beta(beta), opts.t_probe, &opts.integration, true, |_, y| {
            y[1] > 0.0 && y[3] > 0.0 && y[2] > y[0]
        })
    };
    let lo = probe(tuning.lo)?;
    let hi = probe(tuning.hi)?;
    let t_common = lo.t_end().min(hi.t_end());
    let mut t_match = 1.0;
    let grid: Vec<f64> = (0..=2000).map(|i| (t_common.ln() * i as f64 / 2000.0).exp()).collect();
    for t in grid.iter().filter(|t| **t >= 1.0) {
        let (sl, sh) = (lo.sample(*t), hi.sample(*t));
        let (dl, dh) = (sl.b - sl.a, sh.b - sh.a);
        if !((dl - dh).abs() <= opts.match_rel * 0.5 * (dl + dh).abs()) {
            break;
        }
        t_match = *t;
    }
    let mid = params.with_beta(tuning.beta);
    let numeric = integrate_profile_with(mid, t_match, &opts.integration, true, |_, _| true)?;
    if numeric.status() != Status::Completed {
        return Err(Error::BlowUp(numeric.t_end()));
    }
    let s = numeric.sample(t_match);
    let base = asymptotic_series(mid, 0.0, 16);
    let aa = (2.0 * s.a + s.b) / 3.0;
    let shift = base.theta(aa) - t_match;
    let tt = t_match + shift;
    let c = (s.b - s.a) / CONE_C * tt.powf(base.nu - 3.0);
    let asymptotic = AsymptoticProfile { c, shift, ..base };
    let e = asymptotic.sample(t_match);
    let derivative_jump = ((e.da - s.da) / s.da).abs().max(((e.db - s.db) / s.db).abs());
    Ok(AcProfile { tuning, numeric, asymptotic, t_match, derivative_jump })
}

impl AcProfile {
    pub fn shift(&self) -> f64 {
        self.asymptotic.shift
    }

    /// `(b − a, ȧ − ḃ)`, taken from the mode amplitude on the conical end where
    /// the difference of the two samples is below the resolution of `a`.
    pub fn gap(&self, t: f64) -> (f64, f64) {
        if t <= self.t_match {
            let s = self.numeric.sample(t);
            return (s.b - s.a, s.da - s.db);
        }
        let z = &self.asymptotic;
        let tt = t + z.shift;
        let d = z.c * CONE_C * tt.powf(3.0 - z.nu);
        (d, (z.nu - 3.0) * d / tt)
    }

    /// Inequality audit with the gap-sensitive entries computed from [`AcProfile::gap`].
    pub fn audit(&self, t: f64) -> InequalityAudit {
        let (d, dd) = self.gap(t);
        audit_with_gap(&self.sample(t), d, dd, self.params())
    }

    /// Least-squares slope of `log(54/√3·T⁻³(b − a))` against `log T`, `T = t + shift`,
    /// over the numerical part of the profile (`t ∈ [t_lo, t_hi]`); returns `−slope`.
    pub fn decay_exponent(&self, t_lo: f64, t_hi: f64, samples: usize) -> f64 {
        let t_hi = t_hi.min(self.t_match);
        let s = self.shift();
        let pts: Vec<(f64, f64)> = (0..samples)
            .map(|i| {
                let t = t_lo * (t_hi / t_lo).powf(i as f64 / (samples - 1) as f64);
                let x = self.numeric.sample(t);
                let tt = t + s;
                (tt.ln(), ((x.b - x.a) / (CONE_C * tt.powi(3))).ln())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    }
}

impl MetricProfile for AcProfile {
    fn params(&self) -> &MetricParams {
        self.numeric.params()
    }

    fn sample(&self, t: f64) -> MetricSample {
        if t <= self.t_match {
            self.numeric.sample(t)
        } else {
            self.asymptotic.sample(t)
        }
    }

    fn validity(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.numeric.t0, self.t_match]
    }
}

/// Tune `β` on [`DEFAULT_BETA_BRACKET`] and assemble the AC profile.
pub fn tuned_ac_profile(params: MetricParams, tol: f64) -> Result<AcProfile> {
    let tuning = tune_beta_ac(params, DEFAULT_BETA_BRACKET, tol, &TuneOptions::default())?;
    build_ac_profile(params, tuning, &AcOptions::default())
}

/// `54/√3·t⁻³a` and `54/√3·t⁻³b` at `t` (raw time).
pub fn cone_scaled(s: &MetricSample) -> (f64, f64) {
    let c = CONE_C * s.t.powi(3);
    (s.a / c, s.b / c)
}

/// A sensible default bracket for β_ac at `r₀ = 1`, `m = n = 1`.
pub const DEFAULT_BETA_BRACKET: (f64, f64) = (1.0, 2.0);

#[cfg(test)]
mod tests {
    use super::*;

    fn p11() -> MetricParams {
        MetricParams::new(1, 1, 1.0, 1.2)
    }

    #[test]
    fn cone_values() {
        let c = cone_profile(p11());
        assert!((c.sample(1.0).a - 0.032_075_0).abs() < 1e-7);
        assert!((CONE_C - 3f64.sqrt() / 54.0).abs() < 1e-18);
        assert_eq!(c.sample(0.0).a, 0.0);
        assert_eq!(c.sample(2.0).a / 8.0, c.sample(1.0).a);
    }

    #[test]
    fn coefficient_arithmetic() {
        let p = MetricParams::new(1, 1, 1.0, 1.0);
        let s = MetricSample { t: 1.0, a: 1.0, b: 1.0, da: 1.0, db: 1.0 };
        let k = coefficients(&s, &p, Which::M);
        assert_eq!((k.phi, k.psi, k.chi), (4.0, -4.0, 4.0));
        let s0 = MetricSample { t: 0.0, a: 0.0, b: 1.0, da: 1.0, db: 0.0 };
        let k = coefficients(&s0, &p, Which::M);
        assert_eq!((k.phi, k.psi, k.chi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn cone_solves_metric_equations() {
        let p = p11();
        let cone = cone_profile(MetricParams { r0: 1e-30, ..p });
        for t in [0.5, 1.0, 3.0, 10.0] {
            let s = cone.sample(t);
            let (dda, ddb) = hitchin_rhs([s.a, s.da, s.b, s.db], t, cone.params()).unwrap();
            let exact = 6.0 * CONE_C * t;
            assert!((dda - exact).abs() < 1e-10 * exact && (ddb - exact).abs() < 1e-10 * exact);
        }
        assert!(matches!(hitchin_rhs([1.0, 0.0, 1.0, 1.0], 1.0, &p), Err(Error::DegenerateFrame { .. })));
    }

    #[test]
    fn recursion_reproduces_printed_coefficients() {
        for beta in [0.7, 1.0, 1.33] {
            let p = MetricParams::new(1, 1, 1.0, beta);
            let (a, b) = near_orbit_series(p, 8).unwrap().ab_coefficients();
            let pr = printed_series(&p);
            assert!((a[1] - pr.a1).abs() < 1e-14);
            assert!((a[3] - pr.a3).abs() < 1e-12, "a3 {} vs {}", a[3], pr.a3);
            assert!((b[0] - pr.b0).abs() < 1e-14);
            assert!((b[2] - pr.b2).abs() < 1e-13);
            assert!((b[4] - pr.b4).abs() < 1e-12, "b4 {} vs {}", b[4], pr.b4);
            assert!(a.iter().step_by(2).all(|v| v.abs() < 1e-14), "a is odd");
            assert!(b.iter().skip(1).step_by(2).all(|v| v.abs() < 1e-14), "b is even");
        }
    }

    #[test]
    fn b4_for_unequal_weights() {
        // the printed 7 only agrees for m n = 1; the recursion gives 7 (mn)^{5/2}
        let p = MetricParams::new(1, 2, 1.0, 1.1);
        let (_, b) = near_orbit_series(p, 8).unwrap().ab_coefficients();
        let (m, n, r0, be) = (1.0, 2.0, 1.0, 1.1f64);
        let corrected = (m + n) * (7.0 * (m * n).powf(2.5) - 4.0 * (m + n) * be.powi(3)) / (96.0 * r0 * be.powi(5));
        assert!((b[4] - corrected).abs() < 1e-12 * corrected.abs().max(1.0), "{} vs {}", b[4], corrected);
        assert!((b[4] - printed_series(&p).b4).abs() > 1e-3);
    }

    #[test]
    fn printed_profile_limits() {
        assert!(matches!(near_orbit_printed(p11(), 6), Err(Error::SeriesOrderUnavailable(6))));
        let s = near_orbit_printed(p11(), 4).unwrap().sample(0.0);
        assert_eq!(s.b, 1.0);
        assert!((s.da - 1.2).abs() < 1e-15);
        let half = MetricParams::new(1, 1, 1.0, 0.5f64.powf(1.0 / 3.0));
        assert!(printed_series(&half).a3.abs() < 1e-15);
    }

    #[test]
    fn series_residual_shrinks() {
        let p = p11();
        let series = near_orbit_printed(p, 4).unwrap();
        let mut prev = f64::INFINITY;
        for t in [0.04, 0.02, 0.01] {
            let s = series.sample(t);
            let h = 1e-5 * t;
            let (sp, sm) = (series.sample(t + h), series.sample(t - h));
            let (dda, ddb) = hitchin_rhs([s.a, s.da, s.b, s.db], t, &p).unwrap();
            let r = ((sp.da - sm.da) / (2.0 * h) - dda).abs().max(((sp.db - sm.db) / (2.0 * h) - ddb).abs());
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn lemma_identities() {
        let p = MetricParams::new(1, 1, 1.3, 1.0);
        let r = p.r3();
        for (a, b) in [(0.3, 2.9), (1.7, 4.2), (5.0, 5.5)] {
            let s = MetricSample { t: 1.0, a, b, da: 1.0, db: 1.0 };
            let k = coefficients(&s, &p, Which::M);
            let lhs = k.phi + k.psi + 2.0 * k.chi;
            let rhs = (b + r).powi(2) * (b - r + 2.0 * a);
            assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
            let lhs = 8.0 * k.chi - 5.0 * (k.phi + k.psi);
            let rhs = (b + r).powi(2) * (8.0 * a - 5.0 * (b - r));
            assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
        }
    }

    #[test]
    fn asymptotic_backbone() {
        let p = p11();
        let z = asymptotic_series(p, 0.0, 12);
        // the γ_k of (1 + y)^{-1/2}(1 − y/3)^{-1/6}
        assert!((z.gammas[1] - (-0.5 + 1.0 / 18.0)).abs() < 1e-15);
        let s = z.sample(50.0);
        assert_eq!(s.a, s.b);
        let far = z.sample(1e4);
        assert!((far.a / (CONE_C * 1e12) - 1.0).abs() < 1e-3);
        // backbone solves the reduced equations
        let (dda, _) = hitchin_rhs([s.a, s.da, s.b, s.db], 50.0, &p).unwrap();
        let h = 1e-3;
        let fd = (z.sample(50.0 + h).da - z.sample(50.0 - h).da) / (2.0 * h);
        assert!((dda - fd).abs() < 1e-6 * dda.abs());
        assert!((nu_infinity() - 9.520_797_289_4).abs() < 1e-9);
    }

    #[test]
    fn metric_tensor_entries() {
        let p = p11();
        let s = MetricSample { t: 1.0, a: 1.1, b: 1.6, da: 0.9, db: 0.7 };
        let g = metric_tensor(&s, &p).unwrap();
        assert!((g[(1, 4)] + (s.b * s.b - 1.0) / (2.0 * s.da * s.db)).abs() < 1e-15);
        assert!(g.cholesky().is_some());
        assert!(metric_tensor(&MetricSample { db: 0.0, ..s }, &p).is_err());
    }
}
