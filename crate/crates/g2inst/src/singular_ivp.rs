//! Power-series solutions of singular initial value problems
//! `ẏ = M₋₁(y)/t + M(t, y)`, `y(0) = y₀`.
//!
//! Systems are written as `t·ẏ = N(t, y) = M₋₁(y) + t·M(t, y)` over [`Scalar`],
//! so the order-`h` right-hand side of the recursion is read off a jet
//! evaluation rather than nested finite differences.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};

pub trait SingularSystem: Sync {
    fn dim(&self) -> usize;

    /// `N(t, y) = t·ẏ`.
    fn rhs_t<S: Scalar>(&self, t: &S, y: &[S]) -> Vec<S>;

    fn m_minus1(&self, y: &[f64]) -> Vec<f64> {
        self.rhs_t(&0.0, y)
    }

    /// Exact `dM₋₁` when the system knows it in closed form.
    fn jacobian(&self, _y: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum JacobianMethod {
    /// Central differences, step `1e-6·(1 + |y₀|)`.
    #[default]
    FiniteDifference,
    /// Forward-mode jets on `M₋₁`: exact up to rounding.
    Automatic,
    /// The system's closed form; falls back to `Automatic`.
    Exact,
}

pub fn jacobian<P: SingularSystem>(sys: &P, y0: &[f64], method: JacobianMethod) -> DMatrix<f64> {
    let k = sys.dim();
    match method {
        JacobianMethod::Exact => {
            if let Some(j) = sys.jacobian(y0) {
                return j;
            }
            jacobian(sys, y0, JacobianMethod::Automatic)
        }
        JacobianMethod::Automatic => {
            let t = Jet::constant(0.0, 1);
            let mut jm = DMatrix::zeros(k, k);
            for i in 0..k {
                let y: Vec<Jet> = y0
                    .iter()
                    .enumerate()
                    .map(|(l, v)| Jet::from_coeffs(vec![*v, if l == i { 1.0 } else { 0.0 }]))
                    .collect();
                let col = sys.rhs_t(&t, &y);
                for (r, c) in col.iter().enumerate() {
                    jm[(r, i)] = c.coeff(1);
                }
            }
            jm
        }
        JacobianMethod::FiniteDifference => {
            let mut jm = DMatrix::zeros(k, k);
            for i in 0..k {
                let step = 1e-6 * (1.0 + y0[i].abs());
                let mut yp = y0.to_vec();
                let mut ym = y0.to_vec();
                yp[i] += step;
                ym[i] -= step;
                let fp = sys.m_minus1(&yp);
                let fm = sys.m_minus1(&ym);
                for r in 0..k {
                    jm[(r, i)] = (fp[r] - fm[r]) / (2.0 * step);
                }
            }
            jm
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub residual: f64,
    /// `(h, det(h·Id − dM₋₁(y₀)))` for `h = 1..=H`.
    pub determinants: Vec<(usize, f64)>,
    pub min_abs_det: f64,
    pub method: JacobianMethod,
}

#[derive(Clone, Debug)]
pub struct ConditionOptions {
    pub h_max: usize,
    pub method: JacobianMethod,
    pub residual_tol: f64,
    /// Relative threshold on `|det(h·Id − J)| / (h + ‖J‖)^k`.
    pub det_tol: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions { h_max: 20, method: JacobianMethod::FiniteDifference, residual_tol: 1e-10, det_tol: 1e-8 }
    }
}

/// Determinant by cofactor expansion for small matrices (no pivoting, so
/// structurally zero products stay exactly zero), LU beyond 4×4.
pub fn determinant(a: &DMatrix<f64>) -> f64 {
    let k = a.nrows();
    if k > 4 {
        return a.clone().determinant();
    }
    match k {
        0 => 1.0,
        1 => a[(0, 0)],
        _ => (0..k)
            .filter(|&c| a[(0, c)] != 0.0)
            .map(|c| {
                let minor = a.clone().remove_row(0).remove_column(c);
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, c)] * determinant(&minor)
            })
            .sum(),
    }
}

pub fn check_conditions<P: SingularSystem>(sys: &P, y0: &[f64], opts: &ConditionOptions) -> Result<ConditionReport> {
    let k = sys.dim();
    let m = sys.m_minus1(y0);
    let residual = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = 1.0 + y0.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(residual <= opts.residual_tol * scale) {
        return Err(Error::ConditionViolated(format!("|M₋₁(y₀)| = {residual:e}")));
    }
    let j = jacobian(sys, y0, opts.method);
    let jn = j.norm();
    let mut dets = Vec::with_capacity(opts.h_max);
    let mut failing = Vec::new();
    for h in 1..=opts.h_max {
        let a = DMatrix::identity(k, k) * h as f64 - &j;
        let d = determinant(&a);
        if d.abs() <= opts.det_tol * (h as f64 + jn).powi(k as i32) {
            failing.push(h);
        }
        dets.push((h, d));
    }
    if !failing.is_empty() {
        return Err(Error::ConditionViolated(format!("h·Id − dM₋₁(y₀) is singular for h = {failing:?}")));
    }
    let min_abs_det = dets.iter().map(|(_, d)| d.abs()).fold(f64::INFINITY, f64::min);
    Ok(ConditionReport { residual, determinants: dets, min_abs_det, method: opts.method })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
    Zero,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesSolution {
    /// `coeffs[h]` is the vector multiplying `t^h`.
    pub coeffs: Vec<Vec<f64>>,
    /// Root-test estimate of the convergence radius.
    pub radius: f64,
    pub parity: Vec<Parity>,
}

impl SeriesSolution {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[i]).collect()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for c in self.coeffs.iter().rev() {
            for (o, ci) in out.iter_mut().zip(c) {
                *o = *o * t + ci;
            }
        }
        out
    }

    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (h, c) in self.coeffs.iter().enumerate().skip(1).rev() {
            for (o, ci) in out.iter_mut().zip(c) {
                *o = *o * t + h as f64 * ci;
            }
        }
        out
    }

    /// Compose each component with a jet argument.
    pub fn eval_jet(&self, t: &Jet) -> Vec<Jet> {
        (0..self.dim()).map(|i| Jet::compose_poly(&self.component(i), t)).collect()
    }

    /// Size of the last two retained terms at `t` (two, so parity gaps do not hide the tail).
    pub fn truncation_estimate(&self, t: f64) -> f64 {
        let n = self.order();
        let norm = |c: &Vec<f64>| c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut e = norm(&self.coeffs[n]) * t.powi(n as i32);
        if n >= 1 {
            e += norm(&self.coeffs[n - 1]) * t.powi(n as i32 - 1);
        }
        if n == 0 {
            0.0
        } else {
            e
        }
    }

    /// State at `t0` for seeding a regular integrator.
    pub fn handoff(&self, t0: f64, tol: f64) -> Result<Vec<f64>> {
        let est = self.truncation_estimate(t0);
        if !(est <= tol) || t0 >= self.radius {
            return Err(Error::OutOfTrust { t0, estimate: est });
        }
        Ok(self.eval(t0))
    }

    /// `{order → coefficient vector}`.
    pub fn dump(&self) -> Vec<(usize, Vec<f64>)> {
        self.coeffs.iter().cloned().enumerate().collect()
    }
}

fn parity_of(c: &[f64]) -> Parity {
    let scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Parity::Zero;
    }
    let tol = 1e-12 * scale;
    let odd_zero = c.iter().skip(1).step_by(2).all(|v| v.abs() <= tol);
    let even_zero = c.iter().step_by(2).all(|v| v.abs() <= tol);
    match (odd_zero, even_zero) {
        (true, _) => Parity::Even,
        (false, true) => Parity::Odd,
        _ => Parity::Mixed,
    }
}

fn root_test_radius(coeffs: &[Vec<f64>]) -> f64 {
    let n = coeffs.len() - 1;
    let mut worst: f64 = 0.0;
    for (h, c) in coeffs.iter().enumerate().skip((n / 2).max(1)) {
        let m = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if m > 0.0 {
            worst = worst.max(m.powf(1.0 / h as f64));
        }
    }
    if worst == 0.0 {
        f64::INFINITY
    } else {
        1.0 / worst
    }
}

/// Coefficients `c[0..=N]` from `(h·Id − dM₋₁(y₀)) c_h = [N(t, y_{<h})]_h`.
pub fn series_coefficients<P: SingularSystem>(sys: &P, y0: &[f64], order: usize) -> Result<SeriesSolution> {
    let k = sys.dim();
    let mut coeffs = vec![y0.to_vec()];
    if order > 0 {
        let j = jacobian(sys, y0, JacobianMethod::Exact);
        for h in 1..=order {
            let t = Jet::variable(0.0, h);
            let y: Vec<Jet> = (0..k)
                .map(|i| {
                    let mut c: Vec<f64> = coeffs.iter().map(|v| v[i]).collect();
                    c.push(0.0);
                    Jet::from_coeffs(c)
                })
                .collect();
            let n = sys.rhs_t(&t, &y);
            let rhs = DVector::from_iterator(k, n.iter().map(|v| v.coeff(h)));
            let a = DMatrix::identity(k, k) * h as f64 - &j;
            let lu = a.lu();
            let sol = lu.solve(&rhs).ok_or(Error::SingularRecursion(h))?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularRecursion(h));
            }
            coeffs.push(sol.iter().copied().collect());
        }
    }
    let parity = (0..k).map(|i| parity_of(&coeffs.iter().map(|c| c[i]).collect::<Vec<_>>())).collect();
    let radius = root_test_radius(&coeffs);
    Ok(SeriesSolution { coeffs, radius, parity })
}

/// `‖t·ẏ_series − N(t, y_series)‖_∞` at `t`.
pub fn series_residual<P: SingularSystem>(sys: &P, sol: &SeriesSolution, t: f64) -> f64 {
    let y = sol.eval(t);
    let dy = sol.eval_derivative(t);
    let n = sys.rhs_t(&t, &y);
    dy.iter().zip(&n).map(|(d, v)| (t * d - v).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `ẏ = y/t − y` verbatim: resonant at h = 1, every `C t e^{−t}` solves it.
    struct LinearRaw;

    impl SingularSystem for LinearRaw {
        fn dim(&self) -> usize {
            1
        }
        fn rhs_t<S: Scalar>(&self, t: &S, y: &[S]) -> Vec<S> {
            vec![y[0].clone() - t.clone() * y[0].clone()]
        }
    }

    /// The same problem for `u = y/t`: `t·u̇ = −t·u`, `u(0) = C`.
    struct Linear;

    impl SingularSystem for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn rhs_t<S: Scalar>(&self, t: &S, y: &[S]) -> Vec<S> {
            vec![-(t.clone() * y[0].clone())]
        }
    }

    /// Eigenvalue exactly 3 in dM₋₁.
    struct Rigged;

    impl SingularSystem for Rigged {
        fn dim(&self) -> usize {
            1
        }
        fn rhs_t<S: Scalar>(&self, _t: &S, y: &[S]) -> Vec<S> {
            vec![y[0].clone() * 3.0]
        }
    }

    struct Regular;

    impl SingularSystem for Regular {
        fn dim(&self) -> usize {
            1
        }
        // ẏ = y
        fn rhs_t<S: Scalar>(&self, t: &S, y: &[S]) -> Vec<S> {
            vec![t.clone() * y[0].clone()]
        }
    }

    #[test]
    fn linear_series_matches_closed_form() {
        let e = check_conditions(&LinearRaw, &[0.0], &ConditionOptions::default()).unwrap_err();
        assert!(matches!(e, Error::ConditionViolated(ref m) if m.contains("[1]")));
        // y = t·u = C t e^{−t}
        let s = series_coefficients(&Linear, &[2.0], 12).unwrap();
        let mut fact = 1.0;
        for h in 0..=12 {
            if h > 0 {
                fact *= h as f64;
            }
            let expect = 2.0 * (-1f64).powi(h as i32) / fact;
            assert!((s.coeffs[h][0] - expect).abs() < 1e-12, "order {h}");
        }
    }

    #[test]
    fn zero_order_is_constant() {
        let s = series_coefficients(&Regular, &[1.5], 0).unwrap();
        assert_eq!(s.coeffs, vec![vec![1.5]]);
        assert_eq!(s.eval(0.7), vec![1.5]);
    }

    #[test]
    fn regular_limit_passes_conditions() {
        let r = check_conditions(&Regular, &[1.0], &ConditionOptions::default()).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!(r.min_abs_det >= 1.0 - 1e-12);
    }

    #[test]
    fn rigged_resonance_detected() {
        let e = check_conditions(&Rigged, &[0.0], &ConditionOptions::default()).unwrap_err();
        match e {
            Error::ConditionViolated(msg) => assert!(msg.contains("[3]"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exp_series_and_handoff() {
        let s = series_coefficients(&Regular, &[1.0], 16).unwrap();
        let y = s.handoff(0.1, 1e-12).unwrap();
        assert!((y[0] - 0.1f64.exp()).abs() < 1e-15);
        assert!(series_residual(&Regular, &s, 0.1) < 1e-16);
        assert!(matches!(s.handoff(5.0, 1e-12), Err(Error::OutOfTrust { .. })));
        assert_eq!(s.parity[0], Parity::Mixed);
    }
}
