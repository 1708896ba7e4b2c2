//! su(2)-valued coefficients of SU(2)²-invariant connections.
//!
//! Structure constants are normalised as `[E_i, E_j] = E_k` for cyclic
//! `(i, j, k)`; the raw 2×2 matrix commutators differ from this by a factor 2.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric_profiles::{MetricParams, MetricSample};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Su2Element {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Su2Element {
    pub const ZERO: Su2Element = Su2Element { x1: 0.0, x2: 0.0, x3: 0.0 };
    pub const E1: Su2Element = Su2Element { x1: 1.0, x2: 0.0, x3: 0.0 };
    pub const E2: Su2Element = Su2Element { x1: 0.0, x2: 1.0, x3: 0.0 };
    pub const E3: Su2Element = Su2Element { x1: 0.0, x2: 0.0, x3: 1.0 };

    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Su2Element { x1, x2, x3 }
    }

    pub fn norm(&self) -> f64 {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }
}

impl Add for Su2Element {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Su2Element::new(self.x1 + o.x1, self.x2 + o.x2, self.x3 + o.x3)
    }
}

impl Sub for Su2Element {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Su2Element::new(self.x1 - o.x1, self.x2 - o.x2, self.x3 - o.x3)
    }
}

impl Neg for Su2Element {
    type Output = Self;
    fn neg(self) -> Self {
        Su2Element::new(-self.x1, -self.x2, -self.x3)
    }
}

impl Mul<Su2Element> for f64 {
    type Output = Su2Element;
    fn mul(self, x: Su2Element) -> Su2Element {
        Su2Element::new(self * x.x1, self * x.x2, self * x.x3)
    }
}

/// Lie bracket; with this normalisation it is the cross product.
pub fn bracket(x: Su2Element, y: Su2Element) -> Su2Element {
    Su2Element::new(x.x2 * y.x3 - x.x3 * y.x2, x.x3 * y.x1 - x.x1 * y.x3, x.x1 * y.x2 - x.x2 * y.x1)
}

/// Coefficients of `e_1, e_2, e_3` (`alpha`) and `e_1', e_2', e_3'` (`alpha_p`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantConnection {
    pub alpha: [Su2Element; 3],
    pub alpha_p: [Su2Element; 3],
}

impl InvariantConnection {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Componentwise map `E_1 → −E_1, E_2 → −E_2`.
    pub fn conjugate_by_rotation(&self) -> Self {
        let r = |x: Su2Element| Su2Element::new(-x.x1, -x.x2, x.x3);
        InvariantConnection { alpha: self.alpha.map(r), alpha_p: self.alpha_p.map(r) }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.alpha.iter().chain(&self.alpha_p).flat_map(|x| x.to_array()).collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let e = |i: usize| Su2Element::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        InvariantConnection { alpha: [e(0), e(1), e(2)], alpha_p: [e(3), e(4), e(5)] }
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.to_vec().iter().zip(o.to_vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `(f, f', g, h)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConnectionState {
    pub f: f64,
    pub fp: f64,
    pub g: f64,
    pub h: f64,
}

impl ConnectionState {
    pub fn new(f: f64, fp: f64, g: f64, h: f64) -> Self {
        ConnectionState { f, fp, g, h }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.f, self.fp, self.g, self.h]
    }

    pub fn from_array(z: [f64; 4]) -> Self {
        ConnectionState::new(z[0], z[1], z[2], z[3])
    }

    pub fn from_slice(z: &[f64]) -> Self {
        ConnectionState::new(z[0], z[1], z[2], z[3])
    }
}

pub fn embed_reduced(z: ConnectionState) -> InvariantConnection {
    use Su2Element as E;
    InvariantConnection {
        alpha: [z.f * E::E1, z.f * E::E2, (z.g / 2.0 + z.h) * E::E3],
        alpha_p: [z.fp * E::E1, z.fp * E::E2, (z.h - z.g / 2.0) * E::E3],
    }
}

/// Index of a spatial coframe element: 0..3 unprimed, 3..6 primed.
pub type FormIndex = (usize, usize);

/// The fifteen components of `F_α`, keyed by ordered pairs of coframe indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureComponents {
    pub components: Vec<(FormIndex, Su2Element)>,
}

impl CurvatureComponents {
    pub fn get(&self, i: usize, j: usize) -> Su2Element {
        for ((a, b), v) in &self.components {
            if (*a, *b) == (i, j) {
                return *v;
            }
            if (*a, *b) == (j, i) {
                return -*v;
            }
        }
        Su2Element::ZERO
    }

    pub fn max_norm(&self) -> f64 {
        self.components.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max)
    }
}

pub fn curvature(c: &InvariantConnection) -> CurvatureComponents {
    let (a, ap) = (&c.alpha, &c.alpha_p);
    let mut out = Vec::with_capacity(15);
    for i in 0..3 {
        out.push(((i, i + 3), bracket(a[i], ap[i])));
    }
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        out.push(((j, k), bracket(a[j], a[k]) - a[i]));
        out.push(((j + 3, k + 3), bracket(ap[j], ap[k]) - ap[i]));
        out.push(((j, k + 3), bracket(a[j], ap[k])));
        out.push(((j + 3, k), bracket(ap[j], a[k])));
    }
    CurvatureComponents { components: out }
}

pub fn constraint_residual(c: &InvariantConnection, s: &MetricSample) -> f64 {
    let (a, ap) = (&c.alpha, &c.alpha_p);
    let v = (s.da * s.db) * (bracket(a[0], ap[0]) + bracket(a[1], ap[1])) + (s.da * s.da) * bracket(a[2], ap[2]);
    v.norm()
}

/// The metric `dt² + g_t` in the coframe `(dt, e_1, e_2, e_3, e_1', e_2', e_3')`.
pub fn metric_matrix(s: &MetricSample, p: &MetricParams) -> SMatrix<f64, 7, 7> {
    let r = p.r0.powi(3);
    let (m2, n2) = ((p.m * p.m) as f64, (p.n * p.n) as f64);
    let (a, b, da, db) = (s.a, s.b, s.da, s.db);
    let mut g = SMatrix::<f64, 7, 7>::zeros();
    g[(0, 0)] = 1.0;
    let d11 = a * (b + m2 * r) / (da * db);
    let d11p = a * (b + n2 * r) / (da * db);
    let cross = -(b * b - m2 * n2 * r * r) / (2.0 * da * db);
    for i in 1..=2 {
        g[(i, i)] = d11;
        g[(i + 3, i + 3)] = d11p;
        g[(i, i + 3)] = cross;
        g[(i + 3, i)] = cross;
    }
    g[(3, 3)] = (a * a + b * m2 * r) / (da * da);
    g[(6, 6)] = (a * a + b * n2 * r) / (da * da);
    let c3 = (b * b - 2.0 * a * a + m2 * n2 * r * r) / (2.0 * da * da);
    g[(3, 6)] = c3;
    g[(6, 3)] = c3;
    g
}

/// Squared pointwise norm `|F_A|²` of `F_A = dt ∧ α̇ + F_α`.
pub fn curvature_norm(c: &InvariantConnection, cdot: &InvariantConnection, s: &MetricSample, p: &MetricParams) -> Result<f64> {
    let g = metric_matrix(s, p);
    let chol = g.cholesky().ok_or(Error::NonPositiveMetric(s.t))?;
    let ginv = chol.inverse();
    let fa = curvature(c);
    let mut total = 0.0;
    for comp in 0..3 {
        let pick = |x: Su2Element| x.to_array()[comp];
        let mut f = SMatrix::<f64, 7, 7>::zeros();
        for (i, x) in cdot.alpha.iter().chain(&cdot.alpha_p).enumerate() {
            f[(0, i + 1)] = pick(*x);
            f[(i + 1, 0)] = -pick(*x);
        }
        for ((i, j), x) in &fa.components {
            f[(i + 1, j + 1)] += pick(*x);
            f[(j + 1, i + 1)] -= pick(*x);
        }
        let prod = ginv * f * ginv * f.transpose();
        total += 0.5 * prod.trace();
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_profiles::MetricParams;
    use proptest::prelude::*;

    fn el() -> impl Strategy<Value = Su2Element> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| Su2Element::new(a, b, c))
    }

    #[test]
    fn basis_brackets() {
        assert_eq!(bracket(Su2Element::E1, Su2Element::E2), Su2Element::E3);
        assert_eq!(bracket(Su2Element::E2, Su2Element::E3), Su2Element::E1);
        assert_eq!(bracket(Su2Element::E3, Su2Element::E1), Su2Element::E2);
        assert_eq!(bracket(Su2Element::E1, Su2Element::E1), Su2Element::ZERO);
        assert_eq!(bracket(Su2Element::E2, Su2Element::E1), -Su2Element::E3);
    }

    #[test]
    fn embeddings() {
        let c = embed_reduced(ConnectionState::new(1.0, 0.0, 1.0, 0.5));
        assert_eq!(c.alpha, [Su2Element::E1, Su2Element::E2, Su2Element::E3]);
        assert_eq!(c.alpha_p, [Su2Element::ZERO; 3]);
        assert_eq!(embed_reduced(ConnectionState::default()), InvariantConnection::zero());
        let c = embed_reduced(ConnectionState::new(0.0, 0.0, 3.0, 0.0));
        assert_eq!(c.alpha[2], 1.5 * Su2Element::E3);
        assert_eq!(c.alpha_p[2], -1.5 * Su2Element::E3);
    }

    #[test]
    fn flat_and_abelian_curvature() {
        let c = embed_reduced(ConnectionState::new(1.0, 0.0, 1.0, 0.5));
        assert_eq!(curvature(&c).max_norm(), 0.0);
        assert_eq!(curvature(&InvariantConnection::zero()).max_norm(), 0.0);
        let k = curvature(&embed_reduced(ConnectionState::new(0.0, 0.0, 1.0, 0.0)));
        assert_eq!(k.get(0, 1), -0.5 * Su2Element::E3);
        assert_eq!(k.get(3, 4), 0.5 * Su2Element::E3);
        let others = k.components.iter().filter(|(ij, _)| *ij != (0, 1) && *ij != (3, 4));
        assert!(others.into_iter().all(|(_, v)| v.norm() == 0.0));
    }

    #[test]
    fn constraint_single_bracket() {
        let mut c = InvariantConnection::zero();
        c.alpha[0] = Su2Element::E1;
        c.alpha_p[0] = Su2Element::E2;
        let s = MetricSample { t: 1.0, a: 1.0, b: 1.0, da: 1.0, db: 1.0 };
        assert_eq!(constraint_residual(&c, &s), 1.0);
    }

    #[test]
    fn curvature_norm_vanishes_on_flat() {
        let p = MetricParams::new(1, 1, 1.0, 1.0);
        let s = MetricSample { t: 1.0, a: 2.0, b: 2.5, da: 1.2, db: 1.1 };
        let c = embed_reduced(ConnectionState::new(1.0, 0.0, 1.0, 0.5));
        assert!(curvature_norm(&c, &InvariantConnection::zero(), &s, &p).unwrap() < 1e-28);
        assert_eq!(curvature_norm(&InvariantConnection::zero(), &InvariantConnection::zero(), &s, &p).unwrap(), 0.0);
        let bad = MetricSample { da: -1.0, ..s };
        assert!(matches!(curvature_norm(&c, &c, &bad, &p), Err(Error::NonPositiveMetric(_))));
    }

    proptest! {
        #[test]
        fn antisymmetry_and_jacobi(x in el(), y in el(), z in el()) {
            prop_assert!((bracket(x, y) + bracket(y, x)).norm() < 1e-12);
            let j = bracket(x, bracket(y, z)) + bracket(y, bracket(z, x)) + bracket(z, bracket(x, y));
            prop_assert!(j.norm() < 1e-12);
        }

        #[test]
        fn reduced_ansatz_closure(f in -3.0..3.0f64, fp in -3.0..3.0f64, g in -3.0..3.0f64, h in -3.0..3.0f64) {
            let z = ConnectionState::new(f, fp, g, h);
            let c = embed_reduced(z);
            let k = curvature(&c);
            // e_ii' and e_12-type components point along a single basis element
            for ((i, j), v) in &k.components {
                let axes = [v.x1.abs() > 1e-12, v.x2.abs() > 1e-12, v.x3.abs() > 1e-12];
                prop_assert!(axes.iter().filter(|b| **b).count() <= 1, "component {:?} = {:?}", (i, j), v);
            }
            let s = MetricSample { t: 1.0, a: 1.3, b: 1.7, da: 0.9, db: 1.4 };
            prop_assert!(constraint_residual(&c, &s) < 1e-12);
        }

        #[test]
        fn gauge_mirror(f in -3.0..3.0f64, fp in -3.0..3.0f64, g in -3.0..3.0f64, h in -3.0..3.0f64) {
            let k = curvature(&embed_reduced(ConnectionState::new(f, fp, g, h)));
            let km = curvature(&embed_reduced(ConnectionState::new(-f, -fp, g, h)));
            for ((ij, v), (ij2, w)) in k.components.iter().zip(&km.components) {
                prop_assert_eq!(ij, ij2);
                let rv = Su2Element::new(-v.x1, -v.x2, v.x3);
                prop_assert!((rv - *w).norm() < 1e-12);
            }
        }
    }
}
