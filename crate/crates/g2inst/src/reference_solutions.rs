//! Closed-form solutions used as oracles: flat connections, the abelian
//! family on `P_j`, and the limit state on the cone.

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instanton_system::reduced_rhs;
use crate::jet::Jet;
use crate::metric_profiles::{near_orbit_series, MetricParams, MetricProfile};
use crate::su2_invariant_algebra::ConnectionState;

/// `(1, 0, 1, ½)`, its sign-gauge image `(−1, 0, 1, ½)`, and the canonical state `(0, 0, j, 0)`.
pub fn flat_connections(j: i32) -> Vec<ConnectionState> {
    vec![
        ConnectionState::new(1.0, 0.0, 1.0, 0.5),
        ConnectionState::new(-1.0, 0.0, 1.0, 0.5),
        ConnectionState::new(0.0, 0.0, j as f64, 0.0),
    ]
}

/// `z₊ = (⅓, ⅓, 0, ⅓)`.
pub fn limit_state() -> ConnectionState {
    let third = 1.0 / 3.0;
    ConnectionState::new(third, third, 0.0, third)
}

/// Abelian instantons `(0, 0, g, h)` on `P_j` over `M(1,1)`:
/// `g = 4jR²/(b+R)²`, `h = h₀·exp ∫₀ᵗ 2ḃ(b−R)/(4a²−(b−R)²)`.
pub struct AbelianSolution<'a> {
    pub j: i32,
    pub h0: f64,
    profile: &'a dyn MetricProfile,
    /// `∫₀ᵗ` on `[0, t_head]` as a polynomial in `t`.
    head: Vec<f64>,
    t_head: f64,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AbelianOptions {
    pub t_max: f64,
    pub per_decade: usize,
    pub quad_tol: f64,
    pub head_order: usize,
}

impl Default for AbelianOptions {
    fn default() -> Self {
        AbelianOptions { t_max: 1e6, per_decade: 24, quad_tol: 1e-15, head_order: 16 }
    }
}

pub fn abelian_solution(j: i32, h0: f64, profile: &dyn MetricProfile) -> Result<AbelianSolution<'_>> {
    let r0 = profile.params().r0;
    let opts = AbelianOptions { t_max: (1e6 * r0).min(profile.validity().1), ..Default::default() };
    abelian_solution_with(j, h0, profile, &opts)
}

/// `2ḃ(b−R)/(4a²−(b−R)²)` at `t`; `None` when the denominator is not positive.
fn integrand(profile: &dyn MetricProfile, t: f64) -> Option<f64> {
    let r = profile.params().r3();
    let s = profile.sample(t);
    let d = s.b - r;
    let den = 4.0 * s.a * s.a - d * d;
    if !(den > 0.0) {
        return None;
    }
    Some(2.0 * s.db * d / den)
}

pub fn abelian_solution_with<'a>(j: i32, h0: f64, profile: &'a dyn MetricProfile, opts: &AbelianOptions) -> Result<AbelianSolution<'a>> {
    let params: MetricParams = *profile.params();
    params.validate()?;
    if params.m != 1 || params.n != 1 || j % 2 == 0 {
        return Err(Error::InvalidParams(format!("abelian family needs M(1,1) and odd j, got (m, n, j) = ({}, {}, {j})", params.m, params.n)));
    }
    // near t = 0: a = tp, b − R = t²s, ḃ = tw, so the integrand is 2tws/(4p² − t²s²)
    let series = near_orbit_series(params, opts.head_order)?;
    let sol = series.series().expect("recursive series");
    let tj = Jet::variable(0.0, opts.head_order);
    let y = sol.eval_jet(&tj);
    let (p, s, w) = (y[0].clone(), y[2].clone(), y[3].clone());
    let num = tj.clone() * w * s.clone() * 2.0;
    let den = p.clone() * p * 4.0 - tj.clone() * tj * s.clone() * s;
    let f = num / den;
    let mut head = vec![0.0];
    head.extend(f.coeffs().iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
    let t_head = (0.01 * params.r0).min(0.25 * sol.radius);

    let mut nodes = vec![t_head];
    let mut cuts: Vec<f64> = profile.breakpoints().into_iter().filter(|b| *b > t_head && *b < opts.t_max).collect();
    let decades = (opts.t_max / t_head).log10();
    let n = (decades * opts.per_decade as f64).ceil().max(1.0) as usize;
    cuts.extend((1..=n).map(|i| t_head * (opts.t_max / t_head).powf(i as f64 / n as f64)));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    nodes.extend(cuts);

    let mut out = AbelianSolution { j, h0, profile, head, t_head, nodes: Vec::new(), cumulative: Vec::new() };
    let mut acc = out.head_integral(t_head);
    let mut cumulative = vec![acc];
    for w in nodes.windows(2) {
        acc += out.panel(w[0], w[1], opts.quad_tol)?;
        cumulative.push(acc);
    }
    out.nodes = nodes;
    out.cumulative = cumulative;
    Ok(out)
}

impl AbelianSolution<'_> {
    fn head_integral(&self, t: f64) -> f64 {
        self.head.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn panel(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        let bad = Cell::new(None);
        let out = quadrature::double_exponential::integrate(
            |t| match integrand(self.profile, t) {
                Some(v) => v,
                None => {
                    bad.set(Some(t));
                    f64::NAN
                }
            },
            a,
            b,
            tol,
        );
        if let Some(t) = bad.get() {
            return Err(Error::DenominatorVanishes(t));
        }
        Ok(out.integral)
    }

    /// `∫₀ᵗ 2ḃ(b−R)/(4a²−(b−R)²)`.
    pub fn exponent(&self, t: f64) -> Result<f64> {
        if t <= self.t_head {
            return Ok(self.head_integral(t));
        }
        let i = self.nodes.partition_point(|x| *x <= t) - 1;
        let base = self.cumulative[i];
        let from = self.nodes[i];
        if t == from {
            return Ok(base);
        }
        Ok(base + self.panel(from, t, 1e-15)?)
    }

    pub fn g(&self, t: f64) -> f64 {
        let p = self.profile.params();
        let r = p.r3();
        let b = self.profile.sample(t).b;
        4.0 * self.j as f64 * r * r / (b + r).powi(2)
    }

    pub fn h(&self, t: f64) -> Result<f64> {
        if self.h0 == 0.0 {
            return Ok(0.0);
        }
        Ok(self.h0 * self.exponent(t)?.exp())
    }

    pub fn state(&self, t: f64) -> Result<ConnectionState> {
        Ok(ConnectionState::new(0.0, 0.0, self.g(t), self.h(t)?))
    }

    /// `ż` from the closed forms.
    pub fn derivative(&self, t: f64) -> Result<ConnectionState> {
        let r = self.profile.params().r3();
        let s = self.profile.sample(t);
        let dg = -8.0 * self.j as f64 * r * r * s.db / (s.b + r).powi(3);
        let dh = if self.h0 == 0.0 {
            0.0
        } else {
            self.h(t)? * integrand(self.profile, t).ok_or(Error::DenominatorVanishes(t))?
        };
        Ok(ConnectionState::new(0.0, 0.0, dg, dh))
    }

    /// `‖ż − reduced_rhs(z)‖_∞` at `t`, relative to `1 + |ż|`.
    pub fn residual(&self, t: f64) -> Result<f64> {
        let z = self.state(t)?;
        let lhs = self.derivative(t)?;
        let rhs = reduced_rhs(&z, &self.profile.sample(t), self.profile.params())?;
        let (a, b) = (lhs.to_array(), rhs.to_array());
        let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale)
    }

    pub fn t_max(&self) -> f64 {
        *self.nodes.last().expect("at least the head node")
    }
}
