//! Verner's efficient 6(5) Runge–Kutta pair with a continuous extension.
//!
//! Only what the shooting and tuning loops need: forward integration, an
//! observer that may stop the run after any accepted step, and optional dense
//! output (value and derivative) between accepted steps.

const C: [f64; 9] = [0.0, 0.06, 9.593_333_333_333_333e-2, 0.1439, 0.4973, 0.9725, 0.9995, 1.0, 1.0];

const A: [[f64; 8]; 9] = [
    [0.0; 8],
    [0.06, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.923_996_296_296_296_2e-2, 7.669_337_037_037_037e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.35975e-1, 0.0, 0.107925, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.318_683_415_233_148_4, 0.0, -5.042_058_063_628_562, 4.220_674_648_395_414, 0.0, 0.0, 0.0, 0.0],
    [-41.872_591_664_327_516, 0.0, 159.432_562_163_137_5, -122.119_213_565_010_03, 5.531_743_066_200_054, 0.0, 0.0, 0.0],
    [
        -54.430_156_935_316_504,
        0.0,
        207.067_251_365_018_48,
        -158.610_813_784_59,
        6.991_816_585_950_242,
        -1.859_723_106_220_323_4e-2,
        0.0,
        0.0,
    ],
    [
        -54.663_741_787_281_98,
        0.0,
        207.952_806_255_389_36,
        -159.288_957_474_499_5,
        7.018_743_740_796_944,
        -1.833_878_590_504_572_2e-2,
        -5.119_484_997_882_099e-4,
        0.0,
    ],
    [
        3.438_957_868_357_036e-2,
        0.0,
        0.0,
        0.258_262_455_563_350_3,
        0.420_937_118_967_353_7,
        4.405_396_469_669_31,
        -176.483_119_024_298_65,
        172.364_133_401_415_07,
    ],
];

const B6: [f64; 9] = [
    3.438_957_868_357_036e-2,
    0.0,
    0.0,
    0.258_262_455_563_350_3,
    0.420_937_118_967_353_7,
    4.405_396_469_669_31,
    -176.483_119_024_298_65,
    172.364_133_401_415_07,
    0.0,
];

const B5: [f64; 9] = [
    4.909_967_648_382_49e-2,
    0.0,
    0.0,
    0.225_111_222_951_652_42,
    0.469_468_225_302_956_2,
    0.806_579_224_998_886_8,
    0.0,
    -0.607_119_489_177_796,
    5.686_113_944_047_569_6e-2,
];

const A_DENSE: [f64; 9] = [
    1.652_415_901_357_280_6e-2,
    0.0,
    0.0,
    0.305_312_818_751_417_9,
    0.207_120_093_820_197_9,
    -1.293_879_140_655_123,
    57.119_884_115_881_49,
    -55.879_792_075_109_32,
    2.483_002_829_776_601_4e-2,
];

const B_DENSE: [[f64; 6]; 10] = [
    [1.0, -5.308_169_607_103_577, 10.181_680_448_958_68, -7.520_036_991_611_715, 0.934_048_536_863_116_1, 0.746_867_191_577_065],
    [0.0; 6],
    [0.0; 6],
    [0.0, 6.272_050_253_212_501, -16.026_181_474_677_46, 12.844_356_324_519_618, -1.148_794_504_476_759_1, -1.683_168_143_014_549_8],
    [0.0, 6.876_491_702_846_304, -24.635_767_260_846_333, 33.210_786_483_797_17, -17.494_615_282_636_44, 2.464_041_475_806_649_6],
    [0.0, -35.544_451_710_599_6, 165.701_617_019_024_2, -385.463_539_549_114_3, 442.432_413_701_570_17, -182.720_642_991_211_2],
    [0.0, 1_918.654_856_698_011_4, -9_268.121_508_966_042, 20_858.337_028_772_55, -22_645.827_671_584_81, 8_960.474_176_055_992],
    [0.0, -1_883.069_802_132_718_2, 9_101.025_187_200_634, -20_473.188_551_959_534, 22_209.765_551_256_532, -8_782.168_250_963_5],
    [0.0, 0.119_024_796_351_236_43, -0.125_026_967_050_393_76, 1.779_956_919_394_999_1, -4.660_932_123_043_763, 2.886_977_374_347_921],
    [0.0, -8.0, 32.0, -40.0, 16.0, 0.0],
];

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    pub dense: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-12, h0: None, h_max: f64::INFINITY, max_steps: 2_000_000, dense: false }
    }
}

impl OdeOptions {
    pub fn tol(rtol: f64, atol: f64) -> Self {
        OdeOptions { rtol, atol, ..Default::default() }
    }

    pub fn with_dense(mut self) -> Self {
        self.dense = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Completed,
    /// The observer asked to stop.
    Stopped,
    /// The right-hand side refused the state (returned `false`).
    RhsFailure(f64),
    NonFinite(f64),
    StepUnderflow(f64),
    MaxSteps(f64),
}

#[derive(Clone, Debug)]
struct Segment {
    t: f64,
    h: f64,
    y: Vec<f64>,
    k: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub status: Status,
    pub rhs_evals: usize,
    segments: Vec<Segment>,
}

impl Solution {
    pub fn last_t(&self) -> f64 {
        *self.t.last().expect("solution holds at least the initial point")
    }

    pub fn last_y(&self) -> &[f64] {
        self.y.last().expect("solution holds at least the initial point")
    }

    pub fn has_dense(&self) -> bool {
        !self.segments.is_empty()
    }

    fn segment(&self, t: f64) -> Option<&Segment> {
        if self.segments.is_empty() || t < self.t[0] || t > self.last_t() {
            return None;
        }
        let i = self.segments.partition_point(|s| s.t + s.h < t);
        self.segments.get(i.min(self.segments.len() - 1))
    }

    /// Dense value at `t`; `None` outside the integrated range or without dense output.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let s = self.segment(t)?;
        let th = (t - s.t) / s.h;
        let mut w = [0.0; 10];
        for (i, row) in B_DENSE.iter().enumerate() {
            let mut p = 0.0;
            for c in row.iter().rev() {
                p = (p + c) * th;
            }
            w[i] = p;
        }
        Some(combine(&s.y, s.h, &s.k, &w))
    }

    /// Derivative of the dense interpolant at `t`.
    pub fn eval_derivative(&self, t: f64) -> Option<Vec<f64>> {
        let s = self.segment(t)?;
        let th = (t - s.t) / s.h;
        let mut w = [0.0; 10];
        for (i, row) in B_DENSE.iter().enumerate() {
            let mut p = 0.0;
            for (j, c) in row.iter().enumerate().rev() {
                p = p * th + (j + 1) as f64 * c;
            }
            w[i] = p;
        }
        let zero = vec![0.0; s.y.len()];
        Some(combine(&zero, 1.0, &s.k, &w))
    }
}

fn combine(y: &[f64], h: f64, k: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (ki, wi) in k.iter().zip(w) {
        if *wi == 0.0 {
            continue;
        }
        for (o, kv) in out.iter_mut().zip(ki) {
            *o += h * wi * kv;
        }
    }
    out
}

fn err_norm(e: &[f64], y0: &[f64], y1: &[f64], o: &OdeOptions) -> f64 {
    let s: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(ei, (a, b))| {
            let sc = o.atol + o.rtol * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (s / e.len() as f64).sqrt()
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 > t0`.
///
/// `f` writes the derivative and returns `false` when the state is outside its
/// domain. `observe(t, y)` runs after each accepted step and returns `false` to stop.
pub fn integrate<F, O>(mut f: F, t0: f64, y0: &[f64], t1: f64, opts: &OdeOptions, mut observe: O) -> Solution
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    O: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let mut sol = Solution { t: vec![t0], y: vec![y0.to_vec()], status: Status::Completed, rhs_evals: 0, segments: Vec::new() };
    if t1 <= t0 {
        return sol;
    }
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 10];
    let mut tmp = vec![0.0; n];

    if !f(t, &y, &mut k[0]) {
        sol.status = Status::RhsFailure(t);
        return sol;
    }
    sol.rhs_evals += 1;

    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            // Hairer–Wanner starting step.
            let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
            let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
            let d1 = (k[0].iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(t1 - t0);
            for i in 0..n {
                tmp[i] = y[i] + h0 * k[0][i];
            }
            let mut f1 = vec![0.0; n];
            let d2 = if f(t + h0, &tmp, &mut f1) {
                sol.rhs_evals += 1;
                (f1.iter().zip(&k[0]).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n as f64).sqrt() / h0
            } else {
                0.0
            };
            let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(1.0 / 6.0) };
            (100.0 * h0).min(h1)
        }
    };
    h = h.min(opts.h_max).min(t1 - t0);

    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut steps = 0usize;
    let mut rejected_last = false;

    while t < t1 {
        if steps >= opts.max_steps {
            sol.status = Status::MaxSteps(t);
            break;
        }
        let last = t + h >= t1 || (t1 - t - h) < 1e-12 * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }
        if h.abs() <= 1e-14 * t.abs().max(1e-300) {
            sol.status = Status::StepUnderflow(t);
            break;
        }

        let mut ok = true;
        for s in 1..9 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                tmp[i] = y[i] + h * acc;
            }
            if s == 8 {
                // the last stage row is the 6th-order weights (FSAL)
                y_new.copy_from_slice(&tmp);
            }
            let (_, tail) = k.split_at_mut(s);
            if !f(t + C[s] * h, &tmp, &mut tail[0]) {
                ok = false;
                break;
            }
            sol.rhs_evals += 1;
        }

        let (accept, fac) = if !ok || y_new.iter().any(|v| !v.is_finite()) {
            (false, 0.25)
        } else {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..9 {
                    acc += (B6[j] - B5[j]) * k[j][i];
                }
                err[i] = h * acc;
            }
            let en = err_norm(&err, &y, &y_new, opts);
            if !en.is_finite() {
                (false, 0.25)
            } else {
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-1.0 / 6.0)).clamp(0.2, 5.0) };
                (en <= 1.0, fac)
            }
        };

        if !accept {
            if !ok && h.abs() < 1e-12 * t.abs().max(1.0) {
                sol.status = Status::RhsFailure(t);
                break;
            }
            if ok && y_new.iter().any(|v| !v.is_finite()) && h.abs() < 1e-12 * t.abs().max(1.0) {
                sol.status = Status::NonFinite(t);
                break;
            }
            h *= fac.min(0.9);
            rejected_last = true;
            steps += 1;
            continue;
        }

        if opts.dense {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..9 {
                    acc += A_DENSE[j] * k[j][i];
                }
                tmp[i] = y[i] + h * acc;
            }
            let (_, tail) = k.split_at_mut(9);
            if f(t + 0.5 * h, &tmp, &mut tail[0]) {
                sol.rhs_evals += 1;
            } else {
                tail[0].iter_mut().for_each(|v| *v = f64::NAN);
            }
            sol.segments.push(Segment { t, h, y: y.clone(), k: k.clone() });
        }

        t = if last { t1 } else { t + h };
        y.copy_from_slice(&y_new);
        let fsal = k[8].clone();
        k[0] = fsal;
        sol.t.push(t);
        sol.y.push(y.clone());
        steps += 1;

        if !observe(t, &y) {
            sol.status = Status::Stopped;
            break;
        }
        let grow = if rejected_last { fac.min(1.0) } else { fac };
        rejected_last = false;
        h = (h * grow).min(opts.h_max);
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn osc(_t: f64, y: &[f64], d: &mut [f64]) -> bool {
        d[0] = y[1];
        d[1] = -y[0];
        true
    }

    #[test]
    fn quadrature_order_conditions() {
        for k in 1..=6 {
            let s6: f64 = B6.iter().zip(&C).map(|(b, c)| b * c.powi(k - 1)).sum();
            assert!((s6 - 1.0 / k as f64).abs() < 1e-13, "6th-order weights, k = {k}");
        }
        for k in 1..=5 {
            let s5: f64 = B5.iter().zip(&C).map(|(b, c)| b * c.powi(k - 1)).sum();
            assert!((s5 - 1.0 / k as f64).abs() < 1e-13, "5th-order weights, k = {k}");
        }
        for (i, row) in A.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - C[i]).abs() < 1e-12, "row sum {i}");
        }
    }

    #[test]
    fn adaptive_meets_tolerance_and_dense_matches() {
        let o = OdeOptions::tol(1e-12, 1e-14).with_dense();
        let s = integrate(osc, 0.0, &[1.0, 0.0], 10.0, &o, |_, _| true);
        assert_eq!(s.status, Status::Completed);
        assert!((s.last_y()[0] - 10f64.cos()).abs() < 1e-10);
        for i in 0..200 {
            let t = 0.05 * i as f64;
            let y = s.eval(t).unwrap();
            assert!((y[0] - t.cos()).abs() < 1e-9, "dense value at {t}");
            let d = s.eval_derivative(t).unwrap();
            assert!((d[0] + t.sin()).abs() < 1e-8, "dense derivative at {t}");
        }
    }

    #[test]
    fn observer_stops_and_rhs_failure_reported() {
        let o = OdeOptions::default();
        let s = integrate(|_, y, d| { d[0] = y[0]; true }, 0.0, &[1.0], 100.0, &o, |_, y| y[0] < 1e3);
        assert_eq!(s.status, Status::Stopped);
        let s = integrate(|t, _, d| { d[0] = 1.0; t < 1.0 }, 0.0, &[0.0], 2.0, &o, |_, _| true);
        assert!(matches!(s.status, Status::RhsFailure(_)));
    }
}
