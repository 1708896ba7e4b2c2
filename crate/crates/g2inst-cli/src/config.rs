//! Flat run configuration. Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beta {
    Value(f64),
    Tune(TuneTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TuneTag {
    #[serde(rename = "tune")]
    Tune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub m: u32,
    pub n: u32,
    pub r0: f64,
    /// A number, or `"tune"` to bisect for the AC value on `[beta_lo, beta_hi]`.
    pub beta: Beta,
    pub beta_lo: f64,
    pub beta_hi: f64,
    /// Relative bisection tolerance on β.
    pub tol: f64,
    pub j: i32,
    pub f0: f64,
    /// Only used by `integrate`; `shoot` and `sweep` solve for it.
    pub h0: f64,
    /// Series → integrator handoff.
    pub t0: f64,
    /// Horizon for `integrate` and for the exported profile table.
    pub t_max: f64,
    pub rtol: f64,
    pub per_decade: usize,
    pub series_order: usize,
    pub tau_t: f64,
    pub tau_max: f64,
    pub eps_conv: f64,
    pub h0_lo: f64,
    pub h0_hi: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub f0_steps: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: String,
    /// Random draws per randomized verification suite.
    pub samples: usize,
    /// Multiplies Φ inside the abelian-residual suite (1 = untouched); a mutation probe.
    pub mutate_phi: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            m: 1,
            n: 1,
            r0: 1.0,
            beta: Beta::Tune(TuneTag::Tune),
            beta_lo: 1.0,
            beta_hi: 2.0,
            tol: 1e-15,
            j: 1,
            f0: 0.1,
            h0: 0.0,
            t0: 1e-3,
            t_max: 1e3,
            rtol: 1e-11,
            per_decade: 40,
            series_order: 12,
            tau_t: 8.0,
            tau_max: 14.0,
            eps_conv: 1e-3,
            h0_lo: -0.5,
            h0_hi: 0.5,
            f0_min: 0.0,
            f0_max: 0.2,
            f0_steps: 11,
            seed: 0,
            jobs: 0,
            out: "out".into(),
            samples: 8,
            mutate_phi: 1.0,
        }
    }
}

/// Command-line overrides, applied after the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &ov.out {
            cfg.out = v.clone();
        }
        if let Some(v) = ov.seed {
            cfg.seed = v;
        }
        if let Some(v) = ov.tol {
            cfg.tol = v;
        }
        if let Some(v) = ov.jobs {
            cfg.jobs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if self.m == 0 || self.n == 0 {
            return bad("m and n must be positive");
        }
        if !pos(self.r0) {
            return bad("r0 must be positive");
        }
        if let Beta::Value(b) = self.beta {
            if !pos(b) {
                return bad("beta must be positive or \"tune\"");
            }
        }
        if !(pos(self.beta_lo) && self.beta_lo < self.beta_hi && self.beta_hi.is_finite()) {
            return bad("need 0 < beta_lo < beta_hi");
        }
        if !(pos(self.tol) && pos(self.rtol) && pos(self.eps_conv)) {
            return bad("tol, rtol and eps_conv must be positive");
        }
        if !(pos(self.t0) && self.t_max.is_finite() && self.t_max > self.t0) {
            return bad("need 0 < t0 < t_max");
        }
        if !(self.tau_t.is_finite() && self.tau_max >= self.tau_t && self.tau_max.is_finite()) {
            return bad("need tau_t <= tau_max");
        }
        if !(self.h0_lo < self.h0_hi && self.h0_lo.is_finite() && self.h0_hi.is_finite()) {
            return bad("need h0_lo < h0_hi");
        }
        if !(self.f0_min <= self.f0_max && self.f0_min.is_finite() && self.f0_max.is_finite()) || self.f0_steps == 0 {
            return bad("need f0_min <= f0_max and f0_steps >= 1");
        }
        if !(self.f0.is_finite() && self.h0.is_finite() && self.mutate_phi.is_finite()) {
            return bad("f0, h0 and mutate_phi must be finite");
        }
        if self.per_decade == 0 || self.series_order < 2 || self.samples == 0 {
            return bad("per_decade, samples must be >= 1 and series_order >= 2");
        }
        if self.out.is_empty() {
            return bad("out must not be empty");
        }
        Ok(())
    }

    pub fn f0_grid(&self) -> Vec<f64> {
        let k = self.f0_steps;
        if k == 1 {
            return vec![self.f0_min];
        }
        (0..k).map(|i| self.f0_min + (self.f0_max - self.f0_min) * i as f64 / (k - 1) as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(RunConfig::parse("m = 1\nbogus = 2\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn beta_forms() {
        assert_eq!(RunConfig::parse("beta = \"tune\"").unwrap().beta, Beta::Tune(TuneTag::Tune));
        assert_eq!(RunConfig::parse("beta = 1.5").unwrap().beta, Beta::Value(1.5));
        assert!(RunConfig::parse("beta = \"auto\"").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig { f0: 0.3, beta: Beta::Value(1.25), ..Default::default() };
        let back = RunConfig::parse(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
