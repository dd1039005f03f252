//! Body kinematics: translational speed `ξ(t) e₁` given by a finite Fourier
//! series and a constant spin `ω` about `e₁`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicProfile {
    pub period: f64,
    /// Mean speed `λ` (zeroth Fourier coefficient).
    #[serde(default)]
    pub xi_mean: f64,
    /// `ξ(t) = λ + Σ_k a_k cos(kΩt) + b_k sin(kΩt)`, `Ω = 2π/T`, `k ≥ 1`.
    #[serde(default)]
    pub xi_cosine: Vec<f64>,
    #[serde(default)]
    pub xi_sine: Vec<f64>,
    #[serde(default)]
    pub omega: f64,
}

impl KinematicProfile {
    pub fn new(
        period: f64,
        xi_mean: f64,
        xi_cosine: Vec<f64>,
        xi_sine: Vec<f64>,
        omega: f64,
    ) -> Result<Self> {
        let p = Self {
            period,
            xi_mean,
            xi_cosine,
            xi_sine,
            omega,
        };
        p.validate()?;
        Ok(p)
    }

    /// Body at rest.
    pub fn at_rest(period: f64) -> Self {
        Self {
            period,
            xi_mean: 0.0,
            xi_cosine: Vec::new(),
            xi_sine: Vec::new(),
            omega: 0.0,
        }
    }

    /// `ξ` and `ω` multiplied by `s`; the period is kept.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            period: self.period,
            xi_mean: s * self.xi_mean,
            xi_cosine: self.xi_cosine.iter().map(|a| s * a).collect(),
            xi_sine: self.xi_sine.iter().map(|b| s * b).collect(),
            omega: s * self.omega,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "period must be positive (got {})",
                self.period
            )));
        }
        let all = [self.xi_mean, self.omega]
            .into_iter()
            .chain(self.xi_cosine.iter().copied())
            .chain(self.xi_sine.iter().copied());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "kinematic coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.xi_mean
    }

    pub fn frequency(&self) -> f64 {
        2.0 * PI / self.period
    }

    fn harmonics(&self) -> usize {
        self.xi_cosine.len().max(self.xi_sine.len())
    }

    fn coeff(&self, k: usize) -> (f64, f64) {
        (
            self.xi_cosine.get(k).copied().unwrap_or(0.0),
            self.xi_sine.get(k).copied().unwrap_or(0.0),
        )
    }

    /// `d^order ξ / dt^order` at `t`.
    pub fn xi_derivative(&self, t: f64, order: u32) -> f64 {
        let w = self.frequency();
        let mut s = if order == 0 { self.xi_mean } else { 0.0 };
        for k in 0..self.harmonics() {
            let (a, b) = self.coeff(k);
            let kw = (k + 1) as f64 * w;
            let ph = kw * t;
            // d^n/dt^n of cos, sin cycles with period 4.
            let (c, sn) = (ph.cos(), ph.sin());
            let (dc, ds) = match order % 4 {
                0 => (c, sn),
                1 => (-sn, c),
                2 => (-c, -sn),
                _ => (sn, -c),
            };
            s += kw.powi(order as i32) * (a * dc + b * ds);
        }
        s
    }

    pub fn xi(&self, t: f64) -> f64 {
        self.xi_derivative(t, 0)
    }

    pub fn xi_dot(&self, t: f64) -> f64 {
        self.xi_derivative(t, 1)
    }

    /// `∫₀ᵗ (ξ(s) − λ) ds`, the first component of the frame drift.
    pub fn drift(&self, t: f64) -> f64 {
        let w = self.frequency();
        let mut s = 0.0;
        for k in 0..self.harmonics() {
            let (a, b) = self.coeff(k);
            let kw = (k + 1) as f64 * w;
            s += a * (kw * t).sin() / kw + b * (1.0 - (kw * t).cos()) / kw;
        }
        s
    }

    pub fn is_steady(&self) -> bool {
        self.xi_cosine
            .iter()
            .chain(&self.xi_sine)
            .all(|v| *v == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.is_steady() && self.xi_mean == 0.0 && self.omega == 0.0
    }

    /// `(min ξ, max ξ)` over a dense uniform grid plus the Fourier bound.
    pub fn xi_range(&self) -> (f64, f64) {
        let n = 64 * (self.harmonics() + 1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let v = self.xi(self.period * i as f64 / n as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// True when `ξ` takes both signs over a period, so the direction of
    /// translation is not fixed in time.
    pub fn xi_changes_sign(&self) -> bool {
        let (lo, hi) = self.xi_range();
        lo < 0.0 && hi > 0.0
    }

    /// Mirror image with `λ ≥ 0`: reverses `e₁`, which flips `ξ` and `ω`.
    /// Returns the profile and whether it was flipped.
    pub fn oriented(&self) -> (Self, bool) {
        if self.xi_mean >= 0.0 {
            return (self.clone(), false);
        }
        let neg = |v: &Vec<f64>| v.iter().map(|a| -a).collect();
        (
            Self {
                period: self.period,
                xi_mean: -self.xi_mean,
                xi_cosine: neg(&self.xi_cosine),
                xi_sine: neg(&self.xi_sine),
                omega: -self.omega,
            },
            true,
        )
    }

    /// `‖ξ‖_{W^{2,2}(0,T)}` from Parseval.
    pub fn sobolev_norm(&self) -> f64 {
        self.sobolev_norm_of_order(2)
    }

    /// `‖ξ‖_{W^{s,2}(0,T)}` from Parseval.
    pub fn sobolev_norm_of_order(&self, order: u32) -> f64 {
        let w = self.frequency();
        let mut s = self.period * self.xi_mean * self.xi_mean;
        for k in 0..self.harmonics() {
            let (a, b) = self.coeff(k);
            let kw = (k + 1) as f64 * w;
            let sum: f64 = (0..=order).map(|j| kw.powi(2 * j as i32)).sum();
            s += 0.5 * self.period * (a * a + b * b) * sum;
        }
        s.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let p = KinematicProfile::new(2.0, 0.3, vec![0.1, -0.05], vec![0.2], 0.5).unwrap();
        let t = 0.37;
        let h = 1e-5;
        for order in 0..3 {
            let fd = (p.xi_derivative(t + h, order) - p.xi_derivative(t - h, order)) / (2.0 * h);
            assert!((fd - p.xi_derivative(t, order + 1)).abs() < 1e-7);
        }
        let fd = (p.drift(t + h) - p.drift(t - h)) / (2.0 * h);
        assert!((fd - (p.xi(t) - p.lambda())).abs() < 1e-9);
        assert!(p.drift(0.0).abs() < 1e-15);
        assert!(p.drift(p.period).abs() < 1e-12);
    }

    #[test]
    fn orientation_flip() {
        let p = KinematicProfile::new(1.0, -0.4, vec![0.1], vec![], 0.5).unwrap();
        let (q, flipped) = p.oriented();
        assert!(flipped);
        assert_eq!(q.lambda(), 0.4);
        assert_eq!(q.omega, -0.5);
        assert!((q.xi(0.3) + p.xi(0.3)).abs() < 1e-15);
    }

    #[test]
    fn sign_change_detection() {
        let p = KinematicProfile::new(1.0, 0.0, vec![], vec![0.1], 0.0).unwrap();
        assert!(p.xi_changes_sign());
        let q = KinematicProfile::new(1.0, 0.5, vec![], vec![0.1], 0.0).unwrap();
        assert!(!q.xi_changes_sign());
    }

    #[test]
    fn rejects_bad_period() {
        assert!(KinematicProfile::new(0.0, 0.0, vec![], vec![], 0.0).is_err());
    }
}
