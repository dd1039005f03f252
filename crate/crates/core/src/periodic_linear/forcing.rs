//! Named body-force presets `b = Div 𝓑` with a periodic amplitude.
//!
//! Both presets use a radial bump `η(r) = (1 − ((r−r_c)/σ)²)³` supported in
//! `|r − r_c| < σ`:
//!
//! * `swirl`:  `𝓑 = a(t) η(r) [e₁]_×`, `b = a(t) η'(r) e₁ × x/|x|`,
//! * `dipole`: `𝓑 = a(t) η(r) e₁ ⊗ e₁`, `b = a(t) η'(r) (x₁/|x|) e₁`,
//!
//! where `[e₁]_×` is the matrix of `v ↦ e₁ × v` and `(Div 𝓑)_i = ∂_j 𝓑_ij`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{ShellQuadrature, WakeWeight};
use crate::vec3::{norm, Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcingShape {
    None,
    Swirl,
    Dipole,
}

impl std::str::FromStr for ForcingShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "swirl" => Ok(Self::Swirl),
            "dipole" => Ok(Self::Dipole),
            other => Err(Error::InvalidConfig(format!(
                "unknown forcing preset '{other}' (expected none, swirl or dipole)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub shape: ForcingShape,
    /// `a(t) = a₀ + a₁ cos(2πt/T) + a₂ sin(2πt/T)`.
    pub amplitude: [f64; 3],
    pub period: f64,
    pub center: f64,
    pub width: f64,
}

impl Forcing {
    pub fn none(period: f64) -> Self {
        Self {
            shape: ForcingShape::None,
            amplitude: [0.0; 3],
            period,
            center: 1.5,
            width: 0.4,
        }
    }

    pub fn new(
        shape: ForcingShape,
        amplitude: [f64; 3],
        period: f64,
        center: f64,
        width: f64,
    ) -> Result<Self> {
        if !(period > 0.0) || !(width > 0.0) || !(center - width >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "forcing support [{}, {}] must lie outside the body and the period must be positive",
                center - width,
                center + width
            )));
        }
        if amplitude.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig(
                "forcing amplitude must be finite".into(),
            ));
        }
        Ok(Self {
            shape,
            amplitude,
            period,
            center,
            width,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.shape == ForcingShape::None || self.amplitude.iter().all(|a| *a == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for a in out.amplitude.iter_mut() {
            *a *= s;
        }
        out
    }

    /// Effect of rotating the configuration by π about `e₃`.
    pub fn rotated_half_turn(&self) -> Self {
        match self.shape {
            ForcingShape::Swirl => self.scaled(-1.0),
            _ => self.clone(),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }

    pub fn amplitude_at(&self, t: f64) -> f64 {
        if self.shape == ForcingShape::None {
            return 0.0;
        }
        let w = 2.0 * PI / self.period;
        let [a0, a1, a2] = self.amplitude;
        a0 + a1 * (w * t).cos() + a2 * (w * t).sin()
    }

    pub fn amplitude_rate(&self, t: f64) -> f64 {
        if self.shape == ForcingShape::None {
            return 0.0;
        }
        let w = 2.0 * PI / self.period;
        w * (-self.amplitude[1] * (w * t).sin() + self.amplitude[2] * (w * t).cos())
    }

    /// `(η, η')` at radius `r`.
    fn bump(&self, r: f64) -> (f64, f64) {
        let s = (r - self.center) / self.width;
        if s.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - s * s;
        (q * q * q, -6.0 * s * q * q / self.width)
    }

    /// Spatial profile `b₀` with `b = a(t) b₀`.
    pub fn body_profile(&self, x: &Vec3) -> Vec3 {
        let r = norm(x);
        let (_, d) = self.bump(r);
        match self.shape {
            ForcingShape::None => [0.0; 3],
            ForcingShape::Swirl => [0.0, -d * x[2] / r, d * x[1] / r],
            ForcingShape::Dipole => [d * x[0] / r, 0.0, 0.0],
        }
    }

    /// Spatial profile `𝓑₀` with `𝓑 = a(t) 𝓑₀`.
    pub fn tensor_profile(&self, x: &Vec3) -> Mat3 {
        let (e, _) = self.bump(norm(x));
        match self.shape {
            ForcingShape::None => [[0.0; 3]; 3],
            ForcingShape::Swirl => [[0.0, 0.0, 0.0], [0.0, 0.0, -e], [0.0, e, 0.0]],
            ForcingShape::Dipole => [[e, 0.0, 0.0], [0.0; 3], [0.0; 3]],
        }
    }

    pub fn body(&self, x: &Vec3, t: f64) -> Vec3 {
        let a = self.amplitude_at(t);
        let b = self.body_profile(x);
        [a * b[0], a * b[1], a * b[2]]
    }

    /// `‖Div 𝓑₀ − b₀‖₂ / max(‖b₀‖₂, tiny)` with `Div` by central differences.
    pub fn consistency_residual(&self, quad: &ShellQuadrature) -> f64 {
        let h = 1e-5;
        let mut res = 0.0;
        let mut nb = 0.0;
        for (x, w) in quad.points.iter().zip(&quad.weights) {
            let mut div = [0.0; 3];
            for j in 0..3 {
                let mut xp = *x;
                let mut xm = *x;
                xp[j] += h;
                xm[j] -= h;
                let (tp, tm) = (self.tensor_profile(&xp), self.tensor_profile(&xm));
                for i in 0..3 {
                    div[i] += (tp[i][j] - tm[i][j]) / (2.0 * h);
                }
            }
            let b = self.body_profile(x);
            res += w * (0..3).map(|i| (div[i] - b[i]).powi(2)).sum::<f64>();
            nb += w * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
        }
        if nb == 0.0 {
            res.sqrt()
        } else {
            (res / nb).sqrt()
        }
    }

    /// Fails with `InconsistentForcing` when `‖Div 𝓑 − b‖₂ > tol`.
    pub fn check_consistency(&self, quad: &ShellQuadrature, tol: f64) -> Result<f64> {
        let r = self.consistency_residual(quad);
        if r > tol {
            return Err(Error::InconsistentForcing { residual: r });
        }
        Ok(r)
    }

    /// Space-time norms of the data on `quad`; the weighted sup also samples `rays`.
    pub fn data_norms(&self, quad: &ShellQuadrature, lambda: f64, rays: &[Vec3]) -> DataNorms {
        if self.is_zero() {
            return DataNorms::default();
        }
        let mut b2 = 0.0;
        let mut t2 = 0.0;
        for (x, w) in quad.points.iter().zip(&quad.weights) {
            let b = self.body_profile(x);
            b2 += w * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
            t2 += w * self
                .tensor_profile(x)
                .iter()
                .flatten()
                .map(|v| v * v)
                .sum::<f64>();
        }
        // ∫₀ᵀ a² and ∫₀ᵀ ȧ² by Parseval.
        let [a0, a1, a2] = self.amplitude;
        let w = 2.0 * PI / self.period;
        let osc = 0.5 * self.period * (a1 * a1 + a2 * a2);
        let l2 = self.period * a0 * a0 + osc;
        let w12 = l2 + osc * w * w;
        let amax = a0.abs() + (a1 * a1 + a2 * a2).sqrt();
        let weight = WakeWeight { lambda, order: 2 };
        let sup = quad
            .points
            .iter()
            .chain(rays)
            .map(|x| {
                weight.weight(x)
                    * self
                        .tensor_profile(x)
                        .iter()
                        .flatten()
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt()
            })
            .fold(0.0, f64::max);
        DataNorms {
            body_l2: (b2 * l2).sqrt(),
            body_w12: (b2 * w12).sqrt(),
            tensor_l2: (t2 * l2).sqrt(),
            tensor_w12: (t2 * w12).sqrt(),
            tensor_weighted_sup: amax * sup,
        }
    }
}

/// Norms of `b` and `𝓑` in `L²(L²)` and `W^{1,2}(L²)`, and `sup_t [!]𝓑[!]_{2,λ}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    pub body_l2: f64,
    pub body_w12: f64,
    pub tensor_l2: f64,
    pub tensor_w12: f64,
    pub tensor_weighted_sup: f64,
}
