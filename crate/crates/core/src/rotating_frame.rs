//! Change of variables to the frame co-moving with the mean translation
//! and the spin:
//!
//! `y = Q(−t)(x − x₀(t))`, `v(y, t) = Q(−t) w(Q(t) y + x₀(t), t)`,
//!
//! with `x₀(t) = ∫₀ᵗ (ξ(s) − λ) ds e₁` and `Q(t)` the rotation by `ωt`
//! about `e₁`.

use serde::{Deserialize, Serialize};

use crate::geometry::{wake_coordinate, ShellDomain};
use crate::periodic_linear::{FlowSolution, KinematicProfile};
use crate::vec3::{add, mat_vec, norm, sub, Mat3, Vec3};

/// `Q(t)`; `Q(t) e₁ = e₁` and `Q(−t) = Q(t)ᵀ`.
pub fn rotation_matrix(t: f64, omega: f64) -> Mat3 {
    let (s, c) = (omega * t).sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]]
}

/// `x₀(t)`, exact for the trigonometric speed.
pub fn drift(t: f64, profile: &KinematicProfile) -> Vec3 {
    [profile.drift(t), 0.0, 0.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Body frame `x` to co-moving frame `y`.
    Forward,
    /// Co-moving frame `y` back to the body frame `x`.
    Inverse,
}

/// One transformed sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedSample {
    /// Where the transformed field is evaluated.
    pub point: Vec3,
    /// Where the source field was evaluated.
    pub source: Vec3,
    /// `None` when `source` lies outside the source field's domain.
    pub value: Option<Vec3>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub profile: KinematicProfile,
    pub times: Vec<f64>,
    /// `x₀(t_n)` at the nodes.
    pub drift: Vec<Vec3>,
    /// `M = sup_t |x₀(t)|` over a dense grid.
    pub drift_bound: f64,
    /// `|x₀(T) − x₀(0)|`.
    pub periodicity_residual: f64,
}

impl FrameTransform {
    /// Drift at `n_t` uniform nodes; the bound uses a grid 64 times finer.
    pub fn new(profile: &KinematicProfile, n_t: usize) -> Self {
        let n_t = n_t.max(1);
        let h = profile.period / n_t as f64;
        let times: Vec<f64> = (0..n_t).map(|n| n as f64 * h).collect();
        let drift_at: Vec<Vec3> = times.iter().map(|&t| drift(t, profile)).collect();
        let dense = 64 * n_t;
        let drift_bound = (0..=dense)
            .map(|i| norm(&drift(profile.period * i as f64 / dense as f64, profile)))
            .fold(0.0, f64::max);
        let periodicity_residual =
            norm(&sub(&drift(profile.period, profile), &drift(0.0, profile)));
        Self {
            profile: profile.clone(),
            times,
            drift: drift_at,
            drift_bound,
            periodicity_residual,
        }
    }

    pub fn rotation(&self, t: f64) -> Mat3 {
        rotation_matrix(t, self.profile.omega)
    }

    /// `y = Q(−t)(x − x₀)` (forward) or `x = Q(t) y + x₀` (inverse).
    pub fn map_point(&self, p: &Vec3, t: f64, direction: Direction) -> Vec3 {
        let x0 = drift(t, &self.profile);
        match direction {
            Direction::Forward => mat_vec(&self.rotation(-t), &sub(p, &x0)),
            Direction::Inverse => add(&mat_vec(&self.rotation(t), p), &x0),
        }
    }

    /// Transforms a field given pointwise.
    ///
    /// `Forward`: `points` are co-moving positions `y` and the result is
    /// `Q(−t) w(Q(t) y + x₀)`. `Inverse`: `points` are body positions `x`
    /// and the result is `Q(t) v(Q(−t)(x − x₀))`. The field returns `None`
    /// outside its domain; such samples are flagged, not errors.
    pub fn transform_field<F>(
        &self,
        field: F,
        points: &[Vec3],
        t: f64,
        direction: Direction,
    ) -> Vec<TransformedSample>
    where
        F: Fn(&Vec3) -> Option<Vec3>,
    {
        let (src_dir, back) = match direction {
            Direction::Forward => (Direction::Inverse, self.rotation(-t)),
            Direction::Inverse => (Direction::Forward, self.rotation(t)),
        };
        points
            .iter()
            .map(|p| {
                let source = self.map_point(p, t, src_dir);
                TransformedSample {
                    point: *p,
                    source,
                    value: field(&source).map(|w| mat_vec(&back, &w)),
                }
            })
            .collect()
    }

    /// Forward transform of a solution at node `node` (exterior of `Ω_R`
    /// flagged).
    pub fn transform_solution(
        &self,
        sol: &FlowSolution,
        points: &[Vec3],
        node: usize,
    ) -> Vec<TransformedSample> {
        let r_out = sol.eigen().outer_radius();
        let t = sol.times()[node];
        self.transform_field(
            |x| {
                let r = norm(x);
                (r >= 1.0 && r <= r_out).then(|| sol.jet_at_node(x, node).u)
            },
            points,
            t,
            Direction::Forward,
        )
    }

    /// Measured `c` in `(1+|x|)(1+2λs(x)) ≤ c (1+|y|)(1+2λs(y))` over the
    /// points of `domain`'s quadrature at every node, and the bound
    /// `(1+M)(1+4λM+2λ max x₀₁)`; also checks `|x| − M ≤ |y| ≤ |x| + M`.
    pub fn weight_comparison(&self, domain: &ShellDomain) -> WeightComparison {
        let lambda = self.profile.lambda().max(0.0);
        let points = domain.build_quadrature().points;
        let w = |p: &Vec3| (1.0 + norm(p)) * (1.0 + 2.0 * lambda * wake_coordinate(p));
        let mut measured: f64 = 0.0;
        let mut radius_violation: f64 = 0.0;
        let m = self.drift_bound;
        for &t in &self.times {
            for x in &points {
                let y = self.map_point(x, t, Direction::Forward);
                measured = measured.max(w(x) / w(&y));
                let (rx, ry) = (norm(x), norm(&y));
                radius_violation = radius_violation.max((rx - m - ry).max(ry - rx - m));
            }
        }
        let max_x01 = self.drift.iter().map(|d| d[0]).fold(0.0, f64::max);
        WeightComparison {
            measured,
            bound: (1.0 + m) * (1.0 + 4.0 * lambda * m + 2.0 * lambda * max_x01),
            radius_violation: radius_violation.max(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightComparison {
    pub measured: f64,
    pub bound: f64,
    /// Largest violation of `|x| − M ≤ |y| ≤ |x| + M` (0 when none).
    pub radius_violation: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quarter_turn_maps_e2_to_minus_e3() {
        let q = rotation_matrix(PI / 2.0, 1.0);
        let y = mat_vec(&q, &[0.0, 1.0, 0.0]);
        assert!(y[0].abs() < 1e-15 && y[1].abs() < 1e-15 && (y[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn drift_matches_closed_form() {
        let (lam, a, t_per) = (0.4, 0.3, 2.0);
        let p = KinematicProfile::new(t_per, lam, vec![], vec![a], 0.5).unwrap();
        let w = 2.0 * PI / t_per;
        for i in 0..20 {
            let t = t_per * i as f64 / 20.0;
            assert!((drift(t, &p)[0] - a / w * (1.0 - (w * t).cos())).abs() < 1e-14);
        }
        let f = FrameTransform::new(&p, 32);
        assert!((f.drift_bound - 2.0 * a / w).abs() < 1e-12);
        assert!(f.periodicity_residual < 1e-12);
    }
}
