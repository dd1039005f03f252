//! Truncated exterior shells `1 < |x| < R`, their quadrature rules and the
//! anisotropic wake weight `(1+|x|)^m (1+2λ s(x))^m` with `s(x) = |x| + x₁`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::vec3::{norm, Vec3};

/// Radius of the body surface. The body is the closed unit ball.
pub const BODY_RADIUS: f64 = 1.0;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `s(x) = |x| + x₁`; vanishes exactly on the negative x₁-axis.
pub fn wake_coordinate(x: &Vec3) -> f64 {
    let s = norm(x) + x[0];
    // |x| + x₁ cancels catastrophically on the wake axis; clamp the rounding.
    s.max(0.0)
}

/// Anisotropic weight `(1+|x|)^m (1+2λ s(x))^m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WakeWeight {
    pub lambda: f64,
    pub order: i32,
}

impl WakeWeight {
    pub fn new(lambda: f64, order: i32) -> Result<Self> {
        if !(lambda >= 0.0) || order < 1 {
            return Err(Error::InvalidConfig(format!(
                "wake weight needs lambda >= 0 and order >= 1 (got {lambda}, {order})"
            )));
        }
        Ok(Self { lambda, order })
    }

    pub fn weight(&self, x: &Vec3) -> f64 {
        let base = (1.0 + norm(x)) * (1.0 + 2.0 * self.lambda * wake_coordinate(x));
        base.powi(self.order)
    }
}

/// `max_i weight(x_i) |f(x_i)|` over the samples.
///
/// Sampling only sees finitely many points, so the result is a lower bound
/// for the true supremum.
pub fn weighted_sup_norm(points: &[Vec3], values: &[Vec3], weight: &WakeWeight) -> Result<f64> {
    if points.is_empty() || points.len() != values.len() {
        return Err(Error::EmptyField);
    }
    Ok(points
        .iter()
        .zip(values)
        .map(|(x, v)| weight.weight(x) * norm(v))
        .fold(0.0, f64::max))
}

/// Sample points along rays `±e₁, ±e₂` at the given radii.
pub fn axis_ray_points(radii: &[f64]) -> Vec<Vec3> {
    let dirs: [Vec3; 4] = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
    ];
    dirs.iter()
        .flat_map(|d| radii.iter().map(move |&r| [d[0] * r, d[1] * r, d[2] * r]))
        .collect()
}

/// Product rule on the unit sphere: Gauss–Legendre in `cos θ` times the
/// trapezoidal rule in `φ`. Integrates spherical polynomials of total
/// degree `<= degree` exactly.
#[derive(Clone, Debug)]
pub struct AngularRule {
    pub degree: usize,
    pub directions: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl AngularRule {
    pub fn gauss_product(degree: usize) -> Self {
        let n_theta = degree / 2 + 1;
        let n_phi = degree + 1;
        let (mu, wmu) = gauss_legendre(n_theta);
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * PI / n_phi as f64;
        for (c, w) in mu.iter().zip(&wmu) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..n_phi {
                // Offset by half a step keeps the rule away from the ±e₁,±e₂ rays.
                let phi = (j as f64 + 0.5) * dphi;
                directions.push([s * phi.cos(), s * phi.sin(), *c]);
                weights.push(w * dphi);
            }
        }
        Self {
            degree,
            directions,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn integrate<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.directions
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * f(d))
            .sum()
    }
}

/// Truncated exterior domain `Ω_R = {1 < |x| < R}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellDomain {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Gauss–Legendre nodes per radial panel.
    pub radial_order: usize,
    /// Exactness degree of the angular rule.
    pub angular_degree: usize,
    /// Interior radii where the radial rule is split into panels.
    #[serde(default)]
    pub breakpoints: Vec<f64>,
}

impl ShellDomain {
    pub fn new(outer_radius: f64, radial_order: usize, angular_degree: usize) -> Result<Self> {
        Self::between(BODY_RADIUS, outer_radius, radial_order, angular_degree)
    }

    /// A shell with arbitrary radii. Used for sub-shells such as the support
    /// of the boundary extension.
    pub fn between(
        inner_radius: f64,
        outer_radius: f64,
        radial_order: usize,
        angular_degree: usize,
    ) -> Result<Self> {
        if !(outer_radius > inner_radius) || !(inner_radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "shell radii must satisfy 0 < inner < outer (got {inner_radius}, {outer_radius})"
            )));
        }
        if radial_order < 4 {
            return Err(Error::InvalidConfig(format!(
                "radial_order must be >= 4 (got {radial_order})"
            )));
        }
        Ok(Self {
            inner_radius,
            outer_radius,
            radial_order,
            angular_degree,
            breakpoints: Vec::new(),
        })
    }

    pub fn with_breakpoints(mut self, mut breakpoints: Vec<f64>) -> Self {
        breakpoints.retain(|&b| b > self.inner_radius + 1e-12 && b < self.outer_radius - 1e-12);
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breakpoints.dedup();
        self.breakpoints = breakpoints;
        self
    }

    pub fn measure(&self) -> f64 {
        4.0 * PI / 3.0 * (self.outer_radius.powi(3) - self.inner_radius.powi(3))
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        let r = norm(x);
        r >= self.inner_radius && r <= self.outer_radius
    }

    pub fn build_quadrature(&self) -> ShellQuadrature {
        ShellQuadrature::new(self)
    }
}

/// Tensor-product rule on a shell. Points are stored shell-major: all
/// angular directions of radial node 0, then radial node 1, and so on.
#[derive(Clone, Debug)]
pub struct ShellQuadrature {
    pub domain: ShellDomain,
    pub radii: Vec<f64>,
    /// Radial weights including the `r²` Jacobian.
    pub radial_weights: Vec<f64>,
    pub angular: AngularRule,
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Polynomial exactness of the radial rule on each panel (in `r`).
    pub radial_exactness: usize,
}

impl ShellQuadrature {
    fn new(domain: &ShellDomain) -> Self {
        let (xi, wi) = gauss_legendre(domain.radial_order);
        let mut edges = vec![domain.inner_radius];
        edges.extend(domain.breakpoints.iter().copied());
        edges.push(domain.outer_radius);
        let mut radii = Vec::new();
        let mut radial_weights = Vec::new();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            for (x, w) in xi.iter().zip(&wi) {
                let r = mid + half * x;
                radii.push(r);
                radial_weights.push(w * half * r * r);
            }
        }
        let angular = AngularRule::gauss_product(domain.angular_degree);
        let mut points = Vec::with_capacity(radii.len() * angular.len());
        let mut weights = Vec::with_capacity(radii.len() * angular.len());
        for (r, wr) in radii.iter().zip(&radial_weights) {
            for (d, wa) in angular.directions.iter().zip(&angular.weights) {
                points.push([r * d[0], r * d[1], r * d[2]]);
                weights.push(wr * wa);
            }
        }
        Self {
            domain: domain.clone(),
            radii,
            radial_weights,
            angular,
            points,
            weights,
            radial_exactness: 2 * domain.radial_order - 3,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn angular_len(&self) -> usize {
        self.angular.len()
    }

    pub fn integrate<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for p in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 {
                0.0
            } else {
                2.0 / (p as f64 + 1.0)
            };
            assert!((q - exact).abs() < 1e-14, "degree {p}: {q} vs {exact}");
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn wake_coordinate_examples() {
        assert_eq!(wake_coordinate(&[1.0, 0.0, 0.0]), 2.0);
        assert_eq!(wake_coordinate(&[-3.0, 0.0, 0.0]), 0.0);
        assert_eq!(wake_coordinate(&[0.0, 4.0, 3.0]), 5.0);
    }

    #[test]
    fn weight_extremes_on_sphere() {
        let w = WakeWeight::new(0.7, 2).unwrap();
        let r = 3.0;
        let up = w.weight(&[r, 0.0, 0.0]);
        let down = w.weight(&[-r, 0.0, 0.0]);
        let side = w.weight(&[0.0, r, 0.0]);
        assert!(up > side && side > down);
        assert_eq!(down, (1.0 + r).powi(2));
        let zero = WakeWeight::new(0.0, 3).unwrap();
        let x = [0.3, -1.2, 2.0];
        assert_eq!(zero.weight(&x), (1.0 + norm(&x)).powi(3));
    }

    #[test]
    fn weighted_sup_norm_examples() {
        let q = ShellDomain::new(2.0, 6, 5).unwrap().build_quadrature();
        let w = WakeWeight::new(0.0, 1).unwrap();
        let zeros = vec![[0.0; 3]; q.len()];
        assert_eq!(weighted_sup_norm(&q.points, &zeros, &w).unwrap(), 0.0);
        // Sup of 1+|x| over 1 <= |x| <= 2 is attained on the outer sphere.
        let mut pts = q.points.clone();
        pts.push([2.0, 0.0, 0.0]);
        let ones = vec![[1.0, 0.0, 0.0]; pts.len()];
        assert!((weighted_sup_norm(&pts, &ones, &w).unwrap() - 3.0).abs() < 1e-14);
        assert!(matches!(
            weighted_sup_norm(&[], &[], &w),
            Err(Error::EmptyField)
        ));
    }

    #[test]
    fn shell_measure_and_moments() {
        let dom = ShellDomain::new(2.0, 8, 11).unwrap();
        let q = dom.build_quadrature();
        let vol = 4.0 * PI / 3.0 * 7.0;
        assert!((q.total_measure() - vol).abs() < 1e-10);
        assert!(q.integrate(|x| x[0]).abs() < 1e-12);
        let r2 = q.integrate(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        assert!((r2 - 4.0 * PI / 5.0 * 31.0).abs() < 1e-10);
    }

    #[test]
    fn breakpoints_preserve_measure() {
        let dom = ShellDomain::new(4.0, 6, 4)
            .unwrap()
            .with_breakpoints(vec![1.5, 0.5, 9.0]);
        assert_eq!(dom.breakpoints, vec![1.5]);
        let q = dom.build_quadrature();
        assert_eq!(q.radii.len(), 12);
        assert!((q.total_measure() - dom.measure()).abs() < 1e-10);
    }

    #[test]
    fn angular_rule_exactness() {
        let rule = AngularRule::gauss_product(11);
        // ∫ x^a y^b z^c over S² for even exponents: 2 Γ(α)Γ(β)Γ(γ)/Γ(α+β+γ), α=(a+1)/2...
        let i = rule.integrate(|d| d[0].powi(4) * d[1].powi(2) * d[2].powi(4));
        // Closed form: 4π · (3·1·3)/(11·9·7·5·3) = 4π·9/10395
        let exact = 4.0 * PI * 9.0 / 10395.0;
        assert!((i - exact).abs() < 1e-14);
        assert!((rule.weights.iter().sum::<f64>() - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn rejects_invalid_shell() {
        assert!(ShellDomain::new(1.0, 8, 4).is_err());
        assert!(ShellDomain::new(2.0, 3, 4).is_err());
    }
}
