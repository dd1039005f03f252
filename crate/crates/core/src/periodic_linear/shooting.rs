//! Periodic solutions of `ċ = (−Λ + N(t)) c + F(t)` by shooting.
//!
//! The period map is integrated with classical RK4 when `max λ · h ≤ 2`;
//! otherwise with exponential time differencing RK4 (Cox–Matthews), which
//! treats the diagonal decay `−Λ` exactly, keeps the step size independent
//! of the stiffness, and reproduces the quasi-static response `F/λ` of
//! stiff forced modes.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear periodic ODE discretized on `N_t` uniform steps per period.
pub trait PeriodicOde {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    fn steps(&self) -> usize;
    /// `λ_j ≥ 0`; the equation contains `−λ_j c_j`.
    fn decay_rates(&self) -> Vec<f64>;
    /// `N(t)`, the rest of the system matrix.
    fn coupling(&self, t: f64) -> DMatrix<f64>;
    /// `F` at `t = idx · h / 2`.
    fn forcing_half(&self, idx: usize) -> DVector<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Rk4,
    EtdRk4,
}

/// Constant-coefficient system with an explicit forcing function; used for
/// closed-form checks.
pub struct DenseOde<F: Fn(f64) -> DVector<f64>> {
    pub matrix: DMatrix<f64>,
    pub period: f64,
    pub steps: usize,
    pub forcing: F,
}

impl<F: Fn(f64) -> DVector<f64>> PeriodicOde for DenseOde<F> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn steps(&self) -> usize {
        self.steps
    }
    fn decay_rates(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
    fn coupling(&self, _t: f64) -> DMatrix<f64> {
        self.matrix.clone()
    }
    fn forcing_half(&self, idx: usize) -> DVector<f64> {
        (self.forcing)(idx as f64 * 0.5 * self.period / self.steps as f64)
    }
}

/// Factored period map.
pub struct Monodromy {
    pub phi: DMatrix<f64>,
    pub integrator: Integrator,
    pub min_singular: f64,
    lu: LU<f64, Dyn, Dyn>,
    rates: Vec<f64>,
}

/// `φ₁, φ₂, φ₃` at `z ≤ 0`; the series is used where the closed forms cancel.
fn phi_functions(z: f64) -> [f64; 3] {
    if z.abs() < 1.0 {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            // Σ_m z^m / (m + k + 1)!
            let mut term = 1.0 / (1..=k + 1).product::<usize>() as f64;
            for m in 0..30 {
                *o += term;
                term *= z / (m + k + 2) as f64;
            }
        }
        out
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        let p3 = (e - 1.0 - z - 0.5 * z * z) / (z * z * z);
        [p1, p2, p3]
    }
}

/// Integrator workspace: per-mode ETDRK4 coefficients for the split
/// `−Λ + N(t)`. With `Λ = 0` they reduce to classical RK4.
struct Stepper {
    rates: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
    /// `(h/2) φ₁(−λh/2)`.
    stage: Vec<f64>,
    /// Final-combination weights of `N_u`, `N_a + N_b`, `N_c`.
    weights: [Vec<f64>; 3],
}

impl Stepper {
    fn new(rates: Vec<f64>, h: f64) -> Self {
        let full = rates.iter().map(|l| (-l * h).exp()).collect();
        let half = rates.iter().map(|l| (-0.5 * l * h).exp()).collect();
        let stage = rates
            .iter()
            .map(|l| 0.5 * h * phi_functions(-0.5 * l * h)[0])
            .collect();
        let mut weights = [Vec::new(), Vec::new(), Vec::new()];
        for l in &rates {
            let [p1, p2, p3] = phi_functions(-l * h);
            weights[0].push(h * (p1 - 3.0 * p2 + 4.0 * p3));
            weights[1].push(2.0 * h * (p2 - 2.0 * p3));
            weights[2].push(h * (4.0 * p3 - p2));
        }
        Self {
            rates,
            full,
            half,
            stage,
            weights,
        }
    }

    fn coupling<O: PeriodicOde + ?Sized>(&self, ode: &O, t: f64) -> DMatrix<f64> {
        let mut n = ode.coupling(t);
        // With no split every term stays in N.
        let split = self.rates.iter().any(|l| *l != 0.0);
        if !split {
            for (j, l) in ode.decay_rates().iter().enumerate() {
                n[(j, j)] -= l;
            }
        }
        n
    }

    fn scale_rows(d: &[f64], m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (i, s) in d.iter().enumerate() {
            out.row_mut(i).scale_mut(*s);
        }
        out
    }

    /// One Cox–Matthews step for a block of columns; `f` holds `F` at
    /// `t, t+h/2, t+h` (zero columns for homogeneous propagation).
    fn step(&self, n: [&DMatrix<f64>; 3], y: &DMatrix<f64>, f: [&DMatrix<f64>; 3]) -> DMatrix<f64> {
        let ey = Self::scale_rows(&self.half, y);
        let nu = n[0] * y + f[0];
        let a = &ey + Self::scale_rows(&self.stage, &nu);
        let na = n[1] * &a + f[1];
        let b = &ey + Self::scale_rows(&self.stage, &na);
        let nb = n[1] * &b + f[1];
        let c =
            Self::scale_rows(&self.half, &a) + Self::scale_rows(&self.stage, &(&nb * 2.0 - &nu));
        let nc = n[2] * &c + f[2];
        let mut out = Self::scale_rows(&self.full, y);
        out += Self::scale_rows(&self.weights[0], &nu);
        out += Self::scale_rows(&self.weights[1], &(na + nb));
        out += Self::scale_rows(&self.weights[2], &nc);
        out
    }
}

fn choose(ode: &dyn PeriodicOde) -> (Integrator, Vec<f64>) {
    let rates = ode.decay_rates();
    let h = ode.period() / ode.steps() as f64;
    let lmax = rates.iter().fold(0.0f64, |a, b| a.max(*b));
    if lmax * h <= 2.0 {
        (Integrator::Rk4, vec![0.0; rates.len()])
    } else {
        (Integrator::EtdRk4, rates)
    }
}

/// Integrates the period map `Φ(T)` and factors `I − Φ(T)`.
pub fn monodromy(ode: &dyn PeriodicOde) -> Result<Monodromy> {
    let k = ode.dim();
    let n_t = ode.steps();
    let h = ode.period() / n_t as f64;
    let (integrator, rates) = choose(ode);
    let st = Stepper::new(rates.clone(), h);
    let zero = DMatrix::zeros(k, k);
    let mut phi = DMatrix::identity(k, k);
    let mut n_prev = st.coupling(ode, 0.0);
    for s in 0..n_t {
        let t = s as f64 * h;
        let n_mid = st.coupling(ode, t + 0.5 * h);
        let n_next = st.coupling(ode, t + h);
        phi = st.step([&n_prev, &n_mid, &n_next], &phi, [&zero, &zero, &zero]);
        n_prev = n_next;
    }
    let m = DMatrix::identity(k, k) - &phi;
    let min_singular = m.clone().singular_values().min();
    if !(min_singular >= 1e-12) {
        return Err(Error::FloquetResonance { min_singular });
    }
    Ok(Monodromy {
        lu: m.lu(),
        phi,
        integrator,
        min_singular,
        rates,
    })
}

/// Samples of the periodic solution at the `N_t` nodes with their exact
/// time derivatives `ċ = M c + F`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientTrajectory {
    pub period: f64,
    pub samples: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub periodicity_residual: f64,
    pub integrator: Integrator,
    /// Interpolation rule between nodes.
    pub interpolation: String,
}

impl CoefficientTrajectory {
    pub fn zeros(period: f64, n_t: usize, k: usize, integrator: Integrator) -> Self {
        Self {
            period,
            samples: vec![vec![0.0; k]; n_t],
            derivatives: vec![vec![0.0; k]; n_t],
            periodicity_residual: 0.0,
            integrator,
            interpolation: "trigonometric".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.len();
        (0..n).map(|i| i as f64 * self.period / n as f64).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Trigonometric interpolant at an arbitrary time.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        let nf = n as f64;
        let x = (t / self.period * nf).rem_euclid(nf);
        let mut out = vec![0.0; self.dim()];
        for (q, c) in self.samples.iter().enumerate() {
            let s = x - q as f64;
            let w = if s.abs() < 1e-13 {
                1.0
            } else {
                let arg = std::f64::consts::PI * s;
                // Periodic sinc for an even number of nodes.
                arg.sin() / (nf * (arg / nf).tan())
            };
            if w != 0.0 {
                for (o, v) in out.iter_mut().zip(c) {
                    *o += w * v;
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for c in out.samples.iter_mut().chain(out.derivatives.iter_mut()) {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// `self − other`, node by node.
    pub fn difference(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.samples.iter_mut().zip(&other.samples) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        for (a, b) in out.derivatives.iter_mut().zip(&other.derivatives) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        out
    }
}

/// Periodic solution for a factored period map of the same homogeneous part.
pub fn solve_with(ode: &dyn PeriodicOde, mono: &Monodromy) -> CoefficientTrajectory {
    let k = ode.dim();
    let n_t = ode.steps();
    let h = ode.period() / n_t as f64;
    let st = Stepper::new(mono.rates.clone(), h);
    let col = |v: DVector<f64>| DMatrix::from_column_slice(k, 1, v.as_slice());
    let f_cache: Vec<DMatrix<f64>> = (0..=2 * n_t).map(|i| col(ode.forcing_half(i))).collect();
    let run = |y0: DMatrix<f64>, record: bool| {
        let mut y = y0;
        let mut out = Vec::new();
        let mut n_prev = st.coupling(ode, 0.0);
        for s in 0..n_t {
            if record {
                out.push(y.clone());
            }
            let i = 2 * s;
            let t = s as f64 * h;
            let n_mid = st.coupling(ode, t + 0.5 * h);
            let n_next = st.coupling(ode, t + h);
            y = st.step(
                [&n_prev, &n_mid, &n_next],
                &y,
                [&f_cache[i], &f_cache[i + 1], &f_cache[i + 2]],
            );
            n_prev = n_next;
        }
        (y, out)
    };
    let (cp, _) = run(DMatrix::zeros(k, 1), false);
    let c0 = mono.lu.solve(&cp).unwrap_or_else(|| DMatrix::zeros(k, 1));
    let (c_end, nodes) = run(c0.clone(), true);
    let max_norm = nodes.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let gap = (&c_end - &c0).norm();
    let periodicity_residual = if max_norm > 0.0 { gap / max_norm } else { gap };
    let rates = ode.decay_rates();
    let mut samples = Vec::with_capacity(n_t);
    let mut derivatives = Vec::with_capacity(n_t);
    for (s, c) in nodes.into_iter().enumerate() {
        let mut m = ode.coupling(s as f64 * h);
        for (j, l) in rates.iter().enumerate() {
            m[(j, j)] -= l;
        }
        let d = &m * &c + &f_cache[2 * s];
        samples.push(c.iter().copied().collect());
        derivatives.push(d.iter().copied().collect());
    }
    CoefficientTrajectory {
        period: ode.period(),
        samples,
        derivatives,
        periodicity_residual,
        integrator: mono.integrator,
        interpolation: "trigonometric".into(),
    }
}

/// Unique periodic solution; fails with `FloquetResonance` when `1` is a
/// Floquet multiplier to working precision.
pub fn solve_periodic(ode: &dyn PeriodicOde) -> Result<CoefficientTrajectory> {
    let mono = monodromy(ode)?;
    Ok(solve_with(ode, &mono))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn scalar_closed_form() {
        let lam = 3.0;
        let w = 2.0 * PI;
        let ode = DenseOde {
            matrix: DMatrix::from_element(1, 1, -lam),
            period: 1.0,
            steps: 256,
            forcing: |t: f64| DVector::from_element(1, (w * t).cos()),
        };
        let traj = solve_periodic(&ode).unwrap();
        for (t, c) in traj.times().iter().zip(&traj.samples) {
            let exact = (lam * (w * t).cos() + w * (w * t).sin()) / (lam * lam + w * w);
            assert!((c[0] - exact).abs() < 1e-9);
        }
        assert!(traj.periodicity_residual < 1e-10);
    }

    #[test]
    fn neutral_mode_is_resonant() {
        let ode = DenseOde {
            matrix: DMatrix::zeros(1, 1),
            period: 1.0,
            steps: 16,
            forcing: |_t: f64| DVector::zeros(1),
        };
        assert!(matches!(
            solve_periodic(&ode),
            Err(Error::FloquetResonance { .. })
        ));
    }

    /// Diagonal stiff system, `ċ_j = −λ_j c_j + cos(Ωt)`.
    struct Stiff(Vec<f64>);

    impl PeriodicOde for Stiff {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn period(&self) -> f64 {
            1.0
        }
        fn steps(&self) -> usize {
            64
        }
        fn decay_rates(&self) -> Vec<f64> {
            self.0.clone()
        }
        fn coupling(&self, _t: f64) -> DMatrix<f64> {
            DMatrix::zeros(self.dim(), self.dim())
        }
        fn forcing_half(&self, idx: usize) -> DVector<f64> {
            let t = idx as f64 * 0.5 / 64.0;
            DVector::from_element(self.dim(), (2.0 * PI * t).cos())
        }
    }

    #[test]
    fn stiff_forced_modes_follow_closed_form() {
        let rates = vec![0.5, 40.0, 3.0e3, 2.0e5];
        let traj = solve_periodic(&Stiff(rates.clone())).unwrap();
        assert_eq!(traj.integrator, Integrator::EtdRk4);
        let w = 2.0 * PI;
        for (t, c) in traj.times().iter().zip(&traj.samples) {
            for (l, cj) in rates.iter().zip(c) {
                let exact = (l * (w * t).cos() + w * (w * t).sin()) / (l * l + w * w);
                assert!(
                    (cj - exact).abs() < 1e-5 * exact.abs().max(1.0 / l),
                    "λ={l}: {cj} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn phi_series_and_closed_forms_agree() {
        for z in [-0.999, -1.001] {
            let a = phi_functions(z);
            let b = phi_functions(z + 2e-3);
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-3);
            }
        }
        let [p1, p2, p3] = phi_functions(0.0);
        assert!(
            (p1 - 1.0).abs() < 1e-15 && (p2 - 0.5).abs() < 1e-15 && (p3 - 1.0 / 6.0).abs() < 1e-15
        );
    }
}
