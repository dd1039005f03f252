//! Pressure recovery from the weak momentum balance
//!
//! `(p, div ψ) = (u_t, ψ) − (V·∇u, ψ) + (ω×u, ψ) + (∇u, ∇ψ) − (F, ψ)`
//!
//! tested with non-solenoidal fields `ψ_b` of zero trace. The pressure is
//! sought in `π_a = P_n(s(r)) Y_lm(x/|x|) / r²` (`s` the affine map of
//! `[1, R]` onto `[−1, 1]`, the pair `l = n = 0` left out), which has zero
//! mean on the shell exactly. The test fields solve `div ψ_b = π_b`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::norms::{FieldPart, FieldSampler};
use super::solution::FlowSolution;
use super::system::swirl_velocity;
use crate::error::{Error, Result};
use crate::fields::bogovskii::{DivergenceOptions, DivergenceSolution, DivergenceSolver};
use crate::fields::harmonics::{harmonic_table, SolidHarmonic};
use crate::fields::table::{FieldTable, COMPONENTS};
use crate::geometry::{legendre_with_derivative, ShellDomain, ShellQuadrature};
use crate::vec3::{norm, Vec3, E1};

/// Which momentum balance the solution satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumBalance {
    /// `F = b − ũ·∇v − v·∇ũ`, the linear problem on the Galerkin frame.
    Linear,
    /// `F = b − u·∇u`, the full Navier–Stokes balance.
    NavierStokes,
}

#[derive(Clone, Debug)]
pub struct PressureSpace {
    pub outer_radius: f64,
    harmonics: Vec<SolidHarmonic>,
    /// `(harmonic index, radial index)` of each pressure mode.
    pub modes: Vec<(usize, usize)>,
    tests: Vec<DivergenceSolution>,
}

impl PressureSpace {
    /// Pressure modes with `l ≤ max_degree`, `n < radial_count`.
    pub fn new(outer_radius: f64, max_degree: usize, radial_count: usize) -> Result<Self> {
        let harmonics = harmonic_table(0, max_degree);
        let mut modes = Vec::new();
        for (hi, h) in harmonics.iter().enumerate() {
            for n in 0..radial_count {
                if h.l == 0 && n == 0 {
                    continue;
                }
                modes.push((hi, n));
            }
        }
        if modes.is_empty() {
            return Err(Error::PressureSpaceDegenerate);
        }
        let shell = ShellDomain::new(outer_radius, radial_count + 16, 2 * max_degree + 4)?;
        let opts = DivergenceOptions {
            max_degree,
            radial_count: radial_count + 2,
            vanishing_order: 1,
        };
        let mut solver = DivergenceSolver::new(&shell, &opts)?;
        let radii = solver.quadrature().radii.clone();
        let mut tests = Vec::with_capacity(modes.len());
        for &(hi, n) in &modes {
            let data: Vec<f64> = radii
                .iter()
                .map(|&r| legendre_with_derivative(n, affine(r, outer_radius)).0 / (r * r))
                .collect();
            tests.push(solver.solve_block(hi, &data)?);
        }
        Ok(Self {
            outer_radius,
            harmonics,
            modes,
            tests,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `π_a(x)` for every mode.
    pub fn basis_values(&self, x: &Vec3) -> Vec<f64> {
        let r = norm(x);
        let s = affine(r, self.outer_radius);
        self.modes
            .iter()
            .map(|&(hi, n)| {
                let h = &self.harmonics[hi];
                let y = h.value(x) / r.powi(h.l as i32);
                legendre_with_derivative(n, s).0 * y / (r * r)
            })
            .collect()
    }

    /// Values and gradients of the test fields at `points`.
    pub fn test_table(&self, points: &[Vec3]) -> FieldTable {
        FieldTable::from_jets(points, self.len(), |x, out| {
            DivergenceSolution::jets_of_family(&self.tests, x, out)
        })
    }
}

fn affine(r: f64, outer: f64) -> f64 {
    (2.0 * r - (1.0 + outer)) / (outer - 1.0)
}

/// Pressure coefficients per time node.
#[derive(Clone, Debug)]
pub struct PressureField {
    pub space: Arc<PressureSpace>,
    pub coefficients: Vec<Vec<f64>>,
    /// Largest `|∫p| / |Ω_R|` over the nodes.
    pub mean: f64,
    /// Largest relative weak residual on the independent quadrature.
    pub weak_residual: f64,
    pub balance: MomentumBalance,
}

impl PressureField {
    pub fn value(&self, x: &Vec3, node: usize) -> f64 {
        self.space
            .basis_values(x)
            .iter()
            .zip(&self.coefficients[node])
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for c in out.coefficients.iter_mut() {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        out
    }
}

/// The pieces of the weak form on one quadrature.
struct WeakForm {
    quad: ShellQuadrature,
    sampler: FieldSampler,
    tests: FieldTable,
    /// `(π_a, div ψ_b)`.
    coupling: DMatrix<f64>,
    /// `∫ π_a`.
    means: Vec<f64>,
}

impl WeakForm {
    fn new(sol: &FlowSolution, space: &PressureSpace, quad: ShellQuadrature) -> Self {
        let sampler = FieldSampler::new(&sol.system, quad.clone(), Vec::new());
        let tests = space.test_table(&quad.points);
        let np = quad.len();
        let m = space.len();
        let mut pi = DMatrix::zeros(np, m);
        let mut means = vec![0.0; m];
        for (p, (x, w)) in quad.points.iter().zip(&quad.weights).enumerate() {
            for (a, v) in space.basis_values(x).into_iter().enumerate() {
                pi[(p, a)] = w * v;
                means[a] += w * v;
            }
        }
        let mut div = DMatrix::zeros(np, m);
        for b in 0..m {
            for p in 0..np {
                div[(p, b)] = (0..3).map(|i| tests.data[((3 + 4 * i) * np + p, b)]).sum();
            }
        }
        let coupling = pi.tr_mul(&div);
        Self {
            quad,
            sampler,
            tests,
            coupling,
            means,
        }
    }

    /// Right sides `r_b(t_n)` for the nodes `start..end`, one column per node.
    fn loads(
        &self,
        sol: &FlowSolution,
        balance: MomentumBalance,
        start: usize,
        end: usize,
    ) -> DMatrix<f64> {
        let (u, ut) = self.sampler.sample(sol, start..end, FieldPart::Full);
        let ext = self.sampler.extension_part(sol, start..end);
        let np = self.quad.len();
        let profile = sol.profile();
        let forcing = &sol.system.forcing;
        let times = sol.times();
        let cols = end - start;
        let mut g = DMatrix::zeros(COMPONENTS * np, cols);
        for col in 0..cols {
            let t = times[start + col];
            let xi = profile.xi(t);
            let om = profile.omega;
            let amp = forcing.amplitude_at(t);
            for (p, (x, w)) in self.quad.points.iter().zip(&self.quad.weights).enumerate() {
                let val = |m: &DMatrix<f64>, i: usize| m[(i * np + p, col)];
                let grad =
                    |m: &DMatrix<f64>, i: usize, j: usize| m[((3 + 3 * i + j) * np + p, col)];
                let rot = swirl_velocity(x);
                let vel = [xi, om * rot[1], om * rot[2]];
                let uu = [val(&u, 0), val(&u, 1), val(&u, 2)];
                let spin = crate::vec3::cross(&E1, &uu);
                let b0 = forcing.body_profile(x);
                for i in 0..3 {
                    let transport: f64 = (0..3).map(|j| vel[j] * grad(&u, i, j)).sum();
                    let convect: f64 = match balance {
                        MomentumBalance::NavierStokes => {
                            (0..3).map(|j| uu[j] * grad(&u, i, j)).sum()
                        }
                        MomentumBalance::Linear => (0..3)
                            .map(|j| {
                                let (e, de) = (val(&ext, j), grad(&ext, i, j));
                                let (v, dv) = (uu[j] - e, grad(&u, i, j) - de);
                                e * dv + v * de
                            })
                            .sum(),
                    };
                    let f = amp * b0[i] - convect;
                    g[(i * np + p, col)] = w * (val(&ut, i) - transport + om * spin[i] - f);
                    for j in 0..3 {
                        g[((3 + 3 * i + j) * np + p, col)] = w * grad(&u, i, j);
                    }
                }
            }
        }
        self.tests.project(&g)
    }
}

/// Recovers the pressure of `sol` on `quad`, and checks
/// the weak residual on a refined quadrature.
pub fn recover_pressure(
    sol: &FlowSolution,
    space: Arc<PressureSpace>,
    quad: &ShellQuadrature,
    balance: MomentumBalance,
) -> Result<PressureField> {
    let n_t = sol.n_t();
    let m = space.len();
    let coarse = WeakForm::new(sol, &space, quad.clone());
    let sv = coarse.coupling.singular_values();
    if !(sv.min() > 1e-12 * sv.max()) {
        return Err(Error::PressureSpaceDegenerate);
    }
    let lu = coarse.coupling.transpose().lu();
    let fine_domain = ShellDomain {
        radial_order: quad.domain.radial_order + 6,
        angular_degree: quad.domain.angular_degree + 4,
        ..quad.domain.clone()
    };
    let fine = WeakForm::new(sol, &space, fine_domain.build_quadrature());
    let volume = quad.total_measure();

    let mut coefficients = Vec::with_capacity(n_t);
    let mut mean: f64 = 0.0;
    let mut weak_residual: f64 = 0.0;
    let mut start = 0;
    while start < n_t {
        let end = (start + 16).min(n_t);
        let r = coarse.loads(sol, balance, start, end);
        let rf = fine.loads(sol, balance, start, end);
        for col in 0..end - start {
            // Σ_a p_a (π_a, div ψ_b) = r_b
            let rhs = r.column(col).clone_owned();
            let p = lu.solve(&rhs).ok_or(Error::PressureSpaceDegenerate)?;
            let mu: f64 = p.iter().zip(&coarse.means).map(|(a, b)| a * b).sum();
            mean = mean.max(mu.abs() / volume);
            let rfc = rf.column(col).clone_owned();
            let res = fine.coupling.tr_mul(&p) - &rfc;
            let scale = rfc.norm().max(r.column(col).norm());
            if scale > 0.0 {
                weak_residual = weak_residual.max(res.norm() / scale);
            }
            coefficients.push(p.iter().copied().collect::<Vec<f64>>());
        }
        start = end;
    }
    debug_assert!(coefficients.iter().all(|c| c.len() == m));
    Ok(PressureField {
        space,
        coefficients,
        mean,
        weak_residual,
        balance,
    })
}
