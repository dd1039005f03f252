//! Space-time norms of reconstructed solutions.
//!
//! Point values come from a [`FieldSampler`]: a table of basis values and
//! gradients on a quadrature (plus optional probe points that only enter
//! sup-norms), multiplied by the basis coefficients of many time nodes at
//! once. Second-derivative norms use the assembled Hessian forms instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::ops::Range;

use super::solution::FlowSolution;
use super::system::GalerkinSystem;
use crate::fields::table::{FieldTable, COMPONENTS};
use crate::geometry::{ShellQuadrature, WakeWeight};
use crate::vec3::Vec3;

/// Time nodes evaluated per batch.
const CHUNK: usize = 16;

/// Which part of `u = v + κ ũ` to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldPart {
    /// The full velocity `u`.
    Full,
    /// The Galerkin part `v`.
    Perturbation,
}

#[derive(Clone, Debug)]
pub struct FieldSampler {
    pub quad: ShellQuadrature,
    pub probes: Vec<Vec3>,
    table: FieldTable,
    ext: FieldTable,
}

impl FieldSampler {
    pub fn new(system: &GalerkinSystem, quad: ShellQuadrature, probes: Vec<Vec3>) -> Self {
        let points: Vec<Vec3> = quad.points.iter().chain(&probes).copied().collect();
        let table = FieldTable::from_basis(&system.eigen.basis, &points);
        let extension = &system.extension;
        let ext = FieldTable::from_jets(&points, 2, |x, out| {
            out.clear();
            let (a, b) = extension.profiles(x);
            out.push(a);
            out.push(b);
        });
        Self {
            quad,
            probes,
            table,
            ext,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.table.points
    }

    /// Number of points carrying quadrature weights (they come first).
    pub fn quadrature_len(&self) -> usize {
        self.quad.len()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table(&self) -> &FieldTable {
        &self.table
    }

    /// Values and gradients of `u` (or `v`) and of its time derivative at the
    /// given nodes: two `12·P × nodes` matrices in [`FieldTable`] layout.
    pub fn sample(
        &self,
        sol: &FlowSolution,
        nodes: Range<usize>,
        part: FieldPart,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = &sol.eigen().vectors;
        let k = v.nrows();
        let cols = nodes.len();
        let c = DMatrix::from_fn(k, cols, |i, n| sol.trajectory.samples[nodes.start + n][i]);
        let d = DMatrix::from_fn(k, cols, |i, n| {
            sol.trajectory.derivatives[nodes.start + n][i]
        });
        let mut u = self.table.evaluate(&(v * c));
        let mut ut = self.table.evaluate(&(v * d));
        if part == FieldPart::Full {
            let (e, et) = self.extension_weights(sol, nodes);
            if let (Some(e), Some(et)) = (e, et) {
                u += self.ext.evaluate(&e);
                ut += self.ext.evaluate(&et);
            }
        }
        (u, ut)
    }

    /// Values and gradients of `u` (or `v`) alone at the given nodes.
    pub fn sample_state(
        &self,
        sol: &FlowSolution,
        nodes: Range<usize>,
        part: FieldPart,
    ) -> DMatrix<f64> {
        let v = &sol.eigen().vectors;
        let c = DMatrix::from_fn(v.nrows(), nodes.len(), |i, n| {
            sol.trajectory.samples[nodes.start + n][i]
        });
        let mut u = self.table.evaluate(&(v * c));
        if part == FieldPart::Full {
            if let Some(e) = self.extension_weights(sol, nodes).0 {
                u += self.ext.evaluate(&e);
            }
        }
        u
    }

    /// `∫ g · w_a` for every basis field, from weighted value integrands on
    /// the quadrature points only (`3·Q` rows, weights already applied).
    pub fn project_quadrature_values(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let nq = self.quadrature_len();
        let np = self.len();
        let k = self.table.functions();
        let mut out = DMatrix::zeros(g.ncols(), k);
        for c in 0..3 {
            out += g.rows(c * nq, nq).transpose() * self.table.data.rows(c * np, nq);
        }
        out.transpose()
    }

    /// Like [`sample`](Self::sample) with values only (`3·P` rows).
    pub fn sample_values(
        &self,
        sol: &FlowSolution,
        nodes: Range<usize>,
        part: FieldPart,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = &sol.eigen().vectors;
        let k = v.nrows();
        let cols = nodes.len();
        let c = DMatrix::from_fn(k, cols, |i, n| sol.trajectory.samples[nodes.start + n][i]);
        let d = DMatrix::from_fn(k, cols, |i, n| {
            sol.trajectory.derivatives[nodes.start + n][i]
        });
        let mut u = self.table.evaluate_values(&(v * c));
        let mut ut = self.table.evaluate_values(&(v * d));
        if part == FieldPart::Full {
            if let (Some(e), Some(et)) = self.extension_weights(sol, nodes) {
                u += self.ext.evaluate_values(&e);
                ut += self.ext.evaluate_values(&et);
            }
        }
        (u, ut)
    }

    /// Profile weights `κ(ξ, ω)` and `κ(ξ', 0)` per node, or `None` when the
    /// extension does not contribute.
    fn extension_weights(
        &self,
        sol: &FlowSolution,
        nodes: Range<usize>,
    ) -> (Option<DMatrix<f64>>, Option<DMatrix<f64>>) {
        let kappa = sol.extension_weight;
        if kappa == 0.0 || sol.extension().is_zero() {
            return (None, None);
        }
        let times = sol.times();
        let p = sol.profile();
        let cols = nodes.len();
        let mut e = DMatrix::zeros(2, cols);
        let mut et = DMatrix::zeros(2, cols);
        for n in 0..cols {
            let t = times[nodes.start + n];
            e[(0, n)] = kappa * p.xi(t);
            e[(1, n)] = kappa * p.omega;
            et[(0, n)] = kappa * p.xi_dot(t);
        }
        (Some(e), Some(et))
    }

    /// Values and gradients of `κ ũ` alone at the given nodes.
    pub fn extension_part(&self, sol: &FlowSolution, nodes: Range<usize>) -> DMatrix<f64> {
        let cols = nodes.len();
        match self.extension_weights(sol, nodes).0 {
            Some(e) => self.ext.evaluate(&e),
            None => DMatrix::zeros(COMPONENTS * self.len(), cols),
        }
    }
}

/// `‖u‖₆` of column `col` over the quadrature points; works for value
/// tables and full tables alike (values come first).
pub fn column_l6(m: &DMatrix<f64>, np: usize, quad: &ShellQuadrature, col: usize) -> f64 {
    let c = m.column(col);
    let mut l6 = 0.0;
    for (p, w) in quad.weights.iter().enumerate() {
        let s: f64 = (0..3).map(|i| c[i * np + p].powi(2)).sum();
        l6 += w * s * s * s;
    }
    l6.powf(1.0 / 6.0)
}

/// `‖∇u‖₂` of column `col` of a full table over the quadrature points.
pub fn column_grad_l2(m: &DMatrix<f64>, np: usize, quad: &ShellQuadrature, col: usize) -> f64 {
    let c = m.column(col);
    let mut g2 = 0.0;
    for (p, w) in quad.weights.iter().enumerate() {
        g2 += w * (3..COMPONENTS).map(|i| c[i * np + p].powi(2)).sum::<f64>();
    }
    g2.sqrt()
}

/// `max_p weight(x_p) |u(x_p)|` over all sampled points of column `col`.
pub fn column_weighted_sup(
    m: &DMatrix<f64>,
    points: &[Vec3],
    weight: &WakeWeight,
    col: usize,
) -> f64 {
    let np = points.len();
    let c = m.column(col);
    points
        .iter()
        .enumerate()
        .map(|(p, x)| {
            let s: f64 = (0..3).map(|i| c[i * np + p].powi(2)).sum();
            weight.weight(x) * s.sqrt()
        })
        .fold(0.0, f64::max)
}

/// Norms at one time node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeNorms {
    pub time: f64,
    pub l6: f64,
    pub grad_l2: f64,
    pub rate_l6: f64,
    pub rate_grad_l2: f64,
    /// `[!]u[!]_{∞,1,λ}` on the sampled points.
    pub weighted_sup: f64,
}

/// Energy-class norms of a solution over one period.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyNorms {
    pub series: Vec<NodeNorms>,
    /// `sup_t (‖u‖₆ + ‖∇u‖₂)`.
    pub energy: f64,
    /// `sup_t (‖u_t‖₆ + ‖∇u_t‖₂)`.
    pub rate_energy: f64,
    /// `‖D²u‖_{L²(L²)}`.
    pub hessian: f64,
    /// `‖D²u_t‖_{L²(L²)}`.
    pub rate_hessian: f64,
    /// `sup_t [!]u[!]_{∞,1,λ}`.
    pub weighted_sup: f64,
}

impl EnergyNorms {
    /// Left side of the basic energy estimate.
    pub fn basic(&self) -> f64 {
        self.energy + self.hessian
    }

    /// Left side of the time-differentiated estimate.
    pub fn differentiated(&self) -> f64 {
        self.rate_energy + self.rate_hessian
    }
}

/// Evaluates all energy-class norms of `sol` (or its Galerkin part).
///
/// `L⁶` and weighted sup-norms use point values; gradient and Hessian norms
/// are exact quadratic forms in the coefficients.
pub fn energy_norms(sol: &FlowSolution, sampler: &FieldSampler, part: FieldPart) -> EnergyNorms {
    let n_t = sol.n_t();
    let np = sampler.len();
    let weight = WakeWeight {
        lambda: sol.profile().lambda().max(0.0),
        order: 1,
    };
    let times = sol.times();
    let (grad, rate_grad) = gradient_norms(sol, part);
    let mut series = Vec::with_capacity(n_t);
    let mut start = 0;
    while start < n_t {
        let end = (start + CHUNK).min(n_t);
        let (u, ut) = sampler.sample_values(sol, start..end, part);
        for col in 0..end - start {
            let n = start + col;
            series.push(NodeNorms {
                time: times[n],
                l6: column_l6(&u, np, &sampler.quad, col),
                grad_l2: grad[n],
                rate_l6: column_l6(&ut, np, &sampler.quad, col),
                rate_grad_l2: rate_grad[n],
                weighted_sup: column_weighted_sup(&u, sampler.points(), &weight, col),
            });
        }
        start = end;
    }
    let (hessian, rate_hessian) = hessian_norms(sol, part);
    EnergyNorms {
        energy: series.iter().map(|s| s.l6 + s.grad_l2).fold(0.0, f64::max),
        rate_energy: series
            .iter()
            .map(|s| s.rate_l6 + s.rate_grad_l2)
            .fold(0.0, f64::max),
        weighted_sup: series.iter().map(|s| s.weighted_sup).fold(0.0, f64::max),
        hessian,
        rate_hessian,
        series,
    }
}

/// Per-node values of `Q(u)` and `Q(u_t)` for a quadratic form given by its
/// frame matrix, the cross vectors with the two extension profiles and
/// their 2×2 block.
fn form_series(
    sol: &FlowSolution,
    part: FieldPart,
    matrix: &DMatrix<f64>,
    cross: &[Vec<f64>; 2],
    block: &[[f64; 2]; 2],
) -> (Vec<f64>, Vec<f64>) {
    let sys = &sol.system;
    let kappa = if part == FieldPart::Full && !sys.extension.is_zero() {
        sol.extension_weight
    } else {
        0.0
    };
    let p = &sys.profile;
    let eval = |c: &[f64], a: f64, b: f64| {
        let cv = DVector::from_column_slice(c);
        let mut s = (matrix * &cv).dot(&cv);
        if kappa != 0.0 {
            let (ea, eb) = (kappa * a, kappa * b);
            for (j, cj) in c.iter().enumerate() {
                s += 2.0 * cj * (ea * cross[0][j] + eb * cross[1][j]);
            }
            s += ea * ea * block[0][0] + 2.0 * ea * eb * block[0][1] + eb * eb * block[1][1];
        }
        s.max(0.0)
    };
    let times = sol.times();
    let mut a = Vec::with_capacity(times.len());
    let mut b = Vec::with_capacity(times.len());
    for (n, t) in times.iter().enumerate() {
        a.push(eval(&sol.trajectory.samples[n], p.xi(*t), p.omega));
        b.push(eval(&sol.trajectory.derivatives[n], p.xi_dot(*t), 0.0));
    }
    (a, b)
}

/// `‖∇u(t_n)‖₂` and `‖∇u_t(t_n)‖₂` at every node.
pub fn gradient_norms(sol: &FlowSolution, part: FieldPart) -> (Vec<f64>, Vec<f64>) {
    let sys = &sol.system;
    let e = &sys.ext_loads;
    let (a, b) = form_series(
        sol,
        part,
        &sys.blocks.stiffness,
        &e.grad_cross,
        &e.grad_block,
    );
    (
        a.into_iter().map(f64::sqrt).collect(),
        b.into_iter().map(f64::sqrt).collect(),
    )
}

/// `(‖D²u‖_{L²(L²)}, ‖D²u_t‖_{L²(L²)})`; the time integral of the periodic
/// trigonometric interpolant is the nodal mean.
pub fn hessian_norms(sol: &FlowSolution, part: FieldPart) -> (f64, f64) {
    let sys = &sol.system;
    let e = &sys.ext_loads;
    let (a, b) = form_series(sol, part, &sys.blocks.hessian, &e.hess_cross, &e.hess_block);
    let dt = sol.trajectory.period / sol.n_t() as f64;
    (
        (dt * a.iter().sum::<f64>()).sqrt(),
        (dt * b.iter().sum::<f64>()).sqrt(),
    )
}
