//! Divergence-free toroidal/poloidal modes on a shell with homogeneous
//! Dirichlet data on both spheres.
//!
//! Toroidal modes are `∇ψ × x` with `ψ = f(r) Y_lm`, `f = (r-1)(R-r) P_n`.
//! Poloidal modes are `curl curl (φ x) = ∇∂_r(rφ) − x Δφ` with
//! `φ = g(r) Y_lm`, `g = (r-1)²(R-r)² P_n`. `P_n` is the Legendre polynomial
//! of the radius mapped to `[-1, 1]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use super::harmonics::{harmonic_table, SolidHarmonic};
use super::jet::{FieldJet, Jet, Series};
use crate::error::{Error, Result};
use crate::geometry::{AngularRule, ShellDomain, ShellQuadrature};
use crate::vec3::{norm, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Toroidal,
    Poloidal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub family: Family,
    pub l: usize,
    pub m: i32,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisValidity {
    pub divergence_residual: f64,
    pub trace_sup: f64,
}

/// Minimum angular exactness needed to integrate products of gradients.
pub fn required_angular_degree(max_degree: usize) -> usize {
    2 * max_degree + 4
}

#[derive(Clone, Debug)]
pub struct SolenoidalBasis {
    pub domain: ShellDomain,
    pub max_degree: usize,
    pub radial_count: usize,
    pub modes: Vec<Mode>,
    harmonics: Vec<SolidHarmonic>,
    scales: Vec<f64>,
    pub gram: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

impl SolenoidalBasis {
    /// Modes and harmonics only; the forms are left empty.
    fn skeleton(domain: &ShellDomain, max_degree: usize, radial_count: usize) -> Result<Self> {
        if max_degree < 1 || radial_count < 1 {
            return Err(Error::InvalidConfig(format!(
                "basis needs L >= 1 and N >= 1 (got {max_degree}, {radial_count})"
            )));
        }
        let required = required_angular_degree(max_degree);
        if domain.angular_degree < required {
            return Err(Error::QuadratureTooCoarse {
                degree: domain.angular_degree,
                max_degree,
                required,
            });
        }
        let mut modes = Vec::new();
        for family in [Family::Toroidal, Family::Poloidal] {
            for l in 1..=max_degree {
                for m in -(l as i32)..=(l as i32) {
                    for n in 0..radial_count {
                        modes.push(Mode { family, l, m, n });
                    }
                }
            }
        }
        let k = modes.len();
        Ok(Self {
            domain: domain.clone(),
            max_degree,
            radial_count,
            modes,
            harmonics: harmonic_table(1, max_degree),
            scales: vec![1.0; k],
            gram: DMatrix::zeros(k, k),
            stiffness: DMatrix::zeros(k, k),
        })
    }

    /// Rebuilds a basis from stored normalizations and forms (for caching).
    pub fn from_parts(
        domain: &ShellDomain,
        max_degree: usize,
        radial_count: usize,
        scales: Vec<f64>,
        gram: DMatrix<f64>,
        stiffness: DMatrix<f64>,
    ) -> Result<Self> {
        let mut basis = Self::skeleton(domain, max_degree, radial_count)?;
        let k = basis.len();
        if scales.len() != k || gram.shape() != (k, k) || stiffness.shape() != (k, k) {
            return Err(Error::FrameMismatch(format!(
                "stored basis parts do not match {k} modes"
            )));
        }
        basis.scales = scales;
        basis.gram = gram;
        basis.stiffness = stiffness;
        Ok(basis)
    }

    /// Per-mode normalization factors.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn build(domain: &ShellDomain, max_degree: usize, radial_count: usize) -> Result<Self> {
        let mut basis = Self::skeleton(domain, max_degree, radial_count)?;
        let k = basis.len();
        let quad = domain.build_quadrature();
        // Unit L² norm per mode keeps the Gram matrix well scaled.
        let mut diag = vec![0.0; k];
        for (x, w) in quad.points.iter().zip(&quad.weights) {
            for (a, jet) in basis.eval_point(x).iter().enumerate() {
                diag[a] += w * (jet.u[0].powi(2) + jet.u[1].powi(2) + jet.u[2].powi(2));
            }
        }
        basis.scales = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut forms = vec![
            FormSpec::symmetric(3, |j, _, _, out| out.copy_from_slice(&j.u)),
            FormSpec::symmetric(9, |j, _, _, out| {
                for i in 0..3 {
                    out[3 * i..3 * i + 3].copy_from_slice(&j.grad[i]);
                }
            }),
        ];
        assemble_forms(&basis, &quad, &mut forms);
        let stiff = forms.pop().unwrap().matrix;
        let gram = forms.pop().unwrap().matrix;
        basis.gram = symmetrize(gram);
        basis.stiffness = symmetrize(stiff);
        Ok(basis)
    }

    /// Largest `‖div w_a‖₂` on `quad` and largest `|w_a|` on the angular
    /// nodes of both boundary spheres, over all modes.
    pub fn validity(&self, quad: &ShellQuadrature) -> BasisValidity {
        let mut div = vec![0.0; self.len()];
        let mut jets = Vec::new();
        for (x, w) in quad.points.iter().zip(&quad.weights) {
            self.eval_point_into(x, &mut jets);
            for (d, j) in div.iter_mut().zip(&jets) {
                *d += w * j.divergence().powi(2);
            }
        }
        let rule = AngularRule::gauss_product(self.domain.angular_degree);
        let mut trace: f64 = 0.0;
        for r in [self.domain.inner_radius, self.domain.outer_radius] {
            for d in &rule.directions {
                self.eval_point_into(&[r * d[0], r * d[1], r * d[2]], &mut jets);
                trace = jets.iter().map(|j| norm(&j.u)).fold(trace, f64::max);
            }
        }
        BasisValidity {
            divergence_residual: div.into_iter().fold(0.0, f64::max).sqrt(),
            trace_sup: trace,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn outer_radius(&self) -> f64 {
        self.domain.outer_radius
    }

    /// Jets of every mode at `x`, in mode order.
    pub fn eval_point(&self, x: &Vec3) -> Vec<FieldJet> {
        let mut out = Vec::with_capacity(self.len());
        self.eval_point_into(x, &mut out);
        out
    }

    pub fn eval_point_into(&self, x: &Vec3, out: &mut Vec<FieldJet>) {
        out.clear();
        let r = norm(x);
        let (a_in, b_out) = (self.domain.inner_radius, self.domain.outer_radius);
        let half = 0.5 * (b_out - a_in);
        let arg = Series::linear(1.0 / half, -(a_in + b_out) / (b_out - a_in), r);
        let legendre = Series::legendre(&arg, self.radial_count);
        let bubble = Series::linear(1.0, -a_in, r)
            .mul(&Series::linear(-1.0, b_out, r))
            .scale(1.0 / (half * half));
        let bubble2 = bubble.mul(&bubble);
        let rs = Series::linear(1.0, 0.0, r);
        let inv_r = Series::power(-1, r);
        let inv_r2 = Series::power(-2, r);
        let s_jets: Vec<Jet> = self.harmonics.iter().map(|h| h.jet(x)).collect();

        let mut idx = 0;
        for family in [Family::Toroidal, Family::Poloidal] {
            for l in 1..=self.max_degree {
                let rl = Series::power(-(l as i32), r);
                let ll = (l * (l + 1)) as f64;
                let radial: Vec<(Jet, Jet)> = legendre
                    .iter()
                    .map(|p| match family {
                        Family::Toroidal => {
                            let h = bubble.mul(p).mul(&rl);
                            (Jet::radial(h.derivatives(), x, r), Jet::default())
                        }
                        Family::Poloidal => {
                            let g = bubble2.mul(p);
                            let g1 = g.derivative();
                            let g2 = g1.derivative();
                            let h_phi = g.add(&rs.mul(&g1)).mul(&rl);
                            let h_lap = g2
                                .add(&g1.mul(&inv_r).scale(2.0))
                                .add(&g.mul(&inv_r2).scale(-ll))
                                .mul(&rl);
                            (
                                Jet::radial(h_phi.derivatives(), x, r),
                                Jet::radial(h_lap.derivatives(), x, r),
                            )
                        }
                    })
                    .collect();
                let offset = l * l - 1;
                for mi in 0..(2 * l + 1) {
                    let s = &s_jets[offset + mi];
                    for (rad_a, rad_b) in &radial {
                        let jet = match family {
                            Family::Toroidal => FieldJet::toroidal(&rad_a.mul(s), x),
                            Family::Poloidal => FieldJet::poloidal(&rad_a.mul(s), &rad_b.mul(s), x),
                        };
                        out.push(jet.scaled(self.scales[idx]));
                        idx += 1;
                    }
                }
            }
        }
    }

    /// Jets of a coefficient combination `Σ a_i mode_i` at `x`.
    pub fn eval_combination(&self, coeffs: &[f64], x: &Vec3) -> FieldJet {
        let mut out = FieldJet::default();
        for (c, j) in coeffs.iter().zip(self.eval_point(x)) {
            if *c != 0.0 {
                out.axpy(*c, &j);
            }
        }
        out
    }

    /// Index of the first mode of each `(family, l)` block, for diagnostics.
    pub fn mode_index(&self, mode: &Mode) -> Option<usize> {
        self.modes.iter().position(|m| m == mode)
    }
}

/// Length of the [`hessian_features`] vector.
pub const HESSIAN_FEATURES: usize = 18;

/// Features whose Euclidean products give `D²u : D²v`: each Hessian is
/// symmetric, so six entries per component with off-diagonals weighted √2.
pub fn hessian_features(j: &FieldJet, o: &mut [f64]) {
    for i in 0..3 {
        let h = &j.hess[i];
        o[6 * i..6 * i + 6].copy_from_slice(&[
            h[0][0],
            h[1][1],
            h[2][2],
            SQRT_2 * h[0][1],
            SQRT_2 * h[0][2],
            SQRT_2 * h[1][2],
        ]);
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

type Feature<'a> = Box<dyn Fn(&FieldJet, &Vec3, usize, &mut [f64]) + 'a>;

/// Quadrature bilinear form `Σ_p w_p <left(u_a)(p), right(u_b)(p)>`.
/// The feature closures receive the mode jet, the point and its global index.
pub struct FormSpec<'a> {
    dim: usize,
    left: Feature<'a>,
    right: Option<Feature<'a>>,
    pub matrix: DMatrix<f64>,
}

impl<'a> FormSpec<'a> {
    pub fn symmetric<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&FieldJet, &Vec3, usize, &mut [f64]) + 'a,
    {
        Self {
            dim,
            left: Box::new(f),
            right: None,
            matrix: DMatrix::zeros(0, 0),
        }
    }

    pub fn general<F, G>(dim: usize, left: F, right: G) -> Self
    where
        F: Fn(&FieldJet, &Vec3, usize, &mut [f64]) + 'a,
        G: Fn(&FieldJet, &Vec3, usize, &mut [f64]) + 'a,
    {
        Self {
            dim,
            left: Box::new(left),
            right: Some(Box::new(right)),
            matrix: DMatrix::zeros(0, 0),
        }
    }
}

/// Accumulates all forms in one sweep over the quadrature, one radial shell
/// at a time. Summation order is fixed, so results are reproducible.
pub fn assemble_forms(basis: &SolenoidalBasis, quad: &ShellQuadrature, forms: &mut [FormSpec]) {
    let k = basis.len();
    for f in forms.iter_mut() {
        f.matrix = DMatrix::zeros(k, k);
    }
    let na = quad.angular_len();
    let mut jets: Vec<Vec<FieldJet>> = vec![Vec::new(); na];
    let mut buf = vec![0.0; 27];
    for shell in 0..quad.radii.len() {
        let base = shell * na;
        for (p, jet_row) in jets.iter_mut().enumerate() {
            basis.eval_point_into(&quad.points[base + p], jet_row);
        }
        for form in forms.iter_mut() {
            let dim = form.dim;
            // Left features are stored transposed so the product runs as a
            // blocked matrix multiply.
            let mut lt = DMatrix::zeros(k, dim * na);
            let mut rm = form.right.as_ref().map(|_| DMatrix::zeros(dim * na, k));
            for p in 0..na {
                let gi = base + p;
                let x = &quad.points[gi];
                let w = quad.weights[gi];
                let sw = w.sqrt();
                for a in 0..k {
                    let jet = &jets[p][a];
                    (form.left)(jet, x, gi, &mut buf[..dim]);
                    match (&form.right, rm.as_mut()) {
                        (Some(right), Some(rm)) => {
                            for d in 0..dim {
                                lt[(a, p * dim + d)] = w * buf[d];
                            }
                            right(jet, x, gi, &mut buf[..dim]);
                            for d in 0..dim {
                                rm[(p * dim + d, a)] = buf[d];
                            }
                        }
                        _ => {
                            for d in 0..dim {
                                lt[(a, p * dim + d)] = sw * buf[d];
                            }
                        }
                    }
                }
            }
            match rm {
                Some(rm) => form.matrix.gemm(1.0, &lt, &rm, 1.0),
                None => {
                    let r = lt.transpose();
                    form.matrix.gemm(1.0, &lt, &r, 1.0)
                }
            }
        }
    }
}

/// `Σ_p w_p <feature(u_a)(p), target(p)>` for every mode `a`.
pub fn project_features<F>(
    basis: &SolenoidalBasis,
    quad: &ShellQuadrature,
    dim: usize,
    f: F,
) -> Vec<f64>
where
    F: Fn(&FieldJet, &Vec3, usize, &mut [f64]) -> f64,
{
    let mut out = vec![0.0; basis.len()];
    let mut buf = vec![0.0; dim];
    let mut jets = Vec::new();
    for (gi, (x, w)) in quad.points.iter().zip(&quad.weights).enumerate() {
        basis.eval_point_into(x, &mut jets);
        for (a, jet) in jets.iter().enumerate() {
            out[a] += w * f(jet, x, gi, &mut buf);
        }
    }
    out
}
