//! Dirichlet Stokes eigenpairs restricted to the solenoidal basis span.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::basis::{assemble_forms, FormSpec};
use crate::fields::{FieldJet, SolenoidalBasis};
use crate::geometry::ShellQuadrature;
use crate::vec3::Vec3;

/// Eigenvalues ascending; column `j` of `vectors` holds the basis
/// coefficients of `w_j`, normalized to `(w_i, w_j) = δ_ij`.
#[derive(Clone, Debug)]
pub struct StokesEigenSystem {
    pub basis: SolenoidalBasis,
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub gram_condition: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpectrumSummary {
    pub outer_radius: f64,
    pub max_degree: usize,
    pub radial_count: usize,
    pub eigenvalues: Vec<f64>,
    pub gram_condition: f64,
}

/// `max |(w_i, w_j) − δ_ij|`, `max |‖∇w_j‖₂² − λ_j| / λ_j` and `λ₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenCheck {
    pub orthonormality: f64,
    pub rayleigh: f64,
    pub first: f64,
}

pub fn solve_eigen(basis: &SolenoidalBasis) -> Result<StokesEigenSystem> {
    let g = &basis.gram;
    let gev = g.clone().symmetric_eigenvalues();
    let (lo, hi) = gev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(lo > 1e-12 * hi) {
        return Err(Error::BasisDegenerate { condition });
    }
    let chol = g
        .clone()
        .cholesky()
        .ok_or(Error::BasisDegenerate { condition })?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or(Error::BasisDegenerate { condition })?;
    let m = &linv * &basis.stiffness * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let k = basis.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let vecs = linv.transpose() * &eig.eigenvectors;
    let mut vectors = DMatrix::zeros(k, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (j, &src) in order.iter().enumerate() {
        let mut col = vecs.column(src).clone_owned();
        let big = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * big) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(j, &col);
        eigenvalues.push(eig.eigenvalues[src]);
    }
    if eigenvalues.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::BasisDegenerate { condition });
    }
    Ok(StokesEigenSystem {
        basis: basis.clone(),
        eigenvalues,
        vectors,
        gram_condition: condition,
    })
}

impl StokesEigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn outer_radius(&self) -> f64 {
        self.basis.outer_radius()
    }

    /// `Vᵀ K V`: a bilinear form on the basis expressed in the eigenframe.
    pub fn to_frame(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        self.vectors.transpose() * k * &self.vectors
    }

    /// `Vᵀ b`: basis load vector to eigenframe load vector.
    pub fn load_to_frame(&self, b: &[f64]) -> Vec<f64> {
        (self.vectors.transpose() * DVector::from_column_slice(b))
            .iter()
            .copied()
            .collect()
    }

    /// Frame coefficients to basis coefficients.
    pub fn to_basis(&self, c: &[f64]) -> Vec<f64> {
        (&self.vectors * DVector::from_column_slice(c))
            .iter()
            .copied()
            .collect()
    }

    /// Jet of `Σ c_j w_j` at `x`.
    pub fn eval(&self, c: &[f64], x: &Vec3) -> FieldJet {
        self.basis.eval_combination(&self.to_basis(c), x)
    }

    /// `(field, w_j)` for samples on the nodes of `quad`.
    pub fn project_onto_frame(&self, quad: &ShellQuadrature, samples: &[Vec3]) -> Result<Vec<f64>> {
        if samples.len() != quad.len() {
            return Err(Error::FrameMismatch(format!(
                "{} samples for {} quadrature nodes",
                samples.len(),
                quad.len()
            )));
        }
        let mut b = vec![0.0; self.len()];
        let mut jets = Vec::new();
        for ((x, w), v) in quad.points.iter().zip(&quad.weights).zip(samples) {
            if v == &[0.0; 3] {
                continue;
            }
            self.basis.eval_point_into(x, &mut jets);
            for (a, j) in jets.iter().enumerate() {
                b[a] += w * (j.u[0] * v[0] + j.u[1] * v[1] + j.u[2] * v[2]);
            }
        }
        Ok(self.load_to_frame(&b))
    }

    /// Re-integrates `(w_i, w_j)` and `(∇w_i, ∇w_j)` on `quad` (ideally finer
    /// than the assembly rule) and compares with `δ_ij` and `λ_j`.
    pub fn check(&self, quad: &ShellQuadrature) -> EigenCheck {
        let mut forms = vec![
            FormSpec::symmetric(3, |j, _, _, out| out.copy_from_slice(&j.u)),
            FormSpec::symmetric(9, |j, _, _, out| {
                for i in 0..3 {
                    out[3 * i..3 * i + 3].copy_from_slice(&j.grad[i]);
                }
            }),
        ];
        assemble_forms(&self.basis, quad, &mut forms);
        let g = self.to_frame(&forms[0].matrix);
        let s = self.to_frame(&forms[1].matrix);
        let mut orthonormality: f64 = 0.0;
        let mut rayleigh: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..self.len() {
                let d = if i == j { 1.0 } else { 0.0 };
                orthonormality = orthonormality.max((g[(i, j)] - d).abs());
            }
            let l = self.eigenvalues[i];
            rayleigh = rayleigh.max((s[(i, i)] - l).abs() / l);
        }
        EigenCheck {
            orthonormality,
            rayleigh,
            first: self.eigenvalues.first().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            outer_radius: self.outer_radius(),
            max_degree: self.basis.max_degree,
            radial_count: self.basis.radial_count,
            eigenvalues: self.eigenvalues.clone(),
            gram_condition: self.gram_condition,
        }
    }
}
