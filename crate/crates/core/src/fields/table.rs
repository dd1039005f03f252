//! Point tables of values and gradients for a family of vector fields.
//!
//! Rows are component-major: row `c·P + p` holds component `c` at point `p`,
//! with `c = 0..3` the values and `c = 3 + 3i + j` the entries `∂_j u_i`.
//! Evaluating many coefficient vectors at once is then a single product.

use nalgebra::{DMatrix, DMatrixView};

use super::basis::SolenoidalBasis;
use super::jet::FieldJet;
use crate::vec3::{Mat3, Vec3};

pub const COMPONENTS: usize = 12;

#[derive(Clone, Debug)]
pub struct FieldTable {
    pub points: Vec<Vec3>,
    pub data: DMatrix<f64>,
}

impl FieldTable {
    pub fn from_jets<F>(points: &[Vec3], functions: usize, mut eval: F) -> Self
    where
        F: FnMut(&Vec3, &mut Vec<FieldJet>),
    {
        let np = points.len();
        let mut data = DMatrix::zeros(COMPONENTS * np, functions);
        let mut jets = Vec::with_capacity(functions);
        for (p, x) in points.iter().enumerate() {
            eval(x, &mut jets);
            debug_assert_eq!(jets.len(), functions);
            for (a, j) in jets.iter().enumerate() {
                for c in 0..3 {
                    data[(c * np + p, a)] = j.u[c];
                }
                for i in 0..3 {
                    for k in 0..3 {
                        data[((3 + 3 * i + k) * np + p, a)] = j.grad[i][k];
                    }
                }
            }
        }
        Self {
            points: points.to_vec(),
            data,
        }
    }

    pub fn from_basis(basis: &SolenoidalBasis, points: &[Vec3]) -> Self {
        Self::from_jets(points, basis.len(), |x, out| basis.eval_point_into(x, out))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn functions(&self) -> usize {
        self.data.ncols()
    }

    /// Values and gradients of `coeffs` (one field per column).
    pub fn evaluate(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        &self.data * coeffs
    }

    /// Values only (`3·P` rows).
    pub fn evaluate_values(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        self.values() * coeffs
    }

    pub fn values(&self) -> DMatrixView<'_, f64> {
        self.data.rows(0, 3 * self.len())
    }

    /// `Σ_rows table[row, a] · integrand[row, col]` over all 12 components.
    pub fn project(&self, integrand: &DMatrix<f64>) -> DMatrix<f64> {
        (integrand.transpose() * &self.data).transpose()
    }

    /// Same with an integrand of values only (`3·P` rows).
    pub fn project_values(&self, integrand: &DMatrix<f64>) -> DMatrix<f64> {
        (integrand.transpose() * self.values()).transpose()
    }
}

/// Reads the value at point `p` of column `col` from an evaluated matrix.
#[inline]
pub fn value_at(m: &DMatrix<f64>, np: usize, p: usize, col: usize) -> Vec3 {
    [m[(p, col)], m[(np + p, col)], m[(2 * np + p, col)]]
}

/// Reads the gradient at point `p` of column `col` from an evaluated matrix.
#[inline]
pub fn grad_at(m: &DMatrix<f64>, np: usize, p: usize, col: usize) -> Mat3 {
    let mut g = [[0.0; 3]; 3];
    for (i, row) in g.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = m[((3 + 3 * i + k) * np + p, col)];
        }
    }
    g
}
