//! Differential operators on basis expansions and the orthogonal projection
//! onto the discrete solenoidal space.

use nalgebra::{Cholesky, DVector, Dyn};

use super::basis::SolenoidalBasis;
use crate::error::{Error, Result};
use crate::geometry::ShellQuadrature;
use crate::vec3::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    Gradient,
    Divergence,
    Laplacian,
    LerayProjection,
}

/// A velocity field either as basis coefficients or as samples on the
/// quadrature nodes.
#[derive(Clone, Copy, Debug)]
pub enum FieldInput<'a> {
    Modal(&'a [f64]),
    Sampled(&'a [Vec3]),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldOutput {
    Scalars(Vec<f64>),
    Vectors(Vec<Vec3>),
    Tensors(Vec<Mat3>),
    Modal(Vec<f64>),
}

/// Basis, quadrature and factored Gram matrix.
pub struct OperatorContext<'a> {
    pub basis: &'a SolenoidalBasis,
    pub quad: ShellQuadrature,
    gram: Cholesky<f64, Dyn>,
}

impl<'a> OperatorContext<'a> {
    pub fn new(basis: &'a SolenoidalBasis) -> Result<Self> {
        let gram = basis
            .gram
            .clone()
            .cholesky()
            .ok_or(Error::BasisDegenerate {
                condition: f64::INFINITY,
            })?;
        Ok(Self {
            basis,
            quad: basis.domain.build_quadrature(),
            gram,
        })
    }

    /// Gram-orthogonal projection of samples onto the basis span.
    pub fn project(&self, samples: &[Vec3]) -> Result<Vec<f64>> {
        if samples.len() != self.quad.len() {
            return Err(Error::FrameMismatch(format!(
                "{} samples for {} quadrature nodes",
                samples.len(),
                self.quad.len()
            )));
        }
        let mut rhs = DVector::zeros(self.basis.len());
        let mut jets = Vec::new();
        for ((x, w), v) in self.quad.points.iter().zip(&self.quad.weights).zip(samples) {
            self.basis.eval_point_into(x, &mut jets);
            for (a, j) in jets.iter().enumerate() {
                rhs[a] += w * (j.u[0] * v[0] + j.u[1] * v[1] + j.u[2] * v[2]);
            }
        }
        Ok(self.gram.solve(&rhs).iter().copied().collect())
    }

    /// Samples of a coefficient vector on the quadrature nodes.
    pub fn sample(&self, coeffs: &[f64]) -> Vec<Vec3> {
        self.quad
            .points
            .iter()
            .map(|x| self.basis.eval_combination(coeffs, x).u)
            .collect()
    }

    /// Applies `op`. Differential operators act on the analytic expansion and
    /// are returned as samples on the quadrature nodes; sampled input is
    /// projected onto the span first.
    pub fn apply(&self, op: Operator, field: FieldInput) -> Result<FieldOutput> {
        let coeffs = match field {
            FieldInput::Modal(c) => {
                if c.len() != self.basis.len() {
                    return Err(Error::FrameMismatch(format!(
                        "{} coefficients for {} modes",
                        c.len(),
                        self.basis.len()
                    )));
                }
                c.to_vec()
            }
            FieldInput::Sampled(s) => self.project(s)?,
        };
        let jets = || {
            self.quad
                .points
                .iter()
                .map(|x| self.basis.eval_combination(&coeffs, x))
        };
        Ok(match op {
            Operator::LerayProjection => FieldOutput::Modal(coeffs),
            Operator::Gradient => FieldOutput::Tensors(jets().map(|j| j.grad).collect()),
            Operator::Divergence => FieldOutput::Scalars(jets().map(|j| j.divergence()).collect()),
            Operator::Laplacian => FieldOutput::Vectors(jets().map(|j| j.laplacian()).collect()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShellDomain;

    #[test]
    fn projection_reproduces_span_elements() {
        let dom = ShellDomain::new(2.0, 10, 8).unwrap();
        let basis = SolenoidalBasis::build(&dom, 1, 2).unwrap();
        let ctx = OperatorContext::new(&basis).unwrap();
        let c: Vec<f64> = (0..basis.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let samples = ctx.sample(&c);
        match ctx
            .apply(Operator::LerayProjection, FieldInput::Sampled(&samples))
            .unwrap()
        {
            FieldOutput::Modal(p) => {
                for (a, b) in p.iter().zip(&c) {
                    assert!((a - b).abs() < 1e-11);
                }
            }
            _ => unreachable!(),
        }
        match ctx
            .apply(Operator::Divergence, FieldInput::Modal(&c))
            .unwrap()
        {
            FieldOutput::Scalars(d) => assert!(d.iter().all(|v| v.abs() < 1e-10)),
            _ => unreachable!(),
        }
    }
}
