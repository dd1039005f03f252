//! Reconstructed flow `u = Σ c_j(t) w_j + κ ũ` of a periodic solve.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::forcing::DataNorms;
use super::pressure::PressureField;
use super::shooting::{CoefficientTrajectory, Integrator};
use super::system::{swirl_velocity, GalerkinSystem};
use crate::error::{Error, Result};
use crate::fields::extension::ExtensionField;
use crate::fields::table::FieldTable;
use crate::fields::FieldJet;
use crate::geometry::AngularRule;
use crate::periodic_linear::profile::KinematicProfile;
use crate::stokes_eigen::StokesEigenSystem;
use crate::vec3::Vec3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetadata {
    pub outer_radius: f64,
    pub modes: usize,
    pub n_t: usize,
    pub lambda: f64,
    pub omega: f64,
    pub integrator: Option<Integrator>,
    pub extension_width: f64,
    pub leray_hopf_bound: f64,
    /// The configured mean speed was negative and `e₁` was reversed.
    pub flipped_orientation: bool,
    /// `ξ` changes sign: outside the uniqueness hypothesis for the linear problem.
    pub xi_changes_sign: bool,
    pub data: DataNorms,
    pub xi_w12: f64,
    pub xi_w22: f64,
    pub periodicity_residual: f64,
    pub min_singular: f64,
}

#[derive(Clone, Debug)]
pub struct FlowSolution {
    /// System without any extra load (the pure linear operator and data).
    pub system: Arc<GalerkinSystem>,
    /// Eigenframe coefficients of `v = u − κ ũ`.
    pub trajectory: CoefficientTrajectory,
    /// `κ`: 1 for solutions of the boundary value problem, 0 for differences.
    pub extension_weight: f64,
    pub pressure: Option<PressureField>,
    pub metadata: SolutionMetadata,
}

impl FlowSolution {
    pub fn new(
        system: Arc<GalerkinSystem>,
        trajectory: CoefficientTrajectory,
        metadata: SolutionMetadata,
    ) -> Self {
        Self {
            system,
            trajectory,
            extension_weight: 1.0,
            pressure: None,
            metadata,
        }
    }

    /// The identically zero field on the frame of `system` (`κ = 0`).
    pub fn zero(system: Arc<GalerkinSystem>) -> Self {
        let traj = CoefficientTrajectory::zeros(
            system.period(),
            system.n_t,
            system.len(),
            Integrator::Rk4,
        );
        Self {
            system,
            trajectory: traj,
            extension_weight: 0.0,
            pressure: None,
            metadata: SolutionMetadata::default(),
        }
    }

    /// `v = Σ_j (a_j cos Ωt + b_j sin Ωt) w_j` with `κ = 0`, `Ω = 2π/T`.
    pub fn oscillating(system: Arc<GalerkinSystem>, a: &[f64], b: &[f64]) -> Result<Self> {
        let k = system.len();
        if a.len() != k || b.len() != k {
            return Err(Error::FrameMismatch(format!(
                "{} / {} coefficients for {k} modes",
                a.len(),
                b.len()
            )));
        }
        let w = system.profile.frequency();
        let mut traj =
            CoefficientTrajectory::zeros(system.period(), system.n_t, k, Integrator::Rk4);
        for (n, t) in system.times().into_iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            for j in 0..k {
                traj.samples[n][j] = a[j] * c + b[j] * s;
                traj.derivatives[n][j] = w * (b[j] * c - a[j] * s);
            }
        }
        Ok(Self {
            system,
            trajectory: traj,
            extension_weight: 0.0,
            pressure: None,
            metadata: SolutionMetadata::default(),
        })
    }

    pub fn eigen(&self) -> &StokesEigenSystem {
        &self.system.eigen
    }

    pub fn extension(&self) -> &ExtensionField {
        &self.system.extension
    }

    pub fn profile(&self) -> &KinematicProfile {
        &self.system.profile
    }

    pub fn n_t(&self) -> usize {
        self.trajectory.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.trajectory.times()
    }

    /// Basis coefficients of `v` at every node, one column per node.
    pub fn basis_coefficients(&self) -> DMatrix<f64> {
        self.basis_columns(&self.trajectory.samples)
    }

    /// Basis coefficients of `v_t` at every node.
    pub fn basis_rates(&self) -> DMatrix<f64> {
        self.basis_columns(&self.trajectory.derivatives)
    }

    fn basis_columns(&self, cols: &[Vec<f64>]) -> DMatrix<f64> {
        let k = self.system.len();
        let c = DMatrix::from_fn(k, cols.len(), |i, n| cols[n][i]);
        &self.eigen().vectors * c
    }

    /// Jet of `u` at node `n`.
    pub fn jet_at_node(&self, x: &Vec3, n: usize) -> FieldJet {
        let t = self.times()[n];
        let mut j = self.eigen().eval(&self.trajectory.samples[n], x);
        if self.extension_weight != 0.0 {
            j.axpy(self.extension_weight, &self.extension().jet(x, t));
        }
        j
    }

    /// Jet of `u` at an arbitrary time (trigonometric interpolation of `c`).
    pub fn jet_at(&self, x: &Vec3, t: f64) -> FieldJet {
        let mut j = self.eigen().eval(&self.trajectory.at(t), x);
        if self.extension_weight != 0.0 {
            j.axpy(self.extension_weight, &self.extension().jet(x, t));
        }
        j
    }

    fn check_same_frame(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.system, &other.system) || self.n_t() != other.n_t() {
            return Err(Error::FrameMismatch(
                "solutions live on different Galerkin systems".into(),
            ));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            system: self.system.clone(),
            trajectory: self.trajectory.scaled(s),
            extension_weight: s * self.extension_weight,
            pressure: self.pressure.as_ref().map(|p| p.scaled(s)),
            metadata: self.metadata.clone(),
        }
    }

    /// `self − other` on the same frame.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_same_frame(other)?;
        Ok(Self {
            system: self.system.clone(),
            trajectory: self.trajectory.difference(&other.trajectory),
            extension_weight: self.extension_weight - other.extension_weight,
            pressure: None,
            metadata: self.metadata.clone(),
        })
    }

    /// `max_n max_{|x|=1} |u(x, t_n) − ξ(t_n) e₁ − ω e₁ × x|` on a spherical
    /// product grid, relative to the largest boundary speed (absolute when
    /// the body is at rest).
    pub fn boundary_residual(&self) -> f64 {
        let degree = 2 * self.eigen().basis.max_degree + 4;
        let points = AngularRule::gauss_product(degree).directions;
        let table = FieldTable::from_basis(&self.eigen().basis, &points);
        let coeffs = self.basis_coefficients();
        let vals = table.evaluate_values(&coeffs);
        let np = points.len();
        let profile = self.profile();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (n, t) in self.times().into_iter().enumerate() {
            let xi = profile.xi(t);
            for (p, x) in points.iter().enumerate() {
                let ext = if self.extension_weight != 0.0 {
                    self.extension().jet(x, t).u
                } else {
                    [0.0; 3]
                };
                let rot = swirl_velocity(x);
                let target = [xi, profile.omega * rot[1], profile.omega * rot[2]];
                let mut d2 = 0.0;
                let mut s2 = 0.0;
                for i in 0..3 {
                    let u = vals[(i * np + p, n)] + self.extension_weight * ext[i];
                    let want = self.extension_weight * target[i];
                    d2 += (u - want).powi(2);
                    s2 += want * want;
                }
                worst = worst.max(d2.sqrt());
                scale = scale.max(s2.sqrt());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }
}
