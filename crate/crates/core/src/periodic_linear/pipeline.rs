//! End-to-end linear solves on a list of truncation radii.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::forcing::Forcing;
use super::norms::{energy_norms, EnergyNorms, FieldPart, FieldSampler};
use super::pressure::{recover_pressure, MomentumBalance, PressureSpace};
use super::profile::KinematicProfile;
use super::shooting::{monodromy, solve_with, Monodromy};
use super::solution::{FlowSolution, SolutionMetadata};
use super::system::{assemble, GalerkinSystem};
use crate::error::{Error, Result};
use crate::fields::basis::required_angular_degree;
use crate::fields::extension::{build_extension, ExtensionField, ExtensionOptions};
use crate::fields::SolenoidalBasis;
use crate::geometry::{axis_ray_points, ShellDomain, ShellQuadrature};
use crate::stokes_eigen::{solve_eigen, StokesEigenSystem};
use crate::vec3::Vec3;

/// Largest Galerkin dimension and number of time nodes accepted.
pub const MAX_MODES: usize = 600;
pub const MAX_TIME_NODES: usize = 2048;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    /// Largest spherical harmonic degree `L`.
    pub max_degree: usize,
    /// Radial functions per degree and family `N`.
    pub radial_count: usize,
    /// Time nodes per period (even).
    pub n_t: usize,
    /// Gauss–Legendre nodes per radial panel; defaults to `N + 12 + 2⌈R⌉`.
    #[serde(default)]
    pub radial_order: Option<usize>,
    /// Angular exactness; defaults to `3L + 6`.
    #[serde(default)]
    pub angular_degree: Option<usize>,
}

impl Resolution {
    pub fn new(max_degree: usize, radial_count: usize, n_t: usize) -> Self {
        Self {
            max_degree,
            radial_count,
            n_t,
            radial_order: None,
            angular_degree: None,
        }
    }

    /// Number of Galerkin modes `2 N L (L + 2)`.
    pub fn modes(&self) -> usize {
        2 * self.radial_count * self.max_degree * (self.max_degree + 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_degree < 1 || self.radial_count < 1 {
            return Err(Error::InvalidConfig(
                "resolution needs L >= 1 and N >= 1".into(),
            ));
        }
        if self.modes() > MAX_MODES {
            return Err(Error::InvalidConfig(format!(
                "{} modes exceed the cap of {MAX_MODES}",
                self.modes()
            )));
        }
        if self.n_t < 4 || self.n_t % 2 != 0 || self.n_t > MAX_TIME_NODES {
            return Err(Error::InvalidConfig(format!(
                "N_t must be even and within [4, {MAX_TIME_NODES}] (got {})",
                self.n_t
            )));
        }
        if let Some(a) = self.angular_degree {
            let need = required_angular_degree(self.max_degree);
            if a < need {
                return Err(Error::QuadratureTooCoarse {
                    degree: a,
                    max_degree: self.max_degree,
                    required: need,
                });
            }
        }
        Ok(())
    }

    pub fn radial_order(&self, outer_radius: f64) -> usize {
        self.radial_order
            .unwrap_or(self.radial_count + 12 + 2 * outer_radius.ceil() as usize)
    }

    pub fn angular_degree(&self) -> usize {
        self.angular_degree.unwrap_or(3 * self.max_degree + 6)
    }

    pub fn domain(&self, outer_radius: f64) -> Result<ShellDomain> {
        ShellDomain::new(
            outer_radius,
            self.radial_order(outer_radius),
            self.angular_degree(),
        )
    }
}

/// Basis and Stokes eigenframe on `Ω_R`.
pub fn eigen_system(outer_radius: f64, res: &Resolution) -> Result<StokesEigenSystem> {
    res.validate()?;
    let basis =
        SolenoidalBasis::build(&res.domain(outer_radius)?, res.max_degree, res.radial_count)?;
    solve_eigen(&basis)
}

/// Everything needed for repeated periodic solves on one domain.
pub struct LinearSetup {
    pub system: Arc<GalerkinSystem>,
    pub quad: ShellQuadrature,
    pub monodromy: Monodromy,
    pub metadata: SolutionMetadata,
}

impl LinearSetup {
    pub fn eigen(&self) -> &Arc<StokesEigenSystem> {
        &self.system.eigen
    }

    pub fn extension(&self) -> &Arc<ExtensionField> {
        &self.system.extension
    }

    /// Probe points on the `±e₁, ±e₂` rays used by the weighted sup-norms.
    pub fn ray_probes(&self) -> Vec<Vec3> {
        let r_out = self.system.eigen.outer_radius();
        let n = 48;
        let radii: Vec<f64> = (0..=n)
            .map(|i| 1.0 + (r_out - 1.0) * i as f64 / n as f64)
            .collect();
        axis_ray_points(&radii)
    }

    pub fn sampler(&self) -> FieldSampler {
        FieldSampler::new(&self.system, self.quad.clone(), self.ray_probes())
    }

    /// Periodic solution for the system's own data.
    pub fn solve(&self) -> FlowSolution {
        self.solve_system(&self.system)
    }

    /// Periodic solution of a system sharing this setup's homogeneous part
    /// (for instance with an extra load).
    pub fn solve_system(&self, system: &GalerkinSystem) -> FlowSolution {
        let traj = solve_with(system, &self.monodromy);
        let mut meta = self.metadata.clone();
        meta.periodicity_residual = traj.periodicity_residual;
        FlowSolution::new(self.system.clone(), traj, meta)
    }
}

/// Builds extension, quadrature, Galerkin system and period map.
///
/// A negative mean speed is normalized by rotating the configuration half a
/// turn about `e₃`; the metadata records the flip and all outputs refer to
/// the rotated frame.
pub fn prepare(
    eigen: Arc<StokesEigenSystem>,
    profile: &KinematicProfile,
    forcing: &Forcing,
    res: &Resolution,
    ext_opts: &ExtensionOptions,
) -> Result<LinearSetup> {
    profile.validate()?;
    let (profile, flipped) = profile.oriented();
    let forcing = if flipped {
        forcing.rotated_half_turn()
    } else {
        forcing.clone()
    };
    let r_out = eigen.outer_radius();
    if !forcing.is_zero() && forcing.support().1 > r_out {
        return Err(Error::InvalidConfig(format!(
            "forcing support reaches r = {} beyond R = {r_out}",
            forcing.support().1
        )));
    }
    let extension = Arc::new(build_extension(&profile, &eigen.basis, ext_opts)?);
    let mut breaks = Vec::new();
    if !extension.is_zero() {
        breaks.push(extension.support_radius);
    }
    if !forcing.is_zero() {
        let (a, b) = forcing.support();
        breaks.push(a);
        breaks.push(b);
    }
    let quad = res
        .domain(r_out)?
        .with_breakpoints(breaks)
        .build_quadrature();
    if !forcing.is_zero() {
        forcing.check_consistency(&quad, 1e-6)?;
    }
    let system = assemble(
        eigen.clone(),
        extension.clone(),
        &profile,
        &forcing,
        &quad,
        res.n_t,
    )?;
    let mono = monodromy(&system)?;
    let rays = axis_ray_points(&[1.0, 0.5 * (1.0 + r_out), r_out]);
    let metadata = SolutionMetadata {
        outer_radius: r_out,
        modes: eigen.len(),
        n_t: res.n_t,
        lambda: profile.lambda(),
        omega: profile.omega,
        integrator: Some(mono.integrator),
        extension_width: if extension.is_zero() {
            0.0
        } else {
            extension.cutoff.width
        },
        leray_hopf_bound: extension.leray_hopf_bound,
        flipped_orientation: flipped,
        xi_changes_sign: profile.xi_changes_sign(),
        data: forcing.data_norms(&quad, profile.lambda(), &rays),
        xi_w12: profile.sobolev_norm_of_order(1),
        xi_w22: profile.sobolev_norm_of_order(2),
        periodicity_residual: 0.0,
        min_singular: mono.min_singular,
    };
    Ok(LinearSetup {
        system: Arc::new(system),
        quad,
        monodromy: mono,
        metadata,
    })
}

/// Measured sides of the two energy estimates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateRatios {
    /// `sup_t(‖v‖₆ + ‖∇v‖₂) + ‖D²v‖_{L²(L²)}`.
    pub basic_lhs: f64,
    /// `‖b‖_{L²(L²)} + ‖𝓑‖_{L²(L²)} + ‖ξ‖_{W^{1,2}} + |ω|`.
    pub basic_rhs: f64,
    pub basic_ratio: f64,
    /// Same with time derivatives.
    pub differentiated_lhs: f64,
    /// `‖b‖_{W^{1,2}(L²)} + ‖𝓑‖_{W^{1,2}(L²)} + ‖ξ‖_{W^{2,2}} + |ω|`.
    pub differentiated_rhs: f64,
    pub differentiated_ratio: f64,
}

impl EstimateRatios {
    pub fn new(norms: &EnergyNorms, meta: &SolutionMetadata) -> Self {
        let d = &meta.data;
        let basic_rhs = d.body_l2 + d.tensor_l2 + meta.xi_w12 + meta.omega.abs();
        let differentiated_rhs = d.body_w12 + d.tensor_w12 + meta.xi_w22 + meta.omega.abs();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Self {
            basic_lhs: norms.basic(),
            basic_rhs,
            basic_ratio: ratio(norms.basic(), basic_rhs),
            differentiated_lhs: norms.differentiated(),
            differentiated_rhs,
            differentiated_ratio: ratio(norms.differentiated(), differentiated_rhs),
        }
    }
}

/// Per-radius summary of a linear solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearReport {
    pub metadata: SolutionMetadata,
    pub boundary_residual: f64,
    pub pressure_mean: f64,
    pub pressure_weak_residual: f64,
    pub pressure_modes: usize,
    /// Norms of the Galerkin part `v`.
    pub perturbation: EnergyNorms,
    /// Norms of the full velocity `u`.
    pub velocity: EnergyNorms,
    pub estimates: EstimateRatios,
}

pub struct LinearRun {
    pub solution: FlowSolution,
    pub report: LinearReport,
}

/// Norms, boundary residual and estimate ratios of a solved setup.
pub fn summarize(
    setup: &LinearSetup,
    solution: &FlowSolution,
    sampler: &FieldSampler,
) -> LinearReport {
    let perturbation = energy_norms(solution, sampler, FieldPart::Perturbation);
    let velocity = energy_norms(solution, sampler, FieldPart::Full);
    let (mean, weak, modes) = solution
        .pressure
        .as_ref()
        .map_or((0.0, 0.0, 0), |p| (p.mean, p.weak_residual, p.space.len()));
    LinearReport {
        estimates: EstimateRatios::new(&perturbation, &setup.metadata),
        metadata: solution.metadata.clone(),
        boundary_residual: solution.boundary_residual(),
        pressure_mean: mean,
        pressure_weak_residual: weak,
        pressure_modes: modes,
        perturbation,
        velocity,
    }
}

/// Solves the linear problem on every radius in `radii`, with pressure.
pub fn solve_linear_end_to_end(
    profile: &KinematicProfile,
    forcing: &Forcing,
    radii: &[f64],
    res: &Resolution,
    ext_opts: &ExtensionOptions,
) -> Result<Vec<LinearRun>> {
    if radii.is_empty() {
        return Err(Error::InvalidConfig("no truncation radius given".into()));
    }
    let mut runs = Vec::with_capacity(radii.len());
    for &r in radii {
        let eigen = Arc::new(eigen_system(r, res)?);
        runs.push(solve_linear_on(eigen, profile, forcing, res, ext_opts)?);
    }
    Ok(runs)
}

/// One linear solve on a precomputed eigenframe.
pub fn solve_linear_on(
    eigen: Arc<StokesEigenSystem>,
    profile: &KinematicProfile,
    forcing: &Forcing,
    res: &Resolution,
    ext_opts: &ExtensionOptions,
) -> Result<LinearRun> {
    let setup = prepare(eigen, profile, forcing, res, ext_opts)?;
    let mut solution = setup.solve();
    let space = Arc::new(PressureSpace::new(
        setup.eigen().outer_radius(),
        res.max_degree,
        res.radial_count,
    )?);
    solution.pressure = Some(recover_pressure(
        &solution,
        space,
        &setup.quad,
        MomentumBalance::Linear,
    )?);
    let sampler = setup.sampler();
    let report = summarize(&setup, &solution, &sampler);
    Ok(LinearRun { solution, report })
}
