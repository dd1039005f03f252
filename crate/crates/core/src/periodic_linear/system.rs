//! Galerkin system `ċ_j = Σ_i A_ij(t) c_i + C_j(t)` in the Stokes eigenframe.
//!
//! With `X_ab = (Op w_a, w_b)` for the operator blocks,
//!
//! `A = −diag(λ) − ω Rot + ξ(t) Tr₁ + ω Tr_rot − ξ(t) E_ξ − ω E_ω`,
//!
//! where `Rot: e₁ × w`, `Tr₁: ∂₁ w`, `Tr_rot: (e₁ × x)·∇w` and
//! `E: w·∇U + U·∇w` for the extension profiles `U_ξ, U_ω`. The load is
//!
//! `C = a(t) B + ξ g₁ + ω g₂ + ξ' g₃ + ξ² g₄ + ξω g₅ + ω² g₆`
//!
//! with `B = (b₀, w)`, `g₁ = −(∇U_ξ, ∇w)`, `g₂ = −(∇U_ω, ∇w)`,
//! `g₃ = −(U_ξ, w)`, `g₄ = (∂₁U_ξ, w)`,
//! `g₅ = (∂₁U_ω + (e₁×x)·∇U_ξ − e₁×U_ξ, w)` and
//! `g₆ = ((e₁×x)·∇U_ω − e₁×U_ω, w)`.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use super::forcing::Forcing;
use super::profile::KinematicProfile;
use super::shooting::PeriodicOde;
use crate::error::{Error, Result};
use crate::fields::basis::{assemble_forms, hessian_features, FormSpec, HESSIAN_FEATURES};
use crate::fields::extension::ExtensionField;
use crate::fields::FieldJet;
use crate::geometry::ShellQuadrature;
use crate::stokes_eigen::StokesEigenSystem;
use crate::vec3::{cross, Vec3, E1};

/// `e₁ × x`.
#[inline]
pub fn swirl_velocity(x: &Vec3) -> Vec3 {
    [0.0, -x[2], x[1]]
}

/// `(a·∇) u` from a gradient table `g[i][j] = ∂_j u_i`.
#[inline]
fn directional(g: &[[f64; 3]; 3], a: &Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = g[i][0] * a[0] + g[i][1] * a[1] + g[i][2] * a[2];
    }
    out
}

/// Operator blocks in the eigenframe, `X_ab = (Op w_a, w_b)`.
#[derive(Clone, Debug)]
pub struct FrameBlocks {
    pub rotation: DMatrix<f64>,
    pub transport: DMatrix<f64>,
    pub swirl_transport: DMatrix<f64>,
    pub ext_xi: DMatrix<f64>,
    pub ext_omega: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// `(D²w_a : D²w_b)`.
    pub hessian: DMatrix<f64>,
}

/// Loads and cross terms generated by the extension field.
#[derive(Clone, Debug)]
pub struct ExtensionLoads {
    pub g: [Vec<f64>; 6],
    /// `(∇U_ξ : ∇w_j)`, `(∇U_ω : ∇w_j)`.
    pub grad_cross: [Vec<f64>; 2],
    /// `(D²U_ξ : D²w_j)`, `(D²U_ω : D²w_j)`.
    pub hess_cross: [Vec<f64>; 2],
    /// Gram blocks of the two profiles in `D^{1,2}` and `D^{2,2}`.
    pub grad_block: [[f64; 2]; 2],
    pub hess_block: [[f64; 2]; 2],
}

#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    pub eigen: Arc<StokesEigenSystem>,
    pub extension: Arc<ExtensionField>,
    pub profile: KinematicProfile,
    pub forcing: Forcing,
    pub n_t: usize,
    pub blocks: FrameBlocks,
    /// `(b₀, w_j)`.
    pub body_load: Vec<f64>,
    pub ext_loads: ExtensionLoads,
    /// Extra load samples on the half-step grid (`2 N_t` values per period).
    pub extra_load: Option<Vec<DVector<f64>>>,
}

/// Assembles all blocks and loads on `quad`, which should have breakpoints at
/// the extension support radius and at the edges of the forcing support.
pub fn assemble(
    eigen: Arc<StokesEigenSystem>,
    extension: Arc<ExtensionField>,
    profile: &KinematicProfile,
    forcing: &Forcing,
    quad: &ShellQuadrature,
    n_t: usize,
) -> Result<GalerkinSystem> {
    let basis = &eigen.basis;
    if (quad.domain.outer_radius - basis.outer_radius()).abs() > 1e-12 {
        return Err(Error::FrameMismatch(format!(
            "quadrature on R = {} but basis on R = {}",
            quad.domain.outer_radius,
            basis.outer_radius()
        )));
    }
    if !extension.is_zero() && extension.support_radius > basis.outer_radius() {
        return Err(Error::FrameMismatch(format!(
            "extension support radius {} exceeds R = {}",
            extension.support_radius,
            basis.outer_radius()
        )));
    }
    if extension.profile != *profile {
        return Err(Error::FrameMismatch(
            "extension built for a different kinematic profile".into(),
        ));
    }
    if n_t < 4 || n_t % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "N_t must be even and >= 4 (got {n_t})"
        )));
    }
    let ext_jets: Vec<(FieldJet, FieldJet)> =
        quad.points.iter().map(|x| extension.profiles(x)).collect();
    let ext_active = !extension.is_zero();

    let mut specs = vec![
        FormSpec::general(
            3,
            |j, _, _, o| o.copy_from_slice(&cross(&E1, &j.u)),
            |j, _, _, o| o.copy_from_slice(&j.u),
        ),
        FormSpec::general(
            3,
            |j, _, _, o| {
                for i in 0..3 {
                    o[i] = j.grad[i][0];
                }
            },
            |j, _, _, o| o.copy_from_slice(&j.u),
        ),
        FormSpec::general(
            3,
            |j, x, _, o| o.copy_from_slice(&directional(&j.grad, &swirl_velocity(x))),
            |j, _, _, o| o.copy_from_slice(&j.u),
        ),
        FormSpec::general(
            3,
            |j, _, _, o| o.copy_from_slice(&j.laplacian()),
            |j, _, _, o| o.copy_from_slice(&j.u),
        ),
        FormSpec::symmetric(HESSIAN_FEATURES, |j, _, _, o| hessian_features(j, o)),
    ];
    if ext_active {
        for which in 0..2 {
            let ej = &ext_jets;
            specs.push(FormSpec::general(
                3,
                move |j, _, gi, o| {
                    let e = if which == 0 { &ej[gi].0 } else { &ej[gi].1 };
                    let a = directional(&e.grad, &j.u);
                    let b = directional(&j.grad, &e.u);
                    for i in 0..3 {
                        o[i] = a[i] + b[i];
                    }
                },
                |j, _, _, o| o.copy_from_slice(&j.u),
            ));
        }
    }
    assemble_forms(basis, quad, &mut specs);
    let k = basis.len();
    let (ext_omega, ext_xi) = if ext_active {
        let w = specs.pop().unwrap().matrix;
        let x = specs.pop().unwrap().matrix;
        (eigen.to_frame(&w), eigen.to_frame(&x))
    } else {
        (DMatrix::zeros(k, k), DMatrix::zeros(k, k))
    };
    let hessian = eigen.to_frame(&specs.pop().unwrap().matrix);
    let laplacian = eigen.to_frame(&specs.pop().unwrap().matrix);
    let swirl_transport = eigen.to_frame(&specs.pop().unwrap().matrix);
    let transport = eigen.to_frame(&specs.pop().unwrap().matrix);
    let rotation = eigen.to_frame(&specs.pop().unwrap().matrix);
    let blocks = FrameBlocks {
        rotation,
        transport,
        swirl_transport,
        ext_xi,
        ext_omega,
        laplacian,
        stiffness: eigen.to_frame(&basis.stiffness),
        hessian,
    };

    // Loads: one sweep over the points where some integrand is nonzero.
    let reach = {
        let mut r: f64 = if ext_active {
            extension.support_radius
        } else {
            0.0
        };
        if !forcing.is_zero() {
            r = r.max(forcing.support().1);
        }
        r
    };
    let mut body = vec![0.0; k];
    let mut g: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; k]);
    let mut hx: [Vec<f64>; 2] = std::array::from_fn(|_| vec![0.0; k]);
    let mut grad_block = [[0.0; 2]; 2];
    let mut hess_block = [[0.0; 2]; 2];
    let mut jets = Vec::new();
    for (gi, (x, w)) in quad.points.iter().zip(&quad.weights).enumerate() {
        if crate::vec3::norm(x) >= reach {
            continue;
        }
        let (ux, uw) = &ext_jets[gi];
        let b0 = forcing.body_profile(x);
        let rx = swirl_velocity(x);
        let d1x: Vec3 = [ux.grad[0][0], ux.grad[1][0], ux.grad[2][0]];
        let d1w: Vec3 = [uw.grad[0][0], uw.grad[1][0], uw.grad[2][0]];
        let tx = directional(&ux.grad, &rx);
        let tw = directional(&uw.grad, &rx);
        let cx = cross(&E1, &ux.u);
        let cw = cross(&E1, &uw.u);
        let v5: Vec3 = std::array::from_fn(|i| d1w[i] + tx[i] - cx[i]);
        let v6: Vec3 = std::array::from_fn(|i| tw[i] - cw[i]);
        let pair = [ux, uw];
        for a in 0..2 {
            for b in 0..2 {
                grad_block[a][b] += w * frob2(&pair[a].grad, &pair[b].grad);
                hess_block[a][b] += w * frob3(&pair[a].hess, &pair[b].hess);
            }
        }
        basis.eval_point_into(x, &mut jets);
        for (m, j) in jets.iter().enumerate() {
            body[m] += w * dot3(&b0, &j.u);
            if ext_active {
                g[0][m] -= w * frob2(&ux.grad, &j.grad);
                g[1][m] -= w * frob2(&uw.grad, &j.grad);
                g[2][m] -= w * dot3(&ux.u, &j.u);
                g[3][m] += w * dot3(&d1x, &j.u);
                g[4][m] += w * dot3(&v5, &j.u);
                g[5][m] += w * dot3(&v6, &j.u);
                hx[0][m] += w * frob3(&ux.hess, &j.hess);
                hx[1][m] += w * frob3(&uw.hess, &j.hess);
            }
        }
    }
    let frame = |v: &Vec<f64>| eigen.load_to_frame(v);
    let g = g.each_ref().map(frame);
    let ext_loads = ExtensionLoads {
        grad_cross: [
            g[0].iter().map(|v| -v).collect(),
            g[1].iter().map(|v| -v).collect(),
        ],
        hess_cross: hx.each_ref().map(frame),
        g,
        grad_block,
        hess_block,
    };
    Ok(GalerkinSystem {
        body_load: eigen.load_to_frame(&body),
        eigen,
        extension,
        profile: profile.clone(),
        forcing: forcing.clone(),
        n_t,
        blocks,
        ext_loads,
        extra_load: None,
    })
}

#[inline]
fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn frob2(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

#[inline]
fn frob3(a: &[[[f64; 3]; 3]; 3], b: &[[[f64; 3]; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                s += a[i][j][k] * b[i][j][k];
            }
        }
    }
    s
}

impl GalerkinSystem {
    pub fn len(&self) -> usize {
        self.eigen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigen.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.profile.period
    }

    pub fn step(&self) -> f64 {
        self.profile.period / self.n_t as f64
    }

    /// Node times `t_n = n T / N_t`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|n| n as f64 * self.step()).collect()
    }

    /// Everything in `A(t)` except the diagonal `−diag(λ)`.
    pub fn coupling_matrix(&self, t: f64) -> DMatrix<f64> {
        let xi = self.profile.xi(t);
        let om = self.profile.omega;
        let b = &self.blocks;
        let mut a = &b.transport * xi;
        if om != 0.0 {
            a += (&b.swirl_transport - &b.rotation) * om;
        }
        if !self.extension.is_zero() {
            a -= &b.ext_xi * xi;
            a -= &b.ext_omega * om;
        }
        a
    }

    /// `A(t)` in the index convention `ċ_j = Σ_i A_ij c_i + C_j`.
    pub fn a_matrix(&self, t: f64) -> DMatrix<f64> {
        let mut a = self.coupling_matrix(t);
        for (j, l) in self.eigen.eigenvalues.iter().enumerate() {
            a[(j, j)] -= l;
        }
        a
    }

    /// `C(t)` without any extra samples.
    pub fn load(&self, t: f64) -> DVector<f64> {
        let p = &self.profile;
        let (xi, xd, om) = (p.xi(t), p.xi_dot(t), p.omega);
        let coef = [xi, om, xd, xi * xi, xi * om, om * om];
        let a = self.forcing.amplitude_at(t);
        let mut c = DVector::from_iterator(self.len(), self.body_load.iter().map(|v| a * v));
        if !self.extension.is_zero() {
            for (g, s) in self.ext_loads.g.iter().zip(coef) {
                if s != 0.0 {
                    for (ci, gi) in c.iter_mut().zip(g) {
                        *ci += s * gi;
                    }
                }
            }
        }
        c
    }

    /// Sets an extra load from samples at the `N_t` nodes; half-step values
    /// are filled in by trigonometric interpolation.
    pub fn set_extra_load(&mut self, nodal: &[DVector<f64>]) -> Result<()> {
        if nodal.len() != self.n_t {
            return Err(Error::FrameMismatch(format!(
                "{} load samples for N_t = {}",
                nodal.len(),
                self.n_t
            )));
        }
        let mid = midpoint_interpolate(nodal);
        let mut half = Vec::with_capacity(2 * self.n_t);
        for (a, b) in nodal.iter().zip(mid) {
            half.push(a.clone());
            half.push(b);
        }
        self.extra_load = Some(half);
        Ok(())
    }

    pub fn clear_extra_load(&mut self) {
        self.extra_load = None;
    }

    /// Largest `‖A(t) + A(t)ᵀ + 2 diag(λ)‖_max` over the nodes with the
    /// extension couplings left out.
    pub fn skew_defect_without_extension(&self) -> f64 {
        let b = &self.blocks;
        let om = self.profile.omega;
        self.times()
            .iter()
            .map(|&t| {
                let xi = self.profile.xi(t);
                let mut a = &b.transport * xi + (&b.swirl_transport - &b.rotation) * om;
                for (j, l) in self.eigen.eigenvalues.iter().enumerate() {
                    a[(j, j)] -= l;
                }
                let mut s = &a + a.transpose();
                for (j, l) in self.eigen.eigenvalues.iter().enumerate() {
                    s[(j, j)] += 2.0 * l;
                }
                s.amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Values at `t_n + h/2` of the trigonometric interpolant of periodic
/// samples (even count; the Nyquist term vanishes at the midpoints).
pub fn midpoint_interpolate(nodal: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = nodal.len();
    let nf = n as f64;
    let w: Vec<f64> = (0..n)
        .map(|j| {
            let s = j as f64 + 0.5;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign / (nf * (std::f64::consts::PI * s / nf).tan())
        })
        .collect();
    (0..n)
        .map(|m| {
            let mut acc = DVector::zeros(nodal[0].len());
            for (q, v) in nodal.iter().enumerate() {
                acc.axpy(w[(m + n - q) % n], v, 1.0);
            }
            acc
        })
        .collect()
}

/// Spectral time derivative of periodic samples (Nyquist mode dropped).
pub fn spectral_derivative(nodal: &[DVector<f64>], period: f64) -> Vec<DVector<f64>> {
    let n = nodal.len();
    let nf = n as f64;
    // Derivative of the periodic sinc at integer offsets.
    let w: Vec<f64> = (0..n)
        .map(|j| {
            if j == 0 {
                0.0
            } else {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let x = std::f64::consts::PI * j as f64 / nf;
                0.5 * sign / x.tan() * (2.0 * std::f64::consts::PI / period)
            }
        })
        .collect();
    (0..n)
        .map(|m| {
            let mut acc = DVector::zeros(nodal[0].len());
            for (q, v) in nodal.iter().enumerate() {
                acc.axpy(w[(m + n - q) % n], v, 1.0);
            }
            acc
        })
        .collect()
}

impl PeriodicOde for GalerkinSystem {
    fn dim(&self) -> usize {
        self.len()
    }

    fn period(&self) -> f64 {
        self.profile.period
    }

    fn steps(&self) -> usize {
        self.n_t
    }

    fn decay_rates(&self) -> Vec<f64> {
        self.eigen.eigenvalues.clone()
    }

    fn coupling(&self, t: f64) -> DMatrix<f64> {
        self.coupling_matrix(t).transpose()
    }

    fn forcing_half(&self, idx: usize) -> DVector<f64> {
        let t = idx as f64 * 0.5 * self.step();
        let mut c = self.load(t);
        if let Some(extra) = &self.extra_load {
            c += &extra[idx % (2 * self.n_t)];
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_interpolation_is_exact_for_band_limited_data() {
        let n = 16;
        let f = |t: f64| 0.3 + (t).cos() - 0.5 * (3.0 * t).sin() + 0.2 * (7.0 * t).cos();
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let nodal: Vec<DVector<f64>> = (0..n)
            .map(|i| DVector::from_element(1, f(i as f64 * h)))
            .collect();
        let mid = midpoint_interpolate(&nodal);
        for (i, m) in mid.iter().enumerate() {
            assert!((m[0] - f((i as f64 + 0.5) * h)).abs() < 1e-13);
        }
        let d = spectral_derivative(&nodal, 2.0 * std::f64::consts::PI);
        let df = |t: f64| -(t).sin() - 1.5 * (3.0 * t).cos() - 1.4 * (7.0 * t).sin();
        for (i, v) in d.iter().enumerate() {
            assert!((v[0] - df(i as f64 * h)).abs() < 1e-12);
        }
    }
}
