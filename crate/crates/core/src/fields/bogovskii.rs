//! Divergence equation `div z = f`, `z = 0` on the boundary of a shell.
//!
//! The data is split into spherical harmonic blocks. In each block the
//! candidate fields are
//!
//! * radial: `b(r) Ψ x / r³`, with divergence `b'(r) Ψ / r²`,
//! * tangential: `b(r) ∇Ψ`, with divergence `−l(l+1) b(r) Ψ / r²`,
//!
//! where `Ψ = Y_lm(x/|x|)` and `b = (r−a)^p (c−r)^p P_n`. Among all
//! least-squares solutions the one of minimal `W^{1,2}` norm is returned.

use nalgebra::{DMatrix, DVector};

use super::harmonics::{harmonic_table, SolidHarmonic};
use super::jet::{FieldJet, Jet, Series};
use crate::error::{Error, Result};
use crate::geometry::{ShellDomain, ShellQuadrature};
use crate::vec3::{norm, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceOptions {
    /// Largest spherical harmonic degree resolved in the data.
    pub max_degree: usize,
    /// Radial polynomials per candidate family.
    pub radial_count: usize,
    /// Order of vanishing of the candidates at both radii (1 or 2).
    pub vanishing_order: u32,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        Self {
            max_degree: 4,
            radial_count: 8,
            vanishing_order: 1,
        }
    }
}

#[derive(Clone, Debug)]
struct Block {
    harmonic: usize,
    l: usize,
    radial: Vec<f64>,
    tangential: Vec<f64>,
}

/// Profile generator shared by solver and solution.
#[derive(Clone, Debug)]
struct Profiles {
    inner: f64,
    outer: f64,
    order: u32,
    count: usize,
}

impl Profiles {
    /// `b_n` as Taylor series about `r`.
    fn series(&self, r: f64) -> Vec<Series> {
        let half = 0.5 * (self.outer - self.inner);
        let arg = Series::linear(
            1.0 / half,
            -(self.inner + self.outer) / (self.outer - self.inner),
            r,
        );
        let bubble = Series::linear(1.0, -self.inner, r)
            .mul(&Series::linear(-1.0, self.outer, r))
            .scale(1.0 / (half * half));
        let mut env = Series::constant(1.0);
        for _ in 0..self.order {
            env = env.mul(&bubble);
        }
        Series::legendre(&arg, self.count)
            .iter()
            .map(|p| env.mul(p))
            .collect()
    }

    /// Jets of the radial and tangential candidates for one harmonic.
    fn candidate_jets(
        &self,
        h: &SolidHarmonic,
        s_jet: &Jet,
        x: &Vec3,
    ) -> (Vec<FieldJet>, Vec<FieldJet>) {
        let r = norm(x);
        let l = h.l as i32;
        let bs = self.series(r);
        let rad_scale = Series::power(-l - 3, r);
        let radial = bs
            .iter()
            .map(|b| {
                let phi = Jet::radial(b.mul(&rad_scale).derivatives(), x, r).mul(s_jet);
                FieldJet::scalar_times_position(&phi, x)
            })
            .collect();
        let tangential = if h.l == 0 {
            Vec::new()
        } else {
            let chi = s_jet.mul(&Jet::radial(Series::power(-l, r).derivatives(), x, r));
            bs.iter()
                .map(|b| FieldJet::scalar_times_gradient(&Jet::radial(b.derivatives(), x, r), &chi))
                .collect()
        };
        (radial, tangential)
    }
}

/// Result of [`solve_divergence`]: an evaluable field supported in the shell.
#[derive(Clone, Debug)]
pub struct DivergenceSolution {
    profiles: Profiles,
    harmonics: Vec<SolidHarmonic>,
    blocks: Vec<Block>,
    /// `‖div z − f‖₂ / ‖f‖₂` on the solver quadrature (0 for zero data).
    pub relative_residual: f64,
    /// `‖z‖_{1,2} / ‖f‖₂` (0 for zero data).
    pub norm_ratio: f64,
    /// Largest condition estimate of the per-block norm matrices.
    pub condition: f64,
}

impl DivergenceSolution {
    pub fn inner_radius(&self) -> f64 {
        self.profiles.inner
    }

    pub fn outer_radius(&self) -> f64 {
        self.profiles.outer
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn jet(&self, x: &Vec3) -> FieldJet {
        let mut out = FieldJet::default();
        let r = norm(x);
        if self.blocks.is_empty() || r < self.profiles.inner || r > self.profiles.outer {
            return out;
        }
        for b in &self.blocks {
            let h = &self.harmonics[b.harmonic];
            let s_jet = h.jet(x);
            let (rad, tan) = self.profiles.candidate_jets(h, &s_jet, x);
            for (c, j) in b.radial.iter().zip(&rad) {
                out.axpy(*c, j);
            }
            for (c, j) in b.tangential.iter().zip(&tan) {
                out.axpy(*c, j);
            }
        }
        out
    }

    pub fn value(&self, x: &Vec3) -> Vec3 {
        self.jet(x).u
    }

    /// Jets of several solutions from one solver at `x`, sharing the
    /// candidate evaluations of common harmonic blocks.
    pub fn jets_of_family(family: &[DivergenceSolution], x: &Vec3, out: &mut Vec<FieldJet>) {
        out.clear();
        let Some(first) = family.first() else {
            return;
        };
        let r = norm(x);
        if r < first.profiles.inner || r > first.profiles.outer {
            out.resize(family.len(), FieldJet::default());
            return;
        }
        let mut cache: Vec<Option<(Vec<FieldJet>, Vec<FieldJet>)>> =
            vec![None; first.harmonics.len()];
        for sol in family {
            let mut acc = FieldJet::default();
            for b in &sol.blocks {
                let entry = cache[b.harmonic].get_or_insert_with(|| {
                    let h = &sol.harmonics[b.harmonic];
                    sol.profiles.candidate_jets(h, &h.jet(x), x)
                });
                for (c, j) in b.radial.iter().zip(&entry.0) {
                    acc.axpy(*c, j);
                }
                for (c, j) in b.tangential.iter().zip(&entry.1) {
                    acc.axpy(*c, j);
                }
            }
            out.push(acc);
        }
    }

    /// `α·self + β·other` for solutions on the same shell and candidate space.
    pub fn combine(&self, alpha: f64, other: &DivergenceSolution, beta: f64) -> DivergenceSolution {
        let mut blocks: Vec<Block> = Vec::new();
        for (s, src) in [(alpha, self), (beta, other)] {
            for b in &src.blocks {
                let pos = blocks.iter().position(|x| x.harmonic == b.harmonic);
                let tgt = match pos {
                    Some(i) => &mut blocks[i],
                    None => {
                        blocks.push(Block {
                            harmonic: b.harmonic,
                            l: b.l,
                            radial: vec![0.0; b.radial.len()],
                            tangential: vec![0.0; b.tangential.len()],
                        });
                        blocks.last_mut().unwrap()
                    }
                };
                for (t, v) in tgt.radial.iter_mut().zip(&b.radial) {
                    *t += s * v;
                }
                for (t, v) in tgt.tangential.iter_mut().zip(&b.tangential) {
                    *t += s * v;
                }
            }
        }
        let harmonics = if self.harmonics.len() >= other.harmonics.len() {
            self.harmonics.clone()
        } else {
            other.harmonics.clone()
        };
        DivergenceSolution {
            profiles: self.profiles.clone(),
            harmonics,
            blocks,
            relative_residual: f64::NAN,
            norm_ratio: f64::NAN,
            condition: self.condition.max(other.condition),
        }
    }
}

/// Solves `div z = f` on `shell` with `z` vanishing on both spheres.
///
/// The shell's quadrature is used to project the data, to build the norm
/// matrices and to measure the residual, so its angular degree should be at
/// least `2·max_degree` plus the angular degree of `f`.
pub fn solve_divergence<F>(
    f: F,
    shell: &ShellDomain,
    opts: &DivergenceOptions,
) -> Result<DivergenceSolution>
where
    F: Fn(&Vec3) -> f64,
{
    DivergenceSolver::new(shell, opts)?.solve(f)
}

/// Divergence solver that keeps its quadrature and per-degree matrices, for
/// many right-hand sides on one shell.
#[derive(Clone, Debug)]
pub struct DivergenceSolver {
    profiles: Profiles,
    harmonics: Vec<SolidHarmonic>,
    quad: ShellQuadrature,
    cache: Vec<Option<(DMatrix<f64>, DMatrix<f64>, f64)>>,
}

impl DivergenceSolver {
    pub fn new(shell: &ShellDomain, opts: &DivergenceOptions) -> Result<Self> {
        if opts.radial_count == 0 || !(1..=2).contains(&opts.vanishing_order) {
            return Err(Error::InvalidConfig(format!(
                "divergence solver needs radial_count >= 1 and vanishing order 1 or 2 (got {}, {})",
                opts.radial_count, opts.vanishing_order
            )));
        }
        Ok(Self {
            profiles: Profiles {
                inner: shell.inner_radius,
                outer: shell.outer_radius,
                order: opts.vanishing_order,
                count: opts.radial_count,
            },
            harmonics: harmonic_table(0, opts.max_degree),
            quad: shell.build_quadrature(),
            cache: vec![None; opts.max_degree + 1],
        })
    }

    pub fn quadrature(&self) -> &ShellQuadrature {
        &self.quad
    }

    pub fn harmonics(&self) -> &[SolidHarmonic] {
        &self.harmonics
    }

    fn empty(&self) -> DivergenceSolution {
        DivergenceSolution {
            profiles: self.profiles.clone(),
            harmonics: self.harmonics.clone(),
            blocks: Vec::new(),
            relative_residual: 0.0,
            norm_ratio: 0.0,
            condition: 1.0,
        }
    }

    /// Coefficients of the minimal-norm solution for data `g(r) Y_h(x/|x|)`,
    /// with `g` sampled at the quadrature radii.
    fn block(&mut self, hi: usize, data: &[f64]) -> Result<(Block, f64)> {
        let l = self.harmonics[hi].l;
        if self.cache[l].is_none() {
            let (gram, cond) = block_norm_matrix(&self.profiles, &self.harmonics[hi], &self.quad)?;
            self.cache[l] = Some((gram, divergence_rows(&self.profiles, l, &self.quad), cond));
        }
        let (gram, rows, cond) = self.cache[l].as_ref().unwrap();
        let coeffs = min_norm_least_squares(gram, rows, data, &self.quad.radial_weights)?;
        let n = self.profiles.count;
        Ok((
            Block {
                harmonic: hi,
                l,
                radial: coeffs[..n].to_vec(),
                tangential: coeffs[n..].to_vec(),
            },
            *cond,
        ))
    }

    /// Solves for a single harmonic block `div z = g(r) Y_h(x/|x|)`; `g` is
    /// given at the quadrature radii. Residual fields are left at zero.
    pub fn solve_block(&mut self, harmonic: usize, data: &[f64]) -> Result<DivergenceSolution> {
        let mut sol = self.empty();
        if data.iter().all(|v| *v == 0.0) {
            return Ok(sol);
        }
        if self.harmonics[harmonic].l == 0 {
            let mean: f64 = data
                .iter()
                .zip(&self.quad.radial_weights)
                .map(|(v, w)| v * w)
                .sum();
            let scale: f64 = data
                .iter()
                .zip(&self.quad.radial_weights)
                .map(|(v, w)| v.abs() * w)
                .sum();
            if mean.abs() > 1e-10 * scale {
                return Err(Error::IncompatibleMean {
                    mean,
                    relative: mean.abs() / scale,
                });
            }
        }
        let (block, cond) = self.block(harmonic, data)?;
        sol.blocks.push(block);
        sol.condition = cond;
        Ok(sol)
    }

    pub fn solve<F>(&mut self, f: F) -> Result<DivergenceSolution>
    where
        F: Fn(&Vec3) -> f64,
    {
        let quad = &self.quad;
        let values: Vec<f64> = quad.points.iter().map(&f).collect();
        let mean: f64 = values.iter().zip(&quad.weights).map(|(v, w)| v * w).sum();
        let f_norm = values
            .iter()
            .zip(&quad.weights)
            .map(|(v, w)| v * v * w)
            .sum::<f64>()
            .sqrt();
        let mut sol = self.empty();
        if f_norm == 0.0 {
            return Ok(sol);
        }
        let relative = mean.abs() / (f_norm * quad.total_measure().sqrt());
        if relative > 1e-10 {
            return Err(Error::IncompatibleMean { mean, relative });
        }

        let na = quad.angular_len();
        let nr = quad.radii.len();
        // Angular projections f_lm(r_i).
        let mut proj = vec![vec![0.0; nr]; self.harmonics.len()];
        for (hi, h) in self.harmonics.iter().enumerate() {
            let ys: Vec<f64> = quad.angular.directions.iter().map(|d| h.value(d)).collect();
            for (i, row) in proj[hi].iter_mut().enumerate() {
                *row = (0..na)
                    .map(|a| quad.angular.weights[a] * ys[a] * values[i * na + a])
                    .sum();
            }
        }

        for (hi, data) in proj.iter().enumerate() {
            let dnorm = data
                .iter()
                .zip(&self.quad.radial_weights)
                .map(|(v, w)| v * v * w)
                .sum::<f64>()
                .sqrt();
            if dnorm <= 1e-15 * f_norm {
                continue;
            }
            let (block, cond) = self.block(hi, data)?;
            sol.condition = sol.condition.max(cond);
            sol.blocks.push(block);
        }

        let mut res2 = 0.0;
        let mut h1 = 0.0;
        for ((x, w), v) in self.quad.points.iter().zip(&self.quad.weights).zip(&values) {
            let j = sol.jet(x);
            res2 += w * (j.divergence() - v).powi(2);
            h1 += w
                * (j.u.iter().map(|a| a * a).sum::<f64>()
                    + j.grad.iter().flatten().map(|a| a * a).sum::<f64>());
        }
        sol.relative_residual = res2.sqrt() / f_norm;
        sol.norm_ratio = h1.sqrt() / f_norm;
        Ok(sol)
    }
}

/// `W^{1,2}` Gram matrix of the candidates of one harmonic block.
fn block_norm_matrix(
    p: &Profiles,
    h: &SolidHarmonic,
    quad: &ShellQuadrature,
) -> Result<(DMatrix<f64>, f64)> {
    let nc = if h.l == 0 { p.count } else { 2 * p.count };
    let mut g = DMatrix::zeros(nc, nc);
    for (x, w) in quad.points.iter().zip(&quad.weights) {
        let (rad, tan) = p.candidate_jets(h, &h.jet(x), x);
        let all: Vec<FieldJet> = rad.into_iter().chain(tan).collect();
        for a in 0..nc {
            for b in a..nc {
                let (ja, jb) = (&all[a], &all[b]);
                let mut s = 0.0;
                for i in 0..3 {
                    s += ja.u[i] * jb.u[i];
                    for j in 0..3 {
                        s += ja.grad[i][j] * jb.grad[i][j];
                    }
                }
                g[(a, b)] += w * s;
            }
        }
    }
    for a in 0..nc {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    let eig = g.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond < 1e14) {
        return Err(Error::SolverBreakdown { condition: cond });
    }
    Ok((g, cond))
}

/// Radial divergence profiles (coefficient of `Y_lm`) at the radial nodes.
fn divergence_rows(p: &Profiles, l: usize, quad: &ShellQuadrature) -> DMatrix<f64> {
    let nc = if l == 0 { p.count } else { 2 * p.count };
    let ll = (l * (l + 1)) as f64;
    let mut d = DMatrix::zeros(quad.radii.len(), nc);
    for (i, &r) in quad.radii.iter().enumerate() {
        let bs = p.series(r);
        for (n, b) in bs.iter().enumerate() {
            d[(i, n)] = b.0[1] / (r * r);
            if l > 0 {
                d[(i, p.count + n)] = -ll * b.0[0] / (r * r);
            }
        }
    }
    d
}

/// Minimises `‖α‖_G` over the least-squares solutions of `D α ≈ f` in the
/// `w`-weighted norm.
fn min_norm_least_squares(
    gram: &DMatrix<f64>,
    d: &DMatrix<f64>,
    f: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let chol = gram.clone().cholesky().ok_or(Error::SolverBreakdown {
        condition: f64::INFINITY,
    })?;
    let lt = chol.l().transpose();
    let lt_inv = lt.try_inverse().ok_or(Error::SolverBreakdown {
        condition: f64::INFINITY,
    })?;
    let mut m = d * &lt_inv;
    let mut rhs = DVector::zeros(f.len());
    for i in 0..f.len() {
        let s = w[i].sqrt();
        m.row_mut(i).scale_mut(s);
        rhs[i] = s * f[i];
    }
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let beta = svd
        .solve(&rhs, 1e-11 * smax)
        .map_err(|_| Error::SolverBreakdown {
            condition: f64::INFINITY,
        })?;
    Ok((lt_inv * beta).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shell() -> ShellDomain {
        ShellDomain::between(1.0, 2.0, 16, 12).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let s = solve_divergence(|_| 0.0, &shell(), &DivergenceOptions::default()).unwrap();
        assert!(s.is_zero());
        assert_eq!(s.value(&[1.5, 0.0, 0.0]), [0.0; 3]);
    }

    #[test]
    fn constant_data_rejected() {
        assert!(matches!(
            solve_divergence(|_| 1.0, &shell(), &DivergenceOptions::default()),
            Err(Error::IncompatibleMean { .. })
        ));
    }

    #[test]
    fn representable_data_solved_exactly() {
        // f = (r−1)(2−r)(r+3) x₂ x₃ / r⁴ lies in the candidate space.
        let f = |x: &Vec3| {
            let r = norm(x);
            (r - 1.0) * (2.0 - r) * (r + 3.0) * x[1] * x[2] / r.powi(4)
        };
        let s = solve_divergence(f, &shell(), &DivergenceOptions::default()).unwrap();
        assert!(s.relative_residual < 1e-10, "{}", s.relative_residual);
        for x in [[1.0, 0.0, 0.0], [0.0, 1.2, 1.6], [-0.6, 0.0, 0.8]] {
            if (norm(&x) - 1.0).abs() < 1e-12 || (norm(&x) - 2.0).abs() < 1e-12 {
                assert!(norm(&s.value(&x)) < 1e-12);
            }
        }
    }

    #[test]
    fn second_order_vanishing_has_flat_trace() {
        let opts = DivergenceOptions {
            vanishing_order: 2,
            ..Default::default()
        };
        let f = |x: &Vec3| {
            let r = norm(x);
            ((r - 1.0) * (2.0 - r)).powi(2) * x[0] / r.powi(3)
        };
        let s = solve_divergence(f, &shell(), &opts).unwrap();
        assert!(s.relative_residual < 1e-10);
        let j = s.jet(&[0.0, 0.0, 1.0]);
        assert!(j.grad.iter().flatten().all(|v| v.abs() < 1e-12));
    }
}
