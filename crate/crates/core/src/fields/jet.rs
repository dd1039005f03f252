//! Third-order Cartesian jets of scalar fields and second-order jets of
//! vector fields, plus truncated Taylor series in the radius.

use crate::vec3::{Mat3, Vec3};

/// Value and Cartesian derivatives up to third order of a scalar field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
    pub t: [[[f64; 3]; 3]; 3],
}

impl Jet {
    /// Jet of a radial profile `H(|x|)` given `H, H', H'', H'''` at `r = |x|`.
    pub fn radial(d: [f64; 4], x: &Vec3, r: f64) -> Jet {
        let [h0, h1, h2, h3] = d;
        let b = h1 / r;
        let a = (h2 - b) / (r * r);
        // d/dr of a, divided by r.
        let da = (h3 - h2 / r + h1 / (r * r)) / (r * r) - 2.0 * (h2 - b) / (r * r * r);
        let c = da / r;
        let mut out = Jet {
            v: h0,
            ..Default::default()
        };
        for i in 0..3 {
            out.g[i] = b * x[i];
            for j in 0..3 {
                out.h[i][j] = a * x[i] * x[j] + if i == j { b } else { 0.0 };
                for k in 0..3 {
                    let mut s = c * x[i] * x[j] * x[k];
                    if i == j {
                        s += a * x[k];
                    }
                    if i == k {
                        s += a * x[j];
                    }
                    if j == k {
                        s += a * x[i];
                    }
                    out.t[i][j][k] = s;
                }
            }
        }
        out
    }

    /// Leibniz product of two jets.
    pub fn mul(&self, o: &Jet) -> Jet {
        let (a, b) = (self, o);
        let mut out = Jet {
            v: a.v * b.v,
            ..Default::default()
        };
        for i in 0..3 {
            out.g[i] = a.g[i] * b.v + a.v * b.g[i];
            for j in 0..3 {
                out.h[i][j] = a.h[i][j] * b.v + a.g[i] * b.g[j] + a.g[j] * b.g[i] + a.v * b.h[i][j];
                for k in 0..3 {
                    out.t[i][j][k] = a.t[i][j][k] * b.v
                        + a.h[i][j] * b.g[k]
                        + a.h[i][k] * b.g[j]
                        + a.h[j][k] * b.g[i]
                        + a.g[i] * b.h[j][k]
                        + a.g[j] * b.h[i][k]
                        + a.g[k] * b.h[i][j]
                        + a.v * b.t[i][j][k];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = *self;
        out.v *= s;
        for i in 0..3 {
            out.g[i] *= s;
            for j in 0..3 {
                out.h[i][j] *= s;
                for k in 0..3 {
                    out.t[i][j][k] *= s;
                }
            }
        }
        out
    }
}

/// Value, gradient and Hessian of a vector field at a point.
///
/// `grad[i][j] = ∂_j u_i`, `hess[i][j][k] = ∂_j ∂_k u_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub u: Vec3,
    pub grad: Mat3,
    pub hess: [[[f64; 3]; 3]; 3],
}

impl FieldJet {
    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1] + self.grad[2][2]
    }

    pub fn laplacian(&self) -> Vec3 {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.hess[i][0][0] + self.hess[i][1][1] + self.hess[i][2][2];
        }
        out
    }

    /// `(a·∇) u`
    pub fn directional(&self, a: &Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.grad[i][0] * a[0] + self.grad[i][1] * a[1] + self.grad[i][2] * a[2];
        }
        out
    }

    /// Gradient of the divergence, `∂_j (∂_i u_i)`.
    pub fn grad_divergence(&self) -> Vec3 {
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.hess[0][0][j] + self.hess[1][1][j] + self.hess[2][2][j];
        }
        out
    }

    pub fn axpy(&mut self, s: f64, o: &FieldJet) {
        for i in 0..3 {
            self.u[i] += s * o.u[i];
            for j in 0..3 {
                self.grad[i][j] += s * o.grad[i][j];
                for k in 0..3 {
                    self.hess[i][j][k] += s * o.hess[i][j][k];
                }
            }
        }
    }

    pub fn scaled(&self, s: f64) -> FieldJet {
        let mut out = FieldJet::default();
        out.axpy(s, self);
        out
    }

    /// Jet of `φ x` for a scalar jet `φ`.
    pub fn scalar_times_position(phi: &Jet, x: &Vec3) -> FieldJet {
        let mut out = FieldJet::default();
        for i in 0..3 {
            out.u[i] = phi.v * x[i];
            for j in 0..3 {
                out.grad[i][j] = phi.g[j] * x[i] + if i == j { phi.v } else { 0.0 };
                for k in 0..3 {
                    let mut s = phi.h[j][k] * x[i];
                    if i == k {
                        s += phi.g[j];
                    }
                    if i == j {
                        s += phi.g[k];
                    }
                    out.hess[i][j][k] = s;
                }
            }
        }
        out
    }

    /// Jet of `b ∇χ` for scalar jets `b` and `χ`.
    pub fn scalar_times_gradient(b: &Jet, chi: &Jet) -> FieldJet {
        let mut out = FieldJet::default();
        for i in 0..3 {
            out.u[i] = b.v * chi.g[i];
            for j in 0..3 {
                out.grad[i][j] = b.g[j] * chi.g[i] + b.v * chi.h[i][j];
                for k in 0..3 {
                    out.hess[i][j][k] = b.h[j][k] * chi.g[i]
                        + b.g[j] * chi.h[i][k]
                        + b.g[k] * chi.h[i][j]
                        + b.v * chi.t[i][j][k];
                }
            }
        }
        out
    }

    /// Jet of the toroidal field `∇ψ × x`.
    pub fn toroidal(psi: &Jet, x: &Vec3) -> FieldJet {
        use crate::vec3::levi;
        let mut out = FieldJet::default();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let e = levi(i, j, k);
                    if e == 0.0 {
                        continue;
                    }
                    out.u[i] += e * psi.g[j] * x[k];
                    for m in 0..3 {
                        out.grad[i][m] += e * psi.h[m][j] * x[k];
                        for n in 0..3 {
                            out.hess[i][m][n] += e * psi.t[n][m][j] * x[k];
                        }
                    }
                }
                for m in 0..3 {
                    let e = levi(i, j, m);
                    if e == 0.0 {
                        continue;
                    }
                    out.grad[i][m] += e * psi.g[j];
                    for n in 0..3 {
                        // ε_ijm ∂_n∂_j ψ enters both ∂_n∂_m u_i and ∂_m∂_n u_i.
                        out.hess[i][m][n] += e * psi.h[n][j];
                        out.hess[i][n][m] += e * psi.h[n][j];
                    }
                }
            }
        }
        out
    }

    /// Jet of the poloidal field `∇Φ − x Λ` where `Φ = ∂_r(rφ)` and `Λ = Δφ`.
    pub fn poloidal(phi: &Jet, lap: &Jet, x: &Vec3) -> FieldJet {
        let mut out = FieldJet::default();
        for i in 0..3 {
            out.u[i] = phi.g[i] - x[i] * lap.v;
            for m in 0..3 {
                let d_im = if i == m { 1.0 } else { 0.0 };
                out.grad[i][m] = phi.h[m][i] - d_im * lap.v - x[i] * lap.g[m];
                for n in 0..3 {
                    let d_in = if i == n { 1.0 } else { 0.0 };
                    out.hess[i][m][n] =
                        phi.t[n][m][i] - d_im * lap.g[n] - d_in * lap.g[m] - x[i] * lap.h[n][m];
                }
            }
        }
        out
    }
}

/// Number of Taylor coefficients carried for radial profiles.
pub const SERIES_LEN: usize = 6;

/// Truncated Taylor series `Σ c_k δ^k` about a radius `r0`, `δ = r − r0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Series(pub [f64; SERIES_LEN]);

impl Series {
    pub fn constant(c: f64) -> Self {
        let mut s = [0.0; SERIES_LEN];
        s[0] = c;
        Series(s)
    }

    /// `a r + b` expanded about `r0`.
    pub fn linear(a: f64, b: f64, r0: f64) -> Self {
        let mut s = [0.0; SERIES_LEN];
        s[0] = a * r0 + b;
        s[1] = a;
        Series(s)
    }

    /// `r^p` expanded about `r0` for integer `p` (binomial series).
    pub fn power(p: i32, r0: f64) -> Self {
        let mut s = [0.0; SERIES_LEN];
        let mut binom = 1.0;
        let pf = p as f64;
        for (k, c) in s.iter_mut().enumerate() {
            *c = binom * r0.powi(p - k as i32);
            binom *= (pf - k as f64) / (k as f64 + 1.0);
        }
        Series(s)
    }

    pub fn mul(&self, o: &Series) -> Series {
        let mut s = [0.0; SERIES_LEN];
        for i in 0..SERIES_LEN {
            for j in 0..SERIES_LEN - i {
                s[i + j] += self.0[i] * o.0[j];
            }
        }
        Series(s)
    }

    pub fn add(&self, o: &Series) -> Series {
        let mut s = self.0;
        for (a, b) in s.iter_mut().zip(&o.0) {
            *a += b;
        }
        Series(s)
    }

    pub fn scale(&self, c: f64) -> Series {
        let mut s = self.0;
        for a in s.iter_mut() {
            *a *= c;
        }
        Series(s)
    }

    /// Derivative in `r`; the top coefficient is lost to truncation.
    pub fn derivative(&self) -> Series {
        let mut s = [0.0; SERIES_LEN];
        for k in 0..SERIES_LEN - 1 {
            s[k] = (k as f64 + 1.0) * self.0[k + 1];
        }
        Series(s)
    }

    /// `[H, H', H'', H''']` at `r0`.
    pub fn derivatives(&self) -> [f64; 4] {
        [self.0[0], self.0[1], 2.0 * self.0[2], 6.0 * self.0[3]]
    }

    /// Legendre polynomials `P_0..P_{n-1}` of a series argument.
    pub fn legendre(arg: &Series, n: usize) -> Vec<Series> {
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return out;
        }
        out.push(Series::constant(1.0));
        if n == 1 {
            return out;
        }
        out.push(*arg);
        for k in 1..n - 1 {
            let kf = k as f64;
            let next = arg
                .mul(&out[k])
                .scale((2.0 * kf + 1.0) / (kf + 1.0))
                .add(&out[k - 1].scale(-kf / (kf + 1.0)));
            out.push(next);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check<F: Fn(&Vec3) -> f64>(f: F, jet: &Jet, x: &Vec3) {
        let h = 1e-4;
        for i in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            let g = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((g - jet.g[i]).abs() < 1e-6 * (1.0 + g.abs()), "grad {i}");
        }
    }

    #[test]
    fn radial_jet_matches_closed_form() {
        // H(r) = r³ → ∂_i∂_j H = 3(δ_ij r + x_i x_j / r).
        let x = [0.3, -1.1, 0.7];
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) as f64;
        let r = r.sqrt();
        let j = Jet::radial([r.powi(3), 3.0 * r * r, 6.0 * r, 6.0], &x, r);
        for a in 0..3 {
            for b in 0..3 {
                let d = if a == b { 1.0 } else { 0.0 };
                let exact = 3.0 * (d * r + x[a] * x[b] / r);
                assert!((j.h[a][b] - exact).abs() < 1e-12);
            }
        }
        fd_check(
            |y| (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).powf(1.5),
            &j,
            &x,
        );
        // ∂_1∂_1∂_1 r³ = 3 (3 x₁/r − x₁³/r³)
        let exact = 3.0 * (3.0 * x[0] / r - x[0].powi(3) / r.powi(3));
        assert!((j.t[0][0][0] - exact).abs() < 1e-12);
    }

    #[test]
    fn series_power_and_product() {
        let r0 = 1.7;
        let p = Series::power(-3, r0);
        let q = Series::power(3, r0);
        let one = p.mul(&q);
        assert!((one.0[0] - 1.0).abs() < 1e-14);
        for k in 1..SERIES_LEN {
            assert!(one.0[k].abs() < 1e-12);
        }
        let d = Series::power(4, r0).derivatives();
        assert!((d[3] - 24.0 * r0).abs() < 1e-12);
    }

    #[test]
    fn legendre_series_derivative() {
        let x0 = 0.37;
        let arg = Series::linear(1.0, 0.0, x0);
        let p = Series::legendre(&arg, 6);
        let (v, d) = crate::geometry::legendre_with_derivative(5, x0);
        assert!((p[5].0[0] - v).abs() < 1e-14);
        assert!((p[5].0[1] - d).abs() < 1e-13);
    }
}
