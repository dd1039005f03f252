//! Real solid harmonics `r^l Y_lm` as exact polynomials in `(x, y, z)`.

use super::jet::Jet;
use crate::geometry::AngularRule;
use crate::vec3::Vec3;

/// Sparse polynomial in three variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly3 {
    pub terms: Vec<([u32; 3], f64)>,
}

impl Poly3 {
    pub fn monomial(e: [u32; 3], c: f64) -> Self {
        Poly3 {
            terms: vec![(e, c)],
        }
    }

    fn normalize(mut self) -> Self {
        self.terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<([u32; 3], f64)> = Vec::with_capacity(self.terms.len());
        for (e, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == e => last.1 += c,
                _ => out.push((e, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Poly3 { terms: out }
    }

    pub fn add(&self, o: &Poly3) -> Poly3 {
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().copied());
        Poly3 { terms }.normalize()
    }

    pub fn mul(&self, o: &Poly3) -> Poly3 {
        let mut terms = Vec::with_capacity(self.terms.len() * o.terms.len());
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                terms.push(([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]], ca * cb));
            }
        }
        Poly3 { terms }.normalize()
    }

    pub fn scale(&self, s: f64) -> Poly3 {
        Poly3 {
            terms: self.terms.iter().map(|(e, c)| (*e, c * s)).collect(),
        }
    }

    pub fn derivative(&self, axis: usize) -> Poly3 {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[axis] > 0)
            .map(|(e, c)| {
                let mut e2 = *e;
                e2[axis] -= 1;
                (e2, c * e[axis] as f64)
            })
            .collect();
        Poly3 { terms }.normalize()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(e, _)| e[0] + e[1] + e[2])
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32)
            })
            .sum()
    }

    fn eval_with(&self, pows: &[[f64; 3]]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * pows[e[0] as usize][0] * pows[e[1] as usize][1] * pows[e[2] as usize][2]
            })
            .sum()
    }
}

/// Coefficients of the `m`-th derivative of the Legendre polynomial `P_l`,
/// as `(power, coefficient)` pairs.
fn legendre_derivative_coeffs(l: usize, m: usize) -> Vec<(usize, f64)> {
    // P_l(t) = 2^{-l} Σ_k (-1)^k C(l,k) C(2l-2k, l) t^{l-2k}
    let mut out = Vec::new();
    for k in 0..=l / 2 {
        let p = l - 2 * k;
        if p < m {
            continue;
        }
        let mut c = binom(l, k) * binom(2 * l - 2 * k, l) / 2f64.powi(l as i32);
        if k % 2 == 1 {
            c = -c;
        }
        // m-fold derivative of t^p
        let mut fall = 1.0;
        for q in 0..m {
            fall *= (p - q) as f64;
        }
        out.push((p - m, c * fall));
    }
    out
}

fn binom(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// `r^{2k}` as a polynomial.
fn r2_power(k: usize) -> Poly3 {
    let r2 = Poly3 {
        terms: vec![([2, 0, 0], 1.0), ([0, 2, 0], 1.0), ([0, 0, 2], 1.0)],
    };
    let mut out = Poly3::monomial([0, 0, 0], 1.0);
    for _ in 0..k {
        out = out.mul(&r2);
    }
    out
}

/// Real and imaginary parts of `(x + i y)^m`.
fn xy_power(m: usize) -> (Poly3, Poly3) {
    let mut re = Poly3::default();
    let mut im = Poly3::default();
    for k in 0..=m {
        // C(m,k) x^{m-k} (i y)^k
        let c = binom(m, k);
        let e = [(m - k) as u32, k as u32, 0];
        match k % 4 {
            0 => re.terms.push((e, c)),
            1 => im.terms.push((e, c)),
            2 => re.terms.push((e, -c)),
            _ => im.terms.push((e, -c)),
        }
    }
    (re.normalize(), im.normalize())
}

/// Homogeneous harmonic polynomial `S_lm(x) = r^l Y_lm(x̂)` with `Y_lm`
/// unit-normalized on the sphere. The polar axis is `x₃`.
#[derive(Clone, Debug)]
pub struct SolidHarmonic {
    pub l: usize,
    pub m: i32,
    pub poly: Poly3,
    d1: [Poly3; 3],
    d2: [[Poly3; 3]; 3],
    d3: [[[Poly3; 3]; 3]; 3],
}

impl SolidHarmonic {
    pub fn new(l: usize, m: i32) -> Self {
        assert!(m.unsigned_abs() as usize <= l);
        let am = m.unsigned_abs() as usize;
        let mut q = Poly3::default();
        for (p, c) in legendre_derivative_coeffs(l, am) {
            // t^p with t = z/r and overall r^{l-m}: z^p r^{l-m-p}
            let k = (l - am - p) / 2;
            q = q.add(&Poly3::monomial([0, 0, p as u32], c).mul(&r2_power(k)));
        }
        let (re, im) = xy_power(am);
        let raw = match m.cmp(&0) {
            std::cmp::Ordering::Equal => q,
            std::cmp::Ordering::Greater => re.mul(&q),
            std::cmp::Ordering::Less => im.mul(&q),
        };
        let rule = AngularRule::gauss_product(2 * l + 2);
        let nrm = rule.integrate(|d| raw.eval(d).powi(2)).sqrt();
        let poly = raw.scale(1.0 / nrm);
        Self::from_poly(l, m, poly)
    }

    fn from_poly(l: usize, m: i32, poly: Poly3) -> Self {
        let d1 = [0, 1, 2].map(|i| poly.derivative(i));
        let d2 = [0, 1, 2].map(|i| [0, 1, 2].map(|j| d1[i].derivative(j)));
        let d3 = [0, 1, 2].map(|i| [0, 1, 2].map(|j| [0, 1, 2].map(|k| d2[i][j].derivative(k))));
        Self {
            l,
            m,
            poly,
            d1,
            d2,
            d3,
        }
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        self.poly.eval(x)
    }

    pub fn jet(&self, x: &Vec3) -> Jet {
        let mut pows = vec![[1.0; 3]; self.l + 1];
        for e in 1..=self.l {
            for a in 0..3 {
                pows[e][a] = pows[e - 1][a] * x[a];
            }
        }
        let mut j = Jet {
            v: self.poly.eval_with(&pows),
            ..Default::default()
        };
        for a in 0..3 {
            j.g[a] = self.d1[a].eval_with(&pows);
            for b in a..3 {
                let v = self.d2[a][b].eval_with(&pows);
                j.h[a][b] = v;
                j.h[b][a] = v;
                for c in b..3 {
                    let w = self.d3[a][b][c].eval_with(&pows);
                    for (p, q, s) in [
                        (a, b, c),
                        (a, c, b),
                        (b, a, c),
                        (b, c, a),
                        (c, a, b),
                        (c, b, a),
                    ] {
                        j.t[p][q][s] = w;
                    }
                }
            }
        }
        j
    }
}

/// All real harmonics with `l_min <= l <= l_max`, ordered by `l` then `m`.
pub fn harmonic_table(l_min: usize, l_max: usize) -> Vec<SolidHarmonic> {
    let mut out = Vec::new();
    for l in l_min..=l_max {
        for m in -(l as i32)..=(l as i32) {
            out.push(SolidHarmonic::new(l, m));
        }
    }
    out
}
