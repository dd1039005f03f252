//! Measured identities and constants: the rotation identity for zero-trace
//! fields, energy-estimate ratios across resolutions, the Heywood and trace
//! constants, and wake-decay profiles along the coordinate rays.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fields::basis::{assemble_forms, hessian_features, FormSpec, HESSIAN_FEATURES};
use crate::fields::table::{FieldTable, COMPONENTS};
use crate::geometry::{AngularRule, ShellDomain, ShellQuadrature, WakeWeight};
use crate::periodic_linear::pipeline::{EstimateRatios, LinearReport};
use crate::periodic_linear::system::swirl_velocity;
use crate::periodic_linear::FlowSolution;
use crate::rotating_frame::{drift, FrameTransform, WeightComparison};
use crate::stokes_eigen::StokesEigenSystem;
use crate::vec3::{norm, Vec3};

/// Both sides of `∫ (ω×w − (ω×x)·∇w)·PΔw = −∫ ∇(ω×w):∇w` for a zero-trace
/// field `w` (the boundary integrals vanish), with `ω = ω e₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationIdentity {
    pub omega: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `∫ (ω×w)·PΔw` and `∫ ((ω×x)·∇w)·PΔw`, which cancel in the left side.
    pub spin_part: f64,
    pub transport_part: f64,
    /// `|lhs − rhs|`, quadratic in `w`.
    pub defect: f64,
    /// `|lhs − rhs| / (|lhs| + |rhs| + 1)`.
    pub residual: f64,
}

/// Evaluates the rotation identity for `w = Σ c_j w_j` (eigenframe
/// coefficients). `PΔw = −Σ λ_j c_j w_j` on the Galerkin span. The left
/// side is integrated on `lhs_quad`, the right side on `rhs_quad`.
pub fn verify_rotation_identity(
    eigen: &StokesEigenSystem,
    coeffs: &[f64],
    omega: f64,
    lhs_quad: &ShellQuadrature,
    rhs_quad: &ShellQuadrature,
) -> Result<RotationIdentity> {
    let k = eigen.len();
    if coeffs.len() != k {
        return Err(Error::FrameMismatch(format!(
            "{} coefficients for {k} modes",
            coeffs.len()
        )));
    }
    let c = DVector::from_column_slice(coeffs);
    let lc = DVector::from_fn(k, |j, _| -eigen.eigenvalues[j] * coeffs[j]);
    let fields = DMatrix::from_columns(&[&eigen.vectors * &c, &eigen.vectors * &lc]);

    let table = FieldTable::from_basis(&eigen.basis, &lhs_quad.points);
    let m = table.evaluate(&fields);
    let np = lhs_quad.len();
    let (mut spin, mut transport) = (0.0, 0.0);
    for (p, (x, w)) in lhs_quad.points.iter().zip(&lhs_quad.weights).enumerate() {
        let u = |i: usize| m[(i * np + p, 0)];
        let pd = |i: usize| m[(i * np + p, 1)];
        let g = |i: usize, j: usize| m[((3 + 3 * i + j) * np + p, 0)];
        let s = swirl_velocity(x);
        // ω e₁ × w = ω (0, −w₃, w₂)
        spin += w * omega * (-u(2) * pd(1) + u(1) * pd(2));
        for i in 0..3 {
            let d: f64 = (0..3).map(|j| s[j] * g(i, j)).sum();
            transport += w * omega * d * pd(i);
        }
    }
    let lhs = spin - transport;

    let table = FieldTable::from_basis(&eigen.basis, &rhs_quad.points);
    let m = table.evaluate(&fields.columns(0, 1).into_owned());
    let np = rhs_quad.len();
    let mut rhs = 0.0;
    for (p, w) in rhs_quad.weights.iter().enumerate() {
        let g = |i: usize, j: usize| m[((3 + 3 * i + j) * np + p, 0)];
        // ∂_j(ω e₁ × w) = ω e₁ × ∂_j w
        for j in 0..3 {
            let rot = [0.0, -g(2, j), g(1, j)];
            rhs -= w * omega * (0..3).map(|i| rot[i] * g(i, j)).sum::<f64>();
        }
    }
    let defect = (lhs - rhs).abs();
    Ok(RotationIdentity {
        omega,
        lhs,
        rhs,
        spin_part: spin,
        transport_part: transport,
        defect,
        residual: defect / (lhs.abs() + rhs.abs() + 1.0),
    })
}

/// Random combination of `modes` distinct eigenfunctions with coefficients
/// uniform in `[−1, 1]`.
pub fn random_combination(k: usize, modes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut c = vec![0.0; k];
    let mut chosen = 0;
    while chosen < modes.min(k) {
        let j = rng.gen_range(0..k);
        if c[j] == 0.0 {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if v != 0.0 {
                c[j] = v;
                chosen += 1;
            }
        }
    }
    c
}

/// Energy-estimate ratio of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRatioEntry {
    pub outer_radius: f64,
    pub modes: usize,
    pub basic: f64,
    pub differentiated: f64,
}

/// Relative change of the ratios between two runs, `r_b / r_a − 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioVariation {
    pub from: (f64, usize),
    pub to: (f64, usize),
    pub basic: f64,
    pub differentiated: f64,
}

impl RatioVariation {
    pub fn largest(&self) -> f64 {
        self.basic.abs().max(self.differentiated.abs())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyRatioReport {
    pub entries: Vec<EnergyRatioEntry>,
    /// Smallest to largest `k` at each radius.
    pub across_modes: Vec<RatioVariation>,
    /// Smallest to largest `R` at each `k`.
    pub across_radii: Vec<RatioVariation>,
    pub tolerance: f64,
    /// Some variation exceeds the tolerance.
    pub flagged: bool,
}

/// Tabulates the measured ratios of the two energy estimates and their
/// variation across `k` (at fixed `R`) and across `R` (at fixed `k`).
pub fn measure_energy_ratios(runs: &[LinearReport], tolerance: f64) -> EnergyRatioReport {
    let entries: Vec<EnergyRatioEntry> = runs
        .iter()
        .map(|r| {
            let e: &EstimateRatios = &r.estimates;
            EnergyRatioEntry {
                outer_radius: r.metadata.outer_radius,
                modes: r.metadata.modes,
                basic: e.basic_ratio,
                differentiated: e.differentiated_ratio,
            }
        })
        .collect();
    let change = |a: f64, b: f64| {
        if a > 0.0 {
            b / a - 1.0
        } else if b > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let variation = |a: &EnergyRatioEntry, b: &EnergyRatioEntry| RatioVariation {
        from: (a.outer_radius, a.modes),
        to: (b.outer_radius, b.modes),
        basic: change(a.basic, b.basic),
        differentiated: change(a.differentiated, b.differentiated),
    };
    let mut by_radius: BTreeMap<u64, Vec<&EnergyRatioEntry>> = BTreeMap::new();
    let mut by_modes: BTreeMap<usize, Vec<&EnergyRatioEntry>> = BTreeMap::new();
    for e in &entries {
        by_radius
            .entry(e.outer_radius.to_bits())
            .or_default()
            .push(e);
        by_modes.entry(e.modes).or_default().push(e);
    }
    let extremes = |group: &Vec<&EnergyRatioEntry>, key: &dyn Fn(&EnergyRatioEntry) -> f64| {
        let lo = group.iter().min_by(|a, b| key(a).total_cmp(&key(b)))?;
        let hi = group.iter().max_by(|a, b| key(a).total_cmp(&key(b)))?;
        (key(lo) != key(hi)).then(|| variation(lo, hi))
    };
    let across_modes: Vec<RatioVariation> = by_radius
        .values()
        .filter_map(|g| extremes(g, &|e| e.modes as f64))
        .collect();
    let across_radii: Vec<RatioVariation> = by_modes
        .values()
        .filter_map(|g| extremes(g, &|e| e.outer_radius))
        .collect();
    let flagged = across_modes
        .iter()
        .chain(&across_radii)
        .any(|v| !(v.largest() <= tolerance));
    EnergyRatioReport {
        entries,
        across_modes,
        across_radii,
        tolerance,
        flagged,
    }
}

/// Frame matrices of `‖D²v‖₂²` and of `∫_{|x|=1} |∇v|²`.
pub struct SecondOrderForms {
    pub hessian: DMatrix<f64>,
    pub boundary_gradient: DMatrix<f64>,
}

impl SecondOrderForms {
    pub fn new(eigen: &StokesEigenSystem) -> Self {
        let basis = &eigen.basis;
        let quad = basis.domain.build_quadrature();
        let mut forms = [FormSpec::symmetric(HESSIAN_FEATURES, |j, _, _, o| {
            hessian_features(j, o)
        })];
        assemble_forms(basis, &quad, &mut forms);
        let hessian = eigen.to_frame(&forms[0].matrix);
        let rule = AngularRule::gauss_product(basis.domain.angular_degree);
        let table = FieldTable::from_basis(basis, &rule.directions);
        let np = rule.len();
        let sw = DVector::from_iterator(np, rule.weights.iter().map(|w| w.sqrt()));
        let k = basis.len();
        let mut b = DMatrix::zeros(k, k);
        for c in 3..COMPONENTS {
            let mut g = table.data.rows(c * np, np).into_owned();
            for (mut row, s) in g.row_iter_mut().zip(sw.iter()) {
                row *= *s;
            }
            b += g.transpose() * &g;
        }
        Self {
            hessian,
            boundary_gradient: eigen.to_frame(&b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeywoodReport {
    pub outer_radius: f64,
    pub samples: usize,
    /// `c₀ = max ‖D²v‖₂ / (‖PΔv‖₂ + ‖∇v‖₂)` over the samples.
    pub constant: f64,
    pub ratios: Vec<f64>,
    /// `ε` of the trace inequality `∫_{∂Ω}|∇v|² ≤ ε‖D²v‖² + C(ε)‖∇v‖²`.
    pub trace_epsilon: f64,
    /// Measured `C(ε)`: the largest `(∫_{∂Ω}|∇v|² − ε‖D²v‖²) / ‖∇v‖²`.
    pub trace_constant: f64,
}

/// Heywood ratio of one eigenframe field; `None` for the zero field.
pub fn heywood_ratio(
    eigen: &StokesEigenSystem,
    forms: &SecondOrderForms,
    c: &[f64],
) -> Option<f64> {
    let cv = DVector::from_column_slice(c);
    let grad2: f64 = c
        .iter()
        .zip(&eigen.eigenvalues)
        .map(|(a, l)| l * a * a)
        .sum();
    let stokes: f64 = c
        .iter()
        .zip(&eigen.eigenvalues)
        .map(|(a, l)| (l * a).powi(2))
        .sum::<f64>()
        .sqrt();
    let d2 = (&forms.hessian * &cv).dot(&cv).max(0.0).sqrt();
    let den = stokes + grad2.sqrt();
    (den > 0.0).then(|| d2 / den)
}

/// Samples `samples` random fields (each a combination of a random number
/// of eigenfunctions) and records the Heywood and trace constants.
pub fn measure_heywood(
    eigen: &StokesEigenSystem,
    samples: usize,
    trace_epsilon: f64,
    seed: u64,
) -> Result<HeywoodReport> {
    if samples == 0 {
        return Err(Error::InvalidConfig(
            "Heywood sampling needs at least one field".into(),
        ));
    }
    let forms = SecondOrderForms::new(eigen);
    let k = eigen.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(samples);
    let mut trace: f64 = f64::NEG_INFINITY;
    while ratios.len() < samples {
        let modes = rng.gen_range(1..=k);
        let c = random_combination(k, modes, &mut rng);
        let Some(r) = heywood_ratio(eigen, &forms, &c) else {
            continue;
        };
        ratios.push(r);
        let cv = DVector::from_column_slice(&c);
        let grad2: f64 = c
            .iter()
            .zip(&eigen.eigenvalues)
            .map(|(a, l)| l * a * a)
            .sum();
        let bnd = (&forms.boundary_gradient * &cv).dot(&cv);
        let d2 = (&forms.hessian * &cv).dot(&cv);
        trace = trace.max((bnd - trace_epsilon * d2) / grad2);
    }
    Ok(HeywoodReport {
        outer_radius: eigen.outer_radius(),
        samples,
        constant: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
        trace_epsilon,
        trace_constant: trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayOptions {
    pub inner_radius: f64,
    /// Rays stop at `outer_fraction · R`.
    pub outer_fraction: f64,
    pub spacing: f64,
    pub snapshots: usize,
    pub annuli: usize,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            inner_radius: 2.0,
            outer_fraction: 0.9,
            spacing: 0.25,
            snapshots: 8,
            annuli: 4,
        }
    }
}

pub const RAY_DIRECTIONS: [(&str, Vec3); 4] = [
    ("+e1", [1.0, 0.0, 0.0]),
    ("-e1", [-1.0, 0.0, 0.0]),
    ("+e2", [0.0, 1.0, 0.0]),
    ("-e2", [0.0, -1.0, 0.0]),
];

/// One row of the ray table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub direction: String,
    pub radius: f64,
    pub speed: f64,
    /// `(1+|x|)(1+2λs(x))`.
    pub weight: f64,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionFit {
    pub direction: String,
    /// Least-squares slope of `log|u|` against `log r`; `None` when `u`
    /// vanishes somewhere on the ray.
    pub slope: Option<f64>,
    /// Root-mean-square misfit in `log|u|`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySnapshot {
    pub node: usize,
    pub time: f64,
    pub drift: Vec3,
    pub fits: Vec<DirectionFit>,
}

impl DecaySnapshot {
    pub fn slope(&self, direction: &str) -> Option<f64> {
        self.fits
            .iter()
            .find(|f| f.direction == direction)
            .and_then(|f| f.slope)
    }

    /// `slope(+e₁) − slope(−e₁)`.
    pub fn anisotropy(&self) -> Option<f64> {
        Some(self.slope("+e1")? - self.slope("-e1")?)
    }
}

/// `sup [!]u[!]_{∞,1,λ}` over one annulus and all snapshots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusNorm {
    pub inner: f64,
    pub outer: f64,
    pub weighted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub lambda: f64,
    pub omega: f64,
    pub outer_radius: f64,
    pub radii: Vec<f64>,
    pub snapshots: Vec<DecaySnapshot>,
    pub annuli: Vec<AnnulusNorm>,
    /// No slope could be fitted (for instance the zero solution).
    pub undefined: bool,
    pub drift_bound: f64,
    pub weight_comparison: WeightComparison,
    pub samples: Vec<RaySample>,
}

impl DecayReport {
    /// Annulus norms are nonincreasing beyond the first annulus, up to a
    /// relative slack.
    pub fn annuli_nonincreasing(&self, slack: f64) -> bool {
        self.annuli
            .windows(2)
            .skip(1)
            .all(|w| w[1].weighted <= (1.0 + slack) * w[0].weighted)
    }

    /// Writes the ray table as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fit_slope(radii: &[f64], speeds: &[f64]) -> (Option<f64>, f64) {
    if speeds.iter().any(|s| !(*s > 0.0)) {
        return (None, 0.0);
    }
    let n = radii.len() as f64;
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = speeds.iter().map(|s| s.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (my + slope * (x - mx) - y).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (Some(slope), rms)
}

/// Decay of `|u|` along `±e₁, ±e₂` between `inner_radius` and
/// `outer_fraction · R` at evenly spaced snapshots, plus weighted sup-norms
/// over annuli (rays and a spherical grid at every sample radius).
pub fn decay_profile(
    sol: &FlowSolution,
    transform: &FrameTransform,
    opts: &DecayOptions,
) -> Result<DecayReport> {
    let r_out = sol.eigen().outer_radius();
    let top = opts.outer_fraction * r_out;
    if !(opts.spacing > 0.0) || opts.snapshots == 0 || opts.annuli == 0 {
        return Err(Error::InvalidConfig(
            "decay options need spacing > 0, snapshots >= 1, annuli >= 1".into(),
        ));
    }
    let count = if top >= opts.inner_radius {
        ((top - opts.inner_radius) / opts.spacing + 1e-9).floor() as usize + 1
    } else {
        0
    };
    if count < 6 {
        return Err(Error::RayTooShort { shells: count });
    }
    let radii: Vec<f64> = (0..count)
        .map(|i| opts.inner_radius + i as f64 * opts.spacing)
        .collect();
    let lambda = sol.profile().lambda().max(0.0);
    let weight = WakeWeight { lambda, order: 1 };

    let rule = AngularRule::gauss_product(sol.eigen().basis.domain.angular_degree);
    let mut points: Vec<Vec3> = Vec::new();
    for (_, d) in RAY_DIRECTIONS {
        points.extend(radii.iter().map(|r| [d[0] * r, d[1] * r, d[2] * r]));
    }
    let n_ray = points.len();
    for r in &radii {
        points.extend(
            rule.directions
                .iter()
                .map(|d| [d[0] * r, d[1] * r, d[2] * r]),
        );
    }
    let table = FieldTable::from_basis(&sol.eigen().basis, &points);
    let n_t = sol.n_t();
    let nodes: Vec<usize> = (0..opts.snapshots)
        .map(|i| i * n_t / opts.snapshots)
        .collect();
    let coeffs = DMatrix::from_fn(sol.eigen().len(), nodes.len(), |i, c| {
        sol.trajectory.samples[nodes[c]][i]
    });
    let vals = table.evaluate_values(&(&sol.eigen().vectors * coeffs));
    let np = points.len();
    let times = sol.times();
    let ext = !sol.extension().is_zero() && sol.extension_weight != 0.0;

    let edges: Vec<f64> = (0..=opts.annuli)
        .map(|i| radii[0] + (radii[count - 1] - radii[0]) * i as f64 / opts.annuli as f64)
        .collect();
    let mut annuli: Vec<AnnulusNorm> = edges
        .windows(2)
        .map(|w| AnnulusNorm {
            inner: w[0],
            outer: w[1],
            weighted: 0.0,
        })
        .collect();
    let mut snapshots = Vec::with_capacity(nodes.len());
    let mut samples = Vec::new();
    for (col, &node) in nodes.iter().enumerate() {
        let t = times[node];
        let speed_at = |p: usize| {
            let mut u = [vals[(p, col)], vals[(np + p, col)], vals[(2 * np + p, col)]];
            if ext {
                let e = sol.extension().jet(&points[p], t).u;
                for i in 0..3 {
                    u[i] += sol.extension_weight * e[i];
                }
            }
            norm(&u)
        };
        let speeds: Vec<f64> = (0..np).map(speed_at).collect();
        let mut fits = Vec::with_capacity(RAY_DIRECTIONS.len());
        for (di, (name, _)) in RAY_DIRECTIONS.iter().enumerate() {
            let ray = &speeds[di * count..(di + 1) * count];
            let (slope, residual) = fit_slope(&radii, ray);
            fits.push(DirectionFit {
                direction: name.to_string(),
                slope,
                residual,
            });
            for (i, r) in radii.iter().enumerate() {
                let p = di * count + i;
                samples.push(RaySample {
                    direction: name.to_string(),
                    radius: *r,
                    speed: ray[i],
                    weight: weight.weight(&points[p]),
                    time: t,
                });
            }
        }
        for (p, x) in points.iter().enumerate() {
            let r = norm(x);
            let a = annuli
                .iter()
                .position(|a| r <= a.outer + 1e-12)
                .unwrap_or(annuli.len() - 1);
            annuli[a].weighted = annuli[a].weighted.max(weight.weight(x) * speeds[p]);
        }
        debug_assert!(n_ray == RAY_DIRECTIONS.len() * count);
        snapshots.push(DecaySnapshot {
            node,
            time: t,
            drift: drift(t, &transform.profile),
            fits,
        });
    }
    let undefined = snapshots
        .iter()
        .all(|s| s.fits.iter().all(|f| f.slope.is_none()));
    let shell = ShellDomain::new(r_out, 8, 8)?;
    Ok(DecayReport {
        lambda,
        omega: sol.profile().omega,
        outer_radius: r_out,
        radii,
        snapshots,
        annuli,
        undefined,
        drift_bound: transform.drift_bound,
        weight_comparison: transform.weight_comparison(&shell),
        samples,
    })
}

/// Everything the verification suite measures, in one JSON document.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EstimateReport {
    pub energy: EnergyRatioReport,
    pub heywood: Vec<HeywoodReport>,
    pub rotation: Vec<RotationIdentity>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let radii: Vec<f64> = (0..8).map(|i| 2.0 + 0.5 * i as f64).collect();
        let s: Vec<f64> = radii.iter().map(|r| 3.0 * r.powf(-1.5)).collect();
        let (slope, res) = fit_slope(&radii, &s);
        assert!((slope.unwrap() + 1.5).abs() < 1e-12 && res < 1e-12);
        assert_eq!(fit_slope(&radii, &vec![0.0; 8]).0, None);
    }

    #[test]
    fn random_combination_has_requested_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_combination(30, 10, &mut rng);
        assert_eq!(c.iter().filter(|v| **v != 0.0).count(), 10);
    }
}
