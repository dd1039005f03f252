//! Command-line front end.
//!
//! `wakeflow <eigen|linear|solve|decay|verify> --config <path> [--workers N] [--out DIR]`
//!
//! Every run reads one TOML file, writes JSON and CSV artifacts into the
//! output directory and finishes with `manifest.json`. Eigenframes are cached
//! under `<out>/cache`, keyed by a hash of everything they depend on. Nothing
//! time- or host-dependent is written, so identical inputs give identical
//! files.

use clap::{Parser, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::diagnostics::{
    decay_profile, measure_energy_ratios, measure_heywood, random_combination,
    verify_rotation_identity, DecayOptions, DecayReport, EnergyRatioReport, EstimateReport,
};
use crate::error::{Error, Result};
use crate::fields::basis::BasisValidity;
use crate::fields::extension::{ExtensionField, ExtensionOptions};
use crate::fields::SolenoidalBasis;
use crate::geometry::ShellDomain;
use crate::nonlinear::{
    scale_to_first_iterate, InitialGuess, PicardOptions, PicardReport, PicardSolver,
};
use crate::periodic_linear::pipeline::{prepare, solve_linear_on, LinearReport, Resolution};
use crate::periodic_linear::shooting::{solve_periodic, DenseOde};
use crate::periodic_linear::system::assemble;
use crate::periodic_linear::{FlowSolution, Forcing, ForcingShape, KinematicProfile};
use crate::rotating_frame::FrameTransform;
use crate::stokes_eigen::{solve_eigen, EigenCheck, StokesEigenSystem};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Stokes eigenframes and spectra.
    Eigen,
    /// Periodic linear problem with pressure.
    Linear,
    /// Nonlinear problem by contraction.
    Solve,
    /// Wake-decay profile of the nonlinear solution.
    Decay,
    /// Property and diagnostic suite with a pass/fail summary.
    Verify,
}

#[derive(Parser, Debug, Clone)]
#[command(
    name = "wakeflow",
    version,
    about = "Time-periodic flow around a translating, spinning sphere"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub task: Task,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Requested worker count (runs are single-threaded; recorded only).
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub kinematics: KinematicProfile,
    #[serde(default)]
    pub forcing: ForcingConfig,
    pub domain: DomainConfig,
    pub resolution: Resolution,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub decay: DecayOptions,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingConfig {
    pub preset: ForcingShape,
    /// `a₀, a₁, a₂` of `a(t) = a₀ + a₁ cos Ωt + a₂ sin Ωt`.
    pub amplitude: [f64; 3],
    pub center: f64,
    pub width: f64,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            preset: ForcingShape::None,
            amplitude: [0.0; 3],
            center: 1.5,
            width: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Truncation radii `R`, each `> 1`.
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Leray–Hopf target for the extension.
    pub epsilon: f64,
    /// First cutoff width tried.
    pub extension_width: Option<f64>,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub stall_window: usize,
    pub pressure: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PicardOptions::default();
        Self {
            epsilon: ExtensionOptions::default().epsilon,
            extension_width: None,
            max_iter: p.max_iter,
            rel_tol: p.rel_tol,
            stall_window: p.stall_window,
            pressure: p.pressure,
        }
    }
}

impl SolverConfig {
    pub fn picard(&self) -> PicardOptions {
        PicardOptions {
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            stall_window: self.stall_window,
            pressure: self.pressure,
        }
    }

    pub fn extension(&self, seed: u64) -> ExtensionOptions {
        ExtensionOptions {
            epsilon: self.epsilon,
            initial_width: self.extension_width,
            seed,
            ..Default::default()
        }
    }
}

/// One linear solve of the energy-ratio comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyRun {
    pub radius: f64,
    pub radial_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub rotation_samples: usize,
    pub rotation_omegas: Vec<f64>,
    pub heywood_samples: usize,
    pub trace_epsilon: f64,
    pub energy_tolerance: f64,
    /// Defaults to `N` and `2N` on every configured radius.
    pub energy_runs: Vec<EnergyRun>,
    /// Data are scaled so the first iterate has this 𝒮-norm at most.
    pub first_iterate_target: f64,
    pub decay: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            rotation_samples: 20,
            rotation_omegas: vec![0.5, 2.0],
            heywood_samples: 20,
            trace_epsilon: 0.5,
            energy_tolerance: 0.25,
            energy_runs: Vec::new(),
            first_iterate_target: 0.05,
            decay: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.kinematics.validate()?;
        self.resolution.validate()?;
        if self.domain.radii.is_empty() {
            return Err(Error::InvalidConfig("domain.radii is empty".into()));
        }
        if let Some(r) = self
            .domain
            .radii
            .iter()
            .find(|r| !(**r > 1.0 && r.is_finite()))
        {
            return Err(Error::InvalidConfig(format!(
                "domain radius {r} must be finite and > 1"
            )));
        }
        self.forcing()?;
        self.solver.picard().validate()?;
        if !(self.solver.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "solver.epsilon must be positive (got {})",
                self.solver.epsilon
            )));
        }
        if let Some(r) = self
            .verify
            .energy_runs
            .iter()
            .find(|r| !(r.radius > 1.0) || r.radial_count == 0)
        {
            return Err(Error::InvalidConfig(format!("invalid energy run {r:?}")));
        }
        Ok(())
    }

    pub fn forcing(&self) -> Result<Forcing> {
        let f = &self.forcing;
        match f.preset {
            ForcingShape::None => Ok(Forcing::none(self.kinematics.period)),
            shape => Forcing::new(
                shape,
                f.amplitude,
                self.kinematics.period,
                f.center,
                f.width,
            ),
        }
    }

    /// Radii in ascending order.
    pub fn radii(&self) -> Vec<f64> {
        let mut r = self.domain.radii.clone();
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    }

    fn resolution_with(&self, radial_count: usize) -> Resolution {
        Resolution {
            radial_count,
            ..self.resolution.clone()
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// On-disk form of a basis and its eigenframe.
#[derive(Serialize, Deserialize)]
struct EigenCache {
    key: String,
    domain: ShellDomain,
    max_degree: usize,
    radial_count: usize,
    scales: Vec<f64>,
    gram: Vec<f64>,
    stiffness: Vec<f64>,
    eigenvalues: Vec<f64>,
    vectors: Vec<f64>,
    gram_condition: f64,
}

fn eigen_key(domain: &ShellDomain, res: &Resolution) -> String {
    let desc = format!(
        "wakeflow {VERSION} eigen {:016x} {:016x} {} {} {} {} {:?}",
        domain.inner_radius.to_bits(),
        domain.outer_radius.to_bits(),
        domain.radial_order,
        domain.angular_degree,
        res.max_degree,
        res.radial_count,
        domain
            .breakpoints
            .iter()
            .map(|b| b.to_bits())
            .collect::<Vec<_>>()
    );
    sha256_hex(desc.as_bytes())
}

/// Loads the eigenframe on `Ω_R` from `cache_dir`, or computes and stores it.
pub fn cached_eigen(
    outer_radius: f64,
    res: &Resolution,
    cache_dir: &Path,
) -> Result<StokesEigenSystem> {
    res.validate()?;
    let domain = res.domain(outer_radius)?;
    let key = eigen_key(&domain, res);
    let path = cache_dir.join(format!("eigen-{}.json", &key[..24]));
    if let Ok(text) = fs::read_to_string(&path) {
        match restore_eigen(&text, &key) {
            Ok(e) => return Ok(e),
            Err(e) => eprintln!("warning: ignoring cache {}: {e}", path.display()),
        }
    }
    let basis = SolenoidalBasis::build(&domain, res.max_degree, res.radial_count)?;
    let eigen = solve_eigen(&basis)?;
    let entry = EigenCache {
        key,
        domain,
        max_degree: res.max_degree,
        radial_count: res.radial_count,
        scales: basis.scales().to_vec(),
        gram: basis.gram.as_slice().to_vec(),
        stiffness: basis.stiffness.as_slice().to_vec(),
        eigenvalues: eigen.eigenvalues.clone(),
        vectors: eigen.vectors.as_slice().to_vec(),
        gram_condition: eigen.gram_condition,
    };
    fs::create_dir_all(cache_dir)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(&entry)?)?;
    fs::rename(&tmp, &path)?;
    Ok(eigen)
}

fn restore_eigen(text: &str, key: &str) -> Result<StokesEigenSystem> {
    let c: EigenCache = serde_json::from_str(text)?;
    if c.key != key {
        return Err(Error::Cache("key mismatch".into()));
    }
    let k = c.scales.len();
    if c.gram.len() != k * k
        || c.stiffness.len() != k * k
        || c.vectors.len() != k * k
        || c.eigenvalues.len() != k
    {
        return Err(Error::Cache("inconsistent sizes".into()));
    }
    let basis = SolenoidalBasis::from_parts(
        &c.domain,
        c.max_degree,
        c.radial_count,
        c.scales,
        DMatrix::from_vec(k, k, c.gram),
        DMatrix::from_vec(k, k, c.stiffness),
    )?;
    Ok(StokesEigenSystem {
        basis,
        eigenvalues: c.eigenvalues,
        vectors: DMatrix::from_vec(k, k, c.vectors),
        gram_condition: c.gram_condition,
    })
}

/// Output directory with the list of files written so far.
pub struct Output {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.dir.join("cache")
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, header: &[&str], fill: F) -> Result<()>
    where
        F: FnOnce(&mut csv::Writer<fs::File>) -> Result<()>,
    {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(
        mut self,
        task: Task,
        config_hash: &str,
        cfg: &RunConfig,
        workers: usize,
    ) -> Result<()> {
        self.files.sort();
        let manifest = Manifest {
            tool: "wakeflow".into(),
            version: VERSION.into(),
            task,
            config_sha256: config_hash.into(),
            seed: cfg.seed,
            workers_requested: workers,
            workers_used: 1,
            files: self.files.clone(),
        };
        self.json("manifest.json", &manifest)
    }
}

#[derive(Serialize)]
struct Manifest {
    tool: String,
    version: String,
    task: Task,
    config_sha256: String,
    seed: u64,
    workers_requested: usize,
    workers_used: usize,
    files: Vec<String>,
}

fn radius_tag(r: f64) -> String {
    format!("R{r}")
}

fn write_trajectory(out: &mut Output, name: &str, sol: &FlowSolution) -> Result<()> {
    let k = sol.eigen().len();
    let mut header: Vec<String> = vec!["node".into(), "time".into()];
    header.extend((0..k).map(|j| format!("c{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(name, &header, |w| {
        for (n, (t, c)) in sol.times().iter().zip(&sol.trajectory.samples).enumerate() {
            let mut row = vec![n.to_string(), format!("{t:e}")];
            row.extend(c.iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

fn write_picard(out: &mut Output, name: &str, report: &PicardReport) -> Result<()> {
    out.csv(
        name,
        &["iteration", "difference", "iterate_norm", "ratio"],
        |w| {
            for (i, (d, n)) in report
                .differences
                .iter()
                .zip(&report.iterate_norms)
                .enumerate()
            {
                let ratio = if i == 0 {
                    String::new()
                } else {
                    format!("{:e}", report.ratios[i - 1])
                };
                w.write_record([
                    (i + 1).to_string(),
                    format!("{d:e}"),
                    format!("{n:e}"),
                    ratio,
                ])?;
            }
            Ok(())
        },
    )
}

/// Per-radius summary written by `eigen`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenSummary {
    pub outer_radius: f64,
    pub modes: usize,
    pub first_eigenvalue: f64,
    pub gram_condition: f64,
    pub validity: BasisValidity,
    pub check: EigenCheck,
}

/// Refined rule for re-integration checks.
fn refined(domain: &ShellDomain) -> ShellDomain {
    ShellDomain {
        radial_order: domain.radial_order + 4,
        angular_degree: domain.angular_degree + 2,
        ..domain.clone()
    }
}

fn eigen_summary(eigen: &StokesEigenSystem) -> EigenSummary {
    let domain = &eigen.basis.domain;
    EigenSummary {
        outer_radius: eigen.outer_radius(),
        modes: eigen.len(),
        first_eigenvalue: eigen.eigenvalues[0],
        gram_condition: eigen.gram_condition,
        validity: eigen.basis.validity(&domain.build_quadrature()),
        check: eigen.check(&refined(domain).build_quadrature()),
    }
}

fn run_eigen(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let mut summaries = Vec::new();
    for r in cfg.radii() {
        let eigen = cached_eigen(r, &cfg.resolution, &out.cache_dir())?;
        out.csv(
            &format!("spectrum_{}.csv", radius_tag(r)),
            &["index", "eigenvalue"],
            |w| {
                for (j, l) in eigen.eigenvalues.iter().enumerate() {
                    w.write_record([j.to_string(), format!("{l:e}")])?;
                }
                Ok(())
            },
        )?;
        summaries.push(eigen_summary(&eigen));
    }
    out.json("eigen.json", &summaries)
}

fn run_linear(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let forcing = cfg.forcing()?;
    let ext = cfg.solver.extension(cfg.seed);
    let mut reports = Vec::new();
    for r in cfg.radii() {
        let eigen = Arc::new(cached_eigen(r, &cfg.resolution, &out.cache_dir())?);
        let run = solve_linear_on(eigen, &cfg.kinematics, &forcing, &cfg.resolution, &ext)?;
        write_trajectory(out, &format!("linear_{}.csv", radius_tag(r)), &run.solution)?;
        reports.push(run.report);
    }
    out.json("linear.json", &reports)
}

fn picard_on(cfg: &RunConfig, r: f64, cache: &Path) -> Result<(FlowSolution, PicardReport)> {
    let eigen = Arc::new(cached_eigen(r, &cfg.resolution, cache)?);
    let setup = prepare(
        eigen,
        &cfg.kinematics,
        &cfg.forcing()?,
        &cfg.resolution,
        &cfg.solver.extension(cfg.seed),
    )?;
    PicardSolver::new(&setup, cfg.solver.picard())?.solve(InitialGuess::Zero)
}

fn run_solve(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let mut reports = Vec::new();
    for r in cfg.radii() {
        let (sol, report) = picard_on(cfg, r, &out.cache_dir())?;
        write_picard(out, &format!("picard_{}.csv", radius_tag(r)), &report)?;
        write_trajectory(out, &format!("solution_{}.csv", radius_tag(r)), &sol)?;
        reports.push(report);
    }
    out.json("solve.json", &reports)
}

fn decay_on(cfg: &RunConfig, r: f64, cache: &Path) -> Result<(DecayReport, PicardReport)> {
    let (sol, report) = picard_on(cfg, r, cache)?;
    let transform = FrameTransform::new(sol.profile(), sol.n_t());
    Ok((decay_profile(&sol, &transform, &cfg.decay)?, report))
}

fn write_decay(out: &mut Output, report: &DecayReport) -> Result<()> {
    out.csv(
        "decay_fits.csv",
        &["node", "time", "direction", "slope", "residual"],
        |w| {
            for s in &report.snapshots {
                for f in &s.fits {
                    let slope = f.slope.map(|v| format!("{v:e}")).unwrap_or_default();
                    w.write_record([
                        s.node.to_string(),
                        format!("{:e}", s.time),
                        f.direction.clone(),
                        slope,
                        format!("{:e}", f.residual),
                    ])?;
                }
            }
            Ok(())
        },
    )?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(out.dir.join("decay_rays.csv"), buf)?;
    out.files.push("decay_rays.csv".into());
    Ok(())
}

fn run_decay(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let r = *cfg.radii().last().expect("validated radii");
    let (report, picard) = decay_on(cfg, r, &out.cache_dir())?;
    write_decay(out, &report)?;
    out.json("decay_picard.json", &picard)?;
    out.json("decay.json", &report)
}

/// One line of the verification summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn at_most(
        name: impl Into<String>,
        value: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }

    fn failed(name: impl Into<String>, err: &Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            threshold: f64::NAN,
            detail: format!("error: {err}"),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} value={:.3e} threshold={:.3e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold,
            self.detail
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
    pub eigen: Vec<EigenSummary>,
    pub estimates: EstimateReport,
    pub linear: Vec<LinearReport>,
    pub contraction: Option<PicardReport>,
    pub decay: Option<DecayReport>,
}

/// `sup_t |c(t) − (λ cos Ωt + Ω sin Ωt)/(λ² + Ω²)|` and the periodicity
/// residual of the shooting solver for `ċ = −λc + cos Ωt`.
pub fn scalar_oracle(lambda: f64, period: f64, steps: usize) -> Result<(f64, f64)> {
    let w = 2.0 * PI / period;
    let ode = DenseOde {
        matrix: DMatrix::from_element(1, 1, -lambda),
        period,
        steps,
        forcing: |t: f64| DVector::from_element(1, (w * t).cos()),
    };
    let traj = solve_periodic(&ode)?;
    let err = traj
        .times()
        .iter()
        .zip(&traj.samples)
        .map(|(t, c)| {
            (c[0] - (lambda * (w * t).cos() + w * (w * t).sin()) / (lambda * lambda + w * w)).abs()
        })
        .fold(0.0, f64::max);
    Ok((err, traj.periodicity_residual))
}

/// Runs the verification suite. Failed checks do not abort the suite.
pub fn verify(cfg: &RunConfig, cache: &Path) -> Result<VerifyReport> {
    let radii = cfg.radii();
    let res = &cfg.resolution;
    let forcing = cfg.forcing()?;
    let ext = cfg.solver.extension(cfg.seed);
    let mut checks = Vec::new();
    let mut eigens = Vec::new();
    let mut summaries = Vec::new();
    for &r in &radii {
        let e = Arc::new(cached_eigen(r, res, cache)?);
        let s = eigen_summary(&e);
        let v = s.validity;
        checks.push(Check::at_most(
            format!("basis_validity_{}", radius_tag(r)),
            v.divergence_residual.max(v.trace_sup),
            1e-10,
            format!(
                "divergence {:.2e}, trace {:.2e}",
                v.divergence_residual, v.trace_sup
            ),
        ));
        checks.push(Check::at_most(
            format!("eigen_orthonormality_{}", radius_tag(r)),
            s.check.orthonormality,
            1e-10,
            "refined quadrature",
        ));
        checks.push(Check::at_most(
            format!("eigen_rayleigh_{}", radius_tag(r)),
            s.check.rayleigh,
            1e-8,
            "relative, refined quadrature",
        ));
        summaries.push(s);
        eigens.push(e);
    }
    if radii.len() > 1 {
        let firsts: Vec<f64> = summaries.iter().map(|s| s.first_eigenvalue).collect();
        let rise = firsts
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most(
            "first_eigenvalue_monotone",
            rise,
            0.0,
            format!("lambda_1 by radius {firsts:?}"),
        ));
    }

    // Assembly structure with the extension switched off.
    let e0 = &eigens[0];
    let quad0 = res.domain(radii[0])?.build_quadrature();
    let (profile0, _) = cfg.kinematics.oriented();
    let zero_ext = Arc::new(ExtensionField::zero(&profile0));
    match assemble(
        e0.clone(),
        zero_ext,
        &profile0,
        &Forcing::none(profile0.period),
        &quad0,
        res.n_t,
    ) {
        Ok(sys) => checks.push(Check::at_most(
            "assembly_skew_structure",
            sys.skew_defect_without_extension(),
            1e-10,
            "max |A + A^T + 2 diag(lambda)| without extension",
        )),
        Err(e) => checks.push(Check::failed("assembly_skew_structure", &e)),
    }
    let (oracle, oracle_gap) = scalar_oracle(e0.eigenvalues[0], cfg.kinematics.period, 256)?;
    checks.push(Check::at_most(
        "periodic_scalar_oracle",
        oracle.max(oracle_gap),
        1e-8,
        format!("sup error {oracle:.2e}, periodicity {oracle_gap:.2e}"),
    ));

    // Rotation identity on random zero-trace fields.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rotation = Vec::new();
    for e in &eigens {
        let lhs = e.basis.domain.build_quadrature();
        let rhs = refined(&e.basis.domain).build_quadrature();
        for &om in &cfg.verify.rotation_omegas {
            for _ in 0..cfg.verify.rotation_samples {
                let modes = rand::Rng::gen_range(&mut rng, 1..=e.len());
                let c = random_combination(e.len(), modes, &mut rng);
                rotation.push(verify_rotation_identity(e, &c, om, &lhs, &rhs)?);
            }
        }
    }
    let worst = rotation.iter().map(|r| r.residual).fold(0.0, f64::max);
    checks.push(Check::at_most(
        "rotation_identity",
        worst,
        1e-6,
        format!("{} fields", rotation.len()),
    ));

    // Energy-estimate ratios.
    let runs: Vec<EnergyRun> = if cfg.verify.energy_runs.is_empty() {
        radii
            .iter()
            .flat_map(|&radius| {
                [1, 2].map(|m| EnergyRun {
                    radius,
                    radial_count: m * res.radial_count,
                })
            })
            .collect()
    } else {
        cfg.verify.energy_runs.clone()
    };
    let mut linear = Vec::new();
    let mut periodicity: f64 = 0.0;
    let mut energy = EnergyRatioReport::default();
    let mut energy_error = None;
    for run in &runs {
        let rres = cfg.resolution_with(run.radial_count);
        let outcome = cached_eigen(run.radius, &rres, cache)
            .and_then(|e| solve_linear_on(Arc::new(e), &cfg.kinematics, &forcing, &rres, &ext));
        match outcome {
            Ok(l) => {
                periodicity = periodicity.max(l.report.metadata.periodicity_residual);
                linear.push(l.report);
            }
            Err(e) => {
                energy_error = Some(e);
                break;
            }
        }
    }
    match energy_error {
        None => {
            energy = measure_energy_ratios(&linear, cfg.verify.energy_tolerance);
            let worst = energy
                .across_modes
                .iter()
                .chain(&energy.across_radii)
                .map(|v| v.largest())
                .fold(0.0, f64::max);
            checks.push(Check::at_most(
                "energy_ratio_uniformity",
                worst,
                cfg.verify.energy_tolerance,
                format!("{} runs", linear.len()),
            ));
        }
        Some(e) => checks.push(Check::failed("energy_ratio_uniformity", &e)),
    }

    // Heywood constants.
    let mut heywood = Vec::new();
    for (i, e) in eigens.iter().enumerate() {
        heywood.push(measure_heywood(
            e,
            cfg.verify.heywood_samples,
            cfg.verify.trace_epsilon,
            cfg.seed.wrapping_add(i as u64),
        )?);
    }
    if heywood.len() > 1 {
        let c: Vec<f64> = heywood.iter().map(|h| h.constant).collect();
        let (lo, hi) = c
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        checks.push(Check::at_most(
            "heywood_constant_ratio",
            hi / lo,
            2.0,
            format!("c0 by radius {c:?}"),
        ));
    }

    // Contraction, zero data and uniqueness on the smallest radius.
    let mut contraction = None;
    let target = cfg.verify.first_iterate_target;
    match scale_to_first_iterate(e0.clone(), &cfg.kinematics, &forcing, res, &ext, target) {
        Ok((data, setup)) => {
            let solver = PicardSolver::new(&setup, cfg.solver.picard())?;
            match solver.uniqueness_probe() {
                Ok(probe) => {
                    let r = &probe.from_zero;
                    checks.push(Check::at_most(
                        "contraction_ratio",
                        r.contraction_ratio,
                        0.5,
                        format!(
                            "scale {:.3e}, first iterate {:.3e}",
                            data.scale, data.first_iterate
                        ),
                    ));
                    checks.push(Check::at_most(
                        "contraction_iterations",
                        r.iterations as f64,
                        15.0,
                        format!("rel_tol {:.1e}", cfg.solver.rel_tol),
                    ));
                    checks.push(Check::at_most(
                        "fixed_point_weak_residual",
                        r.weak_residual,
                        1e-5,
                        "",
                    ));
                    checks.push(Check::at_most(
                        "uniqueness_distance",
                        probe.distance,
                        1e-7,
                        format!("initial distance {:.3e}", probe.start_distance),
                    ));
                    contraction = Some(probe.from_zero);
                }
                Err(e) => checks.push(Check::failed("contraction", &e)),
            }
        }
        Err(e) => checks.push(Check::failed("contraction", &e)),
    }
    let rest = KinematicProfile::at_rest(cfg.kinematics.period);
    let zero_setup = prepare(e0.clone(), &rest, &Forcing::none(rest.period), res, &ext)?;
    match PicardSolver::new(&zero_setup, cfg.solver.picard())?.solve(InitialGuess::Zero) {
        Ok((sol, r)) => {
            let size = sol
                .trajectory
                .samples
                .iter()
                .flatten()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            checks.push(Check {
                name: "zero_data_one_iteration".into(),
                passed: r.iterations == 1 && size == 0.0,
                value: r.iterations as f64,
                threshold: 1.0,
                detail: format!("max coefficient {size:e}"),
            });
        }
        Err(e) => checks.push(Check::failed("zero_data_one_iteration", &e)),
    }
    checks.push(Check::at_most(
        "periodicity_residual",
        periodicity,
        1e-8,
        "linear runs",
    ));

    let mut decay = None;
    if cfg.verify.decay {
        let r = *radii.last().expect("validated radii");
        match decay_on(cfg, r, cache) {
            Ok((d, _)) => {
                checks.push(decay_check(&d));
                decay = Some(d);
            }
            Err(e) => checks.push(Check::failed("wake_decay", &e)),
        }
    }

    Ok(VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
        eigen: summaries,
        estimates: EstimateReport {
            energy,
            heywood,
            rotation,
        },
        linear,
        contraction,
        decay,
    })
}

/// `λ = 0`: every slope within `−1 ± 0.35`. `λ > 0`: `slope(+e₁) − slope(−e₁)
/// ≤ −0.5` at every snapshot.
pub fn decay_check(d: &DecayReport) -> Check {
    if d.lambda == 0.0 {
        let worst = d
            .snapshots
            .iter()
            .flat_map(|s| s.fits.iter())
            .map(|f| f.slope.map_or(f64::INFINITY, |v| (v + 1.0).abs()))
            .fold(0.0, f64::max);
        Check::at_most(
            "wake_decay_isotropic",
            worst,
            0.35,
            "max |slope + 1| over rays and snapshots",
        )
    } else {
        let worst = d
            .snapshots
            .iter()
            .map(|s| s.anisotropy().unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max);
        Check::at_most(
            "wake_decay_anisotropy",
            worst,
            -0.5,
            "max slope(+e1) - slope(-e1)",
        )
    }
}

fn run_verify(cfg: &RunConfig, out: &mut Output) -> Result<bool> {
    let report = verify(cfg, &out.cache_dir())?;
    for c in &report.checks {
        println!("{}", c.line());
    }
    out.csv(
        "verify.csv",
        &["name", "passed", "value", "threshold", "detail"],
        |w| {
            for c in &report.checks {
                w.write_record([
                    c.name.clone(),
                    c.passed.to_string(),
                    format!("{:e}", c.value),
                    format!("{:e}", c.threshold),
                    c.detail.clone(),
                ])?;
            }
            Ok(())
        },
    )?;
    out.json("verify.json", &report)?;
    Ok(report.passed)
}

/// Runs one task; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("verification failed");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `Ok(false)` when `verify` completed with failed checks.
pub fn execute(cli: &Cli) -> Result<bool> {
    if cli.workers == 0 {
        return Err(Error::InvalidConfig("--workers must be at least 1".into()));
    }
    let bytes = fs::read(&cli.config)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", cli.config.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::InvalidConfig(format!("{} is not UTF-8", cli.config.display())))?;
    let cfg = RunConfig::from_toml(&text).map_err(|e| match e {
        Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", cli.config.display())),
        other => other,
    })?;
    let mut out = Output::new(&cli.out)?;
    out.json("config.json", &cfg)?;
    let ok = match cli.task {
        Task::Eigen => run_eigen(&cfg, &mut out).map(|_| true),
        Task::Linear => run_linear(&cfg, &mut out).map(|_| true),
        Task::Solve => run_solve(&cfg, &mut out).map(|_| true),
        Task::Decay => run_decay(&cfg, &mut out).map(|_| true),
        Task::Verify => run_verify(&cfg, &mut out),
    }?;
    out.finish(cli.task, &sha256_hex(&bytes), &cfg, cli.workers)?;
    Ok(ok)
}
