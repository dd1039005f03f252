use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};

use wakeflow::fields::extension::ExtensionOptions;
use wakeflow::periodic_linear::pipeline::solve_linear_on;
use wakeflow::periodic_linear::shooting::DenseOde;
use wakeflow::periodic_linear::{
    eigen_system, prepare, solve_periodic, Forcing, ForcingShape, KinematicProfile, Resolution,
};
use wakeflow::Error;

#[test]
fn damped_rotation_matches_frequency_response() {
    // ċ = M c + f cos(Ωt); periodic answer Re((iΩ − M)⁻¹ f e^{iΩt}).
    let (a, b, period) = (0.7, 2.0, 3.0);
    let w = 2.0 * PI / period;
    let m = DMatrix::from_row_slice(2, 2, &[-a, b, -b, -a]);
    let f = DVector::from_vec(vec![1.0, -0.5]);
    let ode = DenseOde {
        matrix: m.clone(),
        period,
        steps: 256,
        forcing: |t: f64| &f * (w * t).cos(),
    };
    let traj = solve_periodic(&ode).unwrap();
    let mut shifted = DMatrix::<Complex<f64>>::from_fn(2, 2, |i, j| Complex::new(-m[(i, j)], 0.0));
    for i in 0..2 {
        shifted[(i, i)] += Complex::new(0.0, w);
    }
    let fc = f.map(|v| Complex::new(v, 0.0));
    let amp = shifted.lu().solve(&fc).unwrap();
    for (t, c) in traj.times().iter().zip(&traj.samples) {
        let e = Complex::new(0.0, w * t).exp();
        for i in 0..2 {
            assert!((c[i] - (amp[i] * e).re).abs() < 1e-8, "t={t}");
        }
    }
    assert!(traj.periodicity_residual < 1e-10);
}

#[test]
fn neutral_constant_forcing_is_resonant() {
    let ode = DenseOde {
        matrix: DMatrix::zeros(1, 1),
        period: 1.0,
        steps: 16,
        forcing: |_t: f64| DVector::from_element(1, 1.0),
    };
    assert!(matches!(
        solve_periodic(&ode),
        Err(Error::FloquetResonance { .. })
    ));
}

#[test]
fn profile_validation_scaling_and_orientation() {
    assert!(KinematicProfile::new(0.0, 0.1, vec![], vec![], 0.0).is_err());
    let p = KinematicProfile::new(2.0, -0.2, vec![0.1], vec![0.3], 0.8).unwrap();
    assert!(p.xi_changes_sign());
    let (q, flipped) = p.oriented();
    assert!(flipped);
    assert_eq!(q.lambda(), 0.2);
    assert_eq!(q.omega, -0.8);
    for i in 0..10 {
        let t = 0.2 * i as f64;
        assert!((q.xi(t) + p.xi(t)).abs() < 1e-15);
    }
    let s = p.scaled(0.5);
    assert_eq!(s.period, p.period);
    assert!((s.xi(0.3) - 0.5 * p.xi(0.3)).abs() < 1e-15);
    assert_eq!(s.omega, 0.4);
    // Parseval: ‖sin‖² over a period is T/2 times (1 + Ω² + Ω⁴)
    let w = 2.0 * PI / 2.0;
    let sine = KinematicProfile::new(2.0, 0.0, vec![], vec![1.0], 0.0).unwrap();
    assert!((sine.sobolev_norm() - (1.0 + w * w + w.powi(4)).sqrt()).abs() < 1e-12);
}

#[test]
fn forcing_presets_parse_and_respect_support() {
    assert_eq!(
        "dipole".parse::<ForcingShape>().unwrap(),
        ForcingShape::Dipole
    );
    assert!(matches!(
        "vortex".parse::<ForcingShape>(),
        Err(Error::InvalidConfig(_))
    ));
    let f = Forcing::new(ForcingShape::Swirl, [1.0, 0.5, 0.0], 1.0, 1.5, 0.4).unwrap();
    let (lo, hi) = f.support();
    assert!(lo >= 1.0 && hi > lo);
    assert_eq!(f.body(&[0.0, 0.0, hi + 0.1], 0.2), [0.0; 3]);
    assert_eq!(f.scaled(0.0).body(&[0.0, 1.5, 0.0], 0.2), [0.0; 3]);
    assert!(Forcing::none(1.0).is_zero());
}

#[test]
fn resolution_limits_are_enforced() {
    assert!(Resolution::new(1, 4, 16).validate().is_ok());
    assert!(Resolution::new(0, 4, 16).validate().is_err());
    assert!(Resolution::new(1, 4, 15).validate().is_err());
    assert!(Resolution::new(1, 4, 2).validate().is_err());
    let mut r = Resolution::new(2, 4, 16);
    r.angular_degree = Some(5);
    assert!(matches!(
        r.validate(),
        Err(Error::QuadratureTooCoarse { .. })
    ));
    assert_eq!(Resolution::new(3, 4, 8).modes(), 2 * 4 * 3 * 5);
}

#[test]
fn body_at_rest_without_forcing_gives_zero_flow() {
    let res = Resolution::new(1, 3, 8);
    let eig = Arc::new(eigen_system(2.0, &res).unwrap());
    let profile = KinematicProfile::at_rest(1.0);
    let run = solve_linear_on(
        eig,
        &profile,
        &Forcing::none(1.0),
        &res,
        &ExtensionOptions::default(),
    )
    .unwrap();
    assert!(run.solution.trajectory.max_norm() == 0.0);
    assert_eq!(run.report.velocity.basic(), 0.0);
}

#[test]
fn oscillating_body_solution_is_periodic_and_meets_boundary_data() {
    let res = Resolution::new(1, 4, 32);
    let eig = Arc::new(eigen_system(2.0, &res).unwrap());
    let profile = KinematicProfile::new(1.0, 0.2, vec![], vec![0.1], 0.3).unwrap();
    let run = solve_linear_on(
        eig.clone(),
        &profile,
        &Forcing::none(1.0),
        &res,
        &ExtensionOptions::default(),
    )
    .unwrap();
    let rep = &run.report;
    assert!(
        rep.metadata.periodicity_residual < 1e-8,
        "{}",
        rep.metadata.periodicity_residual
    );
    assert!(rep.boundary_residual < 1e-10, "{}", rep.boundary_residual);
    assert!(rep.metadata.leray_hopf_bound <= 0.25);
    assert!(rep.estimates.basic_ratio > 0.0 && rep.estimates.basic_ratio.is_finite());
    assert!(rep.velocity.basic() > 0.0);
    // The solution at t and t + T coincide.
    let x = [0.0, 1.4, 0.2];
    let a = run.solution.jet_at(&x, 0.3).u;
    let b = run.solution.jet_at(&x, 1.3).u;
    for i in 0..3 {
        assert!((a[i] - b[i]).abs() < 1e-12);
    }
}

#[test]
fn forcing_beyond_the_truncation_radius_is_rejected() {
    let res = Resolution::new(1, 3, 8);
    let eig = Arc::new(eigen_system(2.0, &res).unwrap());
    let profile = KinematicProfile::at_rest(1.0);
    let f = Forcing::new(ForcingShape::Dipole, [1.0, 0.0, 0.0], 1.0, 1.9, 0.5).unwrap();
    let r = prepare(eig, &profile, &f, &res, &ExtensionOptions::default());
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}
