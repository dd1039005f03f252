use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wakeflow::fields::bogovskii::{solve_divergence, DivergenceOptions};
use wakeflow::fields::extension::{build_extension, ExtensionField, ExtensionOptions};
use wakeflow::fields::{Family, Mode, SolenoidalBasis};
use wakeflow::geometry::ShellDomain;
use wakeflow::periodic_linear::KinematicProfile;
use wakeflow::Error;

fn random_point(rng: &mut ChaCha8Rng, r_in: f64, r_out: f64) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            let r = if r_out > r_in {
                rng.gen_range(r_in..r_out)
            } else {
                r_in
            };
            return [v[0] * r / n, v[1] * r / n, v[2] * r / n];
        }
    }
}

fn small_basis() -> SolenoidalBasis {
    let domain = ShellDomain::new(2.0, 12, 8).unwrap();
    SolenoidalBasis::build(&domain, 2, 3).unwrap()
}

#[test]
fn basis_has_expected_mode_count_and_is_valid() {
    let basis = small_basis();
    assert_eq!(basis.len(), 2 * 3 * 2 * (2 + 2));
    let quad = basis.domain.build_quadrature();
    let v = basis.validity(&quad);
    assert!(v.divergence_residual < 1e-10, "{v:?}");
    assert!(v.trace_sup < 1e-10, "{v:?}");
    let idx = basis
        .mode_index(&Mode {
            family: Family::Poloidal,
            l: 2,
            m: -1,
            n: 2,
        })
        .unwrap();
    assert_eq!(basis.modes[idx].l, 2);
}

#[test]
fn gram_and_stiffness_are_symmetric_positive() {
    let basis = small_basis();
    let k = basis.len();
    let asym = (&basis.gram - basis.gram.transpose()).amax();
    assert!(asym < 1e-12);
    for i in 0..k {
        assert!(
            (basis.gram[(i, i)] - 1.0).abs() < 1e-12,
            "modes are normalized"
        );
        assert!(basis.stiffness[(i, i)] > 0.0);
    }
    assert!(basis.gram.clone().cholesky().is_some());
}

#[test]
fn coarse_angular_rule_is_rejected() {
    let domain = ShellDomain::new(2.0, 12, 5).unwrap();
    match SolenoidalBasis::build(&domain, 2, 3) {
        Err(Error::QuadratureTooCoarse { required, .. }) => assert_eq!(required, 8),
        other => panic!("expected QuadratureTooCoarse, got {other:?}"),
    }
}

#[test]
fn stored_parts_must_match_the_mode_list() {
    let basis = small_basis();
    let k = basis.len();
    let ok = SolenoidalBasis::from_parts(
        &basis.domain,
        2,
        3,
        basis.scales().to_vec(),
        basis.gram.clone(),
        basis.stiffness.clone(),
    )
    .unwrap();
    let x = [1.3, -0.4, 0.7];
    let c: Vec<f64> = (0..k).map(|i| (i as f64 * 0.37).sin()).collect();
    assert_eq!(
        ok.eval_combination(&c, &x).u,
        basis.eval_combination(&c, &x).u
    );
    let bad = SolenoidalBasis::from_parts(
        &basis.domain,
        2,
        3,
        vec![1.0; k - 1],
        DMatrix::zeros(k, k),
        DMatrix::zeros(k, k),
    );
    assert!(matches!(bad, Err(Error::FrameMismatch(_))));
}

#[test]
fn combinations_are_pointwise_divergence_free() {
    let basis = small_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..50 {
        let x = random_point(&mut rng, 1.0, 2.0);
        let j = basis.eval_combination(&c, &x);
        let scale = j.grad.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(j.divergence().abs() <= 1e-11 * scale.max(1.0));
    }
}

#[test]
fn divergence_solver_reproduces_compatible_data() {
    let shell = ShellDomain::new(2.0, 16, 12).unwrap();
    // f = (r−1)²(2−r)² x₂/r has zero mean
    let f = |x: &[f64; 3]| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        (r - 1.0).powi(2) * (2.0 - r).powi(2) * x[1] / r
    };
    let z = solve_divergence(f, &shell, &DivergenceOptions::default()).unwrap();
    assert!(
        z.relative_residual < 1e-6,
        "residual {}",
        z.relative_residual
    );
    // flat trace on both spheres
    for x in [[1.0, 0.0, 0.0], [0.0, 0.0, -2.0], [0.6, 0.8, 0.0]] {
        let u = z.value(&x);
        assert!(u.iter().all(|c| c.abs() < 1e-12), "{u:?} at {x:?}");
    }
}

#[test]
fn divergence_solver_rejects_nonzero_mean() {
    let shell = ShellDomain::new(2.0, 16, 12).unwrap();
    let r = solve_divergence(|_| 1.0, &shell, &DivergenceOptions::default());
    assert!(matches!(r, Err(Error::IncompatibleMean { .. })), "{r:?}");
}

#[test]
fn extension_matches_rigid_motion_on_the_body() {
    let profile = KinematicProfile::new(2.0, 0.3, vec![0.1], vec![0.2], 0.7).unwrap();
    let ext = ExtensionField::with_width(&profile, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for step in 0..8 {
        let t = 0.25 * step as f64;
        let xi = profile.xi(t);
        for _ in 0..20 {
            let x = random_point(&mut rng, 1.0, 1.0);
            let u = ext.jet(&x, t).u;
            let rigid = [xi, -0.7 * x[2], 0.7 * x[1]];
            for i in 0..3 {
                assert!(
                    (u[i] - rigid[i]).abs() < 1e-10,
                    "t={t} x={x:?}: {u:?} vs {rigid:?}"
                );
            }
            let y = random_point(&mut rng, 1.5, 2.0);
            assert_eq!(ext.jet(&y, t).u, [0.0; 3]);
        }
    }
}

#[test]
fn extension_is_nearly_solenoidal() {
    let profile = KinematicProfile::new(1.0, 0.5, vec![], vec![0.2], 1.0).unwrap();
    let ext = ExtensionField::with_width(&profile, 0.4).unwrap();
    assert!(
        ext.correction_residual < 1e-6,
        "{}",
        ext.correction_residual
    );
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut grad = 0.0f64;
    for _ in 0..200 {
        let x = random_point(&mut rng, 1.0, 1.4);
        let j = ext.jet(&x, 0.3);
        worst = worst.max(j.divergence().abs());
        grad = grad.max(j.grad.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs())));
    }
    assert!(worst < 1e-5 * grad, "div {worst} vs grad {grad}");
}

#[test]
fn tuned_extension_meets_the_leray_hopf_bound() {
    let basis = small_basis();
    let profile = KinematicProfile::new(1.0, 0.5, vec![], vec![0.2], 1.0).unwrap();
    let opts = ExtensionOptions::default();
    let ext = build_extension(&profile, &basis, &opts).unwrap();
    assert!(ext.leray_hopf_bound <= opts.epsilon);
    assert!(ext.sampled_ratio <= ext.leray_hopf_bound * (1.0 + 1e-9));
    assert!(ext.support_radius <= 1.5);
    let rest = build_extension(&KinematicProfile::at_rest(1.0), &basis, &opts).unwrap();
    assert!(rest.is_zero());
    let bad = ExtensionOptions {
        epsilon: 0.0,
        ..opts
    };
    assert!(build_extension(&profile, &basis, &bad).is_err());
}
