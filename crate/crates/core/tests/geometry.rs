use std::f64::consts::PI;

use proptest::prelude::*;

use wakeflow::geometry::{
    axis_ray_points, gauss_legendre, wake_coordinate, weighted_sup_norm, AngularRule, ShellDomain,
    WakeWeight,
};

#[test]
fn gauss_legendre_integrates_polynomials_exactly() {
    for n in 1..=24 {
        let (x, w) = gauss_legendre(n);
        for p in 0..(2 * n) {
            let q: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * xi.powi(p as i32))
                .sum();
            let exact = if p % 2 == 1 {
                0.0
            } else {
                2.0 / (p as f64 + 1.0)
            };
            assert!((q - exact).abs() < 1e-13, "n={n} p={p}: {q} vs {exact}");
        }
    }
}

#[test]
fn angular_rule_integrates_harmonic_products() {
    let rule = AngularRule::gauss_product(8);
    assert!((rule.integrate(|_| 1.0) - 4.0 * PI).abs() < 1e-13);
    // ∫ x² = 4π/3, ∫ x²y²z² = 4π/105, ∫ x⁴ = 4π/5
    assert!((rule.integrate(|d| d[0] * d[0]) - 4.0 * PI / 3.0).abs() < 1e-13);
    assert!((rule.integrate(|d| (d[0] * d[1] * d[2]).powi(2)) - 4.0 * PI / 105.0).abs() < 1e-13);
    assert!((rule.integrate(|d| d[2].powi(4)) - 4.0 * PI / 5.0).abs() < 1e-13);
    assert!(rule.integrate(|d| d[0] * d[1].powi(3)).abs() < 1e-13);
}

#[test]
fn shell_quadrature_reproduces_measure_and_moments() {
    let shell = ShellDomain::new(3.0, 10, 6)
        .unwrap()
        .with_breakpoints(vec![1.5, 2.0]);
    let quad = shell.build_quadrature();
    assert!((quad.total_measure() - shell.measure()).abs() < 1e-11 * shell.measure());
    // ∫ |x|² over 1<r<3 = 4π (3⁵ − 1)/5
    let m2 = quad.integrate(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    assert!((m2 - 4.0 * PI * 242.0 / 5.0).abs() < 1e-10 * m2);
    assert!(quad.points.iter().all(|p| shell.contains(p)));
}

#[test]
fn invalid_shells_are_rejected() {
    assert!(ShellDomain::new(1.0, 8, 4).is_err());
    assert!(ShellDomain::new(0.5, 8, 4).is_err());
    assert!(ShellDomain::new(2.0, 2, 4).is_err());
    assert!(ShellDomain::between(0.0, 2.0, 8, 4).is_err());
}

#[test]
fn breakpoints_outside_the_shell_are_dropped() {
    let shell = ShellDomain::new(2.0, 6, 4)
        .unwrap()
        .with_breakpoints(vec![3.0, 1.5, 0.5, 1.5, 1.0]);
    assert_eq!(shell.breakpoints, vec![1.5]);
}

#[test]
fn wake_coordinate_vanishes_on_the_wake_axis_only() {
    assert_eq!(wake_coordinate(&[-5.0, 0.0, 0.0]), 0.0);
    assert!((wake_coordinate(&[5.0, 0.0, 0.0]) - 10.0).abs() < 1e-14);
    assert!((wake_coordinate(&[0.0, 3.0, 4.0]) - 5.0).abs() < 1e-14);
}

#[test]
fn wake_weight_validates_parameters() {
    assert!(WakeWeight::new(-0.1, 1).is_err());
    assert!(WakeWeight::new(f64::NAN, 1).is_err());
    assert!(WakeWeight::new(0.5, 0).is_err());
    let w = WakeWeight::new(0.5, 2).unwrap();
    // (1+2)(1+2·0.5·4) at x = 2e₁, squared
    assert!((w.weight(&[2.0, 0.0, 0.0]) - 225.0).abs() < 1e-12);
}

#[test]
fn weighted_sup_norm_on_rays() {
    let pts = axis_ray_points(&[1.0, 2.0]);
    assert_eq!(pts.len(), 8);
    let vals: Vec<_> = pts.iter().map(|_| [0.0, 0.0, 1.0]).collect();
    let w = WakeWeight::new(0.0, 1).unwrap();
    assert!((weighted_sup_norm(&pts, &vals, &w).unwrap() - 3.0).abs() < 1e-14);
    assert!(weighted_sup_norm(&[], &[], &w).is_err());
    assert!(weighted_sup_norm(&pts, &vals[..3], &w).is_err());
}

proptest! {
    #[test]
    fn wake_coordinate_is_between_zero_and_twice_the_radius(x in -50.0..50.0f64, y in -50.0..50.0f64, z in -50.0..50.0f64) {
        let p = [x, y, z];
        let r = (x * x + y * y + z * z).sqrt();
        let s = wake_coordinate(&p);
        prop_assert!(s >= 0.0);
        prop_assert!(s <= 2.0 * r * (1.0 + 1e-14));
    }

    #[test]
    fn wake_weight_is_monotone_in_lambda(x in -20.0..20.0f64, y in -20.0..20.0f64, l in 0.0..2.0f64, d in 0.0..2.0f64) {
        let p = [x, y, 0.0];
        let a = WakeWeight::new(l, 1).unwrap().weight(&p);
        let b = WakeWeight::new(l + d, 1).unwrap().weight(&p);
        prop_assert!(b >= a);
        prop_assert!(a >= 1.0);
    }

    #[test]
    fn gauss_weights_are_positive_and_sum_to_two(n in 1usize..40) {
        let (x, w) = gauss_legendre(n);
        prop_assert!(w.iter().all(|&v| v > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        prop_assert!(x.windows(2).all(|p| p[0] < p[1]));
    }
}
