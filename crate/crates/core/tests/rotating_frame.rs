use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wakeflow::geometry::ShellDomain;
use wakeflow::periodic_linear::KinematicProfile;
use wakeflow::rotating_frame::{rotation_matrix, Direction, FrameTransform};

fn profile() -> KinematicProfile {
    KinematicProfile::new(2.0, 0.5, vec![0.2], vec![0.1], 1.3).unwrap()
}

fn random_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ]
        })
        .collect()
}

#[test]
fn rotation_is_orthogonal_and_fixes_the_axis() {
    for t in [0.0, 0.3, 1.7] {
        let q = rotation_matrix(t, 1.3);
        let qt = rotation_matrix(-t, 1.3);
        for i in 0..3 {
            for j in 0..3 {
                let p: f64 = (0..3).map(|k| q[i][k] * qt[k][j]).sum();
                assert!((p - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
                assert!((q[i][j] - qt[j][i]).abs() < 1e-15);
            }
        }
        assert_eq!(q[0], [1.0, 0.0, 0.0]);
    }
}

#[test]
fn forward_and_inverse_maps_are_inverse() {
    let f = FrameTransform::new(&profile(), 16);
    for (i, x) in random_points(50, 1).iter().enumerate() {
        let t = 0.037 * i as f64;
        let y = f.map_point(x, t, Direction::Forward);
        let back = f.map_point(&y, t, Direction::Inverse);
        for k in 0..3 {
            assert!((back[k] - x[k]).abs() < 1e-13);
        }
        // |x| − M ≤ |y| ≤ |x| + M
        let (rx, ry) = (
            x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        );
        assert!((rx - ry).abs() <= f.drift_bound + 1e-12);
    }
}

#[test]
fn field_transform_roundtrip_recovers_the_field() {
    let f = FrameTransform::new(&profile(), 16);
    // w(x) = (x₂, x₃², 1 + x₁)
    let w = |x: &[f64; 3]| Some([x[1], x[2] * x[2], 1.0 + x[0]]);
    let t = 0.8;
    let xs = random_points(30, 2);
    let ys: Vec<_> = xs
        .iter()
        .map(|x| f.map_point(x, t, Direction::Forward))
        .collect();
    let v = f.transform_field(w, &ys, t, Direction::Forward);
    let lookup = |y: &[f64; 3]| {
        v.iter()
            .find(|s| s.point.iter().zip(y).all(|(a, b)| (a - b).abs() < 1e-12))
            .and_then(|s| s.value)
    };
    let back = f.transform_field(lookup, &xs, t, Direction::Inverse);
    for (s, x) in back.iter().zip(&xs) {
        let got = s.value.expect("source sample present");
        let want = w(x).unwrap();
        for k in 0..3 {
            assert!((got[k] - want[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn samples_outside_the_domain_are_flagged() {
    let f = FrameTransform::new(&profile(), 8);
    let inside = |x: &[f64; 3]| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        (r <= 2.0).then_some([1.0, 0.0, 0.0])
    };
    let s = f.transform_field(inside, &[[10.0, 0.0, 0.0]], 0.5, Direction::Forward);
    assert!(s[0].value.is_none());
}

#[test]
fn drift_is_periodic_and_bounded() {
    let p = profile();
    let f = FrameTransform::new(&p, 32);
    assert!(f.periodicity_residual < 1e-12);
    // x₀(t) = ∫ ξ − λ: amplitude of 0.2 cos + 0.1 sin integrated
    let w = 2.0 * PI / p.period;
    let exact_bound = 2.0 * (0.2f64.hypot(0.1)) / w;
    assert!(f.drift_bound <= exact_bound * (1.0 + 1e-9));
    assert!(f.drift_bound >= 0.5 * exact_bound);
}

#[test]
fn weight_comparison_respects_the_bound() {
    let f = FrameTransform::new(&profile(), 16);
    let domain = ShellDomain::new(3.0, 6, 6).unwrap();
    let c = f.weight_comparison(&domain);
    assert!(c.measured >= 1.0 - 1e-12);
    assert!(c.measured <= c.bound, "{c:?}");
    assert!(c.radius_violation < 1e-12);
}
