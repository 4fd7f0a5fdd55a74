use proptest::prelude::*;
use stripeloc::geometry::{aoa, mirror_ue, paths_for, reflection_point, reflection_point_along_ray, rot_z};
use stripeloc::{Stripe, Vec3, Wall};

fn unit(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

fn point() -> impl Strategy<Value = Vec3> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn wall() -> impl Strategy<Value = Wall> {
    (point(), 0.0..std::f64::consts::PI, -3.2..3.2f64)
        .prop_map(|(p, t, f)| Wall::new(p, unit(t, f), 0).unwrap())
}

/// Wall plus two points on its positive side, each at least 0.1 m away.
fn reflecting_setup() -> impl Strategy<Value = (Wall, Vec3, Vec3)> {
    (wall(), point(), point(), 0.1..4.0f64, 0.1..4.0f64).prop_map(|(w, a, b, da, db)| {
        let onto = |x: Vec3, d: f64| x - w.normal * w.signed_distance(&x) + w.normal * d;
        (w.clone(), onto(a, da), onto(b, db))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mirror_is_involution(w in wall(), p in point()) {
        let back = mirror_ue(&mirror_ue(&p, &w), &w);
        prop_assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn reflection_obeys_specular_law((w, p_rs, p) in reflecting_setup()) {
        let rp = reflection_point(&p_rs, &p, &w).unwrap();
        prop_assert!(w.signed_distance(&rp).abs() < 1e-9);
        let u_in = (p - rp).normalize();
        let u_out = (p_rs - rp).normalize();
        let (a_in, a_out) = (u_in.dot(&w.normal).acos(), u_out.dot(&w.normal).acos());
        prop_assert!((a_in - a_out).abs() < 1e-9, "{a_in} vs {a_out}");
        let s = u_in + u_out;
        prop_assert!((s - w.normal * s.dot(&w.normal)).norm() < 1e-9);
    }

    #[test]
    fn both_reflection_forms_agree((w, p_rs, p) in reflecting_setup()) {
        let a = reflection_point(&p_rs, &p, &w).unwrap();
        let b = reflection_point_along_ray(&p_rs, &p, &w).unwrap();
        prop_assert!((a - b).norm() < 1e-12, "{}", (a - b).norm());
    }

    #[test]
    fn aoa_invariant_under_joint_rotation(
        c in point(), t in point(), az in -3.2..3.2f64, beta in -3.2..3.2f64,
    ) {
        prop_assume!(((t - c).xy()).norm() > 1e-3);
        let st = Stripe::new(c, az, 4, 0.04, None).unwrap();
        let r = rot_z(beta);
        let rotated = Stripe::new(r * c, az + beta, 4, 0.04, None).unwrap();
        let (a, b) = (aoa(&t, &st).unwrap(), aoa(&(r * t), &rotated).unwrap());
        let d = (a - b).abs();
        prop_assert!(d.min(std::f64::consts::TAU - d) < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn los_has_minimum_delay(
        x in 0.6..5.4f64, y in 0.5..5.2f64, z in 0.1..2.6f64, dtau in 0.0..1e-7f64,
        sx in 0.6..5.4f64, sy in 0.5..5.2f64, sz in 0.1..2.6f64,
    ) {
        let walls = [
            Wall::new(Vec3::new(0.53, 0.37, 0.0), Vec3::new(0.0, 1.0, 0.0), 0).unwrap(),
            Wall::new(Vec3::new(5.53, 0.37, 0.0), Vec3::new(-1.0, 0.0, 0.0), 0).unwrap(),
            Wall::new(Vec3::new(0.53, 0.37, 0.0), Vec3::new(0.0, 0.0, 1.0), 0).unwrap(),
        ];
        let st = Stripe::new(Vec3::new(2.53, 0.37, 2.75), 0.0, 8, 0.04, Some(0)).unwrap();
        let p = Vec3::new(x, y, z);
        let paths = paths_for(&p, &st, &walls, &[Vec3::new(sx, sy, sz)], dtau).unwrap();
        prop_assert_eq!(paths.len(), 4);
        prop_assert_eq!(paths[0].via_point, p);
        for path in &paths {
            prop_assert!(path.delay >= paths[0].delay);
            prop_assert!((path.pseudo_delay - path.delay - dtau).abs() < 1e-20);
        }
    }
}
