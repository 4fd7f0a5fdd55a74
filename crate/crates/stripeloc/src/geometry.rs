//! Deterministic scene geometry: rotations, mirror images, reflection points,
//! angles of arrival and propagation delays.
//!
//! All positions are in metres in a right-handed global frame with `z` up.
//! A stripe's local frame is the global frame rotated by its azimuth about
//! `z`; the array axis is local `+x` and the boresight is local `+y`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::scenario::Scenario;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const NORMAL_TOL: f64 = 1e-12;
const PARALLEL_TOL: f64 = 1e-12;

/// An infinite planar reflector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub point_on_wall: Vec3,
    pub normal: Vec3,
    pub material_id: usize,
}

impl Wall {
    pub fn new(point_on_wall: Vec3, normal: Vec3, material_id: usize) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > NORMAL_TOL {
            return Err(Error::SemanticError(format!(
                "wall normal must have unit length, got {}",
                normal.norm()
            )));
        }
        Ok(Self {
            point_on_wall,
            normal,
            material_id,
        })
    }

    /// Signed distance of `x` from the plane, positive on the normal side.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        (x - self.point_on_wall).dot(&self.normal)
    }

    /// Householder reflection `I - 2 n nᵀ`.
    pub fn householder(&self) -> Mat3 {
        Mat3::identity() - 2.0 * self.normal * self.normal.transpose()
    }
}

/// A uniform linear array segment with known phase centre and azimuth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stripe {
    pub phase_center: Vec3,
    /// Rotation about `z`, counter-clockwise from the global `x` axis.
    pub azimuth: f64,
    pub num_antennas: usize,
    pub spacing: f64,
    /// Index of the wall the stripe is mounted on; that wall yields no reflection.
    pub mounted_wall: Option<usize>,
}

impl Stripe {
    pub fn new(
        phase_center: Vec3,
        azimuth: f64,
        num_antennas: usize,
        spacing: f64,
        mounted_wall: Option<usize>,
    ) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::SemanticError("stripe needs at least one antenna".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::SemanticError("antenna spacing must be positive".into()));
        }
        Ok(Self {
            phase_center,
            azimuth,
            num_antennas,
            spacing,
            mounted_wall,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    Los,
    /// Specular reflection off the wall with this index.
    Rp(usize),
    /// Scattering off the scatterer with this index.
    Sp(usize),
}

impl PathKind {
    pub fn is_specular(&self) -> bool {
        matches!(self, PathKind::Los | PathKind::Rp(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGeometry {
    pub kind: PathKind,
    pub via_point: Vec3,
    pub aoa: f64,
    pub delay: f64,
    pub pseudo_delay: f64,
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Counter-clockwise rotation about `z`.
pub fn rot_z(beta: f64) -> Mat3 {
    let (s, c) = beta.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Derivative of [`rot_z`] at zero.
pub fn d_rot_z_at_zero() -> Mat3 {
    Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
}

/// Mirror image of `p` across the wall plane.
pub fn mirror_ue(p: &Vec3, wall: &Wall) -> Vec3 {
    p - 2.0 * wall.normal * wall.signed_distance(p)
}

fn check_same_side(p_rs: &Vec3, p: &Vec3, wall: &Wall) -> Result<()> {
    let a = wall.signed_distance(p_rs);
    let b = wall.signed_distance(p);
    if a * b <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "UE and stripe are not strictly on the same side of the wall".into(),
        ));
    }
    Ok(())
}

/// Specular reflection point on `wall` for the path `p -> wall -> p_rs`,
/// found by intersecting the segment from `p_rs` to the mirror UE with the plane.
pub fn reflection_point(p_rs: &Vec3, p: &Vec3, wall: &Wall) -> Result<Vec3> {
    check_same_side(p_rs, p, wall)?;
    let pm = mirror_ue(p, wall);
    let denom = (pm - p_rs).dot(&wall.normal);
    if denom.abs() < PARALLEL_TOL {
        return Err(Error::DegenerateGeometry("ray parallel to wall".into()));
    }
    let t = (wall.point_on_wall - p_rs).dot(&wall.normal) / denom;
    Ok(p_rs + t * (pm - p_rs))
}

/// Same point as [`reflection_point`], written as a walk from the stripe along
/// the unit direction towards the mirror UE.
pub fn reflection_point_along_ray(p_rs: &Vec3, p: &Vec3, wall: &Wall) -> Result<Vec3> {
    check_same_side(p_rs, p, wall)?;
    let pm = mirror_ue(p, wall);
    let r = pm - p_rs;
    let range = r.norm();
    if range == 0.0 {
        return Err(Error::DegenerateGeometry("mirror UE at stripe".into()));
    }
    let e = r / range;
    let cos_i = e.dot(&wall.normal);
    if cos_i.abs() < PARALLEL_TOL {
        return Err(Error::DegenerateGeometry("ray parallel to wall".into()));
    }
    let d_r = (wall.point_on_wall - p_rs).dot(&wall.normal) / cos_i;
    Ok(p_rs + d_r * e)
}

/// Angle of arrival of `target` in the stripe's local frame, in `(-π, π]`.
/// Zero is boresight (local `+y`), `π/2` is endfire (local `+x`).
pub fn aoa(target: &Vec3, stripe: &Stripe) -> Result<f64> {
    let r = target - stripe.phase_center;
    let local = rot_z(stripe.azimuth).transpose() * r;
    if local.x == 0.0 && local.y == 0.0 {
        return Err(Error::DegenerateGeometry(
            "target lies on the stripe's vertical axis".into(),
        ));
    }
    Ok(wrap_angle(
        std::f64::consts::FRAC_PI_2 - local.y.atan2(local.x),
    ))
}

/// Two-leg propagation delay `p -> via -> p_rs`.
pub fn path_delay(p: &Vec3, via: &Vec3, p_rs: &Vec3) -> f64 {
    ((p - via).norm() + (via - p_rs).norm()) / SPEED_OF_LIGHT
}

/// Paths from a UE at `p` to `stripe`, in the order LoS, reflections by wall
/// index (skipping the mounting wall), scatterers by index.
pub fn paths_for(
    p: &Vec3,
    stripe: &Stripe,
    walls: &[Wall],
    sp_positions: &[Vec3],
    delta_tau: f64,
) -> Result<Vec<PathGeometry>> {
    let p_rs = stripe.phase_center;
    let mut out = Vec::with_capacity(1 + walls.len() + sp_positions.len());
    let los_delay = path_delay(p, p, &p_rs);
    if los_delay == 0.0 {
        return Err(Error::DegenerateGeometry("UE at stripe phase centre".into()));
    }
    out.push(PathGeometry {
        kind: PathKind::Los,
        via_point: *p,
        aoa: aoa(p, stripe)?,
        delay: los_delay,
        pseudo_delay: los_delay + delta_tau,
    });
    for (l, wall) in walls.iter().enumerate() {
        if stripe.mounted_wall == Some(l) {
            continue;
        }
        let rp = reflection_point(&p_rs, p, wall)?;
        let delay = path_delay(p, &rp, &p_rs);
        // The RP lies on the ray towards the mirror image, so both share the AoA.
        let angle = aoa(&mirror_ue(p, wall), stripe)?;
        out.push(PathGeometry {
            kind: PathKind::Rp(l),
            via_point: rp,
            aoa: angle,
            delay,
            pseudo_delay: delay + delta_tau,
        });
    }
    for (j, sp) in sp_positions.iter().enumerate() {
        let delay = path_delay(p, sp, &p_rs);
        if (p - sp).norm() == 0.0 {
            return Err(Error::DegenerateGeometry("UE coincides with a scatterer".into()));
        }
        out.push(PathGeometry {
            kind: PathKind::Sp(j),
            via_point: *sp,
            aoa: aoa(sp, stripe)?,
            delay,
            pseudo_delay: delay + delta_tau,
        });
    }
    Ok(out)
}

/// All paths of the scenario's ground truth for one stripe.
pub fn enumerate_paths(scenario: &Scenario, stripe_index: usize) -> Result<Vec<PathGeometry>> {
    let sps: Vec<Vec3> = scenario.scatterers.iter().map(|s| s.position).collect();
    paths_for(
        &scenario.ue_position,
        &scenario.stripes[stripe_index],
        &scenario.walls,
        &sps,
        scenario.delta_tau,
    )
}

/// Number of specular components (LoS plus reflections) seen by a stripe.
pub fn num_specular(stripe: &Stripe, walls: &[Wall]) -> usize {
    1 + (0..walls.len())
        .filter(|&l| stripe.mounted_wall != Some(l))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;
    use std::f64::consts::{FRAC_PI_2, PI};

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    fn wall_y0() -> Wall {
        Wall::new(Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), 0).unwrap()
    }

    fn stripe_at(pc: Vec3, beta: f64) -> Stripe {
        Stripe::new(pc, beta, 4, 0.04, None).unwrap()
    }

    #[test]
    fn rot_z_basics() {
        assert!((rot_z(0.0) - Mat3::identity()).norm() < 1e-15);
        let v = rot_z(FRAC_PI_2) * Vec3::x();
        assert!((v - Vec3::y()).norm() < 1e-15);
        assert!((rot_z(0.7) * rot_z(-0.7) - Mat3::identity()).norm() < 1e-15);
        assert!(close(rot_z(1.3).determinant(), 1.0, 1e-14));
    }

    #[test]
    fn d_rot_z_matches_central_difference() {
        let h = 1e-6;
        let fd = (rot_z(h) - rot_z(-h)) / (2.0 * h);
        assert!((fd - d_rot_z_at_zero()).norm() < 1e-9);
        let r = Vec3::new(0.3, -1.2, 0.0);
        assert_eq!(d_rot_z_at_zero() * r, Vec3::new(1.2, 0.3, 0.0));
        assert_eq!(d_rot_z_at_zero() * Vec3::z(), Vec3::zeros());
    }

    #[test]
    fn mirror_examples() {
        let p = Vec3::new(3.03, 2.87, 1.0);
        assert!((mirror_ue(&p, &wall_y0()) - Vec3::new(3.03, -2.87, 1.0)).norm() < 1e-15);
        let on = Vec3::new(1.0, 0.0, 2.0);
        assert_eq!(mirror_ue(&on, &wall_y0()), on);
    }

    #[test]
    fn reflection_point_on_floor_wall() {
        let p_rs = Vec3::new(0.0, 1.0, 2.75);
        let p = Vec3::new(4.0, 2.0, 1.0);
        let rp = reflection_point(&p_rs, &p, &wall_y0()).unwrap();
        assert!(rp.y.abs() < 1e-12);
        // Similar triangles: the RP splits the offset between the feet of the
        // two endpoints in the ratio of their distances to the plane (1 : 2).
        let expect = Vec3::new(4.0 / 3.0, 0.0, 2.75 - 1.75 / 3.0);
        assert!((rp - expect).norm() < 1e-12);
        let a = rp2(&p_rs, &rp, &p);
        assert!(a < 1e-9);
    }

    fn rp2(p_rs: &Vec3, rp: &Vec3, p: &Vec3) -> f64 {
        let n = Vec3::y();
        let inc = (p - rp).normalize();
        let out = (p_rs - rp).normalize();
        (inc.dot(&n).acos() - out.dot(&n).acos()).abs()
    }

    #[test]
    fn reflection_point_symmetric_case() {
        let p_rs = Vec3::new(1.0, 2.0, 1.0);
        let p = Vec3::new(1.0, 2.0, 1.0 + 1e-9);
        let w = Wall::new(Vec3::new(0.0, 0.0, 0.0), Vec3::z(), 0).unwrap();
        let rp = reflection_point(&p_rs, &p, &w).unwrap();
        assert!((rp - Vec3::new(1.0, 2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn reflection_point_errors() {
        let p_rs = Vec3::new(0.0, 1.0, 2.75);
        let p = Vec3::new(4.0, -2.0, 1.0);
        assert!(matches!(
            reflection_point(&p_rs, &p, &wall_y0()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn aoa_frame() {
        let s = stripe_at(Vec3::new(1.0, 1.0, 2.0), 0.0);
        assert!(close(aoa(&Vec3::new(1.0, 3.0, 0.0), &s).unwrap(), 0.0, 1e-15));
        assert!(close(aoa(&Vec3::new(3.0, 1.0, 0.0), &s).unwrap(), FRAC_PI_2, 1e-15));
        assert!(close(aoa(&Vec3::new(1.0, -3.0, 0.0), &s).unwrap(), PI, 1e-15));
        assert!(aoa(&Vec3::new(1.0, 1.0, 0.0), &s).is_err());
    }

    #[test]
    fn delay_examples() {
        let p = Vec3::new(3.0, 0.0, 0.0);
        let rs = Vec3::zeros();
        assert!(close(path_delay(&p, &p, &rs), 3.0 / SPEED_OF_LIGHT, 1e-22));
        assert!(close(path_delay(&p, &p, &rs), 1.0007e-8, 1e-12));
        let mid = Vec3::new(1.0, 0.0, 0.0);
        assert!(close(path_delay(&p, &mid, &rs), path_delay(&p, &p, &rs), 1e-22));
        let via = Vec3::new(1.0, 2.0, -1.0);
        assert_eq!(path_delay(&p, &via, &rs), path_delay(&rs, &via, &p));
    }

    #[test]
    fn wrap_range() {
        assert!(close(wrap_angle(-PI), PI, 1e-15));
        assert!(close(wrap_angle(3.0 * PI), PI, 1e-12));
        assert!(close(wrap_angle(-2.0 * PI), 0.0, 1e-15));
    }

    #[test]
    fn empty_scene_has_los_only() {
        let s = stripe_at(Vec3::new(0.0, 0.0, 2.75), 0.0);
        let paths = paths_for(&Vec3::new(1.0, 2.0, 1.0), &s, &[], &[], 0.0).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].kind, PathKind::Los);
        assert_eq!(paths[0].delay, paths[0].pseudo_delay);
    }

    #[test]
    fn householder_is_reflection() {
        let w = Wall::new(Vec3::zeros(), Vec3::new(0.6, 0.8, 0.0), 0).unwrap();
        let h = w.householder();
        assert!((h * h - Mat3::identity()).norm() < 1e-15);
        assert!(close(h.determinant(), -1.0, 1e-14));
    }
}
