//! Analytic antipodal grasp oracle, ground-truth grasp generation, and
//! dataset curation.
//!
//! A grasp succeeds when the closing line between the fingertip interiors
//! cuts the object at two contacts that fit inside the maximum opening,
//! both contact normals oppose the closing directions within the friction
//! cone, and neither finger at full opening intersects the object.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::collision::{intersect_line, primitive_intersects_box, OrientedBox};
use crate::geometry::{
    gripper, transform_grasp, GraspPose, UnitQuat, Vec3,
};
use crate::scene::{sample_local, PrimitiveShape};
use crate::{Error, Result};

/// Finger pad half-thickness (outward of the opening) and half-width used
/// by the collision check, meters.
pub const FINGER_HALF_THICKNESS: f64 = 0.005;
pub const FINGER_HALF_WIDTH: f64 = 0.01;

/// Parallel-jaw gripper parameters for the oracle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GripperSpec {
    /// Maximum distance between the finger interior faces, meters.
    pub max_width: f64,
    /// Usable finger pad length behind the fingertips, meters.
    pub finger_depth: f64,
    /// Coulomb friction coefficient at the contacts.
    pub friction_mu: f64,
}

impl Default for GripperSpec {
    fn default() -> GripperSpec {
        GripperSpec { max_width: 0.08, finger_depth: 0.046, friction_mu: 0.5 }
    }
}

impl GripperSpec {
    /// Depth of the closing line in the grasp frame: mid-finger, measured
    /// from the grasp origin along the approach axis.
    pub fn closing_depth(&self) -> f64 {
        gripper::TIP_DEPTH - 0.5 * self.finger_depth
    }

    /// cos of the friction cone half-angle, cos(arctan(mu)).
    fn cos_friction(&self) -> f64 {
        1.0 / (1.0 + self.friction_mu * self.friction_mu).sqrt()
    }
}

/// Binary grasp success label.
pub type GraspLabel = bool;

/// The two finger contacts of a successful grasp, in the frame the shape
/// and grasp were given in.
#[derive(Clone, Copy, Debug)]
pub struct ContactPair {
    pub first: Vec3,
    pub second: Vec3,
    pub normal_first: Vec3,
    pub normal_second: Vec3,
}

/// Antipodal force-closure check. `margin` tightens (positive) or loosens
/// (negative) every acceptance boundary; label queries use 0.
///
/// Returns the contacts when the grasp succeeds.
pub fn analyze_grasp(
    shape: &PrimitiveShape,
    g: &GraspPose,
    gripper_spec: &GripperSpec,
    margin: f64,
) -> Option<ContactPair> {
    let pose = shape.pose();
    let to_local = pose.inverse();
    let g_local = transform_grasp(&to_local, g);
    let r = g_local.q.to_matrix();
    let closing = r.apply(Vec3::X);
    let approach = r.apply(Vec3::Z);
    let line_origin = g_local.p + approach * gripper_spec.closing_depth();

    let hits = intersect_line(&shape.kind, line_origin, closing)?;

    // (a) both contacts between the fingertip interiors.
    let reach = 0.5 * gripper_spec.max_width - margin;
    if hits.t_in < -reach || hits.t_out > reach {
        return None;
    }

    // (b) contact normals oppose the closing directions within friction.
    let cos_f = gripper_spec.cos_friction() + margin;
    if hits.normal_in.dot(-closing) < cos_f || hits.normal_out.dot(closing) < cos_f {
        return None;
    }

    // (c) finger boxes at full opening must stay clear of the object.
    for side in [-1.0, 1.0] {
        let center_x = side * (0.5 * gripper_spec.max_width + FINGER_HALF_THICKNESS);
        let center =
            g_local.p + r.apply(Vec3::new(center_x, 0.0, gripper_spec.closing_depth()));
        let finger = OrientedBox {
            center,
            half_extents: Vec3::new(
                FINGER_HALF_THICKNESS,
                FINGER_HALF_WIDTH,
                0.5 * gripper_spec.finger_depth,
            ),
            axes: [closing, r.apply(Vec3::Y), approach],
        }
        .inflated(margin);
        if primitive_intersects_box(&shape.kind, &finger) {
            return None;
        }
    }

    let first = pose.apply_point(line_origin + closing * hits.t_in);
    let second = pose.apply_point(line_origin + closing * hits.t_out);
    Some(ContactPair {
        first,
        second,
        normal_first: pose.apply_direction(hits.normal_in),
        normal_second: pose.apply_direction(hits.normal_out),
    })
}

/// Deterministic success label of a grasp on a shape.
pub fn evaluate_grasp(shape: &PrimitiveShape, g: &GraspPose, gripper_spec: &GripperSpec) -> GraspLabel {
    analyze_grasp(shape, g, gripper_spec, 0.0).is_some()
}

/// Acceptance margin used when generating dataset grasps, so stored
/// labels survive frame changes and serialization round-off.
pub const GENERATION_MARGIN: f64 = 1e-6;

const MAX_ATTEMPTS: u64 = 1_000_000;

/// `count` grasps that all pass the oracle, built by antipodal point-pair
/// sampling: pick a surface point, cast along the inward normal, accept
/// when the opposing contact fits the opening and the friction cones,
/// then pose the gripper with a random roll about the closing axis and a
/// random stand-off within the finger depth.
pub fn generate_ground_truth<R: Rng + ?Sized>(
    shape: &PrimitiveShape,
    count: usize,
    gripper_spec: &GripperSpec,
    rng: &mut R,
) -> Result<Vec<GraspPose>> {
    assert!(count > 0);
    let pose = shape.pose();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while out.len() < count {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::GraspGeneration {
                object: format!("{:?}", shape.kind),
                attempts,
            });
        }
        let (a, n_a) = sample_local(&shape.kind, rng);
        let dir = -n_a;
        let Some(hits) = intersect_line(&shape.kind, a, dir) else {
            continue;
        };
        // The cast starts on the surface; take the far exit as the
        // opposing contact.
        let width = hits.t_out;
        if width <= 1e-9 || width > gripper_spec.max_width - 2.0 * GENERATION_MARGIN {
            continue;
        }
        if hits.normal_out.dot(dir) < gripper_spec.cos_friction() + GENERATION_MARGIN {
            continue;
        }
        let b = a + dir * hits.t_out;
        let midpoint = (a + b) * 0.5;
        let (e1, e2) = dir.orthonormal_basis();
        let roll = rng.random_range(0.0..std::f64::consts::TAU);
        let approach = e1 * roll.cos() + e2 * roll.sin();
        let closing = dir;
        let y_axis = approach.cross(closing);
        let r = crate::geometry::Mat3::from_columns(closing, y_axis, approach);
        let standoff = rng.random_range(0.0..=gripper_spec.finger_depth);
        let depth = gripper::TIP_DEPTH - standoff;
        let p_local = midpoint - approach * depth;
        let g_world = transform_grasp(
            &pose,
            &GraspPose::new(r.to_quat(), p_local),
        );
        if analyze_grasp(shape, &g_world, gripper_spec, GENERATION_MARGIN).is_some() {
            out.push(g_world);
        }
    }
    Ok(out)
}

/// Negative grasps for discriminator training: half uniform poses inside
/// a 1.5x inflated bounding box, half perturbed positives (sigma 2 cm /
/// 0.3 rad), all kept only if they fail a slightly loosened oracle.
pub fn generate_negatives<R: Rng + ?Sized>(
    shape: &PrimitiveShape,
    positives: &[GraspPose],
    count: usize,
    gripper_spec: &GripperSpec,
    rng: &mut R,
) -> Result<Vec<GraspPose>> {
    assert!(!positives.is_empty());
    let pose = shape.pose();
    let he = shape.local_half_extents() * 1.5;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while out.len() < count {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::GraspGeneration {
                object: format!("{:?}", shape.kind),
                attempts,
            });
        }
        let candidate = if out.len() % 2 == 0 {
            let p_local = Vec3::new(
                rng.random_range(-he.x..=he.x),
                rng.random_range(-he.y..=he.y),
                rng.random_range(-he.z..=he.z),
            );
            let q = random_quat(rng);
            transform_grasp(&pose, &GraspPose::new(q, p_local))
        } else {
            let base = positives[rng.random_range(0..positives.len())];
            let jitter = Vec3::new(
                0.02 * sample_normal(rng),
                0.02 * sample_normal(rng),
                0.02 * sample_normal(rng),
            );
            let axis = random_unit(rng);
            let angle = 0.3 * sample_normal(rng);
            GraspPose::new(
                UnitQuat::from_axis_angle(axis, angle).mul(base.q).normalized(),
                base.p + jitter,
            )
        };
        // Keep only candidates that fail even a loosened oracle, so the
        // negative label is robust to frame-change round-off.
        if analyze_grasp(shape, &candidate, gripper_spec, -GENERATION_MARGIN).is_none() {
            out.push(candidate);
        }
    }
    Ok(out)
}

fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

fn random_quat<R: Rng + ?Sized>(rng: &mut R) -> UnitQuat {
    UnitQuat::from_axis_angle(random_unit(rng), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{approach_vector, sector_of, RigidTransform, SectorGrid};
    use crate::rng::stream;
    use crate::scene::ShapeKind;

    fn sphere(r: f64) -> PrimitiveShape {
        PrimitiveShape::new(ShapeKind::Sphere([r]), UnitQuat::IDENTITY, Vec3::ZERO)
    }

    fn centered_grasp(gripper_spec: &GripperSpec) -> GraspPose {
        // Closing line through the origin along x.
        GraspPose::new(UnitQuat::IDENTITY, Vec3::new(0.0, 0.0, -gripper_spec.closing_depth()))
    }

    #[test]
    fn sphere_centered_grasp_succeeds_with_antipodal_contacts() {
        let gs = GripperSpec::default();
        let shape = sphere(0.03);
        let contacts = analyze_grasp(&shape, &centered_grasp(&gs), &gs, 0.0).unwrap();
        assert!((contacts.first - Vec3::new(-0.03, 0.0, 0.0)).norm() < 1e-9);
        assert!((contacts.second - Vec3::new(0.03, 0.0, 0.0)).norm() < 1e-9);
        assert!((contacts.normal_first + Vec3::X).norm() < 1e-9);
        assert!((contacts.normal_second - Vec3::X).norm() < 1e-9);
    }

    #[test]
    fn sphere_wider_than_opening_fails() {
        let gs = GripperSpec::default();
        let shape = sphere(0.05);
        assert!(!evaluate_grasp(&shape, &centered_grasp(&gs), &gs));
    }

    #[test]
    fn distant_grasp_fails() {
        let gs = GripperSpec::default();
        let shape = sphere(0.03);
        let g = GraspPose::new(UnitQuat::IDENTITY, Vec3::new(1.0, 0.0, 0.0));
        assert!(!evaluate_grasp(&shape, &g, &gs));
    }

    #[test]
    fn off_axis_chord_fails_friction() {
        let gs = GripperSpec::default();
        let shape = sphere(0.03);
        // Closing line offset from the center by more than mu allows:
        // contact normals lean away from the closing axis.
        let offset = 0.03 * 0.6; // > mu/sqrt(1+mu^2) = 0.447
        let g = GraspPose::new(
            UnitQuat::IDENTITY,
            Vec3::new(0.0, 0.0, offset - gs.closing_depth()),
        );
        assert!(!evaluate_grasp(&shape, &g, &gs));
    }

    #[test]
    fn box_grasp_succeeds_when_fingers_clear() {
        let gs = GripperSpec::default();
        let shape = PrimitiveShape::new(
            ShapeKind::Box([0.03, 0.06, 0.06]),
            UnitQuat::IDENTITY,
            Vec3::ZERO,
        );
        // Contacts at +-0.03 fit the 0.08 opening; the box never reaches
        // the fingers at |x| >= 0.04.
        let g = GraspPose::new(UnitQuat::IDENTITY, Vec3::new(0.0, 0.0, -gs.closing_depth()));
        assert!(evaluate_grasp(&shape, &g, &gs));
        // Widening beyond the opening breaks the reach condition.
        let wide = PrimitiveShape::new(
            ShapeKind::Box([0.045, 0.06, 0.06]),
            UnitQuat::IDENTITY,
            Vec3::ZERO,
        );
        assert!(!evaluate_grasp(&wide, &g, &gs));
    }

    #[test]
    fn finger_collision_fails_tilted_box() {
        let gs = GripperSpec::default();
        // Tilt a wide flat face just inside the friction cone (25 < 26.57
        // degrees): contacts still fit the opening, but the face climbs
        // past the finger interior within the finger depth window.
        let phi = 25f64.to_radians();
        let half_x = 0.0349;
        let dims = [half_x, 0.05, 0.08];
        let g = GraspPose::new(UnitQuat::IDENTITY, Vec3::new(0.0, 0.0, -gs.closing_depth()));

        let straight = PrimitiveShape::new(ShapeKind::Box(dims), UnitQuat::IDENTITY, Vec3::ZERO);
        assert!(evaluate_grasp(&straight, &g, &gs));

        let tilted = PrimitiveShape::new(
            ShapeKind::Box(dims),
            UnitQuat::from_axis_angle(Vec3::Y, phi),
            Vec3::ZERO,
        );
        // Contacts at +-half_x/cos(phi) = +-0.0385 pass reach and
        // friction; only the collision check can reject.
        assert!((half_x / phi.cos()) < 0.5 * gs.max_width);
        assert!(phi.cos() > gs.cos_friction());
        assert!(!evaluate_grasp(&tilted, &g, &gs));
    }

    #[test]
    fn oracle_is_deterministic() {
        let gs = GripperSpec::default();
        let shape = sphere(0.03);
        let g = centered_grasp(&gs);
        for _ in 0..5 {
            assert!(evaluate_grasp(&shape, &g, &gs));
        }
    }

    #[test]
    fn oracle_is_frame_equivariant() {
        let gs = GripperSpec::default();
        let mut rng = stream(60, 0);
        let shapes = [
            sphere(0.03),
            PrimitiveShape::new(ShapeKind::Box([0.02, 0.02, 0.06]), UnitQuat::IDENTITY, Vec3::ZERO),
            PrimitiveShape::new(ShapeKind::Cylinder([0.02, 0.04]), UnitQuat::IDENTITY, Vec3::ZERO),
        ];
        let mut successes = 0;
        for i in 0..1000 {
            let shape = &shapes[i % shapes.len()];
            let g = GraspPose::new(
                random_quat(&mut rng),
                Vec3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                ),
            );
            let t = RigidTransform::from_pose(
                random_quat(&mut rng),
                Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ),
            );
            let base = evaluate_grasp(shape, &g, &gs);
            let moved = evaluate_grasp(&shape.transformed(&t), &transform_grasp(&t, &g), &gs);
            assert_eq!(base, moved);
            if base {
                successes += 1;
            }
        }
        // The random poses should include at least a few successes so the
        // equivariance check is not vacuous.
        assert!(successes > 0);
    }

    #[test]
    fn ground_truth_all_pass_oracle() {
        let gs = GripperSpec::default();
        let shape = sphere(0.03);
        let grasps = generate_ground_truth(&shape, 200, &gs, &mut stream(61, 0)).unwrap();
        assert_eq!(grasps.len(), 200);
        for g in &grasps {
            assert!(evaluate_grasp(&shape, g, &gs));
        }
    }

    #[test]
    fn sphere_ground_truth_covers_most_sectors() {
        let gs = GripperSpec::default();
        let shape = sphere(0.03);
        let grasps = generate_ground_truth(&shape, 500, &gs, &mut stream(62, 0)).unwrap();
        let grid = SectorGrid::default();
        let mut seen = vec![false; grid.sector_count()];
        for g in &grasps {
            seen[sector_of(approach_vector(g), &grid)] = true;
        }
        let covered = seen.iter().filter(|&&s| s).count();
        assert!(covered >= 24, "only {covered} of 32 sectors covered");
    }

    #[test]
    fn elongated_box_closing_axes_avoid_long_axis() {
        let gs = GripperSpec::default();
        // 0.04 x 0.04 x 0.12 box: half extents.
        let shape = PrimitiveShape::new(
            ShapeKind::Box([0.02, 0.02, 0.06]),
            UnitQuat::IDENTITY,
            Vec3::ZERO,
        );
        let grasps = generate_ground_truth(&shape, 300, &gs, &mut stream(63, 0)).unwrap();
        // Friction cone bound on how far a closing axis can lean toward
        // the long (z) axis when contacts are on the thin faces.
        let max_lean = gs.friction_mu / (1.0 + gs.friction_mu * gs.friction_mu).sqrt() + 1e-6;
        for g in &grasps {
            let closing = g.q.rotate(Vec3::X);
            assert!(closing.dot(Vec3::Z).abs() <= max_lean);
        }
    }

    #[test]
    fn negatives_all_fail_oracle() {
        let gs = GripperSpec::default();
        let shape = sphere(0.03);
        let mut rng = stream(64, 0);
        let positives = generate_ground_truth(&shape, 50, &gs, &mut rng).unwrap();
        let negatives = generate_negatives(&shape, &positives, 100, &gs, &mut rng).unwrap();
        assert_eq!(negatives.len(), 100);
        for g in &negatives {
            assert!(!evaluate_grasp(&shape, g, &gs));
        }
    }
}
