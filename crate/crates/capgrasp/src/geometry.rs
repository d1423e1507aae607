//! Rotation algebra, approach-space canonicalization, cone membership and
//! sampling, gripper control points, and sector binning.
//!
//! Conventions: quaternions are scalar-first unit quaternions; the grasp
//! frame approaches along its +z axis and closes along its x axis; the
//! approach space is the camera frame rotated so the constraint axis
//! coincides with -y.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// 3-vector (meters for positions, dimensionless for directions).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const UNIT_TOL: f64 = 1e-9;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };
    /// The approach-space target direction: -y of the camera frame.
    pub const NEG_Y: Vec3 = Vec3 { x: 0.0, y: -1.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize zero vector");
        self * (1.0 / n)
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Angle to another unit vector, in radians.
    pub fn angle_to(self, o: Vec3) -> f64 {
        self.dot(o).clamp(-1.0, 1.0).acos()
    }

    /// Two unit vectors completing `self` (assumed unit) to a
    /// right-handed orthonormal basis.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        let helper = if self.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        let u = self.cross(helper).normalized();
        let v = self.cross(u);
        (u, v)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, scalar first. `q` and `-q` denote the same rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> UnitQuat {
        UnitQuat { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> UnitQuat {
        let half = 0.5 * angle;
        let s = half.sin();
        let a = axis.normalized();
        UnitQuat::new(half.cos(), a.x * s, a.y * s, a.z * s)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    pub fn normalized(self) -> UnitQuat {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize zero quaternion");
        UnitQuat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    /// Hamilton product `self * rhs` (apply `rhs` first, then `self`).
    pub fn mul(self, r: UnitQuat) -> UnitQuat {
        UnitQuat::new(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }

    pub fn conjugate(self) -> UnitQuat {
        UnitQuat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotation matrix of this quaternion. Invariant under `q -> -q`.
    pub fn to_matrix(self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3 {
            m: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
                [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
                [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
            ],
        }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.to_matrix().apply(v)
    }

    /// Shortest-arc rotation angle to another quaternion, in radians.
    /// Uses the chord length, which stays well conditioned near zero.
    pub fn angle_to(self, o: UnitQuat) -> f64 {
        let diff = |s: f64| {
            let d = UnitQuat::new(self.w - s * o.w, self.x - s * o.x, self.y - s * o.y, self.z - s * o.z);
            d.norm()
        };
        let chord = diff(1.0).min(diff(-1.0));
        4.0 * (0.5 * chord).clamp(-1.0, 1.0).asin()
    }
}

/// 3x3 rotation matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3 {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn matmul(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Mat3 { m: r }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Rotation about a unit axis by `angle` (Rodrigues form).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let a = axis.normalized();
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let (x, y, z) = (a.x, a.y, a.z);
        Mat3 {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    /// Unit quaternion of a rotation matrix (Shepperd's method).
    pub fn to_quat(&self) -> UnitQuat {
        let m = &self.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            UnitQuat::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            UnitQuat::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            UnitQuat::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            UnitQuat::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        q.normalized()
    }
}

/// 7-D grasp pose: orientation plus position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub q: UnitQuat,
    pub p: Vec3,
}

impl GraspPose {
    pub const IDENTITY: GraspPose = GraspPose { q: UnitQuat::IDENTITY, p: Vec3::ZERO };

    pub fn new(q: UnitQuat, p: Vec3) -> GraspPose {
        GraspPose { q, p }
    }
}

/// Rotation-only rigid transform (translation kept for frame plumbing;
/// approach-space transforms always carry t = 0).
#[derive(Clone, Copy, Debug)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn rotation_only(rotation: Mat3) -> RigidTransform {
        RigidTransform { rotation, translation: Vec3::ZERO }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> RigidTransform {
        RigidTransform { rotation, translation }
    }

    pub fn from_pose(q: UnitQuat, p: Vec3) -> RigidTransform {
        RigidTransform { rotation: q.to_matrix(), translation: p }
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn apply_direction(&self, v: Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.apply(self.translation),
        }
    }

    /// `self` after `first`: (self ∘ first)(x) = self(first(x)).
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.matmul(&first.rotation),
            translation: self.rotation.apply(first.translation) + self.translation,
        }
    }
}

/// Spherical cone of allowed approach directions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConeConstraint {
    pub axis: Vec3,
    pub half_angle: f64,
}

impl ConeConstraint {
    pub fn new(axis: Vec3, half_angle: f64) -> ConeConstraint {
        assert!(axis.is_unit(), "cone axis must be unit norm");
        assert!(
            half_angle > 0.0 && half_angle <= PI / 2.0 + 1e-12,
            "half angle must lie in (0, pi/2]"
        );
        ConeConstraint { axis, half_angle }
    }
}

/// Membership is boundary-inclusive so that the refinement zeroing rule
/// and this predicate are exact complements.
pub fn cone_contains(cone: &ConeConstraint, v: Vec3) -> bool {
    v.dot(cone.axis) >= cone.half_angle.cos()
}

/// Unit approach direction of a grasp: the grasp-frame z axis.
pub fn approach_vector(g: &GraspPose) -> Vec3 {
    g.q.rotate(Vec3::Z)
}

/// Rotation carrying `v_approach` onto -y, restricted to the plane
/// spanned by `v_approach` and -y so the transform is unique.
///
/// When `v_approach` is antipodal to -y the in-plane axis vanishes; the
/// fallback is a half-turn about +x.
pub fn approach_space_transform(v_approach: Vec3) -> RigidTransform {
    debug_assert!(v_approach.is_unit());
    let target = Vec3::NEG_Y;
    let c = v_approach.dot(target);
    if c >= 1.0 - UNIT_TOL {
        return RigidTransform::IDENTITY;
    }
    if c <= -1.0 + UNIT_TOL {
        // v_approach ~ +y: any axis orthogonal to y works; pin +x.
        return RigidTransform::rotation_only(Mat3::from_axis_angle(Vec3::X, PI));
    }
    let axis = v_approach.cross(target).normalized();
    let phi = c.clamp(-1.0, 1.0).acos();
    RigidTransform::rotation_only(Mat3::from_axis_angle(axis, phi))
}

/// Rigidly transform a grasp pose: rotate and shift the position, compose
/// the orientation.
pub fn transform_grasp(t: &RigidTransform, g: &GraspPose) -> GraspPose {
    GraspPose {
        q: t.rotation.to_quat().mul(g.q).normalized(),
        p: t.apply_point(g.p),
    }
}

/// Rigidly transform a set of points.
pub fn transform_points(t: &RigidTransform, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|&p| t.apply_point(p)).collect()
}

/// Uniform sample over the spherical cap of half-angle `alpha` around
/// `pole`: cos(theta) uniform on [cos(alpha), 1], azimuth uniform.
pub fn sample_direction_in_cone<R: Rng + ?Sized>(pole: Vec3, alpha: f64, rng: &mut R) -> Vec3 {
    debug_assert!(alpha > 0.0 && alpha <= PI / 2.0 + 1e-12);
    let cos_alpha = alpha.cos();
    let cos_theta = rng.random_range(cos_alpha..=1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let psi = rng.random_range(0.0..2.0 * PI);
    let (t1, t2) = pole.orthonormal_basis();
    t1 * (sin_theta * psi.cos()) + t2 * (sin_theta * psi.sin()) + pole * cos_theta
}

/// Canonical gripper skeleton constants (parallel-jaw, meters).
pub mod gripper {
    /// Half the finger spread of the canonical skeleton.
    pub const HALF_SPAN: f64 = 0.0527;
    /// Depth of the palm/elbow points along the approach axis.
    pub const PALM_DEPTH: f64 = 0.059;
    /// Depth of the fingertip points along the approach axis.
    pub const TIP_DEPTH: f64 = 0.1034;
}

/// The six canonical control points in the grasp frame: base, wrist,
/// the two elbows, the two fingertips.
pub const CANONICAL_CONTROL_POINTS: [Vec3; 6] = [
    Vec3 { x: 0.0, y: 0.0, z: 0.0 },
    Vec3 { x: 0.0, y: 0.0, z: gripper::PALM_DEPTH },
    Vec3 { x: gripper::HALF_SPAN, y: 0.0, z: gripper::PALM_DEPTH },
    Vec3 { x: -gripper::HALF_SPAN, y: 0.0, z: gripper::PALM_DEPTH },
    Vec3 { x: gripper::HALF_SPAN, y: 0.0, z: gripper::TIP_DEPTH },
    Vec3 { x: -gripper::HALF_SPAN, y: 0.0, z: gripper::TIP_DEPTH },
];

/// Coarse 6-point cloud of a grasp pose, used by the reconstruction loss
/// and as the discriminator's gripper cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlPointSet(pub [Vec3; 6]);

impl ControlPointSet {
    pub fn flatten(&self) -> [f64; 18] {
        let mut out = [0.0; 18];
        for (i, p) in self.0.iter().enumerate() {
            out[3 * i] = p.x;
            out[3 * i + 1] = p.y;
            out[3 * i + 2] = p.z;
        }
        out
    }
}

/// Canonical control points rigidly placed at a grasp pose. The rotation
/// matrix is even in the quaternion, so h(q) = h(-q) exactly.
pub fn grasp_control_points(g: &GraspPose) -> ControlPointSet {
    let r = g.q.to_matrix();
    let mut pts = [Vec3::ZERO; 6];
    for (dst, src) in pts.iter_mut().zip(CANONICAL_CONTROL_POINTS.iter()) {
        *dst = r.apply(*src) + g.p;
    }
    ControlPointSet(pts)
}

/// Yaw x pitch partition of approach directions. Pitch is measured from
/// -y, yaw in the xz plane.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SectorGrid {
    pub yaw_bins: usize,
    pub pitch_bins: usize,
}

impl SectorGrid {
    pub fn new(yaw_bins: usize, pitch_bins: usize) -> SectorGrid {
        assert!(yaw_bins > 0 && pitch_bins > 0);
        SectorGrid { yaw_bins, pitch_bins }
    }

    pub fn sector_count(&self) -> usize {
        self.yaw_bins * self.pitch_bins
    }

    /// Angular center direction of a sector.
    pub fn sector_center(&self, sector: usize) -> Vec3 {
        let (pitch_bin, yaw_bin) = (sector / self.yaw_bins, sector % self.yaw_bins);
        let pitch = (pitch_bin as f64 + 0.5) * PI / self.pitch_bins as f64;
        let yaw = -PI + (yaw_bin as f64 + 0.5) * 2.0 * PI / self.yaw_bins as f64;
        direction_from_angles(pitch, yaw)
    }

    /// Cone circumscribing a sector: axis at the angular center,
    /// half-angle of half the sector's angular diagonal.
    pub fn sector_cone(&self, sector: usize) -> ConeConstraint {
        let (pitch_bin, yaw_bin) = (sector / self.yaw_bins, sector % self.yaw_bins);
        let pitch_lo = pitch_bin as f64 * PI / self.pitch_bins as f64;
        let pitch_hi = (pitch_bin as f64 + 1.0) * PI / self.pitch_bins as f64;
        let yaw_lo = -PI + yaw_bin as f64 * 2.0 * PI / self.yaw_bins as f64;
        let yaw_hi = -PI + (yaw_bin as f64 + 1.0) * 2.0 * PI / self.yaw_bins as f64;
        let c0 = direction_from_angles(pitch_lo, yaw_lo);
        let c1 = direction_from_angles(pitch_hi, yaw_hi);
        let half = 0.5 * c0.angle_to(c1);
        ConeConstraint::new(self.sector_center(sector), half.min(PI / 2.0).max(1e-6))
    }
}

impl Default for SectorGrid {
    fn default() -> SectorGrid {
        SectorGrid { yaw_bins: 8, pitch_bins: 4 }
    }
}

/// Direction with `pitch` from -y and `yaw` = atan2(z, x).
pub fn direction_from_angles(pitch: f64, yaw: f64) -> Vec3 {
    let sp = pitch.sin();
    Vec3::new(sp * yaw.cos(), -pitch.cos(), sp * yaw.sin())
}

/// Sector index of a unit direction. Bins are half-open low-inclusive,
/// except the final pitch bin which includes pi. Directions on the poles
/// (x = z = 0) take yaw bin 0.
pub fn sector_of(v: Vec3, grid: &SectorGrid) -> usize {
    debug_assert!(v.is_unit());
    let pitch = (-v.y).clamp(-1.0, 1.0).acos();
    let mut pitch_bin = ((pitch / PI) * grid.pitch_bins as f64).floor() as usize;
    if pitch_bin >= grid.pitch_bins {
        pitch_bin = grid.pitch_bins - 1;
    }
    let yaw_bin = if v.x == 0.0 && v.z == 0.0 {
        0
    } else {
        let yaw = v.z.atan2(v.x);
        let mut frac = (yaw + PI) / (2.0 * PI);
        if frac >= 1.0 {
            frac -= 1.0;
        }
        ((frac * grid.yaw_bins as f64).floor() as usize).min(grid.yaw_bins - 1)
    };
    pitch_bin * grid.yaw_bins + yaw_bin
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
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

    fn random_quat<R: Rng>(rng: &mut R) -> UnitQuat {
        let axis = random_unit(rng);
        let angle = rng.random_range(-PI..PI);
        UnitQuat::from_axis_angle(axis, angle)
    }

    fn random_grasp<R: Rng>(rng: &mut R) -> GraspPose {
        GraspPose::new(
            random_quat(rng),
            Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ),
        )
    }

    #[test]
    fn approach_vector_identity() {
        let v = approach_vector(&GraspPose::IDENTITY);
        assert_eq!((v.x, v.y, v.z), (0.0, 0.0, 1.0));
    }

    #[test]
    fn approach_vector_half_turn_about_x() {
        let g = GraspPose::new(UnitQuat::from_axis_angle(Vec3::X, PI), Vec3::ZERO);
        let v = approach_vector(&g);
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.z, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn approach_vector_quarter_turn_about_x() {
        // R(q) e_z for a +90 degree turn about x sends z to -y.
        let g = GraspPose::new(UnitQuat::from_axis_angle(Vec3::X, PI / 2.0), Vec3::ZERO);
        let v = approach_vector(&g);
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn approach_vector_is_rotation_equivariant() {
        let mut rng = stream(11, 0);
        for _ in 0..200 {
            let g = random_grasp(&mut rng);
            let r = random_quat(&mut rng);
            let t = RigidTransform::rotation_only(r.to_matrix());
            let lhs = approach_vector(&transform_grasp(&t, &g));
            let rhs = t.rotation.apply(approach_vector(&g));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn approach_transform_aligned_is_identity() {
        let t = approach_space_transform(Vec3::NEG_Y);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(t.rotation.m[i][j], Mat3::IDENTITY.m[i][j]);
            }
        }
    }

    #[test]
    fn approach_transform_x_axis_matches_quarter_turn() {
        // x-hat must map to -y via a -90 degree turn about z.
        let t = approach_space_transform(Vec3::X);
        let expected = Mat3::from_axis_angle(Vec3::Z, -PI / 2.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(t.rotation.m[i][j], expected.m[i][j], epsilon = 1e-12);
            }
        }
        let mapped = t.rotation.apply(Vec3::X);
        assert!((mapped - Vec3::NEG_Y).norm() < 1e-12);
    }

    #[test]
    fn approach_transform_antipodal_fallback() {
        // +y is antipodal to the target; fallback is a half-turn about x.
        let t = approach_space_transform(Vec3::Y);
        let mapped = t.rotation.apply(Vec3::Y);
        assert!((mapped - Vec3::NEG_Y).norm() < 1e-12);
        let x_mapped = t.rotation.apply(Vec3::X);
        assert!((x_mapped - Vec3::X).norm() < 1e-12);
    }

    #[test]
    fn approach_transform_contract_on_random_directions() {
        let mut rng = stream(12, 0);
        for _ in 0..5000 {
            let v = random_unit(&mut rng);
            let t = approach_space_transform(v);
            assert!((t.rotation.apply(v) - Vec3::NEG_Y).norm() < 1e-9);
            let rrt = t.rotation.matmul(&t.rotation.transpose());
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((rrt.m[i][j] - expect).abs() < 1e-9);
                }
            }
            assert!((t.rotation.det() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn so2_conjugation_fixes_y() {
        let mut rng = stream(13, 0);
        let mut checked = 0;
        while checked < 2000 {
            let v = random_unit(&mut rng);
            let r = random_quat(&mut rng).to_matrix();
            let rv = r.apply(v);
            if (rv - Vec3::Y).norm() < 1e-6 || (v - Vec3::Y).norm() < 1e-6 {
                continue;
            }
            let m = approach_space_transform(rv)
                .rotation
                .matmul(&r)
                .matmul(&approach_space_transform(v).rotation.transpose());
            assert!((m.apply(Vec3::Y) - Vec3::Y).norm() < 1e-6);
            checked += 1;
        }
    }

    #[test]
    fn transform_grasp_identity() {
        let mut rng = stream(14, 0);
        let g = random_grasp(&mut rng);
        let out = transform_grasp(&RigidTransform::IDENTITY, &g);
        assert!((out.p - g.p).norm() < 1e-15);
        assert!(out.q.angle_to(g.q) < 1e-12);
    }

    #[test]
    fn transform_grasp_round_trip() {
        let mut rng = stream(15, 0);
        let mut max_pos = 0.0f64;
        for _ in 0..1000 {
            let g = random_grasp(&mut rng);
            let t = approach_space_transform(random_unit(&mut rng));
            let back = transform_grasp(&t.inverse(), &transform_grasp(&t, &g));
            max_pos = max_pos.max((back.p - g.p).norm());
            assert!(back.q.angle_to(g.q) < 1e-9);
        }
        assert!(max_pos < 1e-9);
    }

    #[test]
    fn canonicalizing_own_approach_gives_top_down() {
        let mut rng = stream(16, 0);
        for _ in 0..500 {
            let g = random_grasp(&mut rng);
            let t = approach_space_transform(approach_vector(&g));
            let canon = transform_grasp(&t, &g);
            assert!((approach_vector(&canon) - Vec3::NEG_Y).norm() < 1e-9);
        }
    }

    #[test]
    fn cone_contains_axis_and_orthogonal() {
        let cone = ConeConstraint::new(Vec3::NEG_Y, 30f64.to_radians());
        assert!(cone_contains(&cone, Vec3::NEG_Y));
        assert!(!cone_contains(&cone, Vec3::X));
    }

    #[test]
    fn cone_boundary_is_inclusive() {
        let alpha = 30f64.to_radians();
        let cone = ConeConstraint::new(Vec3::NEG_Y, alpha);
        // Build a direction at exactly the boundary dot product.
        let v = Vec3::new(alpha.sin(), -alpha.cos(), 0.0);
        assert_eq!(v.dot(cone.axis), alpha.cos());
        assert!(cone_contains(&cone, v));
    }

    #[test]
    fn cone_sampling_stays_in_cone() {
        let mut rng = stream(17, 0);
        let pole = Vec3::new(0.0, 0.0, 1.0);
        let alpha = 30f64.to_radians();
        let cone = ConeConstraint::new(pole, alpha);
        for _ in 0..100_000 {
            let v = sample_direction_in_cone(pole, alpha, &mut rng);
            assert!(cone_contains(&cone, v));
        }
    }

    #[test]
    fn cone_sampling_vanishing_cap_returns_pole() {
        let mut rng = stream(18, 0);
        let pole = random_unit(&mut rng);
        let v = sample_direction_in_cone(pole, 1e-9, &mut rng);
        assert!((v - pole).norm() < 1e-4);
    }

    #[test]
    fn cone_sampling_mean_cosine_matches_analytic() {
        // cos(theta) uniform on [cos(alpha), 1] has mean (1 + cos(alpha))/2.
        let mut rng = stream(19, 0);
        let pole = Vec3::Z;
        let alpha = 60f64.to_radians();
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_direction_in_cone(pole, alpha, &mut rng).dot(pole))
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(mean, 0.75, epsilon = 0.01);
    }

    #[test]
    fn control_points_identity_pose() {
        let pts = grasp_control_points(&GraspPose::IDENTITY);
        assert_eq!(pts.0[0], Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(pts.0[1], Vec3::new(0.0, 0.0, 0.059));
        assert_eq!(pts.0[2], Vec3::new(0.0527, 0.0, 0.059));
        assert_eq!(pts.0[3], Vec3::new(-0.0527, 0.0, 0.059));
        assert_eq!(pts.0[4], Vec3::new(0.0527, 0.0, 0.1034));
        assert_eq!(pts.0[5], Vec3::new(-0.0527, 0.0, 0.1034));
    }

    #[test]
    fn control_points_pure_translation() {
        let shift = Vec3::new(0.0, 0.0, 0.1);
        let pts = grasp_control_points(&GraspPose::new(UnitQuat::IDENTITY, shift));
        for (got, canon) in pts.0.iter().zip(CANONICAL_CONTROL_POINTS.iter()) {
            assert!((*got - (*canon + shift)).norm() < 1e-15);
        }
    }

    #[test]
    fn control_points_double_cover_exact() {
        let mut rng = stream(20, 0);
        for _ in 0..1000 {
            let g = random_grasp(&mut rng);
            let neg = GraspPose::new(
                UnitQuat::new(-g.q.w, -g.q.x, -g.q.y, -g.q.z),
                g.p,
            );
            assert_eq!(grasp_control_points(&g), grasp_control_points(&neg));
        }
    }

    #[test]
    fn control_points_are_rigid() {
        let mut rng = stream(21, 0);
        let canon = grasp_control_points(&GraspPose::IDENTITY);
        for _ in 0..500 {
            let pts = grasp_control_points(&random_grasp(&mut rng));
            for i in 0..6 {
                for j in (i + 1)..6 {
                    let d = (pts.0[i] - pts.0[j]).norm();
                    let d0 = (canon.0[i] - canon.0[j]).norm();
                    assert!((d - d0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sector_of_pole_tie_break() {
        let grid = SectorGrid::default();
        assert_eq!(sector_of(Vec3::NEG_Y, &grid), 0);
        // +y is the far pole: last pitch bin, yaw bin 0.
        assert_eq!(sector_of(Vec3::Y, &grid), 3 * 8);
    }

    #[test]
    fn sector_of_x_axis() {
        // pitch 90 degrees -> bin 2 of 4; yaw 0 -> bin 4 of 8; index 20.
        let grid = SectorGrid::default();
        assert_eq!(sector_of(Vec3::X, &grid), 20);
    }

    #[test]
    fn sector_partition_is_total() {
        let grid = SectorGrid::default();
        let mut rng = stream(22, 0);
        let mut counts = vec![0usize; grid.sector_count()];
        for _ in 0..1_000_000 {
            let v = random_unit(&mut rng);
            let s = sector_of(v, &grid);
            assert!(s < 32);
            counts[s] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn sector_center_round_trips() {
        let grid = SectorGrid::default();
        for s in 0..grid.sector_count() {
            let c = grid.sector_center(s);
            assert!(c.is_unit());
            assert_eq!(sector_of(c, &grid), s);
        }
    }

    #[test]
    fn sector_cone_contains_center() {
        let grid = SectorGrid::default();
        for s in 0..grid.sector_count() {
            let cone = grid.sector_cone(s);
            assert!(cone_contains(&cone, grid.sector_center(s)));
            assert!(cone.half_angle > 0.0 && cone.half_angle <= PI / 2.0);
        }
    }

    #[test]
    fn quat_matrix_round_trip() {
        let mut rng = stream(23, 0);
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            let back = q.to_matrix().to_quat();
            assert!(q.angle_to(back) < 1e-9);
        }
    }
}
