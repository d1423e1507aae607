//! Procedural primitive objects, virtual depth-camera rendering, and
//! zero-centering of camera-frame point clouds.
//!
//! Visibility uses the outward-normal test, which is exact for the convex
//! primitives used here; there is no z-buffer.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{GraspPose, RigidTransform, UnitQuat, Vec3};
use crate::{Error, Result};

/// Convex primitive kinds with their extents in meters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dims", rename_all = "lowercase")]
pub enum ShapeKind {
    /// Half-extents along the local x, y, z axes.
    Box([f64; 3]),
    /// Radius and half-height; the local axis is z.
    Cylinder([f64; 2]),
    /// Radius.
    Sphere([f64; 1]),
}

/// A primitive object posed in some frame.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PrimitiveShape {
    #[serde(flatten)]
    pub kind: ShapeKind,
    pub pose_q: UnitQuat,
    pub pose_p: Vec3,
}

impl PrimitiveShape {
    pub fn new(kind: ShapeKind, pose_q: UnitQuat, pose_p: Vec3) -> PrimitiveShape {
        PrimitiveShape { kind, pose_q, pose_p }
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::from_pose(self.pose_q, self.pose_p)
    }

    /// The shape re-expressed in another frame: `t` maps the current
    /// frame into the new one.
    pub fn transformed(&self, t: &RigidTransform) -> PrimitiveShape {
        let new_pose = t.compose(&self.pose());
        PrimitiveShape {
            kind: self.kind,
            pose_q: new_pose.rotation.to_quat(),
            pose_p: new_pose.translation,
        }
    }

    /// Axis-aligned bounding half-extents in the local frame.
    pub fn local_half_extents(&self) -> Vec3 {
        match self.kind {
            ShapeKind::Box([a, b, c]) => Vec3::new(a, b, c),
            ShapeKind::Cylinder([r, h]) => Vec3::new(r, r, h),
            ShapeKind::Sphere([r]) => Vec3::new(r, r, r),
        }
    }

    /// Signed check that a local-frame point lies on the surface, as the
    /// absolute value of the defining surface equation.
    pub fn surface_residual_local(&self, p: Vec3) -> f64 {
        match self.kind {
            ShapeKind::Sphere([r]) => (p.norm() - r).abs(),
            ShapeKind::Cylinder([r, h]) => {
                let radial = (p.x * p.x + p.y * p.y).sqrt();
                if p.z.abs() <= h + 1e-12 && radial <= r + 1e-12 {
                    let lateral = (radial - r).abs();
                    let cap = (p.z.abs() - h).abs();
                    lateral.min(cap)
                } else {
                    f64::INFINITY
                }
            }
            ShapeKind::Box([a, b, c]) => {
                let d = Vec3::new(p.x.abs() - a, p.y.abs() - b, p.z.abs() - c);
                if d.x <= 1e-12 && d.y <= 1e-12 && d.z <= 1e-12 {
                    d.x.abs().min(d.y.abs()).min(d.z.abs())
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Camera pose; the camera looks along its +z axis.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl CameraPose {
    /// Camera at `position` with its optical (+z) axis through `target`.
    pub fn look_at(position: Vec3, target: Vec3) -> CameraPose {
        let z = (target - position).normalized();
        let up_hint = if z.z.abs() < 0.99 { Vec3::Z } else { Vec3::X };
        let x = up_hint.cross(z).normalized();
        let y = z.cross(x);
        let r = crate::geometry::Mat3::from_columns(x, y, z);
        CameraPose { position, orientation: r.to_quat() }
    }

    /// Camera-to-world transform.
    pub fn to_world(&self) -> RigidTransform {
        RigidTransform::from_pose(self.orientation, self.position)
    }

    /// World-to-camera transform.
    pub fn to_camera(&self) -> RigidTransform {
        self.to_world().inverse()
    }
}

/// N x 3 point cloud with optional unit normals and a record of any
/// zero-centering shift applied so far (in the cloud's frame history).
#[derive(Clone, Debug, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub centroid_offset: Vec3,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.points.len() as f64;
        let mut acc = Vec3::ZERO;
        for p in &self.points {
            acc = acc + *p;
        }
        acc * (1.0 / n)
    }

    /// Cloud rotated/shifted into another frame. The centroid offset is
    /// left untouched; it stays a record in the frame that produced it.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| t.apply_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|&n| t.apply_direction(n)).collect()),
            centroid_offset: self.centroid_offset,
        }
    }
}

/// Area-uniform surface samples with outward analytic normals, in the
/// shape's posed frame.
pub fn surface_sample<R: Rng + ?Sized>(
    shape: &PrimitiveShape,
    count: usize,
    rng: &mut R,
) -> (Vec<Vec3>, Vec<Vec3>) {
    assert!(count > 0);
    let pose = shape.pose();
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let (p, n) = sample_local(&shape.kind, rng);
        points.push(pose.apply_point(p));
        normals.push(pose.apply_direction(n));
    }
    (points, normals)
}

pub(crate) fn sample_local<R: Rng + ?Sized>(kind: &ShapeKind, rng: &mut R) -> (Vec3, Vec3) {
    match *kind {
        ShapeKind::Sphere([r]) => {
            let dir = uniform_sphere_dir(rng);
            (dir * r, dir)
        }
        ShapeKind::Cylinder([r, h]) => {
            let lateral = 2.0 * PI * r * 2.0 * h;
            let cap = PI * r * r;
            let total = lateral + 2.0 * cap;
            let pick = rng.random_range(0.0..total);
            if pick < lateral {
                let phi = rng.random_range(0.0..2.0 * PI);
                let z = rng.random_range(-h..=h);
                let n = Vec3::new(phi.cos(), phi.sin(), 0.0);
                (Vec3::new(r * n.x, r * n.y, z), n)
            } else {
                let sign = if pick < lateral + cap { 1.0 } else { -1.0 };
                let rad = r * rng.random_range(0.0f64..=1.0).sqrt();
                let phi = rng.random_range(0.0..2.0 * PI);
                (
                    Vec3::new(rad * phi.cos(), rad * phi.sin(), sign * h),
                    Vec3::new(0.0, 0.0, sign),
                )
            }
        }
        ShapeKind::Box([a, b, c]) => {
            let areas = [b * c, b * c, a * c, a * c, a * b, a * b];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut face = 5;
            for (i, &area) in areas.iter().enumerate() {
                if pick < area {
                    face = i;
                    break;
                }
                pick -= area;
            }
            let u = rng.random_range(-1.0..1.0);
            let v = rng.random_range(-1.0..1.0);
            match face {
                0 => (Vec3::new(a, u * b, v * c), Vec3::X),
                1 => (Vec3::new(-a, u * b, v * c), -Vec3::X),
                2 => (Vec3::new(u * a, b, v * c), Vec3::Y),
                3 => (Vec3::new(u * a, -b, v * c), -Vec3::Y),
                4 => (Vec3::new(u * a, v * b, c), Vec3::Z),
                _ => (Vec3::new(u * a, v * b, -c), -Vec3::Z),
            }
        }
    }
}

fn uniform_sphere_dir<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z = rng.random_range(-1.0..=1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    let s = (1.0f64 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Oversampling factor of the visibility filter in [`render_cloud`].
pub const RENDER_OVERSAMPLE: usize = 100;

/// Exactly `n_points` camera-frame points from the camera-facing surface
/// of a convex shape, with camera-frame normals.
pub fn render_cloud<R: Rng + ?Sized>(
    shape: &PrimitiveShape,
    cam: &CameraPose,
    n_points: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    assert!(n_points > 0);
    let (points, normals) = surface_sample(shape, n_points * RENDER_OVERSAMPLE, rng);
    let to_cam = cam.to_camera();
    let mut cloud_points = Vec::with_capacity(n_points);
    let mut cloud_normals = Vec::with_capacity(n_points);
    for (p, n) in points.into_iter().zip(normals) {
        if n.dot(cam.position - p) > 0.0 {
            cloud_points.push(to_cam.apply_point(p));
            cloud_normals.push(to_cam.apply_direction(n));
            if cloud_points.len() == n_points {
                break;
            }
        }
    }
    if cloud_points.len() < n_points {
        return Err(Error::Render {
            scene: String::new(),
            reason: format!(
                "only {} of {} visible points after {}x oversampling",
                cloud_points.len(),
                n_points,
                RENDER_OVERSAMPLE
            ),
        });
    }
    Ok(PointCloud {
        points: cloud_points,
        normals: Some(cloud_normals),
        centroid_offset: Vec3::ZERO,
    })
}

/// Shift a cloud so its centroid is at the origin, moving any grasps by
/// the same amount. Returns the shift so it can be inverted later.
pub fn zero_center(cloud: &PointCloud, grasps: &[GraspPose]) -> (PointCloud, Vec<GraspPose>, Vec3) {
    assert!(!cloud.is_empty());
    let centroid = cloud.centroid();
    let centered = PointCloud {
        points: cloud.points.iter().map(|&p| p - centroid).collect(),
        normals: cloud.normals.clone(),
        centroid_offset: cloud.centroid_offset + centroid,
    };
    let shifted = grasps
        .iter()
        .map(|g| GraspPose::new(g.q, g.p - centroid))
        .collect();
    (centered, shifted, centroid)
}

/// Random graspable primitive: every generated shape has at least one
/// closing axis narrower than a default parallel-jaw opening.
pub fn random_graspable_shape<R: Rng + ?Sized>(index: usize, rng: &mut R) -> PrimitiveShape {
    let kind = match index % 3 {
        0 => {
            let thin_a = rng.random_range(0.012..0.035);
            let thin_b = rng.random_range(0.012..0.035);
            let long = rng.random_range(0.02..0.075);
            let mut dims = [thin_a, thin_b, long];
            dims.rotate_left(index % 3);
            ShapeKind::Box(dims)
        }
        1 => ShapeKind::Cylinder([rng.random_range(0.015..0.035), rng.random_range(0.02..0.06)]),
        _ => ShapeKind::Sphere([rng.random_range(0.015..0.035)]),
    };
    let axis = uniform_sphere_dir(rng);
    let angle = rng.random_range(-PI..PI);
    let offset = Vec3::new(
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
    );
    PrimitiveShape::new(kind, UnitQuat::from_axis_angle(axis, angle), offset)
}

/// Camera on a sphere of radius U[0.4, 0.8] m around the target, looking
/// at it.
pub fn random_camera<R: Rng + ?Sized>(target: Vec3, rng: &mut R) -> CameraPose {
    let dir = uniform_sphere_dir(rng);
    let dist = rng.random_range(0.4..0.8);
    CameraPose::look_at(target + dir * dist, target)
}
