//! Analytic line-primitive intersections and convex overlap tests used by
//! the grasp oracle.
//!
//! Intersections are closed-form per primitive. Overlap between a finger
//! box and a primitive runs GJK on support functions, which is exact for
//! the convex shapes involved.

use crate::geometry::Vec3;
use crate::scene::ShapeKind;

/// An entry/exit pair of a line with a convex surface, with outward
/// normals at the hits. `t_in < t_out` along the line parameter.
#[derive(Clone, Copy, Debug)]
pub struct LineHits {
    pub t_in: f64,
    pub t_out: f64,
    pub normal_in: Vec3,
    pub normal_out: Vec3,
}

const EPS: f64 = 1e-12;

/// Intersect the line `origin + t * dir` (dir unit) with a primitive in
/// its local frame. Returns None when the line misses or only grazes.
pub fn intersect_line(kind: &ShapeKind, origin: Vec3, dir: Vec3) -> Option<LineHits> {
    match *kind {
        ShapeKind::Sphere([r]) => {
            // |o + t d|^2 = r^2
            let b = origin.dot(dir);
            let c = origin.norm_squared() - r * r;
            let disc = b * b - c;
            if disc <= EPS {
                return None;
            }
            let s = disc.sqrt();
            let (t_in, t_out) = (-b - s, -b + s);
            let n = |t: f64| (origin + dir * t) * (1.0 / r);
            Some(LineHits { t_in, t_out, normal_in: n(t_in), normal_out: n(t_out) })
        }
        ShapeKind::Box([a, b, c]) => {
            let half = [a, b, c];
            let o = [origin.x, origin.y, origin.z];
            let d = [dir.x, dir.y, dir.z];
            let axes = [Vec3::X, Vec3::Y, Vec3::Z];
            let mut t_in = f64::NEG_INFINITY;
            let mut t_out = f64::INFINITY;
            let mut n_in = Vec3::X;
            let mut n_out = Vec3::X;
            for i in 0..3 {
                if d[i].abs() < EPS {
                    if o[i].abs() > half[i] {
                        return None;
                    }
                    continue;
                }
                let inv = 1.0 / d[i];
                let mut t0 = (-half[i] - o[i]) * inv;
                let mut t1 = (half[i] - o[i]) * inv;
                let mut axis = axes[i] * -1.0;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                    axis = axes[i];
                }
                if t0 > t_in {
                    t_in = t0;
                    n_in = axis;
                }
                if t1 < t_out {
                    t_out = t1;
                    n_out = -axis;
                }
            }
            if t_out - t_in <= EPS || t_in == f64::NEG_INFINITY {
                return None;
            }
            Some(LineHits { t_in, t_out, normal_in: n_in, normal_out: n_out })
        }
        ShapeKind::Cylinder([r, h]) => {
            // Collect candidate hits on the lateral surface and caps,
            // then keep the extremes.
            let mut hits: Vec<(f64, Vec3)> = Vec::with_capacity(4);
            let a = dir.x * dir.x + dir.y * dir.y;
            if a > EPS {
                let b = origin.x * dir.x + origin.y * dir.y;
                let c = origin.x * origin.x + origin.y * origin.y - r * r;
                let disc = b * b - a * c;
                if disc > 0.0 {
                    let s = disc.sqrt();
                    for t in [(-b - s) / a, (-b + s) / a] {
                        let p = origin + dir * t;
                        if p.z.abs() <= h + EPS {
                            hits.push((t, Vec3::new(p.x / r, p.y / r, 0.0)));
                        }
                    }
                }
            } else if origin.x * origin.x + origin.y * origin.y > r * r {
                return None;
            }
            if dir.z.abs() > EPS {
                for sign in [1.0, -1.0] {
                    let t = (sign * h - origin.z) / dir.z;
                    let p = origin + dir * t;
                    if p.x * p.x + p.y * p.y <= r * r + EPS {
                        hits.push((t, Vec3::new(0.0, 0.0, sign)));
                    }
                }
            }
            if hits.len() < 2 {
                return None;
            }
            hits.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (t_in, normal_in) = hits[0];
            let (t_out, normal_out) = *hits.last().unwrap();
            if t_out - t_in <= EPS {
                return None;
            }
            Some(LineHits { t_in, t_out, normal_in, normal_out })
        }
    }
}

/// Oriented box described by center, half-extents, and orthonormal axes.
#[derive(Clone, Copy, Debug)]
pub struct OrientedBox {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub axes: [Vec3; 3],
}

impl OrientedBox {
    fn support(&self, d: Vec3) -> Vec3 {
        let mut p = self.center;
        let he = [self.half_extents.x, self.half_extents.y, self.half_extents.z];
        for (axis, h) in self.axes.iter().zip(he) {
            p = p + *axis * (h * d.dot(*axis).signum());
        }
        p
    }

    pub fn inflated(&self, margin: f64) -> OrientedBox {
        OrientedBox {
            center: self.center,
            half_extents: Vec3::new(
                self.half_extents.x + margin,
                self.half_extents.y + margin,
                self.half_extents.z + margin,
            ),
            axes: self.axes,
        }
    }
}

fn support_primitive(kind: &ShapeKind, d: Vec3) -> Vec3 {
    match *kind {
        ShapeKind::Sphere([r]) => {
            let n = d.norm();
            if n < EPS {
                Vec3::new(r, 0.0, 0.0)
            } else {
                d * (r / n)
            }
        }
        ShapeKind::Box([a, b, c]) => {
            Vec3::new(a * d.x.signum(), b * d.y.signum(), c * d.z.signum())
        }
        ShapeKind::Cylinder([r, h]) => {
            let radial = (d.x * d.x + d.y * d.y).sqrt();
            let xy = if radial < EPS {
                Vec3::ZERO
            } else {
                Vec3::new(d.x * r / radial, d.y * r / radial, 0.0)
            };
            Vec3::new(xy.x, xy.y, h * d.z.signum())
        }
    }
}

/// GJK boolean intersection between a primitive (local frame) and an
/// oriented box expressed in the same frame.
pub fn primitive_intersects_box(kind: &ShapeKind, obb: &OrientedBox) -> bool {
    let support = |d: Vec3| support_primitive(kind, d) - obb.support(-d);
    let mut dir = obb.center * -1.0;
    if dir.norm_squared() < EPS {
        dir = Vec3::X;
    }
    let mut simplex: Vec<Vec3> = Vec::with_capacity(4);
    simplex.push(support(dir));
    dir = -simplex[0];
    for _ in 0..64 {
        if dir.norm_squared() < EPS {
            // Origin on the simplex boundary: touching counts as overlap.
            return true;
        }
        let a = support(dir);
        if a.dot(dir) < 0.0 {
            return false;
        }
        simplex.push(a);
        if next_simplex(&mut simplex, &mut dir) {
            return true;
        }
    }
    true
}

fn next_simplex(simplex: &mut Vec<Vec3>, dir: &mut Vec3) -> bool {
    match simplex.len() {
        2 => {
            let (a, b) = (simplex[1], simplex[0]);
            let ab = b - a;
            let ao = -a;
            if ab.dot(ao) > 0.0 {
                *dir = ab.cross(ao).cross(ab);
            } else {
                simplex.remove(0);
                *dir = ao;
            }
            false
        }
        3 => triangle_case(simplex, dir),
        4 => tetrahedron_case(simplex, dir),
        _ => unreachable!("simplex size"),
    }
}

fn triangle_case(simplex: &mut Vec<Vec3>, dir: &mut Vec3) -> bool {
    let (a, b, c) = (simplex[2], simplex[1], simplex[0]);
    let ab = b - a;
    let ac = c - a;
    let ao = -a;
    let abc = ab.cross(ac);
    if abc.cross(ac).dot(ao) > 0.0 {
        if ac.dot(ao) > 0.0 {
            *simplex = vec![c, a];
            *dir = ac.cross(ao).cross(ac);
        } else {
            *simplex = vec![b, a];
            return next_simplex(simplex, dir);
        }
    } else if ab.cross(abc).dot(ao) > 0.0 {
        *simplex = vec![b, a];
        return next_simplex(simplex, dir);
    } else if abc.dot(ao) > 0.0 {
        *dir = abc;
    } else {
        *simplex = vec![b, c, a];
        *dir = -abc;
    }
    false
}

fn tetrahedron_case(simplex: &mut Vec<Vec3>, dir: &mut Vec3) -> bool {
    let (a, b, c, d) = (simplex[3], simplex[2], simplex[1], simplex[0]);
    let ao = -a;
    let abc = (b - a).cross(c - a);
    let acd = (c - a).cross(d - a);
    let adb = (d - a).cross(b - a);
    if abc.dot(ao) > 0.0 {
        *simplex = vec![c, b, a];
        return triangle_case(simplex, dir);
    }
    if acd.dot(ao) > 0.0 {
        *simplex = vec![d, c, a];
        return triangle_case(simplex, dir);
    }
    if adb.dot(ao) > 0.0 {
        *simplex = vec![b, d, a];
        return triangle_case(simplex, dir);
    }
    true
}
