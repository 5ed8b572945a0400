//! Small vector helpers shared by the geometric modules.

use nalgebra::{Rotation3, Unit, Vector3};

pub type Vec3 = Vector3<f64>;

pub fn v3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// A unit vector orthogonal to `v` (which need not be normalised).
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let a = v.abs();
    let helper = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    v.cross(&helper).normalize()
}

/// Rotate `v` about the unit direction `axis` by `angle` radians.
pub fn rotate_about(v: &Vec3, axis: &Vec3, angle: f64) -> Vec3 {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle) * v
}

/// Distance from `p` to segment `[a, b]` and the clamped parameter of the foot.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> (f64, f64) {
    let d = b - a;
    let dd = d.norm_squared();
    let t = if dd > 0.0 {
        ((p - a).dot(&d) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((a + d * t - p).norm(), t)
}

/// Minimum distance between segments `[p0, p1]` and `[q0, q1]`.
pub fn segment_segment_distance(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return r.norm();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let s0 = if denom > 1e-300 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// Deterministic, roughly uniform directions on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            v3(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Angle between two vectors in `[0, pi]`, robust near 0 and pi.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}
