//! Arrival-direction geometry.
//!
//! Directions are unit vectors in a right-handed frame: x points to azimuth 0
//! on the horizon, y to azimuth 90 degrees, z to zenith.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

const UNIT_TOL: f64 = 1e-9;

/// Unit vector of a plane wave arriving from azimuth `aoa` and elevation `eoa`.
pub fn direction_vector(aoa: f64, eoa: f64) -> Vec3 {
    let (sa, ca) = aoa.sin_cos();
    let (se, ce) = eoa.sin_cos();
    [ca * ce, sa * ce, se]
}

/// Inverse of [`direction_vector`]. Azimuth is returned in `[0, 2π)`.
pub fn vector_angles(v: Vec3) -> (f64, f64) {
    let horiz = v[0].hypot(v[1]);
    let eoa = v[2].atan2(horiz);
    let aoa = if horiz == 0.0 {
        0.0
    } else {
        wrap_azimuth(v[1].atan2(v[0]))
    };
    (aoa, eoa)
}

pub fn dot(u: Vec3, v: Vec3) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

pub fn norm(u: Vec3) -> f64 {
    dot(u, u).sqrt()
}

pub fn distance(u: Vec3, v: Vec3) -> f64 {
    norm([u[0] - v[0], u[1] - v[1], u[2] - v[2]])
}

/// Angle between two unit vectors, in `[0, π]`.
pub fn angle_between(u: Vec3, v: Vec3) -> Result<f64> {
    for w in [u, v] {
        let n = norm(w);
        if !((n - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::Contract(format!(
                "angle_between expects unit vectors, got norm {n}"
            )));
        }
    }
    Ok(angle_between_unchecked(u, v))
}

/// Angle between unit vectors without the norm check.
///
/// Uses `atan2(|u × v|, u · v)`, which equals `acos(clamp(u · v))` but keeps
/// full precision near 0 and π.
pub fn angle_between_unchecked(u: Vec3, v: Vec3) -> f64 {
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    norm(cross).atan2(dot(u, v).clamp(-1.0, 1.0))
}

/// Maps any azimuth onto `[0, 2π)`.
pub fn wrap_azimuth(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed difference `a - b` mapped onto `(-π, π]`.
pub fn azimuth_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}
