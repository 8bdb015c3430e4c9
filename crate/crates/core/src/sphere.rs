//! Geometry of the unit sphere: points, distances, rotations, reflection.
//!
//! Points are stored as Cartesian unit vectors; spherical coordinates are
//! only produced or consumed at I/O boundaries. Longitude is `phi`,
//! latitude is `theta` (so the north pole has `theta = pi/2`).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub const E3: Vec3 = [0.0, 0.0, 1.0];

/// Longitude/latitude pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoords {
    pub phi: f64,
    pub theta: f64,
}

impl SphericalCoords {
    pub fn new(phi: f64, theta: f64) -> Self {
        Self { phi, theta }
    }

    /// Whether the longitude can be recovered from the Cartesian point.
    pub fn is_invertible(&self) -> bool {
        self.theta.abs() < PI / 2.0
    }
}

/// A point of the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct SpherePoint([f64; 3]);

impl TryFrom<Vec3> for SpherePoint {
    type Error = crate::Error;

    fn try_from(v: Vec3) -> Result<Self> {
        SpherePoint::from_cartesian(v)
    }
}

impl From<SpherePoint> for Vec3 {
    fn from(p: SpherePoint) -> Vec3 {
        p.0
    }
}

impl SpherePoint {
    pub const NORTH: SpherePoint = SpherePoint([0.0, 0.0, 1.0]);
    pub const SOUTH: SpherePoint = SpherePoint([0.0, 0.0, -1.0]);

    /// Projects a nonzero vector onto the sphere.
    pub fn from_cartesian(v: Vec3) -> Result<Self> {
        let n = norm(v);
        if !(n.is_finite() && n > 0.0) {
            return invalid(format!("cannot project {v:?} onto the sphere"));
        }
        Ok(Self::normalized(v, n))
    }

    fn normalized(v: Vec3, n: f64) -> Self {
        SpherePoint(scale(1.0 / n, v))
    }

    /// Renormalizes a vector already known to be close to unit length.
    pub(crate) fn renormalize(v: Vec3) -> Self {
        Self::normalized(v, norm(v))
    }

    pub fn from_spherical(c: SphericalCoords) -> Self {
        let (st, ct) = c.theta.sin_cos();
        let (sp, cp) = c.phi.sin_cos();
        Self::renormalize([ct * cp, ct * sp, st])
    }

    /// Longitude in `[0, 2pi)` and latitude in `[-pi/2, pi/2]`.
    pub fn to_spherical(&self) -> SphericalCoords {
        let [x, y, z] = self.0;
        let mut phi = y.atan2(x);
        if phi < 0.0 {
            phi += TAU;
        }
        if phi >= TAU {
            phi -= TAU;
        }
        let theta = z.atan2(x.hypot(y));
        SphericalCoords { phi, theta }
    }

    pub fn xyz(&self) -> Vec3 {
        self.0
    }

    pub fn x3(&self) -> f64 {
        self.0[2]
    }

    /// Euclidean distance in the ambient space.
    pub fn chord(&self, other: &SpherePoint) -> f64 {
        norm(sub(self.0, other.0))
    }

    pub fn chord_sq(&self, other: &SpherePoint) -> f64 {
        let d = sub(self.0, other.0);
        dot(d, d)
    }

    /// Mirror image through the equatorial plane.
    pub fn reflect_equator(&self) -> SpherePoint {
        let [x, y, z] = self.0;
        SpherePoint([x, y, -z])
    }

    pub fn geodesic_distance(&self, other: &SpherePoint) -> f64 {
        geodesic_distance(self, other)
    }
}

/// Great-circle distance, in `[0, pi]`.
///
/// Computed with `atan2(|a x b|, a . b)`, which stays accurate for both
/// nearly coincident and nearly antipodal pairs.
pub fn geodesic_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    let c = cross(a.0, b.0);
    norm(c).atan2(dot(a.0, b.0))
}

/// Geodesic distance corresponding to a chord length, inverting
/// `chord = 2 sin(d/2)`.
pub fn chord_to_geodesic(chord: f64) -> f64 {
    2.0 * (0.5 * chord).clamp(0.0, 1.0).asin()
}

pub fn geodesic_to_chord(d: f64) -> f64 {
    2.0 * (0.5 * d).sin()
}

/// Rodrigues rotation of `x` by `alpha` about the unit axis `axis`.
pub fn rotate(axis: Vec3, alpha: f64, x: &SpherePoint) -> Result<SpherePoint> {
    let n = norm(axis);
    if !((n - 1.0).abs() <= 1e-12) {
        return invalid(format!("rotation axis must be a unit vector, |p| = {n}"));
    }
    Ok(rotate_unchecked(axis, alpha, x))
}

pub(crate) fn rotate_unchecked(axis: Vec3, alpha: f64, x: &SpherePoint) -> SpherePoint {
    let (s, c) = alpha.sin_cos();
    let v = x.0;
    let pxv = cross(axis, v);
    let pdv = dot(axis, v);
    let r = [
        c * v[0] + s * pxv[0] + (1.0 - c) * pdv * axis[0],
        c * v[1] + s * pxv[1] + (1.0 - c) * pdv * axis[1],
        c * v[2] + s * pxv[2] + (1.0 - c) * pdv * axis[2],
    ];
    SpherePoint::renormalize(r)
}

/// Rotation about the polar axis, the symmetry of every functional here.
pub fn rotate_polar(alpha: f64, x: &SpherePoint) -> SpherePoint {
    rotate_unchecked(E3, alpha, x)
}

pub fn reflect_equator(x: &SpherePoint) -> SpherePoint {
    x.reflect_equator()
}

/// Area of a geodesic disk of radius `r`.
pub fn cap_area(r: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&r) {
        return invalid(format!("cap radius {r} outside [0, pi]"));
    }
    Ok(TAU * (1.0 - r.cos()))
}

/// Radius of the geodesic disk with the given area (inverse of [`cap_area`]).
pub fn cap_radius(area: f64) -> Result<f64> {
    if !(0.0..=2.0 * TAU).contains(&area) {
        return invalid(format!("cap area {area} outside [0, 4pi]"));
    }
    Ok((1.0 - area / TAU).clamp(-1.0, 1.0).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        norm(sub(a, b)) <= tol
    }

    fn point() -> impl Strategy<Value = SpherePoint> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-3)
            .prop_map(|(a, b, c)| SpherePoint::from_cartesian([a, b, c]).unwrap())
    }

    #[test]
    fn spherical_axis_cases() {
        let p = SpherePoint::from_spherical(SphericalCoords::new(0.0, 0.0));
        assert!(close(p.xyz(), [1.0, 0.0, 0.0], 1e-15));
        let p = SpherePoint::from_spherical(SphericalCoords::new(PI / 2.0, 0.0));
        assert!(close(p.xyz(), [0.0, 1.0, 0.0], 1e-15));
        let p = SpherePoint::from_spherical(SphericalCoords::new(0.0, PI / 6.0));
        assert!(close(p.xyz(), [3f64.sqrt() / 2.0, 0.0, 0.5], 1e-15));
        assert!(!SphericalCoords::new(0.0, PI / 2.0).is_invertible());
    }

    #[test]
    fn geodesic_examples() {
        let a = SpherePoint::from_spherical(SphericalCoords::new(1.0, 0.3));
        assert_eq!(geodesic_distance(&a, &a), 0.0);
        assert!((geodesic_distance(&SpherePoint::NORTH, &SpherePoint::SOUTH) - PI).abs() < 1e-15);
        assert!((chord_to_geodesic(2.0) - PI).abs() < 1e-15);
        assert!((chord_to_geodesic(2f64.sqrt()) - PI / 2.0).abs() < 1e-15);
        let e = SpherePoint::from_cartesian([1.0, 0.0, 0.0]).unwrap();
        assert!((geodesic_distance(&SpherePoint::NORTH, &e) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_examples() {
        let x = SpherePoint::from_cartesian([1.0, 0.0, 0.0]).unwrap();
        let y = rotate(E3, PI / 2.0, &x).unwrap();
        assert!(close(y.xyz(), [0.0, 1.0, 0.0], 1e-15));
        assert_eq!(rotate(E3, 0.0, &x).unwrap(), x);
        let p = SpherePoint::from_spherical(SphericalCoords::new(0.4, -0.9));
        let mut q = p;
        for _ in 0..3 {
            q = rotate(E3, 2.0 * PI / 3.0, &q).unwrap();
        }
        assert!(close(p.xyz(), q.xyz(), 1e-12));
        assert!(rotate([1.0, 1.0, 0.0], 0.1, &x).is_err());
    }

    #[test]
    fn reflection_examples() {
        assert_eq!(SpherePoint::NORTH.reflect_equator(), SpherePoint::SOUTH);
        let e = SpherePoint::from_cartesian([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(reflect_equator(&e), e);
        let p = SpherePoint::from_spherical(SphericalCoords::new(0.0, PI / 6.0));
        let r = reflect_equator(&p);
        assert!(close(r.xyz(), [3f64.sqrt() / 2.0, 0.0, -0.5], 1e-15));
    }

    #[test]
    fn cap_area_examples() {
        assert!((cap_area(PI / 2.0).unwrap() - TAU).abs() < 1e-14);
        assert!((cap_area(PI).unwrap() - 4.0 * PI).abs() < 1e-14);
        // 2pi (1 - cos 0.3)
        assert!((cap_area(0.3).unwrap() - 0.280_629_115_293_048_2).abs() < 1e-12);
        assert!(cap_area(-0.1).is_err());
        assert!(cap_area(3.5).is_err());
        assert!((cap_radius(cap_area(0.7).unwrap()).unwrap() - 0.7).abs() < 1e-13);
    }

    #[test]
    fn thousand_random_pairs_satisfy_chord_identity() {
        // deterministic LCG so the check does not depend on proptest's runner
        let mut s: u64 = 0x9e3779b97f4a7c15;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..1000 {
            let a = SpherePoint::from_cartesian([next(), next(), next()]).unwrap();
            let b = SpherePoint::from_cartesian([next(), next(), next()]).unwrap();
            let d = geodesic_distance(&a, &b);
            assert!((0.0..=PI).contains(&d));
            assert!((a.chord(&b) - geodesic_to_chord(d)).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rotation_is_an_isometry(axis in point(), alpha in -10.0f64..10.0, a in point(), b in point()) {
            let ra = rotate(axis.xyz(), alpha, &a).unwrap();
            let rb = rotate(axis.xyz(), alpha, &b).unwrap();
            prop_assert!((norm(ra.xyz()) - 1.0).abs() <= 1e-12);
            prop_assert!((ra.chord(&rb) - a.chord(&b)).abs() <= 1e-12);
            let back = rotate(axis.xyz(), -alpha, &ra).unwrap();
            prop_assert!(close(back.xyz(), a.xyz(), 1e-12));
        }

        #[test]
        fn reflection_is_an_involution_commuting_with_polar_rotation(a in point(), alpha in -10.0f64..10.0) {
            prop_assert_eq!(a.reflect_equator().reflect_equator(), a);
            prop_assert!((norm(a.reflect_equator().xyz()) - 1.0).abs() <= 1e-12);
            let lhs = rotate_polar(alpha, &a.reflect_equator());
            let rhs = rotate_polar(alpha, &a).reflect_equator();
            prop_assert!(close(lhs.xyz(), rhs.xyz(), 1e-12));
        }

        #[test]
        fn spherical_round_trip(phi in 0.0f64..TAU, theta in -1.5f64..1.5) {
            let c = SpherePoint::from_spherical(SphericalCoords::new(phi, theta)).to_spherical();
            let dphi = (c.phi - phi).abs();
            prop_assert!(dphi.min(TAU - dphi) <= 1e-12);
            prop_assert!((c.theta - theta).abs() <= 1e-12);
        }
    }
}
