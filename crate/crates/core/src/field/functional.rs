//! Integral functionals of fields: mass, impulse, energy, the objective, the
//! mass center, the support diameter and the weak-form residual.

use rayon::prelude::*;

use super::ScalarField;
use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::sphere::{dot, geodesic_distance, scale, sub, SpherePoint, Vec3};
use crate::sum::exact_sum;

/// `sum v_i w_i`.
pub fn mass(v: &ScalarField) -> f64 {
    let g = v.grid();
    exact_sum(v.values().iter().enumerate().map(|(i, &x)| x * g.weight(i)))
}

/// `sum x3_i v_i w_i`.
pub fn impulse(v: &ScalarField) -> f64 {
    let g = v.grid();
    exact_sum(
        v.values()
            .iter()
            .enumerate()
            .map(|(i, &x)| g.node(i).x3() * x * g.weight(i)),
    )
}

/// `(1/kappa) sum x_i v_i w_i`.
pub fn mass_center(v: &ScalarField) -> Result<Vec3> {
    let m = mass(v);
    if !(m > 0.0) {
        return Err(Error::Degenerate(format!(
            "mass center needs positive mass, got {m}"
        )));
    }
    let g = v.grid();
    let comp = |k: usize| {
        exact_sum(
            v.values()
                .iter()
                .enumerate()
                .map(|(i, &x)| g.node(i).xyz()[k] * x * g.weight(i)),
        )
    };
    Ok([comp(0) / m, comp(1) / m, comp(2) / m])
}

/// Largest geodesic distance between two nodes where `v > threshold`.
pub fn support_diameter(v: &ScalarField, threshold: f64) -> f64 {
    let pts: Vec<SpherePoint> = v
        .support(threshold)
        .into_iter()
        .map(|i| *v.grid().node(i))
        .collect();
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            pts[i + 1..]
                .iter()
                .map(|q| geodesic_distance(&pts[i], q))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `E(v) = (1/2) sum v_i (G+ v)_i w_i`.
pub fn energy(v: &ScalarField, gp: &GreenOperator) -> Result<f64> {
    let gv = gp.apply(v)?;
    Ok(0.5 * v.inner(&gv)?)
}

/// `E(v) - lambda I(v)`.
pub fn objective(v: &ScalarField, lambda: f64, gp: &GreenOperator) -> Result<f64> {
    Ok(energy(v, gp)? - lambda * impulse(v))
}

/// Smooth test function on the hemisphere with a closed-form gradient.
pub trait TestFunction: Sync {
    fn value(&self, x: &SpherePoint) -> f64;
    /// Surface gradient at `x`, tangent to the sphere.
    fn gradient(&self, x: &SpherePoint) -> Vec3;
}

/// `(1 - |x - c|^2 / r^2)^3` inside the chord ball `|x - c| < r`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: SpherePoint,
    /// Chord radius of the support.
    pub radius: f64,
}

impl TestFunction for Bump {
    fn value(&self, x: &SpherePoint) -> f64 {
        let t = 1.0 - x.chord_sq(&self.center) / (self.radius * self.radius);
        if t > 0.0 {
            t * t * t
        } else {
            0.0
        }
    }

    fn gradient(&self, x: &SpherePoint) -> Vec3 {
        let r2 = self.radius * self.radius;
        let t = 1.0 - x.chord_sq(&self.center) / r2;
        if t <= 0.0 {
            return [0.0; 3];
        }
        // tangential part of the ambient gradient of |x - c|^2 is -2 (c - (c.x) x)
        let xv = x.xyz();
        let c = self.center.xyz();
        let tangential = sub(c, scale(dot(c, xv), xv));
        scale(6.0 * t * t / r2, tangential)
    }
}

/// Ten bumps around `center`: one centred with chord radius `2 r`, one
/// centred with radius `r`, and eight of radius `r` on a ring at geodesic
/// distance `r / 2`. Radii are reduced where needed so every support stays
/// clear of the equator.
pub fn bump_battery(center: &SpherePoint, r: f64) -> Vec<Bump> {
    let c = center.to_spherical();
    let mut centers = vec![(*center, 2.0 * r), (*center, r)];
    for k in 0..8 {
        let a = k as f64 * std::f64::consts::FRAC_PI_4;
        let d = 0.5 * r;
        // offset along a great circle leaving the center at bearing a
        let (sd, cd) = d.sin_cos();
        let (st, ct) = c.theta.sin_cos();
        let lat = (st * cd + ct * sd * a.cos()).asin();
        let lon = c.phi + (a.sin() * sd * ct).atan2(cd - st * lat.sin());
        let p = SpherePoint::from_spherical(crate::sphere::SphericalCoords::new(lon, lat));
        centers.push((p, r));
    }
    centers
        .into_iter()
        .map(|(p, rad)| {
            // chord from p to the equator is sqrt(2 (1 - cos theta)), keep 10% margin
            let to_equator = (2.0 * (1.0 - (p.x3().max(0.0)).asin().sin_cos().1)).sqrt();
            Bump {
                center: p,
                radius: rad.min(0.9 * to_equator),
            }
        })
        .collect()
}

/// `int v J grad psi . grad xi` with `psi = G+ v - lambda x3`.
///
/// `grad psi` comes from centred differences on the grid (second order in
/// longitude and, on the nonuniform node latitudes, in latitude; one-sided at
/// the first and last band), `grad xi` from the test function itself.
pub fn weak_residual(
    v: &ScalarField,
    lambda: f64,
    xi: &dyn TestFunction,
    gp: &GreenOperator,
) -> Result<f64> {
    let psi = crate::green::stream_function(v, lambda, gp)?;
    weak_residual_with(v, &psi, xi)
}

/// [`weak_residual`] with the stream function already computed.
pub fn weak_residual_with(
    v: &ScalarField,
    psi: &ScalarField,
    xi: &dyn TestFunction,
) -> Result<f64> {
    v.check_grid(psi)?;
    let g = v.grid();
    let (n_phi, n_theta) = (g.n_phi(), g.n_theta());
    let p = psi.values();
    let at = |b: usize, a: usize| p[b * n_phi + a];
    let terms = v
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, &x)| {
            let (b, a) = (g.band_of(i), g.col_of(i));
            let node = g.node(i);
            let grad = xi.gradient(node);
            if grad == [0.0; 3] {
                return 0.0;
            }
            let d_phi =
                (at(b, (a + 1) % n_phi) - at(b, (a + n_phi - 1) % n_phi)) / (2.0 * g.dphi());
            let d_theta = if n_theta == 1 {
                0.0
            } else {
                let (k0, k1, k2) = if b == 0 {
                    (0, 1, 2.min(n_theta - 1))
                } else if b == n_theta - 1 {
                    (b.saturating_sub(2), b - 1, b)
                } else {
                    (b - 1, b, b + 1)
                };
                three_point_derivative(
                    [g.band_theta(k0), g.band_theta(k1), g.band_theta(k2)],
                    [at(k0, a), at(k1, a), at(k2, a)],
                    g.band_theta(b),
                )
            };
            let (sp, cp) = g.col_phi(a).sin_cos();
            let (st, ct) = (g.band_sin(b), g.band_cos(b));
            let e_phi = [-sp, cp, 0.0];
            let e_theta = [-st * cp, -st * sp, ct];
            let j_grad_psi_dot = d_theta * dot(grad, e_phi) - d_phi / ct * dot(grad, e_theta);
            x * j_grad_psi_dot * g.weight(i)
        });
    Ok(exact_sum(terms.collect::<Vec<_>>()))
}

/// Derivative at `t` of the interpolating quadratic through three samples
/// (two when the abscissae repeat).
fn three_point_derivative(x: [f64; 3], y: [f64; 3], t: f64) -> f64 {
    if x[0] == x[1] || x[1] == x[2] {
        let (i, j) = if x[0] == x[1] { (1, 2) } else { (0, 1) };
        return (y[j] - y[i]) / (x[j] - x[i]);
    }
    let l0 = ((t - x[1]) + (t - x[2])) / ((x[0] - x[1]) * (x[0] - x[2]));
    let l1 = ((t - x[0]) + (t - x[2])) / ((x[1] - x[0]) * (x[1] - x[2]));
    let l2 = ((t - x[0]) + (t - x[1])) / ((x[2] - x[0]) * (x[2] - x[1]));
    l0 * y[0] + l1 * y[1] + l2 * y[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::HemisphereGrid;
    use crate::sphere::{cap_area, rotate_polar, SphericalCoords};
    use std::f64::consts::{FRAC_PI_2, PI, TAU};
    use std::sync::Arc;

    fn grid(n_phi: usize, n_theta: usize) -> Arc<HemisphereGrid> {
        Arc::new(HemisphereGrid::new(n_phi, n_theta).unwrap())
    }

    fn polar_cap(g: &Arc<HemisphereGrid>, r: f64, gamma: f64) -> ScalarField {
        ScalarField::from_fn(g.clone(), |p| if p.x3() > r.cos() { gamma } else { 0.0 })
    }

    #[test]
    fn mass_and_impulse_of_constants() {
        let g = grid(64, 32);
        assert_eq!(mass(&ScalarField::zeros(g.clone())), 0.0);
        assert!((mass(&ScalarField::constant(g.clone(), 1.0)) - TAU).abs() < 1e-12);
        assert_eq!(impulse(&ScalarField::zeros(g.clone())), 0.0);
        let g = grid(128, 64);
        assert!((impulse(&ScalarField::constant(g, 1.0)) - PI).abs() < 1e-6);
    }

    #[test]
    fn patch_mass_within_one_boundary_ring() {
        let g = grid(128, 64);
        let eps = 0.4;
        let gamma = 1.0 / cap_area(eps).unwrap();
        let v = polar_cap(&g, eps, gamma);
        let ring = g.n_phi() as f64 * g.max_cell_area() * gamma;
        assert!((mass(&v) - 1.0).abs() <= ring);
    }

    #[test]
    fn impulse_of_small_polar_patch_tends_to_mass() {
        let g = grid(256, 128);
        let mut prev = f64::INFINITY;
        for eps in [0.4, 0.2, 0.1] {
            let v = polar_cap(&g, eps, 1.0);
            let gap = (1.0 - impulse(&v) / mass(&v)).abs();
            assert!(gap < eps * eps && gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn mass_center_examples() {
        let g = grid(64, 32);
        let v = polar_cap(&g, 0.3, 2.0);
        let c = mass_center(&v).unwrap();
        assert!(c[0].abs() <= 1e-12 && c[1].abs() <= 1e-12);
        assert!((1.0 - c[2]) < 0.3 * 0.3 && c[2] < 1.0);
        let mut w = ScalarField::zeros(g.clone());
        w.values_mut()[777] = 3.0;
        let q = g.node(777).xyz();
        let c = mass_center(&w).unwrap();
        for k in 0..3 {
            assert!((c[k] - q[k]).abs() < 1e-15);
        }
        assert!(matches!(
            mass_center(&ScalarField::zeros(g)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn support_diameter_examples() {
        let g = grid(64, 32);
        let mut v = ScalarField::zeros(g.clone());
        v.values_mut()[100] = 1.0;
        assert_eq!(support_diameter(&v, 0.0), 0.0);
        // radius through a node ring, so the indicator on nodes is exact
        let b = g.n_theta() - 8;
        let r = FRAC_PI_2 - g.band_theta(b);
        let cap = polar_cap(&g, r + 1e-9, 1.0);
        let diag = g.cell_diagonal(b);
        assert!((support_diameter(&cap, 0.0) - 2.0 * r).abs() <= diag);
        let mut two = ScalarField::zeros(g.clone());
        two.values_mut()[0] = 1.0;
        two.values_mut()[32] = 1.0;
        assert!((support_diameter(&two, 0.0) - PI).abs() <= 2.0 * g.dtheta());
    }

    #[test]
    fn shift_preserves_integrals_exactly() {
        let g = grid(48, 24);
        let v = ScalarField::from_fn(g.clone(), |p| {
            let c = p.to_spherical();
            (3.0 * c.phi).sin().abs() * c.theta
        });
        for k in [1, 5, -7, 48] {
            let s = v.shift_phi(k);
            assert_eq!(mass(&s), mass(&v));
            assert_eq!(impulse(&s), impulse(&v));
        }
    }

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let b = Bump {
            center: SpherePoint::from_spherical(SphericalCoords::new(0.3, 0.6)),
            radius: 0.4,
        };
        let x = SpherePoint::from_spherical(SphericalCoords::new(0.4, 0.7));
        let grad = b.gradient(&x);
        assert!(dot(grad, x.xyz()).abs() < 1e-14);
        let h = 1e-6;
        let c = x.to_spherical();
        let f = |phi: f64, th: f64| {
            b.value(&SpherePoint::from_spherical(SphericalCoords::new(phi, th)))
        };
        let d_th = (f(c.phi, c.theta + h) - f(c.phi, c.theta - h)) / (2.0 * h);
        let d_ph = (f(c.phi + h, c.theta) - f(c.phi - h, c.theta)) / (2.0 * h);
        let (sp, cp) = c.phi.sin_cos();
        let (st, ct) = c.theta.sin_cos();
        assert!((dot(grad, [-st * cp, -st * sp, ct]) - d_th).abs() < 1e-8);
        assert!((dot(grad, [-sp, cp, 0.0]) * ct - d_ph).abs() < 1e-8);
    }

    #[test]
    fn battery_stays_clear_of_equator() {
        let c = SpherePoint::from_spherical(SphericalCoords::new(1.0, 0.2));
        let battery = bump_battery(&c, 0.3);
        assert_eq!(battery.len(), 10);
        for b in &battery {
            let lat = b.center.x3().asin();
            let reach = 2.0 * (0.5 * b.radius).asin();
            assert!(reach < lat, "{b:?}");
        }
    }

    #[test]
    fn zonal_field_residual_vanishes_under_refinement() {
        let c = SpherePoint::from_spherical(SphericalCoords::new(0.5, 0.9));
        let xi = Bump {
            center: c,
            radius: 0.5,
        };
        let mut prev = f64::INFINITY;
        for n in [16, 32, 64] {
            let g = grid(2 * n, n);
            let v = ScalarField::from_fn(g.clone(), |p| p.x3() * p.x3());
            let psi = ScalarField::from_fn(g.clone(), |p| (FRAC_PI_2 * p.x3()).sin());
            let r = weak_residual_with(&v, &psi, &xi).unwrap().abs();
            assert!(r < prev.max(1e-15));
            prev = r;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn rotation_of_patch_keeps_functionals() {
        let g = grid(64, 32);
        let c = rotate_polar(
            0.0,
            &SpherePoint::from_spherical(SphericalCoords::new(0.0, 0.7)),
        );
        let v = ScalarField::from_fn(g.clone(), |p| if p.chord(&c) < 0.3 { 1.0 } else { 0.0 });
        let gp = GreenOperator::new(g.clone());
        let s = v.shift_phi(1);
        assert_eq!(
            objective(&s, 0.7, &gp).unwrap(),
            objective(&v, 0.7, &gp).unwrap()
        );
        assert_eq!(
            objective(&ScalarField::zeros(g.clone()), 1.0, &gp).unwrap(),
            0.0
        );
        assert_eq!(objective(&v, 0.0, &gp).unwrap(), energy(&v, &gp).unwrap());
    }
}
