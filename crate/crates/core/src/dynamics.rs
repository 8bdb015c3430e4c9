//! Regularized particle evolution of patch vorticity on the northern
//! hemisphere.
//!
//! Each particle carries a fixed circulation and is advected by the smoothed
//! odd-symmetric kernel
//! `K_d(x, y) = (1/4pi) ln((|x - y'|^2 + d^2) / (|x - y|^2 + d^2))`,
//! where `y'` is the equatorial mirror of `y`. The smoothing enters source and
//! image alike, so `K_d` vanishes on the equator and the equator stays a
//! streamline. The particle system is Hamiltonian with
//! `H = (1/2) sum_ij G_i G_j K_d(x_i, x_j)`, the `i = j` terms being the pull of
//! each particle's own image.

use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{mass, HemisphereGrid, ScalarField};
use crate::maximizer::rotation_orbit_distance;
use crate::sphere::{
    add, cross, dot, norm, rotate_polar, rotate_unchecked, scale, sub, SpherePoint, Vec3, E3,
};
use crate::sum::exact_sum;

const INV_2PI: f64 = 1.0 / TAU;
const INV_4PI: f64 = 0.5 / TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: SpherePoint,
    pub circulation: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleField {
    particles: Vec<Particle>,
    delta: f64,
    omega_frame: f64,
    grid: Arc<HemisphereGrid>,
}

impl ParticleField {
    /// Particles strictly inside the northern hemisphere, smoothing length
    /// `delta > 0`, and the grid used for deposition.
    pub fn new(
        particles: Vec<Particle>,
        delta: f64,
        omega_frame: f64,
        grid: Arc<HemisphereGrid>,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return invalid(format!("smoothing length must be positive, got {delta}"));
        }
        if !omega_frame.is_finite() {
            return invalid("frame rate must be finite");
        }
        if let Some(i) = particles.iter().position(|p| !(p.position.x3() > 0.0)) {
            return Err(Error::EquatorCrossing {
                particle: i,
                t: 0.0,
            });
        }
        Ok(Self {
            particles,
            delta,
            omega_frame,
            grid,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn omega_frame(&self) -> f64 {
        self.omega_frame
    }

    pub fn grid(&self) -> &Arc<HemisphereGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return invalid(format!("smoothing length must be positive, got {delta}"));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn with_omega(mut self, omega_frame: f64) -> Result<Self> {
        if !omega_frame.is_finite() {
            return invalid("frame rate must be finite");
        }
        self.omega_frame = omega_frame;
        Ok(self)
    }

    pub fn circulation(&self) -> f64 {
        exact_sum(self.particles.iter().map(|p| p.circulation))
    }

    /// `sum G_i x3_i`.
    pub fn impulse(&self) -> f64 {
        exact_sum(
            self.particles
                .iter()
                .map(|p| p.circulation * p.position.x3()),
        )
    }

    /// `sum G_i x_i / sum G_i`.
    pub fn mass_center(&self) -> Result<Vec3> {
        let m = self.circulation();
        if !(m > 0.0) {
            return Err(Error::Degenerate(format!(
                "mass center needs positive circulation, got {m}"
            )));
        }
        Ok([0, 1, 2].map(|a| {
            exact_sum(
                self.particles
                    .iter()
                    .map(|p| p.circulation * p.position.xyz()[a]),
            ) / m
        }))
    }

    /// Largest geodesic distance from a particle to the projected mass center.
    pub fn support_radius(&self) -> Result<f64> {
        let c = SpherePoint::from_cartesian(self.mass_center()?)?;
        Ok(self
            .particles
            .iter()
            .map(|p| p.position.geodesic_distance(&c))
            .fold(0.0, f64::max))
    }

    /// Rigid rotation of every particle about the polar axis.
    pub fn rotated(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.particles {
            p.position = rotate_polar(alpha, &p.position);
        }
        out
    }

    /// Moves every `every`-th particle (starting with the first) towards the
    /// pole by geodesic `distance`, continuing over the pole if needed.
    pub fn displaced_poleward(&self, every: usize, distance: f64) -> Result<Self> {
        if every == 0 {
            return invalid("displacement stride must be at least 1");
        }
        let mut out = self.clone();
        for p in out.particles.iter_mut().step_by(every) {
            let x = p.position.xyz();
            let a = cross(x, E3);
            let n = norm(a);
            if n == 0.0 {
                continue;
            }
            p.position = rotate_unchecked(scale(1.0 / n, a), distance, &p.position);
        }
        if let Some(i) = out.particles.iter().position(|p| !(p.position.x3() > 0.0)) {
            return Err(Error::EquatorCrossing {
                particle: i,
                t: 0.0,
            });
        }
        Ok(out)
    }
}

/// One particle per positive cell of `v`, at the node, carrying `v_i w_i`.
/// The smoothing length is twice the largest cell diagonal over the support.
pub fn discretize(v: &ScalarField) -> Result<ParticleField> {
    if !v.is_nonnegative() {
        return invalid("particle discretization needs a nonnegative field");
    }
    let m = mass(v);
    if !(m > 0.0) {
        return Err(Error::Degenerate(format!("field has no mass ({m})")));
    }
    let g = v.grid();
    let support = v.support(0.0);
    let particles: Vec<Particle> = support
        .iter()
        .map(|&i| Particle {
            position: *g.node(i),
            circulation: v.values()[i] * g.weight(i),
        })
        .collect();
    let delta = 2.0
        * support
            .iter()
            .map(|&i| g.cell_diagonal(g.band_of(i)))
            .fold(0.0, f64::max);
    ParticleField::new(particles, delta, 0.0, g.clone())
}

/// Smoothed kernel `K_d(x, y)`.
pub fn regularized_kernel(x: &SpherePoint, y: &SpherePoint, delta: f64) -> f64 {
    let d2 = delta * delta;
    INV_4PI * (4.0 * x.x3() * y.x3() / (x.chord_sq(y) + d2)).ln_1p()
}

/// Velocity at `x` induced by a unit particle at `y` and its negative mirror
/// image, both smoothed by `delta`.
pub fn regularized_velocity_kernel(x: &SpherePoint, y: &SpherePoint, delta: f64) -> Vec3 {
    velocity_raw(x.xyz(), y.xyz(), delta * delta)
}

#[inline]
fn velocity_raw(x: Vec3, y: Vec3, d2: f64) -> Vec3 {
    let yr = [y[0], y[1], -y[2]];
    let a = sub(x, y);
    let b = sub(x, yr);
    let direct = scale(INV_2PI / (dot(a, a) + d2), cross(y, x));
    let image = scale(INV_2PI / (dot(b, b) + d2), cross(yr, x));
    sub(direct, image)
}

fn field_velocity(x: Vec3, pos: &[Vec3], gam: &[f64], d2: f64, omega: f64) -> Vec3 {
    let mut v = scale(-omega, cross(E3, x));
    for (&y, &g) in pos.iter().zip(gam) {
        v = add(v, scale(g, velocity_raw(x, y, d2)));
    }
    v
}

/// Velocity of the particle field at an arbitrary point, frame term included.
pub fn particle_velocity(pf: &ParticleField, x: &SpherePoint) -> Vec3 {
    let pos: Vec<Vec3> = pf.particles.iter().map(|p| p.position.xyz()).collect();
    let gam: Vec<f64> = pf.particles.iter().map(|p| p.circulation).collect();
    field_velocity(x.xyz(), &pos, &gam, pf.delta * pf.delta, pf.omega_frame)
}

fn all_velocities(pos: &[Vec3], gam: &[f64], d2: f64, omega: f64) -> Vec<Vec3> {
    pos.par_iter()
        .map(|&x| field_velocity(x, pos, gam, d2, omega))
        .collect()
}

/// `(1/2) sum_ij G_i G_j K_d(x_i, x_j)`.
pub fn energy_surrogate(pf: &ParticleField) -> f64 {
    let p = &pf.particles;
    let d = pf.delta;
    let rows: Vec<f64> = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let gi = p[i].circulation;
            let mut terms = Vec::with_capacity(p.len() - i);
            terms.push(0.5 * gi * gi * regularized_kernel(&p[i].position, &p[i].position, d));
            for q in &p[i + 1..] {
                terms.push(gi * q.circulation * regularized_kernel(&p[i].position, &q.position, d));
            }
            exact_sum(terms)
        })
        .collect();
    exact_sum(rows)
}

/// Nearest-cell deposition: each particle's circulation is spread uniformly
/// over the cell containing it.
pub fn deposit(pf: &ParticleField, grid: &Arc<HemisphereGrid>) -> Result<ScalarField> {
    let mut hits: Vec<(usize, f64)> = Vec::with_capacity(pf.len());
    for (k, p) in pf.particles.iter().enumerate() {
        let i = grid.locate(&p.position).ok_or(Error::EquatorCrossing {
            particle: k,
            t: f64::NAN,
        })?;
        hits.push((i, p.circulation));
    }
    hits.sort_by_key(|h| h.0);
    let mut values = vec![0.0; grid.len()];
    for run in hits.chunk_by(|a, b| a.0 == b.0) {
        let i = run[0].0;
        values[i] = exact_sum(run.iter().map(|h| h.1)) / grid.weight(i);
    }
    ScalarField::new(grid.clone(), values)
}

/// Orbit distance to `reference` produced by deposition alone: the largest
/// value over rigid rotations of the particles by eighths of a column, each
/// of which is an exact symmetry of the dynamics.
pub fn deposition_floor(pf: &ParticleField, reference: &ScalarField, p: f64) -> Result<f64> {
    let g = reference.grid();
    let mut worst: f64 = 0.0;
    for k in 0..8 {
        let moved = pf.rotated(g.dphi() * k as f64 / 8.0);
        worst = worst.max(rotation_orbit_distance(&deposit(&moved, g)?, reference, p)?);
    }
    Ok(worst)
}

/// What to record along a run.
#[derive(Debug, Clone)]
pub struct Monitors {
    /// Rotation rate in the objective surrogate `E - lambda sum G_i x3_i`.
    pub lambda: f64,
    /// Field whose rotation orbit the particles are compared against.
    pub reference: Option<ScalarField>,
    /// Exponent of the orbit distance.
    pub p: f64,
    /// Record every `stride`-th step and the last one.
    pub stride: usize,
}

impl Monitors {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            reference: None,
            p: 1.0,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSample {
    pub t: f64,
    pub circulation: f64,
    pub energy_surrogate: f64,
    pub objective_surrogate: f64,
    pub mass_center: Vec3,
    pub x3_center: f64,
    pub support_radius: f64,
    pub orbit_distance: Option<f64>,
}

#[derive(Debug)]
pub struct Evolution {
    /// Step actually taken: `T / ceil(T / dt)`.
    pub dt: f64,
    pub delta: f64,
    pub particle_count: usize,
    pub samples: Vec<DynamicsSample>,
    pub final_state: ParticleField,
    /// Set when a particle reached the equator; samples up to then are kept.
    pub abort: Option<Error>,
}

impl Evolution {
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.samples.first().map_or(0.0, |s| s.energy_surrogate);
        self.samples
            .iter()
            .map(|s| (s.energy_surrogate - e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn objective_drift(&self) -> f64 {
        let e0 = self.samples.first().map_or(0.0, |s| s.objective_surrogate);
        self.samples
            .iter()
            .map(|s| (s.objective_surrogate - e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_orbit_distance(&self) -> Option<f64> {
        self.samples
            .iter()
            .filter_map(|s| s.orbit_distance)
            .reduce(f64::max)
    }
}

fn sample(pf: &ParticleField, t: f64, mon: &Monitors) -> Result<DynamicsSample> {
    let e = energy_surrogate(pf);
    let mc = pf.mass_center()?;
    let orbit = match &mon.reference {
        Some(r) => Some(rotation_orbit_distance(&deposit(pf, r.grid())?, r, mon.p)?),
        None => None,
    };
    Ok(DynamicsSample {
        t,
        circulation: pf.circulation(),
        energy_surrogate: e,
        objective_surrogate: e - mon.lambda * pf.impulse(),
        mass_center: mc,
        x3_center: mc[2],
        support_radius: pf.support_radius()?,
        orbit_distance: orbit,
    })
}

/// RK4 evolution over `[0, t_end]` with `ceil(t_end / dt)` equal steps.
pub fn evolve(pf: &ParticleField, t_end: f64, dt: f64, mon: &Monitors) -> Result<Evolution> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= dt && t_end.is_finite()) {
        return invalid(format!("need 0 < dt <= T, got dt = {dt}, T = {t_end}"));
    }
    if mon.stride == 0 {
        return invalid("stride must be at least 1");
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let d2 = pf.delta * pf.delta;
    let omega = pf.omega_frame;
    let gam: Vec<f64> = pf.particles.iter().map(|p| p.circulation).collect();
    let mut state = pf.clone();
    let mut out = Evolution {
        dt: h,
        delta: pf.delta,
        particle_count: pf.len(),
        samples: vec![sample(&state, 0.0, mon)?],
        final_state: pf.clone(),
        abort: None,
    };
    let mut x: Vec<Vec3> = pf.particles.iter().map(|p| p.position.xyz()).collect();
    for n in 1..=steps {
        let axpy = |a: f64, d: &[Vec3]| -> Vec<Vec3> {
            x.iter()
                .zip(d)
                .map(|(&xi, &di)| add(xi, scale(a, di)))
                .collect()
        };
        let k1 = all_velocities(&x, &gam, d2, omega);
        let k2 = all_velocities(&axpy(0.5 * h, &k1), &gam, d2, omega);
        let k3 = all_velocities(&axpy(0.5 * h, &k2), &gam, d2, omega);
        let k4 = all_velocities(&axpy(h, &k3), &gam, d2, omega);
        let t = if n == steps { t_end } else { n as f64 * h };
        let mut crossed = None;
        for (i, p) in state.particles.iter_mut().enumerate() {
            let s = add(add(k1[i], scale(2.0, k2[i])), add(scale(2.0, k3[i]), k4[i]));
            p.position = SpherePoint::renormalize(add(x[i], scale(h / 6.0, s)));
            if crossed.is_none() && !(p.position.x3() > 0.0) {
                crossed = Some(i);
            }
        }
        if let Some(particle) = crossed {
            log::warn!("particle {particle} reached the equator at t = {t}");
            out.abort = Some(Error::EquatorCrossing { particle, t });
            return Ok(out);
        }
        x = state.particles.iter().map(|p| p.position.xyz()).collect();
        out.final_state = state.clone();
        if n % mon.stride == 0 || n == steps {
            out.samples.push(sample(&state, t, mon)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mass_center;
    use crate::green::velocity_kernel;
    use crate::sphere::SphericalCoords;
    use std::f64::consts::{FRAC_PI_6, PI};

    fn cap_field(n_phi: usize, n_theta: usize, theta0: f64, r: f64, gamma: f64) -> ScalarField {
        let g = Arc::new(HemisphereGrid::new(n_phi, n_theta).unwrap());
        let c = SpherePoint::from_spherical(SphericalCoords::new(PI, theta0));
        let v = ScalarField::from_fn(g, |p| {
            if p.geodesic_distance(&c) < r {
                1.0
            } else {
                0.0
            }
        });
        let m = mass(&v);
        v.scale(gamma / m)
    }

    fn lon(x: Vec3) -> f64 {
        x[1].atan2(x[0])
    }

    #[test]
    fn discretization_keeps_mass_and_center() {
        let v = cap_field(96, 48, 0.6, 0.2, 1.0);
        let pf = discretize(&v).unwrap();
        assert_eq!(pf.len(), v.support(0.0).len());
        assert_eq!(pf.circulation(), mass(&v));
        let (a, b) = (pf.mass_center().unwrap(), mass_center(&v).unwrap());
        assert!(norm(sub(a, b)) < 1e-12);
        assert!(matches!(
            discretize(&v.scale(0.0)),
            Err(Error::Degenerate(_))
        ));
        assert!(discretize(&v.scale(-1.0)).is_err());
    }

    #[test]
    fn far_field_matches_point_kernel() {
        let y = SpherePoint::from_spherical(SphericalCoords::new(0.0, 0.5));
        let x = SpherePoint::from_spherical(SphericalCoords::new(1.0, 0.7));
        let exact = velocity_kernel(&x, &y).unwrap();
        let smooth = regularized_velocity_kernel(&x, &y, 1e-3);
        let rel = norm(sub(exact, smooth)) / norm(exact);
        assert!(rel < 2e-6, "{rel:e}");
    }

    #[test]
    fn equatorial_source_induces_nothing() {
        let x = SpherePoint::from_spherical(SphericalCoords::new(0.3, 0.4));
        let y = SpherePoint::from_spherical(SphericalCoords::new(1.3, 0.0));
        assert_eq!(regularized_velocity_kernel(&x, &y, 0.05), [0.0; 3]);
        assert_eq!(regularized_kernel(&x, &y, 0.05), 0.0);
    }

    #[test]
    fn empty_field_rotates_rigidly() {
        let g = Arc::new(HemisphereGrid::new(8, 4).unwrap());
        let pf = ParticleField::new(vec![], 0.1, 0.8, g).unwrap();
        let x = SpherePoint::from_spherical(SphericalCoords::new(0.3, 0.4));
        let v = particle_velocity(&pf, &x);
        let expect = scale(-0.8, cross(E3, x.xyz()));
        assert!(norm(sub(v, expect)) < 1e-16);
    }

    #[test]
    fn deposition_is_mass_exact_and_inverts_discretization() {
        let v = cap_field(64, 32, 0.7, 0.25, 1.0);
        let pf = discretize(&v).unwrap();
        let back = deposit(&pf, v.grid()).unwrap();
        assert!(rotation_orbit_distance(&back, &v, 1.0).unwrap() < 1e-15);
        let moved = deposit(&pf.rotated(0.37), v.grid()).unwrap();
        assert!((mass(&moved) - mass(&v)).abs() < 1e-15);
        assert!(deposition_floor(&pf, &v, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn small_patch_rotates_at_pair_rate() {
        let gamma = 1.0;
        let v = cap_field(192, 96, FRAC_PI_6, 0.06, gamma);
        let pf = discretize(&v).unwrap();
        let c0 = pf.mass_center().unwrap();
        let theta0 = (c0[2] / norm(c0)).asin();
        let rate = gamma / (2.0 * TAU * theta0.sin());
        let t_end = 2.0;
        let mut mon = Monitors::new(rate);
        mon.stride = 10;
        let ev = evolve(&pf, t_end, 0.02, &mon).unwrap();
        assert!(ev.abort.is_none());
        let mut turned = 0.0;
        for w in ev.samples.windows(2) {
            let d = lon(w[1].mass_center) - lon(w[0].mass_center);
            turned += (d + PI).rem_euclid(TAU) - PI;
        }
        let measured = turned / t_end;
        assert!((measured / rate - 1.0).abs() < 0.05, "{measured} vs {rate}");
        for s in &ev.samples {
            assert!((s.x3_center - c0[2]).abs() < 1e-3);
            assert_eq!(s.circulation, ev.samples[0].circulation);
        }
    }

    #[test]
    fn invariants_drift_at_fourth_order() {
        let v = cap_field(64, 32, 0.8, 0.3, 1.0);
        let pf = discretize(&v).unwrap();
        let mon = Monitors::new(0.5);
        let d1 = evolve(&pf, 1.0, 0.1, &mon).unwrap();
        let d2 = evolve(&pf, 1.0, 0.05, &mon).unwrap();
        let order = (d1.energy_drift() / d2.energy_drift()).log2();
        assert!(
            order >= 3.5,
            "{:e} -> {:e}",
            d1.energy_drift(),
            d2.energy_drift()
        );
        let rel = d2.objective_drift() / d2.samples[0].objective_surrogate.abs();
        assert!(rel < 1e-6, "{rel:e}");
    }

    #[test]
    fn poleward_displacement_moves_every_kth_particle() {
        let v = cap_field(32, 16, 0.6, 0.3, 1.0);
        let pf = discretize(&v).unwrap();
        let moved = pf.displaced_poleward(20, 0.1).unwrap();
        for (k, (a, b)) in pf.particles().iter().zip(moved.particles()).enumerate() {
            let d = a.position.geodesic_distance(&b.position);
            if k % 20 == 0 {
                assert!((d - 0.1).abs() < 1e-12);
                assert!(b.position.x3() > a.position.x3());
            } else {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn crossing_the_equator_aborts() {
        let g = Arc::new(HemisphereGrid::new(8, 4).unwrap());
        let at = |phi: f64, theta: f64, c: f64| Particle {
            position: SpherePoint::from_spherical(SphericalCoords::new(phi, theta)),
            circulation: c,
        };
        let pf = ParticleField::new(vec![at(0.0, 1e-4, 1.0), at(0.02, 0.02, 50.0)], 1e-3, 0.0, g)
            .unwrap();
        let ev = evolve(&pf, 1.0, 0.05, &Monitors::new(1.0)).unwrap();
        assert!(
            matches!(ev.abort, Some(Error::EquatorCrossing { particle: 0, .. })),
            "{:?}",
            ev.abort
        );
        assert!(!ev.samples.is_empty());
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Arc::new(HemisphereGrid::new(8, 4).unwrap());
        assert!(ParticleField::new(vec![], 0.0, 0.0, g.clone()).is_err());
        let eq = Particle {
            position: SpherePoint::from_spherical(SphericalCoords::new(0.0, 0.0)),
            circulation: 1.0,
        };
        assert!(matches!(
            ParticleField::new(vec![eq], 0.1, 0.0, g.clone()),
            Err(Error::EquatorCrossing { .. })
        ));
        let pf = ParticleField::new(vec![], 0.1, 0.0, g).unwrap();
        assert!(evolve(&pf, 1.0, 0.0, &Monitors::new(1.0)).is_err());
    }
}
