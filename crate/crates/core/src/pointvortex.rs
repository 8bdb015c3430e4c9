//! Point vortices on the sphere, in a fixed or rotating frame.
//!
//! The vector field is `dx_i/dt = sum_{j != i} (k_j / 2pi) (x_j x x_i) / |x_i - x_j|^2
//! - Omega e3 x x_i`. Integration is classical RK4 with every position pulled
//! back to the sphere after each step.

use std::f64::consts::{FRAC_1_PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sphere::{add, cross, dot, norm, scale, sub, SpherePoint, Vec3, E3};
use crate::sum::exact_sum;

/// Smallest chord separation tolerated during integration.
pub const MIN_SEPARATION: f64 = 1e-8;

/// Smallest chord separation accepted for an initial configuration.
pub const MIN_DISTINCT: f64 = 1e-10;

const PAR_THRESHOLD: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexConfiguration {
    positions: Vec<SpherePoint>,
    strengths: Vec<f64>,
    omega_frame: f64,
}

impl VortexConfiguration {
    pub fn new(positions: Vec<SpherePoint>, strengths: Vec<f64>, omega_frame: f64) -> Result<Self> {
        if positions.len() != strengths.len() {
            return invalid(format!(
                "{} positions but {} strengths",
                positions.len(),
                strengths.len()
            ));
        }
        if !omega_frame.is_finite() || strengths.iter().any(|k| !k.is_finite()) {
            return invalid("strengths and frame rate must be finite");
        }
        let cfg = Self {
            positions,
            strengths,
            omega_frame,
        };
        if let Some((i, j, c)) = cfg.closest_pair() {
            if c <= MIN_DISTINCT {
                return Err(Error::Singular(format!(
                    "vortices {i} and {j} are {c:e} apart"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn positions(&self) -> &[SpherePoint] {
        &self.positions
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn omega_frame(&self) -> f64 {
        self.omega_frame
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same vortices with all strengths and the frame rate negated: the
    /// time-reversed system.
    pub fn reversed(&self) -> Self {
        Self {
            positions: self.positions.clone(),
            strengths: self.strengths.iter().map(|k| -k).collect(),
            omega_frame: -self.omega_frame,
        }
    }

    pub fn with_positions(&self, positions: Vec<SpherePoint>) -> Result<Self> {
        Self::new(positions, self.strengths.clone(), self.omega_frame)
    }

    /// `(i, j, chord)` of the closest pair, if there are at least two vortices.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let c = self.positions[i].chord(&self.positions[j]);
                if best.map_or(true, |b| c < b.2) {
                    best = Some((i, j, c));
                }
            }
        }
        best
    }
}

fn velocities(x: &[Vec3], k: &[f64], omega: f64, guard: f64) -> Result<Vec<Vec3>> {
    let one = |i: usize| -> Result<Vec3> {
        let xi = x[i];
        let mut v = scale(-omega, cross(E3, xi));
        for (j, (&xj, &kj)) in x.iter().zip(k).enumerate() {
            if j == i {
                continue;
            }
            let d = sub(xi, xj);
            let c2 = dot(d, d);
            if !(c2 > guard * guard) {
                return Err(Error::Singular(format!(
                    "vortices {i} and {j} within chord {:e}",
                    c2.sqrt()
                )));
            }
            v = add(v, scale(kj * 0.5 * FRAC_1_PI / c2, cross(xj, xi)));
        }
        Ok(v)
    };
    if x.len() >= PAR_THRESHOLD {
        (0..x.len()).into_par_iter().map(one).collect()
    } else {
        (0..x.len()).map(one).collect()
    }
}

/// Velocity of every vortex.
pub fn rhs(config: &VortexConfiguration) -> Result<Vec<Vec3>> {
    let x: Vec<Vec3> = config.positions.iter().map(|p| p.xyz()).collect();
    velocities(&x, &config.strengths, config.omega_frame, MIN_DISTINCT)
}

/// Hamiltonian `-(1/2pi) sum_{i<j} k_i k_j ln|x_i - x_j|` and moment
/// `sum k_i x_i`.
pub fn invariants(config: &VortexConfiguration) -> Result<(f64, Vec3)> {
    let p = &config.positions;
    let k = &config.strengths;
    let mut terms = Vec::with_capacity(p.len() * p.len().saturating_sub(1) / 2);
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let c = p[i].chord(&p[j]);
            if c == 0.0 {
                return Err(Error::Singular(format!("vortices {i} and {j} coincide")));
            }
            terms.push(-k[i] * k[j] * c.ln() / TAU);
        }
    }
    let h = exact_sum(terms);
    let m = [0, 1, 2].map(|a| exact_sum(p.iter().zip(k).map(|(x, &ki)| ki * x.xyz()[a])));
    Ok((h, m))
}

/// Largest deviations of the invariants from their initial values over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub hamiltonian_drift: f64,
    pub moment_drift: f64,
    /// Largest `| |x_i| - 1 |` seen before renormalization.
    pub norm_drift: f64,
}

#[derive(Debug)]
pub struct Trajectory {
    pub strengths: Vec<f64>,
    pub omega_frame: f64,
    /// Step actually taken: `T / ceil(T / dt)`.
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<SpherePoint>>,
    pub report: ConservationReport,
    /// Set when the run stopped early; the samples up to that point are kept.
    pub abort: Option<Error>,
}

impl Trajectory {
    pub fn last(&self) -> &[SpherePoint] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_complete(&self) -> bool {
        self.abort.is_none()
    }
}

fn rk4_step(x: &[Vec3], k: &[f64], omega: f64, h: f64) -> Result<Vec<Vec3>> {
    let axpy = |a: f64, d: &[Vec3]| -> Vec<Vec3> {
        x.iter()
            .zip(d)
            .map(|(&xi, &di)| add(xi, scale(a, di)))
            .collect()
    };
    let k1 = velocities(x, k, omega, MIN_SEPARATION)?;
    let k2 = velocities(&axpy(0.5 * h, &k1), k, omega, MIN_SEPARATION)?;
    let k3 = velocities(&axpy(0.5 * h, &k2), k, omega, MIN_SEPARATION)?;
    let k4 = velocities(&axpy(h, &k3), k, omega, MIN_SEPARATION)?;
    Ok((0..x.len())
        .map(|i| {
            let s = add(add(k1[i], scale(2.0, k2[i])), add(scale(2.0, k3[i]), k4[i]));
            add(x[i], scale(h / 6.0, s))
        })
        .collect())
}

/// Integrates over `[0, t_end]` with `ceil(t_end / dt)` equal steps, keeping
/// every `stride`-th state and the final one.
pub fn integrate(
    config: &VortexConfiguration,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= dt && t_end.is_finite()) {
        return invalid(format!("need 0 < dt <= T, got dt = {dt}, T = {t_end}"));
    }
    if stride == 0 {
        return invalid("stride must be at least 1");
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let k = config.strengths.clone();
    let (h0, m0) = invariants(config)?;
    let mut x: Vec<Vec3> = config.positions.iter().map(|p| p.xyz()).collect();
    let mut traj = Trajectory {
        strengths: k.clone(),
        omega_frame: config.omega_frame,
        dt: h,
        times: vec![0.0],
        states: vec![config.positions.clone()],
        report: ConservationReport::default(),
        abort: None,
    };
    for n in 1..=steps {
        let next = match rk4_step(&x, &k, config.omega_frame, h) {
            Ok(next) => next,
            Err(e) => {
                let t = (n - 1) as f64 * h;
                if traj.times.last() != Some(&t) {
                    traj.times.push(t);
                    traj.states
                        .push(x.iter().map(|&v| SpherePoint::renormalize(v)).collect());
                }
                log::warn!("point-vortex run aborted at t = {t}: {e}");
                traj.abort = Some(e);
                return Ok(traj);
            }
        };
        let r = &mut traj.report;
        for v in &next {
            r.norm_drift = r.norm_drift.max((norm(*v) - 1.0).abs());
        }
        let pts: Vec<SpherePoint> = next.iter().map(|&v| SpherePoint::renormalize(v)).collect();
        x = pts.iter().map(|p| p.xyz()).collect();
        let state = VortexConfiguration {
            positions: pts,
            strengths: k.clone(),
            omega_frame: config.omega_frame,
        };
        let (hn, mn) = invariants(&state)?;
        r.hamiltonian_drift = r.hamiltonian_drift.max((hn - h0).abs());
        r.moment_drift = r.moment_drift.max(norm(sub(mn, m0)));
        if n % stride == 0 || n == steps {
            traj.times
                .push(if n == steps { t_end } else { n as f64 * h });
            traj.states.push(state.positions);
        }
    }
    Ok(traj)
}

/// Angular speed `lambda = kappa / (4 pi sin theta0)` of the odd-symmetric pair.
pub fn pair_rate(theta0: f64, kappa: f64) -> Result<f64> {
    let s = theta0.sin();
    if s == 0.0 || !s.is_finite() {
        return Err(Error::Degenerate(format!(
            "pair on the equator (theta0 = {theta0}) has no finite rate"
        )));
    }
    Ok(kappa / (2.0 * TAU * s))
}

/// Closed-form odd pair at time `t`: strengths `kappa` at latitude `theta0`
/// and `-kappa` at `-theta0`, longitude `(lambda - Omega) t + phi0`.
pub fn explicit_pair(
    theta0: f64,
    phi0: f64,
    kappa: f64,
    omega_frame: f64,
    t: f64,
) -> Result<VortexConfiguration> {
    let lambda = pair_rate(theta0, kappa)?;
    let phi = (lambda - omega_frame) * t + phi0;
    let (st, ct) = theta0.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let upper = SpherePoint::from_cartesian([ct * cp, ct * sp, st])?;
    let lower = SpherePoint::from_cartesian([ct * cp, ct * sp, -st])?;
    VortexConfiguration::new(vec![upper, lower], vec![kappa, -kappa], omega_frame)
}

/// Unwrapped longitude of one vortex along a trajectory.
pub fn unwrapped_longitude(traj: &Trajectory, i: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(traj.states.len());
    for s in &traj.states {
        let x = s[i].xyz();
        let phi = x[1].atan2(x[0]);
        match out.last() {
            None => out.push(phi),
            Some(&prev) => {
                let d = (phi - prev + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
                out.push(prev + d);
            }
        }
    }
    out
}
