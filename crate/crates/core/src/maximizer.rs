//! Ascent by rearrangement for `max E - lambda I` over a rearrangement class.
//!
//! Each step replaces `v` by the class member that maximizes the linear
//! functional `w -> <w, psi>` with `psi = G+ v - lambda x3`. Because
//! `F(w) - F(v) = <w - v, psi> + E(w - v)` and the discrete energy is
//! positive definite, every step is an ascent step.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{
    bathtub_level, bump_battery, impulse, mass_center, monotone_rearrangement, support_diameter,
    weak_residual_with, Bump, ClassKind, GridDims, HemisphereGrid, RearrangementClass, ScalarField,
};
use crate::green::GreenOperator;
use crate::sphere::{SpherePoint, SphericalCoords, Vec3};
use crate::sum::exact_sum;

/// Where the first iterate is centred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitCenter {
    /// Longitude 0, latitude `asin(clamp(kappa / (4 pi lambda), eps, 1 - eps))`.
    #[default]
    Auto,
    Point(SpherePoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaximizerConfig {
    pub lambda: f64,
    pub class: RearrangementClass,
    #[serde(default)]
    pub init_center: InitCenter,
    /// Support change, relative to the class support area, below which the
    /// support counts as settled.
    #[serde(default = "default_tol_area")]
    pub tol_area: f64,
    /// Objective increment, relative to `|F|`, below which the objective
    /// counts as settled.
    #[serde(default = "default_tol_obj")]
    pub tol_obj: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol_area() -> f64 {
    1e-3
}

fn default_tol_obj() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    500
}

impl MaximizerConfig {
    pub fn new(lambda: f64, class: RearrangementClass) -> Self {
        Self {
            lambda,
            class,
            init_center: InitCenter::Auto,
            tol_area: default_tol_area(),
            tol_obj: default_tol_obj(),
            max_iter: default_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return invalid("lambda must be finite");
        }
        if !(self.tol_area > 0.0 && self.tol_obj > 0.0) {
            return invalid("tolerances must be positive");
        }
        if self.max_iter == 0 {
            return invalid("max_iter must be at least 1");
        }
        self.class.validate()?;
        if self.class.support_area() >= TAU * (1.0 - 1e-12) {
            return invalid("class support must be smaller than the hemisphere");
        }
        Ok(())
    }

    /// Latitude of the predicted limit of the core, `asin(min(1, kappa / (4 pi lambda)))`.
    pub fn limit_latitude(&self) -> f64 {
        limit_x3(self.class.kappa, self.lambda).asin()
    }

    pub fn initial_center(&self) -> SpherePoint {
        match self.init_center {
            InitCenter::Point(p) => p,
            InitCenter::Auto => {
                let eps = self.class.epsilon;
                let ratio = if self.lambda > 0.0 {
                    self.class.kappa / (4.0 * std::f64::consts::PI * self.lambda)
                } else {
                    1.0
                };
                let lat = ratio.clamp(eps.min(0.5), (1.0 - eps).max(0.5)).asin();
                SpherePoint::from_spherical(SphericalCoords::new(0.0, lat))
            }
        }
    }
}

/// `min(1, kappa / (4 pi lambda))`, the third component of the limiting
/// core position (`1` when `lambda <= 0`).
pub fn limit_x3(kappa: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        1.0
    } else {
        (kappa / (4.0 * std::f64::consts::PI * lambda)).min(1.0)
    }
}

/// Grid whose cells are roughly square near both the first iterate and the
/// predicted core position, and whose core holds about `cells_per_core` cells.
pub fn auto_grid(cfg: &MaximizerConfig, cells_per_core: usize) -> Result<GridDims> {
    if cells_per_core < 4 {
        return invalid("need at least 4 cells per core");
    }
    let class = &cfg.class;
    let dtheta = (class.support_area() / cells_per_core as f64).sqrt();
    let n_theta = (FRAC_PI_2 / dtheta).ceil().max(2.0) as usize;
    let widest = cfg
        .initial_center()
        .x3()
        .min(limit_x3(class.kappa, cfg.lambda));
    let c_eff = (1.0 - widest * widest)
        .max(0.0)
        .sqrt()
        .max(0.5 * class.epsilon);
    let raw = (TAU * c_eff / dtheta).round() as usize;
    let n_phi = (raw.div_ceil(4) * 4).max(8);
    Ok(GridDims { n_phi, n_theta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The step returned the current iterate.
    FixedPoint,
    /// Support change and objective increment both below tolerance.
    Tolerance,
    /// The support alternated between two sets and averaging did not help.
    TwoCycle,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct MaximizerReport {
    pub field: ScalarField,
    /// `G+ v - lambda x3` of the final field.
    pub stream: ScalarField,
    pub objective_history: Vec<f64>,
    pub energy: f64,
    pub impulse: f64,
    /// Level of the last cell filled by a step from the final field.
    pub mu: f64,
    pub mass_center: Vec3,
    pub core_diameter: f64,
    pub core_area: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    /// Largest distribution-function deviation over all iterates, steradians.
    pub class_deviation: f64,
    /// Largest `|I(v_k)|` over all iterates.
    pub max_abs_impulse: f64,
    pub weak_residuals: Vec<f64>,
}

/// Flat summary of a report for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub lambda: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub grid: GridDims,
    pub objective: f64,
    pub energy: f64,
    pub impulse: f64,
    pub mu: f64,
    pub mu_normalized: f64,
    pub energy_normalized: f64,
    pub mass_center: Vec3,
    pub core_diameter: f64,
    pub diameter_over_eps: f64,
    pub core_area: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub class_deviation: f64,
    pub max_abs_impulse: f64,
    pub weak_residuals: Vec<f64>,
    pub objective_history: Vec<f64>,
}

impl MaximizerReport {
    pub fn objective(&self) -> f64 {
        *self
            .objective_history
            .last()
            .expect("history is never empty")
    }

    /// Worst relative decrease along the history (zero for a monotone one).
    pub fn worst_descent(&self) -> f64 {
        self.objective_history
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn summary(&self, cfg: &MaximizerConfig) -> ReportSummary {
        let class = &cfg.class;
        let (_, mu_n) = lagrange_lower_bound_check(self, class);
        ReportSummary {
            lambda: cfg.lambda,
            kappa: class.kappa,
            epsilon: class.epsilon,
            grid: self.field.grid().dims(),
            objective: self.objective(),
            energy: self.energy,
            impulse: self.impulse,
            mu: self.mu,
            mu_normalized: mu_n,
            energy_normalized: energy_lower_bound_check(self, class),
            mass_center: self.mass_center,
            core_diameter: self.core_diameter,
            diameter_over_eps: self.core_diameter / class.epsilon,
            core_area: self.core_area,
            iterations: self.iterations,
            converged: self.converged,
            stop: self.stop,
            class_deviation: self.class_deviation,
            max_abs_impulse: self.max_abs_impulse,
            weak_residuals: self.weak_residuals.clone(),
            objective_history: self.objective_history.clone(),
        }
    }
}

/// First iterate: the class profile arranged around `center`.
pub fn initial_field(cfg: &MaximizerConfig, grid: &Arc<HemisphereGrid>) -> Result<ScalarField> {
    let c = cfg.initial_center();
    let closeness = ScalarField::from_fn(grid.clone(), |p| -p.chord_sq(&c));
    monotone_rearrangement(&cfg.class, &closeness)
}

struct Step {
    next: ScalarField,
    mu: f64,
}

fn step(class: &RearrangementClass, psi: &ScalarField) -> Result<Step> {
    match class.kind {
        ClassKind::Patch { gamma, area } => {
            let b = bathtub_level(psi, area)?;
            Ok(Step {
                next: b.indicator.scale(gamma),
                mu: b.mu,
            })
        }
        ClassKind::Sampled { .. } => {
            let mu = bathtub_level(psi, class.support_area())?.mu;
            Ok(Step {
                next: monotone_rearrangement(class, psi)?,
                mu,
            })
        }
    }
}

/// Area of the symmetric difference of the positivity sets.
pub fn support_change(u: &ScalarField, v: &ScalarField) -> f64 {
    let g = u.grid();
    exact_sum(
        u.values()
            .iter()
            .zip(v.values())
            .enumerate()
            .filter(|(_, (a, b))| (**a > 0.0) != (**b > 0.0))
            .map(|(i, _)| g.weight(i)),
    )
}

struct Evaluated {
    v: ScalarField,
    psi: ScalarField,
    energy: f64,
    impulse: f64,
    objective: f64,
}

fn evaluate(v: ScalarField, lambda: f64, gp: &GreenOperator) -> Result<Evaluated> {
    let gv = gp.apply(&v)?;
    let energy = 0.5 * v.inner(&gv)?;
    let impulse = impulse(&v);
    let mut psi = gv;
    for (x, p) in psi.values_mut().iter_mut().zip(gp.grid().nodes()) {
        *x -= lambda * p.x3();
    }
    Ok(Evaluated {
        v,
        psi,
        energy,
        impulse,
        objective: energy - lambda * impulse,
    })
}

/// Runs the ascent from [`initial_field`].
pub fn ascend(cfg: &MaximizerConfig, gp: &GreenOperator) -> Result<MaximizerReport> {
    cfg.validate()?;
    let init = initial_field(cfg, gp.grid())?;
    ascend_from(cfg, gp, init)
}

/// Runs the ascent from a given first iterate in the class.
pub fn ascend_from(
    cfg: &MaximizerConfig,
    gp: &GreenOperator,
    init: ScalarField,
) -> Result<MaximizerReport> {
    cfg.validate()?;
    if cfg.lambda <= 0.0 {
        warn!(
            "lambda = {} <= 0: the concentration results assume lambda > 0",
            cfg.lambda
        );
    }
    let grid = gp.grid().clone();
    init.check_grid(&ScalarField::zeros(grid.clone()))?;
    let class = &cfg.class;
    let a = class.support_area();

    let mut class_deviation = class_distance(class, &init);
    let mut cur = evaluate(init, cfg.lambda, gp)?;
    let mut history = vec![cur.objective];
    let mut max_abs_impulse = cur.impulse.abs();
    let mut prev: Option<ScalarField> = None;
    let mut guard_used = false;
    let mut stop = StopReason::MaxIter;
    let mut converged = false;
    let mut iterations = 0;

    let mut s = step(class, &cur.psi)?;
    while iterations < cfg.max_iter {
        if s.next == cur.v {
            stop = StopReason::FixedPoint;
            converged = true;
            break;
        }
        let cycling = prev.as_ref().is_some_and(|p| *p == s.next);
        let mut candidate = s.next;
        if cycling {
            if guard_used {
                stop = StopReason::TwoCycle;
                break;
            }
            guard_used = true;
            // one step from the average of the two alternating potentials
            let other = evaluate(prev.clone().unwrap(), cfg.lambda, gp)?;
            let avg = cur.psi.add(&other.psi)?.scale(0.5);
            let trial = step(class, &avg)?.next;
            let trial_obj = evaluate(trial.clone(), cfg.lambda, gp)?.objective;
            debug!(
                "two-cycle guard: objective {} -> {}",
                cur.objective, trial_obj
            );
            if trial_obj < cur.objective || trial == cur.v {
                stop = StopReason::TwoCycle;
                break;
            }
            candidate = trial;
        }
        class_deviation = class_deviation.max(class_distance(class, &candidate));
        let next = evaluate(candidate, cfg.lambda, gp)?;
        iterations += 1;
        history.push(next.objective);
        max_abs_impulse = max_abs_impulse.max(next.impulse.abs());
        let moved = support_change(&next.v, &cur.v);
        let gain = next.objective - cur.objective;
        debug!(
            "iteration {iterations}: objective {} support change {moved}",
            next.objective
        );
        let old = std::mem::replace(&mut cur, next);
        prev = Some(old.v);
        s = step(class, &cur.psi)?;
        if moved <= cfg.tol_area * a && gain.abs() <= cfg.tol_obj * cur.objective.abs() {
            stop = StopReason::Tolerance;
            converged = true;
            break;
        }
    }
    if stop == StopReason::TwoCycle {
        // alternating between two sets: settled if the sets agree to tolerance
        let p = prev.as_ref().unwrap();
        converged = support_change(p, &cur.v) <= cfg.tol_area * a;
    }

    let mc = mass_center(&cur.v)?;
    let battery = battery_for(&mc, class.epsilon);
    let weak_residuals = battery
        .iter()
        .map(|b| weak_residual_with(&cur.v, &cur.psi, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaximizerReport {
        core_diameter: support_diameter(&cur.v, 0.0),
        core_area: cur.v.support_area(0.0),
        mass_center: mc,
        mu: s.mu,
        energy: cur.energy,
        impulse: cur.impulse,
        objective_history: history,
        iterations,
        converged,
        stop,
        class_deviation,
        max_abs_impulse,
        weak_residuals,
        field: cur.v,
        stream: cur.psi,
    })
}

/// Test-function battery centred on the core: chord radius `1.5 eps` around
/// the projected mass center.
pub fn battery_for(mass_center: &Vec3, eps: f64) -> Vec<Bump> {
    let c = SpherePoint::from_cartesian(*mass_center).unwrap_or(SpherePoint::NORTH);
    bump_battery(&c, 1.5 * eps)
}

/// Largest deviation of the superlevel measures of `v` from the class
/// profile's on the comparison mesh, in steradians.
pub fn class_distance(class: &RearrangementClass, v: &ScalarField) -> f64 {
    let g = v.grid();
    let total = g.total_area();
    let mut pairs: Vec<(f64, f64)> = v
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, g.weight(i)))
        .collect();
    pairs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let mut prefix = Vec::with_capacity(pairs.len() + 1);
    let mut acc = crate::sum::ExactSum::new();
    prefix.push(0.0);
    for &(_, w) in &pairs {
        acc.add(w);
        prefix.push(acc.value());
    }
    let lo = pairs.last().map_or(0.0, |p| p.0).min(0.0);
    let hi = pairs.first().map_or(0.0, |p| p.0).max(class.max_value());
    let levels = crate::field::DISTRIBUTION_LEVELS;
    (0..levels)
        .map(|m| {
            let s = lo + (hi - lo) * m as f64 / levels as f64;
            let k = pairs.partition_point(|p| p.0 > s);
            (prefix[k] - class.superlevel_measure(s, total)).abs()
        })
        .fold(0.0, f64::max)
}

/// `(mu, mu + (kappa / 2pi) ln eps)`.
pub fn lagrange_lower_bound_check(
    report: &MaximizerReport,
    class: &RearrangementClass,
) -> (f64, f64) {
    (
        report.mu,
        report.mu + class.kappa / TAU * class.epsilon.ln(),
    )
}

/// `E + (kappa^2 / 4pi) ln eps`.
pub fn energy_lower_bound_check(report: &MaximizerReport, class: &RearrangementClass) -> f64 {
    report.energy + class.kappa * class.kappa / (2.0 * TAU) * class.epsilon.ln()
}

/// Lower bound `(kappa^2 / 4pi) ln(cos eps / sin eps)` on the energy of the
/// patch centred at the pole.
pub fn polar_patch_energy_bound(kappa: f64, eps: f64) -> f64 {
    kappa * kappa / (2.0 * TAU) * (eps.cos() / eps.sin()).ln()
}

/// Mismatch between the positivity set of the field and the superlevel set
/// `{psi >= mu}` of its stream function: `(area, cell count)`.
pub fn level_set_certificate(report: &MaximizerReport) -> (f64, usize) {
    let g = report.field.grid();
    let mut cells = Vec::new();
    for (i, (&v, &p)) in report
        .field
        .values()
        .iter()
        .zip(report.stream.values())
        .enumerate()
    {
        if (v > 0.0) != (p >= report.mu) {
            cells.push(g.weight(i));
        }
    }
    (exact_sum(cells.iter().copied()), cells.len())
}

/// `min_k || u - v o R_k ||_p` over the integer longitude shifts `R_k`.
pub fn rotation_orbit_distance(u: &ScalarField, v: &ScalarField, p: f64) -> Result<f64> {
    u.check_grid(v)?;
    if !(p >= 1.0 && p.is_finite()) {
        return invalid(format!("orbit distance needs 1 <= p < inf, got {p}"));
    }
    let g = u.grid();
    let su = u.support_nonzero();
    let sv = v.support_nonzero();
    let mut best = f64::INFINITY;
    let mut mark = vec![false; g.len()];
    for k in 0..g.n_phi() as isize {
        // v o R_k at node i equals v at node shifted(i, -k)
        let mut idx: Vec<usize> = su.clone();
        for &j in &sv {
            idx.push(g.shifted(j, k));
        }
        let mut terms = Vec::with_capacity(idx.len());
        for &i in &idx {
            if mark[i] {
                continue;
            }
            mark[i] = true;
            let d = u.values()[i] - v.values()[g.shifted(i, -k)];
            terms.push(d.abs().powf(p) * g.weight(i));
        }
        for &i in &idx {
            mark[i] = false;
        }
        best = best.min(exact_sum(terms));
    }
    Ok(best.powf(1.0 / p))
}
