//! Rearrangement classes and the linear maximization steps over them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ScalarField;
use crate::error::{invalid, Result};
use crate::sphere::cap_area;
use crate::sum::exact_sum;

/// Number of levels in the mesh used to compare distribution functions.
pub const DISTRIBUTION_LEVELS: usize = 64;

/// One level of a sampled profile: `area` steradians carry `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub value: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassKind {
    /// `gamma` times the indicator of a set of area `area`.
    Patch { gamma: f64, area: f64 },
    /// Finite profile, levels sorted by decreasing value.
    Sampled { profile: Vec<Level> },
}

/// The admissible set: every function with the distribution function of a
/// reference profile supported in a polar cap of radius `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RearrangementClass {
    pub kind: ClassKind,
    /// Lebesgue exponent, `1 < p < inf`.
    pub p: f64,
    /// Total mass.
    pub kappa: f64,
    /// Concentration constant bounding `eps^(2/p') ||rho||_p`.
    pub k_const: f64,
    /// Support radius of the reference profile.
    pub epsilon: f64,
}

fn check_p_eps(p: f64, epsilon: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return invalid(format!("Lebesgue exponent must lie in (1, inf), got {p}"));
    }
    if !(epsilon > 0.0 && epsilon <= std::f64::consts::FRAC_PI_2) {
        return invalid(format!(
            "support radius must lie in (0, pi/2], got {epsilon}"
        ));
    }
    Ok(())
}

impl RearrangementClass {
    /// Uniform patch on the cap of radius `epsilon` with total mass `kappa`.
    pub fn patch(kappa: f64, epsilon: f64, p: f64) -> Result<Self> {
        check_p_eps(p, epsilon)?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return invalid(format!("mass must be positive, got {kappa}"));
        }
        let area = cap_area(epsilon)?;
        let gamma = kappa / area;
        let mut class = Self {
            kind: ClassKind::Patch { gamma, area },
            p,
            kappa,
            k_const: 0.0,
            epsilon,
        };
        class.k_const = class.concentration();
        Ok(class)
    }

    /// Sampled profile; levels are merged and sorted, and their areas must
    /// add up to the cap area of `epsilon`.
    pub fn sampled(levels: Vec<Level>, epsilon: f64, p: f64) -> Result<Self> {
        check_p_eps(p, epsilon)?;
        let mut profile: Vec<Level> = Vec::with_capacity(levels.len());
        for l in levels {
            if !(l.value >= 0.0 && l.area >= 0.0 && l.value.is_finite() && l.area.is_finite()) {
                return invalid(format!("profile levels must be nonnegative, got {l:?}"));
            }
            if l.area > 0.0 && l.value > 0.0 {
                profile.push(l);
            }
        }
        if profile.is_empty() {
            return invalid("profile carries no mass");
        }
        profile.sort_by(|a, b| b.value.total_cmp(&a.value));
        profile.dedup_by(|later, kept| {
            if later.value == kept.value {
                kept.area += later.area;
                true
            } else {
                false
            }
        });
        let total = exact_sum(profile.iter().map(|l| l.area));
        let cap = cap_area(epsilon)?;
        if (total - cap).abs() > 1e-9 * cap {
            return invalid(format!(
                "profile area {total} differs from the cap area {cap} of radius {epsilon}"
            ));
        }
        let kappa = exact_sum(profile.iter().map(|l| l.value * l.area));
        let mut class = Self {
            kind: ClassKind::Sampled { profile },
            p,
            kappa,
            k_const: 0.0,
            epsilon,
        };
        class.k_const = class.concentration();
        Ok(class)
    }

    /// Radial profile `shape(r / epsilon)` sampled on `n` equal-area rings of
    /// the cap, rescaled to total mass `kappa`.
    pub fn sampled_radial(
        shape: impl Fn(f64) -> f64,
        kappa: f64,
        epsilon: f64,
        n: usize,
        p: f64,
    ) -> Result<Self> {
        check_p_eps(p, epsilon)?;
        if n == 0 {
            return invalid("need at least one ring");
        }
        let cap = cap_area(epsilon)?;
        let ring = cap / n as f64;
        let raw: Vec<f64> = (0..n)
            .map(|k| {
                let mid = crate::sphere::cap_radius((k as f64 + 0.5) * ring).unwrap_or(epsilon);
                shape(mid / epsilon).max(0.0)
            })
            .collect();
        let m = exact_sum(raw.iter().map(|v| v * ring));
        if !(m > 0.0) {
            return invalid("radial shape carries no mass");
        }
        let levels = raw
            .into_iter()
            .map(|v| Level {
                value: v * kappa / m,
                area: ring,
            })
            .collect();
        Self::sampled(levels, epsilon, p)
    }

    pub fn support_area(&self) -> f64 {
        match &self.kind {
            ClassKind::Patch { area, .. } => *area,
            ClassKind::Sampled { profile } => exact_sum(profile.iter().map(|l| l.area)),
        }
    }

    pub fn max_value(&self) -> f64 {
        match &self.kind {
            ClassKind::Patch { gamma, .. } => *gamma,
            ClassKind::Sampled { profile } => profile[0].value,
        }
    }

    /// Levels in decreasing order (a patch is a one-level profile).
    pub fn levels(&self) -> Vec<Level> {
        match &self.kind {
            ClassKind::Patch { gamma, area } => vec![Level {
                value: *gamma,
                area: *area,
            }],
            ClassKind::Sampled { profile } => profile.clone(),
        }
    }

    pub fn lp_norm(&self) -> f64 {
        exact_sum(self.levels().iter().map(|l| l.value.powf(self.p) * l.area)).powf(1.0 / self.p)
    }

    /// `eps^(2/p') ||rho||_p`, the quantity the concentration constant bounds.
    pub fn concentration(&self) -> f64 {
        let p_conj = self.p / (self.p - 1.0);
        self.epsilon.powf(2.0 / p_conj) * self.lp_norm()
    }

    pub fn h3_holds(&self) -> bool {
        self.concentration() <= self.k_const * (1.0 + 1e-12)
    }

    pub fn validate(&self) -> Result<()> {
        check_p_eps(self.p, self.epsilon)?;
        let cap = cap_area(self.epsilon)?;
        match &self.kind {
            ClassKind::Patch { gamma, area } => {
                if (gamma * area - self.kappa).abs() > 1e-12 * self.kappa.abs().max(1.0) {
                    return invalid("patch amplitude times area must equal the mass");
                }
                if (area - cap).abs() > 1e-9 * cap {
                    return invalid("patch area must equal the cap area of epsilon");
                }
            }
            ClassKind::Sampled { profile } => {
                if profile.iter().any(|l| l.value < 0.0 || l.area < 0.0) {
                    return invalid("profile values must be nonnegative");
                }
                if (self.support_area() - cap).abs() > 1e-9 * cap {
                    return invalid("profile area must equal the cap area of epsilon");
                }
                let m = exact_sum(profile.iter().map(|l| l.value * l.area));
                if (m - self.kappa).abs() > 1e-9 * self.kappa.abs().max(1.0) {
                    return invalid("profile mass must equal kappa");
                }
            }
        }
        if !self.h3_holds() {
            return invalid("concentration bound (H3) violated");
        }
        Ok(())
    }

    /// `|{rho > s}|` for the reference profile extended by zero to a domain of
    /// area `total_area`.
    pub fn superlevel_measure(&self, s: f64, total_area: f64) -> f64 {
        if s < 0.0 {
            return total_area;
        }
        exact_sum(self.levels().iter().filter(|l| l.value > s).map(|l| l.area))
    }

    /// Whether `field` has this class's distribution function up to `tol`
    /// steradians on the comparison mesh.
    pub fn contains(&self, field: &ScalarField, tol: f64) -> bool {
        let dist = Distribution::of(field);
        let total = field.grid().total_area();
        let lo = dist.min().min(0.0);
        let hi = dist.max().max(self.max_value());
        level_mesh(lo, hi)
            .all(|s| (dist.measure(s) - self.superlevel_measure(s, total)).abs() <= tol)
    }
}

/// Result of a bathtub step.
#[derive(Debug, Clone)]
pub struct Bathtub {
    /// Value of the potential at the last (possibly fractional) cell.
    pub mu: f64,
    /// Cell occupation in `[0, 1]`, one fractional cell at most.
    pub indicator: ScalarField,
    /// Node index of the fractional cell.
    pub last: usize,
    pub fraction: f64,
}

/// Node indices by decreasing potential, ties broken by node index.
fn descending_order(psi: &ScalarField) -> Vec<usize> {
    let v = psi.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_unstable_by(|&i, &j| match v[j].total_cmp(&v[i]) {
        Ordering::Equal => i.cmp(&j),
        o => o,
    });
    order
}

/// Fills the cells with the largest `psi` until their area equals
/// `target_area`; the last cell is filled fractionally.
pub fn bathtub_level(psi: &ScalarField, target_area: f64) -> Result<Bathtub> {
    let grid = psi.grid().clone();
    let total = grid.total_area();
    if !(target_area > 0.0 && target_area <= total * (1.0 + 1e-12)) {
        return invalid(format!("bathtub area {target_area} outside (0, {total}]"));
    }
    let order = descending_order(psi);
    let mut values = vec![0.0; grid.len()];
    // first cell whose inclusion reaches the target
    let mut cum = 0.0;
    let mut k = order.len() - 1;
    for (n, &i) in order.iter().enumerate() {
        cum += grid.weight(i);
        if cum >= target_area {
            k = n;
            break;
        }
    }
    let full_area = |k: usize| exact_sum(order[..k].iter().map(|&i| grid.weight(i)));
    let mut before = full_area(k);
    while k > 0 && before >= target_area {
        k -= 1;
        before = full_area(k);
    }
    let mut fraction = ((target_area - before) / grid.weight(order[k])).clamp(0.0, 1.0);
    if fraction == 0.0 && k > 0 {
        k -= 1;
        fraction = 1.0;
    }
    for &i in &order[..k] {
        values[i] = 1.0;
    }
    let last = order[k];
    values[last] = fraction;
    Ok(Bathtub {
        mu: psi.values()[last],
        indicator: ScalarField::new(grid, values)?,
        last,
        fraction,
    })
}

/// Couples the profile's levels increasingly onto `psi`: the largest values
/// go to the cells with the largest potential. Cells straddling two levels
/// receive the area average; cells beyond the profile's area receive zero.
pub fn monotone_rearrangement(
    class: &RearrangementClass,
    psi: &ScalarField,
) -> Result<ScalarField> {
    let grid = psi.grid().clone();
    let total = grid.total_area();
    let support = class.support_area();
    if support > total * (1.0 + 1e-12) {
        return invalid(format!(
            "profile area {support} exceeds the grid area {total}"
        ));
    }
    if let ClassKind::Patch { gamma, area } = class.kind {
        return Ok(bathtub_level(psi, area)?.indicator.scale(gamma));
    }
    let levels = class.levels();
    if levels.len() == 1 {
        let l = levels[0];
        return Ok(bathtub_level(psi, l.area)?.indicator.scale(l.value));
    }
    let order = descending_order(psi);
    let mut values = vec![0.0; grid.len()];
    let mut li = 0;
    let mut level_left = levels[0].area;
    let mut placed = 0.0;
    for &i in &order {
        if li >= levels.len() {
            break;
        }
        let w = grid.weight(i);
        let mut room = w.min(support - placed).max(0.0);
        if room <= 0.0 {
            break;
        }
        placed += room;
        let full = room == w;
        let first = li;
        let mut mass = 0.0;
        let mut lowest = levels[first].value;
        while room > 0.0 && li < levels.len() {
            let take = room.min(level_left);
            mass += take * levels[li].value;
            lowest = levels[li].value;
            room -= take;
            level_left -= take;
            if level_left <= 0.0 {
                li += 1;
                if li < levels.len() {
                    level_left = levels[li].area;
                }
            }
        }
        values[i] = if full && li == first {
            // cell lies inside one level
            levels[first].value
        } else {
            let avg = (mass / w).min(levels[first].value);
            if full {
                avg.max(lowest)
            } else {
                avg
            }
        };
    }
    ScalarField::new(grid, values)
}

/// Sorted view of a field for fast superlevel-set measures.
struct Distribution {
    values: Vec<f64>,
    // prefix[k] = area of the k largest values
    prefix: Vec<f64>,
}

impl Distribution {
    fn of(field: &ScalarField) -> Self {
        let g = field.grid();
        let mut pairs: Vec<(f64, f64)> = field
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, g.weight(i)))
            .collect();
        pairs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        let mut prefix = Vec::with_capacity(pairs.len() + 1);
        let mut acc = crate::sum::ExactSum::new();
        prefix.push(0.0);
        for &(_, w) in &pairs {
            acc.add(w);
            prefix.push(acc.value());
        }
        Self {
            values: pairs.into_iter().map(|p| p.0).collect(),
            prefix,
        }
    }

    fn measure(&self, s: f64) -> f64 {
        let k = self.values.partition_point(|&v| v > s);
        self.prefix[k]
    }

    fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

fn level_mesh(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..DISTRIBUTION_LEVELS).map(move |m| lo + (hi - lo) * m as f64 / DISTRIBUTION_LEVELS as f64)
}

/// `|{v > s}|`.
pub fn superlevel_measure(v: &ScalarField, s: f64) -> f64 {
    exact_sum(
        v.values()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > s)
            .map(|(i, _)| v.grid().weight(i)),
    )
}

/// Whether `u` and `v` have the same distribution function up to `tol`
/// steradians, on a mesh of levels between the joint minimum and maximum.
pub fn distribution_compare(u: &ScalarField, v: &ScalarField, tol: f64) -> bool {
    if !u.same_grid(v) {
        return false;
    }
    let du = Distribution::of(u);
    let dv = Distribution::of(v);
    let lo = du.min().min(dv.min());
    let hi = du.max().max(dv.max());
    if hi <= lo {
        return true;
    }
    level_mesh(lo, hi).all(|s| (du.measure(s) - dv.measure(s)).abs() <= tol)
}
