//! Grid, scalar fields on the northern hemisphere, and the functionals and
//! rearrangement machinery built on them.

mod functional;
mod grid;
pub mod io;
mod rearrange;

use std::sync::Arc;

pub use functional::{
    bump_battery, energy, impulse, mass, mass_center, objective, support_diameter, weak_residual,
    weak_residual_with, Bump, TestFunction,
};
pub use grid::{GridDims, HemisphereGrid};
pub use rearrange::{
    bathtub_level, distribution_compare, monotone_rearrangement, superlevel_measure, Bathtub,
    ClassKind, Level, RearrangementClass, DISTRIBUTION_LEVELS,
};

use crate::error::{Error, Result};
use crate::sphere::SpherePoint;
use crate::sum::exact_sum;

/// Values sampled at the nodes of a [`HemisphereGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<HemisphereGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<HemisphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<HemisphereGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn constant(grid: Arc<HemisphereGrid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<HemisphereGrid>, f: impl Fn(&SpherePoint) -> f64) -> Self {
        let values = grid.nodes().iter().map(f).collect();
        Self { grid, values }
    }

    /// The `x3` coordinate sampled at the nodes.
    pub fn x3(grid: Arc<HemisphereGrid>) -> Self {
        Self::from_fn(grid, |p| p.x3())
    }

    pub fn grid(&self) -> &Arc<HemisphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.dims() == other.grid.dims()
    }

    pub(crate) fn check_grid(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// Quadrature of `u v` over the hemisphere.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.check_grid(other)?;
        let g = &self.grid;
        Ok(exact_sum(
            self.values
                .iter()
                .zip(&other.values)
                .enumerate()
                .map(|(i, (&a, &b))| a * b * g.weight(i)),
        ))
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let g = &self.grid;
        exact_sum(
            self.values
                .iter()
                .enumerate()
                .map(|(i, &v)| v.abs().powf(p) * g.weight(i)),
        )
        .powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Field rotated eastward by `k` whole columns: `(v o R_{-2 pi k / n_phi})`.
    pub fn shift_phi(&self, k: isize) -> Self {
        let g = &self.grid;
        let mut values = vec![0.0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            values[g.shifted(i, k)] = v;
        }
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Indices of nodes with value above `threshold`, in node order.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > threshold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of nonzero nodes, in node order.
    pub fn support_nonzero(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Area of `{v > threshold}`.
    pub fn support_area(&self, threshold: f64) -> f64 {
        exact_sum(
            self.support(threshold)
                .into_iter()
                .map(|i| self.grid.weight(i)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        let g = Arc::new(HemisphereGrid::new(8, 4).unwrap());
        assert!(ScalarField::new(g.clone(), vec![0.0; 31]).is_err());
        assert!(ScalarField::new(g, vec![0.0; 32]).is_ok());
    }

    #[test]
    fn shift_is_a_relabelling() {
        let g = Arc::new(HemisphereGrid::new(8, 3).unwrap());
        let f = ScalarField::from_fn(g.clone(), |p| p.xyz()[0] + 2.0 * p.xyz()[1]);
        let s = f.shift_phi(3);
        assert_eq!(s.shift_phi(-3), f);
        assert_eq!(s.shift_phi(5), f);
        assert_eq!(mass(&s), mass(&f));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = ScalarField::zeros(Arc::new(HemisphereGrid::new(8, 4).unwrap()));
        let b = ScalarField::zeros(Arc::new(HemisphereGrid::new(8, 5).unwrap()));
        assert!(matches!(a.add(&b), Err(Error::GridMismatch)));
    }
}
