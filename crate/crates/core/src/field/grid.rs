use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sphere::{SpherePoint, SphericalCoords};
use crate::sum::exact_sum;

/// Cell-centred longitude/latitude tessellation of the open northern
/// hemisphere.
///
/// Band `b` spans latitudes `[b h, (b+1) h]` with `h = pi / (2 n_theta)`;
/// column `a` spans longitudes `[a, a+1] * 2pi / n_phi`. Nodes are ordered
/// band-major. Each node sits at the cell's mean longitude and at the
/// latitude whose sine is the cell average of `x3`, so that zonal linear
/// functions of `x3` integrate exactly. Weights are the exact cell areas.
#[derive(Debug, Clone, PartialEq)]
pub struct HemisphereGrid {
    n_phi: usize,
    n_theta: usize,
    band_theta: Vec<f64>,
    band_sin: Vec<f64>,
    band_cos: Vec<f64>,
    band_weight: Vec<f64>,
    col_phi: Vec<f64>,
    nodes: Vec<SpherePoint>,
}

/// Grid dimensions, also used as the identity of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub n_phi: usize,
    pub n_theta: usize,
}

impl HemisphereGrid {
    pub const MIN_PHI: usize = 4;
    pub const MIN_THETA: usize = 1;

    pub fn new(n_phi: usize, n_theta: usize) -> Result<Self> {
        if n_phi < Self::MIN_PHI || n_theta < Self::MIN_THETA {
            return invalid(format!(
                "grid needs n_phi >= {} and n_theta >= {}, got {n_phi} x {n_theta}",
                Self::MIN_PHI,
                Self::MIN_THETA
            ));
        }
        let dtheta = FRAC_PI_2 / n_theta as f64;
        let dphi = TAU / n_phi as f64;
        let edge_sin: Vec<f64> = (0..=n_theta)
            .map(|b| {
                if b == n_theta {
                    1.0
                } else {
                    (b as f64 * dtheta).sin()
                }
            })
            .collect();
        let mut band_theta = Vec::with_capacity(n_theta);
        let mut band_sin = Vec::with_capacity(n_theta);
        let mut band_cos = Vec::with_capacity(n_theta);
        let mut band_weight = Vec::with_capacity(n_theta);
        for b in 0..n_theta {
            let s = 0.5 * (edge_sin[b] + edge_sin[b + 1]);
            let t = s.asin();
            band_theta.push(t);
            band_sin.push(s);
            band_cos.push(t.cos());
            band_weight.push(dphi * (edge_sin[b + 1] - edge_sin[b]));
        }
        let col_phi: Vec<f64> = (0..n_phi).map(|a| (a as f64 + 0.5) * dphi).collect();
        let mut nodes = Vec::with_capacity(n_phi * n_theta);
        for b in 0..n_theta {
            for &phi in &col_phi {
                let (sp, cp) = phi.sin_cos();
                let c = band_cos[b];
                nodes.push(SpherePoint::renormalize([c * cp, c * sp, band_sin[b]]));
            }
        }
        Ok(Self {
            n_phi,
            n_theta,
            band_theta,
            band_sin,
            band_cos,
            band_weight,
            col_phi,
            nodes,
        })
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn dims(&self) -> GridDims {
        GridDims {
            n_phi: self.n_phi,
            n_theta: self.n_theta,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dphi(&self) -> f64 {
        TAU / self.n_phi as f64
    }

    pub fn dtheta(&self) -> f64 {
        FRAC_PI_2 / self.n_theta as f64
    }

    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &SpherePoint {
        &self.nodes[i]
    }

    #[inline]
    pub fn index(&self, band: usize, col: usize) -> usize {
        band * self.n_phi + col
    }

    #[inline]
    pub fn band_of(&self, i: usize) -> usize {
        i / self.n_phi
    }

    #[inline]
    pub fn col_of(&self, i: usize) -> usize {
        i % self.n_phi
    }

    /// Node latitude of band `b`.
    pub fn band_theta(&self, b: usize) -> f64 {
        self.band_theta[b]
    }

    pub fn band_sin(&self, b: usize) -> f64 {
        self.band_sin[b]
    }

    pub fn band_cos(&self, b: usize) -> f64 {
        self.band_cos[b]
    }

    /// Lower and upper latitude of band `b`.
    pub fn band_edges(&self, b: usize) -> (f64, f64) {
        let h = self.dtheta();
        (
            b as f64 * h,
            if b + 1 == self.n_theta {
                FRAC_PI_2
            } else {
                (b + 1) as f64 * h
            },
        )
    }

    pub fn band_weight(&self, b: usize) -> f64 {
        self.band_weight[b]
    }

    pub fn col_phi(&self, a: usize) -> f64 {
        self.col_phi[a]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.band_weight[self.band_of(i)]
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.weight(i))
    }

    pub fn coords(&self, i: usize) -> SphericalCoords {
        SphericalCoords::new(
            self.col_phi[self.col_of(i)],
            self.band_theta[self.band_of(i)],
        )
    }

    pub fn total_area(&self) -> f64 {
        exact_sum(self.weights())
    }

    /// Smallest cell area (the polar band).
    pub fn min_cell_area(&self) -> f64 {
        self.band_weight
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_cell_area(&self) -> f64 {
        self.band_weight.iter().copied().fold(0.0, f64::max)
    }

    /// Geodesic diagonal of a cell in band `b`, measured at its node latitude.
    pub fn cell_diagonal(&self, b: usize) -> f64 {
        self.dtheta().hypot(self.band_cos[b] * self.dphi())
    }

    /// Index of node `i` after rotating the grid by `k` columns eastward.
    #[inline]
    pub fn shifted(&self, i: usize, k: isize) -> usize {
        let n = self.n_phi as isize;
        let a = (self.col_of(i) as isize + k).rem_euclid(n) as usize;
        self.index(self.band_of(i), a)
    }

    /// Cell containing a point of the closed northern hemisphere.
    pub fn locate(&self, p: &SpherePoint) -> Option<usize> {
        let c = p.to_spherical();
        if c.theta < 0.0 {
            return None;
        }
        let b = ((c.theta / self.dtheta()) as usize).min(self.n_theta - 1);
        let a = ((c.phi / self.dphi()) as usize).min(self.n_phi - 1);
        Some(self.index(b, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_band_splits_uniformly() {
        let g = HemisphereGrid::new(4, 1).unwrap();
        assert_eq!(g.len(), 4);
        for w in g.weights() {
            assert!((w - PI / 2.0).abs() < 1e-15);
        }
        assert!((g.total_area() - TAU).abs() < 1e-15);
    }

    #[test]
    fn weights_telescope_to_hemisphere_area() {
        let g = HemisphereGrid::new(64, 32).unwrap();
        assert!((g.total_area() - TAU).abs() < 1e-12);
        let g = HemisphereGrid::new(128, 64).unwrap();
        assert!((g.total_area() - TAU).abs() < 1e-10);
    }

    #[test]
    fn polar_band_weight_closed_form() {
        let g = HemisphereGrid::new(16, 8).unwrap();
        let (lo, hi) = g.band_edges(7);
        assert_eq!(hi, FRAC_PI_2);
        let expected = TAU / 16.0 * (1.0 - lo.sin());
        assert!((g.band_weight(7) - expected).abs() < 1e-16);
    }

    #[test]
    fn nodes_lie_strictly_inside_and_are_band_major() {
        let g = HemisphereGrid::new(12, 5).unwrap();
        for (i, p) in g.nodes().iter().enumerate() {
            let c = p.to_spherical();
            assert!(c.theta > 0.0 && c.theta < FRAC_PI_2);
            let (lo, hi) = g.band_edges(g.band_of(i));
            assert!(c.theta > lo && c.theta < hi);
            assert_eq!(g.locate(p), Some(i));
        }
        assert_eq!(g.index(2, 3), 27);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(HemisphereGrid::new(3, 4).is_err());
        assert!(HemisphereGrid::new(8, 0).is_err());
    }

    #[test]
    fn shifts_wrap_columns() {
        let g = HemisphereGrid::new(8, 2).unwrap();
        assert_eq!(g.shifted(g.index(1, 7), 1), g.index(1, 0));
        assert_eq!(g.shifted(g.index(0, 0), -1), g.index(0, 7));
    }
}
