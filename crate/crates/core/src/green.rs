//! Green functions of the sphere and of the northern hemisphere with zero
//! equatorial boundary values, and the discrete operator `G+` on a grid.
//!
//! On the structured grid the kernel between two nodes depends only on their
//! bands and on the folded column offset, so the operator is stored as a
//! per-source-band table `S[c][b][d]` rather than as a dense matrix. The
//! weighted matrix entry is `K_ij = S(b_i, b_j, |a_i - a_j|) * w_j`. Tables are
//! built on first use, which keeps operators on fine grids affordable when
//! only a small vortex core is ever applied.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{GridDims, HemisphereGrid, ScalarField};
use crate::sphere::{cross, scale, sub, SpherePoint, Vec3};

const INV_2PI: f64 = 1.0 / TAU;
const INV_4PI: f64 = 1.0 / (2.0 * TAU);

fn singular(what: &str) -> Error {
    Error::Singular(format!("{what}: coincident points"))
}

/// `G(x, y) = -ln|x - y| / 2pi`.
pub fn kernel_sphere(x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    let c2 = x.chord_sq(y);
    if c2 == 0.0 {
        return Err(singular("sphere kernel"));
    }
    Ok(-INV_4PI * c2.ln())
}

/// `G+(x, y) = ln(|x - y'| / |x - y|) / 2pi`, with `y'` the mirror image of `y`
/// in the equatorial plane.
///
/// Uses `|x - y'|^2 = |x - y|^2 + 4 x3 y3`, which keeps the value accurate and
/// positive for nearby points.
pub fn kernel_hemisphere(x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    if x.x3() < 0.0 || y.x3() < 0.0 {
        return Err(Error::InvalidInput(
            "hemisphere kernel needs x3 >= 0".into(),
        ));
    }
    let c2 = x.chord_sq(y);
    if c2 == 0.0 {
        return Err(singular("hemisphere kernel"));
    }
    Ok(hemisphere_from_chord(c2, x.x3() * y.x3()))
}

#[inline]
fn hemisphere_from_chord(c2: f64, x3y3: f64) -> f64 {
    INV_4PI * (4.0 * x3y3 / c2).ln_1p()
}

/// Velocity induced at `x` by a unit vortex at `y` and its odd image at `y'`:
/// `[(y × x)/|x - y|^2 - (y' × x)/|x - y'|^2] / 2pi`.
pub fn velocity_kernel(x: &SpherePoint, y: &SpherePoint) -> Result<Vec3> {
    let yr = y.reflect_equator();
    let c2 = x.chord_sq(y);
    let c2r = x.chord_sq(&yr);
    if c2 == 0.0 || c2r == 0.0 {
        return Err(singular("velocity kernel"));
    }
    let xv = x.xyz();
    let direct = scale(INV_2PI / c2, cross(y.xyz(), xv));
    let image = scale(INV_2PI / c2r, cross(yr.xyz(), xv));
    Ok(sub(direct, image))
}

/// Discrete `G+` on a [`HemisphereGrid`].
#[derive(Debug)]
pub struct GreenOperator {
    grid: Arc<HemisphereGrid>,
    half: usize,
    tables: Vec<OnceLock<Vec<f64>>>,
}

impl GreenOperator {
    pub fn new(grid: Arc<HemisphereGrid>) -> Self {
        let tables = (0..grid.n_theta()).map(|_| OnceLock::new()).collect();
        let half = grid.n_phi() / 2;
        Self { grid, half, tables }
    }

    pub fn grid(&self) -> &Arc<HemisphereGrid> {
        &self.grid
    }

    #[inline]
    fn fold(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        d.min(self.grid.n_phi() - d)
    }

    /// Unweighted kernel table for source band `c`, indexed `[b * (half+1) + d]`.
    fn table(&self, c: usize) -> &[f64] {
        self.tables[c].get_or_init(|| {
            let g = &self.grid;
            let stride = self.half + 1;
            let mut t = vec![0.0; g.n_theta() * stride];
            for b in 0..g.n_theta() {
                for d in 0..stride {
                    t[b * stride + d] = self.pair_value(b, c, d);
                }
            }
            t
        })
    }

    /// Symmetric kernel value between a node of band `b` and a node of band
    /// `c` that are `d` columns apart.
    fn pair_value(&self, b: usize, c: usize, d: usize) -> f64 {
        let g = &self.grid;
        if b == c && d == 0 {
            return self_value(g.band_weight(b), g.band_sin(b));
        }
        let (tb, tc) = (g.band_theta(b), g.band_theta(c));
        let dphi = d as f64 * g.dphi();
        let s_lat = (0.5 * (tb - tc)).sin();
        let s_lon = (0.5 * dphi).sin();
        let c2 = 4.0 * (s_lat * s_lat + g.band_cos(b) * g.band_cos(c) * s_lon * s_lon);
        hemisphere_from_chord(c2, g.band_sin(b) * g.band_sin(c))
    }

    /// Unweighted kernel between nodes `i` and `j`; symmetric in `i, j`.
    pub fn kernel_entry(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let (bi, bj) = (g.band_of(i), g.band_of(j));
        let d = self.fold(g.col_of(i), g.col_of(j));
        self.table(bj)[bi * (self.half + 1) + d]
    }

    /// Weighted matrix entry `K_ij`, so that `apply(v)_i = sum_j K_ij v_j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.kernel_entry(i, j) * self.grid.weight(j)
    }

    /// `(G+ v)` at every node.
    ///
    /// Only the nonzero values of `v` are visited. Each target accumulates
    /// source bands in increasing order and, within a band, columns cyclically
    /// starting at its own column, so the result commutes bitwise with integer
    /// longitude shifts.
    pub fn apply(&self, v: &ScalarField) -> Result<ScalarField> {
        let g = &self.grid;
        if v.grid().dims() != g.dims() {
            return Err(Error::GridMismatch);
        }
        let n_phi = g.n_phi();
        let stride = self.half + 1;
        let vals = v.values();
        // sources per band: sorted columns and the weighted values
        let mut sources: Vec<(usize, Vec<usize>, Vec<f64>)> = Vec::new();
        for c in 0..g.n_theta() {
            let row = &vals[c * n_phi..(c + 1) * n_phi];
            let cols: Vec<usize> = (0..n_phi).filter(|&a| row[a] != 0.0).collect();
            if !cols.is_empty() {
                let wv = cols.iter().map(|&a| row[a] * g.band_weight(c)).collect();
                sources.push((c, cols, wv));
            }
        }
        let tables: Vec<&[f64]> = sources.iter().map(|(c, _, _)| self.table(*c)).collect();
        let mut out = vec![0.0; g.len()];
        out.par_chunks_mut(n_phi).enumerate().for_each(|(b, row)| {
            for (a, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for ((_, cols, wv), t) in sources.iter().zip(&tables) {
                    let t = &t[b * stride..(b + 1) * stride];
                    let start = cols.partition_point(|&x| x < a);
                    for k in (start..cols.len()).chain(0..start) {
                        let d = self.fold(a, cols[k]);
                        acc += t[d] * wv[k];
                    }
                }
                *slot = acc;
            }
        });
        ScalarField::new(g.clone(), out)
    }

    /// Builds every band table eagerly.
    pub fn materialize(&self) {
        (0..self.grid.n_theta()).into_par_iter().for_each(|c| {
            self.table(c);
        });
    }

    /// Writes the full kernel table.
    ///
    /// Layout, all little endian: magic `SVGK`, `u32` version, `u32` n_phi,
    /// `u32` n_theta, 32-byte SHA-256 of the payload, then the payload as
    /// `f64` values ordered by source band, target band, column offset
    /// `0..=n_phi/2`.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        self.materialize();
        let mut payload = Vec::with_capacity(8 * self.grid.n_theta().pow(2) * (self.half + 1));
        for c in 0..self.grid.n_theta() {
            for x in self.table(c) {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(CACHE_MAGIC)?;
        f.write_all(&CACHE_VERSION.to_le_bytes())?;
        f.write_all(&(self.grid.n_phi() as u32).to_le_bytes())?;
        f.write_all(&(self.grid.n_theta() as u32).to_le_bytes())?;
        f.write_all(&Sha256::digest(&payload))?;
        f.write_all(&payload)?;
        Ok(())
    }

    /// Reads a table written by [`GreenOperator::save_cache`] for `grid`.
    pub fn load_cache(grid: Arc<HemisphereGrid>, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| Error::Format(format!("kernel cache {}: {m}", path.display()));
        if bytes.len() < 48 || &bytes[..4] != CACHE_MAGIC {
            return Err(bad("not a kernel cache"));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
        if word(1) != CACHE_VERSION {
            return Err(bad("unsupported version"));
        }
        let dims = GridDims {
            n_phi: word(2) as usize,
            n_theta: word(3) as usize,
        };
        if dims != grid.dims() {
            return Err(bad("grid dimensions differ"));
        }
        let (digest, payload) = bytes[16..].split_at(32);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let op = Self::new(grid);
        let per_band = op.grid.n_theta() * (op.half + 1);
        if payload.len() != 8 * per_band * op.grid.n_theta() {
            return Err(bad("truncated payload"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for (c, chunk) in values.chunks_exact(per_band).enumerate() {
            let _ = op.tables[c].set(chunk.to_vec());
        }
        Ok(op)
    }
}

const CACHE_MAGIC: &[u8; 4] = b"SVGK";
const CACHE_VERSION: u32 = 1;

/// Average of `G+(x_i, .)` over the node's own cell.
///
/// The logarithmic part is integrated exactly over the geodesic disk of equal
/// area, where the chord `s` satisfies `dsigma = s ds dphi` and the disk has
/// `s^2 = w / pi`; the smooth image part is taken at the node.
fn self_value(w: f64, x3: f64) -> f64 {
    let s2 = w / PI;
    let direct = -0.5 * s2 * (0.5 * s2.ln() - 0.5);
    direct / w + INV_2PI * (2.0 * x3).ln()
}

/// `G+ v - lambda x3`.
pub fn stream_function(v: &ScalarField, lambda: f64, gp: &GreenOperator) -> Result<ScalarField> {
    let mut psi = gp.apply(v)?;
    let g = gp.grid().clone();
    for (x, p) in psi.values_mut().iter_mut().zip(g.nodes()) {
        *x -= lambda * p.x3();
    }
    Ok(psi)
}
