//! Coarse pooled map over which the scouting terms of the local cost are evaluated.

use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveMap<T> {
    pub pooling: usize,
    pub rows: usize,
    pub cols: usize,
    /// Coarse cell side (m).
    pub cell_size: f64,
    pub centers: Vec<[T; 2]>,
    /// Pooled `|ℓ^S|` per coarse cell.
    pub lambda_fls0: Vec<T>,
    /// Pooled `|ℓ^C|` per coarse cell.
    pub lambda_flc0: Vec<T>,
}

impl<T: Scalar> ActiveMap<T> {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Indices of coarse cells whose centers lie within `radius` of `p`.
    pub fn within(&self, p: [T; 2], radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(p, radius, |i| out.push(i));
        out
    }

    /// Calls `f` for every cell whose center lies within `radius` of `p`, in row-major order.
    pub fn for_each_within(&self, p: [T; 2], radius: T, mut f: impl FnMut(usize)) {
        let cs = self.cell_size;
        let (px, py, rad) = (crate::scalar::to_f64(p[0]), crate::scalar::to_f64(p[1]), crate::scalar::to_f64(radius));
        let clamp_idx = |v: f64, n: usize| (v.max(0.0) as usize).min(n);
        let c0 = clamp_idx(((px - rad) / cs - 0.5).floor(), self.cols);
        let c1 = clamp_idx(((px + rad) / cs + 0.5).ceil(), self.cols);
        let r0 = clamp_idx(((py - rad) / cs - 0.5).floor(), self.rows);
        let r1 = clamp_idx(((py + rad) / cs + 0.5).ceil(), self.rows);
        let r2 = radius * radius;
        for row in r0..r1 {
            for col in c0..c1 {
                let i = row * self.cols + col;
                let q = self.centers[i];
                let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                if dx * dx + dy * dy <= r2 {
                    f(i);
                }
            }
        }
    }
}

/// Mean-pools `|ℓ|` over `pooling × pooling` blocks of the belief grid.
pub fn build_active_map<T: Scalar>(belief: &BeliefState<T>, pooling: usize) -> Result<ActiveMap<T>> {
    let g = &belief.grid;
    if pooling == 0 || !g.rows.is_multiple_of(pooling) || !g.cols.is_multiple_of(pooling) {
        return Err(Error::Validation(format!(
            "pooling factor {pooling} does not divide the {}x{} grid",
            g.rows, g.cols
        )));
    }
    let rows = g.rows / pooling;
    let cols = g.cols / pooling;
    let cell_size = g.cell_size * pooling as f64;
    let inv = lit::<T>(1.0 / (pooling * pooling) as f64);
    let mut centers = Vec::with_capacity(rows * cols);
    let mut lambda_fls0 = Vec::with_capacity(rows * cols);
    let mut lambda_flc0 = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (mut s_sum, mut c_sum) = (T::zero(), T::zero());
            for rr in r * pooling..(r + 1) * pooling {
                for cc in c * pooling..(c + 1) * pooling {
                    let i = g.index(rr, cc);
                    s_sum = s_sum + belief.ell_s[i].abs();
                    c_sum = c_sum + belief.ell_c[i].abs();
                }
            }
            centers.push([lit((c as f64 + 0.5) * cell_size), lit((r as f64 + 0.5) * cell_size)]);
            lambda_fls0.push(s_sum * inv);
            lambda_flc0.push(c_sum * inv);
        }
    }
    Ok(ActiveMap { pooling, rows, cols, cell_size, centers, lambda_fls0, lambda_flc0 })
}
