//! Grid environment, hidden ground truth and map files.

mod generate;
mod mapfile;

pub use generate::{generate_map, Difficulty, MapGenConfig};
pub use mapfile::{load_map, parse_map, save_map, write_map};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square-cell raster over a `width_m × height_m` rectangle anchored at the origin.
///
/// Cell `i = row * cols + col` has its center at `((col + ½)·cell_size, (row + ½)·cell_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(width_m: f64, height_m: f64, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && width_m > 0.0 && height_m > 0.0) {
            return Err(Error::Validation(format!(
                "grid dimensions must be positive (width {width_m}, height {height_m}, cell {cell_size})"
            )));
        }
        let cols = whole_multiple(width_m, cell_size).ok_or_else(|| {
            Error::Validation(format!("width {width_m} is not a multiple of cell size {cell_size}"))
        })?;
        let rows = whole_multiple(height_m, cell_size).ok_or_else(|| {
            Error::Validation(format!("height {height_m} is not a multiple of cell size {cell_size}"))
        })?;
        Ok(Self { width_m, height_m, cell_size, rows, cols })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    #[inline]
    pub fn row_col(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }

    #[inline]
    pub fn center(&self, i: usize) -> [f64; 2] {
        let (r, c) = self.row_col(i);
        [(c as f64 + 0.5) * self.cell_size, (r as f64 + 0.5) * self.cell_size]
    }

    /// Cell containing a point, if the point lies on the map (half-open on the max edges).
    pub fn cell_at(&self, p: [f64; 2]) -> Option<usize> {
        if !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] < self.width_m && p[1] < self.height_m) {
            return None;
        }
        let c = ((p[0] / self.cell_size) as usize).min(self.cols - 1);
        let r = ((p[1] / self.cell_size) as usize).min(self.rows - 1);
        Some(self.index(r, c))
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width_m, self.height_m)
    }

    /// Range of cell rows/cols whose centers may lie within `radius` of `p`, clipped to the map.
    pub fn window(&self, p: [f64; 2], radius: f64) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let lo = |v: f64| ((v - radius) / self.cell_size - 0.5).floor().max(0.0) as usize;
        let hi = |v: f64, n: usize| (((v + radius) / self.cell_size - 0.5).ceil().max(-1.0) + 1.0).min(n as f64) as usize;
        let c0 = lo(p[0]).min(self.cols);
        let r0 = lo(p[1]).min(self.rows);
        (r0..hi(p[1], self.rows).max(r0), c0..hi(p[0], self.cols).max(c0))
    }
}

fn whole_multiple(len: f64, step: f64) -> Option<usize> {
    let n = (len / step).round();
    if n < 1.0 || ((n * step) - len).abs() > 1e-9 * len.max(1.0) {
        None
    } else {
        Some(n as usize)
    }
}

/// Axis-aligned rectangle `[x0, x1) × [y0, y1)` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    #[inline]
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] < self.x1 && p[1] >= self.y0 && p[1] < self.y1
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

/// Cells whose centers lie inside `region`. Empty intersection gives an empty set.
pub fn cells_in_region(spec: &GridSpec, region: &Rect) -> Vec<usize> {
    if region.area() <= 0.0 {
        return Vec::new();
    }
    let cs = spec.cell_size;
    let first = |v: f64, n: usize| (((v / cs) - 0.5).ceil() - 1.0).clamp(0.0, n as f64) as usize;
    let last = |v: f64, n: usize| (((v / cs) - 0.5).ceil() + 1.0).clamp(0.0, n as f64) as usize;
    let (c0, c1) = (first(region.x0, spec.cols), last(region.x1, spec.cols));
    let (r0, r1) = (first(region.y0, spec.rows), last(region.y1, spec.rows));
    let mut out = Vec::new();
    for r in r0..r1 {
        for c in c0..c1 {
            let i = spec.index(r, c);
            if region.contains(spec.center(i)) {
                out.push(i);
            }
        }
    }
    out
}

/// Hidden per-cell layers: hard substrate `s` and coral presence `c`, with `c ⊆ s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spec: GridSpec,
    pub substrate: Vec<bool>,
    pub coral: Vec<bool>,
    pub seed: Option<u64>,
    pub difficulty: Option<Difficulty>,
}

impl GroundTruth {
    pub fn new(spec: GridSpec, substrate: Vec<bool>, coral: Vec<bool>) -> Result<Self> {
        let gt = Self { spec, substrate, coral, seed: None, difficulty: None };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.spec.len();
        if self.substrate.len() != n || self.coral.len() != n {
            return Err(Error::Validation(format!(
                "layer sizes ({}, {}) do not match grid of {n} cells",
                self.substrate.len(),
                self.coral.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| self.coral[i] && !self.substrate[i]) {
            let (r, c) = self.spec.row_col(i);
            return Err(Error::Validation(format!("coral on sand at cell {i} (row {r}, col {c})")));
        }
        Ok(())
    }

    pub fn coral_count(&self) -> usize {
        self.coral.iter().filter(|&&c| c).count()
    }

    pub fn hard_count(&self) -> usize {
        self.substrate.iter().filter(|&&s| s).count()
    }

    pub fn fill_fraction(&self) -> f64 {
        self.hard_count() as f64 / self.spec.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(50.0, 50.0, 0.25).unwrap()
    }

    #[test]
    fn grid_dims() {
        let g = grid();
        assert_eq!((g.rows, g.cols), (200, 200));
        assert!(GridSpec::new(10.0, 10.0, 0.3).is_err());
        assert!(GridSpec::new(0.0, 10.0, 0.25).is_err());
    }

    #[test]
    fn index_center_bijection() {
        let g = GridSpec::new(3.0, 2.0, 0.5).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.cell_at(g.center(i)), Some(i));
        }
        assert_eq!(g.cell_at([3.0, 0.1]), None);
    }

    #[test]
    fn full_map_region_is_all_cells() {
        let g = grid();
        assert_eq!(cells_in_region(&g, &g.bounds()).len(), g.len());
    }

    #[test]
    fn two_meter_region_has_64_cells() {
        // (2 / 0.25)^2 by counting
        let g = grid();
        let cells = cells_in_region(&g, &Rect::new(10.0, 10.0, 12.0, 12.0));
        assert_eq!(cells.len(), 64);
        let unaligned = cells_in_region(&g, &Rect::new(10.1, 3.3, 12.1, 5.3));
        assert_eq!(unaligned.len(), 64);
    }

    #[test]
    fn zero_area_and_outside_regions_are_empty() {
        let g = grid();
        assert!(cells_in_region(&g, &Rect::new(5.0, 5.0, 5.0, 9.0)).is_empty());
        assert!(cells_in_region(&g, &Rect::new(60.0, 60.0, 70.0, 70.0)).is_empty());
    }

    #[test]
    fn adjacent_regions_do_not_share_cells() {
        let g = grid();
        // boundary on a cell center line: half-open keeps the shared centers on one side
        let a = cells_in_region(&g, &Rect::new(0.0, 0.0, 1.125, 2.0));
        let b = cells_in_region(&g, &Rect::new(1.125, 0.0, 2.0, 2.0));
        let whole = cells_in_region(&g, &Rect::new(0.0, 0.0, 2.0, 2.0));
        assert_eq!(a.len() + b.len(), whole.len());
        assert!(a.iter().all(|i| !b.contains(i)));
    }

    #[test]
    fn window_covers_disk() {
        let g = grid();
        let p = [10.3, 40.9];
        let (rr, cc) = g.window(p, 3.0);
        for i in 0..g.len() {
            let c = g.center(i);
            if (c[0] - p[0]).hypot(c[1] - p[1]) <= 3.0 {
                let (r, col) = g.row_col(i);
                assert!(rr.contains(&r) && cc.contains(&col));
            }
        }
    }
}
