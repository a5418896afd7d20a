//! Adaptive macro/micro region graph.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::scalar::{to_f64, Scalar};
use crate::sensors::Layer;
use crate::world::{GridSpec, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeLevel {
    Macro,
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub center: [f64; 2],
    pub region: Rect,
    pub level: NodeLevel,
    pub rho_bar: f64,
    pub nu2_bar: f64,
    /// Region area over the nominal micro-region area.
    pub area_weight: f64,
    pub parent: Option<usize>,
    #[serde(skip)]
    pub cells: Vec<usize>,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    pub grid: GridSpec,
    pub macro_cells: usize,
    pub micro_cells: usize,
    pub nodes: Vec<GraphNode>,
    pub visited: BTreeSet<usize>,
}

impl SpatialGraph {
    /// Tiles the map with macro regions of `macro_size` meters (truncated at the far edges).
    pub fn new(grid: GridSpec, macro_size: f64, micro_size: f64) -> Self {
        let macro_cells = ((macro_size / grid.cell_size).round() as usize).max(1);
        let micro_cells = ((micro_size / grid.cell_size).round() as usize).clamp(1, macro_cells);
        let mut g = Self { grid, macro_cells, micro_cells, nodes: Vec::new(), visited: BTreeSet::new() };
        for r0 in (0..grid.rows).step_by(macro_cells) {
            for c0 in (0..grid.cols).step_by(macro_cells) {
                let r1 = (r0 + macro_cells).min(grid.rows);
                let c1 = (c0 + macro_cells).min(grid.cols);
                g.push(r0..r1, c0..c1, NodeLevel::Macro, None);
            }
        }
        g
    }

    fn micro_area(&self) -> f64 {
        let s = self.micro_cells as f64 * self.grid.cell_size;
        s * s
    }

    fn push(&mut self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, level: NodeLevel, parent: Option<usize>) {
        let cs = self.grid.cell_size;
        let region = Rect::new(cols.start as f64 * cs, rows.start as f64 * cs, cols.end as f64 * cs, rows.end as f64 * cs);
        let cells = rows.clone().flat_map(|r| cols.clone().map(move |c| (r, c))).map(|(r, c)| self.grid.index(r, c)).collect();
        let id = self.nodes.len();
        let area_weight = region.area() / self.micro_area();
        self.nodes.push(GraphNode {
            id,
            center: region.center(),
            region,
            level,
            rho_bar: 0.5,
            nu2_bar: 0.25,
            area_weight,
            parent,
            cells,
            active: true,
        });
    }

    pub fn active(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(|n| n.active)
    }

    pub fn macro_nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.active().filter(|n| n.level == NodeLevel::Macro)
    }

    pub fn micro_nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.active().filter(|n| n.level == NodeLevel::Micro)
    }

    pub fn is_visited(&self, id: usize) -> bool {
        self.visited.contains(&id)
    }

    pub fn mark_visited(&mut self, id: usize) {
        self.visited.insert(id);
    }

    /// Active node whose region contains `p`.
    pub fn node_at(&self, p: [f64; 2]) -> Option<&GraphNode> {
        self.active().find(|n| n.region.contains(p))
    }

    /// Replaces every macro node whose mean substrate entropy is below `h_split` by its micro
    /// tiling. Returns the number of macro nodes split.
    pub fn maybe_split<T: Scalar>(&mut self, belief: &BeliefState<T>, h_split: f64) -> usize {
        let to_split: Vec<usize> = self
            .macro_nodes()
            .filter(|n| to_f64(belief.mean_entropy(Layer::Substrate, &n.cells)) < h_split)
            .map(|n| n.id)
            .collect();
        let cs = self.grid.cell_size;
        for &id in &to_split {
            self.nodes[id].active = false;
            let region = self.nodes[id].region;
            let (r0, r1) = ((region.y0 / cs).round() as usize, (region.y1 / cs).round() as usize);
            let (c0, c1) = ((region.x0 / cs).round() as usize, (region.x1 / cs).round() as usize);
            for rr in (r0..r1).step_by(self.micro_cells) {
                for cc in (c0..c1).step_by(self.micro_cells) {
                    let rows = rr..(rr + self.micro_cells).min(r1);
                    let cols = cc..(cc + self.micro_cells).min(c1);
                    self.push(rows, cols, NodeLevel::Micro, Some(id));
                }
            }
        }
        to_split.len()
    }

    /// Refreshes `(ρ̄, ν̄²)` on every active micro node.
    pub fn aggregate<T: Scalar>(&mut self, belief: &BeliefState<T>) {
        for n in self.nodes.iter_mut().filter(|n| n.active && n.level == NodeLevel::Micro) {
            let (rho, nu2) = belief.region_stats(&n.cells).expect("micro regions are non-empty");
            n.rho_bar = to_f64(rho);
            n.nu2_bar = to_f64(nu2);
        }
    }
}
