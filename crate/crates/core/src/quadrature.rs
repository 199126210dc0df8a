//! Regular grids over a window and the midpoint rule.

use crate::pattern::Window;

/// Tensor-product grid of nodes over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    window: Window,
    axes: Vec<Vec<f64>>,
    cell_volume: f64,
}

impl Grid {
    /// Cell midpoints of a regular `nodes^d` partition of the window.
    pub fn uniform(window: Window, nodes: usize) -> Self {
        let counts = vec![nodes; window.dim()];
        Grid::midpoints(window, &counts)
    }

    /// Cell midpoints with a separate node count per axis.
    pub fn midpoints(window: Window, counts: &[usize]) -> Self {
        assert_eq!(counts.len(), window.dim(), "one node count per axis");
        let mut axes = Vec::with_capacity(counts.len());
        let mut cell_volume = 1.0;
        for (axis, &n) in counts.iter().enumerate() {
            let n = n.max(1);
            let h = window.side(axis) / n as f64;
            let lo = window.lower()[axis];
            axes.push((0..n).map(|i| lo + (i as f64 + 0.5) * h).collect());
            cell_volume *= h;
        }
        Grid {
            window,
            axes,
            cell_volume,
        }
    }

    /// `nodes + 1` equispaced nodes per axis including both ends. Used for
    /// spot checks, not for integration.
    pub fn corners(window: Window, nodes: usize) -> Self {
        let n = nodes.max(1);
        let axes = (0..window.dim())
            .map(|axis| {
                let lo = window.lower()[axis];
                let h = window.side(axis) / n as f64;
                (0..=n)
                    .map(|i| {
                        if i == n {
                            window.upper()[axis]
                        } else {
                            lo + i as f64 * h
                        }
                    })
                    .collect()
            })
            .collect();
        Grid {
            window,
            axes,
            cell_volume: f64::NAN,
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell (the midpoint-rule weight).
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Node coordinates in row-major order (last axis fastest).
    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let total = self.len();
        let d = self.axes.len();
        let mut index = vec![0usize; d];
        (0..total).map(move |k| {
            if k > 0 {
                for a in (0..d).rev() {
                    index[a] += 1;
                    if index[a] < self.axes[a].len() {
                        break;
                    }
                    index[a] = 0;
                }
            }
            (0..d).map(|a| self.axes[a][index[a]]).collect()
        })
    }

    /// Midpoint rule: `cell_volume * sum_nodes f(node)`.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut buf = Vec::with_capacity(self.axes.len());
        let mut sum = 0.0;
        for node in self.nodes() {
            buf.clear();
            buf.extend_from_slice(&node);
            sum += f(&buf);
        }
        sum * self.cell_volume
    }
}
