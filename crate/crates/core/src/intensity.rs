//! Edge-corrected kernel intensity estimation.
//!
//! For one realisation `{xi_1, ..., xi_n}` the estimate at `zeta` is
//!
//! ```text
//! lambda_hat(zeta) = 1 / K(zeta) * sum_i sigma^-d k(|zeta - xi_i| / sigma)
//! K(zeta)          = integral over S of sigma^-d k(|zeta - xi| / sigma) dxi
//! ```
//!
//! and `m` replicates are averaged. `K` is the edge correction: it is the
//! mass of the kernel that falls inside the window, so points near the
//! boundary are not under-counted. Every replicate shares `K`, which makes the
//! replicate average equal to one pooled sum divided by `m * K(zeta)`.
//!
//! `K` and the integrated intensity are computed with the midpoint rule on a
//! regular grid. The grid is refined automatically so that each bandwidth
//! spans several cells. For the Gaussian kernel on a box both the kernel and
//! the grid factor over axes, so the midpoint sums reduce to products of
//! one-dimensional sums; the uniform kernel goes through the plain grid sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{check_shared_window, dist2, PointPattern, Window};
use crate::quadrature::Grid;

/// Default quadrature nodes per axis.
pub const DEFAULT_GRID: usize = 64;

/// Gaussian terms beyond this many bandwidths are below `3e-18` of the peak
/// and are skipped.
const GAUSSIAN_CUTOFF: f64 = 9.0;

/// Relative intensity floor used when taking logarithms.
pub const FLOOR_FRACTION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `k(u) = exp(-u^2 / 2)`, positive on the whole window.
    Gaussian,
    /// `k(u) = 1{u <= 1}`.
    Uniform,
}

impl KernelKind {
    /// Minimum quadrature cells per bandwidth.
    fn cells_per_sigma(self) -> f64 {
        match self {
            KernelKind::Gaussian => 4.0,
            // The indicator needs a fine lattice to resolve the disc edge.
            KernelKind::Uniform => 20.0,
        }
    }
}

/// A radial kernel with bandwidth `sigma` in dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: f64,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive, got {sigma}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be positive"));
        }
        Ok(KernelSpec { kind, sigma, dim })
    }

    pub fn gaussian(sigma: f64, dim: usize) -> Result<Self> {
        KernelSpec::new(KernelKind::Gaussian, sigma, dim)
    }

    pub fn uniform(sigma: f64, dim: usize) -> Result<Self> {
        KernelSpec::new(KernelKind::Uniform, sigma, dim)
    }

    /// The profile `k(u)`.
    pub fn profile(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-0.5 * u * u).exp(),
            KernelKind::Uniform => {
                if u.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `sigma^-d k(rho / sigma)`.
    pub fn scaled(&self, rho: f64) -> f64 {
        self.profile(rho / self.sigma) / self.sigma.powi(self.dim as i32)
    }

    /// Distance beyond which the kernel is treated as zero.
    pub fn reach(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => GAUSSIAN_CUTOFF * self.sigma,
            KernelKind::Uniform => self.sigma,
        }
    }

    /// Quadrature grid for `window`: at least `base` nodes per axis, refined
    /// until a bandwidth spans the kernel's minimum number of cells.
    pub fn grid_for(&self, window: &Window, base: usize) -> Grid {
        let counts: Vec<usize> = (0..window.dim())
            .map(|axis| {
                let needed = (window.side(axis) * self.kind.cells_per_sigma() / self.sigma).ceil();
                base.max(needed as usize).max(1)
            })
            .collect();
        Grid::midpoints(window.clone(), &counts)
    }
}

/// Precomputed `sigma^-d k(sqrt(d2) / sigma)` as a function of squared distance.
#[derive(Debug, Clone, Copy)]
struct ScaledKernel {
    kind: KernelKind,
    inv_two_sigma2: f64,
    norm: f64,
    reach2: f64,
}

impl ScaledKernel {
    fn new(k: &KernelSpec) -> Self {
        ScaledKernel {
            kind: k.kind,
            inv_two_sigma2: 0.5 / (k.sigma * k.sigma),
            norm: k.sigma.powi(k.dim as i32).recip(),
            reach2: k.reach() * k.reach(),
        }
    }

    #[inline]
    fn at_sq(&self, d2: f64) -> f64 {
        if d2 > self.reach2 {
            return 0.0;
        }
        match self.kind {
            KernelKind::Gaussian => self.norm * (-d2 * self.inv_two_sigma2).exp(),
            KernelKind::Uniform => self.norm,
        }
    }
}

/// Bucket index over a set of points for fixed-radius queries.
#[derive(Debug, Clone)]
struct CellIndex {
    dim: usize,
    lower: Vec<f64>,
    cell: Vec<f64>,
    counts: Vec<usize>,
    starts: Vec<usize>,
    coords: Vec<f64>,
}

const MAX_CELLS: usize = 1 << 14;

impl CellIndex {
    fn build(window: &Window, radius: f64, coords: &[f64]) -> Self {
        let dim = window.dim();
        let per_axis_cap = (MAX_CELLS as f64).powf(1.0 / dim as f64).floor().max(1.0) as usize;
        let counts: Vec<usize> = (0..dim)
            .map(|a| ((window.side(a) / radius).ceil() as usize).clamp(1, per_axis_cap))
            .collect();
        let cell: Vec<f64> = (0..dim)
            .map(|a| window.side(a) / counts[a] as f64)
            .collect();
        let mut index = CellIndex {
            dim,
            lower: window.lower().to_vec(),
            cell,
            counts,
            starts: Vec::new(),
            coords: Vec::new(),
        };
        let total: usize = index.counts.iter().product();
        let ids: Vec<usize> = coords.chunks_exact(dim).map(|p| index.cell_of(p)).collect();
        let mut starts = vec![0usize; total + 1];
        for &c in &ids {
            starts[c + 1] += 1;
        }
        for c in 0..total {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut sorted = vec![0.0; coords.len()];
        for (p, &c) in coords.chunks_exact(dim).zip(&ids) {
            let at = fill[c];
            sorted[at * dim..(at + 1) * dim].copy_from_slice(p);
            fill[c] += 1;
        }
        index.starts = starts;
        index.coords = sorted;
        index
    }

    fn axis_cell(&self, axis: usize, v: f64) -> usize {
        let c = ((v - self.lower[axis]) / self.cell[axis]).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.counts[axis] - 1)
        }
    }

    fn cell_of(&self, p: &[f64]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.counts[a] + self.axis_cell(a, p[a]))
    }

    /// Calls `f` with every indexed point whose cell intersects the box of
    /// half-width `radius` around `p`.
    fn for_each_near(&self, p: &[f64], radius: f64, mut f: impl FnMut(&[f64])) {
        let d = self.dim;
        if self.coords.is_empty() {
            return;
        }
        let lo: Vec<usize> = (0..d).map(|a| self.axis_cell(a, p[a] - radius)).collect();
        let hi: Vec<usize> = (0..d).map(|a| self.axis_cell(a, p[a] + radius)).collect();
        let mut idx = lo.clone();
        loop {
            let flat = (0..d).fold(0, |acc, a| acc * self.counts[a] + idx[a]);
            for q in self.coords[self.starts[flat] * d..self.starts[flat + 1] * d].chunks_exact(d) {
                f(q);
            }
            // Odometer over the cell box, last axis fastest.
            let mut a = d;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                if idx[a] < hi[a] {
                    idx[a] += 1;
                    break;
                }
                idx[a] = lo[a];
            }
        }
    }
}

/// Edge-correction integral `K(zeta)` tabulated on the quadrature grid.
#[derive(Debug, Clone)]
enum Normalizer {
    /// Gaussian kernel: `K(node) = prod_a factors[a][node_a]`.
    Separable { factors: Vec<Vec<f64>> },
    /// Any kernel: one value per grid node, row-major.
    Table { values: Vec<f64> },
}

/// Replicate-averaged kernel intensity estimate fitted to `m` patterns.
#[derive(Debug, Clone)]
pub struct IntensityEstimate {
    window: Window,
    kernel: KernelSpec,
    scaled: ScaledKernel,
    grid: Grid,
    replicates: usize,
    points: CellIndex,
    pooled: usize,
    normalizer: Normalizer,
    integrated: f64,
}

impl IntensityEstimate {
    /// Fits the estimator to `training` (all on one window) using at least
    /// `base_nodes` quadrature nodes per axis.
    pub fn fit(training: &[&PointPattern], kernel: KernelSpec, base_nodes: usize) -> Result<Self> {
        let first = training
            .first()
            .ok_or_else(|| Error::invalid("intensity estimation needs at least one pattern"))?;
        let window = first.window().clone();
        check_shared_window(&window, training.iter().copied())?;
        if kernel.dim != window.dim() {
            return Err(Error::DimensionMismatch {
                expected: window.dim(),
                got: kernel.dim,
            });
        }
        let mut coords = Vec::new();
        for p in training {
            coords.extend_from_slice(p.coords());
        }
        let pooled = coords.len() / window.dim();
        let grid = kernel.grid_for(&window, base_nodes);
        let scaled = ScaledKernel::new(&kernel);
        let points = CellIndex::build(&window, kernel.reach(), &coords);

        let normalizer = match kernel.kind {
            KernelKind::Gaussian => Normalizer::Separable {
                factors: (0..window.dim())
                    .map(|a| {
                        grid.axis(a)
                            .iter()
                            .map(|&t| gaussian_axis_factor(&grid, a, &kernel, t))
                            .collect()
                    })
                    .collect(),
            },
            KernelKind::Uniform => Normalizer::Table {
                values: grid
                    .nodes()
                    .map(|node| uniform_normalizer(&grid, &kernel, &node))
                    .collect(),
            },
        };
        let positive = match &normalizer {
            Normalizer::Separable { factors } => factors.iter().flatten().all(|v| *v > 0.0),
            Normalizer::Table { values } => values.iter().all(|v| *v > 0.0),
        };
        if !positive {
            return Err(Error::Numeric(
                "edge-correction integral vanished on the quadrature grid".into(),
            ));
        }

        let mut est = IntensityEstimate {
            window,
            kernel,
            scaled,
            grid,
            replicates: training.len(),
            points,
            pooled,
            normalizer,
            integrated: 0.0,
        };
        est.integrated = match kernel.kind {
            KernelKind::Gaussian => est.integrated_separable(),
            KernelKind::Uniform => est.integrated_by_grid(),
        };
        Ok(est)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of replicates `m`.
    pub fn replicates(&self) -> usize {
        self.replicates
    }

    /// Total number of training points across replicates.
    pub fn pooled_points(&self) -> usize {
        self.pooled
    }

    /// `K(zeta)` by the midpoint rule on this estimate's grid.
    pub fn normalizer(&self, zeta: &[f64]) -> Result<f64> {
        self.check_point(zeta)?;
        Ok(self.normalizer_unchecked(zeta))
    }

    fn normalizer_unchecked(&self, zeta: &[f64]) -> f64 {
        match self.kernel.kind {
            KernelKind::Gaussian => (0..self.window.dim())
                .map(|a| gaussian_axis_factor(&self.grid, a, &self.kernel, zeta[a]))
                .product(),
            KernelKind::Uniform => uniform_normalizer(&self.grid, &self.kernel, zeta),
        }
    }

    /// The tabulated `K` at every grid node, row-major.
    pub fn normalizer_table(&self) -> Vec<f64> {
        match &self.normalizer {
            Normalizer::Table { values } => values.clone(),
            Normalizer::Separable { factors } => {
                let mut out = vec![1.0];
                for f in factors {
                    out = out
                        .iter()
                        .flat_map(|v| f.iter().map(move |g| v * g))
                        .collect();
                }
                out
            }
        }
    }

    /// Kernel sum over all pooled training points, before normalisation.
    fn pooled_sum(&self, zeta: &[f64]) -> f64 {
        let mut sum = 0.0;
        self.points.for_each_near(zeta, self.kernel.reach(), |q| {
            sum += self.scaled.at_sq(dist2(zeta, q));
        });
        sum
    }

    /// The replicate average at `zeta`.
    pub fn estimate(&self, zeta: &[f64]) -> Result<f64> {
        self.check_point(zeta)?;
        Ok(self.eval(zeta))
    }

    /// The replicate average at a point assumed to lie in the window.
    pub fn eval(&self, zeta: &[f64]) -> f64 {
        if self.pooled == 0 {
            return 0.0;
        }
        self.pooled_sum(zeta) / (self.replicates as f64 * self.normalizer_unchecked(zeta))
    }

    /// `mu_hat(S)`, the integral of the estimate over the window.
    pub fn integrated(&self) -> f64 {
        self.integrated
    }

    /// Lower clamp applied before taking logarithms: a tiny fraction of the
    /// average estimated intensity.
    pub fn floor(&self) -> f64 {
        (FLOOR_FRACTION * self.integrated / self.window.measure()).max(f64::MIN_POSITIVE)
    }

    /// Midpoint-rule integral of the estimate, evaluated node by node.
    pub fn integrated_by_grid(&self) -> f64 {
        if self.pooled == 0 {
            return 0.0;
        }
        let table = self.normalizer_table();
        let mut total = 0.0;
        for (node, k) in self.grid.nodes().zip(table) {
            total += self.pooled_sum(&node) / k;
        }
        total * self.grid.cell_volume() / self.replicates as f64
    }

    /// The same midpoint sum as [`Self::integrated_by_grid`], factored per
    /// point and per axis (Gaussian kernel only).
    fn integrated_separable(&self) -> f64 {
        let factors = match &self.normalizer {
            Normalizer::Separable { factors } => factors,
            Normalizer::Table { .. } => return self.integrated_by_grid(),
        };
        let d = self.window.dim();
        let sigma = self.kernel.sigma;
        let reach = self.kernel.reach();
        let inv = 0.5 / (sigma * sigma);
        let mut total = 0.0;
        for p in self.points.coords.chunks_exact(d) {
            let mut prod = 1.0;
            for a in 0..d {
                let axis = self.grid.axis(a);
                let h = self.window.side(a) / axis.len() as f64;
                let (lo, hi) = node_range(axis, p[a] - reach, p[a] + reach);
                let mut s = 0.0;
                for n in lo..hi {
                    let dt = axis[n] - p[a];
                    s += (-dt * dt * inv).exp() / factors[a][n];
                }
                prod *= s * h / sigma;
            }
            total += prod;
        }
        total / self.replicates as f64
    }

    /// Estimates on a uniform output grid, as `(node, value)` pairs.
    pub fn on_grid(&self, nodes: usize) -> Vec<(Vec<f64>, f64)> {
        Grid::uniform(self.window.clone(), nodes)
            .nodes()
            .map(|n| {
                let v = self.eval(&n);
                (n, v)
            })
            .collect()
    }

    fn check_point(&self, zeta: &[f64]) -> Result<()> {
        if !self.window.contains(zeta)? {
            return Err(Error::OutsideWindow(zeta.to_vec()));
        }
        Ok(())
    }
}

/// Indices `[lo, hi)` of sorted `axis` values within `[from, to]`.
fn node_range(axis: &[f64], from: f64, to: f64) -> (usize, usize) {
    let lo = axis.partition_point(|&t| t < from);
    let hi = axis.partition_point(|&t| t <= to);
    (lo, hi.max(lo))
}

/// One axis of the Gaussian edge correction:
/// `h / sigma * sum_n exp(-(t_n - z)^2 / (2 sigma^2))`.
fn gaussian_axis_factor(grid: &Grid, axis: usize, kernel: &KernelSpec, z: f64) -> f64 {
    let nodes = grid.axis(axis);
    let h = grid.window().side(axis) / nodes.len() as f64;
    let sigma = kernel.sigma;
    let inv = 0.5 / (sigma * sigma);
    let (lo, hi) = node_range(nodes, z - kernel.reach(), z + kernel.reach());
    let s: f64 = nodes[lo..hi]
        .iter()
        .map(|t| (-(t - z) * (t - z) * inv).exp())
        .sum();
    s * h / sigma
}

/// Midpoint sum of the uniform kernel over the grid nodes inside the disc of
/// radius `sigma` about `zeta`. Nodes on the last axis form one run per line,
/// so only the leading axes are enumerated.
fn uniform_normalizer(grid: &Grid, kernel: &KernelSpec, zeta: &[f64]) -> f64 {
    let d = grid.window().dim();
    let r2 = kernel.sigma * kernel.sigma;
    let last = grid.axis(d - 1);
    let ranges: Vec<(usize, usize)> = (0..d - 1)
        .map(|a| node_range(grid.axis(a), zeta[a] - kernel.sigma, zeta[a] + kernel.sigma))
        .collect();
    if ranges.iter().any(|(lo, hi)| lo >= hi) {
        return 0.0;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut count = 0usize;
    'outer: loop {
        let partial: f64 = (0..d - 1)
            .map(|a| (grid.axis(a)[idx[a]] - zeta[a]).powi(2))
            .sum();
        if partial <= r2 {
            let half = (r2 - partial).sqrt();
            let (lo, hi) = node_range(last, zeta[d - 1] - half, zeta[d - 1] + half);
            count += hi - lo;
        }
        let mut a = d - 1;
        loop {
            if a == 0 {
                break 'outer;
            }
            a -= 1;
            if idx[a] + 1 < ranges[a].1 {
                idx[a] += 1;
                break;
            }
            idx[a] = ranges[a].0;
        }
    }
    count as f64 * grid.cell_volume() / kernel.sigma.powi(d as i32)
}

/// `K(zeta)` for a single-pattern estimate; convenience wrapper.
pub fn normalizer(e: &IntensityEstimate, zeta: &[f64]) -> Result<f64> {
    e.normalizer(zeta)
}

/// Single-realisation estimate at `zeta`.
pub fn estimate_single(pattern: &PointPattern, kernel: KernelSpec, zeta: &[f64]) -> Result<f64> {
    IntensityEstimate::fit(&[pattern], kernel, DEFAULT_GRID)?.estimate(zeta)
}

/// Replicate average at `zeta`.
pub fn estimate_replicates(e: &IntensityEstimate, zeta: &[f64]) -> Result<f64> {
    e.estimate(zeta)
}

/// `mu_hat(S)` of a fitted estimate.
pub fn integrated_intensity(e: &IntensityEstimate) -> f64 {
    e.integrated()
}

/// Anything that can play the role of a class intensity in the Bayes rule.
pub trait IntensityModel: Send + Sync {
    fn window(&self) -> &Window;
    /// Intensity at a point of the window.
    fn intensity(&self, p: &[f64]) -> f64;
    /// Integral of the intensity over the window.
    fn integrated(&self) -> f64;
    /// Value substituted for intensities below it before taking logs.
    fn floor(&self) -> f64 {
        (FLOOR_FRACTION * self.integrated() / self.window().measure()).max(f64::MIN_POSITIVE)
    }
}

impl IntensityModel for IntensityEstimate {
    fn window(&self) -> &Window {
        &self.window
    }
    fn intensity(&self, p: &[f64]) -> f64 {
        self.eval(p)
    }
    fn integrated(&self) -> f64 {
        self.integrated
    }
}
