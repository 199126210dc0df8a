//! Distances between point patterns.
//!
//! [`hausdorff`] is the classical set distance with two conventions for the
//! empty pattern: `d_H(∅, ∅) = 0` and `d_H(∅, y) = diam(S)` otherwise. The
//! combined distance adds a cardinality penalty to the Hausdorff distance
//! scaled by the window diameter:
//!
//! ```text
//! d(x, y) = d_H(x, y) / diam(S) + d0(#x, #y)
//! ```
//!
//! where `d0` is one of the [`CardinalityPenalty`] variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{dist2, PointPattern, Window};

/// Hausdorff distance between two patterns on the same window.
pub fn hausdorff(x: &PointPattern, y: &PointPattern) -> Result<f64> {
    if x.window() != y.window() {
        return Err(Error::WindowMismatch);
    }
    Ok(hausdorff_unchecked(x, y))
}

pub(crate) fn hausdorff_unchecked(x: &PointPattern, y: &PointPattern) -> f64 {
    match (x.is_empty(), y.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => x.window().diameter(),
        (false, false) => directed_sq(y, x, directed_sq(x, y, 0.0)).sqrt(),
    }
}

/// Squared directed distance `sup_{a in from} inf_{b in to} |a - b|^2`, or
/// `floor` if that is larger. The inner scan stops as soon as the running
/// minimum drops to the current maximum, since such a point cannot raise it.
fn directed_sq(from: &PointPattern, to: &PointPattern, floor: f64) -> f64 {
    let mut cmax = floor;
    for a in from.iter() {
        let mut cmin = f64::INFINITY;
        for b in to.iter() {
            let d = dist2(a, b);
            if d < cmin {
                cmin = d;
                if cmin <= cmax {
                    break;
                }
            }
        }
        if cmin > cmax {
            cmax = cmin;
        }
    }
    cmax
}

/// Cardinality penalty `d0` added to the scaled Hausdorff distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardinalityPenalty {
    /// `|Δ| / (1 + |Δ|)` with `Δ = #x - #y`.
    Cardinality,
    /// Hellinger distance between Poisson laws with means `#x`, `#y`.
    Hellinger,
    /// `1 - exp{(#y - #x) log(#x / #y)}`.
    KullbackLeibler,
}

impl CardinalityPenalty {
    pub const ALL: [CardinalityPenalty; 3] = [
        CardinalityPenalty::Cardinality,
        CardinalityPenalty::Hellinger,
        CardinalityPenalty::KullbackLeibler,
    ];

    /// Penalty for patterns with `nx` and `ny` points.
    pub fn eval(self, nx: usize, ny: usize) -> f64 {
        match self {
            CardinalityPenalty::Cardinality => d0_cardinality_counts(nx, ny),
            CardinalityPenalty::Hellinger => d0_hellinger_counts(nx, ny),
            CardinalityPenalty::KullbackLeibler => d0_kl_counts(nx, ny),
        }
    }
}

pub fn d0_cardinality_counts(nx: usize, ny: usize) -> f64 {
    let delta = nx.abs_diff(ny) as f64;
    delta / (1.0 + delta)
}

pub fn d0_hellinger_counts(nx: usize, ny: usize) -> f64 {
    let diff = (nx as f64).sqrt() - (ny as f64).sqrt();
    // -expm1 keeps precision when the counts are close.
    (-(-0.5 * diff * diff).exp_m1()).sqrt()
}

/// One empty side is maximally penalised (`1`), where the logarithm would be
/// undefined.
pub fn d0_kl_counts(nx: usize, ny: usize) -> f64 {
    if nx == ny {
        return 0.0;
    }
    if nx == 0 || ny == 0 {
        return 1.0;
    }
    let (lo, hi) = (nx.min(ny) as f64, nx.max(ny) as f64);
    -(-(hi - lo) * (hi / lo).ln()).exp_m1()
}

pub fn d0_cardinality(x: &PointPattern, y: &PointPattern) -> f64 {
    d0_cardinality_counts(x.len(), y.len())
}

pub fn d0_hellinger(x: &PointPattern, y: &PointPattern) -> f64 {
    d0_hellinger_counts(x.len(), y.len())
}

pub fn d0_kl(x: &PointPattern, y: &PointPattern) -> f64 {
    d0_kl_counts(x.len(), y.len())
}

/// Which distance a [`PatternMetric`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Hausdorff,
    Combined(CardinalityPenalty),
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Hausdorff,
        MetricKind::Combined(CardinalityPenalty::Cardinality),
        MetricKind::Combined(CardinalityPenalty::Hellinger),
        MetricKind::Combined(CardinalityPenalty::KullbackLeibler),
    ];

    /// Turns an already computed Hausdorff distance into this metric's value.
    #[inline]
    pub fn from_hausdorff(self, d_h: f64, nx: usize, ny: usize, diameter: f64) -> f64 {
        match self {
            MetricKind::Hausdorff => d_h,
            MetricKind::Combined(p) => d_h / diameter + p.eval(nx, ny),
        }
    }
}

/// A distance on point patterns observed in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMetric {
    kind: MetricKind,
    window: Window,
}

impl PatternMetric {
    pub fn new(kind: MetricKind, window: Window) -> Self {
        PatternMetric { kind, window }
    }

    pub fn hausdorff(window: Window) -> Self {
        PatternMetric::new(MetricKind::Hausdorff, window)
    }

    pub fn combined(penalty: CardinalityPenalty, window: Window) -> Self {
        PatternMetric::new(MetricKind::Combined(penalty), window)
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn distance(&self, x: &PointPattern, y: &PointPattern) -> Result<f64> {
        if x.window() != &self.window || y.window() != &self.window {
            return Err(Error::WindowMismatch);
        }
        let d_h = hausdorff_unchecked(x, y);
        Ok(self
            .kind
            .from_hausdorff(d_h, x.len(), y.len(), self.window.diameter()))
    }
}

/// `hausdorff(x, y) / diam(S) + d0(x, y)` for a combined metric, or the plain
/// Hausdorff distance for [`MetricKind::Hausdorff`].
pub fn combined_distance(m: &PatternMetric, x: &PointPattern, y: &PointPattern) -> Result<f64> {
    m.distance(x, y)
}

/// Row-major table of distances between query and reference patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceTable {
    /// Hausdorff distances from every query to every reference pattern.
    pub fn hausdorff(queries: &[&PointPattern], references: &[&PointPattern]) -> Result<Self> {
        let mut values = Vec::with_capacity(queries.len() * references.len());
        for q in queries {
            for r in references {
                values.push(hausdorff(q, r)?);
            }
        }
        Ok(DistanceTable {
            rows: queries.len(),
            cols: references.len(),
            values,
        })
    }

    /// Symmetric Hausdorff table of a sample against itself.
    pub fn hausdorff_pairwise(patterns: &[&PointPattern]) -> Result<Self> {
        let n = patterns.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = hausdorff(patterns[i], patterns[j])?;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(DistanceTable {
            rows: n,
            cols: n,
            values,
        })
    }

    /// Converts a Hausdorff table into the table of `kind`, given the point
    /// counts of the query and reference patterns.
    pub fn with_metric(
        &self,
        kind: MetricKind,
        query_counts: &[usize],
        reference_counts: &[usize],
        diameter: f64,
    ) -> DistanceTable {
        assert_eq!(query_counts.len(), self.rows);
        assert_eq!(reference_counts.len(), self.cols);
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let (i, j) = (k / self.cols, k % self.cols);
                kind.from_hausdorff(d, query_counts[i], reference_counts[j], diameter)
            })
            .collect();
        DistanceTable {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::Point;

    fn pat(w: &Window, pts: &[(f64, f64)]) -> PointPattern {
        let pts: Vec<Point> = pts.iter().map(|&(x, y)| Point::xy(x, y)).collect();
        PointPattern::new(w.clone(), &pts).unwrap()
    }

    fn n_points(n: usize) -> PointPattern {
        let w = Window::unit_square();
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| (i as f64 / (n.max(1)) as f64, 0.5))
            .collect();
        pat(&w, &pts)
    }

    #[test]
    fn hausdorff_examples() {
        let w = Window::unit_square();
        let h = |a: &[(f64, f64)], b: &[(f64, f64)]| hausdorff(&pat(&w, a), &pat(&w, b)).unwrap();
        assert_eq!(h(&[(0.0, 0.0)], &[(0.0, 0.0)]), 0.0);
        assert_eq!(h(&[(0.0, 0.0), (1.0, 0.0)], &[(0.0, 0.0)]), 1.0);
        assert_eq!(h(&[(0.0, 0.0), (1.0, 1.0)], &[(0.0, 1.0), (1.0, 0.0)]), 1.0);
    }

    #[test]
    fn hausdorff_empty_conventions() {
        let w = Window::rect(0.0, 3.0, 0.0, 4.0).unwrap();
        let e = PointPattern::empty(w.clone());
        let y = pat(&w, &[(1.0, 1.0)]);
        assert_eq!(hausdorff(&e, &e).unwrap(), 0.0);
        assert_eq!(hausdorff(&e, &y).unwrap(), 5.0);
        assert_eq!(hausdorff(&y, &e).unwrap(), 5.0);
    }

    #[test]
    fn hausdorff_rejects_window_mismatch() {
        let a = pat(&Window::unit_square(), &[(0.0, 0.0)]);
        let b = pat(&Window::rect(0.0, 2.0, 0.0, 1.0).unwrap(), &[(0.0, 0.0)]);
        assert!(matches!(hausdorff(&a, &b), Err(Error::WindowMismatch)));
    }

    #[test]
    fn cardinality_examples() {
        assert_eq!(d0_cardinality(&n_points(5), &n_points(5)), 0.0);
        assert!((d0_cardinality(&n_points(3), &n_points(5)) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d0_cardinality(&n_points(0), &n_points(1)), 0.5);
    }

    #[test]
    fn hellinger_examples() {
        assert_eq!(d0_hellinger(&n_points(4), &n_points(4)), 0.0);
        let v = d0_hellinger(&n_points(0), &n_points(4));
        assert!((v - (1.0 - (-2f64).exp()).sqrt()).abs() < 1e-12);
        assert!((v - 0.929873).abs() < 1e-6);
        let v = d0_hellinger(&n_points(1), &n_points(4));
        assert!((v - 0.627271).abs() < 1e-6);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(d0_kl(&n_points(7), &n_points(7)), 0.0);
        assert!((d0_kl(&n_points(1), &n_points(2)) - 0.5).abs() < 1e-15);
        assert!((d0_kl(&n_points(2), &n_points(1)) - 0.5).abs() < 1e-15);
        assert_eq!(d0_kl(&n_points(0), &n_points(3)), 1.0);
        assert_eq!(d0_kl(&n_points(0), &n_points(0)), 0.0);
    }

    #[test]
    fn combined_examples() {
        let w = Window::unit_square();
        let m = PatternMetric::combined(CardinalityPenalty::Cardinality, w.clone());
        let x = pat(&w, &[(0.0, 0.0)]);
        assert_eq!(combined_distance(&m, &x, &x).unwrap(), 0.0);
        let y = pat(&w, &[(1.0, 1.0)]);
        assert!((combined_distance(&m, &x, &y).unwrap() - 1.0).abs() < 1e-15);
        let z = pat(&w, &[(0.0, 0.0), (1.0, 1.0)]);
        assert!((combined_distance(&m, &x, &z).unwrap() - 1.5).abs() < 1e-15);
        let plain = PatternMetric::hausdorff(w);
        assert!((plain.distance(&x, &z).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
