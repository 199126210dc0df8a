//! Windows, points and point patterns.
//!
//! A [`Window`] is a closed axis-aligned box in R^d carrying Lebesgue
//! measure. A [`PointPattern`] is a finite list of points inside a window;
//! coordinates are stored flat (`len * dim` values) so the hot loops in the
//! metric and estimator code walk contiguous memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed box `[lower_0, upper_0] x ... x [lower_{d-1}, upper_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub struct Window {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<WindowRepr> for Window {
    type Error = Error;
    fn try_from(r: WindowRepr) -> Result<Self> {
        Window::new(r.lower, r.upper)
    }
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        WindowRepr {
            lower: w.lower,
            upper: w.upper,
        }
    }
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("window must have at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::invalid(format!(
                    "window axis {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Window { lower, upper })
    }

    /// `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Window::new(vec![x0, y0], vec![x1, y1])
    }

    pub fn unit_square() -> Self {
        Window::rect(0.0, 1.0, 0.0, 1.0).expect("unit square is valid")
    }

    /// `[lo, hi]^d`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Window::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Lebesgue measure of the box.
    pub fn measure(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    /// Length of the main diagonal, which is the largest distance between two
    /// points of the box.
    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.side(i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        self.check_dim(p.len())?;
        Ok(self.contains_unchecked(p))
    }

    pub(crate) fn contains_unchecked(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// The box scaled about the origin by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid("scale factor must be positive"));
        }
        Window::new(
            self.lower.iter().map(|v| v * factor).collect(),
            self.upper.iter().map(|v| v * factor).collect(),
        )
    }

    /// Smallest box containing every point, widened by `margin` times the
    /// extent on each axis. Degenerate axes get a unit extent.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a [f64]>, margin: f64) -> Result<Self> {
        let mut lower: Vec<f64> = Vec::new();
        let mut upper: Vec<f64> = Vec::new();
        for p in points {
            if lower.is_empty() {
                lower = p.to_vec();
                upper = p.to_vec();
                continue;
            }
            if p.len() != lower.len() {
                return Err(Error::DimensionMismatch {
                    expected: lower.len(),
                    got: p.len(),
                });
            }
            for (i, v) in p.iter().enumerate() {
                lower[i] = lower[i].min(*v);
                upper[i] = upper[i].max(*v);
            }
        }
        if lower.is_empty() {
            return Err(Error::invalid("cannot infer a window from zero points"));
        }
        for i in 0..lower.len() {
            let extent = upper[i] - lower[i];
            let pad = if extent > 0.0 { extent * margin } else { 0.5 };
            lower[i] -= pad;
            upper[i] += pad;
        }
        Window::new(lower, upper)
    }
}

/// A location in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("a point needs at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in {coords:?}"
            )));
        }
        Ok(Point(coords))
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Point::new(vec![x, y]).expect("finite planar point")
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean distance between two points of equal dimension.
pub fn euclidean(p: &Point, q: &Point) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(dist2(p.coords(), q.coords()).sqrt())
}

/// Boundary-inclusive containment of `p` in `w`.
pub fn window_contains(w: &Window, p: &Point) -> Result<bool> {
    w.contains(p.coords())
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A finite list of points inside a window. Duplicates are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    window: Window,
    coords: Vec<f64>,
}

impl PointPattern {
    pub fn empty(window: Window) -> Self {
        PointPattern {
            window,
            coords: Vec::new(),
        }
    }

    pub fn new(window: Window, points: &[Point]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * window.dim());
        for p in points {
            coords.extend_from_slice(p.coords());
        }
        // Dimension mismatch on any single point shows up here too.
        for p in points {
            window.check_dim(p.dim())?;
        }
        PointPattern::from_flat(window, coords)
    }

    /// Builds a pattern from `len * dim` interleaved coordinates.
    pub fn from_flat(window: Window, coords: Vec<f64>) -> Result<Self> {
        let dim = window.dim();
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates do not split into {dim}-dimensional points",
                coords.len()
            )));
        }
        for p in coords.chunks_exact(dim) {
            if p.iter().any(|c| !c.is_finite()) || !window.contains_unchecked(p) {
                return Err(Error::OutsideWindow(p.to_vec()));
            }
        }
        Ok(PointPattern { window, coords })
    }

    pub(crate) fn from_flat_unchecked(window: Window, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len() % window.dim(), 0);
        PointPattern { window, coords }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    /// Number of points, `#x`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn point(&self, i: usize) -> Point {
        let d = self.dim();
        Point(self.coords[i * d..(i + 1) * d].to_vec())
    }

    pub fn points(&self) -> Vec<Point> {
        self.iter().map(|c| Point(c.to_vec())).collect()
    }

    /// Union (as a list) of two patterns on the same window.
    pub fn concat(&self, other: &PointPattern) -> Result<PointPattern> {
        if self.window != other.window {
            return Err(Error::WindowMismatch);
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointPattern::from_flat_unchecked(
            self.window.clone(),
            coords,
        ))
    }

    /// The pattern with the window and every coordinate scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<PointPattern> {
        let window = self.window.scaled(factor)?;
        let coords = self.coords.iter().map(|c| c * factor).collect();
        // Scaling can push a boundary point out by one ulp; clamp it back.
        let mut p = PointPattern::from_flat_unchecked(window, coords);
        let d = p.dim();
        for (i, c) in p.coords.iter_mut().enumerate() {
            let axis = i % d;
            *c = c.clamp(p.window.lower[axis], p.window.upper[axis]);
        }
        Ok(p)
    }
}

/// A pattern together with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPattern {
    pub pattern: PointPattern,
    pub label: usize,
}

impl LabeledPattern {
    pub fn new(pattern: PointPattern, label: usize) -> Self {
        LabeledPattern { pattern, label }
    }
}

/// Number of classes implied by a labeled sample (`max label + 1`), after
/// checking that every class in `0..count` is represented.
pub fn class_count(sample: &[LabeledPattern]) -> Result<usize> {
    let count = sample
        .iter()
        .map(|s| s.label + 1)
        .max()
        .ok_or_else(|| Error::invalid("empty training sample"))?;
    let mut seen = vec![false; count];
    for s in sample {
        seen[s.label] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!(
            "class {missing} has no training pattern"
        )));
    }
    Ok(count)
}

/// Checks that every pattern shares `window`.
pub(crate) fn check_shared_window<'a>(
    window: &Window,
    patterns: impl IntoIterator<Item = &'a PointPattern>,
) -> Result<()> {
    for p in patterns {
        if p.window() != window {
            return Err(Error::WindowMismatch);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_examples() {
        let d = |a: (f64, f64), b: (f64, f64)| {
            euclidean(&Point::xy(a.0, a.1), &Point::xy(b.0, b.1)).unwrap()
        };
        assert_eq!(d((0.0, 0.0), (0.0, 0.0)), 0.0);
        assert_eq!(d((0.0, 0.0), (3.0, 4.0)), 5.0);
        assert!((d((1.0, 1.0), (-1.0, -1.0)) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn euclidean_rejects_dimension_mismatch() {
        let p = Point::xy(0.0, 0.0);
        let q = Point::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            euclidean(&p, &q),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn containment_is_boundary_inclusive() {
        let w = Window::unit_square();
        assert!(window_contains(&w, &Point::xy(0.5, 0.5)).unwrap());
        assert!(window_contains(&w, &Point::xy(1.0, 1.0)).unwrap());
        assert!(!window_contains(&w, &Point::xy(1.1, 0.5)).unwrap());
        assert!(window_contains(&w, &Point::new(vec![0.5]).unwrap()).is_err());
    }

    #[test]
    fn window_geometry() {
        let w = Window::rect(-1.0, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(w.measure(), 4.0);
        let lo = Point::new(w.lower().to_vec()).unwrap();
        let hi = Point::new(w.upper().to_vec()).unwrap();
        assert_eq!(w.diameter(), euclidean(&lo, &hi).unwrap());
        assert!(Window::rect(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Window::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn pattern_rejects_outside_points() {
        let w = Window::unit_square();
        let err = PointPattern::new(w.clone(), &[Point::xy(0.2, 0.3), Point::xy(1.5, 0.0)]);
        assert!(matches!(err, Err(Error::OutsideWindow(_))));
        let ok = PointPattern::new(w, &[Point::xy(0.2, 0.3), Point::xy(0.2, 0.3)]).unwrap();
        assert_eq!(ok.len(), 2);
    }

    #[test]
    fn class_count_requires_every_label() {
        let w = Window::unit_square();
        let e = PointPattern::empty(w);
        let sample = vec![
            LabeledPattern::new(e.clone(), 0),
            LabeledPattern::new(e.clone(), 2),
        ];
        assert!(class_count(&sample).is_err());
        let sample = vec![LabeledPattern::new(e.clone(), 1), LabeledPattern::new(e, 0)];
        assert_eq!(class_count(&sample).unwrap(), 2);
    }

    #[test]
    fn bounding_window_has_margin() {
        let pts = [vec![0.0, 0.0], vec![10.0, 5.0]];
        let w = Window::bounding(pts.iter().map(|p| p.as_slice()), 0.01).unwrap();
        assert!((w.lower()[0] + 0.1).abs() < 1e-12);
        assert!((w.upper()[1] - 5.05).abs() < 1e-12);
    }
}
