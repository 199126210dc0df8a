//! Samplers for the point processes used in the benchmark scenarios.
//!
//! Inhomogeneous Poisson processes are drawn by thinning a homogeneous
//! process whose rate is a certified upper bound of the intensity. Strauss
//! processes are drawn with a birth/death/move Metropolis-Hastings chain
//! targeting the density `c * beta^n(x) * gamma^s_r(x)` with respect to the
//! unit-rate Poisson process.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{dist2, PointPattern, Window};
use crate::quadrature::Grid;
use crate::seed::{self, Rng};

/// Nodes per axis used to find and check intensity bounds.
pub const BOUND_GRID: usize = 64;
/// Safety factor applied to the grid maximum.
pub const BOUND_SAFETY: f64 = 1.1;

pub type IntensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// An intensity function on a window together with an upper bound.
#[derive(Clone)]
pub struct IntensitySpec {
    evaluate: IntensityFn,
    window: Window,
    sup_bound: f64,
}

impl fmt::Debug for IntensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntensitySpec")
            .field("window", &self.window)
            .field("sup_bound", &self.sup_bound)
            .finish_non_exhaustive()
    }
}

impl IntensitySpec {
    /// Finds the bound by maximising over the bound grid (cell midpoints and
    /// cell corners) and inflating by [`BOUND_SAFETY`].
    pub fn new(window: Window, evaluate: IntensityFn) -> Result<Self> {
        let max = grid_max(&window, &evaluate)?;
        // An identically zero intensity still gets a positive rate; thinning
        // then discards every candidate.
        let sup_bound = if max > 0.0 {
            max * BOUND_SAFETY
        } else {
            f64::MIN_POSITIVE
        };
        Ok(IntensitySpec {
            evaluate,
            window,
            sup_bound,
        })
    }

    /// Uses a caller-supplied bound, spot-checked on the bound grid.
    pub fn with_bound(window: Window, evaluate: IntensityFn, sup_bound: f64) -> Result<Self> {
        if !(sup_bound > 0.0 && sup_bound.is_finite()) {
            return Err(Error::invalid(format!(
                "intensity bound must be positive and finite, got {sup_bound}"
            )));
        }
        let max = grid_max(&window, &evaluate)?;
        if max > sup_bound {
            return Err(Error::Invariant(format!(
                "intensity reaches {max} on the grid, above the bound {sup_bound}"
            )));
        }
        Ok(IntensitySpec {
            evaluate,
            window,
            sup_bound,
        })
    }

    pub fn constant(window: Window, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "rate must be nonnegative, got {rate}"
            )));
        }
        IntensitySpec::new(window, Arc::new(move |_: &[f64]| rate))
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.evaluate)(p)
    }

    pub fn function(&self) -> &IntensityFn {
        &self.evaluate
    }

    /// `mu(S)`, the expected number of points, by the midpoint rule with
    /// `nodes` nodes per axis.
    pub fn integral(&self, nodes: usize) -> f64 {
        let grid = Grid::uniform(self.window.clone(), nodes);
        grid.integrate(|p| self.eval(p))
    }
}

fn grid_max(window: &Window, f: &IntensityFn) -> Result<f64> {
    let mut max = 0.0f64;
    let mut check = |p: &[f64]| -> Result<()> {
        let v = f(p);
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Invariant(format!(
                "intensity is {v} at {p:?}; it must be finite and nonnegative"
            )));
        }
        max = max.max(v);
        Ok(())
    };
    let midpoints = Grid::uniform(window.clone(), BOUND_GRID);
    for node in midpoints.nodes() {
        check(&node)?;
    }
    let corners = Grid::corners(window.clone(), BOUND_GRID);
    for node in corners.nodes() {
        check(&node)?;
    }
    Ok(max)
}

fn uniform_point(rng: &mut Rng, window: &Window, out: &mut Vec<f64>) {
    for axis in 0..window.dim() {
        let u: f64 = rng.random();
        let v = window.lower()[axis] + u * window.side(axis);
        out.push(v.min(window.upper()[axis]));
    }
}

fn poisson_count(rng: &mut Rng, mean: f64) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::Numeric(format!("Poisson({mean}) is not samplable: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

/// Draws one realisation of `Poisson(S, lambda)` by thinning.
pub fn sample_poisson(spec: &IntensitySpec, seed: u64) -> Result<PointPattern> {
    sample_poisson_rng(spec, &mut seed::rng(seed))
}

pub fn sample_poisson_rng(spec: &IntensitySpec, rng: &mut Rng) -> Result<PointPattern> {
    let bound = spec.sup_bound;
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid(format!(
            "intensity bound must be positive, got {bound}"
        )));
    }
    let window = &spec.window;
    let n = poisson_count(rng, bound * window.measure())?;
    let d = window.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        uniform_point(rng, window, &mut coords);
        let value = spec.eval(&coords[coords.len() - d..]);
        if value > bound {
            return Err(Error::Invariant(format!(
                "intensity {value} exceeds its bound {bound}"
            )));
        }
        let keep: f64 = rng.random();
        if keep * bound >= value {
            coords.truncate(coords.len() - d);
        }
    }
    Ok(PointPattern::from_flat_unchecked(window.clone(), coords))
}

/// Default number of Metropolis-Hastings steps per Strauss draw.
pub const DEFAULT_MCMC_STEPS: usize = 20_000;

const P_BIRTH: f64 = 0.4;
const P_DEATH: f64 = 0.4;

/// Parameters of a Strauss process and of the chain used to sample it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraussSpec {
    pub beta: f64,
    pub gamma: f64,
    pub r: f64,
    pub window: Window,
    pub mcmc_steps: usize,
    pub rng_seed: u64,
}

impl StraussSpec {
    pub fn new(beta: f64, gamma: f64, r: f64, window: Window, rng_seed: u64) -> Result<Self> {
        let spec = StraussSpec {
            beta,
            gamma,
            r,
            window,
            mcmc_steps: DEFAULT_MCMC_STEPS,
            rng_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid(format!(
                "r must be positive, got {}",
                self.r
            )));
        }
        if self.mcmc_steps == 0 {
            return Err(Error::invalid("mcmc_steps must be positive"));
        }
        Ok(())
    }
}

/// Number of points of `coords` (excluding index `skip`) closer than `r` to `p`.
fn close_neighbours(coords: &[f64], d: usize, p: &[f64], r2: f64, skip: Option<usize>) -> i32 {
    let mut count = 0;
    for (i, q) in coords.chunks_exact(d).enumerate() {
        if Some(i) != skip && dist2(p, q) < r2 {
            count += 1;
        }
    }
    count
}

/// Runs the birth/death/move chain for `spec.mcmc_steps` steps starting from
/// a homogeneous Poisson(beta) draw and returns the final state.
pub fn sample_strauss(spec: &StraussSpec) -> Result<PointPattern> {
    spec.validate()?;
    let mut rng = seed::rng(spec.rng_seed);
    let window = &spec.window;
    let d = window.dim();
    let area = window.measure();
    let r2 = spec.r * spec.r;
    let interacting = spec.gamma < 1.0;
    let pair_factor = |t: i32| if interacting { spec.gamma.powi(t) } else { 1.0 };

    let n0 = poisson_count(&mut rng, spec.beta * area)?;
    let mut coords = Vec::with_capacity(n0 * d);
    for _ in 0..n0 {
        uniform_point(&mut rng, window, &mut coords);
    }
    let mut proposal = Vec::with_capacity(d);

    for _ in 0..spec.mcmc_steps {
        let n = coords.len() / d;
        let kind: f64 = rng.random();
        if kind < P_BIRTH {
            proposal.clear();
            uniform_point(&mut rng, window, &mut proposal);
            let t = if interacting {
                close_neighbours(&coords, d, &proposal, r2, None)
            } else {
                0
            };
            let ratio = spec.beta * area * pair_factor(t) / (n + 1) as f64;
            if accept(&mut rng, ratio) {
                coords.extend_from_slice(&proposal);
            }
        } else if kind < P_BIRTH + P_DEATH {
            if n == 0 {
                continue;
            }
            let i = rng.random_range(0..n);
            let t = if interacting {
                close_neighbours(&coords, d, &coords[i * d..(i + 1) * d], r2, Some(i))
            } else {
                0
            };
            let ratio = n as f64 / (spec.beta * area * pair_factor(t));
            if accept(&mut rng, ratio) {
                remove_point(&mut coords, d, i);
            }
        } else {
            if n == 0 {
                continue;
            }
            let i = rng.random_range(0..n);
            proposal.clear();
            uniform_point(&mut rng, window, &mut proposal);
            let ratio = if interacting {
                let t_new = close_neighbours(&coords, d, &proposal, r2, Some(i));
                let t_old = close_neighbours(&coords, d, &coords[i * d..(i + 1) * d], r2, Some(i));
                spec.gamma.powi(t_new - t_old)
            } else {
                1.0
            };
            if accept(&mut rng, ratio) {
                coords[i * d..(i + 1) * d].copy_from_slice(&proposal);
            }
        }
    }
    Ok(PointPattern::from_flat_unchecked(window.clone(), coords))
}

fn accept(rng: &mut Rng, ratio: f64) -> bool {
    // Always draw, so the stream layout does not depend on the ratio.
    let u: f64 = rng.random();
    ratio >= 1.0 || u < ratio
}

fn remove_point(coords: &mut Vec<f64>, d: usize, i: usize) {
    let last = coords.len() / d - 1;
    if i != last {
        let (head, tail) = coords.split_at_mut(last * d);
        head[i * d..(i + 1) * d].copy_from_slice(&tail[..d]);
    }
    coords.truncate(last * d);
}

/// `s_r(x)`: number of unordered pairs closer than `r`.
pub fn close_pairs(pattern: &PointPattern, r: f64) -> usize {
    let pts: Vec<&[f64]> = pattern.iter().collect();
    let r2 = r * r;
    let mut count = 0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if dist2(pts[i], pts[j]) < r2 {
                count += 1;
            }
        }
    }
    count
}

/// Default height of the shifted-bump intensities.
pub const SHIFTED_HEIGHT: f64 = 300.0;
/// Default decay rate of the shifted-bump intensities.
pub const SHIFTED_SPREAD: f64 = 8.0;

/// Centres of the two shifted bumps on `[-1, 1]^2`.
pub const SHIFTED_CENTERS: [[f64; 2]; 2] = [[-0.25, 0.0], [0.0, 0.25]];

fn gaussian_bump(height: f64, rate: f64, cx: f64, cy: f64) -> IntensityFn {
    Arc::new(move |p: &[f64]| {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        height * (-rate * (dx * dx + dy * dy)).exp()
    })
}

/// `base + amp * xy * sin(1 / (xy))`, equal to `base` on the axes where the
/// oscillating term has limit zero.
fn wiggly(base: f64, amp: f64) -> IntensityFn {
    Arc::new(move |p: &[f64]| {
        let t = p[0] * p[1];
        if t == 0.0 {
            base
        } else {
            base + amp * t * (1.0 / t).sin()
        }
    })
}

/// Scenario intensities addressable by name.
///
/// | name       | params            | window      |
/// |------------|-------------------|-------------|
/// | `smooth0`  | `c2`              | `[0,1]^2`   |
/// | `smooth1`  | `c1, d1`          | `[0,1]^2`   |
/// | `wiggly0`  | none              | `[0,1]^2`   |
/// | `wiggly1`  | `c2` (`>= 30`)    | `[0,1]^2`   |
/// | `shifted0` | `[height, spread]`| `[-1,1]^2`  |
/// | `shifted1` | `[height, spread]`| `[-1,1]^2`  |
pub fn scenario_intensity(name: &str, params: &[f64]) -> Result<IntensitySpec> {
    let want = |n: usize| -> Result<()> {
        if params.len() != n {
            return Err(Error::invalid(format!(
                "scenario {name} takes {n} parameter(s), got {}",
                params.len()
            )));
        }
        Ok(())
    };
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("scenario parameters must be finite"));
    }
    let unit = Window::unit_square();
    match name {
        "smooth0" => {
            want(1)?;
            positive(name, "c2", params[0])?;
            IntensitySpec::new(unit, gaussian_bump(params[0], 20.0, 0.5, 0.5))
        }
        "smooth1" => {
            want(2)?;
            positive(name, "c1", params[0])?;
            positive(name, "d1", params[1])?;
            IntensitySpec::new(unit, gaussian_bump(params[0], params[1], 0.5, 0.5))
        }
        "wiggly0" => {
            want(0)?;
            IntensitySpec::new(unit, wiggly(80.0, 80.0))
        }
        "wiggly1" => {
            want(1)?;
            if params[0] < 30.0 {
                return Err(Error::invalid(format!(
                    "wiggly1 needs c2 >= 30 to stay nonnegative, got {}",
                    params[0]
                )));
            }
            IntensitySpec::new(unit, wiggly(params[0], 30.0))
        }
        "shifted0" | "shifted1" => {
            let (height, spread) = match params.len() {
                0 => (SHIFTED_HEIGHT, SHIFTED_SPREAD),
                2 => (params[0], params[1]),
                n => {
                    return Err(Error::invalid(format!(
                        "scenario {name} takes 0 or 2 parameters, got {n}"
                    )))
                }
            };
            positive(name, "height", height)?;
            positive(name, "spread", spread)?;
            let [cx, cy] = SHIFTED_CENTERS[usize::from(name == "shifted1")];
            IntensitySpec::new(
                Window::rect(-1.0, 1.0, -1.0, 1.0)?,
                gaussian_bump(height, spread, cx, cy),
            )
        }
        _ => Err(Error::invalid(format!("unknown scenario {name:?}"))),
    }
}

fn positive(name: &str, what: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name}: {what} must be positive, got {v}"
        )))
    }
}
