//! Cross-validated choice of `k` for the k-NN rule and of the bandwidth for
//! the Bayes rule.
//!
//! Folds are stratified by class and assigned from a seeded shuffle. The CV
//! error is the fraction of patterns misclassified when each fold is
//! predicted from the others. Ties between grid values go to the smaller one.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::{argmax_first, neighbour_order, score_components, vote};
use crate::error::{Error, Result};
use crate::intensity::KernelKind;
use crate::metrics::{DistanceTable, MetricKind, PatternMetric};
use crate::pattern::{LabeledPattern, PointPattern, Window};
use crate::seed;

pub const DEFAULT_K_GRID: [usize; 9] = [1, 3, 5, 7, 9, 11, 15, 21, 25];
pub const DEFAULT_FOLDS: usize = 5;
const DEFAULT_SIGMA_COUNT: usize = 8;

/// Geometric grid of 8 bandwidths from `diam/50` to `diam/2`.
pub fn default_sigma_grid(window: &Window) -> Vec<f64> {
    let lo = window.diameter() / 50.0;
    let hi = window.diameter() / 2.0;
    let n = DEFAULT_SIGMA_COUNT;
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    /// Number of folds; ignored when `loo` is set.
    pub folds: usize,
    /// Leave-one-out instead of k-fold.
    pub loo: bool,
    pub k_grid: Vec<usize>,
    /// Bandwidth candidates; `None` means [`default_sigma_grid`].
    pub sigma_grid: Option<Vec<f64>>,
    /// Search only equal bandwidths across classes.
    pub share_sigma: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: DEFAULT_FOLDS,
            loo: false,
            k_grid: DEFAULT_K_GRID.to_vec(),
            sigma_grid: None,
            share_sigma: true,
            seed: 0,
        }
    }
}

impl CvConfig {
    fn fold_count(&self, n: usize) -> Result<usize> {
        let folds = if self.loo { n } else { self.folds };
        if folds < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 folds, got {folds}"
            )));
        }
        if folds > n {
            return Err(Error::invalid(format!(
                "{folds} folds for only {n} training patterns"
            )));
        }
        Ok(folds)
    }

    pub fn sigma_grid_for(&self, window: &Window) -> Result<Vec<f64>> {
        let grid = match &self.sigma_grid {
            Some(g) => g.clone(),
            None => default_sigma_grid(window),
        };
        if grid.is_empty() {
            return Err(Error::invalid("sigma grid is empty"));
        }
        if grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!(
                "bandwidths must be positive: {grid:?}"
            )));
        }
        Ok(grid)
    }
}

/// Fold index of every item: classes are shuffled separately and dealt
/// round-robin, continuing the deal across classes so fold sizes differ by at
/// most one.
pub fn assign_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

/// Outcome of the `k` search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub cv_error: f64,
    /// Grid values small enough for every fold's training part.
    pub candidates: Vec<usize>,
    /// CV error for each candidate, in the same order.
    pub errors: Vec<f64>,
}

/// Selects `k` for the k-NN rule under `metric`.
pub fn select_k(
    training: &[LabeledPattern],
    metric: &PatternMetric,
    cfg: &CvConfig,
) -> Result<KSelection> {
    let patterns: Vec<&PointPattern> = training.iter().map(|s| &s.pattern).collect();
    let table = DistanceTable::hausdorff_pairwise(&patterns)?;
    let counts: Vec<usize> = patterns.iter().map(|p| p.len()).collect();
    let table = table.with_metric(metric.kind(), &counts, &counts, metric.window().diameter());
    let labels: Vec<usize> = training.iter().map(|s| s.label).collect();
    select_k_from_table(&table, &labels, cfg)
}

/// `k` search over a precomputed symmetric distance table of the training
/// sample.
pub fn select_k_from_table(
    table: &DistanceTable,
    labels: &[usize],
    cfg: &CvConfig,
) -> Result<KSelection> {
    let n = labels.len();
    if table.rows() != n || table.cols() != n {
        return Err(Error::invalid("distance table does not match the sample"));
    }
    if cfg.k_grid.is_empty() {
        return Err(Error::invalid("k grid is empty"));
    }
    if cfg.k_grid.contains(&0) {
        return Err(Error::invalid("k grid values must be positive"));
    }
    let classes = classes_of(labels)?;
    let folds = cfg.fold_count(n)?;
    let fold = assign_folds(labels, folds, cfg.seed);
    let smallest_train = (0..folds)
        .map(|f| fold.iter().filter(|&&g| g != f).count())
        .min()
        .unwrap_or(0);
    let candidates: Vec<usize> = cfg
        .k_grid
        .iter()
        .copied()
        .filter(|&k| k <= smallest_train)
        .collect();
    if candidates.is_empty() {
        return Err(Error::invalid(format!(
            "every k in the grid exceeds the smallest fold training size {smallest_train}"
        )));
    }

    let mut wrong = vec![0usize; candidates.len()];
    for i in 0..n {
        let train: Vec<usize> = (0..n).filter(|&j| fold[j] != fold[i]).collect();
        let dists: Vec<f64> = train.iter().map(|&j| table.get(i, j)).collect();
        let order: Vec<usize> = neighbour_order(&dists)
            .into_iter()
            .map(|t| train[t])
            .collect();
        for (g, &k) in candidates.iter().enumerate() {
            if vote(&order, labels, k, classes) != labels[i] {
                wrong[g] += 1;
            }
        }
    }
    let errors: Vec<f64> = wrong.iter().map(|&w| w as f64 / n as f64).collect();
    let best = (0..errors.len())
        .min_by(|&a, &b| {
            errors[a]
                .total_cmp(&errors[b])
                .then(candidates[a].cmp(&candidates[b]))
        })
        .expect("nonempty grid");
    Ok(KSelection {
        k: candidates[best],
        cv_error: errors[best],
        candidates,
        errors,
    })
}

/// Outcome of the bandwidth search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSelection {
    /// Bandwidth per class.
    pub sigmas: Vec<f64>,
    pub cv_error: f64,
    /// Every candidate that was evaluated with its CV error.
    pub candidates: Vec<(Vec<f64>, f64)>,
}

/// Selects per-class bandwidths for the Bayes rule. With `share_sigma` the
/// candidates are the diagonal `(s, s, ...)`; otherwise the full product grid.
pub fn select_sigma(
    training: &[LabeledPattern],
    cfg: &CvConfig,
    kernel: KernelKind,
    base_nodes: usize,
) -> Result<SigmaSelection> {
    let n = training.len();
    let labels: Vec<usize> = training.iter().map(|s| s.label).collect();
    let classes = classes_of(&labels)?;
    let window = training[0].pattern.window().clone();
    let grid = cfg.sigma_grid_for(&window)?;
    let folds = cfg.fold_count(n)?;
    let fold = assign_folds(&labels, folds, cfg.seed);

    // components[i][c][s]: log prior + log likelihood of item i under class c
    // fitted with grid bandwidth s on the other folds.
    let mut components = vec![Vec::new(); n];
    for f in 0..folds {
        let validation: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        if validation.is_empty() {
            continue;
        }
        let train: Vec<&LabeledPattern> = (0..n)
            .filter(|&i| fold[i] != f)
            .map(|i| &training[i])
            .collect();
        if classes_of(&train.iter().map(|s| s.label).collect::<Vec<_>>())? != classes {
            return Err(Error::invalid(format!(
                "a class has no training pattern outside fold {f}; use fewer folds"
            )));
        }
        let queries: Vec<&PointPattern> =
            validation.iter().map(|&i| &training[i].pattern).collect();
        let table = score_components(&train, &queries, &grid, kernel, base_nodes)?;
        for (row, &i) in table.into_iter().zip(&validation) {
            components[i] = row;
        }
    }

    let candidates: Vec<Vec<usize>> = if cfg.share_sigma {
        (0..grid.len()).map(|s| vec![s; classes]).collect()
    } else {
        product_indices(grid.len(), classes)
    };
    let mut evaluated = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let wrong = (0..n)
            .filter(|&i| {
                let scores: Vec<f64> = (0..classes).map(|c| components[i][c][cand[c]]).collect();
                argmax_first(&scores) != labels[i]
            })
            .count();
        let sigmas: Vec<f64> = cand.iter().map(|&s| grid[s]).collect();
        evaluated.push((sigmas, wrong as f64 / n as f64));
    }
    let best = (0..evaluated.len())
        .min_by(|&a, &b| {
            evaluated[a]
                .1
                .total_cmp(&evaluated[b].1)
                .then_with(|| lexi_cmp(&evaluated[a].0, &evaluated[b].0))
        })
        .expect("nonempty grid");
    Ok(SigmaSelection {
        sigmas: evaluated[best].0.clone(),
        cv_error: evaluated[best].1,
        candidates: evaluated,
    })
}

fn lexi_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// All index vectors of length `len` over `0..base`, first position slowest.
fn product_indices(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |s| {
                    let mut v = prefix.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out
}

fn classes_of(labels: &[usize]) -> Result<usize> {
    let classes = labels
        .iter()
        .max()
        .map(|m| m + 1)
        .ok_or_else(|| Error::invalid("empty training sample"))?;
    for c in 0..classes {
        if !labels.contains(&c) {
            return Err(Error::invalid(format!("class {c} has no training pattern")));
        }
    }
    Ok(classes)
}

/// Convenience used by the harness: selects `k` for `kind` from a Hausdorff
/// table of the training sample.
pub fn select_k_for_kind(
    hausdorff: &DistanceTable,
    counts: &[usize],
    labels: &[usize],
    kind: MetricKind,
    diameter: f64,
    cfg: &CvConfig,
) -> Result<KSelection> {
    let table = hausdorff.with_metric(kind, counts, counts, diameter);
    select_k_from_table(&table, labels, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::CardinalityPenalty;
    use crate::pattern::Point;

    fn pattern_with(n: usize, shift: f64) -> PointPattern {
        let pts: Vec<Point> = (0..n)
            .map(|i| {
                Point::xy(
                    ((i * 7) % 13) as f64 / 13.0 * 0.5 + shift,
                    (i % 5) as f64 / 5.0,
                )
            })
            .collect();
        PointPattern::new(Window::unit_square(), &pts).unwrap()
    }

    fn separated(per_class: usize) -> Vec<LabeledPattern> {
        let mut out = Vec::new();
        for i in 0..per_class {
            out.push(LabeledPattern::new(pattern_with(5 + i % 2, 0.0), 0));
            out.push(LabeledPattern::new(pattern_with(50 + i % 3, 0.0), 1));
        }
        out
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<usize> = (0..23).map(|i| usize::from(i % 3 == 0)).collect();
        let f = assign_folds(&labels, 5, 42);
        assert_eq!(f.len(), labels.len());
        let sizes: Vec<usize> = (0..5)
            .map(|k| f.iter().filter(|&&g| g == k).count())
            .collect();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(f, assign_folds(&labels, 5, 42));
        for c in 0..2 {
            let per: Vec<usize> = (0..5)
                .map(|k| (0..23).filter(|&i| labels[i] == c && f[i] == k).count())
                .collect();
            assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn separable_sample_picks_smallest_k() {
        let data = separated(10);
        let m = PatternMetric::combined(CardinalityPenalty::Cardinality, Window::unit_square());
        let cfg = CvConfig {
            k_grid: vec![3, 1, 5],
            ..CvConfig::default()
        };
        let sel = select_k(&data, &m, &cfg).unwrap();
        assert_eq!(sel.k, 1);
        assert_eq!(sel.cv_error, 0.0);
        assert!(sel.errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn oversized_k_values_are_skipped() {
        // 12 patterns in 5 folds: the largest fold holds 3, leaving 9 to train on.
        let data = separated(6);
        let m = PatternMetric::hausdorff(Window::unit_square());
        let cfg = CvConfig {
            k_grid: vec![1, 9, 11, 25],
            ..CvConfig::default()
        };
        let sel = select_k(&data, &m, &cfg).unwrap();
        assert_eq!(sel.candidates, vec![1, 9]);
        assert_eq!(sel.errors.len(), 2);
        let cfg = CvConfig {
            k_grid: vec![11, 25],
            ..CvConfig::default()
        };
        assert!(select_k(&data, &m, &cfg).is_err());
    }

    #[test]
    fn singleton_grids() {
        let data = separated(6);
        let m = PatternMetric::hausdorff(Window::unit_square());
        let cfg = CvConfig {
            k_grid: vec![1],
            sigma_grid: Some(vec![0.2]),
            ..CvConfig::default()
        };
        assert_eq!(select_k(&data, &m, &cfg).unwrap().k, 1);
        let s = select_sigma(&data, &cfg, KernelKind::Gaussian, 32).unwrap();
        assert_eq!(s.sigmas, vec![0.2, 0.2]);
        assert!((0.0..=1.0).contains(&s.cv_error));
    }

    #[test]
    fn fold_count_validation() {
        let data = separated(2);
        let m = PatternMetric::hausdorff(Window::unit_square());
        let too_many = CvConfig {
            folds: 5,
            k_grid: vec![1],
            ..CvConfig::default()
        };
        assert!(select_k(&data, &m, &too_many).is_err());
        let loo = CvConfig {
            loo: true,
            k_grid: vec![1],
            ..CvConfig::default()
        };
        assert_eq!(select_k(&data, &m, &loo).unwrap().cv_error, 0.0);
    }

    #[test]
    fn product_grid_enumerates_everything() {
        let p = product_indices(3, 2);
        assert_eq!(p.len(), 9);
        assert_eq!(p[0], vec![0, 0]);
        assert_eq!(p[5], vec![1, 2]);
    }

    #[test]
    fn default_sigma_grid_spans_the_range() {
        let w = Window::unit_square();
        let g = default_sigma_grid(&w);
        assert_eq!(g.len(), 8);
        assert!((g[0] - w.diameter() / 50.0).abs() < 1e-15);
        assert!((g[7] - w.diameter() / 2.0).abs() < 1e-12);
        assert!(g.windows(2).all(|p| p[0] < p[1]));
    }
}
