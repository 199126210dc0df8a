//! The two decision rules: plug-in Bayes and k nearest neighbours.
//!
//! The Bayes rule for Poisson classes picks the class maximising
//!
//! ```text
//! log p_j - mu_j(S) + sum_{xi in x} log lambda_j(xi)
//! ```
//!
//! which is the log of the class density with respect to the unit Poisson
//! process, minus the class-independent `nu(S)`. Intensities are clamped from
//! below by the model's floor so that the score stays finite. The k-NN rule is
//! a uniform vote among the `k` training patterns closest under a
//! [`PatternMetric`]. Both rules break ties towards the smaller index.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::intensity::{IntensityEstimate, IntensityModel, KernelKind, KernelSpec};
use crate::metrics::PatternMetric;
use crate::pattern::{class_count, LabeledPattern, PointPattern, Window};

/// Plug-in Bayes classifier over per-class intensity models.
#[derive(Clone)]
pub struct BayesClassifier {
    models: Vec<Arc<dyn IntensityModel>>,
    log_priors: Vec<f64>,
    floors: Vec<f64>,
}

impl std::fmt::Debug for BayesClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BayesClassifier")
            .field("classes", &self.models.len())
            .field("log_priors", &self.log_priors)
            .field(
                "integrated",
                &self
                    .models
                    .iter()
                    .map(|m| m.integrated())
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl BayesClassifier {
    /// Builds the rule from class models and priors. Priors only need to be
    /// positive; they are normalised to sum to one.
    pub fn new(models: Vec<Arc<dyn IntensityModel>>, priors: &[f64]) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::invalid("Bayes rule needs at least one class"));
        }
        if models.len() != priors.len() {
            return Err(Error::invalid(format!(
                "{} class models but {} priors",
                models.len(),
                priors.len()
            )));
        }
        if priors.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::invalid(format!(
                "priors must be positive, got {priors:?}"
            )));
        }
        let window = models[0].window();
        if models.iter().any(|m| m.window() != window) {
            return Err(Error::WindowMismatch);
        }
        let total: f64 = priors.iter().sum();
        let log_priors = priors.iter().map(|p| (p / total).ln()).collect();
        let floors = models.iter().map(|m| m.floor()).collect();
        Ok(BayesClassifier {
            models,
            log_priors,
            floors,
        })
    }

    /// Fits one kernel estimate per class with bandwidth `sigmas[class]`
    /// (a single value is shared) and uses class proportions as priors.
    pub fn fit(
        training: &[LabeledPattern],
        kernel: KernelSpec,
        sigmas: &[f64],
        base_nodes: usize,
    ) -> Result<Self> {
        let classes = class_count(training)?;
        let sigma_for = |c: usize| -> Result<f64> {
            match sigmas.len() {
                1 => Ok(sigmas[0]),
                n if n == classes => Ok(sigmas[c]),
                n => Err(Error::invalid(format!(
                    "{n} bandwidths for {classes} classes"
                ))),
            }
        };
        let mut models: Vec<Arc<dyn IntensityModel>> = Vec::with_capacity(classes);
        let mut priors = Vec::with_capacity(classes);
        for c in 0..classes {
            let members: Vec<&PointPattern> = training
                .iter()
                .filter(|s| s.label == c)
                .map(|s| &s.pattern)
                .collect();
            let k = KernelSpec::new(kernel.kind, sigma_for(c)?, kernel.dim)?;
            models.push(Arc::new(IntensityEstimate::fit(&members, k, base_nodes)?));
            priors.push(members.len() as f64 / training.len() as f64);
        }
        BayesClassifier::new(models, &priors)
    }

    pub fn classes(&self) -> usize {
        self.models.len()
    }

    pub fn window(&self) -> &Window {
        self.models[0].window()
    }

    pub fn model(&self, class: usize) -> &dyn IntensityModel {
        self.models[class].as_ref()
    }

    /// Log-domain score of `x` for `class`.
    pub fn score(&self, x: &PointPattern, class: usize) -> Result<f64> {
        if class >= self.classes() {
            return Err(Error::invalid(format!(
                "class {class} out of range for {} classes",
                self.classes()
            )));
        }
        if x.window() != self.window() {
            return Err(Error::WindowMismatch);
        }
        Ok(self.score_unchecked(x, class))
    }

    fn score_unchecked(&self, x: &PointPattern, class: usize) -> f64 {
        self.log_priors[class] + log_likelihood(self.models[class].as_ref(), self.floors[class], x)
    }

    pub fn scores(&self, x: &PointPattern) -> Result<Vec<f64>> {
        if x.window() != self.window() {
            return Err(Error::WindowMismatch);
        }
        Ok((0..self.classes())
            .map(|c| self.score_unchecked(x, c))
            .collect())
    }

    /// Class with the highest score; the first such class on ties.
    pub fn classify(&self, x: &PointPattern) -> Result<usize> {
        Ok(argmax_first(&self.scores(x)?))
    }
}

/// `-mu(S) + sum_{xi in x} log max(lambda(xi), floor)`: the log density of
/// `x` under a Poisson model, up to the class-independent `nu(S)`.
pub fn log_likelihood(model: &dyn IntensityModel, floor: f64, x: &PointPattern) -> f64 {
    let log_sum: f64 = x.iter().map(|p| model.intensity(p).max(floor).ln()).sum();
    log_sum - model.integrated()
}

/// Score table `out[q][c][s]`: log prior of class `c` plus the log likelihood
/// of `queries[q]` under the class-`c` estimate fitted to `training` with
/// bandwidth `sigmas[s]`. Any per-class choice of bandwidths is then scored
/// by table lookups, which is how bandwidth grids are searched.
pub fn score_components(
    training: &[&LabeledPattern],
    queries: &[&PointPattern],
    sigmas: &[f64],
    kernel: KernelKind,
    base_nodes: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let labels: Vec<usize> = training.iter().map(|s| s.label).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let window = training
        .first()
        .map(|s| s.pattern.window().clone())
        .ok_or_else(|| Error::invalid("empty training sample"))?;
    let mut out = vec![vec![vec![0.0; sigmas.len()]; classes]; queries.len()];
    for c in 0..classes {
        let members: Vec<&PointPattern> = training
            .iter()
            .filter(|s| s.label == c)
            .map(|s| &s.pattern)
            .collect();
        if members.is_empty() {
            return Err(Error::invalid(format!("class {c} has no training pattern")));
        }
        let log_prior = (members.len() as f64 / training.len() as f64).ln();
        for (s, &sigma) in sigmas.iter().enumerate() {
            let k = KernelSpec::new(kernel, sigma, window.dim())?;
            let est = IntensityEstimate::fit(&members, k, base_nodes)?;
            let floor = est.floor();
            for (q, x) in queries.iter().enumerate() {
                if x.window() != &window {
                    return Err(Error::WindowMismatch);
                }
                out[q][c][s] = log_prior + log_likelihood(&est, floor, x);
            }
        }
    }
    Ok(out)
}

/// `log p_j - mu_j(S) + sum log lambda_j(xi)` for class `j`.
pub fn bayes_score(c: &BayesClassifier, x: &PointPattern, j: usize) -> Result<f64> {
    c.score(x, j)
}

pub fn bayes_classify(c: &BayesClassifier, x: &PointPattern) -> Result<usize> {
    c.classify(x)
}

/// Index of the largest value, preferring the earliest on ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Training indices ordered by distance, ties by index.
pub fn neighbour_order(distances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    // Stable sort keeps index order among equal distances.
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    order
}

/// Majority label among the first `k` entries of `order`; the smallest label
/// wins a tied vote.
pub fn vote(order: &[usize], labels: &[usize], k: usize, classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    for &i in order.iter().take(k) {
        counts[labels[i]] += 1;
    }
    let mut best = 0;
    for c in 1..classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

/// k-NN rule over a pattern metric.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    training: Vec<LabeledPattern>,
    labels: Vec<usize>,
    classes: usize,
    k: usize,
    metric: PatternMetric,
}

impl KnnClassifier {
    pub fn new(training: Vec<LabeledPattern>, k: usize, metric: PatternMetric) -> Result<Self> {
        let classes = class_count(&training)?;
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if k > training.len() {
            return Err(Error::invalid(format!(
                "k = {k} exceeds the {} training patterns",
                training.len()
            )));
        }
        if training
            .iter()
            .any(|s| s.pattern.window() != metric.window())
        {
            return Err(Error::WindowMismatch);
        }
        let labels = training.iter().map(|s| s.label).collect();
        Ok(KnnClassifier {
            training,
            labels,
            classes,
            k,
            metric,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> &PatternMetric {
        &self.metric
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn distances(&self, x: &PointPattern) -> Result<Vec<f64>> {
        self.training
            .iter()
            .map(|s| self.metric.distance(x, &s.pattern))
            .collect()
    }

    pub fn classify(&self, x: &PointPattern) -> Result<usize> {
        let d = self.distances(x)?;
        Ok(vote(
            &neighbour_order(&d),
            &self.labels,
            self.k,
            self.classes,
        ))
    }
}

pub fn knn_classify(c: &KnnClassifier, x: &PointPattern) -> Result<usize> {
    c.classify(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{CardinalityPenalty, MetricKind};
    use crate::pattern::Point;

    /// Constant intensity on a window, with its exact integral.
    struct Constant {
        window: Window,
        rate: f64,
    }

    impl IntensityModel for Constant {
        fn window(&self) -> &Window {
            &self.window
        }
        fn intensity(&self, _: &[f64]) -> f64 {
            self.rate
        }
        fn integrated(&self) -> f64 {
            self.rate * self.window.measure()
        }
    }

    fn constant_rule(rates: &[f64], priors: &[f64]) -> BayesClassifier {
        let models = rates
            .iter()
            .map(|&rate| {
                Arc::new(Constant {
                    window: Window::unit_square(),
                    rate,
                }) as Arc<dyn IntensityModel>
            })
            .collect();
        BayesClassifier::new(models, priors).unwrap()
    }

    fn with_n(n: usize) -> PointPattern {
        let pts: Vec<Point> = (0..n)
            .map(|i| Point::xy((i % 10) as f64 / 10.0, 0.5))
            .collect();
        PointPattern::new(Window::unit_square(), &pts).unwrap()
    }

    #[test]
    fn empty_pattern_prefers_smaller_mass() {
        let rule = constant_rule(&[2.0, 1.0], &[0.5, 0.5]);
        let e = with_n(0);
        let s = rule.scores(&e).unwrap();
        assert!((s[0] - (0.5f64.ln() - 2.0)).abs() < 1e-12);
        assert!((s[1] - (0.5f64.ln() - 1.0)).abs() < 1e-12);
        assert_eq!(rule.classify(&e).unwrap(), 1);
    }

    #[test]
    fn count_threshold_for_homogeneous_classes() {
        let rule = constant_rule(&[2.0, 1.0], &[1.0, 1.0]);
        for n in 0..8 {
            let x = with_n(n);
            let s = rule.scores(&x).unwrap();
            let diff = s[0] - s[1];
            assert!((diff - (-1.0 + n as f64 * 2f64.ln())).abs() < 1e-12);
            let want = if n >= 2 { 0 } else { 1 };
            assert_eq!(rule.classify(&x).unwrap(), want, "n = {n}");
        }
    }

    #[test]
    fn identical_classes_tie_to_class_zero() {
        let rule = constant_rule(&[3.0, 3.0, 3.0], &[1.0, 1.0, 1.0]);
        for n in [0, 1, 5] {
            let s = rule.scores(&with_n(n)).unwrap();
            assert!(s.iter().all(|v| *v == s[0]));
            assert_eq!(rule.classify(&with_n(n)).unwrap(), 0);
        }
    }

    #[test]
    fn bayes_validation() {
        let m: Arc<dyn IntensityModel> = Arc::new(Constant {
            window: Window::unit_square(),
            rate: 1.0,
        });
        assert!(BayesClassifier::new(vec![m.clone()], &[0.0]).is_err());
        assert!(BayesClassifier::new(vec![m.clone()], &[0.5, 0.5]).is_err());
        let other: Arc<dyn IntensityModel> = Arc::new(Constant {
            window: Window::rect(0.0, 2.0, 0.0, 1.0).unwrap(),
            rate: 1.0,
        });
        assert!(matches!(
            BayesClassifier::new(vec![m, other], &[1.0, 1.0]),
            Err(Error::WindowMismatch)
        ));
    }

    #[test]
    fn zero_intensity_is_floored() {
        let rule = constant_rule(&[0.0, 1.0], &[1.0, 1.0]);
        let s = rule.scores(&with_n(3)).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
        assert_eq!(rule.classify(&with_n(3)).unwrap(), 1);
    }

    #[test]
    fn vote_examples() {
        // Distances 0.1, 0.2, 0.9 with labels 0, 0, 1 and k = 3.
        let d = [0.1, 0.2, 0.9];
        let labels = [0, 0, 1];
        assert_eq!(vote(&neighbour_order(&d), &labels, 3, 2), 0);
        // Tied vote goes to the smaller label.
        assert_eq!(vote(&[1, 0], &[0, 1], 2, 2), 0);
        assert_eq!(neighbour_order(&[0.5, 0.2, 0.5, 0.2]), vec![1, 3, 0, 2]);
    }

    fn sample(n0: usize, n1: usize) -> Vec<LabeledPattern> {
        (0..n0 + n1)
            .map(|i| {
                let label = usize::from(i >= n0);
                LabeledPattern::new(with_n(1 + i % 7 + 20 * label), label)
            })
            .collect()
    }

    #[test]
    fn knn_with_k_equal_n_returns_majority() {
        let train = sample(30, 20);
        let m = PatternMetric::combined(CardinalityPenalty::Cardinality, Window::unit_square());
        let knn = KnnClassifier::new(train, 50, m).unwrap();
        for n in [0, 3, 25] {
            assert_eq!(knn.classify(&with_n(n)).unwrap(), 0);
        }
    }

    #[test]
    fn knn_rejects_bad_k() {
        let m = PatternMetric::hausdorff(Window::unit_square());
        assert!(KnnClassifier::new(sample(2, 2), 5, m.clone()).is_err());
        assert!(KnnClassifier::new(sample(2, 2), 0, m).is_err());
    }

    #[test]
    fn one_nn_recovers_training_label() {
        let train = sample(5, 5);
        for kind in MetricKind::ALL {
            let knn = KnnClassifier::new(
                train.clone(),
                1,
                PatternMetric::new(kind, Window::unit_square()),
            )
            .unwrap();
            for s in &train {
                assert_eq!(knn.classify(&s.pattern).unwrap(), s.label);
            }
        }
    }
}
