//! Monte Carlo benchmark harness.
//!
//! Every replication draws fresh balanced training and test samples from a
//! two-class scenario, fits the Bayes rule and the four k-NN variants, and
//! records test misclassification rates. Seeds are derived from the master
//! seed and the replication index, so results do not depend on thread count
//! or on how many replications are run.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{argmax_first, neighbour_order, score_components, vote, BayesClassifier};
use crate::crossval::{select_k_from_table, select_sigma, CvConfig};
use crate::error::{Error, Result};
use crate::intensity::{KernelKind, KernelSpec, DEFAULT_GRID};
use crate::metrics::{CardinalityPenalty, DistanceTable, MetricKind};
use crate::pattern::{LabeledPattern, PointPattern, Window};
use crate::seed;
use crate::simulate::{
    sample_poisson, sample_strauss, scenario_intensity, IntensitySpec, StraussSpec,
    DEFAULT_MCMC_STEPS, SHIFTED_HEIGHT, SHIFTED_SPREAD,
};

/// The five classifiers of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierId {
    Bayes,
    KnnHausdorff,
    KnnHausdorffD1,
    KnnHausdorffHellinger,
    KnnHausdorffKl,
}

impl ClassifierId {
    pub const ALL: [ClassifierId; 5] = [
        ClassifierId::Bayes,
        ClassifierId::KnnHausdorff,
        ClassifierId::KnnHausdorffD1,
        ClassifierId::KnnHausdorffHellinger,
        ClassifierId::KnnHausdorffKl,
    ];

    pub const KNN: [ClassifierId; 4] = [
        ClassifierId::KnnHausdorff,
        ClassifierId::KnnHausdorffD1,
        ClassifierId::KnnHausdorffHellinger,
        ClassifierId::KnnHausdorffKl,
    ];

    /// Distance used by a k-NN classifier, `None` for Bayes.
    pub fn metric(self) -> Option<MetricKind> {
        match self {
            ClassifierId::Bayes => None,
            ClassifierId::KnnHausdorff => Some(MetricKind::Hausdorff),
            ClassifierId::KnnHausdorffD1 => {
                Some(MetricKind::Combined(CardinalityPenalty::Cardinality))
            }
            ClassifierId::KnnHausdorffHellinger => {
                Some(MetricKind::Combined(CardinalityPenalty::Hellinger))
            }
            ClassifierId::KnnHausdorffKl => {
                Some(MetricKind::Combined(CardinalityPenalty::KullbackLeibler))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassifierId::Bayes => "bayes",
            ClassifierId::KnnHausdorff => "knn_hausdorff",
            ClassifierId::KnnHausdorffD1 => "knn_hausdorff_d1",
            ClassifierId::KnnHausdorffHellinger => "knn_hausdorff_hellinger",
            ClassifierId::KnnHausdorffKl => "knn_hausdorff_kl",
        }
    }
}

impl fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strauss parameters of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StraussParams {
    pub beta: f64,
    pub gamma: f64,
    pub r: f64,
}

/// A named intensity from [`scenario_intensity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedIntensity {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

fn default_shifted_height() -> f64 {
    SHIFTED_HEIGHT
}

fn default_shifted_spread() -> f64 {
    SHIFTED_SPREAD
}

fn default_strauss_side() -> f64 {
    10.0
}

fn default_mcmc_steps() -> usize {
    DEFAULT_MCMC_STEPS
}

/// Two-class data generating mechanism. Class 0 is listed first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Gaussian bumps: `smooth0(c2)` against `smooth1(c1, d1)`.
    Smooth { c1: f64, d1: f64, c2: f64 },
    /// `wiggly0` against `wiggly1(c2)`.
    Wiggly { c2: f64 },
    /// Two bumps of equal shape with shifted centres.
    Shifted {
        #[serde(default = "default_shifted_height")]
        height: f64,
        #[serde(default = "default_shifted_spread")]
        spread: f64,
    },
    /// Strauss processes on `[0, side]^2`.
    Strauss {
        class0: StraussParams,
        class1: StraussParams,
        #[serde(default = "default_strauss_side")]
        side: f64,
        #[serde(default = "default_mcmc_steps")]
        mcmc_steps: usize,
    },
    /// Any pair of named Poisson intensities on a common window.
    Poisson {
        class0: NamedIntensity,
        class1: NamedIntensity,
    },
}

impl Scenario {
    /// Bandwidth used when the experiment does not set one: the bump and
    /// Strauss scenarios use 0.1, the rest use cross-validation.
    pub fn default_sigma(&self) -> Option<f64> {
        match self {
            Scenario::Shifted { .. } | Scenario::Strauss { .. } => Some(0.1),
            _ => None,
        }
    }

    /// Builds a sampler for both classes.
    pub fn sampler(&self) -> Result<ScenarioSampler> {
        let poisson = |a: IntensitySpec, b: IntensitySpec| -> Result<ScenarioSampler> {
            if a.window() != b.window() {
                return Err(Error::WindowMismatch);
            }
            Ok(ScenarioSampler::Poisson(vec![a, b]))
        };
        match self {
            Scenario::Smooth { c1, d1, c2 } => poisson(
                scenario_intensity("smooth0", &[*c2])?,
                scenario_intensity("smooth1", &[*c1, *d1])?,
            ),
            Scenario::Wiggly { c2 } => poisson(
                scenario_intensity("wiggly0", &[])?,
                scenario_intensity("wiggly1", &[*c2])?,
            ),
            Scenario::Shifted { height, spread } => poisson(
                scenario_intensity("shifted0", &[*height, *spread])?,
                scenario_intensity("shifted1", &[*height, *spread])?,
            ),
            Scenario::Poisson { class0, class1 } => poisson(
                scenario_intensity(&class0.name, &class0.params)?,
                scenario_intensity(&class1.name, &class1.params)?,
            ),
            Scenario::Strauss {
                class0,
                class1,
                side,
                mcmc_steps,
            } => {
                let window = Window::cube(0.0, *side, 2)?;
                let specs = [class0, class1]
                    .iter()
                    .map(|p| {
                        let spec = StraussSpec {
                            beta: p.beta,
                            gamma: p.gamma,
                            r: p.r,
                            window: window.clone(),
                            mcmc_steps: *mcmc_steps,
                            rng_seed: 0,
                        };
                        spec.validate()?;
                        Ok(spec)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ScenarioSampler::Strauss(specs))
            }
        }
    }
}

/// Per-class pattern generator of a [`Scenario`].
#[derive(Clone)]
pub enum ScenarioSampler {
    Poisson(Vec<IntensitySpec>),
    Strauss(Vec<StraussSpec>),
}

impl ScenarioSampler {
    pub fn classes(&self) -> usize {
        match self {
            ScenarioSampler::Poisson(v) => v.len(),
            ScenarioSampler::Strauss(v) => v.len(),
        }
    }

    pub fn window(&self) -> &Window {
        match self {
            ScenarioSampler::Poisson(v) => v[0].window(),
            ScenarioSampler::Strauss(v) => &v[0].window,
        }
    }

    pub fn sample(&self, class: usize, seed: u64) -> Result<PointPattern> {
        match self {
            ScenarioSampler::Poisson(v) => sample_poisson(&v[class], seed),
            ScenarioSampler::Strauss(v) => {
                let mut spec = v[class].clone();
                spec.rng_seed = seed;
                sample_strauss(&spec)
            }
        }
    }
}

/// How the Bayes bandwidth is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaPolicy {
    /// One bandwidth for every class.
    Fixed(f64),
    /// One bandwidth per class.
    PerClass(Vec<f64>),
    Named(PolicyName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    /// The scenario default: fixed where one exists, otherwise CV.
    Auto,
    Cv,
}

impl Default for SigmaPolicy {
    fn default() -> Self {
        SigmaPolicy::Named(PolicyName::Auto)
    }
}

impl SigmaPolicy {
    /// Fixed bandwidths, or `None` when they come from CV.
    fn resolve(&self, scenario_default: Option<f64>) -> Result<Option<Vec<f64>>> {
        let fixed = match self {
            SigmaPolicy::Fixed(s) => vec![*s],
            SigmaPolicy::PerClass(v) => v.clone(),
            SigmaPolicy::Named(PolicyName::Cv) => return Ok(None),
            SigmaPolicy::Named(PolicyName::Auto) => match scenario_default {
                Some(s) => vec![s],
                None => return Ok(None),
            },
        };
        if fixed.is_empty() || fixed.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!(
                "fixed bandwidths must be positive: {fixed:?}"
            )));
        }
        Ok(Some(fixed))
    }
}

/// How `k` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KPolicy {
    Fixed(usize),
    Named(KPolicyName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicyName {
    Cv,
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Named(KPolicyName::Cv)
    }
}

fn default_per_class() -> usize {
    50
}

fn default_replications() -> usize {
    100
}

fn default_classifiers() -> Vec<ClassifierId> {
    ClassifierId::ALL.to_vec()
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

fn default_kernel() -> KernelKind {
    KernelKind::Gaussian
}

/// One benchmark: scenario, sample sizes, classifiers and hyperparameter policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    #[serde(default = "default_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierId>,
    #[serde(default)]
    pub sigma: SigmaPolicy,
    #[serde(default)]
    pub k: KPolicy,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    /// Minimum quadrature nodes per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        ExperimentSpec {
            scenario,
            train_per_class: default_per_class(),
            test_per_class: default_per_class(),
            replications: default_replications(),
            classifiers: default_classifiers(),
            sigma: SigmaPolicy::default(),
            k: KPolicy::default(),
            cv: CvConfig::default(),
            kernel: default_kernel(),
            grid: default_grid(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::invalid("sample sizes per class must be positive"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be positive"));
        }
        if self.grid < 2 {
            return Err(Error::invalid("grid needs at least 2 nodes per axis"));
        }
        let mut seen = self.classifiers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.classifiers.len() {
            return Err(Error::invalid("classifier listed twice"));
        }
        self.sigma.resolve(self.scenario.default_sigma())?;
        if let KPolicy::Fixed(0) = self.k {
            return Err(Error::invalid("k must be positive"));
        }
        self.scenario.sampler()?;
        Ok(())
    }
}

/// Hyperparameters used by one classifier in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// CV error of the selected value, when it was selected by CV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierResult {
    /// Test misclassification rate per replication.
    pub rates: Vec<f64>,
    pub mean: f64,
    pub hyperparameters: Vec<Hyperparameters>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub results: BTreeMap<ClassifierId, ClassifierResult>,
}

impl ExperimentResult {
    /// Checks that every rate list has one entry per replication and that all
    /// rates are proportions.
    pub fn validate(&self) -> Result<()> {
        for (id, r) in &self.results {
            if r.rates.len() != self.spec.replications
                || r.hyperparameters.len() != self.spec.replications
            {
                return Err(Error::Invariant(format!(
                    "{id}: {} rates for {} replications",
                    r.rates.len(),
                    self.spec.replications
                )));
            }
            if r.rates.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(Error::Invariant(format!("{id}: rate outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn mean(&self, id: ClassifierId) -> Option<f64> {
        self.results.get(&id).map(|r| r.mean)
    }
}

/// Training and test sample of one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub train: Vec<LabeledPattern>,
    pub test: Vec<LabeledPattern>,
}

const TRAIN: u64 = 0;
const TEST: u64 = 1;
const CV: u64 = 2;

/// Draws replication `rep` of `spec`: class blocks in label order, training
/// then test, each pattern from its own derived seed.
pub fn sample_replication(
    spec: &ExperimentSpec,
    sampler: &ScenarioSampler,
    rep: usize,
) -> Result<Replication> {
    let draw = |part: u64, per_class: usize| -> Result<Vec<LabeledPattern>> {
        let mut out = Vec::with_capacity(per_class * sampler.classes());
        for c in 0..sampler.classes() {
            for i in 0..per_class {
                let s = seed::derive(spec.seed, &[rep as u64, part, c as u64, i as u64]);
                out.push(LabeledPattern::new(sampler.sample(c, s)?, c));
            }
        }
        Ok(out)
    };
    Ok(Replication {
        train: draw(TRAIN, spec.train_per_class)?,
        test: draw(TEST, spec.test_per_class)?,
    })
}

fn error_rate(predicted: &[usize], truth: &[usize]) -> f64 {
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    wrong as f64 / truth.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn classes_in(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Hausdorff tables shared by all k-NN variants of one replication.
struct KnnTables {
    train: DistanceTable,
    test: DistanceTable,
    train_counts: Vec<usize>,
    test_counts: Vec<usize>,
    train_labels: Vec<usize>,
    diameter: f64,
}

impl KnnTables {
    fn build(train: &[LabeledPattern], test: &[LabeledPattern], window: &Window) -> Result<Self> {
        let tr: Vec<&PointPattern> = train.iter().map(|s| &s.pattern).collect();
        let te: Vec<&PointPattern> = test.iter().map(|s| &s.pattern).collect();
        Ok(KnnTables {
            train: DistanceTable::hausdorff_pairwise(&tr)?,
            test: DistanceTable::hausdorff(&te, &tr)?,
            train_counts: tr.iter().map(|p| p.len()).collect(),
            test_counts: te.iter().map(|p| p.len()).collect(),
            train_labels: train.iter().map(|s| s.label).collect(),
            diameter: window.diameter(),
        })
    }

    fn tables(&self, kind: MetricKind) -> (DistanceTable, DistanceTable) {
        (
            self.train
                .with_metric(kind, &self.train_counts, &self.train_counts, self.diameter),
            self.test
                .with_metric(kind, &self.test_counts, &self.train_counts, self.diameter),
        )
    }

    /// Test predictions for each `k`, sorting each neighbour list once.
    fn predict(&self, test: &DistanceTable, ks: &[usize]) -> Vec<Vec<usize>> {
        let classes = classes_in(&self.train_labels);
        let mut out = vec![Vec::with_capacity(test.rows()); ks.len()];
        for q in 0..test.rows() {
            let order = neighbour_order(test.row(q));
            for (j, &k) in ks.iter().enumerate() {
                out[j].push(vote(&order, &self.train_labels, k, classes));
            }
        }
        out
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "k = {k} with {n} training patterns"
        )));
    }
    Ok(())
}

/// Bayes predictions for `test` and the hyperparameters used. `fixed`
/// bandwidths skip the CV search.
fn run_bayes(
    fixed: Option<Vec<f64>>,
    kernel: KernelKind,
    grid: usize,
    train: &[LabeledPattern],
    test: &[LabeledPattern],
    cv: &CvConfig,
) -> Result<(Vec<usize>, Hyperparameters)> {
    let window = train[0].pattern.window();
    let (sigmas, cv_error) = match fixed {
        Some(s) => (s, None),
        None => {
            let sel = select_sigma(train, cv, kernel, grid)?;
            (sel.sigmas, Some(sel.cv_error))
        }
    };
    let spec = KernelSpec::new(kernel, sigmas[0], window.dim())?;
    let bayes = BayesClassifier::fit(train, spec, &sigmas, grid)?;
    let predicted = test
        .iter()
        .map(|s| bayes.classify(&s.pattern))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        predicted,
        Hyperparameters {
            sigma: Some(sigmas),
            k: None,
            cv_error,
        },
    ))
}

fn run_replication(
    spec: &ExperimentSpec,
    sampler: &ScenarioSampler,
    rep: usize,
) -> Result<Vec<(f64, Hyperparameters)>> {
    let data = sample_replication(spec, sampler, rep)?;
    let truth: Vec<usize> = data.test.iter().map(|s| s.label).collect();
    let cv = CvConfig {
        seed: seed::derive(spec.seed, &[rep as u64, CV]),
        ..spec.cv.clone()
    };
    let needs_knn = spec.classifiers.iter().any(|c| c.metric().is_some());
    let tables = if needs_knn {
        Some(KnnTables::build(&data.train, &data.test, sampler.window())?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(spec.classifiers.len());
    for &id in &spec.classifiers {
        let entry = match (id.metric(), &tables) {
            (None, _) => {
                let fixed = spec.sigma.resolve(spec.scenario.default_sigma())?;
                let (pred, hp) =
                    run_bayes(fixed, spec.kernel, spec.grid, &data.train, &data.test, &cv)?;
                (error_rate(&pred, &truth), hp)
            }
            (Some(kind), Some(t)) => {
                let (train_table, test_table) = t.tables(kind);
                let (k, cv_error) = match spec.k {
                    KPolicy::Fixed(k) => {
                        check_k(k, data.train.len())?;
                        (k, None)
                    }
                    KPolicy::Named(KPolicyName::Cv) => {
                        let sel = select_k_from_table(&train_table, &t.train_labels, &cv)?;
                        (sel.k, Some(sel.cv_error))
                    }
                };
                let pred = t.predict(&test_table, &[k]).remove(0);
                (
                    error_rate(&pred, &truth),
                    Hyperparameters {
                        sigma: None,
                        k: Some(k),
                        cv_error,
                    },
                )
            }
            (Some(_), None) => {
                unreachable!("tables are built whenever a k-NN classifier is requested")
            }
        };
        out.push(entry);
    }
    Ok(out)
}

/// Runs replications `0..n` in parallel, attaching the index to errors.
fn replicate<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n)
        .into_par_iter()
        .map(|rep| {
            f(rep).map_err(|e| Error::Replication {
                index: rep,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Runs the benchmark described by `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let sampler = spec.scenario.sampler()?;
    let per_rep = replicate(spec.replications, |rep| {
        run_replication(spec, &sampler, rep)
    })?;
    let mut results = BTreeMap::new();
    for (j, &id) in spec.classifiers.iter().enumerate() {
        let rates: Vec<f64> = per_rep.iter().map(|r| r[j].0).collect();
        let hyperparameters = per_rep.iter().map(|r| r[j].1.clone()).collect();
        results.insert(
            id,
            ClassifierResult {
                mean: mean(&rates),
                rates,
                hyperparameters,
            },
        );
    }
    let result = ExperimentResult {
        spec: spec.clone(),
        results,
    };
    result.validate()?;
    Ok(result)
}

/// Mean k-NN error at one fixed `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSweepRow {
    pub classifier: ClassifierId,
    pub k: usize,
    pub mean: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSweep {
    pub spec: ExperimentSpec,
    pub k_list: Vec<usize>,
    pub rows: Vec<KSweepRow>,
}

impl KSweep {
    pub fn mean(&self, classifier: ClassifierId, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.classifier == classifier && r.k == k)
            .map(|r| r.mean)
    }

    pub fn validate(&self) -> Result<()> {
        check_rates(self.rows.iter().map(|r| &r.rates), self.spec.replications)
    }
}

fn check_rates<'a>(lists: impl Iterator<Item = &'a Vec<f64>>, replications: usize) -> Result<()> {
    for rates in lists {
        if rates.len() != replications {
            return Err(Error::Invariant(format!(
                "{} rates for {replications} replications",
                rates.len()
            )));
        }
        if rates.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::Invariant("rate outside [0, 1]".into()));
        }
    }
    Ok(())
}

/// Runs the k-NN classifiers of `spec` at every fixed `k` in `k_list`.
pub fn sweep_k(spec: &ExperimentSpec, k_list: &[usize]) -> Result<KSweep> {
    spec.validate()?;
    if k_list.is_empty() {
        return Err(Error::invalid("k list is empty"));
    }
    let ids: Vec<ClassifierId> = spec
        .classifiers
        .iter()
        .copied()
        .filter(|c| c.metric().is_some())
        .collect();
    let sampler = spec.scenario.sampler()?;
    let per_rep = replicate(spec.replications, |rep| {
        let data = sample_replication(spec, &sampler, rep)?;
        for &k in k_list {
            check_k(k, data.train.len())?;
        }
        let truth: Vec<usize> = data.test.iter().map(|s| s.label).collect();
        let t = KnnTables::build(&data.train, &data.test, sampler.window())?;
        Ok(ids
            .iter()
            .map(|id| {
                let (_, test_table) = t.tables(id.metric().expect("k-NN classifier"));
                t.predict(&test_table, k_list)
                    .iter()
                    .map(|pred| error_rate(pred, &truth))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>())
    })?;
    let mut rows = Vec::new();
    for (a, &id) in ids.iter().enumerate() {
        for (b, &k) in k_list.iter().enumerate() {
            let rates: Vec<f64> = per_rep.iter().map(|r| r[a][b]).collect();
            rows.push(KSweepRow {
                classifier: id,
                k,
                mean: mean(&rates),
                rates,
            });
        }
    }
    let sweep = KSweep {
        spec: spec.clone(),
        k_list: k_list.to_vec(),
        rows,
    };
    sweep.validate()?;
    Ok(sweep)
}

/// Mean Bayes error at one bandwidth combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSweepRow {
    pub sigmas: Vec<f64>,
    pub mean: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSweep {
    pub spec: ExperimentSpec,
    pub rows: Vec<SigmaSweepRow>,
}

impl SigmaSweep {
    pub fn mean(&self, sigmas: &[f64]) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.sigmas == sigmas)
            .map(|r| r.mean)
    }

    pub fn validate(&self) -> Result<()> {
        check_rates(self.rows.iter().map(|r| &r.rates), self.spec.replications)
    }
}

/// Runs the Bayes rule at every per-class bandwidth combination in `combos`.
pub fn sweep_sigma(spec: &ExperimentSpec, combos: &[Vec<f64>]) -> Result<SigmaSweep> {
    spec.validate()?;
    if combos.is_empty() {
        return Err(Error::invalid("bandwidth list is empty"));
    }
    let sampler = spec.scenario.sampler()?;
    let classes = sampler.classes();
    let mut distinct: Vec<f64> = Vec::new();
    for combo in combos {
        if combo.len() != classes {
            return Err(Error::invalid(format!(
                "bandwidth combination {combo:?} needs {classes} values"
            )));
        }
        for &s in combo {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!(
                    "bandwidths must be positive: {combo:?}"
                )));
            }
            if !distinct.contains(&s) {
                distinct.push(s);
            }
        }
    }
    let index = |s: f64| {
        distinct
            .iter()
            .position(|&d| d == s)
            .expect("collected above")
    };
    let per_rep = replicate(spec.replications, |rep| {
        let data = sample_replication(spec, &sampler, rep)?;
        let train: Vec<&LabeledPattern> = data.train.iter().collect();
        let queries: Vec<&PointPattern> = data.test.iter().map(|s| &s.pattern).collect();
        let table = score_components(&train, &queries, &distinct, spec.kernel, spec.grid)?;
        let truth: Vec<usize> = data.test.iter().map(|s| s.label).collect();
        Ok(combos
            .iter()
            .map(|combo| {
                let pred: Vec<usize> = table
                    .iter()
                    .map(|row| {
                        let scores: Vec<f64> =
                            (0..classes).map(|c| row[c][index(combo[c])]).collect();
                        argmax_first(&scores)
                    })
                    .collect();
                error_rate(&pred, &truth)
            })
            .collect::<Vec<f64>>())
    })?;
    let rows = combos
        .iter()
        .enumerate()
        .map(|(j, combo)| {
            let rates: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
            SigmaSweepRow {
                sigmas: combo.clone(),
                mean: mean(&rates),
                rates,
            }
        })
        .collect();
    let sweep = SigmaSweep {
        spec: spec.clone(),
        rows,
    };
    sweep.validate()?;
    Ok(sweep)
}

/// Settings for classifying a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Common observation window; the bounding box of all points with a 1%
    /// margin when absent.
    #[serde(default)]
    pub window: Option<Window>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierId>,
    #[serde(default)]
    pub sigma: SigmaPolicy,
    #[serde(default)]
    pub k: KPolicy,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            window: None,
            classifiers: default_classifiers(),
            sigma: SigmaPolicy::default(),
            k: KPolicy::default(),
            cv: CvConfig::default(),
            kernel: default_kernel(),
            grid: default_grid(),
        }
    }
}

/// Outcome of one classifier on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetOutcome {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub error_rate: f64,
    pub predictions: Vec<usize>,
    pub hyperparameters: Hyperparameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetReport {
    pub window: Window,
    pub train_size: usize,
    pub test_size: usize,
    pub results: BTreeMap<ClassifierId, DatasetOutcome>,
}

/// Fits every configured classifier on `train` and evaluates it on `test`.
/// Both samples must already share one window.
pub fn classify_dataset(
    train: &[LabeledPattern],
    test: &[LabeledPattern],
    config: &DatasetConfig,
) -> Result<DatasetReport> {
    if train.is_empty() {
        return Err(Error::invalid("training sample is empty"));
    }
    if test.is_empty() {
        return Err(Error::invalid("test sample is empty"));
    }
    let window = train[0].pattern.window().clone();
    if train
        .iter()
        .chain(test)
        .any(|s| s.pattern.window() != &window)
    {
        return Err(Error::WindowMismatch);
    }
    let train_labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let classes = classes_in(&train_labels);
    for c in 0..classes {
        if !train_labels.contains(&c) {
            return Err(Error::invalid(format!(
                "labels must be 0..{classes} without gaps; class {c} has no training pattern"
            )));
        }
    }
    if let Some(s) = test.iter().find(|s| s.label >= classes) {
        return Err(Error::invalid(format!(
            "class {} appears in the test sample but not in the training sample",
            s.label
        )));
    }
    let truth: Vec<usize> = test.iter().map(|s| s.label).collect();
    let needs_knn = config.classifiers.iter().any(|c| c.metric().is_some());
    let tables = if needs_knn {
        Some(KnnTables::build(train, test, &window)?)
    } else {
        None
    };
    let mut results = BTreeMap::new();
    for &id in &config.classifiers {
        let (predictions, hyperparameters) = match (id.metric(), &tables) {
            (None, _) => {
                let fixed = config.sigma.resolve(None)?;
                run_bayes(fixed, config.kernel, config.grid, train, test, &config.cv)?
            }
            (Some(kind), Some(t)) => {
                let (train_table, test_table) = t.tables(kind);
                let (k, cv_error) = match config.k {
                    KPolicy::Fixed(k) => {
                        check_k(k, train.len())?;
                        (k, None)
                    }
                    KPolicy::Named(KPolicyName::Cv) => {
                        let sel = select_k_from_table(&train_table, &train_labels, &config.cv)?;
                        (sel.k, Some(sel.cv_error))
                    }
                };
                (
                    t.predict(&test_table, &[k]).remove(0),
                    Hyperparameters {
                        sigma: None,
                        k: Some(k),
                        cv_error,
                    },
                )
            }
            (Some(_), None) => {
                unreachable!("tables are built whenever a k-NN classifier is requested")
            }
        };
        let mut confusion = vec![vec![0; classes]; classes];
        for (&t, &p) in truth.iter().zip(&predictions) {
            confusion[t][p] += 1;
        }
        results.insert(
            id,
            DatasetOutcome {
                confusion,
                error_rate: error_rate(&predictions, &truth),
                predictions,
                hyperparameters,
            },
        );
    }
    Ok(DatasetReport {
        window,
        train_size: train.len(),
        test_size: test.len(),
        results,
    })
}
