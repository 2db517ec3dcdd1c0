//! k-NN evaluation under a learned metric, Recall@K, the repeated-split
//! experiment harness and a full-batch trainer for embedding losses.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_splits, make_stratified_splits, PcaRecord, Split, SplitPlan, StandardizeRecord};
use crate::embedding::{
    danml_loss, lifted_improved_loss, ms_loss, npairs_improved_loss, triplet_loss, DanmlConfig, EmbeddingBatch,
    LiftedParams, LossReport,
};
use crate::error::{invalid, Error, Result};
use crate::metric::{
    build_pair_sets, default_init, csv_err, solve_lanml_with, solve_pnca, LanmlConfig, MetricMatrix, PairMode,
    SolveOutcome, TraceRow,
};
use crate::par::{self, Exec};
use crate::LabeledDataset;

pub const MAX_K: usize = 40;

/// Per-k accuracies of one train/test evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub accuracy_by_k: BTreeMap<usize, f64>,
    pub best_k: usize,
    pub best_accuracy: f64,
}

impl TrialResult {
    fn from_map(accuracy_by_k: BTreeMap<usize, f64>) -> Self {
        // smallest k wins ties
        let (best_k, best_accuracy) = accuracy_by_k
            .iter()
            .fold((0, f64::NEG_INFINITY), |(bk, ba), (&k, &a)| if a > ba { (k, a) } else { (bk, ba) });
        Self { accuracy_by_k, best_k, best_accuracy }
    }
}

fn check_k_values(k_values: &[usize], limit: usize) -> Result<()> {
    if k_values.is_empty() {
        return invalid("at least one k is required");
    }
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || k > limit) {
        return invalid(format!("k = {k} outside 1..={limit}"));
    }
    Ok(())
}

/// Majority vote among the `k` nearest `(distance, label)` pairs, which must
/// be sorted by distance. Ties go to the smaller summed distance, then the
/// smaller class index.
fn vote(neighbors: &[(f64, usize)], k: usize, n_classes: usize) -> usize {
    let mut count = vec![0usize; n_classes + 1];
    let mut dist = vec![0.0f64; n_classes + 1];
    for &(d, y) in &neighbors[..k] {
        count[y] += 1;
        dist[y] += d;
    }
    (1..=n_classes)
        .filter(|&c| count[c] > 0)
        .min_by(|&a, &b| count[b].cmp(&count[a]).then(dist[a].total_cmp(&dist[b])).then(a.cmp(&b)))
        .unwrap_or(1)
}

/// Predicted labels for every test row, one vector per entry of `k_values`.
pub fn knn_predict(
    train: &LabeledDataset,
    test: &LabeledDataset,
    metric: &MetricMatrix,
    k_values: &[usize],
) -> Result<Vec<Vec<usize>>> {
    if train.dim() != test.dim() || metric.dim() != train.dim() {
        return invalid(format!(
            "dimension mismatch: train {}, test {}, metric {}",
            train.dim(),
            test.dim(),
            metric.dim()
        ));
    }
    check_k_values(k_values, train.len())?;
    let (tr, te) = (metric.transform(train)?, metric.transform(test)?);
    let classes = train.n_classes().max(test.n_classes());
    let per_point = par::map_indexed(te.len(), Exec::default(), |t| {
        let x = te.row(t);
        let mut nb: Vec<(f64, usize, usize)> = (0..tr.len())
            .map(|j| (x.iter().zip(tr.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), j, tr.label(j)))
            .collect();
        nb.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nb: Vec<(f64, usize)> = nb.into_iter().map(|(d, _, y)| (d, y)).collect();
        k_values.iter().map(|&k| vote(&nb, k, classes)).collect::<Vec<_>>()
    });
    Ok((0..k_values.len()).map(|q| per_point.iter().map(|p| p[q]).collect()).collect())
}

pub fn knn_classify(
    train: &LabeledDataset,
    test: &LabeledDataset,
    metric: &MetricMatrix,
    k_values: &[usize],
) -> Result<TrialResult> {
    let preds = knn_predict(train, test, metric, k_values)?;
    let n = test.len().max(1) as f64;
    let map = k_values
        .iter()
        .zip(&preds)
        .map(|(&k, p)| (k, p.iter().zip(test.labels()).filter(|(a, b)| a == b).count() as f64 / n))
        .collect();
    Ok(TrialResult::from_map(map))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub recall_at: BTreeMap<usize, f64>,
}

/// Fraction of queries with a same-label item among their `K` most
/// cosine-similar other embeddings.
pub fn recall_at_k(batch: &EmbeddingBatch, k_values: &[usize]) -> Result<RecallResult> {
    let n = batch.len();
    if k_values.is_empty() {
        return invalid("at least one K is required");
    }
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || k >= n) {
        return invalid(format!("K = {k} must lie in 1..{n}"));
    }
    let kmax = *k_values.iter().max().unwrap_or(&1);
    let labels = batch.labels();
    // rank of the first same-label neighbor, if within kmax
    let first_hit = par::map_indexed(n, Exec::default(), |i| {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (batch.cosine(i, j), j)).collect();
        others.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        others.iter().take(kmax).position(|&(_, j)| labels[j] == labels[i])
    });
    let recall_at = k_values
        .iter()
        .map(|&k| (k, first_hit.iter().filter(|h| h.is_some_and(|r| r < k)).count() as f64 / n as f64))
        .collect();
    Ok(RecallResult { recall_at })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Learner {
    /// Euclidean k-NN baseline.
    Identity,
    /// Convex LANML, `γ₁ < 0`.
    #[default]
    LanmlMinus,
    /// LANML with `γ₁ > 0`.
    LanmlPlus,
    Pnca,
}

impl std::str::FromStr for Learner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Learner::Identity),
            "lanml-minus" => Ok(Learner::LanmlMinus),
            "lanml-plus" => Ok(Learner::LanmlPlus),
            "pnca" => Ok(Learner::Pnca),
            _ => invalid(format!("unknown learner '{s}'")),
        }
    }
}

impl std::fmt::Display for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Learner::Identity => "identity",
            Learner::LanmlMinus => "lanml-minus",
            Learner::LanmlPlus => "lanml-plus",
            Learner::Pnca => "pnca",
        })
    }
}

/// Grid for the cross-validated tuner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneGrid {
    /// Magnitudes; the sign comes from the learner.
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub reg_weight: Vec<f64>,
    pub folds: usize,
}

impl TuneGrid {
    /// `|γ| ∈ {2⁻⁵, …, 2⁵}` and `λ ∈ {0.1, 0.3, …, 1.5}`.
    pub fn full() -> Self {
        let powers: Vec<f64> = (-5..=5).map(|p| 2f64.powi(p)).collect();
        Self {
            gamma1: powers.clone(),
            gamma2: powers,
            reg_weight: (0..8).map(|i| 0.1 + 0.2 * i as f64).collect(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub learner: Learner,
    pub lanml: LanmlConfig,
    pub pnca_alpha: f64,
    pub plan: SplitPlan,
    pub k_values: Vec<usize>,
    /// PCA target when the input dimension exceeds it.
    pub pca_dim: Option<usize>,
    /// Fit standardization and PCA on the whole dataset before splitting.
    pub paper_protocol: bool,
    pub restarts: usize,
    pub tune: Option<TuneGrid>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            learner: Learner::LanmlMinus,
            lanml: LanmlConfig::default(),
            pnca_alpha: 1.0,
            plan: SplitPlan::default(),
            k_values: (1..=MAX_K).collect(),
            pca_dim: Some(150),
            paper_protocol: false,
            restarts: 1,
            tune: None,
        }
    }
}

impl ExperimentConfig {
    /// Standardize, PCA to 150, 70/30 splits over 30 trials, k ∈ 1..=40,
    /// hinge loss with 10 nearest similars and `M₀ = I/√N`.
    pub fn paper_uci(learner: Learner) -> Self {
        let mut cfg = Self { learner, ..Self::default() };
        if learner == Learner::LanmlPlus {
            cfg.lanml.gamma1 = 1.0;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        check_k_values(&self.k_values, usize::MAX)?;
        if self.k_values.iter().any(|&k| k > MAX_K) {
            return invalid(format!("k values must lie in 1..={MAX_K}"));
        }
        if self.restarts == 0 {
            return invalid("restarts must be >= 1");
        }
        if self.pca_dim == Some(0) {
            return invalid("pca_dim must be positive");
        }
        match self.learner {
            Learner::LanmlMinus | Learner::LanmlPlus => {
                self.lanml.validate()?;
                let want_neg = self.learner == Learner::LanmlMinus;
                if (self.lanml.gamma1 < 0.0) != want_neg || self.lanml.gamma1 == 0.0 {
                    return invalid(format!(
                        "{} needs gamma1 {} 0, got {}",
                        self.learner,
                        if want_neg { "<" } else { ">" },
                        self.lanml.gamma1
                    ));
                }
            }
            Learner::Pnca => {
                if !(self.pnca_alpha > 0.0) {
                    return invalid("pnca alpha must be > 0");
                }
            }
            Learner::Identity => {}
        }
        if let Some(g) = &self.tune {
            if g.folds < 2 || g.gamma1.is_empty() || g.gamma2.is_empty() || g.reg_weight.is_empty() {
                return invalid("tuning grid needs >= 2 folds and non-empty value lists");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub result: TrialResult,
    pub final_loss: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Hyperparameters chosen by the tuner, when enabled.
    pub tuned: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub dataset: String,
    pub learner: Learner,
    pub trials: usize,
    /// Mean over trials of the best-k test accuracy.
    pub mean: f64,
    /// Sample standard deviation over trials (0 for a single trial).
    pub std: f64,
    pub best_k_histogram: BTreeMap<usize, usize>,
    pub mean_accuracy_by_k: BTreeMap<usize, f64>,
    /// The best k is chosen on the test split.
    pub best_k_selected_on_test: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub rows: Vec<TrialRow>,
    /// Learned metric of every trial, in the preprocessed space.
    pub metrics: Vec<MetricMatrix>,
    /// Solver trace of every trial; empty for fixed metrics.
    pub traces: Vec<Vec<TraceRow>>,
}

struct Prep {
    std: StandardizeRecord,
    pca: Option<PcaRecord>,
}

impl Prep {
    fn fit(data: &LabeledDataset, pca_dim: Option<usize>) -> Result<Self> {
        let std = StandardizeRecord::fit(data)?;
        let pca = match pca_dim {
            Some(t) if data.dim() > t => Some(PcaRecord::fit(&std.apply(data)?, t.min(data.len()))?),
            _ => None,
        };
        Ok(Self { std, pca })
    }

    fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let s = self.std.apply(data)?;
        match &self.pca {
            Some(p) => p.apply(&s),
            None => Ok(s),
        }
    }
}

fn random_psd(d: usize, rng: &mut ChaCha8Rng) -> Result<MetricMatrix> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    MetricMatrix::new(&a * a.transpose() / d as f64)
}

/// Fits the configured learner on `train`. Restarts beyond the first draw
/// random PSD starting points and keep the lowest final loss.
fn learn(train: &LabeledDataset, cfg: &ExperimentConfig, lanml: &LanmlConfig, rng: &mut ChaCha8Rng) -> Result<Option<SolveOutcome>> {
    let d = train.dim();
    let solve = |init: &MetricMatrix| -> Result<SolveOutcome> {
        match cfg.learner {
            Learner::Pnca => {
                let pairs = build_pair_sets(train, 1, PairMode::AllSimilars)?;
                solve_pnca(train, &pairs, cfg.pnca_alpha, &lanml.solver, init)
            }
            _ => {
                let pairs = build_pair_sets(train, lanml.similars_per_query, PairMode::KnnSimilars)?;
                solve_lanml_with(train, &pairs, lanml, init, Exec::Sequential)
            }
        }
    };
    if cfg.learner == Learner::Identity {
        return Ok(None);
    }
    let mut best = solve(&default_init(d, train.len()))?;
    for _ in 1..cfg.restarts {
        let o = solve(&random_psd(d, rng)?)?;
        if o.loss < best.loss {
            best = o;
        }
    }
    Ok(Some(best))
}

/// Picks `(γ₁, γ₂, λ)` by k-fold cross-validation of mean best-k accuracy on
/// the training portion.
pub fn tune_lanml(train: &LabeledDataset, cfg: &ExperimentConfig, grid: &TuneGrid, seed: u64) -> Result<LanmlConfig> {
    let sign = if cfg.learner == Learner::LanmlPlus { 1.0 } else { -1.0 };
    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let folds: Vec<Vec<usize>> = (0..grid.folds).map(|f| order.iter().copied().skip(f).step_by(grid.folds).collect()).collect();
    let mut candidates = Vec::new();
    for &g1 in &grid.gamma1 {
        for &g2 in &grid.gamma2 {
            for &lam in &grid.reg_weight {
                candidates.push((sign * g1.abs(), g2.abs(), lam));
            }
        }
    }
    let scores = par::try_map_indexed(candidates.len(), Exec::default(), |c| -> Result<f64> {
        let (g1, g2, lam) = candidates[c];
        let lanml = LanmlConfig { gamma1: g1, gamma2: g2, reg_weight: lam, ..cfg.lanml.clone() };
        let mut total = 0.0;
        for held in &folds {
            let fit_idx: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
            let (fit, val) = (train.subset(&fit_idx), train.subset(held));
            let mut local = ChaCha8Rng::seed_from_u64(seed);
            let metric = match learn(&fit, cfg, &lanml, &mut local) {
                Ok(o) => o.map(|o| o.metric).unwrap_or_else(|| MetricMatrix::identity(fit.dim())),
                Err(_) => return Ok(f64::NEG_INFINITY),
            };
            let ks: Vec<usize> = cfg.k_values.iter().copied().filter(|&k| k <= fit.len()).collect();
            total += knn_classify(&fit, &val, &metric, &ks)?.best_accuracy;
        }
        Ok(total / folds.len() as f64)
    })?;
    // first best in grid order
    let best = scores.iter().enumerate().fold(0, |b, (i, &s)| if s > scores[b] { i } else { b });
    let (g1, g2, lam) = candidates[best];
    Ok(LanmlConfig { gamma1: g1, gamma2: g2, reg_weight: lam, ..cfg.lanml.clone() })
}

type TrialOutput = (TrialRow, MetricMatrix, Vec<TraceRow>);

fn run_trial(
    data: &LabeledDataset,
    cfg: &ExperimentConfig,
    trial: usize,
    split: &Split,
    global: Option<&Prep>,
    fixed: Option<&MetricMatrix>,
) -> Result<TrialOutput> {
    let (raw_train, raw_test) = (data.subset(&split.train), data.subset(&split.test));
    let local;
    let prep = match global {
        Some(p) => p,
        None => {
            local = Prep::fit(&raw_train, cfg.pca_dim)?;
            &local
        }
    };
    let (train, test) = (prep.apply(&raw_train)?, prep.apply(&raw_test)?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.plan.seed);
    rng.set_stream(trial as u64 + 1);
    if let Some(m) = fixed {
        if m.dim() != train.dim() {
            return invalid(format!("metric has dimension {}, preprocessed data has {}", m.dim(), train.dim()));
        }
    }
    let (lanml, tuned) = match (&cfg.tune, cfg.learner) {
        _ if fixed.is_some() => (cfg.lanml.clone(), None),
        (Some(grid), Learner::LanmlMinus | Learner::LanmlPlus) => {
            let t = tune_lanml(&train, cfg, grid, cfg.plan.seed.wrapping_add(trial as u64))?;
            let tuned = (t.gamma1, t.gamma2, t.reg_weight);
            (t, Some(tuned))
        }
        _ => (cfg.lanml.clone(), None),
    };
    let outcome = if fixed.is_some() { None } else { learn(&train, cfg, &lanml, &mut rng)? };
    let metric = match (fixed, &outcome) {
        (Some(m), _) => m.clone(),
        (None, Some(o)) => o.metric.clone(),
        (None, None) => MetricMatrix::identity(train.dim()),
    };
    let ks: Vec<usize> = cfg.k_values.iter().copied().filter(|&k| k <= train.len()).collect();
    let result = knn_classify(&train, &test, &metric, &ks)?;
    let row = TrialRow {
        trial,
        result,
        final_loss: outcome.as_ref().map(|o| o.loss),
        iterations: outcome.as_ref().map_or(0, |o| o.trace.len() - 1),
        converged: outcome.as_ref().is_none_or(|o| o.converged),
        tuned,
    };
    let trace = outcome.map(|o| o.trace).unwrap_or_default();
    Ok((row, metric, trace))
}

pub fn run_experiment(data: &LabeledDataset, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_with(data, cfg, Exec::default())
}

/// Runs every trial (in parallel under [`Exec::Parallel`]) and aggregates in
/// trial order.
pub fn run_experiment_with(data: &LabeledDataset, cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutcome> {
    run_inner(data, cfg, exec, None)
}

/// Evaluates a stored metric over the configured splits, with the same
/// preprocessing as training.
pub fn evaluate_metric(data: &LabeledDataset, cfg: &ExperimentConfig, metric: &MetricMatrix) -> Result<ExperimentOutcome> {
    run_inner(data, cfg, Exec::default(), Some(metric))
}

fn run_inner(data: &LabeledDataset, cfg: &ExperimentConfig, exec: Exec, fixed: Option<&MetricMatrix>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if data.n_classes() < 2 {
        return invalid("experiment needs at least two classes");
    }
    let splits = if cfg.plan.stratified {
        make_stratified_splits(data.labels(), &cfg.plan)?
    } else {
        make_splits(data.len(), &cfg.plan)?
    };
    let global = if cfg.paper_protocol { Some(Prep::fit(data, cfg.pca_dim)?) } else { None };
    let results = par::map_indexed(splits.len(), exec, |t| {
        run_trial(data, cfg, t, &splits[t], global.as_ref(), fixed).map_err(|e| Error::Trial { trial: t, source: Box::new(e) })
    });
    let (mut rows, mut metrics, mut traces) = (Vec::new(), Vec::new(), Vec::new());
    for r in results {
        let (row, m, trace) = r?;
        rows.push(row);
        metrics.push(m);
        traces.push(trace);
    }
    let best: Vec<f64> = rows.iter().map(|r| r.result.best_accuracy).collect();
    let (mean, std) = mean_std(&best);
    let mut best_k_histogram = BTreeMap::new();
    for r in &rows {
        *best_k_histogram.entry(r.result.best_k).or_insert(0) += 1;
    }
    let mut mean_accuracy_by_k = BTreeMap::new();
    for r in &rows {
        for (&k, &a) in &r.result.accuracy_by_k {
            *mean_accuracy_by_k.entry(k).or_insert(0.0) += a / rows.len() as f64;
        }
    }
    let summary = ExperimentSummary {
        dataset: data.name.clone(),
        learner: cfg.learner,
        trials: rows.len(),
        mean,
        std,
        best_k_histogram,
        mean_accuracy_by_k,
        best_k_selected_on_test: true,
    };
    Ok(ExperimentOutcome { summary, rows, metrics, traces })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Long-format `trial,k,accuracy` rows.
pub fn write_accuracy_csv<W: Write>(rows: &[TrialRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "k", "accuracy"]).map_err(csv_err)?;
    for r in rows {
        for (k, a) in &r.result.accuracy_by_k {
            w.write_record(&[r.trial.to_string(), k.to_string(), a.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Class-balanced synthetic embedding batch: `per_class` random points on
/// the unit sphere for each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { classes: 2, per_class: 10, dim: 8, seed: 0 }
    }
}

pub fn synthetic_batch(spec: &SyntheticSpec) -> Result<EmbeddingBatch> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dim == 0 {
        return invalid("synthetic spec needs positive classes, per_class and dim");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = rand_distr::StandardNormal;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..spec.classes {
        for _ in 0..spec.per_class {
            rows.push((0..spec.dim).map(|_| rng.sample::<f64, _>(normal)).collect());
            labels.push(c as i64);
        }
    }
    EmbeddingBatch::normalize(rows, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "loss")]
pub enum ToyLoss {
    Danml(DanmlConfig),
    Triplet { margin: f64 },
    Ms { alpha: f64, beta: f64, margin: f64 },
    Lifted(LiftedParams),
    Npairs { gamma: f64, lambda: f64 },
}

impl ToyLoss {
    pub fn name(&self) -> &'static str {
        match self {
            ToyLoss::Danml(_) => "danml",
            ToyLoss::Triplet { .. } => "triplet",
            ToyLoss::Ms { .. } => "ms",
            ToyLoss::Lifted(_) => "lifted",
            ToyLoss::Npairs { .. } => "npairs",
        }
    }

    pub fn evaluate(&self, batch: &EmbeddingBatch) -> Result<LossReport> {
        match self {
            ToyLoss::Danml(cfg) => danml_loss(batch, cfg),
            ToyLoss::Triplet { margin } => triplet_loss(batch, *margin),
            ToyLoss::Ms { alpha, beta, margin } => ms_loss(batch, *alpha, *beta, *margin),
            ToyLoss::Lifted(p) => lifted_improved_loss(batch, p),
            ToyLoss::Npairs { gamma, lambda } => npairs_improved_loss(batch, *gamma, *lambda),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub initial: EmbeddingBatch,
    pub last: EmbeddingBatch,
    /// Loss before each step, then the final loss.
    pub trace: Vec<f64>,
    pub recall_before: f64,
    pub recall_after: f64,
}

/// Full-batch gradient descent on free embeddings, re-projected to the unit
/// sphere after each step.
pub fn toy_embedding_train(spec: &SyntheticSpec, loss: &ToyLoss, steps: usize, step_size: f64) -> Result<ToyOutcome> {
    if !(step_size > 0.0) {
        return invalid("step size must be positive");
    }
    let initial = synthetic_batch(spec)?;
    let mut batch = initial.clone();
    let mut trace = Vec::with_capacity(steps + 1);
    let numeric = |step: usize, e: Error| match e {
        Error::Numeric(m) => Error::Numeric(format!("step {step}: {m}")),
        other => other,
    };
    for step in 0..steps {
        let r = loss.evaluate(&batch).map_err(|e| numeric(step, e))?;
        trace.push(r.loss);
        batch.apply_step(&r.grad, step_size)?;
        batch.renormalize().map_err(|e| numeric(step, e))?;
    }
    trace.push(loss.evaluate(&batch).map_err(|e| numeric(steps, e))?.loss);
    let r1 = |b: &EmbeddingBatch| recall_at_k(b, &[1]).map(|r| r.recall_at[&1]);
    Ok(ToyOutcome { recall_before: r1(&initial)?, recall_after: r1(&batch)?, initial, last: batch, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::LossKind;

    fn line() -> (LabeledDataset, LabeledDataset) {
        let train = LabeledDataset::new("tr", vec![vec![0.0], vec![1.0], vec![5.0], vec![6.0]], vec![1, 1, 2, 2]).unwrap();
        let test = LabeledDataset::new("te", vec![vec![0.5], vec![5.5], vec![1.2], vec![4.9]], vec![1, 2, 1, 2]).unwrap();
        (train, test)
    }

    #[test]
    fn knn_line_data() {
        let (train, test) = line();
        let r = knn_classify(&train, &test, &MetricMatrix::identity(1), &[1]).unwrap();
        assert_eq!(r.accuracy_by_k[&1], 1.0);
        assert_eq!((r.best_k, r.best_accuracy), (1, 1.0));
    }

    #[test]
    fn identical_point_gets_its_label() {
        let (train, _) = line();
        let p = knn_predict(&train, &train, &MetricMatrix::identity(1), &[1]).unwrap();
        assert_eq!(p[0], vec![1, 1, 2, 2]);
    }

    #[test]
    fn zero_metric_votes_majority_then_index() {
        let train = LabeledDataset::new("tr", vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]], vec![2, 2, 2, 1, 1]).unwrap();
        let zero = MetricMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        let p = knn_predict(&train, &train, &zero, &[5, 4]).unwrap();
        assert!(p[0].iter().all(|&y| y == 2));
        // k = 4 takes indices 0..4: classes 2,2,2,1 -> 2
        assert!(p[1].iter().all(|&y| y == 2));
        let tie = LabeledDataset::new("t", vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![2, 2, 1, 1]).unwrap();
        let p = knn_predict(&tie, &tie, &zero, &[4]).unwrap();
        assert!(p[0].iter().all(|&y| y == 1));
    }

    #[test]
    fn vote_tie_broken_by_distance_sum() {
        // k = 2: one neighbor per class, the nearer one wins
        let nb = [(0.1, 2), (0.2, 1)];
        assert_eq!(vote(&nb, 2, 2), 2);
        let nb = [(0.1, 2), (0.1, 1)];
        assert_eq!(vote(&nb, 2, 2), 1);
    }

    #[test]
    fn knn_validation() {
        let (train, test) = line();
        assert!(knn_classify(&train, &test, &MetricMatrix::identity(2), &[1]).is_err());
        assert!(knn_classify(&train, &test, &MetricMatrix::identity(1), &[5]).is_err());
        assert!(knn_classify(&train, &test, &MetricMatrix::identity(1), &[]).is_err());
    }

    #[test]
    fn recall_examples() {
        let rows = vec![vec![1.0, 0.0], vec![0.99, 0.01], vec![0.0, 1.0], vec![0.01, 0.99]];
        let b = EmbeddingBatch::normalize(rows.clone(), vec![0, 0, 1, 1]).unwrap();
        assert_eq!(recall_at_k(&b, &[1]).unwrap().recall_at[&1], 1.0);
        let b = EmbeddingBatch::normalize(rows, vec![0, 1, 2, 3]).unwrap();
        let r = recall_at_k(&b, &[1, 2, 3]).unwrap();
        assert!(r.recall_at.values().all(|&v| v == 0.0));
        assert!(recall_at_k(&b, &[4]).is_err());
    }

    #[test]
    fn recall_monotone_on_random_batches() {
        for seed in 0..10 {
            let b = synthetic_batch(&SyntheticSpec { classes: 4, per_class: 5, dim: 3, seed }).unwrap();
            let ks: Vec<usize> = (1..20).collect();
            let r = recall_at_k(&b, &ks).unwrap();
            let v: Vec<f64> = r.recall_at.values().copied().collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[0.8]), (0.8, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_trial_has_zero_std_and_reproduces() {
        let data = crate::data::bundled("iris").unwrap();
        let cfg = ExperimentConfig {
            learner: Learner::Identity,
            plan: SplitPlan { trials: 1, seed: 3, ..SplitPlan::default() },
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&data, &cfg).unwrap();
        assert_eq!(a.summary.std, 0.0);
        assert!(a.summary.mean > 0.9);
        let b = run_experiment_with(&data, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn learner_sign_validation() {
        let mut cfg = ExperimentConfig::paper_uci(Learner::LanmlMinus);
        assert!(cfg.validate().is_ok());
        cfg.lanml.gamma1 = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::paper_uci(Learner::LanmlPlus);
        assert!(cfg.validate().is_ok());
        cfg.lanml.gamma2 = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trial_errors_carry_index() {
        let data = LabeledDataset::new(
            "tiny",
            vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0], vec![5.1], vec![9.0]],
            vec![1, 1, 1, 2, 2, 3],
        )
        .unwrap();
        let cfg = ExperimentConfig { plan: SplitPlan { trials: 2, ..SplitPlan::default() }, k_values: vec![1], ..ExperimentConfig::default() };
        match run_experiment_with(&data, &cfg, Exec::Sequential) {
            Err(Error::Trial { trial: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tuner_returns_grid_member() {
        let data = crate::data::bundled("iris").unwrap();
        let idx: Vec<usize> = (0..150).step_by(3).collect();
        let train = data.subset(&idx);
        let cfg = ExperimentConfig { k_values: vec![1, 3], ..ExperimentConfig::default() };
        let grid = TuneGrid { gamma1: vec![1.0, 2.0], gamma2: vec![1.0], reg_weight: vec![0.5], folds: 2 };
        let t = tune_lanml(&train, &cfg, &grid, 0).unwrap();
        assert!(t.gamma1 == -1.0 || t.gamma1 == -2.0);
        assert_eq!((t.gamma2, t.reg_weight), (1.0, 0.5));
    }

    #[test]
    fn zero_steps_leave_embeddings() {
        let loss = ToyLoss::Triplet { margin: 0.5 };
        let o = toy_embedding_train(&SyntheticSpec::default(), &loss, 0, 0.1).unwrap();
        assert_eq!(o.initial, o.last);
        assert_eq!(o.trace.len(), 1);
    }

    #[test]
    fn toy_training_reduces_losses() {
        let spec = SyntheticSpec::default();
        let danml = ToyLoss::Danml(DanmlConfig { loss: LossKind::Logistic, ..DanmlConfig::default() });
        for loss in [danml, ToyLoss::Triplet { margin: 0.5 }] {
            let o = toy_embedding_train(&spec, &loss, 200, 0.05).unwrap();
            assert!(o.trace.last().unwrap() < &o.trace[0], "{}", loss.name());
            assert!(o.recall_after >= o.recall_before);
        }
    }
}
