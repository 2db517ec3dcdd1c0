//! On-demand numerical self-checks: finite-difference gradient probes for
//! every objective and the limit and reduction identities between losses.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embedding::{
    danml_arguments, danml_loss, hardest_triplet_gaps, lifted_arguments, lifted_improved_loss, ms_loss,
    npairs_improved_loss, DanmlConfig, EmbeddingBatch, LiftedMode, LiftedParams, LossReport, Similarity,
};
use crate::error::{invalid, Result};
use crate::metric::{
    build_pair_sets, lanml_arguments, lanml_objective_raw, pnca_objective_raw, pnca_summands, LanmlConfig, LossKind,
    MetricMatrix, PairMode,
};
use crate::par::Exec;
use crate::LabeledDataset;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Floor on the gradient scale used in the relative comparison.
pub const FD_FLOOR: f64 = 1e-2;
pub const LIMIT_GAMMA: f64 = 1e3;
pub const LIMIT_TOL: f64 = 1e-2;
pub const IDENTITY_TOL: f64 = 1e-10;

pub const CHECK_NAMES: &[&str] = &[
    "lanml_objective",
    "pnca_objective",
    "danml_loss",
    "ms_loss",
    "lifted_improved_loss",
    "npairs_improved_loss",
    "prop3",
    "prop4",
    "prop6",
    "prop7",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    /// Largest observed error, in the units of the check's tolerance.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CheckOptions {
    pub seed: u64,
    pub instances: usize,
    /// Run only these checks.
    pub only: Option<Vec<String>>,
    /// Perturb the analytic gradient of this check, to confirm the suite
    /// catches it.
    pub corrupt: Option<String>,
}

/// `max |a − b| / max(‖b‖∞, FD_FLOOR)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(FD_FLOOR, |m, v| m.max(v.abs()));
    analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Central differences of `f` at `x`.
pub fn central_differences<F>(x: &[f64], f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + FD_STEP;
        let up = f(&probe)?;
        probe[k] = x[k] - FD_STEP;
        let down = f(&probe)?;
        probe[k] = x[k];
        out.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(out)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Result<LabeledDataset> {
    let rows = (0..n).map(|_| (0..d).map(|_| gaussian(rng)).collect()).collect();
    let labels = (0..n).map(|i| i % classes + 1).collect();
    LabeledDataset::new("random", rows, labels)
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<i64> {
    // every class gets at least two members
    let mut labels: Vec<i64> = (0..n).map(|i| if i < 2 * classes { (i / 2) as i64 } else { rng.random_range(0..classes as i64) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    labels
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, e: usize, classes: usize) -> Result<EmbeddingBatch> {
    let rows = (0..n).map(|_| (0..e).map(|_| gaussian(rng)).collect()).collect();
    EmbeddingBatch::normalize(rows, random_labels(rng, n, classes))
}

fn corrupt(grad: &mut [f64], on: bool) {
    if on {
        grad.iter_mut().for_each(|g| *g *= 1.01);
    }
}

/// Draws LANML instances whose arguments stay away from the hinge kink.
fn lanml_instance(rng: &mut ChaCha8Rng) -> Result<(LabeledDataset, DMatrix<f64>, LanmlConfig)> {
    loop {
        let classes = 2 + rng.random_range(0..2);
        let data = random_dataset(rng, 12, 3, classes)?;
        let m = random_psd(rng, 3);
        let g1 = rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let loss = if rng.random_bool(0.5) { LossKind::Logistic } else { LossKind::Hinge { margin: 1.0 } };
        let cfg = LanmlConfig {
            gamma1: g1,
            gamma2: rng.random_range(0.5..3.0),
            reg_weight: rng.random_range(0.0..1.0),
            loss,
            similars_per_query: 3,
            ..LanmlConfig::default()
        };
        let pairs = build_pair_sets(&data, cfg.similars_per_query, PairMode::KnnSimilars)?;
        let args = lanml_arguments(&MetricMatrix::new(m.clone())?, &data, &pairs, &cfg)?;
        let clear = loss.kink().is_none_or(|k| args.iter().flatten().all(|u| (u - k).abs() > 1e-3));
        if clear {
            return Ok((data, m, cfg));
        }
    }
}

fn check_lanml(rng: &mut ChaCha8Rng, bad: bool) -> Result<f64> {
    let (data, m, cfg) = lanml_instance(rng)?;
    let pairs = build_pair_sets(&data, cfg.similars_per_query, PairMode::KnnSimilars)?;
    let d = m.nrows();
    let f = |x: &[f64]| lanml_objective_raw(&DMatrix::from_row_slice(d, d, x), &data, &pairs, &cfg, Exec::Sequential).map(|o| o.value);
    let x: Vec<f64> = m.transpose().iter().copied().collect();
    let numeric = central_differences(&x, f)?;
    let mut analytic: Vec<f64> = lanml_objective_raw(&m, &data, &pairs, &cfg, Exec::Sequential)?.grad.transpose().iter().copied().collect();
    corrupt(&mut analytic, bad);
    Ok(relative_error(&analytic, &numeric))
}

fn check_pnca(rng: &mut ChaCha8Rng, bad: bool) -> Result<f64> {
    let data = random_dataset(rng, 12, 3, 3)?;
    let m = random_psd(rng, 3);
    let alpha = rng.random_range(0.5..3.0);
    let pairs = build_pair_sets(&data, 1, PairMode::AllSimilars)?;
    let d = 3;
    let f = |x: &[f64]| pnca_objective_raw(&DMatrix::from_row_slice(d, d, x), &data, &pairs, alpha, Exec::Sequential).map(|o| o.value);
    let x: Vec<f64> = m.transpose().iter().copied().collect();
    let numeric = central_differences(&x, f)?;
    let mut analytic: Vec<f64> = pnca_objective_raw(&m, &data, &pairs, alpha, Exec::Sequential)?.grad.transpose().iter().copied().collect();
    corrupt(&mut analytic, bad);
    Ok(relative_error(&analytic, &numeric))
}

fn batch_fd<F>(batch: &EmbeddingBatch, loss: F, bad: bool) -> Result<f64>
where
    F: Fn(&EmbeddingBatch) -> Result<LossReport>,
{
    let (n, e) = (batch.len(), batch.dim());
    let labels = batch.labels().to_vec();
    let rebuild = |x: &[f64]| -> Result<EmbeddingBatch> {
        let rows = x.chunks_exact(e).map(<[f64]>::to_vec).collect();
        if batch.is_normalized() {
            EmbeddingBatch::assume_normalized(rows, labels.clone())
        } else {
            EmbeddingBatch::new(rows, labels.clone())
        }
    };
    debug_assert_eq!(batch.vectors().len(), n * e);
    let numeric = central_differences(batch.vectors(), |x| loss(&rebuild(x)?).map(|r| r.loss))?;
    let mut analytic = loss(batch)?.grad;
    corrupt(&mut analytic, bad);
    Ok(relative_error(&analytic, &numeric))
}

fn check_danml(rng: &mut ChaCha8Rng, bad: bool) -> Result<f64> {
    let batch = random_batch(rng, 10, 4, 3)?;
    let similarity = if rng.random_bool(0.5) { Similarity::NegCosine } else { Similarity::SqEuclidean };
    let loss = match rng.random_range(0..2) {
        0 => LossKind::Logistic,
        _ => LossKind::Identity,
    };
    let lambda1 = rng.random_range(-0.5..1.0);
    let cfg = DanmlConfig {
        gamma1: -rng.random_range(0.5..5.0),
        gamma2: rng.random_range(0.5..10.0),
        lambda1,
        lambda2: lambda1 + rng.random_range(0.0..0.5),
        loss,
        similarity,
    };
    batch_fd(&batch, |b| danml_loss(b, &cfg), bad)
}

fn check_ms(rng: &mut ChaCha8Rng, bad: bool) -> Result<f64> {
    let batch = random_batch(rng, 10, 4, 3)?;
    let (alpha, beta, m) = (rng.random_range(1.0..3.0), rng.random_range(5.0..50.0), rng.random_range(-0.8..0.0));
    batch_fd(&batch, |b| ms_loss(b, alpha, beta, m), bad)
}

fn check_lifted(rng: &mut ChaCha8Rng, bad: bool) -> Result<f64> {
    let batch = random_batch(rng, 10, 4, 3)?;
    // a large margin keeps every hinge active
    let params = if rng.random_bool(0.3) {
        LiftedParams::original(10.0)
    } else {
        LiftedParams {
            gamma1: rng.random_range(0.5..5.0),
            gamma2: rng.random_range(0.5..5.0),
            lambda1: rng.random_range(0.0..1.0),
            lambda2: rng.random_range(-1.0..0.0),
            margin: 10.0,
            mode: LiftedMode::Improved,
        }
    };
    batch_fd(&batch, |b| lifted_improved_loss(b, &params), bad)
}

fn check_npairs(rng: &mut ChaCha8Rng, bad: bool) -> Result<f64> {
    let n = 4;
    let rows: Vec<Vec<f64>> = (0..2 * n).map(|_| (0..4).map(|_| gaussian(rng)).collect()).collect();
    let labels = (0..2 * n).map(|i| (i / 2) as i64).collect();
    let batch = EmbeddingBatch::new(rows, labels)?;
    let (gamma, lambda) = (rng.random_range(0.5..3.0), rng.random_range(0.0..0.5));
    batch_fd(&batch, |b| npairs_improved_loss(b, gamma, lambda), bad)
}

fn check_prop3(rng: &mut ChaCha8Rng) -> Result<f64> {
    let data = random_dataset(rng, 12, 3, 2)?;
    let m = MetricMatrix::new(random_psd(rng, 3))?;
    let cfg = LanmlConfig { gamma1: -LIMIT_GAMMA, gamma2: LIMIT_GAMMA, loss: LossKind::Identity, similars_per_query: 4, ..LanmlConfig::default() };
    let pairs = build_pair_sets(&data, cfg.similars_per_query, PairMode::KnnSimilars)?;
    let args = lanml_arguments(&m, &data, &pairs, &cfg)?;
    let dist = |i: usize, j: usize| {
        let diff = nalgebra::DVector::from_iterator(3, data.row(i).iter().zip(data.row(j)).map(|(a, b)| a - b));
        (diff.transpose() * m.matrix() * &diff)[(0, 0)]
    };
    let mut worst = 0.0f64;
    for (i, u) in args.iter().enumerate() {
        let Some(u) = u else { continue };
        let hi = pairs.similars[i].iter().map(|&j| dist(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let lo = pairs.dissimilars[i].iter().map(|&l| dist(i, l)).fold(f64::INFINITY, f64::min);
        worst = worst.max((u - (hi - lo)).abs());
    }
    Ok(worst)
}

fn check_prop4(rng: &mut ChaCha8Rng) -> Result<f64> {
    let data = random_dataset(rng, 15, 3, 3)?;
    let m = MetricMatrix::new(random_psd(rng, 3))?;
    let pairs = build_pair_sets(&data, 1, PairMode::AllSimilars)?;
    let summands = pnca_summands(&m, &data, &pairs, 1.0)?;
    let mut worst = 0.0f64;
    for (i, s) in summands.iter().enumerate() {
        let w = |j: usize| {
            let diff = nalgebra::DVector::from_iterator(3, data.row(i).iter().zip(data.row(j)).map(|(a, b)| a - b));
            (-(diff.transpose() * m.matrix() * &diff)[(0, 0)]).exp()
        };
        let num: f64 = (0..data.len()).filter(|&j| j != i && data.label(j) == data.label(i)).map(w).sum();
        let den: f64 = (0..data.len()).filter(|&j| j != i).map(w).sum();
        worst = worst.max((s - num / den).abs());
    }
    Ok(worst)
}

fn check_prop6(rng: &mut ChaCha8Rng) -> Result<f64> {
    let batch = random_batch(rng, 10, 4, 3)?;
    let cfg = DanmlConfig {
        gamma1: -LIMIT_GAMMA,
        gamma2: LIMIT_GAMMA,
        lambda1: -1.0,
        lambda2: 10.0,
        loss: LossKind::Identity,
        similarity: Similarity::SqEuclidean,
    };
    let hard_sq = hardest_triplet_gaps(&batch, Similarity::SqEuclidean);
    let hard_cos = hardest_triplet_gaps(&batch, Similarity::NegCosine);
    let danml = danml_arguments(&batch, &cfg)?;
    let lifted = lifted_arguments(
        &batch,
        &LiftedParams { gamma1: LIMIT_GAMMA, gamma2: LIMIT_GAMMA, lambda1: 2.0, lambda2: -2.0, margin: 0.0, mode: LiftedMode::Improved },
    )?;
    let mut worst = 0.0f64;
    for i in 0..batch.len() {
        if let (Some(a), Some(h)) = (danml[i], hard_sq[i]) {
            worst = worst.max((a - h).abs());
        }
        if let (Some(a), Some(h)) = (lifted[i], hard_cos[i]) {
            worst = worst.max((a - h).abs());
        }
    }
    Ok(worst)
}

/// Returns `(gradient mismatch, value gap)` for one batch.
pub fn prop7_gap(batch: &EmbeddingBatch, alpha: f64, beta: f64, margin: f64) -> Result<(f64, f64)> {
    let cfg = DanmlConfig {
        gamma1: -alpha,
        gamma2: beta,
        lambda1: margin,
        lambda2: margin,
        loss: LossKind::Identity,
        similarity: Similarity::NegCosine,
    };
    let d = danml_loss(batch, &cfg)?;
    let m = ms_loss(batch, alpha, beta, margin)?;
    let mismatch = d.grad.iter().zip(&m.grad).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((mismatch, m.loss - d.loss))
}

fn check_prop7(rng: &mut ChaCha8Rng, bad: bool) -> Result<f64> {
    let labels = random_labels(rng, 10, 3);
    let make = |rng: &mut ChaCha8Rng| -> Result<EmbeddingBatch> {
        let rows = (0..10).map(|_| (0..4).map(|_| gaussian(rng)).collect()).collect();
        EmbeddingBatch::normalize(rows, labels.clone())
    };
    let (a, b) = (make(rng)?, make(rng)?);
    let (alpha, beta, m) = (rng.random_range(1.0..3.0), rng.random_range(5.0..50.0), rng.random_range(-0.8..0.0));
    let (ga, va) = prop7_gap(&a, alpha, beta, m)?;
    let (gb, vb) = prop7_gap(&b, alpha, beta, m)?;
    let (ga, gb) = if bad { (ga + 1.0, gb) } else { (ga, gb) };
    let expected: f64 = (0..labels.len())
        .map(|i| {
            let p = labels.iter().enumerate().filter(|&(j, &y)| j != i && y == labels[i]).count();
            let n = labels.iter().filter(|&&y| y != labels[i]).count();
            ((p + 1) as f64).ln() / alpha + ((n + 1) as f64).ln() / beta
        })
        .sum();
    let gap = ((va - vb).abs()).max((va - expected).abs()) / (1.0 + va.abs());
    Ok(ga.max(gb).max(gap))
}

fn tolerance(name: &str) -> f64 {
    match name {
        "prop3" | "prop6" => LIMIT_TOL,
        "prop4" | "prop7" => IDENTITY_TOL,
        _ => FD_REL_TOL,
    }
}

pub fn run_check(name: &str, seed: u64, instances: usize, corrupt_gradient: bool) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let err = match name {
            "lanml_objective" => check_lanml(&mut rng, corrupt_gradient)?,
            "pnca_objective" => check_pnca(&mut rng, corrupt_gradient)?,
            "danml_loss" => check_danml(&mut rng, corrupt_gradient)?,
            "ms_loss" => check_ms(&mut rng, corrupt_gradient)?,
            "lifted_improved_loss" => check_lifted(&mut rng, corrupt_gradient)?,
            "npairs_improved_loss" => check_npairs(&mut rng, corrupt_gradient)?,
            "prop3" => check_prop3(&mut rng)?,
            "prop4" => check_prop4(&mut rng)?,
            "prop6" => check_prop6(&mut rng)?,
            "prop7" => check_prop7(&mut rng, corrupt_gradient)?,
            other => return invalid(format!("unknown check '{other}'")),
        };
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    let tol = tolerance(name);
    Ok(CheckResult { name: name.to_string(), instances, worst, tolerance: tol, passed: worst <= tol })
}

pub fn run_checks(opts: &CheckOptions) -> Result<Vec<CheckResult>> {
    let names: Vec<&str> = match &opts.only {
        Some(list) => {
            if let Some(bad) = list.iter().find(|n| !CHECK_NAMES.contains(&n.as_str())) {
                return invalid(format!("unknown check '{bad}'; known: {}", CHECK_NAMES.join(", ")));
            }
            CHECK_NAMES.iter().copied().filter(|n| list.iter().any(|l| l == n)).collect()
        }
        None => CHECK_NAMES.to_vec(),
    };
    if let Some(c) = &opts.corrupt {
        if !CHECK_NAMES.contains(&c.as_str()) {
            return invalid(format!("unknown check '{c}'"));
        }
    }
    let instances = if opts.instances == 0 { 20 } else { opts.instances };
    names
        .into_iter()
        .map(|n| run_check(n, opts.seed, instances, opts.corrupt.as_deref() == Some(n)))
        .collect()
}

pub fn format_table(results: &[CheckResult]) -> String {
    let mut s = format!("{:<22} {:>9} {:>12} {:>10}  status\n", "check", "instances", "worst", "tolerance");
    for r in results {
        s += &format!(
            "{:<22} {:>9} {:>12.3e} {:>10.0e}  {}\n",
            r.name,
            r.instances,
            r.worst,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    s
}
