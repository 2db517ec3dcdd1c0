//! Batch losses on embedding sets, each with an analytic gradient with
//! respect to the embedding rows.
//!
//! Conventions, per loss:
//!
//! | loss | pair quantity |
//! |------|---------------|
//! | [`danml_loss`] | configurable: `−fᵢ·fⱼ` or `‖fᵢ − fⱼ‖²` |
//! | [`ms_loss`] | `Dᵢⱼ = −fᵢ·fⱼ` (negative cosine) |
//! | [`lifted_improved_loss`] | `Sᵢⱼ = fᵢ·fⱼ` (cosine) |
//! | [`npairs_improved_loss`] | `fᵢ·fⱼ⁺` |
//! | [`triplet_loss`] | `‖fᵢ − fⱼ‖²` |
//!
//! The cosine-based losses require a normalized batch, where the dot product
//! is the cosine. Gradients treat the dot product as the pair function; the
//! caller re-projects onto the sphere after a step.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::logexp::{log_exp_mean_raw, log_exp_mean_weights, GAMMA_EPS};
use crate::metric::LossKind;
use crate::pairs::PairSets;
use crate::par::{self, Exec};

pub const UNIT_NORM_TOL: f64 = 1e-6;

/// `n` embeddings of dimension `e`, stored row-major, with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    vectors: Vec<f64>,
    n: usize,
    e: usize,
    labels: Vec<i64>,
    normalized: bool,
}

impl EmbeddingBatch {
    fn build(rows: Vec<Vec<f64>>, labels: Vec<i64>, normalized: bool) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return invalid("embedding batch needs at least two rows");
        }
        if labels.len() != n {
            return invalid("one label per embedding row is required");
        }
        let e = rows[0].len();
        if e == 0 || rows.iter().any(|r| r.len() != e) {
            return invalid("embedding rows must share a positive dimension");
        }
        let vectors: Vec<f64> = rows.into_iter().flatten().collect();
        if vectors.iter().any(|v| !v.is_finite()) {
            return invalid("embedding has non-finite entries");
        }
        Ok(Self { vectors, n, e, labels, normalized })
    }

    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        Self::build(rows, labels, false)
    }

    /// Checks that every row has unit norm within [`UNIT_NORM_TOL`].
    pub fn normalized(rows: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        let b = Self::build(rows, labels, true)?;
        for i in 0..b.n {
            let norm = b.norm(i);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return invalid(format!("row {i} has norm {norm}, expected 1"));
            }
        }
        Ok(b)
    }

    /// Rescales every row to unit norm.
    pub fn normalize(rows: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        let mut b = Self::build(rows, labels, true)?;
        b.renormalize()?;
        Ok(b)
    }

    /// Marks the batch normalized without checking the row norms. For
    /// finite-difference probes that perturb a normalized batch.
    pub fn assume_normalized(rows: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        Self::build(rows, labels, true)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.e
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.e..(i + 1) * self.e]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.vectors.chunks_exact(self.e).map(<[f64]>::to_vec).collect()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    fn norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| (a - b).powi(2)).sum()
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        self.dot(i, j) / (self.norm(i) * self.norm(j)).max(f64::MIN_POSITIVE)
    }

    /// Subtracts `step · grad` from the rows.
    pub fn apply_step(&mut self, grad: &[f64], step: f64) -> Result<()> {
        if grad.len() != self.vectors.len() {
            return invalid("gradient shape does not match batch");
        }
        for (v, g) in self.vectors.iter_mut().zip(grad) {
            *v -= step * g;
        }
        Ok(())
    }

    pub fn renormalize(&mut self) -> Result<()> {
        for i in 0..self.n {
            let norm = self.norm(i);
            if !(norm > 0.0) {
                return Err(Error::Numeric(format!("row {i} has zero norm")));
            }
            self.vectors[i * self.e..(i + 1) * self.e].iter_mut().for_each(|v| *v /= norm);
        }
        self.normalized = true;
        Ok(())
    }

    fn same_class(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| j != i && self.labels[j] == self.labels[i]).collect()
    }

    fn other_class(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.labels[j] != self.labels[i]).collect()
    }

    /// Every in-batch positive and negative for every anchor.
    pub fn all_pairs(&self) -> PairSets {
        PairSets {
            similars: (0..self.n).map(|i| self.same_class(i)).collect(),
            dissimilars: (0..self.n).map(|i| self.other_class(i)).collect(),
            truncated: false,
        }
    }

    fn require_normalized(&self, what: &str) -> Result<()> {
        if !self.normalized {
            return invalid(format!("{what} uses cosine similarity and needs a normalized batch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// `−fᵢ·fⱼ`, the negative cosine on a normalized batch.
    NegCosine,
    /// `‖fᵢ − fⱼ‖²`; monotone in the negative cosine on the sphere.
    #[default]
    SqEuclidean,
}

/// Pair function a loss differentiates through.
#[derive(Debug, Clone, Copy)]
enum PairFn {
    Dot,
    NegDot,
    SqEuclidean,
}

impl PairFn {
    fn eval(self, b: &EmbeddingBatch, i: usize, j: usize) -> f64 {
        match self {
            PairFn::Dot => b.dot(i, j),
            PairFn::NegDot => -b.dot(i, j),
            PairFn::SqEuclidean => b.sq_dist(i, j),
        }
    }
}

impl From<Similarity> for PairFn {
    fn from(s: Similarity) -> Self {
        match s {
            Similarity::NegCosine => PairFn::NegDot,
            Similarity::SqEuclidean => PairFn::SqEuclidean,
        }
    }
}

/// One anchor's contribution: value plus `∂loss/∂pair(a, b)` coefficients.
#[derive(Default)]
struct AnchorTerm {
    value: f64,
    coeffs: Vec<(usize, usize, f64)>,
    skipped: bool,
}

fn accumulate(b: &EmbeddingBatch, f: PairFn, terms: &[AnchorTerm]) -> Vec<f64> {
    let e = b.e;
    let mut g = vec![0.0; b.vectors.len()];
    for t in terms {
        for &(i, j, c) in &t.coeffs {
            if c == 0.0 {
                continue;
            }
            for k in 0..e {
                let (fi, fj) = (b.vectors[i * e + k], b.vectors[j * e + k]);
                let (gi, gj) = match f {
                    PairFn::Dot => (c * fj, c * fi),
                    PairFn::NegDot => (-c * fj, -c * fi),
                    PairFn::SqEuclidean => (2.0 * c * (fi - fj), -2.0 * c * (fi - fj)),
                };
                g[i * e + k] += gi;
                g[j * e + k] += gj;
            }
        }
    }
    g
}

/// Loss value, gradient (row-major `n × e`) and bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub loss: f64,
    #[serde(skip)]
    pub grad: Vec<f64>,
    pub skipped_anchors: usize,
    pub active_pairs: usize,
    pub grad_norm: f64,
}

fn report(b: &EmbeddingBatch, f: PairFn, terms: Vec<AnchorTerm>, scale: f64) -> Result<LossReport> {
    let loss = scale * terms.iter().map(|t| t.value).sum::<f64>();
    if !loss.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }
    let mut grad = accumulate(b, f, &terms);
    grad.iter_mut().for_each(|g| *g *= scale);
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok(LossReport {
        loss,
        grad,
        skipped_anchors: terms.iter().filter(|t| t.skipped).count(),
        active_pairs: terms.iter().map(|t| t.coeffs.iter().filter(|c| c.2 != 0.0).count()).sum(),
        grad_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DanmlConfig {
    /// Similar-side smoothing; negative selects the farthest positives.
    pub gamma1: f64,
    /// Dissimilar-side smoothing; positive selects the nearest negatives.
    pub gamma2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub loss: LossKind,
    pub similarity: Similarity,
}

impl DanmlConfig {
    /// Maps tuning magnitudes (`γ₁ ∈ {1, 2, 3}`, `γ₂ ∈ {25, 30, 35}`,
    /// `λ₂ = λ₁ + σ`) onto the signed convention used by [`danml_loss`].
    pub fn from_tuning_grid(gamma1: f64, gamma2: f64, lambda1: f64, sigma: f64) -> Self {
        let cfg = Self {
            gamma1: -gamma1.abs(),
            gamma2: gamma2.abs(),
            lambda1,
            lambda2: lambda1 + sigma,
            loss: LossKind::Logistic,
            similarity: Similarity::NegCosine,
        };
        log::info!(
            "DANML tuning values (gamma1={gamma1}, gamma2={gamma2}) mapped to signed (gamma1={}, gamma2={})",
            cfg.gamma1,
            cfg.gamma2
        );
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 * self.gamma2 < 0.0) || !self.gamma1.is_finite() || !self.gamma2.is_finite() {
            return invalid(format!(
                "gamma1 and gamma2 must be finite with opposite signs, got {} and {}",
                self.gamma1, self.gamma2
            ));
        }
        if !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return invalid("lambda1 and lambda2 must be finite");
        }
        Ok(())
    }
}

impl Default for DanmlConfig {
    fn default() -> Self {
        Self::from_tuning_grid(2.0, 30.0, 0.5, 0.02)
    }
}

fn danml_anchor(b: &EmbeddingBatch, cfg: &DanmlConfig, i: usize, pos: &[usize], neg: &[usize]) -> (AnchorTerm, Option<f64>) {
    if pos.is_empty() || neg.is_empty() {
        return (AnchorTerm { skipped: true, ..Default::default() }, None);
    }
    let f = PairFn::from(cfg.similarity);
    let mut sp: Vec<f64> = Vec::with_capacity(pos.len() + 1);
    sp.push(cfg.lambda1);
    sp.extend(pos.iter().map(|&j| f.eval(b, i, j)));
    let mut sn: Vec<f64> = Vec::with_capacity(neg.len() + 1);
    sn.push(cfg.lambda2);
    sn.extend(neg.iter().map(|&l| f.eval(b, i, l)));
    let (mut wp, mut wn) = (Vec::new(), Vec::new());
    let u = log_exp_mean_weights(&sp, cfg.gamma1, &mut wp) - log_exp_mean_weights(&sn, cfg.gamma2, &mut wn);
    let slope = cfg.loss.derivative(u);
    let mut coeffs = Vec::with_capacity(pos.len() + neg.len());
    coeffs.extend(pos.iter().zip(&wp[1..]).map(|(&j, &w)| (i, j, slope * w)));
    coeffs.extend(neg.iter().zip(&wn[1..]).map(|(&l, &w)| (i, l, -slope * w)));
    (AnchorTerm { value: cfg.loss.value(u), coeffs, skipped: false }, Some(u))
}

fn danml_check(b: &EmbeddingBatch, cfg: &DanmlConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.similarity == Similarity::NegCosine {
        b.require_normalized("danml_loss with neg_cosine")?;
    }
    Ok(())
}

/// DANML over all in-batch positives and negatives.
pub fn danml_loss(batch: &EmbeddingBatch, cfg: &DanmlConfig) -> Result<LossReport> {
    danml_loss_with_pairs(batch, cfg, &batch.all_pairs())
}

/// DANML over explicit (e.g. mined) per-anchor pair sets.
pub fn danml_loss_with_pairs(batch: &EmbeddingBatch, cfg: &DanmlConfig, pairs: &PairSets) -> Result<LossReport> {
    danml_check(batch, cfg)?;
    if pairs.len() != batch.len() {
        return invalid("pair sets do not match batch");
    }
    let terms = par::map_indexed(batch.len(), Exec::default(), |i| {
        danml_anchor(batch, cfg, i, &pairs.similars[i], &pairs.dissimilars[i]).0
    });
    report(batch, cfg.similarity.into(), terms, 1.0)
}

/// Per-anchor DANML arguments `b(S ∪ {λ₁}; γ₁) − b(D ∪ {λ₂}; γ₂)`, before
/// the outer loss. `None` for skipped anchors.
pub fn danml_arguments(batch: &EmbeddingBatch, cfg: &DanmlConfig) -> Result<Vec<Option<f64>>> {
    danml_check(batch, cfg)?;
    Ok((0..batch.len())
        .map(|i| danml_anchor(batch, cfg, i, &batch.same_class(i), &batch.other_class(i)).1)
        .collect())
}

/// `log(1 + Σ eˣ)` with its softmax weights over the `x` entries.
fn log1p_sum_exp(xs: &[f64]) -> (f64, Vec<f64>) {
    let top = xs.iter().copied().fold(0.0f64, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - top).exp()).collect();
    let z = (-top).exp() + exps.iter().sum::<f64>();
    (top + z.ln(), exps.into_iter().map(|v| v / z).collect())
}

/// Multi-similarity loss with `Dᵢⱼ = −fᵢ·fⱼ`:
/// `Σᵢ (1/α) log(1 + Σ_P e^{α(D−m)}) + (1/β) log(1 + Σ_N e^{β(m−D)})`.
pub fn ms_loss(batch: &EmbeddingBatch, alpha: f64, beta: f64, margin: f64) -> Result<LossReport> {
    if !(alpha > 0.0 && beta > 0.0) || !margin.is_finite() {
        return invalid("ms_loss needs alpha > 0, beta > 0 and a finite margin");
    }
    batch.require_normalized("ms_loss")?;
    let f = PairFn::NegDot;
    let terms = par::map_indexed(batch.len(), Exec::default(), |i| {
        let (pos, neg) = (batch.same_class(i), batch.other_class(i));
        let xp: Vec<f64> = pos.iter().map(|&j| alpha * (f.eval(batch, i, j) - margin)).collect();
        let xn: Vec<f64> = neg.iter().map(|&k| beta * (margin - f.eval(batch, i, k))).collect();
        let (lp, wp) = log1p_sum_exp(&xp);
        let (ln, wn) = log1p_sum_exp(&xn);
        let mut coeffs: Vec<(usize, usize, f64)> = pos.iter().zip(&wp).map(|(&j, &w)| (i, j, w)).collect();
        coeffs.extend(neg.iter().zip(&wn).map(|(&k, &w)| (i, k, -w)));
        AnchorTerm { value: lp / alpha + ln / beta, coeffs, skipped: false }
    });
    report(batch, f, terms, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftedMode {
    /// `γ₁ = γ₂ = 1`, no λ anchors.
    Original,
    Improved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub margin: f64,
    pub mode: LiftedMode,
}

impl LiftedParams {
    pub fn original(margin: f64) -> Self {
        Self { gamma1: 1.0, gamma2: 1.0, lambda1: 0.0, lambda2: 0.0, margin, mode: LiftedMode::Original }
    }
}

fn lifted_anchor(b: &EmbeddingBatch, p: &LiftedParams, i: usize) -> (AnchorTerm, Option<f64>) {
    let (pos, neg) = (b.same_class(i), b.other_class(i));
    if pos.is_empty() || neg.is_empty() {
        return (AnchorTerm { skipped: true, ..Default::default() }, None);
    }
    let (g1, g2) = match p.mode {
        LiftedMode::Original => (1.0, 1.0),
        LiftedMode::Improved => (p.gamma1, p.gamma2),
    };
    let offset = usize::from(p.mode == LiftedMode::Improved);
    let mut sp = Vec::with_capacity(pos.len() + 1);
    let mut sn = Vec::with_capacity(neg.len() + 1);
    if offset == 1 {
        sp.push(p.lambda1);
        sn.push(p.lambda2);
    }
    sp.extend(pos.iter().map(|&j| b.dot(i, j)));
    sn.extend(neg.iter().map(|&k| b.dot(i, k)));
    let (mut wp, mut wn) = (Vec::new(), Vec::new());
    // (1/γ) log Σ e^{−γ a} = (1/γ) log n − b(a; γ)
    let t1 = (sp.len() as f64).ln() / g1 - log_exp_mean_weights(&sp, g1, &mut wp);
    let t2 = (sn.len() as f64).ln() / g2 + log_exp_mean_weights(&sn, -g2, &mut wn);
    let arg = t1 + t2 + p.margin;
    let active = arg > 0.0;
    let mut coeffs = Vec::new();
    if active {
        coeffs.extend(pos.iter().zip(&wp[offset..]).map(|(&j, &w)| (i, j, -w)));
        coeffs.extend(neg.iter().zip(&wn[offset..]).map(|(&k, &w)| (i, k, w)));
    }
    (AnchorTerm { value: arg.max(0.0), coeffs, skipped: false }, Some(t1 + t2))
}

fn lifted_check(batch: &EmbeddingBatch, p: &LiftedParams) -> Result<()> {
    batch.require_normalized("lifted_improved_loss")?;
    if p.mode == LiftedMode::Improved && (p.gamma1.abs() < GAMMA_EPS || p.gamma2.abs() < GAMMA_EPS) {
        return invalid("lifted gammas must be non-zero");
    }
    if !p.margin.is_finite() {
        return invalid("margin must be finite");
    }
    Ok(())
}

/// Lifted-structure hinge loss with soft extrema over cosine similarities.
pub fn lifted_improved_loss(batch: &EmbeddingBatch, params: &LiftedParams) -> Result<LossReport> {
    lifted_check(batch, params)?;
    let terms = par::map_indexed(batch.len(), Exec::default(), |i| lifted_anchor(batch, params, i).0);
    report(batch, PairFn::Dot, terms, 1.0)
}

/// Per-anchor soft violation `t₁ + t₂` (before margin and hinge).
pub fn lifted_arguments(batch: &EmbeddingBatch, params: &LiftedParams) -> Result<Vec<Option<f64>>> {
    lifted_check(batch, params)?;
    Ok((0..batch.len()).map(|i| lifted_anchor(batch, params, i).1).collect())
}

/// `(anchor, positive)` indices of an N-pair batch: exactly two rows per
/// class, the first occurrence acting as anchor.
pub fn npair_structure(batch: &EmbeddingBatch) -> Result<Vec<(usize, usize)>> {
    let mut order: Vec<i64> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, &y) in batch.labels.iter().enumerate() {
        match order.iter().position(|&c| c == y) {
            Some(k) => members[k].push(i),
            None => {
                order.push(y);
                members.push(vec![i]);
            }
        }
    }
    if members.len() < 2 || members.iter().any(|m| m.len() != 2) {
        return invalid("N-pair batch must hold exactly two rows for each of at least two classes");
    }
    Ok(members.into_iter().map(|m| (m[0], m[1])).collect())
}

/// `(1/(Nγ)) Σᵢ log(1 + Σ_{j≠i} e^{γ(−λ + fᵢ·fⱼ⁺ − fᵢ·fᵢ⁺)})`.
pub fn npairs_improved_loss(batch: &EmbeddingBatch, gamma: f64, lambda: f64) -> Result<LossReport> {
    if !(gamma.abs() >= GAMMA_EPS) || !gamma.is_finite() || !lambda.is_finite() {
        return invalid("npairs needs a finite non-zero gamma and finite lambda");
    }
    let pairs = npair_structure(batch)?;
    let n = pairs.len();
    let terms = par::map_indexed(n, Exec::default(), |a| {
        let (i, ip) = pairs[a];
        let own = batch.dot(i, ip);
        let others: Vec<usize> = (0..n).filter(|&b| b != a).map(|b| pairs[b].1).collect();
        let xs: Vec<f64> = others.iter().map(|&jp| gamma * (-lambda + batch.dot(i, jp) - own)).collect();
        let (value, w) = log1p_sum_exp(&xs);
        // d/dx of log(1+Σeˣ) is w; x is linear in the dots with slope ±γ, and
        // the outer 1/γ cancels it.
        let mut coeffs: Vec<(usize, usize, f64)> = others.iter().zip(&w).map(|(&jp, &wj)| (i, jp, wj)).collect();
        coeffs.push((i, ip, -w.iter().sum::<f64>()));
        AnchorTerm { value: value / gamma, coeffs, skipped: false }
    });
    report(batch, PairFn::Dot, terms, 1.0 / n as f64)
}

/// Per-anchor log-mean-exp of the N similarities `{fᵢ·fⱼ⁺}`: the soft
/// neighborhood radius the N-pair loss compares `fᵢ·fᵢ⁺` against.
pub fn npairs_neighborhood_radii(batch: &EmbeddingBatch) -> Result<Vec<f64>> {
    let pairs = npair_structure(batch)?;
    Ok(pairs
        .iter()
        .map(|&(i, _)| {
            let s: Vec<f64> = pairs.iter().map(|&(_, jp)| batch.dot(i, jp)).collect();
            log_exp_mean_raw(&s, -1.0)
        })
        .collect())
}

/// Mean hinge `[d(i,j) − d(i,l) + margin]₊` over the active in-batch
/// triplets, with `d` the squared Euclidean distance.
pub fn triplet_loss(batch: &EmbeddingBatch, margin: f64) -> Result<LossReport> {
    if !margin.is_finite() {
        return invalid("margin must be finite");
    }
    let terms = par::map_indexed(batch.len(), Exec::default(), |i| {
        let (pos, neg) = (batch.same_class(i), batch.other_class(i));
        let mut t = AnchorTerm { skipped: pos.is_empty() || neg.is_empty(), ..Default::default() };
        for &j in &pos {
            let dp = batch.sq_dist(i, j);
            for &l in &neg {
                let h = dp - batch.sq_dist(i, l) + margin;
                if h > 0.0 {
                    t.value += h;
                    t.coeffs.push((i, j, 1.0));
                    t.coeffs.push((i, l, -1.0));
                }
            }
        }
        t
    });
    let active: usize = terms.iter().map(|t| t.coeffs.len() / 2).sum();
    let scale = if active == 0 { 0.0 } else { 1.0 / active as f64 };
    let mut r = report(batch, PairFn::SqEuclidean, terms, scale)?;
    r.active_pairs = active;
    Ok(r)
}

/// Hardest-triplet violation per anchor: `max_pos d − min_neg d`.
pub fn hardest_triplet_gaps(batch: &EmbeddingBatch, similarity: Similarity) -> Vec<Option<f64>> {
    let f = PairFn::from(similarity);
    (0..batch.len())
        .map(|i| {
            let (pos, neg) = (batch.same_class(i), batch.other_class(i));
            if pos.is_empty() || neg.is_empty() {
                return None;
            }
            let hp = pos.iter().map(|&j| f.eval(batch, i, j)).fold(f64::NEG_INFINITY, f64::max);
            let hn = neg.iter().map(|&l| f.eval(batch, i, l)).fold(f64::INFINITY, f64::min);
            Some(hp - hn)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub enabled: bool,
    pub epsilon: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self { enabled: true, epsilon: 0.1 }
    }
}

/// Keeps, per anchor, negatives more similar than the least similar positive
/// minus ε and positives less similar than the most similar negative plus ε
/// (cosine similarity). Anchors without positives get empty sets.
pub fn mine_pairs(batch: &EmbeddingBatch, cfg: &MiningConfig) -> Result<PairSets> {
    if !(cfg.epsilon >= 0.0) {
        return invalid("mining epsilon must be >= 0");
    }
    let all = batch.all_pairs();
    if !cfg.enabled || cfg.epsilon == f64::INFINITY {
        return Ok(all);
    }
    let mut out = PairSets::default();
    for i in 0..batch.len() {
        let (pos, neg) = (&all.similars[i], &all.dissimilars[i]);
        if pos.is_empty() {
            out.similars.push(Vec::new());
            out.dissimilars.push(Vec::new());
            continue;
        }
        let min_pos = pos.iter().map(|&j| batch.cosine(i, j)).fold(f64::INFINITY, f64::min);
        let max_neg = neg.iter().map(|&k| batch.cosine(i, k)).fold(f64::NEG_INFINITY, f64::max);
        out.dissimilars.push(neg.iter().copied().filter(|&k| batch.cosine(i, k) > min_pos - cfg.epsilon).collect());
        out.similars.push(pos.iter().copied().filter(|&j| batch.cosine(i, j) < max_neg + cfg.epsilon).collect());
    }
    Ok(out)
}
