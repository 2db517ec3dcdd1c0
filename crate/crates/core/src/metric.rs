//! Mahalanobis metric learning on the PSD cone.
//!
//! The learner minimizes, over `M ⪰ 0`,
//!
//! ```text
//! Σᵢ ℓ( b(d_M(xᵢ, S_i), γ₁) − b(d_M(xᵢ, D_i), γ₂) ) + λ·Ω(M)
//! ```
//!
//! where `b` is the log-exp mean of the squared distances to the similar and
//! dissimilar sets. With `γ₁ < 0 < γ₂` both smoothed radii are convex in `M`
//! and so is the whole objective. [`pnca_objective`] is the parameterized
//! NCA variant; it reduces to NCA's `p_i` at `α = 1`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::logexp::log_exp_mean_weights;
use crate::pairs::PairSets;
use crate::par::{self, Exec};

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

/// Symmetric positive semidefinite `d × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    m: DMatrix<f64>,
}

impl MetricMatrix {
    /// Validates symmetry (within [`SYMMETRY_TOL`]) and PSD-ness (eigenvalues
    /// ≥ `-PSD_TOL`).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return invalid("metric must be a non-empty square matrix");
        }
        if m.iter().any(|v| !v.is_finite()) {
            return invalid("metric has non-finite entries");
        }
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return invalid(format!("metric is not symmetric (max asymmetry {asym:e})"));
        }
        let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
        if min_eig < -PSD_TOL {
            return invalid(format!("metric is not PSD (min eigenvalue {min_eig:e})"));
        }
        Ok(Self { m })
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d, d) }
    }

    pub fn scaled_identity(d: usize, scale: f64) -> Self {
        Self { m: DMatrix::identity(d, d) * scale }
    }

    /// Nearest PSD matrix in Frobenius norm: symmetrize, then clip negative
    /// eigenvalues to zero.
    pub fn project(m: &DMatrix<f64>) -> Result<Self> {
        let sym = (m + m.transpose()) * 0.5;
        if sym.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite matrix passed to PSD projection".into()));
        }
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numeric("symmetric eigendecomposition failed".into()))?;
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let v = &eig.eigenvectors;
        let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
        // restore exact symmetry lost to rounding
        out = (&out + out.transpose()) * 0.5;
        Ok(Self { m: out })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.m.clone()).eigenvalues.min()
    }

    /// `L` with `M = L Lᵀ`; map samples with `z = Lᵀ x`.
    pub fn factor(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.m.clone());
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&roots)
    }

    /// Projects every row `x` of `data` to `Lᵀ x`.
    pub fn transform(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.dim() != self.dim() {
            return invalid("dimension mismatch between metric and data");
        }
        let l = self.factor();
        let d = self.dim();
        let mut out = Vec::with_capacity(data.len() * d);
        for row in data.rows() {
            for k in 0..d {
                out.push((0..d).map(|a| l[(a, k)] * row[a]).sum());
            }
        }
        data.with_features(d, out)
    }

    pub fn to_json(&self) -> MetricJson {
        let d = self.dim();
        let values = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.m[(i, j)]).collect();
        MetricJson { d, values }
    }

    pub fn from_json(j: &MetricJson) -> Result<Self> {
        if j.values.len() != j.d * j.d {
            return invalid(format!("expected {} values for d = {}", j.d * j.d, j.d));
        }
        Self::new(DMatrix::from_row_slice(j.d, j.d, &j.values))
    }
}

/// On-disk form: `{"d": ..., "values": [row-major]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricJson {
    pub d: usize,
    pub values: Vec<f64>,
}

/// `(x − y)ᵀ M (x − y)`, clamped at zero against rounding.
pub fn mahalanobis_sq(m: &MetricMatrix, x: &[f64], y: &[f64]) -> Result<f64> {
    let d = m.dim();
    if x.len() != d || y.len() != d {
        return invalid(format!("vectors of length {} and {} against a {d}-dim metric", x.len(), y.len()));
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut acc = 0.0;
    for a in 0..d {
        let row: f64 = (0..d).map(|b| m.m[(a, b)] * diff[b]).sum();
        acc += diff[a] * row;
    }
    Ok(acc.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    /// `max(0, margin + u)`.
    Hinge { margin: f64 },
    /// `log(1 + e^u)`.
    Logistic,
    Identity,
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::Hinge { margin: 1.0 }
    }
}

impl LossKind {
    pub fn value(self, u: f64) -> f64 {
        match self {
            LossKind::Hinge { margin } => (margin + u).max(0.0),
            LossKind::Logistic => {
                if u > 0.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                }
            }
            LossKind::Identity => u,
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        match self {
            LossKind::Hinge { margin } => {
                if margin + u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::Logistic => 1.0 / (1.0 + (-u).exp()),
            LossKind::Identity => 1.0,
        }
    }

    /// Location of the non-differentiable point, if any.
    pub fn kink(self) -> Option<f64> {
        match self {
            LossKind::Hinge { margin } => Some(-margin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverControls {
    pub max_iters: usize,
    pub step_size: f64,
    /// Stop once the Frobenius norm of an accepted step falls below this.
    pub grad_tol: f64,
    pub line_search: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self { max_iters: 300, step_size: 1.0, grad_tol: 1e-6, line_search: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanmlConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    pub reg_weight: f64,
    pub loss: LossKind,
    pub similars_per_query: usize,
    pub solver: SolverControls,
}

impl Default for LanmlConfig {
    fn default() -> Self {
        Self {
            gamma1: -1.0,
            gamma2: 1.0,
            reg_weight: 0.5,
            loss: LossKind::default(),
            similars_per_query: 10,
            solver: SolverControls::default(),
        }
    }
}

impl LanmlConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma1.is_finite() {
            return invalid("gamma1 must be finite");
        }
        if !(self.gamma2 > 0.0 && self.gamma2.is_finite()) {
            return invalid(format!("gamma2 must be > 0, got {}", self.gamma2));
        }
        if !(self.reg_weight >= 0.0) {
            return invalid("reg_weight must be >= 0");
        }
        if self.similars_per_query == 0 {
            return invalid("similars_per_query must be positive");
        }
        if let LossKind::Hinge { margin } = self.loss {
            if !margin.is_finite() {
                return invalid("hinge margin must be finite");
            }
        }
        let s = &self.solver;
        if !(s.step_size > 0.0) || !(s.grad_tol >= 0.0) || s.max_iters == 0 {
            return invalid("solver controls must be positive");
        }
        Ok(())
    }

    /// γ₁ < 0 (with γ₂ > 0) makes the problem convex.
    pub fn is_convex(&self) -> bool {
        self.gamma1 < 0.0 && self.gamma2 > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// `S_i` = the k Euclidean-nearest same-class samples.
    KnnSimilars,
    /// `S_i` = every other same-class sample.
    AllSimilars,
}

/// Builds `S_i` and `D_i` for every sample. Requests for more similars than
/// a class can provide are truncated and flagged.
pub fn build_pair_sets(data: &LabeledDataset, similars_per_query: usize, mode: PairMode) -> Result<PairSets> {
    if let Some(c) = data.class_sizes().iter().position(|&s| s < 2) {
        return invalid(format!("class {} has fewer than two samples", c + 1));
    }
    if mode == PairMode::KnnSimilars && similars_per_query == 0 {
        return invalid("similars_per_query must be positive");
    }
    let n = data.len();
    let mut out = PairSets::default();
    for i in 0..n {
        let yi = data.label(i);
        let mut same: Vec<usize> = (0..n).filter(|&j| j != i && data.label(j) == yi).collect();
        if mode == PairMode::KnnSimilars {
            let xi = data.row(i);
            let dist = |j: usize| -> f64 { xi.iter().zip(data.row(j)).map(|(a, b)| (a - b).powi(2)).sum() };
            same.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
            if same.len() < similars_per_query {
                out.truncated = true;
            }
            same.truncate(similars_per_query);
        }
        out.similars.push(same);
        out.dissimilars.push((0..n).filter(|&l| data.label(l) != yi).collect());
    }
    if out.truncated {
        log::warn!("requested {similars_per_query} similars per query; some classes provide fewer");
    }
    Ok(out)
}

/// Loss value and gradient with respect to `M`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub grad: DMatrix<f64>,
}

/// Caches `M xᵢ` so that `d_M(xᵢ, xⱼ) = (xᵢ − xⱼ)·(M xᵢ − M xⱼ)` costs O(d).
/// Works for any square `M`, which keeps finite-difference probes with
/// unsymmetric perturbations consistent with the analytic gradient.
struct DistanceCache<'a> {
    data: &'a LabeledDataset,
    mx: Vec<f64>,
}

impl<'a> DistanceCache<'a> {
    fn new(m: &DMatrix<f64>, data: &'a LabeledDataset) -> Self {
        let d = data.dim();
        let mut mx = Vec::with_capacity(data.len() * d);
        for row in data.rows() {
            for a in 0..d {
                mx.push((0..d).map(|b| m[(a, b)] * row[b]).sum());
            }
        }
        Self { data, mx }
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let d = self.data.dim();
        let (xi, xj) = (self.data.row(i), self.data.row(j));
        let (yi, yj) = (&self.mx[i * d..(i + 1) * d], &self.mx[j * d..(j + 1) * d]);
        (0..d).map(|a| (xi[a] - xj[a]) * (yi[a] - yj[a])).sum()
    }
}

/// Per-query contribution: loss term plus gradient coefficients on pairs.
struct QueryTerm {
    value: f64,
    coeffs: Vec<(usize, f64)>,
}

/// Assembles `Σ cᵢⱼ (xᵢ − xⱼ)(xᵢ − xⱼ)ᵀ` without forming per-pair outer
/// products: with `sᵢ = Σⱼ cᵢⱼ`, `vᵢ = Σⱼ cᵢⱼ xⱼ` and `wⱼ = Σᵢ cᵢⱼ`, the sum
/// equals `Xᵀ diag(s + w) X − Σᵢ (xᵢ vᵢᵀ + vᵢ xᵢᵀ)`.
fn assemble_gradient(data: &LabeledDataset, terms: &[QueryTerm]) -> DMatrix<f64> {
    let (n, d) = (data.len(), data.dim());
    let mut diag = vec![0.0; n];
    let mut v = vec![0.0; n * d];
    for (i, t) in terms.iter().enumerate() {
        for &(j, c) in &t.coeffs {
            diag[i] += c;
            diag[j] += c;
            let xj = data.row(j);
            for a in 0..d {
                v[i * d + a] += c * xj[a];
            }
        }
    }
    let mut g = DMatrix::zeros(d, d);
    for i in 0..n {
        let xi = data.row(i);
        let vi = &v[i * d..(i + 1) * d];
        for a in 0..d {
            for b in 0..d {
                g[(a, b)] += diag[i] * xi[a] * xi[b] - xi[a] * vi[b] - vi[a] * xi[b];
            }
        }
    }
    g
}

fn check_inputs(m: &DMatrix<f64>, data: &LabeledDataset, pairs: &PairSets) -> Result<()> {
    if m.nrows() != data.dim() || m.ncols() != data.dim() {
        return invalid("metric dimension does not match data");
    }
    if pairs.len() != data.len() {
        return invalid("pair sets do not match data");
    }
    Ok(())
}

/// Per-query surrogate arguments `uᵢ = b(S_i; γ₁) − b(D_i; γ₂)`. Queries with
/// an empty similar or dissimilar set yield `None`.
pub fn lanml_arguments(m: &MetricMatrix, data: &LabeledDataset, pairs: &PairSets, cfg: &LanmlConfig) -> Result<Vec<Option<f64>>> {
    check_inputs(m.matrix(), data, pairs)?;
    let cache = DistanceCache::new(m.matrix(), data);
    let mut w = Vec::new();
    Ok((0..data.len())
        .map(|i| {
            let (s, dset) = (&pairs.similars[i], &pairs.dissimilars[i]);
            if s.is_empty() || dset.is_empty() {
                return None;
            }
            let ds: Vec<f64> = s.iter().map(|&j| cache.dist(i, j)).collect();
            let dd: Vec<f64> = dset.iter().map(|&l| cache.dist(i, l)).collect();
            Some(log_exp_mean_weights(&ds, cfg.gamma1, &mut w) - log_exp_mean_weights(&dd, cfg.gamma2, &mut w))
        })
        .collect())
}

pub fn lanml_objective(m: &MetricMatrix, data: &LabeledDataset, pairs: &PairSets, cfg: &LanmlConfig) -> Result<Objective> {
    lanml_objective_raw(m.matrix(), data, pairs, cfg, Exec::default())
}

/// LANML loss and gradient at an arbitrary square `M` (no PSD check), with an
/// explicit execution mode.
pub fn lanml_objective_raw(
    m: &DMatrix<f64>,
    data: &LabeledDataset,
    pairs: &PairSets,
    cfg: &LanmlConfig,
    exec: Exec,
) -> Result<Objective> {
    check_inputs(m, data, pairs)?;
    let cache = DistanceCache::new(m, data);
    let n = data.len();
    let reg_scale = cfg.reg_weight / n as f64;
    let terms: Vec<QueryTerm> = par::map_indexed(n, exec, |i| {
        let (s, dset) = (&pairs.similars[i], &pairs.dissimilars[i]);
        let mut coeffs = Vec::with_capacity(s.len() + dset.len());
        let mut value = 0.0;
        if s.is_empty() {
            return QueryTerm { value, coeffs };
        }
        let ds: Vec<f64> = s.iter().map(|&j| cache.dist(i, j)).collect();
        let reg_c = reg_scale / s.len() as f64;
        value += reg_c * ds.iter().sum::<f64>();
        if dset.is_empty() {
            coeffs.extend(s.iter().map(|&j| (j, reg_c)));
            return QueryTerm { value, coeffs };
        }
        let dd: Vec<f64> = dset.iter().map(|&l| cache.dist(i, l)).collect();
        let (mut ws, mut wd) = (Vec::new(), Vec::new());
        let u = log_exp_mean_weights(&ds, cfg.gamma1, &mut ws) - log_exp_mean_weights(&dd, cfg.gamma2, &mut wd);
        value += cfg.loss.value(u);
        let slope = cfg.loss.derivative(u);
        coeffs.extend(s.iter().zip(&ws).map(|(&j, &w)| (j, slope * w + reg_c)));
        coeffs.extend(dset.iter().zip(&wd).map(|(&l, &w)| (l, -slope * w)));
        QueryTerm { value, coeffs }
    });
    let value: f64 = terms.iter().map(|t| t.value).sum();
    if !value.is_finite() {
        return Err(Error::Numeric("LANML objective is not finite".into()));
    }
    let grad = assemble_gradient(data, &terms);
    Ok(Objective { value, grad })
}

/// Per-query PNCA summands
/// `Aᵢ / (Bᵢ + Aᵢ)` with `Aᵢ = (Σ_S e^{−α d})^{1/α}` and `Bᵢ = Σ_D e^{−d}`.
pub fn pnca_summands(m: &MetricMatrix, data: &LabeledDataset, pairs: &PairSets, alpha: f64) -> Result<Vec<f64>> {
    pnca_parts(m.matrix(), data, pairs, alpha, Exec::Sequential).map(|parts| parts.into_iter().map(|p| p.value).collect())
}

fn pnca_parts(m: &DMatrix<f64>, data: &LabeledDataset, pairs: &PairSets, alpha: f64, exec: Exec) -> Result<Vec<QueryTerm>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("alpha must be > 0, got {alpha}"));
    }
    check_inputs(m, data, pairs)?;
    let cache = DistanceCache::new(m, data);
    Ok(par::map_indexed(data.len(), exec, |i| {
        let (s, dset) = (&pairs.similars[i], &pairs.dissimilars[i]);
        if s.is_empty() {
            return QueryTerm { value: 0.0, coeffs: Vec::new() };
        }
        if dset.is_empty() {
            return QueryTerm { value: 1.0, coeffs: Vec::new() };
        }
        let ds: Vec<f64> = s.iter().map(|&j| cache.dist(i, j)).collect();
        let dd: Vec<f64> = dset.iter().map(|&l| cache.dist(i, l)).collect();
        let (mut ws, mut wd) = (Vec::new(), Vec::new());
        // log Aᵢ = (1/α)·log Σ e^{−α d} = (1/α)·log|S| − b(d_S; α); likewise for Bᵢ.
        let log_a = (s.len() as f64).ln() / alpha - log_exp_mean_weights(&ds, alpha, &mut ws);
        let log_b = (dset.len() as f64).ln() - log_exp_mean_weights(&dd, 1.0, &mut wd);
        let p = 1.0 / (1.0 + (log_b - log_a).exp());
        let dp = p * (1.0 - p);
        let mut coeffs = Vec::with_capacity(s.len() + dset.len());
        coeffs.extend(s.iter().zip(&ws).map(|(&j, &w)| (j, -dp * w)));
        coeffs.extend(dset.iter().zip(&wd).map(|(&l, &w)| (l, dp * w)));
        QueryTerm { value: p, coeffs }
    }))
}

/// PNCA objective (to be maximized) and its gradient.
pub fn pnca_objective(m: &MetricMatrix, data: &LabeledDataset, pairs: &PairSets, alpha: f64) -> Result<Objective> {
    pnca_objective_raw(m.matrix(), data, pairs, alpha, Exec::default())
}

pub fn pnca_objective_raw(m: &DMatrix<f64>, data: &LabeledDataset, pairs: &PairSets, alpha: f64, exec: Exec) -> Result<Objective> {
    let terms = pnca_parts(m, data, pairs, alpha, exec)?;
    let value: f64 = terms.iter().map(|t| t.value).sum();
    if !value.is_finite() {
        return Err(Error::Numeric("PNCA objective is not finite".into()));
    }
    Ok(Objective { value, grad: assemble_gradient(data, &terms) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub metric: MetricMatrix,
    pub loss: f64,
    /// Row 0 is the initial point.
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "loss", "step", "grad_norm"]).map_err(csv_err)?;
    for r in trace {
        w.write_record(&[r.iter.to_string(), r.loss.to_string(), r.step.to_string(), r.grad_norm.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Projected gradient descent `M ← Π_PSD(M − η ∇f)` with Armijo backtracking
/// (η starts at `step_size`, halves, sufficient decrease 1e-4).
pub fn minimize_psd<F>(objective: F, init: &MetricMatrix, controls: &SolverControls) -> Result<SolveOutcome>
where
    F: Fn(&DMatrix<f64>) -> Result<Objective>,
{
    const ARMIJO: f64 = 1e-4;
    const MIN_STEP: f64 = 1e-16;

    let mut m = init.clone();
    let mut cur = objective(m.matrix())?;
    let mut trace = vec![TraceRow { iter: 0, loss: cur.value, step: 0.0, grad_norm: cur.grad.norm() }];
    let mut converged = false;
    for iter in 1..=controls.max_iters {
        let mut eta = controls.step_size;
        let accepted = loop {
            let cand = MetricMatrix::project(&(m.matrix() - &cur.grad * eta))?;
            let step = cand.matrix() - m.matrix();
            let step_norm = step.norm();
            if step_norm <= controls.grad_tol {
                break None;
            }
            let next = objective(cand.matrix())?;
            let decrease = cur.grad.dot(&step);
            if !controls.line_search || next.value <= cur.value + ARMIJO * decrease {
                break Some((cand, next, step_norm));
            }
            eta *= 0.5;
            if eta < MIN_STEP {
                break None;
            }
        };
        match accepted {
            None => {
                converged = true;
                break;
            }
            Some((cand, next, step_norm)) => {
                m = cand;
                cur = next;
                trace.push(TraceRow { iter, loss: cur.value, step: eta, grad_norm: cur.grad.norm() });
                if step_norm <= controls.grad_tol {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(SolveOutcome { metric: m, loss: cur.value, trace, converged })
}

/// Solves LANML from `init`.
pub fn solve_lanml(data: &LabeledDataset, pairs: &PairSets, cfg: &LanmlConfig, init: &MetricMatrix) -> Result<SolveOutcome> {
    solve_lanml_with(data, pairs, cfg, init, Exec::default())
}

pub fn solve_lanml_with(
    data: &LabeledDataset,
    pairs: &PairSets,
    cfg: &LanmlConfig,
    init: &MetricMatrix,
    exec: Exec,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    if init.dim() != data.dim() {
        return invalid("initial metric dimension does not match data");
    }
    minimize_psd(|m| lanml_objective_raw(m, data, pairs, cfg, exec), init, &cfg.solver)
}

/// Maximizes the PNCA objective by minimizing its negation. The reported
/// loss and trace are in negated units.
pub fn solve_pnca(
    data: &LabeledDataset,
    pairs: &PairSets,
    alpha: f64,
    controls: &SolverControls,
    init: &MetricMatrix,
) -> Result<SolveOutcome> {
    if init.dim() != data.dim() {
        return invalid("initial metric dimension does not match data");
    }
    minimize_psd(
        |m| {
            let o = pnca_objective_raw(m, data, pairs, alpha, Exec::default())?;
            Ok(Objective { value: -o.value, grad: -o.grad })
        },
        init,
        controls,
    )
}

/// `I / √N`, the default starting point.
pub fn default_init(d: usize, n: usize) -> MetricMatrix {
    MetricMatrix::scaled_identity(d, 1.0 / (n as f64).sqrt())
}
