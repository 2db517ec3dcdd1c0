//! Inseparable-region diagnostics for linear metrics.
//!
//! For a query `xᵢ` with similar set `S_i`, a point `x` lies in the dissimilar
//! inseparable region when `x − xᵢ = Σ rⱼ (xⱼ − xᵢ)` has a representation with
//! `Σ|rⱼ| < 1`: no linear map can push it out of the neighborhood spanned by
//! the similars. The minimum-L1 representation is found by linear programming.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::par::{self, Exec};
use crate::simplex::{self, LpOutcome};

/// Points with `|min_l1 − 1|` at or below this are on the boundary and
/// reported as outside the region.
pub const TOL_BOUNDARY: f64 = 1e-6;
/// Reconstruction tolerance for representations returned by the LP.
pub const TOL_LP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext {
    pub query: Vec<f64>,
    pub similars: Vec<Vec<f64>>,
    pub dissimilars: Vec<Vec<f64>>,
}

impl QueryContext {
    fn check(&self, point: &[f64]) -> Result<usize> {
        let d = self.query.len();
        if d == 0 {
            return invalid("query must have dimension >= 1");
        }
        if point.len() != d || self.similars.iter().chain(&self.dissimilars).any(|v| v.len() != d) {
            return invalid("dimension mismatch in query context");
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinL1 {
    Value(f64),
    NotInSpan,
}

impl MinL1 {
    pub fn value(self) -> Option<f64> {
        match self {
            MinL1::Value(v) => Some(v),
            MinL1::NotInSpan => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub in_region: bool,
    pub min_l1: MinL1,
    pub representation: Option<Vec<f64>>,
    /// `|min_l1 − 1| ≤ TOL_BOUNDARY`.
    pub boundary: bool,
}

/// Minimum `Σ|rⱼ|` with `Σ rⱼ·(vⱼ − base) = point − base`, or `None` when
/// `point − base` lies outside the span.
pub fn min_l1_representation(base: &[f64], vertices: &[Vec<f64>], point: &[f64]) -> Result<Option<(Vec<f64>, f64)>> {
    let d = base.len();
    let m = vertices.len();
    let dirs: Vec<Vec<f64>> = vertices.iter().map(|v| v.iter().zip(base).map(|(a, b)| a - b).collect()).collect();
    // r = r⁺ − r⁻ with columns [dirs | −dirs]
    let a: Vec<Vec<f64>> = (0..d)
        .map(|k| (0..2 * m).map(|j| if j < m { dirs[j][k] } else { -dirs[j - m][k] }).collect())
        .collect();
    let b: Vec<f64> = point.iter().zip(base).map(|(p, q)| p - q).collect();
    let c = vec![1.0; 2 * m];
    match simplex::solve(&a, &b, &c)? {
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Solver("L1 representation LP reported unbounded".into())),
        LpOutcome::Optimal { x, .. } => {
            let r: Vec<f64> = (0..m).map(|j| x[j] - x[j + m]).collect();
            let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for k in 0..d {
                let recon: f64 = (0..m).map(|j| r[j] * dirs[j][k]).sum();
                if (recon - b[k]).abs() > TOL_LP * scale * (1.0 + r.iter().map(|v| v.abs()).sum::<f64>()) {
                    return Err(Error::Solver(format!("representation residual {:e} exceeds tolerance", recon - b[k])));
                }
            }
            let l1 = r.iter().map(|v| v.abs()).sum();
            Ok(Some((r, l1)))
        }
    }
}

/// Membership in the dissimilar inseparable region `N^a` of the query.
pub fn membership_na(ctx: &QueryContext, point: &[f64]) -> Result<RegionVerdict> {
    ctx.check(point)?;
    if ctx.similars.is_empty() {
        return invalid("membership_na needs at least one similar sample");
    }
    Ok(match min_l1_representation(&ctx.query, &ctx.similars, point)? {
        None => RegionVerdict { in_region: false, min_l1: MinL1::NotInSpan, representation: None, boundary: false },
        Some((r, l1)) => {
            let boundary = (l1 - 1.0).abs() <= TOL_BOUNDARY;
            RegionVerdict { in_region: !boundary && l1 < 1.0, min_l1: MinL1::Value(l1), representation: Some(r), boundary }
        }
    })
}

/// Membership in the similar inseparable region `N^b` of the query. Points
/// outside the span of the dissimilar directions count as inside.
pub fn membership_nb(ctx: &QueryContext, point: &[f64]) -> Result<RegionVerdict> {
    ctx.check(point)?;
    if ctx.dissimilars.is_empty() {
        return invalid("membership_nb needs at least one dissimilar sample");
    }
    Ok(match min_l1_representation(&ctx.query, &ctx.dissimilars, point)? {
        None => RegionVerdict { in_region: true, min_l1: MinL1::NotInSpan, representation: None, boundary: false },
        Some((r, l1)) => {
            let boundary = (l1 - 1.0).abs() <= TOL_BOUNDARY;
            RegionVerdict { in_region: !boundary && l1 > 1.0, min_l1: MinL1::Value(l1), representation: Some(r), boundary }
        }
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassGap {
    pub delta: f64,
    /// Keyed by `(p, q)` with `p < q`.
    pub per_pair: BTreeMap<(usize, usize), f64>,
}

impl ClassGap {
    pub fn gap(&self, p: usize, q: usize) -> Option<f64> {
        self.per_pair.get(&(p.min(q), p.max(q))).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub a: usize,
    pub b: usize,
    pub gap: f64,
}

impl Serialize for ClassGap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            delta: f64,
            per_pair: &'a [PairGap],
        }
        let pairs: Vec<PairGap> = self.per_pair.iter().map(|(&(a, b), &gap)| PairGap { a, b, gap }).collect();
        Out { delta: self.delta, per_pair: &pairs }.serialize(s)
    }
}

/// Minimum Euclidean distance between every pair of classes, and overall.
pub fn class_gap(data: &LabeledDataset) -> Result<ClassGap> {
    let c = data.n_classes();
    if c < 2 {
        return invalid("class gap needs at least two classes");
    }
    let mut per_pair = BTreeMap::new();
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            let (p, q) = (data.label(i), data.label(j));
            if p == q {
                continue;
            }
            let key = (p.min(q), p.max(q));
            let dist = euclidean(data.row(i), data.row(j));
            per_pair.entry(key).and_modify(|g: &mut f64| *g = g.min(dist)).or_insert(dist);
        }
    }
    let delta = per_pair.values().copied().fold(f64::INFINITY, f64::min);
    Ok(ClassGap { delta, per_pair })
}

/// `δ̂ / δ`: any map that turns a class gap of `δ` into `δ̂` has a Lipschitz
/// constant above this ratio.
pub fn lipschitz_lower_bound(delta_before: f64, delta_after: f64) -> Result<f64> {
    if !(delta_before > 0.0) || !delta_before.is_finite() {
        return invalid(format!("delta_before must be > 0, got {delta_before}"));
    }
    if !(delta_after >= 0.0) || !delta_after.is_finite() {
        return invalid(format!("delta_after must be >= 0, got {delta_after}"));
    }
    Ok(delta_after / delta_before)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCount {
    pub index: usize,
    pub inseparable_count: usize,
    pub dissimilar_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InseparabilityReport {
    pub per_query: Vec<QueryCount>,
    pub fraction: f64,
    pub delta: f64,
}

/// Runs [`membership_na`] for every (query, dissimilar) pair, with `S_i` the
/// `similars_per_query` Euclidean-nearest same-class samples. Queries whose
/// class has no other member contribute no pairs.
pub fn inseparability_report(data: &LabeledDataset, similars_per_query: usize) -> Result<InseparabilityReport> {
    inseparability_report_with(data, similars_per_query, Exec::default())
}

pub fn inseparability_report_with(data: &LabeledDataset, similars_per_query: usize, exec: Exec) -> Result<InseparabilityReport> {
    if similars_per_query == 0 {
        return invalid("similars_per_query must be positive");
    }
    let gap = class_gap(data)?;
    let n = data.len();
    let per_query = par::try_map_indexed(n, exec, |i| -> Result<QueryCount> {
        let yi = data.label(i);
        let xi = data.row(i);
        let mut same: Vec<usize> = (0..n).filter(|&j| j != i && data.label(j) == yi).collect();
        if same.is_empty() {
            return Ok(QueryCount { index: i, inseparable_count: 0, dissimilar_count: 0 });
        }
        same.sort_by(|&a, &b| euclidean(xi, data.row(a)).total_cmp(&euclidean(xi, data.row(b))).then(a.cmp(&b)));
        same.truncate(similars_per_query);
        let ctx = QueryContext {
            query: xi.to_vec(),
            similars: same.iter().map(|&j| data.row(j).to_vec()).collect(),
            dissimilars: Vec::new(),
        };
        let mut count = QueryCount { index: i, inseparable_count: 0, dissimilar_count: 0 };
        for l in (0..n).filter(|&l| data.label(l) != yi) {
            count.dissimilar_count += 1;
            if membership_na(&ctx, data.row(l))?.in_region {
                count.inseparable_count += 1;
            }
        }
        Ok(count)
    })?;
    let (ins, total) = per_query
        .iter()
        .fold((0usize, 0usize), |(a, b), q| (a + q.inseparable_count, b + q.dissimilar_count));
    let fraction = if total == 0 { 0.0 } else { ins as f64 / total as f64 };
    Ok(InseparabilityReport { per_query, fraction, delta: gap.delta })
}
