//! Log-exp mean machinery.
//!
//! `b(γ) = -(1/γ) · log((1/n) · Σ exp(-γ·aᵢ))` interpolates smoothly between
//! the maximum (γ → -∞), the arithmetic mean (γ → 0) and the minimum
//! (γ → +∞) of a series. It is strictly decreasing in γ for any series with
//! at least two distinct values, which is what makes the `K ↔ γ`
//! correspondence in [`gamma_for_k`] well defined.

use crate::error::{invalid, Error, Result};

/// Below this magnitude the log-exp mean is replaced by its γ → 0 limit.
pub const GAMMA_EPS: f64 = 1e-8;

/// Absolute tolerance on `b`-values for [`gamma_for_k`].
pub const ROOT_TOL: f64 = 1e-10;

const ROOT_MAX_ITERS: usize = 200;
const BRACKET_LO: f64 = 1.0 / (1u64 << 20) as f64;
const BRACKET_HI: f64 = (1u64 << 20) as f64;

/// A non-empty series of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberSeries(Vec<f64>);

impl NumberSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("number series must be non-empty");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("number series entry {i} is not finite"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        mean(&self.0)
    }
}

impl TryFrom<Vec<f64>> for NumberSeries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Which end of a sorted series a neighborhood radius is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    /// α = +1: the K smallest values.
    Smallest,
    /// α = -1: the K largest values.
    Largest,
}

impl Extreme {
    pub fn from_sign(alpha: i32) -> Result<Self> {
        match alpha {
            1 => Ok(Extreme::Smallest),
            -1 => Ok(Extreme::Largest),
            other => invalid(format!("alpha must be +1 or -1, got {other}")),
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Extreme::Smallest => 1,
            Extreme::Largest => -1,
        }
    }
}

/// `(K, α)` selection of supporting samples, with an optional smoothing γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodSpec {
    pub k: usize,
    pub alpha: Extreme,
    pub gamma: Option<f64>,
}

impl NeighborhoodSpec {
    pub fn new(k: usize, alpha: Extreme) -> Self {
        Self { k, alpha, gamma: None }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return invalid(format!("k = {} out of range 1..={n}", self.k));
        }
        Ok(())
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unchecked log-exp mean over a raw slice; callers guarantee a non-empty,
/// finite input.
pub(crate) fn log_exp_mean_raw(values: &[f64], gamma: f64) -> f64 {
    let n = values.len() as f64;
    if gamma.abs() < GAMMA_EPS {
        return mean(values);
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let anchor = if gamma > 0.0 { lo } else { hi };
    let sum: f64 = values.iter().map(|&a| (-gamma * (a - anchor)).exp()).sum();
    let b = anchor - (sum / n).ln() / gamma;
    b.clamp(lo, hi)
}

/// Log-exp mean together with its partial derivatives `∂b/∂aᵢ`, which are the
/// softmax weights `exp(-γ aᵢ) / Σ exp(-γ aⱼ)`. The weights are written into
/// `weights` (resized to the input length) and sum to one.
pub(crate) fn log_exp_mean_weights(values: &[f64], gamma: f64, weights: &mut Vec<f64>) -> f64 {
    let n = values.len();
    weights.clear();
    if gamma.abs() < GAMMA_EPS {
        weights.resize(n, 1.0 / n as f64);
        return mean(values);
    }
    let anchor = if gamma > 0.0 {
        values.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    weights.extend(values.iter().map(|&a| (-gamma * (a - anchor)).exp()));
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    anchor - (sum / n as f64).ln() / gamma
}

/// `b(γ)` for a validated series. Returns the arithmetic mean when
/// `|γ| < GAMMA_EPS`; the result always lies in `[min, max]`.
pub fn log_exp_mean(series: &NumberSeries, gamma: f64) -> Result<f64> {
    if !gamma.is_finite() {
        return invalid("gamma must be finite");
    }
    Ok(log_exp_mean_raw(series.as_slice(), gamma))
}

/// `g(γ) = (1/γ) · log(Σ exp(γ·aᵢ))`, the unnormalized soft extremum.
///
/// Bounds the maximum from above for γ > 0 and the minimum from below for
/// γ < 0. Undefined near zero, where it diverges instead of tending to a mean.
pub fn sup_log_exp(series: &NumberSeries, gamma: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma.abs() < GAMMA_EPS {
        return invalid(format!("|gamma| must be at least {GAMMA_EPS:e}, got {gamma}"));
    }
    let anchor = if gamma > 0.0 { series.max() } else { series.min() };
    let sum: f64 = series.as_slice().iter().map(|&a| (gamma * (a - anchor)).exp()).sum();
    Ok(anchor + sum.ln() / gamma)
}

/// Mean of the K smallest (α = +1) or K largest (α = -1) entries. Ties are
/// resolved by a stable sort on the original position.
pub fn trimmed_radius(series: &NumberSeries, spec: NeighborhoodSpec) -> Result<f64> {
    spec.check(series.len())?;
    let mut order: Vec<usize> = (0..series.len()).collect();
    let v = series.as_slice();
    match spec.alpha {
        Extreme::Smallest => order.sort_by(|&i, &j| v[i].total_cmp(&v[j])),
        Extreme::Largest => order.sort_by(|&i, &j| v[j].total_cmp(&v[i])),
    }
    Ok(order[..spec.k].iter().map(|&i| v[i]).sum::<f64>() / spec.k as f64)
}

/// Solves `b(γ*) = trimmed_radius(series, spec)` for γ*.
///
/// γ* is positive for α = +1 and negative for α = -1 when `K < n`, and zero
/// when `K = n`. Requires distinct values. For `K = 1` the target is the
/// extreme value itself, which `b` only reaches asymptotically; the search
/// then returns the first γ whose `b` is within [`ROOT_TOL`] of it.
pub fn gamma_for_k(series: &NumberSeries, spec: NeighborhoodSpec) -> Result<f64> {
    spec.check(series.len())?;
    let mut sorted = series.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return invalid("gamma_for_k requires distinct values");
    }
    if spec.k == series.len() {
        return Ok(0.0);
    }
    match spec.alpha {
        Extreme::Smallest => positive_root(&sorted, spec.k),
        Extreme::Largest => {
            // b(-γ; a) = -b(γ; -a), so the largest-K root mirrors a smallest-K root.
            let mirrored: Vec<f64> = sorted.iter().rev().map(|v| -v).collect();
            positive_root(&mirrored, spec.k).map(|g| -g)
        }
    }
}

/// Root of `b(γ) = mean(sorted[..k])` on γ > 0; `sorted` ascending, distinct.
fn positive_root(sorted: &[f64], k: usize) -> Result<f64> {
    let target = mean(&sorted[..k]);
    let f = |g: f64| log_exp_mean_raw(sorted, g) - target;

    let mut lo = BRACKET_LO;
    let mut hi = BRACKET_HI;
    let mut iters = 0;
    // b is decreasing: need f(lo) > 0 > f(hi).
    while f(lo) <= 0.0 {
        if f(lo).abs() <= ROOT_TOL {
            return Ok(lo);
        }
        lo *= 0.5;
        iters += 1;
        if iters >= ROOT_MAX_ITERS {
            return Err(Error::Convergence("could not bracket gamma from below".into()));
        }
    }
    loop {
        let fh = f(hi);
        if fh <= 0.0 {
            break;
        }
        if fh <= ROOT_TOL {
            return Ok(hi);
        }
        hi *= 2.0;
        iters += 1;
        if iters >= ROOT_MAX_ITERS || !hi.is_finite() {
            return Err(Error::Convergence("could not bracket gamma from above".into()));
        }
    }
    for _ in 0..ROOT_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= ROOT_TOL || hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence("bisection did not reach tolerance".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> NumberSeries {
        NumberSeries::new(v.to_vec()).unwrap()
    }

    fn naive(values: &[f64], gamma: f64) -> f64 {
        let n = values.len() as f64;
        -(values.iter().map(|a| (-gamma * a).exp()).sum::<f64>() / n).ln() / gamma
    }

    #[test]
    fn limits_on_small_series() {
        let a = s(&[1.0, 2.0, 3.0]);
        assert_eq!(log_exp_mean(&a, 1e-12).unwrap(), 2.0);
        assert!((log_exp_mean(&a, 1e3).unwrap() - 1.0).abs() < 1e-2);
        assert!((log_exp_mean(&a, -1e3).unwrap() - 3.0).abs() < 1e-2);
    }

    #[test]
    fn moderate_gamma_matches_high_precision_value() {
        // 40-digit evaluation of the defining formula.
        let a = s(&[0.37, 1.62, 2.05, 2.9]);
        let v = log_exp_mean(&a, 1.0).unwrap();
        assert!((v - 1.316_403_483_153_976_7).abs() < 1e-14);
        assert!(v >= a.min() && v <= a.max() && v < a.mean());
    }

    #[test]
    fn rejects_bad_series() {
        assert!(NumberSeries::new(vec![]).is_err());
        assert!(NumberSeries::new(vec![1.0, f64::NAN]).is_err());
        assert!(NumberSeries::new(vec![f64::INFINITY]).is_err());
        assert!(log_exp_mean(&s(&[1.0]), f64::NAN).is_err());
    }

    #[test]
    fn stable_for_large_gamma_times_range() {
        let a = s(&[0.0, 5.0, 10.0]);
        let v = log_exp_mean(&a, 1e3).unwrap();
        assert!(v.is_finite());
        assert!((v - (3f64).ln() / 1e3).abs() < 1e-12);
    }

    #[test]
    fn sup_log_exp_bounds() {
        assert_eq!(sup_log_exp(&s(&[5.0]), 1.0).unwrap(), 5.0);
        let a = s(&[1.0, 2.0, 3.0]);
        assert!(sup_log_exp(&a, 1.0).unwrap() > 3.0);
        assert!(sup_log_exp(&a, -1.0).unwrap() < 1.0);
        assert!(sup_log_exp(&a, 0.0).is_err());
        assert!(sup_log_exp(&a, 1e-9).is_err());
    }

    #[test]
    fn trimmed_radius_examples() {
        let a = s(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(trimmed_radius(&a, NeighborhoodSpec::new(2, Extreme::Smallest)).unwrap(), 1.5);
        assert_eq!(trimmed_radius(&a, NeighborhoodSpec::new(2, Extreme::Largest)).unwrap(), 3.5);
        assert_eq!(trimmed_radius(&s(&[7.0]), NeighborhoodSpec::new(1, Extreme::Smallest)).unwrap(), 7.0);
        assert!(trimmed_radius(&a, NeighborhoodSpec::new(0, Extreme::Smallest)).is_err());
        assert!(trimmed_radius(&a, NeighborhoodSpec::new(5, Extreme::Smallest)).is_err());
    }

    #[test]
    fn gamma_for_k_examples() {
        let a = s(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(gamma_for_k(&a, NeighborhoodSpec::new(4, Extreme::Smallest)).unwrap(), 0.0);

        let g = gamma_for_k(&a, NeighborhoodSpec::new(2, Extreme::Smallest)).unwrap();
        assert!(g > 0.0);
        assert!((log_exp_mean(&a, g).unwrap() - 1.5).abs() <= ROOT_TOL);

        let g = gamma_for_k(&a, NeighborhoodSpec::new(2, Extreme::Largest)).unwrap();
        assert!(g < 0.0);
        assert!((log_exp_mean(&a, g).unwrap() - 3.5).abs() <= ROOT_TOL);
    }

    #[test]
    fn gamma_for_k_single_extreme() {
        let a = s(&[1.0, 2.0, 3.0, 4.0]);
        for alpha in [Extreme::Smallest, Extreme::Largest] {
            let spec = NeighborhoodSpec::new(1, alpha);
            let g = gamma_for_k(&a, spec).unwrap();
            let r = trimmed_radius(&a, spec).unwrap();
            assert!((log_exp_mean(&a, g).unwrap() - r).abs() <= ROOT_TOL);
        }
    }

    #[test]
    fn gamma_for_k_rejects_duplicates() {
        let a = s(&[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            gamma_for_k(&a, NeighborhoodSpec::new(2, Extreme::Smallest)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn weights_are_softmax_and_sum_to_one() {
        let mut w = Vec::new();
        let b = log_exp_mean_weights(&[0.5, 1.0, 4.0], 2.0, &mut w);
        assert!((b - log_exp_mean_raw(&[0.5, 1.0, 4.0], 2.0)).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let z: f64 = [0.5f64, 1.0, 4.0].iter().map(|a| (-2.0 * a).exp()).sum();
        assert!((w[0] - (-1.0f64).exp() / z).abs() < 1e-15);
    }

    fn series_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..40)
    }

    proptest! {
        #[test]
        fn stays_within_range(a in series_strategy(), gamma in -50.0f64..50.0) {
            let series = NumberSeries::new(a).unwrap();
            let v = log_exp_mean(&series, gamma).unwrap();
            prop_assert!(v >= series.min() && v <= series.max());
        }

        #[test]
        fn decreasing_in_gamma(a in series_strategy(), g1 in -20.0f64..20.0, g2 in -20.0f64..20.0) {
            let series = NumberSeries::new(a).unwrap();
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(log_exp_mean(&series, lo).unwrap() >= log_exp_mean(&series, hi).unwrap() - 1e-12);
        }

        #[test]
        fn shift_equivariant(a in series_strategy(), c in -100.0f64..100.0, gamma in -5.0f64..5.0) {
            let series = NumberSeries::new(a.clone()).unwrap();
            let shifted = NumberSeries::new(a.iter().map(|v| v + c).collect()).unwrap();
            let lhs = log_exp_mean(&shifted, gamma).unwrap();
            let rhs = log_exp_mean(&series, gamma).unwrap() + c;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + c.abs()));
        }

        #[test]
        fn agrees_with_naive_formula_where_it_is_safe(a in series_strategy(), gamma in 0.01f64..3.0) {
            let v = log_exp_mean_raw(&a, gamma);
            prop_assert!((v - naive(&a, gamma)).abs() < 1e-9);
        }
    }
}
