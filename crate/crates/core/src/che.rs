//! Che approximation of the LRU hit ratio.
//!
//! Under the box model a document arriving at time `a` is requested as a
//! Poisson process of rate `lambda` on `[a, a + tau]`, and documents arrive
//! as a Poisson process of rate `gamma`. The mean number of distinct
//! documents requested in a window of length `t` is
//!
//! ```text
//! psi(t) = gamma * E[ 2t + (1 - e^{-lambda t})(tau - t - 2/lambda) ]    tau >= t
//!        = gamma * E[ 2tau + (1 - e^{-lambda tau})(t - tau - 2/lambda) ] tau <  t
//! ```
//!
//! The characteristic time `t_C` solves `psi(t_C) = C`, and a document then
//! collects on average
//!
//! ```text
//! lambda tau - 1 + e^{-lambda tau}                                        tau <  t_C
//! (lambda tau - 1)(1 - e^{-lambda t_C}) + lambda t_C e^{-lambda t_C}       tau >= t_C
//! ```
//!
//! hits. When `(lambda, tau)` come from trace estimates the `N1` documents
//! seen only once are split off as a homogeneous noise stream (`psi1`). The
//! `N2` remaining documents contribute, by default, `N2 / A` times the mean
//! of the per-pair psi term over their estimates ([`Psi2Form::Occupancy`]).
//! [`Psi2Form::MultiRequest`] uses `gamma * E[L]` instead, where
//! `L(lambda, tau, t)` is the expected number of documents requested at
//! least twice in a window of length `t`; it leaves out multi-request
//! documents that appear only once in short windows and underestimates
//! `psi` whenever `t` is comparable to the lifespans.
//!
//! All formulas are evaluated in rearranged forms free of cancellation:
//! with `u = min(t, tau)`, `w = |tau - t|` and `x = lambda u`,
//!
//! ```text
//! psi term = w (1 - e^{-x}) + (2/lambda) g(x),  g(x) = x - 1 + e^{-x}
//! L        = w p2(x)        + (2/lambda) h(x),  p2(x) = 1 - e^{-x} - x e^{-x},  h = g - p2
//! ```
//!
//! and `g`, `p2`, `h` switch to their power series for `x < 1`.

use crate::error::{Error, Result};
use crate::estimators::EmpiricalJointSample;
use crate::lru::{validate_sizes, CurvePoint, HitRatioCurve};

/// Per-document request rate (per ms) and lifespan (ms) of the box model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxPair {
    pub lambda: f64,
    pub tau: f64,
}

impl BoxPair {
    pub fn new(lambda: f64, tau: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box pair needs positive finite lambda and tau, got ({lambda}, {tau})"
            )));
        }
        Ok(Self { lambda, tau })
    }

    /// Mean number of requests over the whole lifespan.
    pub fn mean_requests(&self) -> f64 {
        self.lambda * self.tau
    }
}

impl From<crate::estimators::DocEstimate> for BoxPair {
    fn from(e: crate::estimators::DocEstimate) -> Self {
        Self { lambda: e.lambda_hat, tau: e.tau_hat }
    }
}

const SERIES_CUTOFF: f64 = 1.0;

/// Sum of `coeff(k) * (-x)^k / k!` for `k >= start`, `x < 1`.
fn exp_series(x: f64, start: u32, coeff: impl Fn(u32) -> f64) -> f64 {
    let mut power = 1.0;
    for k in 1..start {
        power *= -x / k as f64;
    }
    let mut sum = 0.0;
    for k in start..start + 40 {
        power *= -x / k as f64;
        let term = coeff(k) * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `1 - e^{-x}`.
pub fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `x - 1 + e^{-x}`, the expected hits of a fully observed box with mean
/// `x` requests.
pub fn g(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        exp_series(x, 2, |_| 1.0)
    } else {
        x - one_minus_exp(x)
    }
}

/// `1 - e^{-x} - x e^{-x}`, the probability that a Poisson(x) variable is
/// at least 2.
pub fn p2(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        exp_series(x, 2, |k| (k - 1) as f64)
    } else {
        one_minus_exp(x) - x * (-x).exp()
    }
}

/// `g(x) - p2(x) = x - 2 + (2 + x) e^{-x}`.
pub fn h(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        exp_series(x, 3, |k| -((k - 2) as f64))
    } else {
        x - 2.0 + (2.0 + x) * (-x).exp()
    }
}

/// The two sides of each piecewise formula, exposed separately so that
/// their agreement at the breakpoint can be checked.
pub mod branches {
    use super::{g, h, one_minus_exp, p2, BoxPair};

    /// Distinct-document term of one pair when `tau >= t`.
    pub fn psi_long(p: BoxPair, t: f64) -> f64 {
        (p.tau - t) * one_minus_exp(p.lambda * t) + 2.0 / p.lambda * g(p.lambda * t)
    }

    /// Distinct-document term of one pair when `tau < t`.
    pub fn psi_short(p: BoxPair, t: f64) -> f64 {
        (t - p.tau) * one_minus_exp(p.lambda * p.tau) + 2.0 / p.lambda * g(p.lambda * p.tau)
    }

    /// `L` when `tau >= t`.
    pub fn l_long(p: BoxPair, t: f64) -> f64 {
        (p.tau - t) * p2(p.lambda * t) + 2.0 / p.lambda * h(p.lambda * t)
    }

    /// `L` when `tau < t`.
    pub fn l_short(p: BoxPair, t: f64) -> f64 {
        (t - p.tau) * p2(p.lambda * p.tau) + 2.0 / p.lambda * h(p.lambda * p.tau)
    }

    /// Expected hits when the lifespan is shorter than the characteristic
    /// time (`tau < t_c`).
    pub fn hits_short(p: BoxPair, _t_c: f64) -> f64 {
        g(p.lambda * p.tau)
    }

    /// Expected hits when `tau >= t_c`.
    pub fn hits_long(p: BoxPair, t_c: f64) -> f64 {
        let y = p.lambda * t_c;
        (p.lambda * p.tau * one_minus_exp(y) - p2(y)).max(0.0)
    }
}

fn mean_over<F: Fn(BoxPair) -> f64>(pairs: &[BoxPair], f: F) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|&p| f(p)).sum::<f64>() / pairs.len() as f64
}

/// Contribution of a single pair to `psi(t) / gamma`.
pub fn psi_box_pair(p: BoxPair, t: f64) -> f64 {
    if p.tau >= t {
        branches::psi_long(p, t)
    } else {
        branches::psi_short(p, t)
    }
}

/// Mean number of distinct documents requested in a window of length `t`,
/// with `(lambda, tau)` distributed as the empirical law of `pairs`.
pub fn psi_box(t: f64, gamma: f64, pairs: &[BoxPair]) -> f64 {
    gamma * mean_over(pairs, |p| psi_box_pair(p, t))
}

/// Noise component: `n1 * t / window`.
pub fn psi1(t: f64, n1: u64, window: f64) -> f64 {
    n1 as f64 * t / window
}

/// Expected number of documents with parameters `(lambda, tau)` requested
/// at least twice in a window of length `t`, per unit of catalog rate.
pub fn big_l(lambda: f64, tau: f64, t: f64) -> f64 {
    let p = BoxPair { lambda, tau };
    if tau >= t {
        branches::l_long(p, t)
    } else {
        branches::l_short(p, t)
    }
}

/// How the estimable (non-noise) part of the distinct-document mean
/// function is built from the empirical pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Psi2Form {
    /// `N2 / A * E[psi term]`: every multi-request document seen in the window.
    #[default]
    Occupancy,
    /// `gamma_hat * E[L]`: documents requested at least twice in the window.
    MultiRequest,
}

impl std::fmt::Display for Psi2Form {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Psi2Form::Occupancy => "occupancy",
            Psi2Form::MultiRequest => "multi-request",
        })
    }
}

impl std::str::FromStr for Psi2Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occupancy" => Ok(Psi2Form::Occupancy),
            "multi-request" => Ok(Psi2Form::MultiRequest),
            _ => Err(Error::InvalidArgument(format!("unknown psi form {s:?}"))),
        }
    }
}

/// Distinct-document mean function estimated from a trace.
#[derive(Clone, Debug)]
pub struct PsiModel {
    pub gamma_hat: f64,
    pub sample: EmpiricalJointSample,
    pub form: Psi2Form,
    pairs: Vec<BoxPair>,
}

impl PsiModel {
    pub fn new(gamma_hat: f64, sample: EmpiricalJointSample) -> Self {
        Self::with_form(gamma_hat, sample, Psi2Form::default())
    }

    pub fn with_form(gamma_hat: f64, sample: EmpiricalJointSample, form: Psi2Form) -> Self {
        let pairs = sample.pairs.iter().copied().map(BoxPair::from).collect();
        Self { gamma_hat, sample, form, pairs }
    }

    pub fn pairs(&self) -> &[BoxPair] {
        &self.pairs
    }

    /// Noise part `psi1(t)`.
    pub fn noise(&self, t: f64) -> f64 {
        psi1(t, self.sample.n1, self.sample.window as f64)
    }

    /// Estimable part, according to `form`.
    pub fn estimable(&self, t: f64) -> f64 {
        match self.form {
            Psi2Form::Occupancy => {
                let rate = self.sample.n2 as f64 / self.sample.window as f64;
                rate * mean_over(&self.pairs, |p| psi_box_pair(p, t))
            }
            Psi2Form::MultiRequest => self.gamma_hat * mean_over(&self.pairs, |p| big_l(p.lambda, p.tau, t)),
        }
    }
}

pub fn psi_hat(t: f64, model: &PsiModel) -> f64 {
    model.noise(t) + model.estimable(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacteristicTime {
    /// Characteristic time in milliseconds.
    pub t_c: f64,
    pub cache_size: f64,
    /// `|psi(t_c) - cache_size|`.
    pub residual: f64,
}

/// Relative residual targeted by [`characteristic_time`].
pub const CHARACTERISTIC_TIME_TOLERANCE: f64 = 1e-6;

const MAX_BRACKET_GROWTH: u32 = 1_000_000;
const MAX_BISECTIONS: u32 = 500;

/// Inverts a non-decreasing mean function: the `t` with `psi(t) = cache_size`.
///
/// The upper bracket starts at `initial_upper` and doubles until
/// `psi(upper) >= cache_size`; bisection then runs until the residual is at
/// most `1e-6 * cache_size`.
pub fn characteristic_time<F>(cache_size: f64, psi: F, initial_upper: f64) -> Result<CharacteristicTime>
where
    F: Fn(f64) -> f64,
{
    if !(cache_size > 0.0) {
        return Err(Error::InvalidArgument("cache size must be positive".into()));
    }
    let tolerance = CHARACTERISTIC_TIME_TOLERANCE * cache_size;
    let mut lo = 0.0;
    let mut hi = if initial_upper > 0.0 { initial_upper } else { 1.0 };
    let mut steps = 0;
    while psi(hi) < cache_size {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_GROWTH || !hi.is_finite() {
            return Err(Error::CacheLargerThanCatalog { cache_size });
        }
    }
    let result = |t: f64| CharacteristicTime { t_c: t, cache_size, residual: (psi(t) - cache_size).abs() };
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let value = psi(mid);
        if (value - cache_size).abs() <= tolerance {
            return Ok(CharacteristicTime { t_c: mid, cache_size, residual: (value - cache_size).abs() });
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if value < cache_size {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (result(lo), result(hi));
    Ok(if a.residual <= b.residual { a } else { b })
}

/// Expected hits collected by one document at characteristic time `t_c`.
pub fn expected_hits_doc(p: BoxPair, t_c: f64) -> f64 {
    if p.tau < t_c {
        branches::hits_short(p, t_c)
    } else {
        branches::hits_long(p, t_c)
    }
}

/// Mean expected hits per document over the empirical law of `pairs`.
pub fn expected_hits_total(pairs: &[BoxPair], t_c: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("expected hits need at least one (lambda, tau) pair".into()));
    }
    Ok(mean_over(pairs, |p| expected_hits_doc(p, t_c)))
}

/// Box-model hit ratio and the characteristic time it was computed at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxHitRatio {
    pub hit_ratio: f64,
    pub characteristic_time: CharacteristicTime,
}

fn box_hit_ratio_with(model: &PsiModel, cache_size: u64) -> Result<BoxHitRatio> {
    let sample = &model.sample;
    if sample.n2 == 0 || model.pairs.is_empty() {
        return Err(Error::NoEstimableDocuments);
    }
    let ct = characteristic_time(cache_size as f64, |t| psi_hat(t, model), sample.window as f64)?;
    let hits = expected_hits_total(&model.pairs, ct.t_c)?;
    let requests = sample.mean_n_multi + sample.n1 as f64 / sample.n2 as f64;
    Ok(BoxHitRatio { hit_ratio: hits / requests, characteristic_time: ct })
}

/// Hit ratio of an LRU cache of `cache_size` documents predicted from trace
/// estimates: expected hits per estimable document divided by
/// `E[n | n >= 2] + N1 / N2`.
pub fn hit_ratio_box(sample: &EmpiricalJointSample, gamma_hat: f64, cache_size: u64) -> Result<f64> {
    let model = PsiModel::new(gamma_hat, sample.clone());
    Ok(box_hit_ratio_with(&model, cache_size)?.hit_ratio)
}

/// Box-model prediction on a grid.
#[derive(Clone, Debug)]
pub struct BoxPrediction {
    pub curve: HitRatioCurve,
    pub characteristic_times: Vec<CharacteristicTime>,
}

pub fn predict_box_curve(
    sample: &EmpiricalJointSample,
    gamma_hat: f64,
    sizes: &[u64],
    distinct_docs: u64,
) -> Result<BoxPrediction> {
    predict_box_curve_with(&PsiModel::new(gamma_hat, sample.clone()), sizes, distinct_docs)
}

pub fn predict_box_curve_with(model: &PsiModel, sizes: &[u64], distinct_docs: u64) -> Result<BoxPrediction> {
    validate_sizes(sizes)?;
    let mut points = Vec::with_capacity(sizes.len());
    let mut times = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let r = box_hit_ratio_with(model, size)?;
        points.push(CurvePoint::new(size, distinct_docs, r.hit_ratio));
        times.push(r.characteristic_time);
    }
    let sample = &model.sample;
    let total = (sample.n1 as f64 + sample.n2 as f64 * sample.mean_n_multi).round() as u64;
    Ok(BoxPrediction { curve: HitRatioCurve { points, total_requests: total }, characteristic_times: times })
}

/// Classic Che approximation under the independent reference model: each
/// document is requested at rate `n_d / total_time` for the whole window.
///
/// Sizes at or above the number of documents are clamped to the cold-miss
/// ceiling `1 - m / sum(n_d)`.
pub fn che_classic_irm(doc_counts: &[u64], total_time: f64, sizes: &[u64]) -> Result<HitRatioCurve> {
    validate_sizes(sizes)?;
    if !(total_time > 0.0) {
        return Err(Error::InvalidArgument("total time must be positive".into()));
    }
    if doc_counts.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if doc_counts.contains(&0) {
        return Err(Error::InvalidArgument("document request counts must be positive".into()));
    }
    let docs = doc_counts.len() as u64;
    let total: u64 = doc_counts.iter().sum();
    let rates: Vec<f64> = doc_counts.iter().map(|&n| n as f64 / total_time).collect();
    let ceiling = 1.0 - docs as f64 / total as f64;
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let hit_ratio = if size >= docs {
            log::warn!("cache size {size} holds all {docs} documents; using the cold-miss ceiling");
            ceiling
        } else {
            let occupancy = |t: f64| rates.iter().map(|&r| one_minus_exp(r * t)).sum::<f64>();
            let ct = characteristic_time(size as f64, occupancy, total_time)?;
            let hits: f64 = doc_counts.iter().zip(&rates).map(|(&n, &r)| n as f64 * one_minus_exp(r * ct.t_c)).sum();
            hits / total as f64
        };
        points.push(CurvePoint::new(size, docs, hit_ratio));
    }
    Ok(HitRatioCurve { points, total_requests: total })
}
