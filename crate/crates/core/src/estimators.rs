//! Per-document lifespan and request-rate estimates.
//!
//! For a document with `n >= 2` requests whose first and last request times
//! are `first` and `last`, the lifespan estimate is
//! `(last - first) * (n + 1) / (n - 1)`: for `n` uniform points on an
//! interval of length `tau` the expected range is `tau * (n - 1) / (n + 1)`.
//!
//! Only documents with at least one request are observed, so the count `n`
//! is treated as a zero-truncated Poisson variable. Its mean parameter `n'`
//! solves `n' / (1 - exp(-n')) = n`, and the rate estimate is `n' / tau`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::lru::sig6;
use crate::trace::{DocId, Millis, Trace, TraceSummary};

/// Lower clamp on lifespan estimates, in milliseconds.
pub const MIN_LIFESPAN_MS: f64 = 1.0;

const N_PRIME_MAX_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DocObservation {
    pub doc: DocId,
    pub n: u64,
    pub theta_first: Millis,
    pub theta_last: Millis,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DocEstimate {
    /// Lifespan estimate in milliseconds.
    pub tau_hat: f64,
    /// Request rate estimate in requests per millisecond.
    pub lambda_hat: f64,
}

/// Empirical joint law of `(lambda_hat, tau_hat)` plus the noise bookkeeping
/// needed by the box-model hit ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalJointSample {
    pub pairs: Vec<DocEstimate>,
    /// Documents requested exactly once.
    pub n1: u64,
    /// Documents requested at least twice.
    pub n2: u64,
    /// Mean request count of the `n2` documents.
    pub mean_n_multi: f64,
    /// Observation window length `A` in milliseconds.
    pub window: Millis,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatalogRateEstimate {
    /// Documents per millisecond.
    pub gamma_hat: f64,
}

pub fn estimate_lifespan(obs: &DocObservation) -> Result<f64> {
    if obs.n < 2 {
        return Err(Error::TooFewRequests("lifespan estimation"));
    }
    let span = (obs.theta_last - obs.theta_first) as f64;
    Ok(lifespan_from_span(span, obs.n).max(MIN_LIFESPAN_MS))
}

/// `span * (n + 1) / (n - 1)`, unbiased for `tau` when `n >= 2` points fall
/// uniformly on an interval of length `tau` and `span` is their range.
pub fn lifespan_from_span(span: f64, n: u64) -> f64 {
    let n = n as f64;
    span * (n + 1.0) / (n - 1.0)
}

/// Root `x >= 0` of `x / (1 - exp(-x)) = n`, by bisection on `[0, n]`.
pub fn solve_n_prime(n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("n' is defined for n >= 1".into()));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let target = n as f64;
    let (mut lo, mut hi) = (0.0f64, target);
    for _ in 0..N_PRIME_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if truncated_poisson_mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = |x: f64| (truncated_poisson_mean(x) - target).abs();
    Ok(if residual(lo) <= residual(hi) { lo } else { hi })
}

/// Mean of a Poisson(x) variable conditioned on being positive.
pub fn truncated_poisson_mean(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x / -(-x).exp_m1()
    }
}

pub fn estimate_rate(obs: &DocObservation) -> Result<f64> {
    let tau_hat = estimate_lifespan(obs)?;
    Ok(solve_n_prime(obs.n)? / tau_hat)
}

pub fn estimate(obs: &DocObservation) -> Result<DocEstimate> {
    let tau_hat = estimate_lifespan(obs)?;
    Ok(DocEstimate { tau_hat, lambda_hat: solve_n_prime(obs.n)? / tau_hat })
}

pub fn estimate_catalog_rate(summary: &TraceSummary, window: Millis) -> Result<CatalogRateEstimate> {
    if window == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    Ok(CatalogRateEstimate { gamma_hat: summary.distinct_docs as f64 / window as f64 })
}

/// One observation per requested document, in document-id order.
pub fn observations(trace: &Trace) -> Vec<DocObservation> {
    let mut obs: Vec<Option<DocObservation>> = vec![None; trace.doc_capacity()];
    for ev in trace.events() {
        let slot = &mut obs[ev.doc.index()];
        match slot {
            Some(o) => {
                o.n += 1;
                o.theta_last = ev.timestamp;
            }
            None => {
                *slot = Some(DocObservation { doc: ev.doc, n: 1, theta_first: ev.timestamp, theta_last: ev.timestamp })
            }
        }
    }
    obs.into_iter().flatten().collect()
}

pub fn build_joint_sample(trace: &Trace) -> EmpiricalJointSample {
    build_joint_sample_filtered(trace, 2)
}

/// As [`build_joint_sample`], but only documents with at least
/// `min_requests` requests contribute `(lambda, tau)` pairs. The noise
/// counts `n1`, `n2` and the mean request count are unaffected.
pub fn build_joint_sample_filtered(trace: &Trace, min_requests: u64) -> EmpiricalJointSample {
    let min_requests = min_requests.max(2);
    let mut sample =
        EmpiricalJointSample { pairs: Vec::new(), n1: 0, n2: 0, mean_n_multi: 0.0, window: trace.window().length() };
    let mut multi_requests = 0u64;
    for obs in observations(trace) {
        if obs.n == 1 {
            sample.n1 += 1;
            continue;
        }
        sample.n2 += 1;
        multi_requests += obs.n;
        if obs.n >= min_requests {
            sample.pairs.push(estimate(&obs).expect("n >= 2"));
        }
    }
    if sample.n2 > 0 {
        sample.mean_n_multi = multi_requests as f64 / sample.n2 as f64;
    }
    sample
}

/// Documents ranked by request count (descending, ties by identifier) as
/// `(rank, count)` pairs, ranks starting at 1.
pub fn rank_frequency(trace: &Trace) -> Vec<(u64, u64)> {
    let counts = trace.request_counts();
    let mut ranked: Vec<(u64, &str)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(doc, &n)| (n, trace.doc_interner().name(doc as u32)))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().enumerate().map(|(i, (n, _))| (i as u64 + 1, n)).collect()
}

/// CSV `doc_id,n,theta_first_ms,theta_last_ms,tau_hat_ms,lambda_hat_per_ms`
/// for every document with at least `min_requests` (and at least 2) requests.
pub fn write_estimates_csv<W: Write>(trace: &Trace, min_requests: u64, mut out: W) -> Result<()> {
    writeln!(out, "doc_id,n,theta_first_ms,theta_last_ms,tau_hat_ms,lambda_hat_per_ms")?;
    for obs in observations(trace).into_iter().filter(|o| o.n >= min_requests.max(2)) {
        let est = estimate(&obs)?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            trace.doc_name(obs.doc),
            obs.n,
            obs.theta_first,
            obs.theta_last,
            sig6(est.tau_hat),
            sig6(est.lambda_hat)
        )?;
    }
    out.flush()?;
    Ok(())
}
