//! Synthetic traces: the box-model Poisson cluster process and IRM traces,
//! plus Monte Carlo estimates of the distinct-document mean function.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::che::BoxPair;
use crate::error::{Error, Result};
use crate::seed::Seed;
use crate::trace::{DocId, Interner, Millis, ObservationWindow, RequestEvent, Trace};

/// One document of the box model: constant request intensity `lambda` on
/// `[arrival, arrival + tau]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DocumentProfile {
    /// Arrival time in ms; negative for documents published before the
    /// window opens.
    pub arrival: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl DocumentProfile {
    pub fn mean_requests(&self) -> f64 {
        self.lambda * self.tau
    }
}

/// Where each new document draws its `(lambda, tau)` from.
#[derive(Clone, Debug, PartialEq)]
pub enum PairSource {
    Fixed(BoxPair),
    /// Uniform draw with replacement from the list.
    Empirical(Vec<BoxPair>),
}

impl PairSource {
    fn draw(&self, rng: &mut ChaCha8Rng) -> BoxPair {
        match self {
            PairSource::Fixed(p) => *p,
            PairSource::Empirical(v) => v[rng.random_range(0..v.len())],
        }
    }

    /// Warmup giving documents arriving before the window a chance to reach
    /// it: the 99.9th percentile of `tau`.
    pub fn default_warmup(&self) -> f64 {
        match self {
            PairSource::Fixed(p) => p.tau,
            PairSource::Empirical(v) => {
                let mut taus: Vec<f64> = v.iter().map(|p| p.tau).collect();
                taus.sort_by(f64::total_cmp);
                let rank = ((0.999 * taus.len() as f64).ceil() as usize).clamp(1, taus.len());
                taus[rank - 1]
            }
        }
    }

    pub fn pairs(&self) -> Vec<BoxPair> {
        match self {
            PairSource::Fixed(p) => vec![*p],
            PairSource::Empirical(v) => v.clone(),
        }
    }
}

/// Parameters of the box-model trace generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Catalog arrival rate, documents per ms.
    pub gamma: f64,
    pub window: ObservationWindow,
    pub pair_source: PairSource,
    /// Length in ms of the arrival period simulated before the window.
    pub warmup: f64,
}

/// JSON form `{gamma, window_ms, warmup_ms, pairs: [[lambda, tau], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfigJson {
    pub gamma: f64,
    pub window_ms: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_ms: Option<f64>,
    pub pairs: Vec<[f64; 2]>,
}

impl GeneratorConfig {
    pub fn new(gamma: f64, window: Millis, pair_source: PairSource, warmup: Option<f64>) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be a non-negative number, got {gamma}")));
        }
        if let PairSource::Empirical(v) = &pair_source {
            if v.is_empty() {
                return Err(Error::InvalidArgument("pair list is empty".into()));
            }
        }
        for p in pair_source.pairs() {
            BoxPair::new(p.lambda, p.tau)?;
        }
        let warmup = warmup.unwrap_or_else(|| pair_source.default_warmup());
        if !(warmup >= 0.0 && warmup.is_finite()) {
            return Err(Error::InvalidArgument(format!("warmup must be non-negative, got {warmup}")));
        }
        Ok(Self { gamma, window: ObservationWindow::new(window)?, pair_source, warmup })
    }

    pub fn fixed(gamma: f64, window: Millis, lambda: f64, tau: f64) -> Result<Self> {
        Self::new(gamma, window, PairSource::Fixed(BoxPair::new(lambda, tau)?), None)
    }

    pub fn from_json(json: &GeneratorConfigJson) -> Result<Self> {
        let pairs = json.pairs.iter().map(|&[l, t]| BoxPair::new(l, t)).collect::<Result<Vec<_>>>()?;
        let source = match pairs.as_slice() {
            [single] => PairSource::Fixed(*single),
            _ => PairSource::Empirical(pairs),
        };
        Self::new(json.gamma, json.window_ms, source, json.warmup_ms)
    }

    pub fn to_json(&self) -> GeneratorConfigJson {
        GeneratorConfigJson {
            gamma: self.gamma,
            window_ms: self.window.length(),
            warmup_ms: Some(self.warmup),
            pairs: self.pair_source.pairs().iter().map(|p| [p.lambda, p.tau]).collect(),
        }
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Round half up to integer milliseconds.
fn round_ms(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Catalog of documents arriving on `[-warmup, A]`.
pub fn generate_profiles(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<DocumentProfile> {
    let span = config.window.length() as f64 + config.warmup;
    let count = poisson(rng, config.gamma * span);
    (0..count)
        .map(|_| {
            let arrival = -config.warmup + rng.random::<f64>() * span;
            let p = config.pair_source.draw(rng);
            DocumentProfile { arrival, lambda: p.lambda, tau: p.tau }
        })
        .collect()
}

/// In-window request times of every document, as `(document index, ms)`.
fn generate_requests(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> (Vec<DocumentProfile>, Vec<(usize, Millis)>) {
    let profiles = generate_profiles(config, rng);
    let window = config.window.length() as f64;
    let mut requests = Vec::new();
    for (doc, p) in profiles.iter().enumerate() {
        let n = poisson(rng, p.mean_requests());
        for _ in 0..n {
            let t = round_ms(p.arrival + rng.random::<f64>() * p.tau);
            if (0.0..=window).contains(&t) {
                requests.push((doc, t as Millis));
            }
        }
    }
    (profiles, requests)
}

/// Draws a box-model trace. Documents are named `d<index>` in arrival-draw
/// order; only documents with a request inside the window appear.
pub fn generate_box_trace(config: &GeneratorConfig, seed: Seed) -> Trace {
    let mut rng = seed.rng();
    let (profiles, requests) = generate_requests(config, &mut rng);
    let mut ids: Vec<Option<u32>> = vec![None; profiles.len()];
    let mut docs = Interner::new();
    let mut by_doc: Vec<(usize, Millis)> = requests;
    // intern in document order so names and ids do not depend on timing
    by_doc.sort_by_key(|&(d, _)| d);
    for &(d, _) in &by_doc {
        if ids[d].is_none() {
            ids[d] = Some(docs.intern(&format!("d{d}")));
        }
    }
    let events = by_doc
        .into_iter()
        .map(|(d, t)| RequestEvent { timestamp: t, doc: DocId(ids[d].unwrap()), user: None })
        .collect();
    Trace::from_events(events, config.window, Arc::new(docs), Arc::new(Interner::new()))
        .expect("generated timestamps lie in the window")
}

/// Zipf popularity weights `1 / k^s` for ranks `1..=docs`.
pub fn zipf_weights(docs: usize, exponent: f64) -> Vec<f64> {
    (1..=docs).map(|k| (k as f64).powf(-exponent)).collect()
}

/// IRM trace: `total_requests` independent document draws proportional to
/// `weights`, each at a uniform integer time in `[0, window]`. Document `i`
/// is named `d<i>`.
pub fn generate_irm_trace(weights: &[f64], total_requests: u64, window: Millis, seed: Seed) -> Result<Trace> {
    let window = ObservationWindow::new(window)?;
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("popularity weights must be positive".into()));
    }
    let mut docs = Interner::new();
    for i in 0..weights.len() {
        docs.intern(&format!("d{i}"));
    }
    let mut events = Vec::with_capacity(total_requests as usize);
    if total_requests > 0 {
        let index =
            WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(format!("popularity weights: {e}")))?;
        let mut rng = seed.rng();
        for _ in 0..total_requests {
            let doc = index.sample(&mut rng);
            let timestamp = rng.random_range(0..=window.length());
            events.push(RequestEvent { timestamp, doc: DocId(doc as u32), user: None });
        }
    }
    Trace::from_events(events, window, Arc::new(docs), Arc::new(Interner::new()))
}

/// Monte Carlo statistics of a distinct-document count at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiEstimate {
    pub t: Millis,
    pub mean: f64,
    pub std_error: f64,
    /// Unbiased sample variance of the count.
    pub variance: f64,
    /// Standard error of the sample variance, from the fourth central moment.
    pub variance_std_error: f64,
}

impl PsiEstimate {
    fn from_samples(t: Millis, xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let variance = m2 * n / (n - 1.0);
        Self {
            t,
            mean,
            std_error: (variance / n).sqrt(),
            variance,
            variance_std_error: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
        }
    }
}

/// Per `t`, mean and standard error over `reps` generated traces of the
/// number of distinct documents requested in `[0, t]`.
pub fn monte_carlo_psi(
    config: &GeneratorConfig,
    t_grid: &[Millis],
    reps: usize,
    seed: Seed,
) -> Result<Vec<PsiEstimate>> {
    monte_carlo_distinct(config, t_grid, reps, seed, 1)
}

/// As [`monte_carlo_psi`], counting only documents with at least
/// `min_requests` requests in `[0, t]`.
pub fn monte_carlo_distinct(
    config: &GeneratorConfig,
    t_grid: &[Millis],
    reps: usize,
    seed: Seed,
    min_requests: u32,
) -> Result<Vec<PsiEstimate>> {
    if reps < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least two replications".into()));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t > config.window.length()) {
        return Err(Error::Range(format!("t = {t} ms exceeds the window of {} ms", config.window.length())));
    }
    let min_requests = min_requests.max(1);
    let counts: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = seed.derive(rep as u64).rng();
            let (profiles, requests) = generate_requests(config, &mut rng);
            let mut per_doc = vec![0u32; profiles.len()];
            t_grid
                .iter()
                .map(|&t| {
                    per_doc.iter_mut().for_each(|c| *c = 0);
                    let mut distinct = 0u64;
                    for &(doc, ts) in &requests {
                        if ts <= t {
                            per_doc[doc] += 1;
                            if per_doc[doc] == min_requests {
                                distinct += 1;
                            }
                        }
                    }
                    distinct as f64
                })
                .collect()
        })
        .collect();
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let xs: Vec<f64> = counts.iter().map(|c| c[i]).collect();
            PsiEstimate::from_samples(t, &xs)
        })
        .collect())
}
