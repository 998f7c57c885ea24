//! Exact LRU hit ratios for every cache size via stack distances.
//!
//! The stack distance of a request is the number of distinct documents
//! requested since the previous request to the same document, counting the
//! document itself; a first request has infinite distance. A request hits an
//! LRU cache holding `C` documents iff its stack distance is at most `C`, so
//! a single histogram of distances yields the whole hit-ratio curve.
//!
//! Distances are computed in O(M log M) by keeping a mark on the position of
//! the most recent request of every document and counting marks between the
//! previous and the current request with a [`FenwickTree`].

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fenwick::FenwickTree;
use crate::trace::Trace;

/// Per-request stack distances in trace order; `None` marks a first request.
pub fn stack_distance_sequence(trace: &Trace) -> Vec<Option<u64>> {
    let events = trace.events();
    let mut marks = FenwickTree::new(events.len());
    let mut last: Vec<Option<usize>> = vec![None; trace.doc_capacity()];
    let mut out = Vec::with_capacity(events.len());
    for (i, ev) in events.iter().enumerate() {
        let slot = &mut last[ev.doc.index()];
        match slot.replace(i) {
            Some(prev) => {
                let between = marks.range_sum(prev + 1, i) as u64;
                out.push(Some(between + 1));
                marks.add(prev, -1);
            }
            None => out.push(None),
        }
        marks.add(i, 1);
    }
    out
}

/// Histogram of stack distances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StackDistanceProfile {
    /// `finite[d - 1]` is the number of requests with stack distance `d`.
    finite: Vec<u64>,
    cold: u64,
}

impl StackDistanceProfile {
    pub fn from_distances<I: IntoIterator<Item = Option<u64>>>(distances: I) -> Self {
        let mut profile = Self::default();
        for d in distances {
            match d {
                Some(d) => {
                    let idx = d as usize - 1;
                    if profile.finite.len() <= idx {
                        profile.finite.resize(idx + 1, 0);
                    }
                    profile.finite[idx] += 1;
                }
                None => profile.cold += 1,
            }
        }
        profile
    }

    /// Number of requests with stack distance `d` (`d >= 1`).
    pub fn count(&self, d: u64) -> u64 {
        d.checked_sub(1).and_then(|i| self.finite.get(i as usize)).copied().unwrap_or(0)
    }

    /// Requests with infinite stack distance (first requests).
    pub fn cold_misses(&self) -> u64 {
        self.cold
    }

    pub fn total_requests(&self) -> u64 {
        self.cold + self.finite.iter().sum::<u64>()
    }

    /// Largest finite distance observed, 0 if none.
    pub fn max_distance(&self) -> u64 {
        self.finite.len() as u64
    }

    /// Non-zero `(distance, count)` bins in increasing distance.
    pub fn finite_bins(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.finite.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u64 + 1, c))
    }

    /// LRU hits for a cache of `size` documents.
    pub fn hits_at(&self, size: u64) -> u64 {
        let upto = (size as usize).min(self.finite.len());
        self.finite[..upto].iter().sum()
    }

    /// Hit-ratio curve on a strictly ascending grid of cache sizes.
    /// `distinct_docs` scales the relative cache size.
    pub fn curve(&self, sizes: &[u64], distinct_docs: u64) -> Result<HitRatioCurve> {
        validate_sizes(sizes)?;
        let total = self.total_requests();
        if total == 0 {
            return Err(Error::EmptyTrace);
        }
        let mut cumulative = 0u64;
        let mut next_bin = 0usize;
        let points = sizes
            .iter()
            .map(|&size| {
                let upto = (size as usize).min(self.finite.len());
                while next_bin < upto {
                    cumulative += self.finite[next_bin];
                    next_bin += 1;
                }
                CurvePoint::new(size, distinct_docs, cumulative as f64 / total as f64)
            })
            .collect();
        Ok(HitRatioCurve { points, total_requests: total })
    }
}

pub fn stack_distances(trace: &Trace) -> StackDistanceProfile {
    StackDistanceProfile::from_distances(stack_distance_sequence(trace))
}

pub(crate) fn validate_sizes(sizes: &[u64]) -> Result<()> {
    if sizes.first() == Some(&0) {
        return Err(Error::InvalidArgument("cache sizes must be positive".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("cache sizes must be strictly ascending".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub cache_size: u64,
    /// `cache_size` divided by the number of distinct documents of the source.
    pub relative_size: f64,
    pub hit_ratio: f64,
}

impl CurvePoint {
    pub fn new(cache_size: u64, distinct_docs: u64, hit_ratio: f64) -> Self {
        let relative_size = if distinct_docs == 0 { 0.0 } else { cache_size as f64 / distinct_docs as f64 };
        Self { cache_size, relative_size, hit_ratio }
    }
}

/// Hit ratio as a function of cache size.
#[derive(Clone, Debug, PartialEq)]
pub struct HitRatioCurve {
    pub points: Vec<CurvePoint>,
    pub total_requests: u64,
}

impl HitRatioCurve {
    pub fn sizes(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.cache_size).collect()
    }

    pub fn hit_ratios(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.hit_ratio).collect()
    }

    /// CSV with header `cache_size,relative_size,hit_ratio`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cache_size,relative_size,hit_ratio")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.cache_size, sig6(p.relative_size), sig6(p.hit_ratio))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Formats a float with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-5..=15).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// Hit ratio curve from an exact one-pass stack-distance computation.
pub fn hit_ratio_curve(trace: &Trace, sizes: &[u64]) -> Result<HitRatioCurve> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    stack_distances(trace).curve(sizes, trace.distinct_docs() as u64)
}

/// Hit count of an explicit LRU list holding at most `size` documents.
/// Quadratic reference implementation used as a test oracle.
pub fn brute_force_lru(trace: &Trace, size: u64) -> u64 {
    let size = size as usize;
    let mut stack: VecDeque<u32> = VecDeque::with_capacity(size + 1);
    let mut hits = 0;
    for ev in trace.events() {
        let doc = ev.doc.0;
        if let Some(pos) = stack.iter().position(|&d| d == doc) {
            hits += 1;
            stack.remove(pos);
        } else if stack.len() == size {
            stack.pop_back();
        }
        if size > 0 {
            stack.push_front(doc);
        }
    }
    hits
}

/// Mean absolute relative error of `model` against `reference`.
pub fn mare(reference: &HitRatioCurve, model: &HitRatioCurve) -> Result<f64> {
    if reference.points.len() != model.points.len()
        || reference.points.iter().zip(&model.points).any(|(r, m)| r.cache_size != m.cache_size)
    {
        return Err(Error::GridMismatch);
    }
    if reference.points.is_empty() {
        return Err(Error::GridMismatch);
    }
    let mut sum = 0.0;
    for (r, m) in reference.points.iter().zip(&model.points) {
        if r.hit_ratio == 0.0 {
            return Err(Error::ZeroReference { cache_size: r.cache_size });
        }
        sum += (r.hit_ratio - m.hit_ratio).abs() / r.hit_ratio.abs();
    }
    Ok(sum / reference.points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Millis, ObservationWindow};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    fn seq(docs: &str) -> Trace {
        let names: Vec<String> = docs.chars().map(String::from).collect();
        Trace::from_named(
            names.iter().enumerate().map(|(i, d)| (i as Millis, d.as_str(), None)),
            ObservationWindow::new(names.len().max(1) as Millis).unwrap(),
        )
        .unwrap()
    }

    fn random_trace(seed: u64, len: usize, docs: u32) -> Trace {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..len).map(|_| format!("d{}", rng.random_range(0..docs))).collect();
        Trace::from_named(
            names.iter().enumerate().map(|(i, d)| (i as Millis, d.as_str(), None)),
            ObservationWindow::new(len as Millis).unwrap(),
        )
        .unwrap()
    }

    /// Quadratic scan: distinct documents since the previous request.
    fn naive_distances(trace: &Trace) -> Vec<Option<u64>> {
        let ev = trace.events();
        (0..ev.len())
            .map(|i| {
                let prev = (0..i).rev().find(|&j| ev[j].doc == ev[i].doc)?;
                let distinct: HashSet<_> = ev[prev + 1..i].iter().map(|e| e.doc).collect();
                Some(distinct.len() as u64 + 1)
            })
            .collect()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(stack_distance_sequence(&seq("ABA")), vec![None, None, Some(2)]);
        assert_eq!(stack_distance_sequence(&seq("AA")), vec![None, Some(1)]);
        assert_eq!(stack_distance_sequence(&seq("ABCBA")), vec![None, None, None, Some(2), Some(3)]);
    }

    #[test]
    fn distances_match_quadratic_scan() {
        let t = random_trace(7, 1_000, 60);
        assert_eq!(stack_distance_sequence(&t), naive_distances(&t));
        let p = stack_distances(&t);
        assert_eq!(p.total_requests(), 1_000);
        assert_eq!(p.cold_misses(), t.distinct_docs() as u64);
    }

    #[test]
    fn curve_examples() {
        let c = hit_ratio_curve(&seq("ABA"), &[1, 2]).unwrap();
        assert_eq!(c.hit_ratios(), vec![0.0, 1.0 / 3.0]);
        assert_eq!(c.points[1].relative_size, 1.0);

        let t = random_trace(3, 500, 40);
        let n = t.distinct_docs() as u64;
        let c = hit_ratio_curve(&t, &[n, n + 10]).unwrap();
        for p in &c.points {
            assert!((p.hit_ratio - (1.0 - n as f64 / 500.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn curve_matches_brute_force() {
        let t = random_trace(11, 10_000, 200);
        let sizes: Vec<u64> = (1..=50).collect();
        let c = hit_ratio_curve(&t, &sizes).unwrap();
        for p in &c.points {
            let hits = brute_force_lru(&t, p.cache_size);
            assert_eq!((p.hit_ratio * 10_000.0).round() as u64, hits, "C = {}", p.cache_size);
        }
    }

    #[test]
    fn curve_errors() {
        assert!(matches!(hit_ratio_curve(&seq(""), &[1]), Err(Error::EmptyTrace)));
        assert!(matches!(hit_ratio_curve(&seq("AB"), &[2, 1]), Err(Error::InvalidArgument(_))));
        assert!(matches!(hit_ratio_curve(&seq("AB"), &[0, 1]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_lru(&seq("ABA"), 2), 1);
        assert_eq!(brute_force_lru(&seq("ABCA"), 2), 0);
        let t = random_trace(5, 300, 30);
        assert_eq!(brute_force_lru(&t, t.distinct_docs() as u64), 300 - t.distinct_docs() as u64);
    }

    #[test]
    fn simultaneous_repeat_is_a_hit() {
        let t = Trace::from_named([(5, "a", None), (5, "a", None)], ObservationWindow::new(5).unwrap()).unwrap();
        assert_eq!(stack_distance_sequence(&t), vec![None, Some(1)]);
    }

    fn curve(values: &[(u64, f64)]) -> HitRatioCurve {
        HitRatioCurve { points: values.iter().map(|&(c, h)| CurvePoint::new(c, 100, h)).collect(), total_requests: 1 }
    }

    #[test]
    fn mare_examples() {
        let a = curve(&[(1, 0.5), (2, 0.2)]);
        assert_eq!(mare(&a, &a).unwrap(), 0.0);
        let m = mare(&curve(&[(1, 0.5)]), &curve(&[(1, 0.4)])).unwrap();
        assert!((m - 0.2).abs() < 1e-12);
        let m = mare(&a, &curve(&[(1, 0.45), (2, 0.25)])).unwrap();
        assert!((m - 0.175).abs() < 1e-12);
    }

    #[test]
    fn mare_errors() {
        let a = curve(&[(1, 0.5), (2, 0.2)]);
        assert!(matches!(mare(&a, &curve(&[(1, 0.5), (3, 0.2)])), Err(Error::GridMismatch)));
        assert!(matches!(mare(&a, &curve(&[(1, 0.5)])), Err(Error::GridMismatch)));
        assert!(matches!(mare(&curve(&[(1, 0.0), (2, 0.2)]), &a), Err(Error::ZeroReference { cache_size: 1 })));
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
        assert_eq!(sig6(123.456789), "123.457");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.000123456789), "0.000123457");
    }

    proptest! {
        #[test]
        fn stack_curve_equals_brute_force(docs in prop::collection::vec(0u8..8, 1..80), size in 1u64..10) {
            let names: String = docs.iter().map(|d| (b'a' + d) as char).collect();
            let t = seq(&names);
            prop_assert_eq!(stack_distances(&t).hits_at(size), brute_force_lru(&t, size));
        }

        #[test]
        fn curve_is_monotone(docs in prop::collection::vec(0u8..10, 1..80)) {
            let names: String = docs.iter().map(|d| (b'a' + d) as char).collect();
            let c = hit_ratio_curve(&seq(&names), &(1..=12).collect::<Vec<_>>()).unwrap();
            prop_assert!(c.points.windows(2).all(|w| w[0].hit_ratio <= w[1].hit_ratio));
        }

        #[test]
        fn curve_depends_on_order_only(docs in prop::collection::vec(0u8..8, 1..50), gaps in prop::collection::vec(0u64..1_000, 50)) {
            let names: Vec<String> = docs.iter().map(|d| format!("{d}")).collect();
            let mut t = 0;
            let stretched: Vec<(Millis, &str, Option<&str>)> = names.iter().zip(&gaps).map(|(d, g)| { t += g; (t, d.as_str(), None) }).collect();
            let a = Trace::from_named(stretched, ObservationWindow::new(60_000).unwrap()).unwrap();
            let b = Trace::from_named(names.iter().enumerate().map(|(i, d)| (i as Millis, d.as_str(), None)), ObservationWindow::new(60_000).unwrap()).unwrap();
            let sizes: Vec<u64> = (1..=9).collect();
            prop_assert_eq!(hit_ratio_curve(&a, &sizes).unwrap(), hit_ratio_curve(&b, &sizes).unwrap());
        }
    }
}
