//! Trace randomizations that destroy one correlation structure at a time,
//! and the harness comparing their hit-ratio curves with the original.
//!
//! * global: every request gets an independent uniform time in `[0, A]`;
//!   only per-document request counts survive.
//! * positional: each document's block of requests is shifted as a whole to
//!   a uniform position in the window; inter-arrival times survive.
//! * local: each document keeps its first and last request times, interior
//!   requests are redrawn uniformly in between.
//!
//! Every document draws from its own stream, seeded from the root seed and a
//! stable hash of the document name, so the result does not depend on the
//! order in which documents are visited.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lru::{mare, stack_distances, HitRatioCurve};
use crate::seed::Seed;
use crate::trace::{Millis, RequestEvent, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RandomizationKind {
    Global,
    Positional,
    Local,
}

impl RandomizationKind {
    pub const ALL: [RandomizationKind; 3] =
        [RandomizationKind::Global, RandomizationKind::Positional, RandomizationKind::Local];

    pub fn name(self) -> &'static str {
        match self {
            RandomizationKind::Global => "global",
            RandomizationKind::Positional => "positional",
            RandomizationKind::Local => "local",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            RandomizationKind::Global => 0x676c_6f62,
            RandomizationKind::Positional => 0x706f_7369,
            RandomizationKind::Local => 0x6c6f_6361,
        }
    }
}

impl fmt::Display for RandomizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RandomizationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(RandomizationKind::Global),
            "positional" => Ok(RandomizationKind::Positional),
            "local" => Ok(RandomizationKind::Local),
            _ => Err(Error::InvalidArgument(format!("unknown randomization {s:?}"))),
        }
    }
}

/// Applies `kind` to `trace`.
pub fn randomize(trace: &Trace, kind: RandomizationKind, seed: Seed) -> Trace {
    let window = trace.window().length();
    let root = seed.derive(kind.stream_tag());
    let events = trace.events();
    let mut times: Vec<Millis> = events.iter().map(|e| e.timestamp).collect();
    for (doc, indices) in trace.indices_by_doc().into_iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let name = trace.doc_interner().name(doc as u32);
        let mut rng = root.derive_str(name).rng();
        match kind {
            RandomizationKind::Global => redraw_global(&mut rng, &indices, &mut times, window),
            RandomizationKind::Positional => shift_block(&mut rng, &indices, &mut times, window),
            RandomizationKind::Local => redraw_interior(&mut rng, &indices, &mut times),
        }
    }
    // ties keep the original request order
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| times[i]);
    let shuffled = order.into_iter().map(|i| RequestEvent { timestamp: times[i], ..events[i] }).collect();
    trace.with_events(shuffled, trace.window()).expect("randomized timestamps stay inside the window")
}

fn redraw_global(rng: &mut ChaCha8Rng, indices: &[usize], times: &mut [Millis], window: Millis) {
    for &i in indices {
        times[i] = rng.random_range(0..=window);
    }
}

fn shift_block(rng: &mut ChaCha8Rng, indices: &[usize], times: &mut [Millis], window: Millis) {
    let first = times[indices[0]];
    let last = times[*indices.last().unwrap()];
    let offset = rng.random_range(0..=window - (last - first));
    for &i in indices {
        times[i] = offset + (times[i] - first);
    }
}

fn redraw_interior(rng: &mut ChaCha8Rng, indices: &[usize], times: &mut [Millis]) {
    if indices.len() <= 2 {
        return;
    }
    let first = times[indices[0]];
    let last = times[*indices.last().unwrap()];
    if first == last {
        return;
    }
    for &i in &indices[1..indices.len() - 1] {
        times[i] = rng.random_range(first..=last);
    }
}

pub fn randomize_global(trace: &Trace, seed: Seed) -> Trace {
    randomize(trace, RandomizationKind::Global, seed)
}

pub fn randomize_positional(trace: &Trace, seed: Seed) -> Trace {
    randomize(trace, RandomizationKind::Positional, seed)
}

pub fn randomize_local(trace: &Trace, seed: Seed) -> Trace {
    randomize(trace, RandomizationKind::Local, seed)
}

/// Hit-ratio curves of a trace and of its three randomizations on a shared
/// grid, with the MARE of each randomization against the original.
#[derive(Clone, Debug)]
pub struct SemiExperimentReport {
    pub original: HitRatioCurve,
    pub randomized: BTreeMap<RandomizationKind, HitRatioCurve>,
    pub mare_values: BTreeMap<RandomizationKind, f64>,
}

impl SemiExperimentReport {
    /// CSV with header `kind,cache_size,relative_size,hit_ratio`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        use crate::lru::sig6;
        writeln!(out, "kind,cache_size,relative_size,hit_ratio")?;
        let curves =
            std::iter::once(("original", &self.original)).chain(self.randomized.iter().map(|(k, c)| (k.name(), c)));
        for (kind, curve) in curves {
            for p in &curve.points {
                writeln!(out, "{kind},{},{},{}", p.cache_size, sig6(p.relative_size), sig6(p.hit_ratio))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_semi_experiments(trace: &Trace, sizes: &[u64], seed: Seed) -> Result<SemiExperimentReport> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let distinct = trace.distinct_docs() as u64;
    let original = stack_distances(trace).curve(sizes, distinct)?;
    let mut randomized = BTreeMap::new();
    let mut mare_values = BTreeMap::new();
    for kind in RandomizationKind::ALL {
        let shuffled = randomize(trace, kind, seed);
        let curve = stack_distances(&shuffled).curve(sizes, distinct)?;
        mare_values.insert(kind, mare(&original, &curve)?);
        randomized.insert(kind, curve);
    }
    Ok(SemiExperimentReport { original, randomized, mare_values })
}
