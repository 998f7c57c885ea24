//! Cache-size grid specifications.
//!
//! Grammar (`max` stands for the number of distinct documents):
//!
//! ```text
//! log:<min>:<max>:<count>     log-spaced absolute sizes
//! lin:<min>:<max>:<count>     linearly spaced absolute sizes
//! rlog:<min>:<max>:<count>    log-spaced relative sizes in (0, 1]
//! list:<c1>,<c2>,...          explicit sizes (the `list:` prefix is optional)
//! ```
//!
//! Spaced grids resolve to exactly `count` strictly ascending integer sizes
//! whenever the range holds that many integers.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Value(f64),
    Max,
}

impl Bound {
    fn resolve(self, max: u64) -> f64 {
        match self {
            Bound::Value(v) => v,
            Bound::Max => max as f64,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Value(v) => write!(f, "{v}"),
            Bound::Max => f.write_str("max"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridSpec {
    Log { min: Bound, max: Bound, count: usize },
    Linear { min: Bound, max: Bound, count: usize },
    RelativeLog { min: f64, max: f64, count: usize },
    List(Vec<u64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Log { min: Bound::Value(1.0), max: Bound::Max, count: 40 }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Log { min, max, count } => write!(f, "log:{min}:{max}:{count}"),
            GridSpec::Linear { min, max, count } => write!(f, "lin:{min}:{max}:{count}"),
            GridSpec::RelativeLog { min, max, count } => write!(f, "rlog:{min}:{max}:{count}"),
            GridSpec::List(v) => {
                let items: Vec<String> = v.iter().map(u64::to_string).collect();
                write!(f, "list:{}", items.join(","))
            }
        }
    }
}

fn bad(spec: &str, why: &str) -> Error {
    Error::InvalidArgument(format!("grid spec {spec:?}: {why}"))
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_bound = |v: &str| -> Result<Bound> {
            if v == "max" {
                return Ok(Bound::Max);
            }
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x > 0.0)
                .map(Bound::Value)
                .ok_or_else(|| bad(s, "bounds must be positive numbers or `max`"))
        };
        let parse_count = |v: &str| -> Result<usize> {
            v.parse::<usize>().ok().filter(|&c| c > 0).ok_or_else(|| bad(s, "count must be a positive integer"))
        };
        let (kind, rest) = s.split_once(':').unwrap_or(("list", s));
        match kind {
            "log" | "lin" | "rlog" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let [lo, hi, n] = parts.as_slice() else {
                    return Err(bad(s, "expected <kind>:<min>:<max>:<count>"));
                };
                let count = parse_count(n)?;
                match kind {
                    "rlog" => {
                        let (Bound::Value(min), Bound::Value(max)) = (parse_bound(lo)?, parse_bound(hi)?) else {
                            return Err(bad(s, "relative bounds must be numbers"));
                        };
                        if min > max || max > 1.0 {
                            return Err(bad(s, "relative bounds must satisfy 0 < min <= max <= 1"));
                        }
                        Ok(GridSpec::RelativeLog { min, max, count })
                    }
                    "log" => Ok(GridSpec::Log { min: parse_bound(lo)?, max: parse_bound(hi)?, count }),
                    _ => Ok(GridSpec::Linear { min: parse_bound(lo)?, max: parse_bound(hi)?, count }),
                }
            }
            "list" => {
                let sizes = rest
                    .split(',')
                    .map(|v| v.trim().parse::<u64>().ok().filter(|&c| c > 0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad(s, "list entries must be positive integers"))?;
                if sizes.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(bad(s, "list must be strictly ascending"));
                }
                Ok(GridSpec::List(sizes))
            }
            _ => Err(bad(s, "unknown grid kind")),
        }
    }
}

impl GridSpec {
    /// Concrete cache sizes for a catalog of `distinct_docs` documents.
    pub fn resolve(&self, distinct_docs: u64) -> Result<Vec<u64>> {
        let (lo, hi, count, log) = match self {
            GridSpec::List(v) => return Ok(v.clone()),
            GridSpec::Log { min, max, count } => (min.resolve(distinct_docs), max.resolve(distinct_docs), *count, true),
            GridSpec::Linear { min, max, count } => {
                (min.resolve(distinct_docs), max.resolve(distinct_docs), *count, false)
            }
            GridSpec::RelativeLog { min, max, count } => {
                let n = distinct_docs as f64;
                (min * n, max * n, *count, true)
            }
        };
        let lo = lo.round().max(1.0);
        let hi = hi.round();
        if hi < lo {
            return Err(Error::InvalidArgument(format!("grid {self} is empty for {distinct_docs} distinct documents")));
        }
        Ok(spaced(lo as u64, hi as u64, count, log))
    }
}

/// `count` strictly ascending integers from `lo` to `hi`, spaced
/// logarithmically or linearly. Rounding collisions are pushed up, then
/// clamped back below `hi`; if the range holds fewer than `count` integers
/// all of them are returned.
pub fn spaced(lo: u64, hi: u64, count: usize, log: bool) -> Vec<u64> {
    let available = (hi - lo + 1) as usize;
    if available <= count {
        return (lo..=hi).collect();
    }
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo as f64, hi as f64);
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let f = i as f64 / (count - 1) as f64;
            let v = if log { a * (b / a).powf(f) } else { a + (b - a) * f };
            v.round() as u64
        })
        .collect();
    out[0] = lo;
    out[count - 1] = hi;
    for i in 1..count {
        out[i] = out[i].max(out[i - 1] + 1);
    }
    for i in (0..count - 1).rev() {
        out[i] = out[i].min(out[i + 1] - 1);
    }
    out
}
