//! Trace data model, CSV ingestion, session consolidation and sub-trace
//! extraction.
//!
//! Time is kept as integer milliseconds relative to the start of the
//! observation window. Document and user identifiers are interned into dense
//! integer ids; the id-to-name tables are shared (`Arc`) between a trace and
//! every trace derived from it, so randomized or re-based copies are cheap.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Integer milliseconds since the start of the observation window.
pub type Millis = u64;

/// Default inter-request gap below which requests of one user to one
/// document are merged into a single session (8 minutes).
pub const DEFAULT_SESSION_GAP_MS: Millis = 480_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DocId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u32);

impl DocId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestEvent {
    pub timestamp: Millis,
    pub doc: DocId,
    pub user: Option<UserId>,
}

/// Length `A` of the observation window. Always positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ObservationWindow {
    length: Millis,
}

impl ObservationWindow {
    pub fn new(length: Millis) -> Result<Self> {
        if length == 0 {
            return Err(Error::Range("observation window length must be positive".into()));
        }
        Ok(Self { length })
    }

    pub fn length(self) -> Millis {
        self.length
    }
}

/// Bidirectional map between identifier strings and dense ids.
#[derive(Clone, Debug, Default)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("more than u32::MAX identifiers");
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// A time-ordered sequence of requests observed over a window.
///
/// Events are sorted by timestamp; events sharing a timestamp keep the order
/// in which they were supplied.
#[derive(Clone, Debug)]
pub struct Trace {
    events: Vec<RequestEvent>,
    window: ObservationWindow,
    docs: Arc<Interner>,
    users: Arc<Interner>,
}

impl Trace {
    /// Builds a trace from events whose ids refer to the given interners.
    /// Events are stably sorted by timestamp.
    pub fn from_events(
        mut events: Vec<RequestEvent>,
        window: ObservationWindow,
        docs: Arc<Interner>,
        users: Arc<Interner>,
    ) -> Result<Self> {
        for (i, ev) in events.iter().enumerate() {
            if ev.timestamp > window.length() {
                return Err(Error::Range(format!(
                    "event {i} at {} ms lies outside the window of {} ms",
                    ev.timestamp,
                    window.length()
                )));
            }
            if ev.doc.index() >= docs.len() {
                return Err(Error::InvalidArgument(format!("event {i} has an unknown document id")));
            }
            if matches!(ev.user, Some(u) if u.0 as usize >= users.len()) {
                return Err(Error::InvalidArgument(format!("event {i} has an unknown user id")));
            }
        }
        events.sort_by_key(|e| e.timestamp);
        Ok(Self { events, window, docs, users })
    }

    /// Builds a trace from `(timestamp, doc, user)` tuples with string ids.
    pub fn from_named<'a, I>(records: I, window: ObservationWindow) -> Result<Self>
    where
        I: IntoIterator<Item = (Millis, &'a str, Option<&'a str>)>,
    {
        let mut docs = Interner::new();
        let mut users = Interner::new();
        let events = records
            .into_iter()
            .map(|(timestamp, doc, user)| RequestEvent {
                timestamp,
                doc: DocId(docs.intern(doc)),
                user: user.map(|u| UserId(users.intern(u))),
            })
            .collect();
        Self::from_events(events, window, Arc::new(docs), Arc::new(users))
    }

    /// A trace over the same identifier tables with different events.
    pub fn with_events(&self, events: Vec<RequestEvent>, window: ObservationWindow) -> Result<Self> {
        Self::from_events(events, window, Arc::clone(&self.docs), Arc::clone(&self.users))
    }

    pub fn events(&self) -> &[RequestEvent] {
        &self.events
    }

    pub fn window(&self) -> ObservationWindow {
        self.window
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn doc_interner(&self) -> &Interner {
        &self.docs
    }

    pub fn user_interner(&self) -> &Interner {
        &self.users
    }

    pub fn doc_name(&self, doc: DocId) -> &str {
        self.docs.name(doc.0)
    }

    /// Size of the document id space (may exceed the number of documents
    /// actually requested in this trace).
    pub fn doc_capacity(&self) -> usize {
        self.docs.len()
    }

    /// Number of distinct documents requested in this trace.
    pub fn distinct_docs(&self) -> usize {
        self.request_counts().iter().filter(|&&n| n > 0).count()
    }

    /// Request count per document id.
    pub fn request_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.docs.len()];
        for ev in &self.events {
            counts[ev.doc.index()] += 1;
        }
        counts
    }

    /// Event indices grouped by document id, each group in trace order.
    pub fn indices_by_doc(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.docs.len()];
        for (i, ev) in self.events.iter().enumerate() {
            groups[ev.doc.index()].push(i);
        }
        groups
    }

    /// Writes the trace in the same CSV format accepted by [`parse_trace`].
    /// The user column is emitted only when some event carries a user.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let with_users = self.events.iter().any(|e| e.user.is_some());
        if with_users {
            writeln!(out, "timestamp_ms,doc_id,user_id")?;
        } else {
            writeln!(out, "timestamp_ms,doc_id")?;
        }
        for ev in &self.events {
            let doc = csv_field(self.doc_name(ev.doc));
            if with_users {
                let user = ev.user.map(|u| csv_field(self.users.name(u.0))).unwrap_or_default();
                writeln!(out, "{},{},{}", ev.timestamp, doc, user)?;
            } else {
                writeln!(out, "{},{}", ev.timestamp, doc)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Parses a CSV trace with header `timestamp_ms,doc_id` or
/// `timestamp_ms,doc_id,user_id`.
///
/// When `window_length` is `None` the window is the largest timestamp (at
/// least 1 ms, since windows are never empty).
pub fn parse_trace<R: Read>(reader: R, window_length: Option<Millis>) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let header: Vec<&str> = headers.iter().map(str::trim).collect();
    let has_users = match header.as_slice() {
        ["timestamp_ms", "doc_id"] => false,
        ["timestamp_ms", "doc_id", "user_id"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
            })
        }
    };

    let mut docs = Interner::new();
    let mut users = Interner::new();
    let mut events = Vec::new();
    let mut max_ts = 0;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::Parse { line, message: e.to_string() });
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ts_field = record.get(0).map(str::trim).unwrap_or("");
        let timestamp: Millis = ts_field.parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp {ts_field:?} is not a non-negative integer"),
        })?;
        let doc = record.get(1).map(str::trim).unwrap_or("");
        if doc.is_empty() {
            return Err(Error::Parse { line, message: "missing doc_id".into() });
        }
        let user = if has_users { record.get(2).map(str::trim).filter(|u| !u.is_empty()) } else { None };
        if let Some(limit) = window_length {
            if timestamp > limit {
                return Err(Error::Range(format!(
                    "line {line}: timestamp {timestamp} exceeds the window of {limit} ms"
                )));
            }
        }
        max_ts = max_ts.max(timestamp);
        events.push(RequestEvent {
            timestamp,
            doc: DocId(docs.intern(doc)),
            user: user.map(|u| UserId(users.intern(u))),
        });
    }
    let window = ObservationWindow::new(window_length.unwrap_or(max_ts.max(1)))?;
    Trace::from_events(events, window, Arc::new(docs), Arc::new(users))
}

/// Collapses, per `(user, document)` pair, every maximal run of requests
/// whose consecutive inter-arrival times are below `gap_threshold` into a
/// single request at the run's first timestamp.
pub fn consolidate_sessions(trace: &Trace, gap_threshold: Millis) -> Result<Trace> {
    let mut last_seen: HashMap<(UserId, DocId), Millis> = HashMap::new();
    let mut kept = Vec::with_capacity(trace.len());
    for (index, ev) in trace.events().iter().enumerate() {
        let user = ev.user.ok_or(Error::MissingUser { index })?;
        match last_seen.insert((user, ev.doc), ev.timestamp) {
            Some(prev) if ev.timestamp - prev < gap_threshold => {}
            _ => kept.push(*ev),
        }
    }
    trace.with_events(kept, trace.window())
}

/// The sub-trace of length `duration` containing the most requests.
///
/// Candidate windows are `[s, s + duration]` for every event timestamp `s`;
/// the earliest maximiser wins. Timestamps are re-based so the window starts
/// at 0.
pub fn extract_subtrace(trace: &Trace, duration: Millis) -> Result<Trace> {
    if duration == 0 || duration > trace.window().length() {
        return Err(Error::Range(format!(
            "sub-trace duration {duration} ms must lie in (0, {}]",
            trace.window().length()
        )));
    }
    let window = ObservationWindow::new(duration)?;
    let events = trace.events();
    let mut best = (0usize, 0usize);
    let mut end = 0;
    for start in 0..events.len() {
        if start > 0 && events[start].timestamp == events[start - 1].timestamp {
            continue;
        }
        let limit = events[start].timestamp + duration;
        end = end.max(start);
        while end < events.len() && events[end].timestamp <= limit {
            end += 1;
        }
        if end - start > best.1 - best.0 {
            best = (start, end);
        }
    }
    let (lo, hi) = best;
    let base = events.get(lo).map_or(0, |e| e.timestamp);
    let rebased = events[lo..hi].iter().map(|e| RequestEvent { timestamp: e.timestamp - base, ..*e }).collect();
    trace.with_events(rebased, window)
}

/// Catalog-level request counts of a trace.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TraceSummary {
    pub total_requests: u64,
    /// Distinct documents `N`.
    pub distinct_docs: u64,
    /// Documents requested exactly once (`N1`).
    pub docs_single_request: u64,
    /// Documents requested at least twice (`N2`).
    pub docs_multi_request: u64,
    /// Mean request count over documents with at least two requests; 0 when
    /// there are none.
    pub mean_requests_multi: f64,
}

pub fn trace_stats(trace: &Trace) -> TraceSummary {
    let mut summary = TraceSummary {
        total_requests: trace.len() as u64,
        distinct_docs: 0,
        docs_single_request: 0,
        docs_multi_request: 0,
        mean_requests_multi: 0.0,
    };
    let mut multi_requests = 0u64;
    for n in trace.request_counts() {
        match n {
            0 => {}
            1 => summary.docs_single_request += 1,
            _ => {
                summary.docs_multi_request += 1;
                multi_requests += n;
            }
        }
    }
    summary.distinct_docs = summary.docs_single_request + summary.docs_multi_request;
    if summary.docs_multi_request > 0 {
        summary.mean_requests_multi = multi_requests as f64 / summary.docs_multi_request as f64;
    }
    summary
}
