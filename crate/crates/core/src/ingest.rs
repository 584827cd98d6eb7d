//! Event log loading and tabulation of empirical joint distributions.
//!
//! Logs are line-delimited JSON, one `{"id": str, "behaviors": {name: 0|1}}`
//! object per line. Blank lines are skipped.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{Assignment, Scope};
use crate::network::NetworkSpec;
pub use crate::table::{JointTable, TableError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("non-binary value at line {line}: {name} = {value}")]
    NonBinary {
        line: usize,
        name: String,
        value: String,
    },
    #[error("unknown behavior {name:?} at line {line}")]
    UnknownBehavior { line: usize, name: String },
    #[error("missing behavior {name:?} at line {line}")]
    MissingBehavior { line: usize, name: String },
    #[error("cannot tabulate an empty event stream")]
    Empty,
    #[error("smoothing must be a finite nonnegative number, got {0}")]
    InvalidSmoothing(f64),
}

impl IngestError {
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Malformed { line, .. }
            | IngestError::NonBinary { line, .. }
            | IngestError::UnknownBehavior { line, .. }
            | IngestError::MissingBehavior { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// One impression and the behaviors observed on it. `behaviors` covers the
/// observed nodes of the network the record was read against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub id: String,
    pub behaviors: Assignment,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    behaviors: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    behaviors: BTreeMap<&'a str, u8>,
}

/// What to do with an observed behavior a record leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingBehaviors {
    Reject,
    /// Treat as not performed.
    Zero,
    /// Leave out of the assignment, so inference sums over it.
    Marginalize,
}

/// Parses one log line (1-based `line` for messages).
pub fn parse_event_line(
    text: &str,
    line: usize,
    spec: &NetworkSpec,
    missing: MissingBehaviors,
) -> Result<EventRecord, IngestError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| IngestError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let mut behaviors = Assignment::empty();
    for (name, value) in &raw.behaviors {
        let id = match spec.id(name) {
            Some(id) if id != spec.latent() => id,
            _ => {
                return Err(IngestError::UnknownBehavior {
                    line,
                    name: name.clone(),
                })
            }
        };
        let bit = match value.as_u64() {
            Some(0) => false,
            Some(1) => true,
            _ => {
                return Err(IngestError::NonBinary {
                    line,
                    name: name.clone(),
                    value: value.to_string(),
                })
            }
        };
        behaviors.set(id, bit);
    }
    for id in spec.observed() {
        if !behaviors.contains(id) {
            match missing {
                MissingBehaviors::Reject => {
                    return Err(IngestError::MissingBehavior {
                        line,
                        name: spec.name(id).to_owned(),
                    })
                }
                MissingBehaviors::Zero => behaviors.set(id, false),
                MissingBehaviors::Marginalize => {}
            }
        }
    }
    Ok(EventRecord {
        id: raw.id,
        behaviors,
    })
}

/// Streams records from a log file in file order.
pub struct EventReader<'s, R> {
    lines: io::Lines<R>,
    line: usize,
    spec: &'s NetworkSpec,
    missing: MissingBehaviors,
    path: PathBuf,
}

impl<R: BufRead> Iterator for EventReader<'_, R> {
    type Item = Result<EventRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(source) => {
                    return Some(Err(IngestError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_event_line(&text, self.line, self.spec, self.missing));
        }
    }
}

pub fn load_events<'s>(
    path: &Path,
    spec: &'s NetworkSpec,
    missing: MissingBehaviors,
) -> Result<EventReader<'s, BufReader<File>>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(read_events(BufReader::new(file), path, spec, missing))
}

pub fn read_events<'s, R: BufRead>(
    reader: R,
    origin: &Path,
    spec: &'s NetworkSpec,
    missing: MissingBehaviors,
) -> EventReader<'s, R> {
    EventReader {
        lines: reader.lines(),
        line: 0,
        spec,
        missing,
        path: origin.to_owned(),
    }
}

pub fn write_event<W: Write>(out: &mut W, record: &EventRecord, spec: &NetworkSpec) -> io::Result<()> {
    let behaviors = record
        .behaviors
        .iter()
        .map(|(n, v)| (spec.name(n), u8::from(v)))
        .collect();
    serde_json::to_writer(
        &mut *out,
        &RecordOut {
            id: &record.id,
            behaviors,
        },
    )?;
    out.write_all(b"\n")
}

/// Event counts per assignment of the observed nodes. Merging is associative
/// and commutative, so partitions of a stream can be counted independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    scope: Scope,
    counts: Vec<u64>,
    total: u64,
}

impl CountTable {
    pub fn new(scope: Scope) -> Self {
        CountTable {
            counts: vec![0; scope.cells()],
            scope,
            total: 0,
        }
    }

    pub fn for_spec(spec: &NetworkSpec) -> Self {
        Self::new(spec.observed_scope())
    }

    pub fn add_state(&mut self, state: u32) {
        self.counts[self.scope.index_of(state)] += 1;
        self.total += 1;
    }

    pub fn add(&mut self, record: &EventRecord) {
        self.add_state(record.behaviors.values_mask());
    }

    pub fn merge(&mut self, other: &CountTable) {
        assert_eq!(self.scope, other.scope, "merging count tables over different scopes");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Add-`smoothing` estimate `(count + λ) / (N + λ 2^m)`.
    pub fn to_table(&self, smoothing: f64) -> Result<JointTable, IngestError> {
        if !smoothing.is_finite() || smoothing < 0.0 {
            return Err(IngestError::InvalidSmoothing(smoothing));
        }
        if self.total == 0 {
            return Err(IngestError::Empty);
        }
        let denom = self.total as f64 + smoothing * self.scope.cells() as f64;
        let probs = self
            .counts
            .iter()
            .map(|&c| (c as f64 + smoothing) / denom)
            .collect();
        Ok(JointTable::new(self.scope.clone(), probs, self.total)
            .expect("counts always give a normalized table"))
    }
}

/// Tabulates the empirical joint of the observed nodes.
pub fn tabulate_joint<I>(events: I, spec: &NetworkSpec, smoothing: f64) -> Result<JointTable, IngestError>
where
    I: IntoIterator<Item = EventRecord>,
{
    let mut counts = CountTable::for_spec(spec);
    for record in events {
        counts.add(&record);
    }
    counts.to_table(smoothing)
}

/// Like [`tabulate_joint`] over a fallible stream, stopping at the first error.
pub fn tabulate_results<I>(events: I, spec: &NetworkSpec, smoothing: f64) -> Result<JointTable, IngestError>
where
    I: IntoIterator<Item = Result<EventRecord, IngestError>>,
{
    let mut counts = CountTable::for_spec(spec);
    for record in events {
        counts.add(&record?);
    }
    counts.to_table(smoothing)
}
