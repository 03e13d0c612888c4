//! Append-only event log, stored as newline-delimited JSON (`.hclog`).
//!
//! The first line is a [`LogHeader`]; every following line is one
//! [`EventRecord`] with `seq`, `t` and a `kind`-tagged payload.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::events::EventKind;
use crate::metrics::Visualization;
use crate::params::DynamicsParams;
use crate::probe::{Respondent, SaLevel};
use crate::scenario::TrialComponentConfig;
use crate::sim::ModelKind;

pub const SCHEMA_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "hclog";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: u32,
    pub seed: u64,
    pub model: ModelKind,
    pub view: Visualization,
    pub config_hash: String,
    /// Levels of the probes asked in this component, in order.
    pub probe_levels: Vec<SaLevel>,
    pub respondent: Respondent,
    pub params: DynamicsParams,
    pub config: TrialComponentConfig,
}

impl LogHeader {
    pub fn new(
        config: TrialComponentConfig,
        model: ModelKind,
        params: DynamicsParams,
        seed: u64,
        view: Visualization,
        probe_levels: Vec<SaLevel>,
        respondent: Respondent,
    ) -> LogHeader {
        LogHeader {
            schema: SCHEMA_VERSION,
            seed,
            model,
            view,
            config_hash: config_hash(&config),
            probe_levels,
            respondent,
            params,
            config,
        }
    }
}

/// Hex SHA-256 of the config's canonical TOML form.
pub fn config_hash(config: &TrialComponentConfig) -> String {
    hex::encode(Sha256::digest(config.to_toml_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub t: f64,
    #[serde(flatten)]
    pub event: EventKind,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event records always serialize")
    }

    pub fn parse_line(line: &str) -> Result<EventRecord> {
        Ok(serde_json::from_str(line)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(header: LogHeader) -> EventLog {
        EventLog { header, records: Vec::new() }
    }

    /// Appends `event` at time `t` with the next sequence number.
    pub fn append(&mut self, t: f64, event: EventKind) -> Result<&EventRecord> {
        let seq = self.records.len() as u64;
        self.append_record(EventRecord { seq, t, event })?;
        Ok(self.records.last().expect("just pushed"))
    }

    /// Appends a pre-numbered record, enforcing gapless `seq` and
    /// non-decreasing `t`.
    pub fn append_record(&mut self, record: EventRecord) -> Result<()> {
        let expected = self.records.len() as u64;
        if record.seq != expected {
            return Err(Error::Corruption { seq: record.seq, reason: format!("expected seq {expected}") });
        }
        if !record.t.is_finite() {
            return Err(Error::Corruption { seq: record.seq, reason: "non-finite time".into() });
        }
        if let Some(last) = self.records.last() {
            if record.t < last.t {
                return Err(Error::Corruption {
                    seq: record.seq,
                    reason: format!("time {} before previous {}", record.t, last.t),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(&self.header).expect("headers always serialize")
    }

    pub fn to_text(&self) -> String {
        let mut s = self.header_line();
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        s
    }

    /// Parses a complete log. A final line cut off mid-write (no trailing
    /// newline and not valid JSON) is dropped; any other bad line is an
    /// error.
    pub fn parse(text: &str) -> Result<EventLog> {
        let mut lines = text.split_inclusive('\n').enumerate();
        let (_, first) = lines.next().ok_or_else(|| Error::Parse { line: 1, reason: "empty log".into() })?;
        let header: LogHeader = serde_json::from_str(first.trim_end())
            .map_err(|e| Error::Parse { line: 1, reason: format!("bad header: {e}") })?;
        if header.schema != SCHEMA_VERSION {
            return Err(Error::Parse { line: 1, reason: format!("unsupported schema {}", header.schema) });
        }
        let mut log = EventLog::new(header);
        for (i, raw) in lines {
            let line = raw.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            match EventRecord::parse_line(line) {
                Ok(r) => log.append_record(r)?,
                Err(_) if !raw.ends_with('\n') => break,
                Err(e) => return Err(Error::Parse { line: i + 1, reason: e.to_string() }),
            }
        }
        Ok(log)
    }

    pub fn read_file(path: &Path) -> Result<EventLog> {
        EventLog::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Streams records to disk as they are appended, flushing at decision
/// boundaries.
pub struct LogSink {
    out: BufWriter<File>,
    written: usize,
}

impl LogSink {
    pub fn create(path: &Path, log: &EventLog) -> Result<LogSink> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", log.header_line())?;
        out.flush()?;
        Ok(LogSink { out, written: 0 })
    }

    /// Writes every record not yet on disk.
    pub fn sync(&mut self, log: &EventLog) -> Result<()> {
        let mut boundary = false;
        for r in &log.records[self.written..] {
            writeln!(self.out, "{}", r.to_line())?;
            boundary |= r.event.is_decision_boundary();
        }
        self.written = log.records.len();
        if boundary {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self, log: &EventLog) -> Result<()> {
        self.sync(log)?;
        self.out.flush()?;
        Ok(())
    }
}
