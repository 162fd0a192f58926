//! Event logs: sequences of `(symbol, wait)` records.
//!
//! On disk a log is either JSON lines, one `{"x": symbol, "t": wait}` object
//! per record, or CSV with header `symbol,wait`. Samplers that know the
//! hidden mode add it as an optional `"mode"` field / `mode` column.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventIoError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unknown symbol '{symbol}' on line {line}")]
    UnknownSymbol { line: usize, symbol: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub symbol: usize,
    pub wait: f64,
    /// Ground-truth mode in which the wait elapsed, when known.
    pub mode: Option<usize>,
    /// Trajectory the record belongs to in multi-trajectory logs.
    pub traj: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LogMetadata {
    pub generator: String,
    pub seed: u64,
    pub model_hash: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub alphabet: Vec<String>,
    pub records: Vec<EventRecord>,
    pub metadata: LogMetadata,
    /// Set when sampling stopped early (for example a trajectory whose
    /// survival never fell below the drawn threshold).
    pub truncated: bool,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord<'a> {
    x: std::borrow::Cow<'a, str>,
    t: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    traj: Option<usize>,
}

impl EventLog {
    pub fn new(alphabet: Vec<String>, metadata: LogMetadata) -> Self {
        EventLog {
            alphabet,
            records: Vec::new(),
            metadata,
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn symbol_name(&self, idx: usize) -> &str {
        &self.alphabet[idx]
    }

    pub fn waits(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.wait)
    }

    pub fn total_time(&self) -> f64 {
        self.waits().sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            let rec = JsonRecord {
                x: self.alphabet[r.symbol].as_str().into(),
                t: r.wait,
                mode: r.mode,
                traj: r.traj,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let with_mode = self.records.iter().any(|r| r.mode.is_some());
        let with_traj = self.records.iter().any(|r| r.traj.is_some());
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        match (with_mode, with_traj) {
            (_, true) => writeln!(w, "symbol,wait,mode,traj")?,
            (true, false) => writeln!(w, "symbol,wait,mode")?,
            _ => writeln!(w, "symbol,wait")?,
        }
        for r in &self.records {
            let wait = serde_json::to_string(&r.wait).map_err(std::io::Error::other)?;
            let name = &self.alphabet[r.symbol];
            match (with_mode, with_traj) {
                (_, true) => writeln!(w, "{name},{wait},{},{}", opt(r.mode), opt(r.traj))?,
                (true, false) => writeln!(w, "{name},{wait},{}", opt(r.mode))?,
                _ => writeln!(w, "{name},{wait}")?,
            }
        }
        Ok(())
    }

    /// Reads JSON lines. With an `alphabet`, symbols are resolved against it
    /// and unknown symbols are errors; otherwise the alphabet is built in
    /// order of first appearance.
    pub fn read_jsonl<R: BufRead>(r: R, alphabet: Option<&[String]>) -> Result<Self, EventIoError> {
        let mut builder = Builder::new(alphabet);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: JsonRecord =
                serde_json::from_str(&line).map_err(|source| EventIoError::Json {
                    line: i + 1,
                    source,
                })?;
            builder.push(i + 1, &rec.x, rec.t, rec.mode, rec.traj)?;
        }
        Ok(builder.finish())
    }

    pub fn read_csv<R: BufRead>(r: R, alphabet: Option<&[String]>) -> Result<Self, EventIoError> {
        let mut builder = Builder::new(alphabet);
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, header)) => {
                let header = header?;
                let cols: Vec<&str> = header.trim().split(',').collect();
                if cols.len() < 2 || cols[0] != "symbol" || cols[1] != "wait" {
                    return Err(EventIoError::Format {
                        line: 1,
                        msg: format!("expected header 'symbol,wait', got '{header}'"),
                    });
                }
            }
            None => return Ok(builder.finish()),
        }
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim().split(',').collect();
            let bad = |msg: String| EventIoError::Format { line: i + 1, msg };
            if cols.len() < 2 {
                return Err(bad(format!("expected at least two columns in '{line}'")));
            }
            let wait: f64 = cols[1]
                .parse()
                .map_err(|e| bad(format!("bad wait '{}': {e}", cols[1])))?;
            let optional = |k: usize, what: &str| -> Result<Option<usize>, EventIoError> {
                match cols.get(k) {
                    Some(v) if !v.is_empty() => v
                        .parse()
                        .map(Some)
                        .map_err(|e| bad(format!("bad {what} '{v}': {e}"))),
                    _ => Ok(None),
                }
            };
            let mode = optional(2, "mode")?;
            let traj = optional(3, "traj")?;
            builder.push(i + 1, cols[0], wait, mode, traj)?;
        }
        Ok(builder.finish())
    }
}

struct Builder {
    alphabet: Vec<String>,
    fixed: bool,
    records: Vec<EventRecord>,
}

impl Builder {
    fn new(alphabet: Option<&[String]>) -> Self {
        Builder {
            alphabet: alphabet.map(|a| a.to_vec()).unwrap_or_default(),
            fixed: alphabet.is_some(),
            records: Vec::new(),
        }
    }

    fn push(
        &mut self,
        line: usize,
        symbol: &str,
        wait: f64,
        mode: Option<usize>,
        traj: Option<usize>,
    ) -> Result<(), EventIoError> {
        if !(wait >= 0.0 && wait.is_finite()) {
            return Err(EventIoError::Format {
                line,
                msg: format!("wait {wait} is not a non-negative finite number"),
            });
        }
        let idx = match self.alphabet.iter().position(|s| s == symbol) {
            Some(i) => i,
            None if self.fixed => {
                return Err(EventIoError::UnknownSymbol {
                    line,
                    symbol: symbol.to_string(),
                })
            }
            None => {
                self.alphabet.push(symbol.to_string());
                self.alphabet.len() - 1
            }
        };
        self.records.push(EventRecord {
            symbol: idx,
            wait,
            mode,
            traj,
        });
        Ok(())
    }

    fn finish(self) -> EventLog {
        EventLog {
            alphabet: self.alphabet,
            records: self.records,
            metadata: LogMetadata::default(),
            truncated: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> EventLog {
        let mut log = EventLog::new(vec!["a".into(), "b".into()], LogMetadata::default());
        log.records = vec![
            EventRecord { symbol: 0, wait: 0.1, mode: None, traj: None },
            EventRecord { symbol: 1, wait: 2.5e-7, mode: Some(1), traj: Some(0) },
            EventRecord { symbol: 0, wait: 3.0, mode: None, traj: Some(1) },
        ];
        log
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let log = sample_log();
        let mut first = Vec::new();
        log.write_jsonl(&mut first).unwrap();
        assert_eq!(
            String::from_utf8(first.clone()).unwrap().lines().next().unwrap(),
            r#"{"x":"a","t":0.1}"#
        );
        let back = EventLog::read_jsonl(&first[..], Some(&log.alphabet)).unwrap();
        let mut second = Vec::new();
        back.write_jsonl(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(back.records, log.records);
    }

    #[test]
    fn csv_round_trip() {
        let log = sample_log();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("symbol,wait,mode,traj\n"));
        let back = EventLog::read_csv(&buf[..], None).unwrap();
        assert_eq!(back.records, log.records);
    }

    #[test]
    fn rejects_negative_wait_and_unknown_symbols() {
        let bad = br#"{"x":"a","t":-1.0}"#;
        assert!(EventLog::read_jsonl(&bad[..], None).is_err());
        let unknown = br#"{"x":"q","t":1.0}"#;
        let alphabet = vec!["a".to_string()];
        assert!(matches!(
            EventLog::read_jsonl(&unknown[..], Some(&alphabet)),
            Err(EventIoError::UnknownSymbol { .. })
        ));
    }
}
