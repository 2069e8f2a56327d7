//! Observation records and their line-delimited JSON stream format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{FbtError, Result};
use crate::gateset::GateSequence;

/// One measured sequence.
///
/// `effect` names a non-native measurement effect (`None` = native). Records
/// sharing a `group` are linearized at the same point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub sequence: GateSequence,
    pub freq: f64,
    pub shots: u32,
    #[serde(default)]
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u64>,
}

impl ObservationRecord {
    pub fn new(sequence: GateSequence, freq: f64, shots: u32) -> Self {
        ObservationRecord {
            sequence,
            freq,
            shots,
            t: 0.0,
            batch: None,
            effect: None,
            group: None,
        }
    }

    /// Record from an outcome count.
    pub fn from_counts(sequence: GateSequence, hits: u32, shots: u32) -> Self {
        ObservationRecord::new(sequence, hits as f64 / shots as f64, shots)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(FbtError::field("shots", "must be at least 1"));
        }
        if !self.freq.is_finite() || !(0.0..=1.0).contains(&self.freq) {
            return Err(FbtError::field("freq", format!("{} is not in [0, 1]", self.freq)));
        }
        let hits = self.freq * self.shots as f64;
        if (hits - hits.round()).abs() > 1e-9 * self.shots.max(1) as f64 {
            return Err(FbtError::field(
                "freq",
                format!("freq * shots = {hits} is not an integer count"),
            ));
        }
        if !self.t.is_finite() {
            return Err(FbtError::field("t", "non-finite timestamp"));
        }
        Ok(())
    }
}

pub fn parse_record(line: &str) -> Result<ObservationRecord> {
    let rec: ObservationRecord = crate::error::parse_json(line)?;
    rec.validate()?;
    Ok(rec)
}

/// Reads one record per non-blank line. Errors are prefixed with the line
/// number.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ObservationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line).map_err(|e| match e {
            FbtError::Field { path, message } => FbtError::Field {
                path: format!("line {}: {}", i + 1, path),
                message,
            },
            other => other,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut writer: W, records: &[ObservationRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
