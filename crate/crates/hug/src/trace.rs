//! Chain traces: the records saved along an annealing run and their
//! JSON-lines persistence (one header line, then one line per record).

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HugError, Result};
use crate::model::{HugStatistics, ThetaPrior};
use crate::sampler::{AnnealingSchedule, SamplerConfig};

/// First line of a trace file: everything needed to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub seed: u64,
    pub dims: usize,
    pub names: Vec<String>,
    pub interaction_radius: f64,
    pub prior: ThetaPrior,
    pub sampler: SamplerConfig,
    pub schedule: AnnealingSchedule,
}

/// One saved state of the chain. `plane` is the one-based selector that was
/// active when the record was taken; `stats_per_plane` holds the statistics
/// on every plane (`null` for planes with a degenerate data hull).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub temperature: f64,
    pub theta: [f64; 4],
    pub plane: usize,
    pub sources: Vec<Vec<f64>>,
    pub stats_per_plane: Vec<Option<HugStatistics>>,
}

/// A full annealing trace: header plus records at every `save_every`
/// multiple (including iteration 0, the initial configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl ChainTrace {
    /// The records used for inference: the last `keep_last` saved ones
    /// (all of them when the trace is shorter).
    pub fn kept(&self) -> &[TraceRecord] {
        let keep = self.header.schedule.keep_last.min(self.records.len());
        &self.records[self.records.len() - keep..]
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.header)
            .map_err(|e| HugError::data(format!("trace header encode: {e}")))?;
        writeln!(out)?;
        for record in &self.records {
            serde_json::to_writer(&mut out, record)
                .map_err(|e| HugError::data(format!("trace record encode: {e}")))?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| HugError::data("empty trace file"))??;
        let header: TraceHeader = serde_json::from_str(&header_line)
            .map_err(|e| HugError::data(format!("trace header line: {e}")))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(&line)
                .map_err(|e| HugError::data(format!("trace line {}: {e}", i + 2)))?;
            records.push(record);
        }
        if records.is_empty() {
            return Err(HugError::data("trace holds no records"));
        }
        Ok(ChainTrace { header, records })
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| HugError::data(format!("cannot open {}: {e}", path.display())))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| HugError::data(format!("cannot create {}: {e}", path.display())))?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }
}
