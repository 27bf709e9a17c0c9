//! Step-level trace records and their JSON-Lines encoding.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::observe::Telemetry;
use super::state::TrafficLabel;
use crate::reward::RewardVector;
use crate::safety::Action;

/// One switch at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: u64,
    pub tick: u64,
    pub switch: usize,
    pub telemetry: Telemetry,
    pub sampled_action: Action,
    pub executed_action: Action,
    pub reward: RewardVector,
    pub reward_scalar: f64,
    /// Controller backlog when the action was chosen.
    pub backlog: u64,
    pub rtt: f64,
    pub flowmods_submitted: u64,
    pub label: TrafficLabel,
    pub queue: f64,
    pub packetins: u64,
    /// Controller PacketIn drops during this tick.
    pub packetin_drops: u64,
    pub sync_flag: bool,
}

impl TraceRecord {
    pub fn masked(&self) -> bool {
        self.sampled_action != self.executed_action
    }
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_trace(path: &Path) -> io::Result<Vec<TraceRecord>> {
    BufReader::new(File::open(path)?)
        .lines()
        .map(|line| {
            let line = line?;
            serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}
