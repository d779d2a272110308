//! Replays a transmission trace per receiver and checks that every counted
//! delivery is decodable from what that receiver actually got.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::queues::Transmission;
use crate::gf2::{Gf2Basis, PacketId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverDecode {
    pub ok: bool,
    /// deliveries checked before stopping
    pub checked: u64,
    pub rank: usize,
    /// first delivery that could not be decoded, with its slot
    pub counterexample: Option<PacketId>,
    pub counterexample_slot: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub rx1: ReceiverDecode,
    pub rx2: ReceiverDecode,
}

impl DecodeReport {
    pub fn ok(&self) -> bool {
        self.rx1.ok && self.rx2.ok
    }

    pub fn receiver(&self, rx: usize) -> &ReceiverDecode {
        if rx == 0 {
            &self.rx1
        } else {
            &self.rx2
        }
    }
}

fn verify_receiver(trace: &[Transmission], rx: usize) -> ReceiverDecode {
    let mut basis = Gf2Basis::new();
    let mut checked = 0;
    for tx in trace {
        if tx.received(rx) {
            basis.insert(&tx.combo);
        }
        for &id in tx.delivered(rx) {
            if !basis.decodes(id) {
                return ReceiverDecode {
                    ok: false,
                    checked,
                    rank: basis.rank(),
                    counterexample: Some(id),
                    counterexample_slot: Some(tx.slot),
                };
            }
            checked += 1;
        }
    }
    ReceiverDecode {
        ok: true,
        checked,
        rank: basis.rank(),
        counterexample: None,
        counterexample_slot: None,
    }
}

/// Checks, in slot order, that each packet recorded as delivered to a
/// receiver lies in the GF(2) span of the combinations it received up to and
/// including that slot.
pub fn decode_verify(trace: &[Transmission]) -> DecodeReport {
    DecodeReport {
        rx1: verify_receiver(trace, 0),
        rx2: verify_receiver(trace, 1),
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes one JSON object per transmission.
pub fn write_trace<W: Write>(mut out: W, trace: &[Transmission]) -> std::io::Result<()> {
    for tx in trace {
        serde_json::to_writer(&mut out, tx)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON-lines trace; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<Transmission>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tx: Transmission = serde_json::from_str(&line).map_err(|e| TraceError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        if tx.combo.is_empty() {
            return Err(TraceError::Format {
                line: i + 1,
                message: "empty combination".into(),
            });
        }
        out.push(tx);
    }
    Ok(out)
}
