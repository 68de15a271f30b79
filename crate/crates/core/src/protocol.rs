//! Message transcripts between vertices and the data curator, with the fixed
//! byte-size model used for communication accounting.
//!
//! Size model: one noisy edge is 8 bytes (two 4-byte ids) and one scalar
//! report (a degree or an estimate) is 8 bytes.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::Algorithm;
use crate::mechanisms::flip_probability_of;

pub const EDGE_BYTES: u64 = 8;
pub const SCALAR_BYTES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "vertex->curator")]
    VertexToCurator,
    #[serde(rename = "curator->vertex")]
    CuratorToVertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MessageKind {
    NoisyEdges,
    DegreeReport,
    EstimatorReport,
    NoisyGraphDownload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Message {
    pub round: u32,
    pub direction: Direction,
    pub kind: MessageKind,
    #[serde(rename = "bytes")]
    pub payload_size_bytes: u64,
}

impl Message {
    pub fn noisy_edges(round: u32, edges: usize) -> Self {
        Self {
            round,
            direction: Direction::VertexToCurator,
            kind: MessageKind::NoisyEdges,
            payload_size_bytes: edges as u64 * EDGE_BYTES,
        }
    }

    pub fn noisy_graph_download(round: u32, edges: usize) -> Self {
        Self {
            round,
            direction: Direction::CuratorToVertex,
            kind: MessageKind::NoisyGraphDownload,
            payload_size_bytes: edges as u64 * EDGE_BYTES,
        }
    }

    pub fn degree_report(round: u32) -> Self {
        Self {
            round,
            direction: Direction::VertexToCurator,
            kind: MessageKind::DegreeReport,
            payload_size_bytes: SCALAR_BYTES,
        }
    }

    pub fn estimator_report(round: u32) -> Self {
        Self {
            round,
            direction: Direction::VertexToCurator,
            kind: MessageKind::EstimatorReport,
            payload_size_bytes: SCALAR_BYTES,
        }
    }
}

/// Ordered message log of one protocol run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Transcript {
    messages: Vec<Message>,
    total_bytes: u64,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `message`; rounds may not go backwards.
    pub fn record(&mut self, message: Message) -> Result<()> {
        if let Some(last) = self.messages.last() {
            if message.round < last.round {
                return Err(Error::ProtocolOrder {
                    last: last.round,
                    got: message.round,
                });
            }
        }
        self.total_bytes += message.payload_size_bytes;
        self.messages.push(message);
        Ok(())
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    /// Highest round index seen (0 for an empty transcript).
    pub fn rounds(&self) -> u32 {
        self.messages.last().map_or(0, |m| m.round)
    }

    /// One JSON object per line: `{"round", "direction", "kind", "bytes"}`.
    pub fn write_json_lines(&self, mut out: impl Write) -> Result<()> {
        for m in &self.messages {
            serde_json::to_writer(&mut out, m)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Expected number of noisy edges reported by a vertex of degree `d` among
/// `n` opposite-layer candidates at flip probability `p`.
pub fn expected_noisy_edges(d: f64, n: f64, p: f64) -> f64 {
    d * (1.0 - p) + (n - d) * p
}

/// Closed-form expected transcript size in bytes.
///
/// `rr_epsilon` is the budget spent on randomized response: the full budget
/// for Naive and OneR, `eps1` for the multi-round algorithms. Queries are on
/// one layer with `n1` opposite-layer vertices and `n2` same-layer vertices.
pub fn expected_comm_bytes(
    algorithm: Algorithm,
    d_u: f64,
    d_w: f64,
    n1: f64,
    n2: f64,
    rr_epsilon: f64,
) -> Result<f64> {
    let e = EDGE_BYTES as f64;
    let s = SCALAR_BYTES as f64;
    if algorithm == Algorithm::Central {
        return Ok(0.0);
    }
    let p = flip_probability_of(rr_epsilon)?.p();
    let both = expected_noisy_edges(d_u, n1, p) + expected_noisy_edges(d_w, n1, p);
    Ok(match algorithm {
        Algorithm::Naive | Algorithm::OneR => e * both,
        Algorithm::SingleSource => e * expected_noisy_edges(d_w, n1, p) + s,
        Algorithm::DoubleSource => s * n2 + e * both + 2.0 * s,
        Algorithm::Central => unreachable!(),
    })
}
