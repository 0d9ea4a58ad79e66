//! Versioned JSON-lines trace: one object per block, hex-encoded byte
//! fields, stable field order. Identical (config, seed) pairs must produce
//! byte-identical files; the differ reports field-level mismatches.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Block, TxStatus};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("schema mismatch: {a} vs {b}")]
    SchemaMismatch { a: u32, b: u32 },
}

/// Field order here is the on-disk order; do not reorder without bumping
/// [`TRACE_SCHEMA_VERSION`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TraceBlock {
    pub v: u32,
    pub height: u64,
    pub tx: Option<TraceTx>,
    pub status: Option<String>,
    pub cost: u64,
    pub events: Vec<TraceEvent>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TraceTx {
    pub sender: String,
    pub public_key: String,
    pub seq: u64,
    pub target: String,
    pub function: String,
    pub args: Vec<String>,
    pub value: u64,
    pub signature: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: String,
    pub contract: String,
    pub args: Vec<String>,
}

impl TraceBlock {
    pub fn from_block(block: &Block) -> Self {
        TraceBlock {
            v: TRACE_SCHEMA_VERSION,
            height: block.height,
            tx: block.transaction.as_ref().map(|tx| TraceTx {
                sender: tx.sender.to_string(),
                public_key: hex::encode(tx.sender_public_key),
                seq: tx.sequence,
                target: tx.target.to_string(),
                function: tx.call.function.clone(),
                args: tx.call.args.iter().map(hex::encode).collect(),
                value: tx.value,
                signature: hex::encode(tx.signature),
            }),
            status: block.status.as_ref().map(|status| match status {
                TxStatus::Success => "ok".to_string(),
                TxStatus::Reverted(reason) => format!("revert:{reason}"),
            }),
            cost: block.cost,
            events: block
                .events
                .iter()
                .map(|ev| TraceEvent {
                    kind: ev.kind.to_string(),
                    contract: ev.contract.to_string(),
                    args: ev.args.iter().map(hex::encode).collect(),
                })
                .collect(),
        }
    }
}

pub fn to_trace(blocks: &[Block]) -> Vec<TraceBlock> {
    blocks.iter().map(TraceBlock::from_block).collect()
}

pub fn write_trace(path: &Path, blocks: &[TraceBlock]) -> Result<(), TraceError> {
    let mut out = String::new();
    for block in blocks {
        out.push_str(&serde_json::to_string(block).expect("trace blocks serialize"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceBlock>, TraceError> {
    let text = std::fs::read_to_string(path)?;
    let mut blocks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        blocks.push(
            serde_json::from_str(line).map_err(|source| TraceError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(blocks)
}

/// One field-level difference between two traces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceDiff {
    pub line: usize,
    pub path: String,
    pub a: String,
    pub b: String,
}

impl std::fmt::Display for TraceDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {} {}: {} != {}", self.line, self.path, self.a, self.b)
    }
}

/// Field-level comparison. Schema versions must match; the result is empty
/// exactly when the traces are identical.
pub fn diff_traces(a: &[TraceBlock], b: &[TraceBlock]) -> Result<Vec<TraceDiff>, TraceError> {
    if let (Some(block_a), Some(block_b)) = (a.first(), b.first()) {
        if block_a.v != block_b.v {
            return Err(TraceError::SchemaMismatch {
                a: block_a.v,
                b: block_b.v,
            });
        }
    }
    let mut diffs = Vec::new();
    let max = a.len().max(b.len());
    for i in 0..max {
        match (a.get(i), b.get(i)) {
            (Some(block_a), Some(block_b)) => {
                let va = serde_json::to_value(block_a).expect("trace blocks serialize");
                let vb = serde_json::to_value(block_b).expect("trace blocks serialize");
                diff_value(i + 1, "", &va, &vb, &mut diffs);
            }
            (Some(_), None) => diffs.push(TraceDiff {
                line: i + 1,
                path: "".into(),
                a: "block".into(),
                b: "missing".into(),
            }),
            (None, Some(_)) => diffs.push(TraceDiff {
                line: i + 1,
                path: "".into(),
                a: "missing".into(),
                b: "block".into(),
            }),
            (None, None) => unreachable!(),
        }
    }
    Ok(diffs)
}

fn diff_value(
    line: usize,
    path: &str,
    a: &serde_json::Value,
    b: &serde_json::Value,
    out: &mut Vec<TraceDiff>,
) {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            for key in ma.keys().chain(mb.keys().filter(|k| !ma.contains_key(*k))) {
                let sub = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                diff_value(
                    line,
                    &sub,
                    ma.get(key).unwrap_or(&Value::Null),
                    mb.get(key).unwrap_or(&Value::Null),
                    out,
                );
            }
        }
        (Value::Array(xa), Value::Array(xb)) => {
            let max = xa.len().max(xb.len());
            for i in 0..max {
                let sub = format!("{path}[{i}]");
                diff_value(
                    line,
                    &sub,
                    xa.get(i).unwrap_or(&Value::Null),
                    xb.get(i).unwrap_or(&Value::Null),
                    out,
                );
            }
        }
        _ if a == b => {}
        _ => out.push(TraceDiff {
            line,
            path: path.to_string(),
            a: a.to_string(),
            b: b.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceBlock> {
        vec![TraceBlock {
            v: TRACE_SCHEMA_VERSION,
            height: 0,
            tx: Some(TraceTx {
                sender: "aa".repeat(20),
                public_key: "bb".repeat(32),
                seq: 0,
                target: "contract://access".into(),
                function: "requestS".into(),
                args: vec!["cc".into()],
                value: 5,
                signature: "dd".repeat(64),
            }),
            status: Some("ok".into()),
            cost: 21_000,
            events: vec![TraceEvent {
                kind: "DEPOSIT".into(),
                contract: "contract://access".into(),
                args: vec!["ee".into()],
            }],
        }]
    }

    #[test]
    fn identical_traces_have_empty_diff() {
        let a = sample();
        assert!(diff_traces(&a, &a.clone()).unwrap().is_empty());
    }

    #[test]
    fn differences_carry_field_paths() {
        let a = sample();
        let mut b = sample();
        b[0].cost = 99;
        b[0].events[0].args[0] = "ff".into();
        let diffs = diff_traces(&a, &b).unwrap();
        let paths: Vec<_> = diffs.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"cost"));
        assert!(paths.contains(&"events[0].args[0]"));
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let a = sample();
        let mut b = sample();
        b[0].v = 2;
        assert!(matches!(
            diff_traces(&a, &b),
            Err(TraceError::SchemaMismatch { a: 1, b: 2 })
        ));
    }

    #[test]
    fn file_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.jsonl");
        let path_b = dir.path().join("b.jsonl");
        let blocks = sample();
        write_trace(&path_a, &blocks).unwrap();
        write_trace(&path_b, &blocks).unwrap();
        assert_eq!(
            std::fs::read(&path_a).unwrap(),
            std::fs::read(&path_b).unwrap()
        );
        let back = read_trace(&path_a).unwrap();
        assert_eq!(back, blocks);
    }
}
