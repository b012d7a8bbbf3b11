//! Shared primitive types: process ids, opaque register payloads, system sizing.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Dense process identifier, `0..num_processes`.
///
/// Roles (replicator / sender / receiver) are assignments over these ids, not
/// separate id spaces: a consensus replica is simultaneously a replicator, a
/// broadcast sender and a receiver.
pub type ProcessId = usize;

/// Immutable opaque byte payload as stored in registers and carried by
/// protocol messages. Registers hold `Option<Blob>` — `None` is the initial
/// "unset" value (written `⊥` in comments), distinct from an empty blob.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Blob(Arc<[u8]>);

impl Blob {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    /// Lossy human-oriented rendering: UTF-8 if printable, hex otherwise.
    pub fn display_lossy(&self) -> String {
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.chars().all(|c| !c.is_control()) => s.to_string(),
            _ => format!("0x{}", self.to_hex()),
        }
    }
}

impl fmt::Debug for Blob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Blob({})", self.display_lossy())
    }
}

impl From<Vec<u8>> for Blob {
    fn from(v: Vec<u8>) -> Self {
        Blob(v.into())
    }
}

impl From<&[u8]> for Blob {
    fn from(v: &[u8]) -> Self {
        Blob(v.into())
    }
}

impl From<&str> for Blob {
    fn from(v: &str) -> Self {
        Blob(v.as_bytes().into())
    }
}

impl AsRef<[u8]> for Blob {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl Serialize for Blob {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serde_bytes_like::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Blob {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<u8>::deserialize(d)?;
        Ok(Blob::from(v))
    }
}

/// Serialize `[u8]` as a plain byte sequence (compact under bincode, an array
/// of numbers under JSON — registers only ever hold these transiently).
mod serde_bytes_like {
    pub fn serialize<S: serde::Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for b in v {
            seq.serialize_element(b)?;
        }
        seq.end()
    }
}

/// How a broadcast receiver completed delivery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryPath {
    /// All n replicator copies agreed; no signature was consulted.
    Fast,
    /// A quorum of signed copies (broadcast) or valid ready-proofs (reliable
    /// broadcast) was consulted.
    Slow,
}

/// Static system sizing and role assignment. `n = 2f + 1` replicators; any
/// number of additional senders/receivers may exist beyond them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Total processes in the run (replicators + senders + receivers).
    pub num_processes: usize,
    /// Fault budget: the protocols tolerate up to `f` Byzantine replicators.
    pub f: usize,
    /// The replicator set, length `2f + 1`. Index into this vec is the
    /// replicator "ordinal" used for slot layout.
    pub replicators: Vec<ProcessId>,
}

impl SystemConfig {
    pub fn n(&self) -> usize {
        self.replicators.len()
    }

    /// Quorum size `n - f` (= `f + 1`).
    pub fn quorum(&self) -> usize {
        self.n() - self.f
    }

    /// Replicator ordinal of a process, if it is one.
    pub fn ordinal_of(&self, p: ProcessId) -> Option<usize> {
        self.replicators.iter().position(|&r| r == p)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.replicators.len() != 2 * self.f + 1 {
            return Err(RunError::ConfigInvalid(format!(
                "need n = 2f+1 replicators, got n={} with f={}",
                self.replicators.len(),
                self.f
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &r in &self.replicators {
            if r >= self.num_processes {
                return Err(RunError::ConfigInvalid(format!(
                    "replicator id {r} out of range (num_processes={})",
                    self.num_processes
                )));
            }
            if !seen.insert(r) {
                return Err(RunError::ConfigInvalid(format!("duplicate replicator id {r}")));
            }
        }
        Ok(())
    }
}

/// Hard failures that abort a run. Property violations are *not* errors —
/// they are findings reported by the metrics layer; these are misuses of the
/// substrate (adversary script bugs, bad configs).
#[derive(Debug, Error)]
pub enum RunError {
    #[error("process {actor} attempted to write register {reg} owned by {owner}")]
    OwnershipViolation {
        actor: ProcessId,
        owner: ProcessId,
        reg: String,
    },
    #[error("process {actor} attempted to sign with key of {key}")]
    SignerMismatch { actor: ProcessId, key: ProcessId },
    #[error("sender broadcast twice on instance {instance}")]
    DoubleBroadcast { instance: String },
    #[error("cannot wake process {proc}: it crashed")]
    WakeCrashed { proc: ProcessId },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("no such message in queue {from}->{to} at index {index}")]
    NoSuchMessage {
        from: ProcessId,
        to: ProcessId,
        index: usize,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_bottom_is_distinct_from_empty() {
        let bot: Option<Blob> = None;
        let empty: Option<Blob> = Some(Blob::from(Vec::new()));
        assert_ne!(bot, empty);
    }

    #[test]
    fn config_requires_exact_replicator_count() {
        let cfg = SystemConfig {
            num_processes: 4,
            f: 1,
            replicators: vec![0, 1],
        };
        assert!(cfg.validate().is_err());
        let cfg = SystemConfig {
            num_processes: 4,
            f: 1,
            replicators: vec![0, 1, 2],
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.quorum(), 2);
        assert_eq!(cfg.ordinal_of(2), Some(2));
        assert_eq!(cfg.ordinal_of(3), None);
    }

    #[test]
    fn config_rejects_duplicate_and_out_of_range_replicators() {
        let dup = SystemConfig {
            num_processes: 4,
            f: 1,
            replicators: vec![0, 1, 1],
        };
        assert!(dup.validate().is_err());
        let oob = SystemConfig {
            num_processes: 2,
            f: 1,
            replicators: vec![0, 1, 2],
        };
        assert!(oob.validate().is_err());
    }
}
