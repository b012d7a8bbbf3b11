//! Reliable point-to-point links.
//!
//! The substrate pairs shared registers with classic message links: messages
//! between correct processes are never lost, never forged (integrity is
//! inherent — a queued message records its true origin), and each is
//! delivered at most once. Delivery order is a scheduler choice, so the
//! adversary may reorder in-flight messages arbitrarily; it cannot drop them,
//! and an undelivered message remains deliverable forever (fairness forces it
//! out after GST).
//!
//! The signature-frugal protocols in this crate are pure shared-memory
//! algorithms and never call these; the links exist because the substrate
//! model has them, and they are exercised by substrate tests and available to
//! adversary scripts.

use crate::types::{Blob, ProcessId};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize)]
pub struct InFlight {
    pub msg_id: u64,
    pub payload: Blob,
}

/// All in-flight messages, keyed by (sender, destination). BTreeMap keeps
/// enumeration deterministic.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Links {
    pub queues: BTreeMap<(ProcessId, ProcessId), Vec<InFlight>>,
    next_msg_id: u64,
}

impl Links {
    /// Queue a message; returns its id. Loss is impossible by construction —
    /// the only way out of the queue is `take`.
    pub fn push(&mut self, from: ProcessId, to: ProcessId, payload: Blob) -> u64 {
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        self.queues
            .entry((from, to))
            .or_default()
            .push(InFlight { msg_id: id, payload });
        id
    }

    /// Remove and return the message at `index` in the (from, to) queue.
    /// Index addressing (rather than pop-front) is what lets the scheduler
    /// reorder deliveries.
    pub fn take(&mut self, from: ProcessId, to: ProcessId, index: usize) -> Option<InFlight> {
        let q = self.queues.get_mut(&(from, to))?;
        if index >= q.len() {
            return None;
        }
        let m = q.remove(index);
        if q.is_empty() {
            self.queues.remove(&(from, to));
        }
        Some(m)
    }

    pub fn pending(&self, from: ProcessId, to: ProcessId) -> usize {
        self.queues.get(&(from, to)).map_or(0, |q| q.len())
    }

    pub fn total_pending(&self) -> usize {
        self.queues.values().map(|q| q.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_deliver_at_most_once() {
        let mut links = Links::default();
        links.push(0, 1, Blob::from("a"));
        let m = links.take(0, 1, 0).unwrap();
        assert_eq!(m.payload, Blob::from("a"));
        assert!(links.take(0, 1, 0).is_none());
    }

    #[test]
    fn reordering_is_possible_but_loss_is_not() {
        let mut links = Links::default();
        links.push(0, 1, Blob::from("first"));
        links.push(0, 1, Blob::from("second"));
        // Deliver out of order.
        let second = links.take(0, 1, 1).unwrap();
        assert_eq!(second.payload, Blob::from("second"));
        // The remaining message is still there — nothing was dropped.
        assert_eq!(links.pending(0, 1), 1);
        let first = links.take(0, 1, 0).unwrap();
        assert_eq!(first.payload, Blob::from("first"));
        assert_eq!(links.total_pending(), 0);
    }

    #[test]
    fn msg_ids_are_unique_across_queues() {
        let mut links = Links::default();
        let a = links.push(0, 1, Blob::from("a"));
        let b = links.push(2, 3, Blob::from("b"));
        assert_ne!(a, b);
    }
}
