//! Deterministic simulator, fuzzer and small-scope model checker for
//! signature-frugal Byzantine broadcast and consensus.
//!
//! The protocols run on a hybrid substrate: single-writer multi-reader
//! atomic registers shared by all processes, plus reliable point-to-point
//! links. `n = 2f+1` designated *replicator* processes own the register
//! slots; up to `f` processes may be Byzantine. Everything here — protocol
//! code, adversary, scheduler — executes inside one single-threaded event
//! loop, so every run is a totally ordered schedule that can be traced,
//! replayed, fuzzed, and exhaustively enumerated at small scope.
//!
//! Layers, bottom to top:
//!
//! * [`substrate`] — registers, links, the `World` state machine, schedules,
//!   scheduling policies, the runner, and the trace format.
//! * [`sigs`] — simulated unforgeable signatures with a global ledger that
//!   counts every sign/verify, since signature frugality is the point.
//! * [`cb`] — consistent broadcast: fast path without any signature checks,
//!   slow path tolerating an equivocating sender.
//! * [`rb`] — reliable broadcast layered on top via echo slots and ready
//!   certificates.
//! * [`consensus`] — view-based weak Byzantine agreement where the common
//!   case decides without any process having signed anything.
//! * [`adversary`] — scripted and randomized Byzantine behavior.
//! * [`scenario`] / [`metrics`] / [`fuzz`] / [`modelcheck`] / [`cli`] — the
//!   user-facing layers: TOML scenarios, trace-derived property reports, the
//!   seeded fuzzer, the exhaustive explorer, and the command-line tool.

pub mod adversary;
pub mod cb;
pub mod cli;
pub mod consensus;
pub mod fuzz;
pub mod metrics;
pub mod modelcheck;
pub mod rb;
pub mod scenario;
pub mod sigs;
pub mod substrate;
pub mod types;
