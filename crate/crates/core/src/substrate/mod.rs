//! Simulated message-and-memory substrate.
//!
//! The execution model combines two communication media:
//!
//! * **Single-writer multi-reader atomic registers** — each register is
//!   written by exactly one owner process and readable by everyone. Protocol
//!   slots (broadcast copies, echoes, ready proofs) live here.
//! * **Reliable point-to-point links** — messages between correct processes
//!   are never lost or forged and are delivered at most once, in any order
//!   the scheduler picks.
//!
//! Execution is a single-threaded discrete-event loop over *tasks*
//! (resumable state machines). One scheduler choice = at most one shared
//! memory access, so the scheduler fully controls interleaving down to the
//! granularity where the known broadcast anomalies (mid-read overwrites,
//! stale collects) are expressible. Runs are deterministic given a policy and
//! seed; the same world also backs the exhaustive model checker.
//!
//! Timing is partially synchronous: an unknown-to-the-protocol global
//! stabilization step `gst` divides adversarial scheduling from the fair
//! regime in which every enabled choice runs within `delta` steps.

pub mod links;
pub mod policy;
pub mod register;
pub mod runner;
pub mod trace;
pub mod world;

pub use links::Links;
pub use policy::{Allow, Cond, Phase, Policy, PolicySpec, RoundRobin, ScriptedPhases, SeededChaos};
pub use register::{Register, RegisterFile, RegisterId};
pub use runner::{run, RunOutcome, StopReason, StopWhen};
pub use trace::{Event, EventKind, Payload, Trace};
pub use world::{
    Choice, Health, Machine, ProcState, SimParams, Task, TaskId, TaskStatus, TimeoutEntry,
    TimeoutState, World,
};
