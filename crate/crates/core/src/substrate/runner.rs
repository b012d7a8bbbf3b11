//! The run loop: policy choices + fairness forcing + stop conditions.

use crate::cb::CbId;
use crate::rb::RbId;
use crate::substrate::policy::Policy;
use crate::substrate::world::{Machine, TaskStatus, World};
use crate::types::{ProcessId, RunError};
use serde::Serialize;

/// When a run is considered complete (in addition to the `max_steps` cap).
#[derive(Clone, Debug)]
pub enum StopWhen {
    /// Every listed receiver has delivered on the broadcast instance; with
    /// `drain_signing`, pending background signing tasks must finish too (so
    /// the final signature totals are the protocol's totals, not an artifact
    /// of stopping early).
    CbDelivered {
        cb: CbId,
        receivers: Vec<ProcessId>,
        drain_signing: bool,
    },
    RbDelivered {
        rb: RbId,
        receivers: Vec<ProcessId>,
        drain_signing: bool,
    },
    /// Every listed replica has decided.
    AllDecided { replicas: Vec<ProcessId> },
    /// Run until quiescence or the step cap.
    Never,
}

impl StopWhen {
    pub fn satisfied(&self, world: &World) -> bool {
        match self {
            StopWhen::CbDelivered { cb, receivers, drain_signing } => {
                let inst = world.cb_instance(*cb);
                receivers.iter().all(|r| inst.delivered.contains_key(r))
                    && (!drain_signing || signing_drained(world))
            }
            StopWhen::RbDelivered { rb, receivers, drain_signing } => {
                let inst = &world.rb[rb.0 as usize];
                receivers.iter().all(|r| inst.delivered.contains_key(r))
                    && (!drain_signing || signing_drained(world))
            }
            StopWhen::AllDecided { replicas } => {
                let Some(run) = &world.consensus else {
                    return false;
                };
                replicas.iter().all(|&r| {
                    run.cfg_ordinal(r)
                        .map(|o| run.cells[o].decided.is_some())
                        .unwrap_or(false)
                })
            }
            StopWhen::Never => false,
        }
    }
}

fn signing_drained(world: &World) -> bool {
    world.tasks.iter().all(|t| {
        !matches!(t.machine, Machine::CbSenderSign(_) | Machine::RbEchoSign(_))
            || matches!(t.status, TaskStatus::Done)
            || world.procs[t.owner].health != crate::substrate::world::Health::Up
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The stop condition was met.
    Condition,
    /// Step cap hit first — a liveness red flag unless the scenario expected it.
    MaxSteps,
    /// Nothing left to schedule and no pending wakeups.
    Quiescent,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub reason: StopReason,
    pub steps: u64,
    pub choices_applied: u64,
}

/// Drive the world to completion under a policy.
///
/// Post-GST fairness is enforced here, above the policy: once any choice has
/// been continuously available for `delta` steps, the oldest such choice runs
/// regardless of what the policy wants. When nothing is schedulable but time
/// would unblock something (a signing deadline, a timeout), the clock jumps
/// forward deterministically.
pub fn run(world: &mut World, policy: &mut dyn Policy, stop: &StopWhen) -> Result<RunOutcome, RunError> {
    let mut choices_applied = 0u64;
    loop {
        world.auto_wake();
        if stop.satisfied(world) {
            return Ok(RunOutcome { reason: StopReason::Condition, steps: world.now, choices_applied });
        }
        if world.now >= world.sim.max_steps {
            return Ok(RunOutcome { reason: StopReason::MaxSteps, steps: world.now, choices_applied });
        }
        let choices = world.enumerate_choices();
        if choices.is_empty() {
            match world.next_wakeup() {
                Some(step) => {
                    world.now = step.min(world.sim.max_steps);
                    continue;
                }
                None => {
                    return Ok(RunOutcome {
                        reason: StopReason::Quiescent,
                        steps: world.now,
                        choices_applied,
                    })
                }
            }
        }
        let forced = world.forced_choices(&choices);
        let pick = if let Some(&first) = forced.first() {
            // Oldest-available forced choice; ties break on canonical order.
            forced
                .iter()
                .copied()
                .min_by_key(|&i| world.choice_available_since(&choices[i]).unwrap_or(u64::MAX))
                .unwrap_or(first)
        } else {
            let p = policy.choose(world, &choices);
            debug_assert!(p < choices.len(), "policy returned out-of-range choice");
            p.min(choices.len() - 1)
        };
        world.apply_choice(&choices[pick])?;
        choices_applied += 1;
    }
}
