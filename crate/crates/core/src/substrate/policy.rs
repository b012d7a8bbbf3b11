//! Scheduling policies: who runs next when fairness does not force the choice.
//!
//! A policy is consulted with the canonical choice list and picks one index.
//! Policies model the adversarial scheduler: before GST they may starve
//! whomever they like; the runner overrides them with the fairness rule after
//! GST. Three policies cover the spectrum:
//!
//! * [`RoundRobin`] — benign, synchronous-looking executions (common case).
//! * [`SeededChaos`] — deterministic pseudo-random interleavings for fuzzing.
//! * [`ScriptedPhases`] — exact adversarial schedules: run only an allowed
//!   subset of processes until a condition holds, then move to the next phase
//!   (this is how the mid-read attack schedule is reproduced).

use crate::substrate::trace::EventKind;
use crate::substrate::world::{Choice, World};
use crate::types::ProcessId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub trait Policy {
    fn choose(&mut self, world: &World, choices: &[Choice]) -> usize;
}

/// Cycles through tasks by id; adversary actions and timeouts are taken as
/// soon as they appear (before continuing the cycle), which gives scripted
/// adversaries a deterministic slot without a dedicated schedule.
pub struct RoundRobin {
    next_task: usize,
}

impl RoundRobin {
    pub fn new() -> Self {
        RoundRobin { next_task: 0 }
    }
}

impl Default for RoundRobin {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for RoundRobin {
    fn choose(&mut self, _world: &World, choices: &[Choice]) -> usize {
        if let Some(i) = choices
            .iter()
            .position(|c| matches!(c, Choice::ScriptAction { .. } | Choice::MenuAction { .. }))
        {
            return i;
        }
        // First runnable task at or after the cursor, wrapping.
        let mut best: Option<(bool, usize, usize)> = None; // (wrapped, task_id, index)
        for (i, c) in choices.iter().enumerate() {
            if let Choice::RunTask(id) = c {
                let wrapped = *id < self.next_task;
                let key = (wrapped, *id, i);
                if best.map_or(true, |b| key < b) {
                    best = Some(key);
                }
            }
        }
        if let Some((_, id, i)) = best {
            self.next_task = id + 1;
            return i;
        }
        0 // only timeouts / deliveries available
    }
}

/// Deterministic pseudo-random scheduling from a seed. Slightly biased toward
/// adversary actions so scripted attacks actually interleave with the
/// protocol instead of waiting politely.
pub struct SeededChaos {
    rng: ChaCha8Rng,
}

impl SeededChaos {
    pub fn new(seed: u64) -> Self {
        SeededChaos { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for SeededChaos {
    fn choose(&mut self, _world: &World, choices: &[Choice]) -> usize {
        let weight = |c: &Choice| -> u32 {
            match c {
                Choice::ScriptAction { .. } | Choice::MenuAction { .. } => 3,
                Choice::FireTimeout(_) => 1,
                _ => 2,
            }
        };
        let total: u32 = choices.iter().map(weight).sum();
        let mut pick = self.rng.gen_range(0..total);
        for (i, c) in choices.iter().enumerate() {
            let w = weight(c);
            if pick < w {
                return i;
            }
            pick -= w;
        }
        choices.len() - 1
    }
}

/// One phase of a scripted schedule: run only `allow`ed subjects until every
/// condition in `until` holds, then advance.
#[derive(PartialEq, Clone, Debug, Serialize, Deserialize)]
pub struct Phase {
    pub allow: Allow,
    pub until: Vec<Cond>,
}

#[derive(PartialEq, Clone, Debug, Serialize, Deserialize)]
pub enum Allow {
    /// Any choice whose subject process is in the set (protocol tasks,
    /// timeouts, deliveries) — adversary actions excluded.
    Owners(BTreeSet<ProcessId>),
    /// Only adversary script/menu actions of these processes.
    Scripts(BTreeSet<ProcessId>),
    /// Protocol activity of `owners` plus adversary actions of `scripts`.
    Mixed {
        owners: BTreeSet<ProcessId>,
        scripts: BTreeSet<ProcessId>,
    },
    Any,
}

#[derive(PartialEq, Clone, Debug, Serialize, Deserialize)]
pub enum Cond {
    /// Receiver has a deliver-event for the given instance label.
    Delivered { instance: String, receiver: ProcessId },
    /// At least this many events of a kind (optionally by one actor).
    EventCount {
        kind: EventKind,
        actor: Option<ProcessId>,
        at_least: u64,
    },
    /// Register (by path) holds a non-⊥ value.
    RegNonBot { path: String },
    /// The process's queued script actions have all executed.
    ScriptQueueEmpty { proc: ProcessId },
    StepAtLeast(u64),
    Always,
}

pub struct ScriptedPhases {
    phases: Vec<Phase>,
    current: usize,
    /// Incremental event-count cache: (events scanned, counts per (kind, actor)).
    scanned: usize,
    counts: std::collections::BTreeMap<(EventKind, ProcessId), u64>,
    kind_counts: std::collections::BTreeMap<EventKind, u64>,
    delivered: BTreeSet<(String, ProcessId)>,
}

impl ScriptedPhases {
    pub fn new(phases: Vec<Phase>) -> Self {
        ScriptedPhases {
            phases,
            current: 0,
            scanned: 0,
            counts: Default::default(),
            kind_counts: Default::default(),
            delivered: Default::default(),
        }
    }

    fn ingest(&mut self, world: &World) {
        let events = &world.trace.events;
        for ev in &events[self.scanned.min(events.len())..] {
            *self.counts.entry((ev.kind, ev.actor)).or_default() += 1;
            *self.kind_counts.entry(ev.kind).or_default() += 1;
            if let crate::substrate::trace::Payload::Deliver { instance, .. } = &ev.payload {
                self.delivered.insert((instance.clone(), ev.actor));
            }
        }
        self.scanned = events.len();
    }

    fn cond_holds(&self, world: &World, cond: &Cond) -> bool {
        match cond {
            Cond::Delivered { instance, receiver } => {
                self.delivered.contains(&(instance.clone(), *receiver))
            }
            Cond::EventCount { kind, actor, at_least } => {
                let n = match actor {
                    Some(a) => self.counts.get(&(*kind, *a)).copied().unwrap_or(0),
                    None => self.kind_counts.get(kind).copied().unwrap_or(0),
                };
                n >= *at_least
            }
            Cond::RegNonBot { path } => world
                .regs
                .regs
                .iter()
                .any(|r| r.path == *path && r.value.is_some()),
            Cond::ScriptQueueEmpty { proc } => !world
                .adversary
                .procs_with_queued_actions()
                .contains(proc),
            Cond::StepAtLeast(s) => world.now >= *s,
            Cond::Always => true,
        }
    }

    fn subject_allowed(&self, world: &World, choice: &Choice, allow: &Allow) -> bool {
        let (owner_subject, is_script) = match choice {
            Choice::RunTask(id) => (Some(world.tasks[*id].owner), false),
            Choice::ScriptAction { proc } | Choice::MenuAction { proc, .. } => {
                (Some(*proc), true)
            }
            Choice::FireTimeout(i) => (Some(world.timeouts[*i].replica), false),
            Choice::DeliverMsg { to, .. } => (Some(*to), false),
        };
        let p = owner_subject.expect("every choice has a subject");
        match allow {
            Allow::Any => true,
            Allow::Owners(set) => !is_script && set.contains(&p),
            Allow::Scripts(set) => is_script && set.contains(&p),
            Allow::Mixed { owners, scripts } => {
                if is_script {
                    scripts.contains(&p)
                } else {
                    owners.contains(&p)
                }
            }
        }
    }
}

impl Policy for ScriptedPhases {
    fn choose(&mut self, world: &World, choices: &[Choice]) -> usize {
        self.ingest(world);
        while self.current < self.phases.len() {
            let done = self.phases[self.current]
                .until
                .iter()
                .all(|c| self.cond_holds(world, c));
            if done {
                self.current += 1;
            } else {
                break;
            }
        }
        let allow = self
            .phases
            .get(self.current)
            .map(|p| p.allow.clone())
            .unwrap_or(Allow::Any);
        choices
            .iter()
            .position(|c| self.subject_allowed(world, c, &allow))
            // A script with an empty allowed set is a script bug; degrade to
            // the first choice rather than deadlocking the run.
            .unwrap_or(0)
    }
}

/// Named policy selection as it appears in scenario files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicySpec {
    #[default]
    RoundRobin,
    Chaos { seed: u64 },
    Phases { phases: Vec<Phase> },
}

impl PolicySpec {
    pub fn build(&self) -> Box<dyn Policy> {
        match self {
            PolicySpec::RoundRobin => Box::new(RoundRobin::new()),
            PolicySpec::Chaos { seed } => Box::new(SeededChaos::new(*seed)),
            PolicySpec::Phases { phases } => Box::new(ScriptedPhases::new(phases.clone())),
        }
    }
}
