//! Scripted and menu-driven Byzantine adversaries.
//!
//! Corruption is expressed as *actions on the substrate*: a corrupted process
//! may write registers it owns arbitrarily (including erasing them to ⊥),
//! sign any bytes with its own key, copy values it has read, crash itself, or
//! abandon its protocol tasks. It can never forge signatures or write foreign
//! registers — the substrate rejects both, so even buggy scripts stay inside
//! the fault model.
//!
//! Two drivers share the same action vocabulary:
//!
//! * **Scripts** — a per-process queue of actions, each optionally gated on an
//!   observation trigger (so many events seen, so many writes to a path).
//!   An unlocked action surfaces to the scheduler as a `ScriptAction` choice;
//!   *when* it runs is the policy's business, which is how exact attack
//!   interleavings are pinned by scripted-phase schedules.
//! * **Menus** — for the model checker: a small set of repeatable actions
//!   with a budget, each surfacing as its own `MenuAction` branch.

use crate::substrate::trace::{Event, EventKind, Payload};
use crate::substrate::world::World;
use crate::substrate::RegisterId;
use crate::sigs::SigDomain;
use crate::types::{Blob, ProcessId, RunError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Symbolic register address, resolved against live instances by label so
/// scripts can be written before any instance exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SlotRef {
    CbSenderMsg { instance: String },
    CbSenderSgn { instance: String },
    CbReplMsg { instance: String, ordinal: usize },
    CbReplSgn { instance: String, ordinal: usize },
    RbEchoMsg { instance: String, ordinal: usize },
    RbEchoSgn { instance: String, ordinal: usize },
    RbReady { instance: String, ordinal: usize },
}

/// One Byzantine move. `Copy` performs a read and a write in a single
/// scheduler choice — a harmless coarsening, since the copied value is one
/// the process already knows (its own signature, a slot it copied before).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "op")]
pub enum ByzAction {
    /// Write raw bytes to an owned slot; `None` erases it to ⊥.
    Write { slot: SlotRef, value: Option<String> },
    /// Sign `value` under the slot's signature domain (with the actor's own
    /// key) and publish the token in the slot.
    SignAndWrite { slot: SlotRef, value: String },
    /// Copy another slot's current contents into an owned slot.
    Copy { from: SlotRef, to: SlotRef },
    CrashSelf,
    /// Stop running the protocol (tasks retire; the script can continue).
    RetireTasks,
    /// Several moves in one scheduler choice. Model-checking menus use this
    /// to keep the branching factor down (e.g. "publish a signed value" as
    /// one branch instead of two); the coarsening hides the intermediate
    /// state from honest readers, so menus that rely on it should say so.
    Seq { actions: Vec<ByzAction> },
}

/// Observation gate for a script step, evaluated over the events the
/// adversary has seen so far. A step with no trigger is unlocked immediately;
/// steps unlock strictly in queue order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "when")]
pub enum Trigger {
    /// At least `min` events of `kind` (any actor) have been emitted.
    EventAtLeast { kind: EventKind, min: u64 },
    /// At least `min` writes landed on registers whose path starts with the
    /// prefix (e.g. `"rb/0/ready/2"` or a whole instance's `"cb/0/"`).
    WritesTo { path_prefix: String, min: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wait: Option<Trigger>,
    pub action: ByzAction,
}

#[derive(Clone, Debug, Serialize)]
struct ScriptState {
    steps: Vec<ScriptStep>,
    next: usize,
}

/// Model-checking action menu: every listed action is a branch while the
/// budget lasts. The budget keeps the explored state space finite.
#[derive(Clone, Debug, Serialize)]
pub struct MenuState {
    pub actions: Vec<ByzAction>,
    pub budget: u32,
}

/// Adversary state carried by the world: who is corrupted, their scripts and
/// menus, and the event counters triggers are judged against.
#[derive(Clone, Debug, Default, Serialize)]
pub struct AdversaryRuntime {
    scripts: BTreeMap<ProcessId, ScriptState>,
    menus: BTreeMap<ProcessId, MenuState>,
    corrupted: BTreeSet<ProcessId>,
    kind_counts: BTreeMap<EventKind, u64>,
    write_counts: BTreeMap<String, u64>,
}

impl AdversaryRuntime {
    pub fn install_script(&mut self, proc: ProcessId, steps: Vec<ScriptStep>) {
        self.corrupted.insert(proc);
        self.scripts.insert(proc, ScriptState { steps, next: 0 });
    }

    pub fn install_menu(&mut self, proc: ProcessId, actions: Vec<ByzAction>, budget: u32) {
        self.corrupted.insert(proc);
        self.menus.insert(proc, MenuState { actions, budget });
    }

    /// Mark a process corrupted without giving it actions (e.g. a consensus
    /// replica whose lies are configured as a deviation).
    pub fn mark_corrupted(&mut self, proc: ProcessId) {
        self.corrupted.insert(proc);
    }

    /// True when any script is installed. The event counters below exist
    /// solely to feed script triggers; worlds without scripts may drop them
    /// from their state identity.
    pub fn scripts_installed(&self) -> bool {
        !self.scripts.is_empty()
    }

    /// Erase the trigger counters (state hashing of script-free worlds).
    pub fn scrub_trigger_counters(&mut self) {
        self.kind_counts.clear();
        self.write_counts.clear();
    }

    pub fn is_corrupt(&self, p: ProcessId) -> bool {
        self.corrupted.contains(&p)
    }

    pub fn corrupted(&self) -> &BTreeSet<ProcessId> {
        &self.corrupted
    }

    /// (executed, total) script steps for a process.
    pub fn script_progress(&self, p: ProcessId) -> Option<(usize, usize)> {
        self.scripts.get(&p).map(|s| (s.next, s.steps.len()))
    }

    /// Called on every emitted event; keeps the trigger counters current.
    pub fn observe(&mut self, ev: &Event) {
        *self.kind_counts.entry(ev.kind).or_default() += 1;
        if ev.kind == EventKind::RegisterWrite {
            if let Payload::Reg { reg, .. } = &ev.payload {
                *self.write_counts.entry(reg.clone()).or_default() += 1;
            }
        }
    }

    fn trigger_met(&self, t: &Trigger) -> bool {
        match t {
            Trigger::EventAtLeast { kind, min } => {
                self.kind_counts.get(kind).copied().unwrap_or(0) >= *min
            }
            Trigger::WritesTo { path_prefix, min } => {
                let total: u64 = self
                    .write_counts
                    .range(path_prefix.clone()..)
                    .take_while(|(path, _)| path.starts_with(path_prefix.as_str()))
                    .map(|(_, n)| n)
                    .sum();
                total >= *min
            }
        }
    }

    /// Processes whose next script action is unlocked.
    pub fn procs_with_queued_actions(&self) -> Vec<ProcessId> {
        self.scripts
            .iter()
            .filter(|(_, st)| {
                st.steps
                    .get(st.next)
                    .is_some_and(|s| s.wait.as_ref().map_or(true, |t| self.trigger_met(t)))
            })
            .map(|(&p, _)| p)
            .collect()
    }

    /// All currently available `(process, action index)` menu branches.
    pub fn available_menu_actions(&self) -> Vec<(ProcessId, usize)> {
        let mut out = Vec::new();
        for (&p, menu) in &self.menus {
            if menu.budget == 0 {
                continue;
            }
            for i in 0..menu.actions.len() {
                out.push((p, i));
            }
        }
        out
    }
}

/// Execute the next unlocked script action of `proc`.
pub fn run_script_action(world: &mut World, proc: ProcessId) -> Result<(), RunError> {
    let action = {
        let st = world
            .adversary
            .scripts
            .get_mut(&proc)
            .ok_or_else(|| RunError::ScenarioInvalid(format!("no script installed for process {proc}")))?;
        let step = st
            .steps
            .get(st.next)
            .ok_or_else(|| RunError::ScenarioInvalid(format!("script of process {proc} is exhausted")))?;
        let action = step.action.clone();
        st.next += 1;
        action
    };
    execute(world, proc, &action)
}

/// Execute one menu action of `proc`, consuming budget.
pub fn run_menu_action(world: &mut World, proc: ProcessId, index: usize) -> Result<(), RunError> {
    let action = {
        let menu = world
            .adversary
            .menus
            .get_mut(&proc)
            .ok_or_else(|| RunError::ScenarioInvalid(format!("no menu installed for process {proc}")))?;
        if menu.budget == 0 {
            return Err(RunError::ScenarioInvalid(format!("menu budget of process {proc} exhausted")));
        }
        let action = menu
            .actions
            .get(index)
            .ok_or_else(|| RunError::ScenarioInvalid(format!("menu index {index} out of range")))?
            .clone();
        menu.budget -= 1;
        action
    };
    execute(world, proc, &action)
}

fn execute(world: &mut World, proc: ProcessId, action: &ByzAction) -> Result<(), RunError> {
    match action {
        ByzAction::Write { slot, value } => {
            let reg = resolve_slot(world, slot)?;
            world.reg_write(proc, reg, value.as_ref().map(|s| Blob::from(s.as_str())))
        }
        ByzAction::SignAndWrite { slot, value } => {
            let reg = resolve_slot(world, slot)?;
            let domain = signing_domain(world, slot)?;
            let body = Blob::from(value.as_str());
            let token = world.sign_token(proc, proc, &domain, body.as_slice(), false, None)?;
            world.reg_write(proc, reg, Some(token))
        }
        ByzAction::Copy { from, to } => {
            let from_reg = resolve_slot(world, from)?;
            let to_reg = resolve_slot(world, to)?;
            let value = world.reg_read(proc, from_reg);
            world.reg_write(proc, to_reg, value)
        }
        ByzAction::CrashSelf => {
            world.crash(proc);
            Ok(())
        }
        ByzAction::RetireTasks => {
            world.retire_tasks_of(proc);
            world.note(proc, "adversary", "protocol tasks retired");
            Ok(())
        }
        ByzAction::Seq { actions } => {
            for a in actions {
                execute(world, proc, a)?;
            }
            Ok(())
        }
    }
}

fn cb_by_label<'a>(world: &'a World, label: &str) -> Option<&'a crate::cb::CbInstance> {
    world.cb.iter().find(|i| i.label == label)
}

fn rb_by_label<'a>(world: &'a World, label: &str) -> Option<&'a crate::rb::RbInstance> {
    world.rb.iter().find(|i| i.label == label)
}

fn resolve_slot(world: &World, slot: &SlotRef) -> Result<RegisterId, RunError> {
    let missing = |what: &str| RunError::ScenarioInvalid(format!("slot refers to unknown {what}: {slot:?}"));
    match slot {
        SlotRef::CbSenderMsg { instance } => {
            cb_by_label(world, instance).map(|i| i.sender_msg).ok_or_else(|| missing("cb instance"))
        }
        SlotRef::CbSenderSgn { instance } => {
            cb_by_label(world, instance).map(|i| i.sender_sgn).ok_or_else(|| missing("cb instance"))
        }
        SlotRef::CbReplMsg { instance, ordinal } => cb_by_label(world, instance)
            .and_then(|i| i.repl_msg.get(*ordinal).copied())
            .ok_or_else(|| missing("cb replicator slot")),
        SlotRef::CbReplSgn { instance, ordinal } => cb_by_label(world, instance)
            .and_then(|i| i.repl_sgn.get(*ordinal).copied())
            .ok_or_else(|| missing("cb replicator slot")),
        SlotRef::RbEchoMsg { instance, ordinal } => rb_by_label(world, instance)
            .and_then(|i| i.echo_msg.get(*ordinal).copied())
            .ok_or_else(|| missing("rb echo slot")),
        SlotRef::RbEchoSgn { instance, ordinal } => rb_by_label(world, instance)
            .and_then(|i| i.echo_sgn.get(*ordinal).copied())
            .ok_or_else(|| missing("rb echo slot")),
        SlotRef::RbReady { instance, ordinal } => rb_by_label(world, instance)
            .and_then(|i| i.ready_msg.get(*ordinal).copied())
            .ok_or_else(|| missing("rb ready slot")),
    }
}

/// Signature domain for `SignAndWrite` targets (signature slots only; writing
/// odd bytes into message slots is what `Write` is for).
fn signing_domain(world: &World, slot: &SlotRef) -> Result<SigDomain, RunError> {
    match slot {
        SlotRef::CbSenderSgn { instance } | SlotRef::CbReplSgn { instance, .. } => {
            cb_by_label(world, instance)
                .map(|i| i.sig_domain())
                .ok_or_else(|| RunError::ScenarioInvalid(format!("unknown cb instance {instance}")))
        }
        SlotRef::RbEchoSgn { instance, .. } => rb_by_label(world, instance)
            .map(|i| i.echo_domain())
            .ok_or_else(|| RunError::ScenarioInvalid(format!("unknown rb instance {instance}"))),
        other => Err(RunError::ScenarioInvalid(format!(
            "sign-and-write targets a non-signature slot: {other:?}"
        ))),
    }
}

/// Canned attack scripts by name. `instance` is the broadcast instance label;
/// `ordinal` is the corrupted process's replicator ordinal where relevant.
/// Consensus-level misbehavior (silent primary, commit lies, view-change
/// lies) is configured as a replica deviation at setup, not as a script, and
/// timed sleeps are world-level faults — neither appears here.
pub fn builtin_script(name: &str, instance: &str, ordinal: usize) -> Option<Vec<ScriptStep>> {
    let step = |wait: Option<Trigger>, action: ByzAction| ScriptStep { wait, action };
    let sender_msg = SlotRef::CbSenderMsg { instance: instance.into() };
    let sender_sgn = SlotRef::CbSenderSgn { instance: instance.into() };
    let repl_msg = SlotRef::CbReplMsg { instance: instance.into(), ordinal };
    let repl_sgn = SlotRef::CbReplSgn { instance: instance.into(), ordinal };
    match name {
        // Sender publishes m1 signed, then switches its slot to m2 signed.
        "equivocating-sender" => Some(vec![
            step(None, ByzAction::Write { slot: sender_msg.clone(), value: Some("m1".into()) }),
            step(None, ByzAction::SignAndWrite { slot: sender_sgn.clone(), value: "m1".into() }),
            step(None, ByzAction::Write { slot: sender_msg, value: Some("m2".into()) }),
            step(None, ByzAction::SignAndWrite { slot: sender_sgn, value: "m2".into() }),
        ]),
        // One process plays sender and replicator: fill both with signed m1,
        // and once some receiver has delivered, switch everything to m2. The
        // damage (a second receiver delivering m2) only materializes when the
        // receiver uses a one-shot collect instead of scan.
        "collect-breaker" => Some(vec![
            step(None, ByzAction::Write { slot: sender_msg.clone(), value: Some("m1".into()) }),
            step(None, ByzAction::SignAndWrite { slot: sender_sgn.clone(), value: "m1".into() }),
            step(None, ByzAction::Write { slot: repl_msg.clone(), value: Some("m1".into()) }),
            step(None, ByzAction::Copy { from: sender_sgn.clone(), to: repl_sgn.clone() }),
            step(
                Some(Trigger::EventAtLeast { kind: EventKind::Deliver, min: 1 }),
                ByzAction::Write { slot: sender_msg, value: Some("m2".into()) },
            ),
            step(None, ByzAction::SignAndWrite { slot: sender_sgn.clone(), value: "m2".into() }),
            step(None, ByzAction::Write { slot: repl_msg, value: Some("m2".into()) }),
            step(None, ByzAction::Copy { from: sender_sgn, to: repl_sgn }),
        ]),
        // Replicator copies honestly, then erases its slot after a delivery.
        "overwrite-after-fastpath" => Some(vec![
            step(None, ByzAction::Copy { from: sender_msg, to: repl_msg.clone() }),
            step(None, ByzAction::Copy { from: sender_sgn, to: repl_sgn.clone() }),
            step(
                Some(Trigger::EventAtLeast { kind: EventKind::Deliver, min: 1 }),
                ByzAction::Write { slot: repl_msg, value: None },
            ),
            step(None, ByzAction::Write { slot: repl_sgn, value: None }),
        ]),
        // Replicator lets its honest tasks build a ready certificate, then
        // retracts it (erases the slot) once it is published.
        "readyset-retractor" => Some(vec![step(
            Some(Trigger::WritesTo { path_prefix: format!("{instance}/ready/{ordinal}"), min: 1 }),
            ByzAction::Write { slot: SlotRef::RbReady { instance: instance.into(), ordinal }, value: None },
        )]),
        _ => None,
    }
}

/// Deterministic random script for fuzzing: `len` actions over the given
/// owned/foreign slots, drawing values from `values`, with occasional
/// event-count gates so actions spread across the run.
pub fn random_script(
    seed: u64,
    own: &[SlotRef],
    foreign: &[SlotRef],
    values: &[&str],
    len: usize,
) -> Vec<ScriptStep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::with_capacity(len);
    if own.is_empty() || values.is_empty() {
        return steps;
    }
    for _ in 0..len {
        let wait = if rng.gen_bool(0.3) {
            Some(Trigger::EventAtLeast {
                kind: EventKind::RegisterWrite,
                min: rng.gen_range(1..40),
            })
        } else {
            None
        };
        let slot = own[rng.gen_range(0..own.len())].clone();
        let value = values[rng.gen_range(0..values.len())].to_string();
        let action = match rng.gen_range(0..100u32) {
            0..=44 => ByzAction::Write {
                slot,
                value: if rng.gen_bool(0.15) { None } else { Some(value) },
            },
            45..=74 => {
                // Signature slots only; fall back to a plain write elsewhere.
                match &slot {
                    SlotRef::CbSenderSgn { .. }
                    | SlotRef::CbReplSgn { .. }
                    | SlotRef::RbEchoSgn { .. } => ByzAction::SignAndWrite { slot, value },
                    _ => ByzAction::Write { slot, value: Some(value) },
                }
            }
            _ => {
                if foreign.is_empty() {
                    ByzAction::Write { slot, value: Some(value) }
                } else {
                    ByzAction::Copy {
                        from: foreign[rng.gen_range(0..foreign.len())].clone(),
                        to: slot,
                    }
                }
            }
        };
        steps.push(ScriptStep { wait, action });
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::world::SimParams;
    use crate::types::SystemConfig;

    fn small_world() -> World {
        let cfg = SystemConfig { num_processes: 4, f: 1, replicators: vec![0, 1, 2] };
        World::new(cfg, SimParams::default(), true).unwrap()
    }

    #[test]
    fn script_steps_unlock_in_order_and_honor_triggers() {
        let mut world = small_world();
        let id = crate::cb::create_instance(&mut world, 0, "cb/0");
        let _ = id;
        world.adversary.install_script(
            0,
            vec![
                ScriptStep {
                    wait: None,
                    action: ByzAction::Write {
                        slot: SlotRef::CbSenderMsg { instance: "cb/0".into() },
                        value: Some("m1".into()),
                    },
                },
                ScriptStep {
                    wait: Some(Trigger::EventAtLeast { kind: EventKind::Deliver, min: 1 }),
                    action: ByzAction::Write {
                        slot: SlotRef::CbSenderMsg { instance: "cb/0".into() },
                        value: Some("m2".into()),
                    },
                },
            ],
        );
        assert_eq!(world.adversary.procs_with_queued_actions(), vec![0]);
        run_script_action(&mut world, 0).unwrap();
        // Second step is gated on a delivery that has not happened.
        assert!(world.adversary.procs_with_queued_actions().is_empty());
        world.emit(
            EventKind::Deliver,
            3,
            Payload::Deliver {
                instance: "cb/0".into(),
                value: "6d31".into(),
                path: crate::types::DeliveryPath::Fast,
            },
        );
        assert_eq!(world.adversary.procs_with_queued_actions(), vec![0]);
        run_script_action(&mut world, 0).unwrap();
        assert!(world.adversary.procs_with_queued_actions().is_empty());
        let reg = world.cb[0].sender_msg;
        assert_eq!(world.regs.get(reg).value, Some(Blob::from("m2")));
    }

    #[test]
    fn foreign_register_writes_are_rejected() {
        let mut world = small_world();
        crate::cb::create_instance(&mut world, 0, "cb/0");
        // Process 1 (replicator ordinal 1) tries to write ordinal 2's slot.
        let err = execute(
            &mut world,
            1,
            &ByzAction::Write {
                slot: SlotRef::CbReplMsg { instance: "cb/0".into(), ordinal: 2 },
                value: Some("x".into()),
            },
        )
        .unwrap_err();
        assert!(matches!(err, RunError::OwnershipViolation { .. }));
    }

    #[test]
    fn sign_and_write_publishes_a_verifiable_token() {
        let mut world = small_world();
        crate::cb::create_instance(&mut world, 0, "cb/0");
        execute(
            &mut world,
            0,
            &ByzAction::SignAndWrite {
                slot: SlotRef::CbSenderSgn { instance: "cb/0".into() },
                value: "m1".into(),
            },
        )
        .unwrap();
        let token = world.regs.get(world.cb[0].sender_sgn).value.clone().unwrap();
        let domain = world.cb[0].sig_domain();
        assert!(world.verify_token(3, token.as_slice(), 0, &domain, b"m1"));
        // Same token fails verification against a different claimed signer.
        assert!(!world.verify_token(3, token.as_slice(), 1, &domain, b"m1"));
    }

    #[test]
    fn menu_budget_limits_replays() {
        let mut world = small_world();
        crate::cb::create_instance(&mut world, 0, "cb/0");
        world.adversary.install_menu(
            0,
            vec![ByzAction::Write {
                slot: SlotRef::CbSenderMsg { instance: "cb/0".into() },
                value: Some("z".into()),
            }],
            2,
        );
        assert_eq!(world.adversary.available_menu_actions(), vec![(0, 0)]);
        run_menu_action(&mut world, 0, 0).unwrap();
        run_menu_action(&mut world, 0, 0).unwrap();
        assert!(world.adversary.available_menu_actions().is_empty());
        assert!(run_menu_action(&mut world, 0, 0).is_err());
    }

    #[test]
    fn write_prefix_triggers_count_all_matching_registers() {
        let mut rt = AdversaryRuntime::default();
        let ev = |reg: &str| Event {
            step: 0,
            kind: EventKind::RegisterWrite,
            actor: 0,
            payload: Payload::Reg { reg: reg.into(), value: Some("aa".into()) },
        };
        rt.observe(&ev("rb/0/ready/2"));
        rt.observe(&ev("rb/0/ready/1"));
        rt.observe(&ev("rb/0/echo/2/msg"));
        let t = Trigger::WritesTo { path_prefix: "rb/0/ready".into(), min: 2 };
        assert!(rt.trigger_met(&t));
        let t3 = Trigger::WritesTo { path_prefix: "rb/0/ready".into(), min: 3 };
        assert!(!rt.trigger_met(&t3));
    }

    #[test]
    fn builtin_scripts_exist_for_the_memory_level_attacks() {
        for name in [
            "equivocating-sender",
            "collect-breaker",
            "overwrite-after-fastpath",
            "readyset-retractor",
        ] {
            assert!(builtin_script(name, "cb/0", 2).is_some(), "missing builtin {name}");
        }
        assert!(builtin_script("silent-primary", "cb/0", 0).is_none());
    }

    #[test]
    fn random_scripts_are_deterministic_per_seed() {
        let own = [SlotRef::CbReplMsg { instance: "cb/0".into(), ordinal: 1 }];
        let foreign = [SlotRef::CbSenderMsg { instance: "cb/0".into() }];
        let a = random_script(7, &own, &foreign, &["m1", "m2"], 12);
        let b = random_script(7, &own, &foreign, &["m1", "m2"], 12);
        let c = random_script(8, &own, &foreign, &["m1", "m2"], 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 12);
    }
}
