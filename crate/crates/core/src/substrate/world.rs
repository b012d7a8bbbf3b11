//! The simulated world: registers + links + signature ledger + tasks.
//!
//! Everything observable happens through a single-threaded event loop. The
//! unit of concurrency is a *task* — a resumable state machine owned by one
//! process. Each scheduler choice steps one task, and a task step performs at
//! most one shared-state access (register read, register write, message op),
//! so any interleaving the scheduler picks is a legal concurrent execution
//! and register accesses linearize in schedule order.
//!
//! Partial synchrony: before `gst` the scheduler (policy) is free to starve
//! tasks, delay deliveries and fire timers early. From `gst` on, any enabled
//! choice that has been continuously available for `delta` steps is forced to
//! run — that is the fairness contract liveness proofs rely on. "Steps" are
//! trace-event indices (`World::now`), one global monotone counter.
//!
//! Processes can be put to sleep and woken (modeling arbitrary delays) or
//! crashed (permanent). A crashed or sleeping process is simply never
//! scheduled; crash is irrevocable.

use crate::adversary::AdversaryRuntime;
use crate::cb::{self, CbId, CbInstance};
use crate::consensus::{self, ConsensusRun};
use crate::rb::{self, RbInstance};
use crate::sigs::{SigDomain, SigLedger};
use crate::substrate::links::Links;
use crate::substrate::register::{RegisterFile, RegisterId};
use crate::substrate::trace::{hex_of, Event, EventKind, Payload, Trace};
use crate::types::{Blob, ProcessId, RunError, SystemConfig};
use serde::Serialize;

/// Timing knobs for a run. All quantities are in steps (trace-event indices).
/// Fields omitted in a scenario file take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Global stabilization time: before it scheduling is adversarial, from
    /// it on the delta-fairness bound applies.
    pub gst: u64,
    /// Post-GST fairness bound: an enabled choice runs within this many steps.
    pub delta: u64,
    /// Hard stop; reaching it is reported (liveness signal), not an error.
    pub max_steps: u64,
    /// Steps between spawning a background signing task and the signature
    /// being ready. Models signing being much slower than memory/message ops.
    pub sign_latency: u64,
    /// Base timeout for consensus waits, in steps.
    pub timeout_base: u64,
    /// Additional timeout steps per elapsed view (timeouts grow so some view
    /// eventually stays stable long enough to decide).
    pub timeout_growth: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            gst: 0,
            delta: 5_000,
            max_steps: 100_000,
            sign_latency: 0,
            timeout_base: 2_000,
            timeout_growth: 1_000,
        }
    }
}

impl SimParams {
    pub fn timeout_steps(&self, view: u64) -> u64 {
        self.timeout_base + self.timeout_growth * view
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Health {
    Up,
    Asleep,
    Crashed,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProcState {
    pub health: Health,
    /// Step of the last health transition (wake fairness restarts here).
    pub since: u64,
    /// For a timed sleep: the step at which the runner wakes this process.
    pub wake_at: Option<u64>,
}

/// Scheduling state of a task.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TaskStatus {
    /// Runnable; `since` is when it last became runnable (fairness clock).
    Ready { since: u64 },
    /// Waiting for any watched register to move past the recorded version.
    BlockedOnRegs { watch: Vec<(RegisterId, u32)> },
    /// Waiting for the clock (background signing latency).
    BlockedUntil { step: u64 },
    /// Waiting for an explicit wake from protocol bookkeeping (new delivery,
    /// timeout, queued work).
    BlockedOnFlag,
    Done,
}

/// Every resumable state machine the scheduler can step.
#[derive(Clone, Debug, Serialize)]
pub enum Machine {
    CbSenderSign(cb::SenderSign),
    CbReplicator(cb::ReplicatorLoop),
    CbReceiver(cb::ReceiverLoop),
    RbReplicator(rb::ReplicatorMain),
    RbEchoSign(rb::EchoSign),
    RbReadyCopier(rb::ReadyCopier),
    RbReceiver(rb::ReceiverLoop),
    ConsensusReplica(consensus::ReplicaMain),
    ConsensusPump(consensus::DeliveryPump),
    ConsensusAcker(consensus::AckWorker),
    /// Placeholder while a machine is being stepped.
    Parked,
}

impl Machine {
    /// Short kebab-case tag for traces and counterexample paths.
    pub fn name(&self) -> &'static str {
        match self {
            Machine::CbSenderSign(_) => "cb-sender-sign",
            Machine::CbReplicator(_) => "cb-replicator",
            Machine::CbReceiver(_) => "cb-receiver",
            Machine::RbReplicator(_) => "rb-replicator",
            Machine::RbEchoSign(_) => "rb-echo-sign",
            Machine::RbReadyCopier(_) => "rb-ready-copier",
            Machine::RbReceiver(_) => "rb-receiver",
            Machine::ConsensusReplica(_) => "consensus-replica",
            Machine::ConsensusPump(_) => "consensus-pump",
            Machine::ConsensusAcker(_) => "consensus-acker",
            Machine::Parked => "parked",
        }
    }

    /// Rebase every register-version snapshot held inside the machine; see
    /// [`crate::substrate::RegisterFile::rebase_snapshot`].
    pub fn rebase_versions(&mut self, regs: &crate::substrate::RegisterFile) {
        match self {
            Machine::CbReceiver(m) => m.td.rebase_versions(regs),
            Machine::RbReplicator(m) => m.rebase_versions(regs),
            Machine::RbReadyCopier(m) => m.rebase_versions(regs),
            Machine::RbReceiver(m) => m.rebase_versions(regs),
            Machine::ConsensusPump(m) => m.rebase_versions(regs),
            Machine::CbSenderSign(_)
            | Machine::CbReplicator(_)
            | Machine::RbEchoSign(_)
            | Machine::ConsensusReplica(_)
            | Machine::ConsensusAcker(_)
            | Machine::Parked => {}
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Task {
    pub owner: ProcessId,
    pub status: TaskStatus,
    pub machine: Machine,
}

pub type TaskId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TimeoutState {
    Pending,
    Fired,
    Cancelled,
}

/// A pending consensus wait with an expiry. `phase` is 1 (waiting for the
/// primary's proposal) or 2 (waiting for a peer's commit).
#[derive(Clone, Debug, Serialize)]
pub struct TimeoutEntry {
    pub replica: ProcessId,
    pub view: u64,
    pub phase: u8,
    pub target: ProcessId,
    pub armed_at: u64,
    pub state: TimeoutState,
}

/// One schedulable choice. Enumeration order is canonical (deterministic).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Choice {
    RunTask(TaskId),
    /// Execute the next queued adversary action of a corrupted process.
    ScriptAction { proc: ProcessId },
    /// Execute one action from a model-checking adversary menu.
    MenuAction { proc: ProcessId, index: usize },
    FireTimeout(usize),
    DeliverMsg { from: ProcessId, to: ProcessId, index: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct World {
    pub cfg: SystemConfig,
    pub sim: SimParams,
    /// Global step counter == next trace event index.
    pub now: u64,
    pub regs: RegisterFile,
    pub links: Links,
    /// Delivered point-to-point messages, per recipient.
    pub inboxes: Vec<Vec<(ProcessId, Blob)>>,
    pub ledger: SigLedger,
    pub procs: Vec<ProcState>,
    pub tasks: Vec<Task>,
    pub cb: Vec<CbInstance>,
    pub rb: Vec<RbInstance>,
    pub consensus: Option<ConsensusRun>,
    pub timeouts: Vec<TimeoutEntry>,
    pub adversary: AdversaryRuntime,
    #[serde(skip)]
    pub trace: Trace,
}

impl World {
    pub fn new(cfg: SystemConfig, sim: SimParams, trace_enabled: bool) -> Result<World, RunError> {
        cfg.validate()?;
        let procs = (0..cfg.num_processes)
            .map(|_| ProcState { health: Health::Up, since: 0, wake_at: None })
            .collect();
        Ok(World {
            inboxes: vec![Vec::new(); cfg.num_processes],
            cfg,
            sim,
            now: 0,
            regs: RegisterFile::default(),
            links: Links::default(),
            ledger: SigLedger::default(),
            procs,
            tasks: Vec::new(),
            cb: Vec::new(),
            rb: Vec::new(),
            consensus: None,
            timeouts: Vec::new(),
            adversary: AdversaryRuntime::default(),
            trace: Trace::new(trace_enabled),
        })
    }

    // ---- events ----------------------------------------------------------

    /// Record an event; every event consumes one step index.
    pub fn emit(&mut self, kind: EventKind, actor: ProcessId, payload: Payload) {
        let ev = Event { step: self.now, kind, actor, payload };
        self.now += 1;
        self.adversary.observe(&ev);
        self.trace.push(ev);
    }

    pub fn note(&mut self, actor: ProcessId, task: &str, info: impl Into<String>) {
        self.emit(
            EventKind::ProtocolStep,
            actor,
            Payload::Note { task: task.into(), info: info.into() },
        );
    }

    // ---- registers --------------------------------------------------------

    /// Read any process's register (SWMR: reads are universal).
    pub fn reg_read(&mut self, actor: ProcessId, reg: RegisterId) -> Option<Blob> {
        let r = self.regs.get(reg);
        let value = r.value.clone();
        let path = r.path.clone();
        self.emit(
            EventKind::RegisterRead,
            actor,
            Payload::Reg { reg: path, value: hex_of(&value) },
        );
        value
    }

    /// Write one's own register. `None` (⊥) is accepted so adversary scripts
    /// can erase; correct protocol code always writes a value.
    pub fn reg_write(&mut self, actor: ProcessId, reg: RegisterId, value: Option<Blob>) -> Result<(), RunError> {
        let r = self.regs.get(reg);
        if r.owner != actor {
            return Err(RunError::OwnershipViolation {
                actor,
                owner: r.owner,
                reg: r.path.clone(),
            });
        }
        let path = r.path.clone();
        let r = self.regs.get_mut(reg);
        r.value = value.clone();
        r.version += 1;
        self.emit(
            EventKind::RegisterWrite,
            actor,
            Payload::Reg { reg: path, value: hex_of(&value) },
        );
        self.wake_watchers_of(reg);
        Ok(())
    }

    fn wake_watchers_of(&mut self, reg: RegisterId) {
        let now = self.now;
        let regs = &self.regs;
        for task in &mut self.tasks {
            if let TaskStatus::BlockedOnRegs { watch } = &task.status {
                if watch
                    .iter()
                    .any(|&(id, ver)| id == reg && regs.version(id) != ver)
                {
                    task.status = TaskStatus::Ready { since: now };
                }
            }
        }
    }

    // ---- messages ---------------------------------------------------------

    pub fn send(&mut self, from: ProcessId, to: ProcessId, payload: Blob) -> u64 {
        let id = self.links.push(from, to, payload);
        self.emit(EventKind::MsgSend, from, Payload::Msg { from, to, msg_id: id });
        id
    }

    pub fn deliver_msg(&mut self, from: ProcessId, to: ProcessId, index: usize) -> Result<(), RunError> {
        let m = self
            .links
            .take(from, to, index)
            .ok_or(RunError::NoSuchMessage { from, to, index })?;
        self.emit(EventKind::MsgDeliver, to, Payload::Msg { from, to, msg_id: m.msg_id });
        self.inboxes[to].push((from, m.payload));
        Ok(())
    }

    // ---- signatures -------------------------------------------------------

    /// Sign with one's own key. The signer check is what makes correct keys
    /// unforgeable — nothing else in the system can mint this ledger entry.
    pub fn sign_token(
        &mut self,
        actor: ProcessId,
        key: ProcessId,
        domain: &SigDomain,
        body: &[u8],
        background: bool,
        view: Option<u64>,
    ) -> Result<Blob, RunError> {
        if actor != key {
            return Err(RunError::SignerMismatch { actor, key });
        }
        let token = self.ledger.sign(key, domain, body, background);
        self.emit(
            EventKind::Sign,
            actor,
            Payload::Sign {
                signer: key,
                proto: domain.proto.clone(),
                instance: domain.instance.clone(),
                kind: domain.kind.clone(),
                background,
                digest: hex::encode(token.digest),
                view,
            },
        );
        Ok(token.encode())
    }

    /// Traced signature verification (used on broadcast receive paths).
    pub fn verify_token(
        &mut self,
        verifier: ProcessId,
        token_bytes: &[u8],
        expected_signer: ProcessId,
        domain: &SigDomain,
        body: &[u8],
    ) -> bool {
        let ok = self.ledger.check(token_bytes, expected_signer, domain, body);
        let digest = hex::encode(crate::sigs::payload_digest(domain, body));
        self.emit(
            EventKind::Verify,
            verifier,
            Payload::Verify { claimed_signer: expected_signer, digest, ok },
        );
        ok
    }

    // ---- process health ---------------------------------------------------

    pub fn health(&self, p: ProcessId) -> Health {
        self.procs[p].health
    }

    pub fn crash(&mut self, p: ProcessId) {
        self.procs[p] = ProcState { health: Health::Crashed, since: self.now, wake_at: None };
        self.emit(EventKind::Crash, p, Payload::Health {});
    }

    pub fn sleep(&mut self, p: ProcessId) {
        if self.procs[p].health == Health::Up {
            self.procs[p] = ProcState { health: Health::Asleep, since: self.now, wake_at: None };
            self.emit(EventKind::Sleep, p, Payload::Health {});
        }
    }

    /// Sleep with a scheduled wake: the runner calls [`World::auto_wake`]
    /// each iteration, so the process resumes once the clock reaches `step`.
    pub fn sleep_until(&mut self, p: ProcessId, step: u64) {
        self.sleep(p);
        if self.procs[p].health == Health::Asleep {
            self.procs[p].wake_at = Some(step);
        }
    }

    /// Wake every asleep process whose scheduled wake time has arrived.
    pub fn auto_wake(&mut self) {
        for p in 0..self.procs.len() {
            if self.procs[p].health == Health::Asleep
                && self.procs[p].wake_at.is_some_and(|w| w <= self.now)
            {
                self.wake(p).expect("asleep process is wakeable");
            }
        }
    }

    pub fn wake(&mut self, p: ProcessId) -> Result<(), RunError> {
        match self.procs[p].health {
            Health::Crashed => Err(RunError::WakeCrashed { proc: p }),
            Health::Asleep => {
                self.procs[p] = ProcState { health: Health::Up, since: self.now, wake_at: None };
                let now = self.now;
                for task in &mut self.tasks {
                    if task.owner == p {
                        if let TaskStatus::Ready { since } = &mut task.status {
                            *since = now; // sleep time does not count against fairness
                        }
                    }
                }
                self.emit(EventKind::Wake, p, Payload::Health {});
                Ok(())
            }
            Health::Up => Ok(()),
        }
    }

    // ---- tasks ------------------------------------------------------------

    pub fn spawn(&mut self, owner: ProcessId, machine: Machine, status: TaskStatus) -> TaskId {
        let id = self.tasks.len();
        self.tasks.push(Task { owner, status, machine });
        id
    }

    pub fn spawn_ready(&mut self, owner: ProcessId, machine: Machine) -> TaskId {
        let since = self.now;
        self.spawn(owner, machine, TaskStatus::Ready { since })
    }

    /// Wake every blocked task that `pred` selects (both flag- and
    /// register-blocked: a spurious wake only costs a re-evaluation, while a
    /// missed one is a deadlock). Sleep timers (`BlockedUntil`) are left
    /// alone — they model latency, not waiting.
    pub fn wake_flagged(&mut self, pred: impl Fn(&Machine) -> bool) {
        let now = self.now;
        for task in &mut self.tasks {
            if matches!(task.status, TaskStatus::BlockedOnFlag | TaskStatus::BlockedOnRegs { .. })
                && pred(&task.machine)
            {
                task.status = TaskStatus::Ready { since: now };
            }
        }
    }

    /// Mark all tasks of a process done (adversary "stops running the
    /// protocol" action).
    pub fn retire_tasks_of(&mut self, p: ProcessId) {
        for task in &mut self.tasks {
            if task.owner == p {
                task.status = TaskStatus::Done;
            }
        }
    }

    // ---- timeouts ----------------------------------------------------------

    /// Arm a consensus wait timeout (idempotent per key).
    pub fn arm_timeout(&mut self, replica: ProcessId, view: u64, phase: u8, target: ProcessId) {
        let exists = self.timeouts.iter().any(|t| {
            t.replica == replica && t.view == view && t.phase == phase && t.target == target
        });
        if !exists {
            self.timeouts.push(TimeoutEntry {
                replica,
                view,
                phase,
                target,
                armed_at: self.now,
                state: TimeoutState::Pending,
            });
        }
    }

    pub fn cancel_timeout(&mut self, replica: ProcessId, view: u64, phase: u8, target: ProcessId) {
        for t in &mut self.timeouts {
            if t.replica == replica
                && t.view == view
                && t.phase == phase
                && t.target == target
                && t.state == TimeoutState::Pending
            {
                t.state = TimeoutState::Cancelled;
            }
        }
    }

    /// Earliest step at which a pending timeout may fire under the post-GST
    /// rule: `timeout_steps(view)` must elapse, counted from arming or from
    /// GST, whichever is later (pre-GST time is unstable and does not count).
    pub fn timeout_deadline(&self, t: &TimeoutEntry) -> u64 {
        t.armed_at.max(self.sim.gst) + self.sim.timeout_steps(t.view)
    }

    pub fn fire_timeout(&mut self, index: usize) {
        let t = &mut self.timeouts[index];
        debug_assert_eq!(t.state, TimeoutState::Pending);
        t.state = TimeoutState::Fired;
        let (replica, view, phase, target) = (t.replica, t.view, t.phase, t.target);
        self.emit(
            EventKind::TimeoutFire,
            replica,
            Payload::Timeout { view, phase: format!("phase{phase}"), target },
        );
        consensus::on_timeout_fired(self, replica, view, phase, target);
    }

    // ---- scheduling -------------------------------------------------------

    /// All choices currently available, in canonical order.
    pub fn enumerate_choices(&self) -> Vec<Choice> {
        let mut out = Vec::new();
        for (id, task) in self.tasks.iter().enumerate() {
            if self.procs[task.owner].health != Health::Up {
                continue;
            }
            match &task.status {
                TaskStatus::Ready { .. } => out.push(Choice::RunTask(id)),
                TaskStatus::BlockedUntil { step } if self.now >= *step => {
                    out.push(Choice::RunTask(id))
                }
                _ => {}
            }
        }
        for &proc in self.adversary.procs_with_queued_actions().iter() {
            if self.procs[proc].health == Health::Up {
                out.push(Choice::ScriptAction { proc });
            }
        }
        for (proc, index) in self.adversary.available_menu_actions() {
            if self.procs[proc].health == Health::Up {
                out.push(Choice::MenuAction { proc, index });
            }
        }
        for (i, t) in self.timeouts.iter().enumerate() {
            if t.state != TimeoutState::Pending {
                continue;
            }
            if self.procs[t.replica].health != Health::Up {
                continue;
            }
            let available = if self.now < self.sim.gst {
                true // pre-GST: timers may fire early (clock drift)
            } else {
                self.now >= self.timeout_deadline(t)
            };
            if available {
                out.push(Choice::FireTimeout(i));
            }
        }
        for (&(from, to), q) in &self.links.queues {
            if self.procs[to].health != Health::Up {
                continue;
            }
            for index in 0..q.len() {
                out.push(Choice::DeliverMsg { from, to, index });
            }
        }
        out
    }

    /// Fairness clock for a choice: when it became continuously available.
    /// `None` for choices fairness never forces (adversary actions).
    pub fn choice_available_since(&self, c: &Choice) -> Option<u64> {
        match c {
            Choice::RunTask(id) => {
                let task = &self.tasks[*id];
                let base = match &task.status {
                    TaskStatus::Ready { since } => *since,
                    TaskStatus::BlockedUntil { step } => *step,
                    _ => return None,
                };
                Some(base.max(self.procs[task.owner].since))
            }
            Choice::FireTimeout(i) => Some(self.timeout_deadline(&self.timeouts[*i])),
            Choice::DeliverMsg { .. } => Some(0), // conservatively old; forced promptly post-GST
            Choice::ScriptAction { .. } | Choice::MenuAction { .. } => None,
        }
    }

    /// Indices (into `choices`) that the post-GST fairness rule forces now.
    pub fn forced_choices(&self, choices: &[Choice]) -> Vec<usize> {
        if self.now < self.sim.gst {
            return Vec::new();
        }
        let mut forced = Vec::new();
        for (i, c) in choices.iter().enumerate() {
            if let Some(since) = self.choice_available_since(c) {
                let effective = since.max(self.sim.gst);
                if self.now.saturating_sub(effective) >= self.sim.delta {
                    forced.push(i);
                }
            }
        }
        forced
    }

    /// Apply one choice. Always advances `now` by at least one step so no
    /// choice is a no-op for the clock.
    pub fn apply_choice(&mut self, choice: &Choice) -> Result<(), RunError> {
        let before = self.now;
        match choice {
            Choice::RunTask(id) => self.step_task(*id)?,
            Choice::ScriptAction { proc } => crate::adversary::run_script_action(self, *proc)?,
            Choice::MenuAction { proc, index } => {
                crate::adversary::run_menu_action(self, *proc, *index)?
            }
            Choice::FireTimeout(i) => self.fire_timeout(*i),
            Choice::DeliverMsg { from, to, index } => self.deliver_msg(*from, *to, *index)?,
        }
        if self.now == before {
            self.now += 1; // silent local transition
        }
        Ok(())
    }

    fn step_task(&mut self, id: TaskId) -> Result<(), RunError> {
        let mut machine = std::mem::replace(&mut self.tasks[id].machine, Machine::Parked);
        let owner = self.tasks[id].owner;
        debug_assert!(self.procs[owner].health == Health::Up);
        let status = match &mut machine {
            Machine::CbSenderSign(m) => m.step(self, owner),
            Machine::CbReplicator(m) => m.step(self, owner),
            Machine::CbReceiver(m) => m.step(self, owner),
            Machine::RbReplicator(m) => m.step(self, owner),
            Machine::RbEchoSign(m) => m.step(self, owner),
            Machine::RbReadyCopier(m) => m.step(self, owner),
            Machine::RbReceiver(m) => m.step(self, owner),
            Machine::ConsensusReplica(m) => m.step(self, owner),
            Machine::ConsensusPump(m) => m.step(self, owner),
            Machine::ConsensusAcker(m) => m.step(self, owner),
            Machine::Parked => unreachable!("parked machine scheduled"),
        }?;
        self.tasks[id].machine = machine;
        self.tasks[id].status = status;
        Ok(())
    }

    /// Next step at which something new can become available (sleeping tasks,
    /// post-GST timeout deadlines). Used by the runner to jump over idle time.
    pub fn next_wakeup(&self) -> Option<u64> {
        let mut next: Option<u64> = None;
        let mut consider = |step: u64| {
            if step > 0 {
                next = Some(next.map_or(step, |n: u64| n.min(step)));
            }
        };
        for (id, task) in self.tasks.iter().enumerate() {
            let _ = id;
            if self.procs[task.owner].health != Health::Up {
                continue;
            }
            if let TaskStatus::BlockedUntil { step } = task.status {
                if step > self.now {
                    consider(step);
                }
            }
        }
        for p in &self.procs {
            if p.health == Health::Asleep {
                if let Some(w) = p.wake_at {
                    if w > self.now {
                        consider(w);
                    }
                }
            }
        }
        if self.now >= self.sim.gst {
            for t in &self.timeouts {
                if t.state == TimeoutState::Pending && self.procs[t.replica].health == Health::Up {
                    let d = self.timeout_deadline(t);
                    if d > self.now {
                        consider(d);
                    }
                }
            }
        } else {
            consider(self.sim.gst);
        }
        next
    }

    pub fn ready_here(&self) -> TaskStatus {
        TaskStatus::Ready { since: self.now }
    }

    /// Helper used by machines: block watching a register set at its current
    /// versions. Only safe when the blocking decision follows the reads in
    /// the *same* task step; multi-step collectors must baseline versions at
    /// attempt start and use [`World::block_or_retry`] instead.
    pub fn block_on_regs(&self, regs: impl IntoIterator<Item = RegisterId>) -> TaskStatus {
        TaskStatus::BlockedOnRegs { watch: self.reg_versions(regs) }
    }

    /// Snapshot current versions of a register set. Scheduler bookkeeping
    /// only (versions are not protocol-visible state): this is how a blocking
    /// task simulates the algorithm's busy-wait without missing a write that
    /// lands mid-collect.
    pub fn reg_versions(&self, regs: impl IntoIterator<Item = RegisterId>) -> Vec<(RegisterId, u32)> {
        regs.into_iter().map(|r| (r, self.regs.version(r))).collect()
    }

    /// Block on a version baseline captured at attempt start — unless some
    /// watched register already moved since then, in which case the attempt
    /// was computed over stale reads and must retry immediately.
    pub fn block_or_retry(&self, watch: Vec<(RegisterId, u32)>) -> TaskStatus {
        if self.regs.any_changed(&watch) {
            self.ready_here()
        } else {
            TaskStatus::BlockedOnRegs { watch }
        }
    }

    // ---- instance lookup helpers -----------------------------------------

    pub fn cb_instance(&self, id: CbId) -> &CbInstance {
        &self.cb[id.0 as usize]
    }

    pub fn cb_instance_mut(&mut self, id: CbId) -> &mut CbInstance {
        &mut self.cb[id.0 as usize]
    }
}
