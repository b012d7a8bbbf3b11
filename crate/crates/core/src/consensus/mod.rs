//! View-based weak Byzantine agreement over broadcast streams.
//!
//! The `n = 2f+1` replicator processes double as consensus replicas. Every
//! replica owns a FIFO stream of consistent-broadcast instances (labelled
//! `c/{pid}/{seq}`); all its consensus messages travel there, and receivers
//! release each stream strictly in order, so all correct processes see
//! identical per-author prefixes. That shared prefix is what message
//! validity is judged against.
//!
//! Views rotate round-robin. In view `v`:
//!
//! * **Phase 1** — the primary broadcasts `Prepare(v, val, proof)`. Replicas
//!   accept a valid proposal (`aux := val`) or fall back to `aux := ⊥` on an
//!   invalid one or a timeout.
//! * **Phase 2** — everyone broadcasts `Commit(v, aux)` and waits until a
//!   quorum of valid commits arrived and every other replica either
//!   committed or timed out. A replica decides `val` when a quorum committed
//!   `val` and its own `aux` agrees. Nothing here is signed: in the common
//!   case the decision is reached with zero signing events.
//! * **Phase 3** — view change. Each replica signs a `ViewChange(v+1, tuple)`
//!   restating its latest accepted value; peers that find it consistent with
//!   the author's whole commit history co-sign an ack. A view change plus
//!   `n−f−1` acks forms a transferable certificate, and a quorum of
//!   pairwise-compatible certificates justifies entering view `v+1` (and
//!   pins the only value the new primary may propose, if any). Replicas keep
//!   participating after deciding so laggards can still make progress.

pub mod messages;
pub mod validity;

pub use messages::{
    ack_domain, vc_domain, Certificate, ConsensusMsg, Proof, SignedAck, SignedViewChange,
    VcTuple, ViewChangeBody,
};

use crate::cb::{self, ScanMode, TdStep, TryDeliver};
use crate::substrate::trace::{EventKind, Payload};
use crate::substrate::world::{Machine, TaskStatus, World};
use crate::substrate::{RegisterFile, RegisterId};
use crate::types::{Blob, ProcessId, RunError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use validity::primary_ordinal;

/// Protocol phase of one replica (suffix encodes pending work: `*Send`
/// phases perform one broadcast, `*Wait` phases evaluate conditions).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Phase {
    P1Send,
    P1Wait,
    P2Send,
    P2Wait,
    P3Send,
    P3Wait,
}

/// Byzantine behavior knob for a replica. Deviations lie at the protocol
/// level; the underlying broadcast mechanics stay honest (a deviating
/// process still cannot forge signatures or break FIFO order).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Deviation {
    #[default]
    None,
    /// Sends nothing at all (but keeps copying and delivering).
    Silent,
    /// Commits this value regardless of what it accepted.
    CommitLie(Blob),
    /// Sends a view change claiming a fabricated acceptance.
    VcLie(Blob),
}

/// Outgoing stream bookkeeping for one author.
#[derive(Clone, Debug, Default, Serialize)]
pub struct StreamState {
    pub next_seq: u64,
    /// seq → broadcast instance, for receivers' cursors.
    pub instances: BTreeMap<u64, cb::CbId>,
}

/// One replica's consensus state, shared by its main/pump/ack tasks.
#[derive(Clone, Debug, Serialize)]
pub struct ReplicaCell {
    pub view: u64,
    pub phase: Phase,
    pub initial: Option<Blob>,
    /// Estimate carried out of the last view change (None = free choice).
    pub est: Option<Blob>,
    /// Proof justifying `view` (empty for view 0); sent with a Prepare if
    /// this replica is primary.
    pub next_proof: Proof,
    /// Phase-1 outcome for the current view: unset / accepted val / ⊥.
    pub aux: Option<Option<Blob>>,
    /// Latest accepted proposal (what our view changes restate).
    pub vc: VcTuple,
    pub decided: Option<(u64, Blob)>,
    /// FIFO delivery prefix per author ordinal.
    pub history: Vec<Vec<ConsensusMsg>>,
    /// Next sequence number to deliver per author ordinal.
    pub cursor: Vec<u64>,
    /// View changes awaiting an ack decision: (author ordinal, prefix length
    /// at delivery, message).
    pub pending_acks: Vec<(usize, usize, SignedViewChange)>,
    /// Digests already ack-evaluated (either acked or rejected).
    pub acked: BTreeSet<String>,
    pub vcs_by_digest: BTreeMap<String, SignedViewChange>,
    pub acks_by_digest: BTreeMap<String, BTreeMap<ProcessId, SignedAck>>,
    /// Assembled certificates by target view.
    pub certs: BTreeMap<u64, Vec<Certificate>>,
    cert_digests: BTreeMap<u64, BTreeSet<String>>,
    /// Timeouts that fired: (view, phase).
    pub t_fired: BTreeSet<(u64, u8)>,
    pub deviation: Deviation,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsensusRun {
    /// The replicas, by ordinal (== the system's replicators).
    pub replicas: Vec<ProcessId>,
    pub streams: Vec<StreamState>,
    pub cells: Vec<ReplicaCell>,
}

impl ConsensusRun {
    pub fn cfg_ordinal(&self, p: ProcessId) -> Option<usize> {
        self.replicas.iter().position(|&r| r == p)
    }
}

/// Install a consensus run and spawn every replica's task trio. `initial`
/// and `deviations` are per replica ordinal. Crash/sleep faults are applied
/// separately through the world.
pub fn setup(
    world: &mut World,
    initial: Vec<Option<Blob>>,
    deviations: Vec<Deviation>,
) -> Result<(), RunError> {
    if world.consensus.is_some() {
        return Err(RunError::ConfigInvalid("consensus already set up".into()));
    }
    let replicas = world.cfg.replicators.clone();
    let n = replicas.len();
    if initial.len() != n || deviations.len() != n {
        return Err(RunError::ConfigInvalid(format!(
            "consensus setup needs {n} initial values and deviations"
        )));
    }
    let cells = (0..n)
        .map(|o| ReplicaCell {
            view: 0,
            phase: if primary_ordinal(n, 0) == o { Phase::P1Send } else { Phase::P1Wait },
            initial: initial[o].clone(),
            est: None,
            next_proof: Vec::new(),
            aux: None,
            vc: VcTuple::initial(),
            decided: None,
            history: vec![Vec::new(); n],
            cursor: vec![0; n],
            pending_acks: Vec::new(),
            acked: BTreeSet::new(),
            vcs_by_digest: BTreeMap::new(),
            acks_by_digest: BTreeMap::new(),
            certs: BTreeMap::new(),
            cert_digests: BTreeMap::new(),
            t_fired: BTreeSet::new(),
            deviation: deviations[o].clone(),
        })
        .collect();
    world.consensus = Some(ConsensusRun {
        replicas: replicas.clone(),
        streams: vec![StreamState::default(); n],
        cells,
    });
    let primary = replicas[primary_ordinal(n, 0)];
    for (o, &pid) in replicas.iter().enumerate() {
        world.arm_timeout(pid, 0, 1, primary);
        world.spawn_ready(pid, Machine::ConsensusReplica(ReplicaMain { ordinal: o }));
        world.spawn_ready(pid, Machine::ConsensusPump(DeliveryPump::new(o)));
        world.spawn_ready(pid, Machine::ConsensusAcker(AckWorker { ordinal: o }));
    }
    Ok(())
}

/// Run `f` with the consensus state temporarily detached, so it can be
/// mutated alongside world operations without borrow gymnastics.
fn with_run<T>(world: &mut World, f: impl FnOnce(&mut World, &mut ConsensusRun) -> T) -> T {
    let mut run = world.consensus.take().expect("consensus run installed");
    let out = f(world, &mut run);
    world.consensus = Some(run);
    out
}

/// Broadcast the next message in `author`'s stream: a fresh broadcast
/// instance, the value published, copy loops spawned.
fn broadcast_from(
    world: &mut World,
    run: &mut ConsensusRun,
    author_ord: usize,
    msg: &ConsensusMsg,
) -> Result<(), RunError> {
    let author = run.replicas[author_ord];
    let seq = run.streams[author_ord].next_seq;
    run.streams[author_ord].next_seq += 1;
    let label = format!("c/{author}/{seq}");
    let id = cb::create_instance(world, author, &label);
    run.streams[author_ord].instances.insert(seq, id);
    cb::broadcast(world, id, msg.encode(), msg.view_tag())?;
    cb::spawn_replicators(world, id, &run.replicas.clone());
    Ok(())
}

fn wake_replica(world: &mut World, ordinal: usize) {
    world.wake_flagged(|m| matches!(m, Machine::ConsensusReplica(r) if r.ordinal == ordinal));
}

/// Timeout callback from the world: record and wake the replica.
pub fn on_timeout_fired(world: &mut World, replica: ProcessId, view: u64, phase: u8, _target: ProcessId) {
    let Some(run) = world.consensus.as_mut() else { return };
    let Some(o) = run.cfg_ordinal(replica) else { return };
    run.cells[o].t_fired.insert((view, phase));
    wake_replica(world, o);
}

// ---- delivery pump ---------------------------------------------------------------

/// Per-replica task that cb-delivers every author's stream in FIFO order and
/// feeds the replica's history. One pump serves all authors round-robin.
#[derive(Clone, Debug, Serialize)]
pub struct DeliveryPump {
    pub ordinal: usize,
    td: Option<(usize, TryDeliver)>,
    /// Authors whose head instance failed to deliver since the last block.
    attempted: BTreeSet<usize>,
    watches: BTreeMap<usize, Vec<(RegisterId, u32)>>,
    next_author: usize,
}

impl DeliveryPump {
    pub fn new(ordinal: usize) -> Self {
        DeliveryPump {
            ordinal,
            td: None,
            attempted: BTreeSet::new(),
            watches: BTreeMap::new(),
            next_author: 0,
        }
    }

    /// See [`RegisterFile::rebase_snapshot`].
    pub(crate) fn rebase_versions(&mut self, regs: &RegisterFile) {
        if let Some((_, td)) = &mut self.td {
            td.rebase_versions(regs);
        }
        for watch in self.watches.values_mut() {
            regs.rebase_snapshot(watch);
        }
    }

    pub fn step(&mut self, world: &mut World, me: ProcessId) -> Result<TaskStatus, RunError> {
        with_run(world, |world, run| self.step_in(world, run, me))
    }

    fn step_in(
        &mut self,
        world: &mut World,
        run: &mut ConsensusRun,
        me: ProcessId,
    ) -> Result<TaskStatus, RunError> {
        if let Some((author, mut td)) = self.td.take() {
            return match td.step(world, me)? {
                TdStep::Continue => {
                    self.td = Some((author, td));
                    Ok(world.ready_here())
                }
                TdStep::Delivered(bytes, _) => {
                    let msg = ConsensusMsg::decode(bytes.as_ref());
                    let cell = &mut run.cells[self.ordinal];
                    cell.history[author].push(msg.clone());
                    cell.cursor[author] += 1;
                    self.attempted.clear();
                    self.watches.clear();
                    handle_delivery(world, run, self.ordinal, author, &msg)?;
                    wake_replica(world, self.ordinal);
                    Ok(world.ready_here())
                }
                TdStep::NoDeliver => {
                    self.watches.insert(author, td.watch_baseline().to_vec());
                    self.attempted.insert(author);
                    Ok(world.ready_here())
                }
            };
        }
        let n = run.replicas.len();
        for k in 0..n {
            let a = (self.next_author + k) % n;
            if self.attempted.contains(&a) {
                continue;
            }
            let seq = run.cells[self.ordinal].cursor[a];
            if let Some(&id) = run.streams[a].instances.get(&seq) {
                self.next_author = (a + 1) % n;
                self.td = Some((a, TryDeliver::new(id, ScanMode::Scan)));
                return Ok(world.ready_here());
            }
        }
        // Every open head either delivered or was attempted: sleep until an
        // attempted instance's memory moves or a new instance appears (a new
        // broadcast wakes all pumps through the flag/regs wake).
        let union: Vec<(RegisterId, u32)> = self.watches.values().flatten().copied().collect();
        self.attempted.clear();
        self.watches.clear();
        if union.is_empty() {
            Ok(TaskStatus::BlockedOnFlag)
        } else {
            Ok(world.block_or_retry(union))
        }
    }
}

/// Post-delivery bookkeeping for message kinds with side tables.
fn handle_delivery(
    world: &mut World,
    run: &mut ConsensusRun,
    ordinal: usize,
    author_ord: usize,
    msg: &ConsensusMsg,
) -> Result<(), RunError> {
    let me = run.replicas[ordinal];
    let stream_author = run.replicas[author_ord];
    match msg {
        ConsensusMsg::ViewChange(svc) => {
            // A stream may only carry its own author's view changes.
            if svc.author != stream_author {
                return Ok(());
            }
            let target = svc.body.target_view;
            let body = svc.body.signing_bytes();
            if !world.verify_token(me, svc.token.as_ref(), svc.author, &vc_domain(target), &body) {
                return Ok(());
            }
            let digest = svc.digest();
            let cell = &mut run.cells[ordinal];
            if cell.vcs_by_digest.contains_key(&digest) {
                return Ok(());
            }
            cell.vcs_by_digest.insert(digest.clone(), svc.clone());
            if svc.author != me {
                let prefix_len = cell.history[author_ord].len() - 1;
                cell.pending_acks.push((author_ord, prefix_len, svc.clone()));
                let o = ordinal;
                world.wake_flagged(|m| matches!(m, Machine::ConsensusAcker(a) if a.ordinal == o));
            }
            try_assemble(world, run, ordinal, &digest);
        }
        ConsensusMsg::Ack(sa) => {
            if sa.author != stream_author {
                return Ok(());
            }
            let ok = world.verify_token(
                me,
                sa.token.as_ref(),
                sa.author,
                &ack_domain(sa.target_view),
                sa.vc_digest.as_bytes(),
            );
            if !ok {
                return Ok(());
            }
            let digest = sa.vc_digest.clone();
            run.cells[ordinal]
                .acks_by_digest
                .entry(digest.clone())
                .or_default()
                .insert(sa.author, sa.clone());
            try_assemble(world, run, ordinal, &digest);
        }
        ConsensusMsg::Prepare { .. } | ConsensusMsg::Commit { .. } | ConsensusMsg::Opaque(_) => {}
    }
    Ok(())
}

/// Combine a known view change with enough foreign acks into a certificate.
fn try_assemble(world: &mut World, run: &mut ConsensusRun, ordinal: usize, digest: &str) {
    let quorum = world.cfg.quorum();
    let cell = &mut run.cells[ordinal];
    let Some(svc) = cell.vcs_by_digest.get(digest) else { return };
    let target = svc.body.target_view;
    if cell
        .cert_digests
        .get(&target)
        .is_some_and(|d| d.contains(digest))
    {
        return;
    }
    let Some(acks) = cell.acks_by_digest.get(digest) else { return };
    let usable: Vec<SignedAck> = acks
        .values()
        .filter(|a| a.author != svc.author && a.target_view == target)
        .take(quorum.saturating_sub(1))
        .cloned()
        .collect();
    if usable.len() < quorum.saturating_sub(1) {
        return;
    }
    // Every component signature was verified at admission; the certificate
    // is sound by construction.
    let cert = Certificate { vc: svc.clone(), acks: usable };
    cell.certs.entry(target).or_default().push(cert);
    cell.cert_digests.entry(target).or_default().insert(digest.to_string());
}

// ---- ack worker ---------------------------------------------------------------------

/// Per-replica task that decides whether to co-sign other replicas' view
/// changes. Validation runs against the author's full FIFO prefix; correct
/// processes reach the same verdict, so one correct co-signature makes the
/// certificate trustworthy everywhere.
#[derive(Clone, Debug, Serialize)]
pub struct AckWorker {
    pub ordinal: usize,
}

impl AckWorker {
    pub fn step(&mut self, world: &mut World, me: ProcessId) -> Result<TaskStatus, RunError> {
        with_run(world, |world, run| {
            if run.cells[self.ordinal].deviation == Deviation::Silent {
                return Ok(TaskStatus::Done);
            }
            let cell = &mut run.cells[self.ordinal];
            if cell.pending_acks.is_empty() {
                return Ok(TaskStatus::BlockedOnFlag);
            }
            let (author_ord, prefix_len, svc) = cell.pending_acks.remove(0);
            let digest = svc.digest();
            if cell.acked.contains(&digest) {
                return Ok(world.ready_here());
            }
            cell.acked.insert(digest.clone());
            let prefix: Vec<ConsensusMsg> = cell.history[author_ord][..prefix_len].to_vec();
            if validity::validate_view_change(world, me, &prefix, &svc) {
                let target = svc.body.target_view;
                let token =
                    world.sign_token(me, me, &ack_domain(target), digest.as_bytes(), false, Some(target))?;
                let ack = SignedAck { author: me, target_view: target, vc_digest: digest, token };
                broadcast_from(world, run, self.ordinal, &ConsensusMsg::Ack(ack))?;
            }
            Ok(world.ready_here())
        })
    }
}

// ---- replica main ---------------------------------------------------------------------

/// The phase driver. All durable state lives in the replica's cell; this
/// machine evaluates conditions and performs at most one broadcast per step.
#[derive(Clone, Debug, Serialize)]
pub struct ReplicaMain {
    pub ordinal: usize,
}

impl ReplicaMain {
    pub fn step(&mut self, world: &mut World, me: ProcessId) -> Result<TaskStatus, RunError> {
        with_run(world, |world, run| self.step_in(world, run, me))
    }

    fn step_in(
        &mut self,
        world: &mut World,
        run: &mut ConsensusRun,
        me: ProcessId,
    ) -> Result<TaskStatus, RunError> {
        let n = run.replicas.len();
        let quorum = world.cfg.quorum();
        let o = self.ordinal;
        let (view, phase) = (run.cells[o].view, run.cells[o].phase);
        let primary_ord = primary_ordinal(n, view);
        let primary_pid = run.replicas[primary_ord];
        let silent = run.cells[o].deviation == Deviation::Silent;
        match phase {
            Phase::P1Send => {
                let cell = &run.cells[o];
                let val = cell
                    .est
                    .clone()
                    .or_else(|| cell.initial.clone())
                    .unwrap_or_else(|| Blob::from("no-input"));
                let proof = cell.next_proof.clone();
                run.cells[o].phase = Phase::P1Wait;
                if !silent {
                    broadcast_from(world, run, o, &ConsensusMsg::Prepare { view, val, proof })?;
                }
                Ok(world.ready_here())
            }
            Phase::P1Wait => {
                let fired = run.cells[o].t_fired.contains(&(view, 1));
                let found = validity::first_prepare_in(&run.cells[o].history[primary_ord], view)
                    .map(|(v, p)| (v.clone(), p.clone()));
                let resolution = match found {
                    Some((val, proof)) => {
                        if validity::validate_prepare(world, me, view, &val, &proof) {
                            Some(Some((val, proof)))
                        } else {
                            Some(None)
                        }
                    }
                    None if fired => Some(None),
                    None => None,
                };
                match resolution {
                    None => Ok(TaskStatus::BlockedOnFlag),
                    Some(accepted) => {
                        world.cancel_timeout(me, view, 1, primary_pid);
                        let cell = &mut run.cells[o];
                        match accepted {
                            Some((val, proof)) => {
                                cell.aux = Some(Some(val.clone()));
                                cell.vc = VcTuple { view, val: Some(val), proof };
                            }
                            None => cell.aux = Some(None),
                        }
                        cell.phase = Phase::P2Send;
                        Ok(world.ready_here())
                    }
                }
            }
            Phase::P2Send => {
                world.arm_timeout(me, view, 2, me);
                let aux = run.cells[o].aux.clone().expect("aux resolved before phase 2");
                let commit_val = match &run.cells[o].deviation {
                    Deviation::CommitLie(v) => Some(v.clone()),
                    _ => aux,
                };
                run.cells[o].phase = Phase::P2Wait;
                if !silent {
                    broadcast_from(world, run, o, &ConsensusMsg::Commit { view, val: commit_val })?;
                }
                Ok(world.ready_here())
            }
            Phase::P2Wait => {
                let fired = run.cells[o].t_fired.contains(&(view, 2));
                let mut vals: Vec<Option<Option<Blob>>> = vec![None; n];
                for j in 0..n {
                    let hist = &run.cells[o].history[j];
                    if let Some((pos, val)) = validity::first_commit_in(hist, view) {
                        if validity::commit_fifo_ok(hist, pos, view) {
                            vals[j] = Some(val.clone());
                        }
                    }
                }
                let valid = vals.iter().filter(|v| v.is_some()).count();
                let covered = fired || vals.iter().all(|v| v.is_some());
                if valid < quorum || !covered {
                    return Ok(TaskStatus::BlockedOnFlag);
                }
                // Enough of the view is settled; decide if a quorum committed
                // the value we ourselves accepted.
                let cell = &mut run.cells[o];
                if cell.decided.is_none() {
                    if let Some(Some(mine)) = cell.aux.clone() {
                        let agreeing = vals
                            .iter()
                            .flatten()
                            .filter(|v| v.as_ref() == Some(&mine))
                            .count();
                        if agreeing >= quorum {
                            cell.decided = Some((view, mine.clone()));
                            world.emit(
                                EventKind::Decide,
                                me,
                                Payload::Decide { view, value: mine.to_hex() },
                            );
                        }
                    }
                }
                world.cancel_timeout(me, view, 2, me);
                run.cells[o].phase = Phase::P3Send;
                Ok(world.ready_here())
            }
            Phase::P3Send => {
                let target = view + 1;
                run.cells[o].phase = Phase::P3Wait;
                if !silent {
                    let tuple = match &run.cells[o].deviation {
                        Deviation::VcLie(fake) => {
                            VcTuple { view, val: Some(fake.clone()), proof: Vec::new() }
                        }
                        _ => run.cells[o].vc.clone(),
                    };
                    let body = ViewChangeBody { target_view: target, tuple };
                    let bytes = body.signing_bytes();
                    let token =
                        world.sign_token(me, me, &vc_domain(target), &bytes, false, Some(target))?;
                    let svc = SignedViewChange { author: me, body, token };
                    broadcast_from(world, run, o, &ConsensusMsg::ViewChange(svc))?;
                }
                Ok(world.ready_here())
            }
            Phase::P3Wait => {
                let target = view + 1;
                let pool = run.cells[o].certs.get(&target).cloned().unwrap_or_default();
                let Some(proof) = pick_compatible(world, me, &pool, quorum) else {
                    return Ok(TaskStatus::BlockedOnFlag);
                };
                let est = validity::extract_est(world, me, &proof);
                let new_primary = run.replicas[primary_ordinal(n, target)];
                let cell = &mut run.cells[o];
                cell.est = est;
                cell.next_proof = proof;
                cell.view = target;
                cell.aux = None;
                cell.phase = if primary_ordinal(n, target) == o { Phase::P1Send } else { Phase::P1Wait };
                world.arm_timeout(me, target, 1, new_primary);
                Ok(world.ready_here())
            }
        }
    }
}

/// First quorum-size subset of the pool with distinct authors and no
/// pairwise conflict, searched in admission order (deterministic).
fn pick_compatible(
    world: &mut World,
    me: ProcessId,
    pool: &[Certificate],
    quorum: usize,
) -> Option<Proof> {
    fn go(
        world: &mut World,
        me: ProcessId,
        pool: &[Certificate],
        quorum: usize,
        start: usize,
        acc: &mut Vec<Certificate>,
        authors: &mut BTreeSet<ProcessId>,
    ) -> bool {
        if acc.len() == quorum {
            return true;
        }
        for i in start..pool.len() {
            let c = &pool[i];
            if authors.contains(&c.vc.author) {
                continue;
            }
            if acc.iter().any(|p| validity::certificates_conflict(world, me, p, c)) {
                continue;
            }
            acc.push(c.clone());
            authors.insert(c.vc.author);
            if go(world, me, pool, quorum, i + 1, acc, authors) {
                return true;
            }
            let popped = acc.pop().expect("just pushed");
            authors.remove(&popped.vc.author);
        }
        false
    }
    let mut acc = Vec::new();
    let mut authors = BTreeSet::new();
    go(world, me, pool, quorum, 0, &mut acc, &mut authors).then_some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::runner::{run, StopReason, StopWhen};
    use crate::substrate::world::SimParams;
    use crate::substrate::RoundRobin;
    use crate::types::SystemConfig;

    fn consensus_world(sim: SimParams) -> World {
        let cfg = SystemConfig { num_processes: 3, f: 1, replicators: vec![0, 1, 2] };
        World::new(cfg, sim, true).unwrap()
    }

    #[test]
    fn common_case_decides_in_view_zero_without_prior_signing() {
        // Signing is slow (latency beyond the whole run): the fast path must
        // carry the decision entirely without it.
        let sim = SimParams { sign_latency: 1_000_000, ..SimParams::default() };
        let mut world = consensus_world(sim);
        setup(
            &mut world,
            vec![Some(Blob::from("v")); 3],
            vec![Deviation::None, Deviation::None, Deviation::None],
        )
        .unwrap();
        let mut policy = RoundRobin::default();
        let out = run(&mut world, &mut policy, &StopWhen::AllDecided { replicas: vec![0, 1, 2] })
            .unwrap();
        assert_eq!(out.reason, StopReason::Condition);
        let run_state = world.consensus.as_ref().unwrap();
        for cell in &run_state.cells {
            assert_eq!(cell.decided, Some((0, Blob::from("v"))));
        }
        // No replica signed anything before its own decision.
        for &p in &[0usize, 1, 2] {
            let decide_at = world
                .trace
                .events
                .iter()
                .find(|e| e.kind == EventKind::Decide && e.actor == p)
                .map(|e| e.step)
                .unwrap();
            let early_sign = world
                .trace
                .events
                .iter()
                .any(|e| e.kind == EventKind::Sign && e.actor == p && e.step < decide_at);
            assert!(!early_sign, "replica {p} signed before deciding");
        }
    }

    #[test]
    fn crashed_primary_forces_a_view_change_and_view_one_decides() {
        let mut world = consensus_world(SimParams::default());
        world.crash(0); // the view-0 primary never speaks
        setup(
            &mut world,
            vec![Some(Blob::from("a")), Some(Blob::from("b")), Some(Blob::from("c"))],
            vec![Deviation::None; 3],
        )
        .unwrap();
        let mut policy = RoundRobin::default();
        let out =
            run(&mut world, &mut policy, &StopWhen::AllDecided { replicas: vec![1, 2] }).unwrap();
        assert_eq!(out.reason, StopReason::Condition, "stopped by {:?}", out.reason);
        let run_state = world.consensus.as_ref().unwrap();
        // View 0 produced only ⊥ commits; view 1's primary (replica 1) was
        // free to propose its own value, and both live replicas decided it.
        for o in [1usize, 2] {
            assert_eq!(run_state.cells[o].decided, Some((1, Blob::from("b"))));
        }
    }

    #[test]
    fn a_lying_view_change_collects_no_certificate() {
        // View 0 decides "a" everywhere; replica 2 then claims in every view
        // change that it accepted "evil". Its own stream carries an honest
        // Commit for "a", so the claim contradicts its history and correct
        // replicas refuse to co-sign: no certificate with a lying digest ever
        // forms, and the decided value survives all later view churn.
        let mut world = consensus_world(SimParams { max_steps: 25_000, ..SimParams::default() });
        setup(
            &mut world,
            vec![Some(Blob::from("a")), Some(Blob::from("b")), Some(Blob::from("c"))],
            vec![Deviation::None, Deviation::None, Deviation::VcLie(Blob::from("evil"))],
        )
        .unwrap();
        let mut policy = RoundRobin::default();
        let out = run(&mut world, &mut policy, &StopWhen::Never).unwrap();
        assert_eq!(out.reason, StopReason::MaxSteps, "view churn keeps the system busy");
        let run_state = world.consensus.as_ref().unwrap();
        for o in 0..3 {
            assert_eq!(run_state.cells[o].decided, Some((0, Blob::from("a"))));
        }
        // The liar's view changes are known everywhere but certified nowhere.
        let liar_digests: Vec<String> = run_state.cells[1]
            .vcs_by_digest
            .iter()
            .filter(|(_, svc)| svc.author == 2)
            .map(|(d, _)| d.clone())
            .collect();
        assert!(!liar_digests.is_empty(), "the lying view changes were delivered");
        for d in liar_digests {
            let certified = run_state.cells[1]
                .cert_digests
                .values()
                .any(|set| set.contains(&d));
            assert!(!certified, "a lying view change must not be certified");
        }
    }
}
