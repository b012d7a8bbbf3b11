//! Reliable broadcast layered on consistent broadcast.
//!
//! Adds *totality* to consistent broadcast: if any correct receiver delivers,
//! every correct receiver eventually delivers, even with a Byzantine sender.
//!
//! Structure per instance:
//!
//! * An inner consistent-broadcast instance carries the sender's **init**
//!   value to the replicators; each replicator cb-delivers it with a scan.
//! * Each replicator then publishes the value in its own **echo** slot
//!   (`msg` immediately, a signature over the value in `sgn` via a
//!   background task).
//! * A replicator that collects `n−f` verifying echo signatures on one value
//!   bundles them into a **ready certificate** and writes it to its own
//!   ready slot (plain value, no new signature). A background copier also
//!   adopts the lowest-indexed valid certificate it finds in anyone else's
//!   ready slot, so certificates spread without extra signing.
//! * Receivers collect: fast path delivers when all n echo values agree
//!   (no signature checks at all); slow path delivers a value that `n−f`
//!   ready slots certify.
//!
//! Signing stays frugal: the init signature plus one echo signature per
//! replicator — `n+1` signing events among correct processes, all off the
//! critical path of the fast case.

use crate::cb::{self, CbId, ScanMode, TdStep, TryDeliver};
use crate::sigs::SigDomain;
use crate::substrate::trace::{EventKind, Payload};
use crate::substrate::world::{Machine, TaskStatus, World};
use crate::substrate::{RegisterFile, RegisterId};
use crate::types::{Blob, DeliveryPath, ProcessId, RunError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Handle to a reliable-broadcast instance (index into `World::rb`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RbId(pub u32);

/// Per-replicator protocol flags shared by that replicator's tasks.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RbCell {
    pub echoed: bool,
    pub ready_written: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RbInstance {
    pub id: RbId,
    pub label: String,
    pub sender: ProcessId,
    pub init_cb: CbId,
    pub echo_msg: Vec<RegisterId>,
    pub echo_sgn: Vec<RegisterId>,
    pub ready_msg: Vec<RegisterId>,
    pub cells: Vec<RbCell>,
    pub delivered: BTreeMap<ProcessId, (Blob, DeliveryPath)>,
}

impl RbInstance {
    pub fn echo_domain(&self) -> SigDomain {
        SigDomain::new("rb", &self.label, "echo")
    }
}

/// A ready certificate: `n−f` echo signatures on one value, one per distinct
/// replicator ordinal. Carried as a register value (JSON blob); holding one
/// proves the value is the unique echo of the correct majority, so copying
/// it needs no further signing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReadyCert {
    pub value: Blob,
    /// (replicator ordinal, signature token bytes)
    pub entries: Vec<(usize, Blob)>,
}

impl ReadyCert {
    pub fn encode(&self) -> Blob {
        Blob::from(serde_json::to_vec(self).expect("ready certificate serializes"))
    }

    pub fn decode(bytes: &[u8]) -> Option<ReadyCert> {
        serde_json::from_slice(bytes).ok()
    }
}

/// Full check of a ready certificate: quorum size, distinct ordinals, every
/// token a valid echo signature by that ordinal's replicator over `value`.
/// Returns the certified value. Verification events are charged to `me`.
pub fn validate_ready_cert(world: &mut World, me: ProcessId, rb: RbId, bytes: &[u8]) -> Option<Blob> {
    let cert = ReadyCert::decode(bytes)?;
    let inst = &world.rb[rb.0 as usize];
    let domain = inst.echo_domain();
    let quorum = world.cfg.quorum();
    let replicators = world.cfg.replicators.clone();
    if cert.entries.len() < quorum {
        return None;
    }
    let mut seen = std::collections::BTreeSet::new();
    for (ordinal, token) in &cert.entries {
        if *ordinal >= replicators.len() || !seen.insert(*ordinal) {
            return None;
        }
        let signer = replicators[*ordinal];
        if !world.verify_token(me, token.as_ref(), signer, &domain, cert.value.as_ref()) {
            return None;
        }
    }
    Some(cert.value)
}

pub fn create_instance(world: &mut World, sender: ProcessId, label: &str) -> RbId {
    let id = RbId(world.rb.len() as u32);
    let init_cb = cb::create_instance(world, sender, &format!("{label}/init"));
    let mut echo_msg = Vec::new();
    let mut echo_sgn = Vec::new();
    let mut ready_msg = Vec::new();
    for (ordinal, &r) in world.cfg.replicators.clone().iter().enumerate() {
        echo_msg.push(world.regs.alloc(r, format!("{label}/echo/{ordinal}/msg")));
        echo_sgn.push(world.regs.alloc(r, format!("{label}/echo/{ordinal}/sgn")));
        ready_msg.push(world.regs.alloc(r, format!("{label}/ready/{ordinal}")));
    }
    let cells = vec![RbCell::default(); world.cfg.replicators.len()];
    world.rb.push(RbInstance {
        id,
        label: label.to_string(),
        sender,
        init_cb,
        echo_msg,
        echo_sgn,
        ready_msg,
        cells,
        delivered: BTreeMap::new(),
    });
    id
}

pub fn broadcast(world: &mut World, rb: RbId, value: Blob) -> Result<(), RunError> {
    let init_cb = world.rb[rb.0 as usize].init_cb;
    cb::broadcast(world, init_cb, value, None)
}

/// Spawn the full replicator side (inner copy loop, echo/ready main task,
/// certificate copier) for each listed replicator.
pub fn spawn_replicators(world: &mut World, rb: RbId, run_for: &[ProcessId]) {
    let init_cb = world.rb[rb.0 as usize].init_cb;
    cb::spawn_replicators(world, init_cb, run_for);
    for &r in run_for {
        let ordinal = world
            .cfg
            .ordinal_of(r)
            .expect("replicator task spawned for non-replicator");
        world.spawn_ready(r, Machine::RbReplicator(ReplicatorMain::new(rb, init_cb, ordinal)));
        world.spawn_ready(r, Machine::RbReadyCopier(ReadyCopier::new(rb, ordinal)));
    }
}

pub fn spawn_receiver(world: &mut World, rb: RbId, receiver: ProcessId) {
    world.spawn_ready(receiver, Machine::RbReceiver(ReceiverLoop::new(rb)));
}

// ---- replicator main task ----------------------------------------------------

#[derive(Clone, Debug, Serialize)]
enum ReplPc {
    /// cb-deliver the init value.
    AwaitInit(TryDeliver),
    /// One register write: publish the value in the echo msg sub-slot.
    WriteEcho(Blob),
    /// Paired collect of all echo slots; `view` mirrors cb slot views.
    /// `baseline` holds slot versions at attempt start.
    CollectEchoes {
        value: Blob,
        idx: usize,
        sub: u8,
        view: Vec<(Option<Blob>, Option<Blob>)>,
        baseline: Vec<(RegisterId, u32)>,
    },
    /// One register write: publish an assembled certificate.
    WriteReady(ReadyCert),
}

/// Replicator state machine: init delivery → echo → certificate assembly.
#[derive(Clone, Debug, Serialize)]
pub struct ReplicatorMain {
    pub rb: RbId,
    pub ordinal: usize,
    pc: ReplPc,
}

impl ReplicatorMain {
    pub fn new(rb: RbId, init_cb: CbId, ordinal: usize) -> Self {
        ReplicatorMain {
            rb,
            ordinal,
            pc: ReplPc::AwaitInit(TryDeliver::new(init_cb, ScanMode::Scan)),
        }
    }

    /// See [`RegisterFile::rebase_snapshot`].
    pub(crate) fn rebase_versions(&mut self, regs: &RegisterFile) {
        match &mut self.pc {
            ReplPc::AwaitInit(td) => td.rebase_versions(regs),
            ReplPc::CollectEchoes { baseline, .. } => regs.rebase_snapshot(baseline),
            ReplPc::WriteEcho(_) | ReplPc::WriteReady(_) => {}
        }
    }

    pub fn step(&mut self, world: &mut World, me: ProcessId) -> Result<TaskStatus, RunError> {
        let rb = self.rb;
        match &mut self.pc {
            ReplPc::AwaitInit(td) => match td.step(world, me)? {
                TdStep::Continue => Ok(world.ready_here()),
                TdStep::Delivered(v, _) => {
                    self.pc = ReplPc::WriteEcho(v);
                    Ok(world.ready_here())
                }
                TdStep::NoDeliver => Ok(td.blocked_status(world)),
            },
            ReplPc::WriteEcho(v) => {
                let value = v.clone();
                let inst = &world.rb[rb.0 as usize];
                let (echo_reg, n) = (inst.echo_msg[self.ordinal], inst.echo_msg.len());
                world.reg_write(me, echo_reg, Some(value.clone()))?;
                world.rb[rb.0 as usize].cells[self.ordinal].echoed = true;
                let wake_at = world.now + world.sim.sign_latency;
                world.spawn(
                    me,
                    Machine::RbEchoSign(EchoSign { rb, ordinal: self.ordinal, value: value.clone() }),
                    TaskStatus::BlockedUntil { step: wake_at },
                );
                let baseline = echo_baseline(world, rb);
                self.pc = ReplPc::CollectEchoes {
                    value,
                    idx: 0,
                    sub: 0,
                    view: vec![(None, None); n],
                    baseline,
                };
                Ok(world.ready_here())
            }
            ReplPc::CollectEchoes { value, idx, sub, view, baseline } => {
                let inst = &world.rb[rb.0 as usize];
                let n = inst.echo_msg.len();
                if *sub == 0 {
                    let reg = inst.echo_msg[*idx];
                    view[*idx].0 = world.reg_read(me, reg);
                    *sub = 1;
                    return Ok(world.ready_here());
                }
                let reg = inst.echo_sgn[*idx];
                view[*idx].1 = world.reg_read(me, reg);
                if *idx + 1 < n {
                    *idx += 1;
                    *sub = 0;
                    return Ok(world.ready_here());
                }
                // Collect finished: try to assemble a certificate.
                let value = value.clone();
                let view = view.clone();
                let attempt_baseline = baseline.clone();
                if world.rb[rb.0 as usize].cells[self.ordinal].ready_written {
                    // The copier already filled our ready slot.
                    return Ok(TaskStatus::Done);
                }
                match assemble_cert(world, me, rb, &view) {
                    Some(cert) => {
                        self.pc = ReplPc::WriteReady(cert);
                        Ok(world.ready_here())
                    }
                    None => {
                        let baseline = echo_baseline(world, rb);
                        self.pc = ReplPc::CollectEchoes {
                            value,
                            idx: 0,
                            sub: 0,
                            view: vec![(None, None); world.cfg.replicators.len()],
                            baseline,
                        };
                        Ok(world.block_or_retry(attempt_baseline))
                    }
                }
            }
            ReplPc::WriteReady(cert) => {
                if world.rb[rb.0 as usize].cells[self.ordinal].ready_written {
                    return Ok(TaskStatus::Done);
                }
                let inst = &world.rb[rb.0 as usize];
                let reg = inst.ready_msg[self.ordinal];
                let bytes = cert.encode();
                world.reg_write(me, reg, Some(bytes))?;
                world.rb[rb.0 as usize].cells[self.ordinal].ready_written = true;
                Ok(TaskStatus::Done)
            }
        }
    }
}

fn echo_baseline(world: &World, rb: RbId) -> Vec<(RegisterId, u32)> {
    let inst = &world.rb[rb.0 as usize];
    world.reg_versions(inst.echo_msg.iter().chain(inst.echo_sgn.iter()).copied())
}

/// Look for a value with `n−f` verifying echo signatures in `view`; bundle
/// the first `n−f` of them. Verification is charged to `me`.
fn assemble_cert(
    world: &mut World,
    me: ProcessId,
    rb: RbId,
    view: &[(Option<Blob>, Option<Blob>)],
) -> Option<ReadyCert> {
    let inst = &world.rb[rb.0 as usize];
    let domain = inst.echo_domain();
    let quorum = world.cfg.quorum();
    let replicators = world.cfg.replicators.clone();
    let mut by_value: BTreeMap<&Blob, Vec<(usize, &Blob)>> = BTreeMap::new();
    for (ordinal, (msg, sgn)) in view.iter().enumerate() {
        if let (Some(v), Some(t)) = (msg, sgn) {
            if world.verify_token(me, t.as_ref(), replicators[ordinal], &domain, v.as_ref()) {
                by_value.entry(v).or_default().push((ordinal, t));
            }
        }
    }
    for (value, entries) in by_value {
        if entries.len() >= quorum {
            return Some(ReadyCert {
                value: value.clone(),
                entries: entries
                    .into_iter()
                    .take(quorum)
                    .map(|(o, t)| (o, t.clone()))
                    .collect(),
            });
        }
    }
    None
}

// ---- background echo signing ---------------------------------------------------

/// Deferred echo signature: sign the echoed value and publish the token in
/// the echo `sgn` sub-slot. Never on a receiver's fast path.
#[derive(Clone, Debug, Serialize)]
pub struct EchoSign {
    pub rb: RbId,
    pub ordinal: usize,
    pub value: Blob,
}

impl EchoSign {
    pub fn step(&mut self, world: &mut World, me: ProcessId) -> Result<TaskStatus, RunError> {
        let inst = &world.rb[self.rb.0 as usize];
        let (domain, reg) = (inst.echo_domain(), inst.echo_sgn[self.ordinal]);
        let token = world.sign_token(me, me, &domain, self.value.as_ref(), true, None)?;
        world.reg_write(me, reg, Some(token))?;
        Ok(TaskStatus::Done)
    }
}

// ---- ready certificate copier ---------------------------------------------------

/// Background task: adopt the lowest-indexed valid certificate found in any
/// ready slot, if this replicator hasn't written its own yet. Spreads
/// certificates with zero additional signatures.
#[derive(Clone, Debug, Serialize)]
pub struct ReadyCopier {
    pub rb: RbId,
    pub ordinal: usize,
    scan_at: usize,
    found: Option<Blob>,
    baseline: Vec<(RegisterId, u32)>,
}

impl ReadyCopier {
    pub fn new(rb: RbId, ordinal: usize) -> Self {
        ReadyCopier { rb, ordinal, scan_at: 0, found: None, baseline: Vec::new() }
    }

    /// See [`RegisterFile::rebase_snapshot`].
    pub(crate) fn rebase_versions(&mut self, regs: &RegisterFile) {
        regs.rebase_snapshot(&mut self.baseline);
    }

    pub fn step(&mut self, world: &mut World, me: ProcessId) -> Result<TaskStatus, RunError> {
        if world.rb[self.rb.0 as usize].cells[self.ordinal].ready_written {
            return Ok(TaskStatus::Done);
        }
        if let Some(bytes) = self.found.take() {
            let reg = world.rb[self.rb.0 as usize].ready_msg[self.ordinal];
            world.reg_write(me, reg, Some(bytes))?;
            world.rb[self.rb.0 as usize].cells[self.ordinal].ready_written = true;
            return Ok(TaskStatus::Done);
        }
        let inst = &world.rb[self.rb.0 as usize];
        let n = inst.ready_msg.len();
        if self.scan_at >= n {
            self.scan_at = 0;
            return Ok(world.block_or_retry(std::mem::take(&mut self.baseline)));
        }
        if self.scan_at == 0 {
            self.baseline = world.reg_versions(world.rb[self.rb.0 as usize].ready_msg.clone());
        }
        let slot = self.scan_at;
        self.scan_at += 1;
        if slot == self.ordinal {
            return Ok(world.ready_here());
        }
        let reg = world.rb[self.rb.0 as usize].ready_msg[slot];
        if let Some(bytes) = world.reg_read(me, reg) {
            if validate_ready_cert(world, me, self.rb, bytes.as_ref()).is_some() {
                self.found = Some(bytes);
            }
        }
        Ok(world.ready_here())
    }
}

// ---- receiver ---------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
enum RecvPc {
    /// Read echo msg sub-slots 0..n, then ready slots 0..n — one per step.
    Collect {
        idx: usize,
        echoes: Vec<Option<Blob>>,
        readies: Vec<Option<Blob>>,
        baseline: Vec<(RegisterId, u32)>,
    },
    Evaluate {
        echoes: Vec<Option<Blob>>,
        readies: Vec<Option<Blob>>,
        baseline: Vec<(RegisterId, u32)>,
    },
}

/// Receiver: plain collects of the echo values and ready slots, then the
/// fast/slow delivery rule. A single collect suffices here — certificates
/// are self-certifying, unlike the raw copies consistent broadcast scans.
#[derive(Clone, Debug, Serialize)]
pub struct ReceiverLoop {
    pub rb: RbId,
    pc: RecvPc,
}

fn watched_regs(world: &World, rb: RbId) -> Vec<RegisterId> {
    let inst = &world.rb[rb.0 as usize];
    inst.echo_msg.iter().chain(inst.ready_msg.iter()).copied().collect()
}

impl ReceiverLoop {
    pub fn new(rb: RbId) -> Self {
        ReceiverLoop {
            rb,
            pc: RecvPc::Collect { idx: 0, echoes: Vec::new(), readies: Vec::new(), baseline: Vec::new() },
        }
    }

    /// See [`RegisterFile::rebase_snapshot`].
    pub(crate) fn rebase_versions(&mut self, regs: &RegisterFile) {
        match &mut self.pc {
            RecvPc::Collect { baseline, .. } | RecvPc::Evaluate { baseline, .. } => {
                regs.rebase_snapshot(baseline)
            }
        }
    }

    pub fn step(&mut self, world: &mut World, me: ProcessId) -> Result<TaskStatus, RunError> {
        let rb = self.rb;
        let n = world.cfg.replicators.len();
        let parked = RecvPc::Evaluate { echoes: Vec::new(), readies: Vec::new(), baseline: Vec::new() };
        match std::mem::replace(&mut self.pc, parked) {
            RecvPc::Collect { idx, mut echoes, mut readies, mut baseline } => {
                if idx == 0 {
                    echoes = vec![None; n];
                    readies = vec![None; n];
                    baseline = world.reg_versions(watched_regs(world, rb));
                }
                let inst = &world.rb[rb.0 as usize];
                if idx < n {
                    let reg = inst.echo_msg[idx];
                    echoes[idx] = world.reg_read(me, reg);
                } else {
                    let reg = inst.ready_msg[idx - n];
                    readies[idx - n] = world.reg_read(me, reg);
                }
                if idx + 1 < 2 * n {
                    self.pc = RecvPc::Collect { idx: idx + 1, echoes, readies, baseline };
                } else {
                    self.pc = RecvPc::Evaluate { echoes, readies, baseline };
                }
                Ok(world.ready_here())
            }
            RecvPc::Evaluate { echoes, readies, baseline } => {
                if let Some((value, path)) = evaluate(world, me, rb, &echoes, &readies) {
                    let label = world.rb[rb.0 as usize].label.clone();
                    let inst = &mut world.rb[rb.0 as usize];
                    debug_assert!(!inst.delivered.contains_key(&me));
                    inst.delivered.insert(me, (value.clone(), path));
                    world.emit(
                        EventKind::Deliver,
                        me,
                        Payload::Deliver { instance: label, value: value.to_hex(), path },
                    );
                    return Ok(TaskStatus::Done);
                }
                self.pc = RecvPc::Collect {
                    idx: 0,
                    echoes: Vec::new(),
                    readies: Vec::new(),
                    baseline: Vec::new(),
                };
                Ok(world.block_or_retry(baseline))
            }
        }
    }
}

/// Fast: all n echo values equal (no signature checks). Slow: some value is
/// certified by `n−f` distinct ready slots.
fn evaluate(
    world: &mut World,
    me: ProcessId,
    rb: RbId,
    echoes: &[Option<Blob>],
    readies: &[Option<Blob>],
) -> Option<(Blob, DeliveryPath)> {
    if let Some(first) = echoes.first() {
        if first.is_some() && echoes.iter().all(|e| e == first) {
            return Some((first.clone().unwrap(), DeliveryPath::Fast));
        }
    }
    let quorum = world.cfg.quorum();
    let mut counts: BTreeMap<Blob, usize> = BTreeMap::new();
    for bytes in readies.iter().flatten() {
        if let Some(value) = validate_ready_cert(world, me, rb, bytes.as_ref()) {
            *counts.entry(value).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .find(|(_, c)| *c >= quorum)
        .map(|(v, _)| (v, DeliveryPath::Slow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::world::SimParams;
    use crate::types::SystemConfig;

    fn small_world() -> World {
        let cfg = SystemConfig { num_processes: 6, f: 1, replicators: vec![0, 1, 2] };
        World::new(cfg, SimParams::default(), true).unwrap()
    }

    fn echo_token(world: &mut World, rb: RbId, ordinal: usize, value: &str) -> Blob {
        let domain = world.rb[rb.0 as usize].echo_domain();
        let signer = world.cfg.replicators[ordinal];
        world
            .sign_token(signer, signer, &domain, value.as_bytes(), true, None)
            .unwrap()
    }

    fn cert(world: &mut World, rb: RbId, value: &str, ordinals: &[usize]) -> ReadyCert {
        let entries = ordinals
            .iter()
            .map(|&o| (o, echo_token(world, rb, o, value)))
            .collect();
        ReadyCert { value: Blob::from(value), entries }
    }

    #[test]
    fn certificate_validation_checks_quorum_ordinals_and_signatures() {
        let mut world = small_world();
        let rb = create_instance(&mut world, 3, "rb/0");

        let good = cert(&mut world, rb, "v", &[0, 2]).encode();
        assert_eq!(
            validate_ready_cert(&mut world, 4, rb, good.as_ref()),
            Some(Blob::from("v"))
        );

        // Below quorum.
        let short = cert(&mut world, rb, "v", &[1]).encode();
        assert!(validate_ready_cert(&mut world, 4, rb, short.as_ref()).is_none());

        // Duplicate ordinal.
        let tok = echo_token(&mut world, rb, 0, "v");
        let dup = ReadyCert {
            value: Blob::from("v"),
            entries: vec![(0, tok.clone()), (0, tok)],
        }
        .encode();
        assert!(validate_ready_cert(&mut world, 4, rb, dup.as_ref()).is_none());

        // Signature by the wrong replicator for the claimed ordinal.
        let tok0 = echo_token(&mut world, rb, 0, "v");
        let tok1 = echo_token(&mut world, rb, 1, "v");
        let swapped = ReadyCert {
            value: Blob::from("v"),
            entries: vec![(1, tok0), (0, tok1)],
        }
        .encode();
        assert!(validate_ready_cert(&mut world, 4, rb, swapped.as_ref()).is_none());

        // Signature over a different value.
        let wrong = ReadyCert {
            value: Blob::from("v"),
            entries: vec![
                (0, echo_token(&mut world, rb, 0, "w")),
                (1, echo_token(&mut world, rb, 1, "v")),
            ],
        }
        .encode();
        assert!(validate_ready_cert(&mut world, 4, rb, wrong.as_ref()).is_none());

        // Not even a certificate.
        assert!(validate_ready_cert(&mut world, 4, rb, b"gibberish").is_none());
    }

    fn drive_receiver(world: &mut World, rb: RbId, me: ProcessId) -> Option<(Blob, DeliveryPath)> {
        let mut recv = ReceiverLoop::new(rb);
        loop {
            match recv.step(world, me).unwrap() {
                TaskStatus::Ready { .. } => continue,
                TaskStatus::Done => {
                    return world.rb[rb.0 as usize].delivered.get(&me).cloned();
                }
                _ => return None,
            }
        }
    }

    #[test]
    fn receiver_fast_path_on_unanimous_echoes() {
        let mut world = small_world();
        let rb = create_instance(&mut world, 3, "rb/0");
        for o in 0..3 {
            let reg = world.rb[rb.0 as usize].echo_msg[o];
            let owner = world.cfg.replicators[o];
            world.reg_write(owner, reg, Some(Blob::from("v"))).unwrap();
        }
        let (v, p) = drive_receiver(&mut world, rb, 4).unwrap();
        assert_eq!(v, Blob::from("v"));
        assert_eq!(p, DeliveryPath::Fast);
        assert!(!world.trace.events.iter().any(|e| e.kind == EventKind::Verify));
    }

    #[test]
    fn receiver_slow_path_on_certified_quorum() {
        let mut world = small_world();
        let rb = create_instance(&mut world, 3, "rb/0");
        let bytes = cert(&mut world, rb, "v", &[0, 1]).encode();
        for o in [0usize, 2] {
            let reg = world.rb[rb.0 as usize].ready_msg[o];
            let owner = world.cfg.replicators[o];
            world.reg_write(owner, reg, Some(bytes.clone())).unwrap();
        }
        // Echoes disagree (one Byzantine echo, one missing) → no fast path.
        let e0 = world.rb[rb.0 as usize].echo_msg[0];
        world.reg_write(0, e0, Some(Blob::from("v"))).unwrap();
        let e1 = world.rb[rb.0 as usize].echo_msg[1];
        world.reg_write(1, e1, Some(Blob::from("x"))).unwrap();
        let (v, p) = drive_receiver(&mut world, rb, 4).unwrap();
        assert_eq!(v, Blob::from("v"));
        assert_eq!(p, DeliveryPath::Slow);
    }

    #[test]
    fn receiver_waits_when_certificates_are_invalid() {
        let mut world = small_world();
        let rb = create_instance(&mut world, 3, "rb/0");
        // Two ready slots, but the certificates are junk.
        for o in [0usize, 1] {
            let reg = world.rb[rb.0 as usize].ready_msg[o];
            let owner = world.cfg.replicators[o];
            world.reg_write(owner, reg, Some(Blob::from("junk"))).unwrap();
        }
        assert!(drive_receiver(&mut world, rb, 4).is_none());
    }

    #[test]
    fn replicator_assembles_certificate_from_quorum_of_echoes() {
        let mut world = small_world();
        let rb = create_instance(&mut world, 3, "rb/0");
        // Replicators 1 and 2 echoed and signed already.
        for o in [1usize, 2] {
            let (m, s) = {
                let inst = &world.rb[rb.0 as usize];
                (inst.echo_msg[o], inst.echo_sgn[o])
            };
            let owner = world.cfg.replicators[o];
            let tok = echo_token(&mut world, rb, o, "v");
            world.reg_write(owner, m, Some(Blob::from("v"))).unwrap();
            world.reg_write(owner, s, Some(tok)).unwrap();
        }
        // Feed replicator 0 its cb-delivery by priming the inner instance.
        let init_cb = world.rb[rb.0 as usize].init_cb;
        for o in 0..3 {
            let reg = world.cb_instance(init_cb).repl_msg[o];
            let owner = world.cfg.replicators[o];
            world.reg_write(owner, reg, Some(Blob::from("v"))).unwrap();
        }
        let mut main = ReplicatorMain::new(rb, init_cb, 0);
        for _ in 0..200 {
            match main.step(&mut world, 0).unwrap() {
                TaskStatus::Done => break,
                TaskStatus::Ready { .. } => continue,
                other => panic!("replicator blocked unexpectedly: {other:?}"),
            }
        }
        let inst = &world.rb[rb.0 as usize];
        assert!(inst.cells[0].ready_written);
        let bytes = world.regs.get(inst.ready_msg[0]).value.clone().unwrap();
        let value = validate_ready_cert(&mut world, 5, rb, bytes.as_ref()).unwrap();
        assert_eq!(value, Blob::from("v"));
    }

    #[test]
    fn copier_adopts_lowest_valid_certificate_and_respects_write_once() {
        let mut world = small_world();
        let rb = create_instance(&mut world, 3, "rb/0");
        let junk = Blob::from("junk");
        let good = cert(&mut world, rb, "v", &[1, 2]).encode();
        // Slot 0 junk, slot 2 valid; copier runs as replicator 1.
        let r0 = world.rb[rb.0 as usize].ready_msg[0];
        world.reg_write(0, r0, Some(junk)).unwrap();
        let r2 = world.rb[rb.0 as usize].ready_msg[2];
        world.reg_write(2, r2, Some(good.clone())).unwrap();

        let mut copier = ReadyCopier::new(rb, 1);
        for _ in 0..50 {
            match copier.step(&mut world, 1).unwrap() {
                TaskStatus::Done => break,
                TaskStatus::Ready { .. } => continue,
                other => panic!("copier blocked unexpectedly: {other:?}"),
            }
        }
        let inst = &world.rb[rb.0 as usize];
        assert!(inst.cells[1].ready_written);
        assert_eq!(world.regs.get(inst.ready_msg[1]).value.clone(), Some(good));

        // A second copier for the same slot immediately finishes.
        let mut again = ReadyCopier::new(rb, 1);
        assert!(matches!(again.step(&mut world, 1).unwrap(), TaskStatus::Done));
    }
}
