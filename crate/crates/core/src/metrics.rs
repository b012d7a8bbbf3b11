//! Run reports: everything measurable about a finished run, derived purely
//! from the trace plus static facts about the setup (who is corrupted, who
//! plays which role). Because the input is just the event list, a report can
//! be recomputed offline from a saved trace file.

use crate::substrate::runner::{RunOutcome, StopReason};
use crate::substrate::trace::{Event, EventKind, Payload};
use crate::types::{DeliveryPath, ProcessId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Cb,
    /// Broadcast with the single-pass collect receiver — the known-unsafe
    /// variant kept for regression and model-checking demonstrations.
    CbCollect,
    Rb,
    Consensus,
}

/// Static facts a property checker needs beyond the event list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisContext {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub f: usize,
    /// Byzantine processes (scripted or deviating).
    pub corrupted: BTreeSet<ProcessId>,
    /// Crash-faulty processes; exempt from liveness demands.
    pub crashed: BTreeSet<ProcessId>,
    pub sender: ProcessId,
    pub receivers: Vec<ProcessId>,
    pub replicas: Vec<ProcessId>,
    /// Instance label the run revolves around (None for consensus).
    pub main_instance: Option<String>,
    /// Hex of the common proposal, when every replica is correct and proposed
    /// the same value (arms the weak-validity check).
    pub all_same_input: Option<String>,
    /// The run hit the step cap (liveness red flag).
    pub ran_to_cap: bool,
}

impl AnalysisContext {
    pub fn is_correct(&self, p: ProcessId) -> bool {
        !self.corrupted.contains(&p)
    }

    /// Processes in `group` that are neither Byzantine nor crash-faulty —
    /// the ones liveness properties may demand something of.
    fn live_correct(&self, group: &[ProcessId]) -> Vec<ProcessId> {
        group
            .iter()
            .copied()
            .filter(|p| self.is_correct(*p) && !self.crashed.contains(p))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopInfo {
    /// condition | max-steps | quiescent
    pub reason: String,
    pub steps: u64,
}

impl From<&RunOutcome> for StopInfo {
    fn from(o: &RunOutcome) -> StopInfo {
        let reason = match o.reason {
            StopReason::Condition => "condition",
            StopReason::MaxSteps => "max-steps",
            StopReason::Quiescent => "quiescent",
        };
        StopInfo { reason: reason.to_string(), steps: o.steps }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The property's precondition never held in this run.
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyVerdict {
    pub verdict: Verdict,
    pub detail: String,
    /// Steps of the events witnessing a failure (empty on pass).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness_steps: Vec<u64>,
}

impl PropertyVerdict {
    fn pass(detail: impl Into<String>) -> Self {
        PropertyVerdict { verdict: Verdict::Pass, detail: detail.into(), witness_steps: vec![] }
    }
    fn fail(detail: impl Into<String>, witness: Vec<u64>) -> Self {
        PropertyVerdict { verdict: Verdict::Fail, detail: detail.into(), witness_steps: witness }
    }
    fn na(detail: impl Into<String>) -> Self {
        PropertyVerdict { verdict: Verdict::NotApplicable, detail: detail.into(), witness_steps: vec![] }
    }
    pub fn holds(&self) -> bool {
        self.verdict != Verdict::Fail
    }
    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

/// Signature accounting. "Correct" columns count events whose *signer* is an
/// uncorrupted process — the frugality claims are about work correct
/// processes do, and a Byzantine signer can inflate its own count at will.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignatureReport {
    pub total: u64,
    pub by_correct: u64,
    pub by_byzantine: u64,
    pub background_correct: u64,
    pub explicit_correct: u64,
    pub per_process: BTreeMap<ProcessId, u64>,
    /// Correct-process signatures stamped before the first delivery event.
    pub before_first_deliver: u64,
    /// Correct-process signatures stamped before the first decide event.
    pub before_first_decide: u64,
    /// Correct background signatures by view tag (consensus runs).
    pub per_view_background: BTreeMap<u64, u64>,
    /// Correct explicit signatures on view-change and ack bodies.
    pub viewchange_explicit: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRow {
    pub instance: String,
    pub receiver: ProcessId,
    pub value: String,
    pub path: DeliveryPath,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecideRow {
    pub replica: ProcessId,
    pub view: u64,
    pub value: String,
    pub step: u64,
}

/// Receiver-side read costs, aggregated over completed scan/collect attempts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub attempts: u64,
    pub max_passes: u64,
    pub max_slot_reads: u64,
    /// Attempts whose final view held two or more distinct values — the
    /// equivocation witness a scan surfaces and a single collect can miss.
    pub views_with_multiple_values: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub protocol: ProtocolKind,
    pub stop: StopInfo,
    pub signatures: SignatureReport,
    pub deliveries: Vec<DeliveryRow>,
    pub decides: Vec<DecideRow>,
    pub properties: BTreeMap<String, PropertyVerdict>,
    pub scans: ScanSummary,
}

impl RunReport {
    pub fn violations(&self) -> Vec<&str> {
        self.properties
            .iter()
            .filter(|(_, v)| v.failed())
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Build the full report for a finished run.
pub fn analyze(
    events: &[Event],
    ctx: &AnalysisContext,
    scenario: Option<&str>,
    stop: StopInfo,
) -> RunReport {
    let deliveries = delivery_rows(events, ctx);
    let decides = decide_rows(events);
    let signatures = count_signatures(events, ctx, &deliveries, &decides);
    let scans = scan_summary(events, ctx);
    let properties = match ctx.protocol {
        ProtocolKind::Cb | ProtocolKind::CbCollect => broadcast_properties(events, ctx, &deliveries, false),
        ProtocolKind::Rb => broadcast_properties(events, ctx, &deliveries, true),
        ProtocolKind::Consensus => consensus_properties(ctx, &decides),
    };
    RunReport {
        scenario: scenario.map(str::to_string),
        protocol: ctx.protocol,
        stop,
        signatures,
        deliveries,
        decides,
        properties,
        scans,
    }
}

fn on_main_instance(ctx: &AnalysisContext, instance: &str) -> bool {
    match &ctx.main_instance {
        Some(main) => instance == main || instance.starts_with(&format!("{main}/")),
        None => true,
    }
}

fn delivery_rows(events: &[Event], ctx: &AnalysisContext) -> Vec<DeliveryRow> {
    events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Deliver { instance, value, path } if on_main_instance(ctx, instance) => {
                Some(DeliveryRow {
                    instance: instance.clone(),
                    receiver: e.actor,
                    value: value.clone(),
                    path: *path,
                    step: e.step,
                })
            }
            _ => None,
        })
        .collect()
}

fn decide_rows(events: &[Event]) -> Vec<DecideRow> {
    events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Decide { view, value } => Some(DecideRow {
                replica: e.actor,
                view: *view,
                value: value.clone(),
                step: e.step,
            }),
            _ => None,
        })
        .collect()
}

fn count_signatures(
    events: &[Event],
    ctx: &AnalysisContext,
    deliveries: &[DeliveryRow],
    decides: &[DecideRow],
) -> SignatureReport {
    let first_deliver = deliveries.iter().map(|d| d.step).min();
    let first_decide = decides.iter().map(|d| d.step).min();
    let mut r = SignatureReport::default();
    for e in events {
        let Payload::Sign { signer, background, kind, view, .. } = &e.payload else { continue };
        r.total += 1;
        *r.per_process.entry(*signer).or_default() += 1;
        if !ctx.is_correct(*signer) {
            r.by_byzantine += 1;
            continue;
        }
        r.by_correct += 1;
        if *background {
            r.background_correct += 1;
            if let Some(v) = view {
                *r.per_view_background.entry(*v).or_default() += 1;
            }
        } else {
            r.explicit_correct += 1;
        }
        if kind == "view-change" || kind == "ack" {
            r.viewchange_explicit += 1;
        }
        if first_deliver.is_none_or(|s| e.step < s) {
            r.before_first_deliver += 1;
        }
        if first_decide.is_none_or(|s| e.step < s) {
            r.before_first_decide += 1;
        }
    }
    r
}

fn scan_summary(events: &[Event], ctx: &AnalysisContext) -> ScanSummary {
    let mut s = ScanSummary::default();
    for e in events {
        let Payload::ScanStats { instance, passes, slot_reads, values, .. } = &e.payload else {
            continue;
        };
        if !on_main_instance(ctx, instance) {
            continue;
        }
        s.attempts += 1;
        s.max_passes = s.max_passes.max(*passes);
        s.max_slot_reads = s.max_slot_reads.max(*slot_reads);
        if values.len() >= 2 {
            s.views_with_multiple_values += 1;
        }
    }
    s
}

/// The value the sender put into its message slot, read off the trace: the
/// first write by the sender to a `.../sender/msg` register of the main
/// instance. Returns the hex payload.
fn broadcast_value(events: &[Event], ctx: &AnalysisContext) -> Option<String> {
    events.iter().find_map(|e| {
        if e.kind != EventKind::RegisterWrite || e.actor != ctx.sender {
            return None;
        }
        let Payload::Reg { reg, value } = &e.payload else { return None };
        if !reg.ends_with("/sender/msg") || !on_main_instance(ctx, reg) {
            return None;
        }
        value.clone()
    })
}

fn broadcast_properties(
    events: &[Event],
    ctx: &AnalysisContext,
    deliveries: &[DeliveryRow],
    totality: bool,
) -> BTreeMap<String, PropertyVerdict> {
    let mut out = BTreeMap::new();
    let correct: Vec<&DeliveryRow> =
        deliveries.iter().filter(|d| ctx.is_correct(d.receiver)).collect();

    // No-duplication: at most one delivery per correct receiver.
    let mut seen: BTreeMap<ProcessId, u64> = BTreeMap::new();
    let mut dup = None;
    for d in &correct {
        if let Some(prev) = seen.insert(d.receiver, d.step) {
            dup = Some((d.receiver, prev, d.step));
            break;
        }
    }
    out.insert(
        "no-duplication".into(),
        match dup {
            None => PropertyVerdict::pass(format!("{} deliveries, all distinct receivers", correct.len())),
            Some((r, a, b)) => {
                PropertyVerdict::fail(format!("process {r} delivered twice"), vec![a, b])
            }
        },
    );

    // Consistency: all correct receivers delivered the same value.
    let mut values: BTreeMap<&str, u64> = BTreeMap::new();
    for d in &correct {
        values.entry(d.value.as_str()).or_insert(d.step);
    }
    out.insert(
        "consistency".into(),
        if values.len() <= 1 {
            PropertyVerdict::pass("at most one distinct delivered value")
        } else {
            PropertyVerdict::fail(
                format!(
                    "correct receivers delivered {} distinct values: {}",
                    values.len(),
                    values.keys().copied().collect::<Vec<_>>().join(", ")
                ),
                values.values().copied().collect(),
            )
        },
    );

    // Integrity: with a correct sender, only the broadcast value is delivered.
    out.insert(
        "integrity".into(),
        if !ctx.is_correct(ctx.sender) {
            PropertyVerdict::na("sender is Byzantine; delivered values are unconstrained")
        } else {
            match broadcast_value(events, ctx) {
                None if correct.is_empty() => PropertyVerdict::pass("nothing broadcast, nothing delivered"),
                None => PropertyVerdict::fail(
                    "deliveries happened but the correct sender never wrote its slot",
                    correct.iter().map(|d| d.step).collect(),
                ),
                Some(bv) => {
                    let bad: Vec<u64> =
                        correct.iter().filter(|d| d.value != bv).map(|d| d.step).collect();
                    if bad.is_empty() {
                        PropertyVerdict::pass("every delivery matches the broadcast value")
                    } else {
                        PropertyVerdict::fail("a delivery differs from the broadcast value", bad)
                    }
                }
            }
        },
    );

    // Validity (liveness): a correct sender's broadcast reaches every live
    // correct receiver by the end of the run.
    let delivered_set: BTreeSet<ProcessId> = correct.iter().map(|d| d.receiver).collect();
    out.insert(
        "validity".into(),
        if !ctx.is_correct(ctx.sender) {
            PropertyVerdict::na("sender is Byzantine")
        } else if broadcast_value(events, ctx).is_none() {
            PropertyVerdict::na("sender never broadcast")
        } else {
            let missing: Vec<ProcessId> =
                ctx.live_correct(&ctx.receivers).into_iter().filter(|r| !delivered_set.contains(r)).collect();
            if missing.is_empty() {
                PropertyVerdict::pass("every live correct receiver delivered")
            } else {
                PropertyVerdict::fail(format!("receivers never delivered: {missing:?}"), vec![])
            }
        },
    );

    // Totality (reliable broadcast only): one correct delivery implies all.
    if totality {
        out.insert(
            "totality".into(),
            if delivered_set.is_empty() {
                PropertyVerdict::na("no correct receiver delivered")
            } else {
                let missing: Vec<ProcessId> = ctx
                    .live_correct(&ctx.receivers)
                    .into_iter()
                    .filter(|r| !delivered_set.contains(r))
                    .collect();
                if missing.is_empty() {
                    PropertyVerdict::pass("all live correct receivers delivered")
                } else {
                    PropertyVerdict::fail(
                        format!("some receivers delivered but these did not: {missing:?}"),
                        vec![],
                    )
                }
            },
        );
    }
    out
}

fn consensus_properties(
    ctx: &AnalysisContext,
    decides: &[DecideRow],
) -> BTreeMap<String, PropertyVerdict> {
    let mut out = BTreeMap::new();
    let correct: Vec<&DecideRow> = decides.iter().filter(|d| ctx.is_correct(d.replica)).collect();

    // Agreement: no two correct replicas decide different values.
    let mut values: BTreeMap<&str, u64> = BTreeMap::new();
    for d in &correct {
        values.entry(d.value.as_str()).or_insert(d.step);
    }
    out.insert(
        "agreement".into(),
        if values.len() <= 1 {
            PropertyVerdict::pass(format!("{} decisions, one distinct value", correct.len()))
        } else {
            PropertyVerdict::fail(
                format!("correct replicas decided {} distinct values", values.len()),
                values.values().copied().collect(),
            )
        },
    );

    // Integrity: each correct replica decides at most once.
    let mut seen: BTreeMap<ProcessId, u64> = BTreeMap::new();
    let mut dup = None;
    for d in &correct {
        if let Some(prev) = seen.insert(d.replica, d.step) {
            dup = Some((d.replica, prev, d.step));
            break;
        }
    }
    out.insert(
        "integrity".into(),
        match dup {
            None => PropertyVerdict::pass("no replica decided twice"),
            Some((r, a, b)) => PropertyVerdict::fail(format!("replica {r} decided twice"), vec![a, b]),
        },
    );

    // Weak validity: all correct + common proposal ⇒ that value decides.
    out.insert(
        "validity".into(),
        match &ctx.all_same_input {
            Some(v) if ctx.corrupted.is_empty() => {
                let bad: Vec<u64> =
                    correct.iter().filter(|d| &d.value != v).map(|d| d.step).collect();
                if bad.is_empty() {
                    PropertyVerdict::pass("decisions match the common proposal")
                } else {
                    PropertyVerdict::fail("a decision differs from the common proposal", bad)
                }
            }
            _ => PropertyVerdict::na("proposals differ or some replica is Byzantine"),
        },
    );

    // Termination surrogate: every live correct replica decided by run end.
    let decided: BTreeSet<ProcessId> = correct.iter().map(|d| d.replica).collect();
    let missing: Vec<ProcessId> =
        ctx.live_correct(&ctx.replicas).into_iter().filter(|r| !decided.contains(r)).collect();
    out.insert(
        "termination".into(),
        if missing.is_empty() {
            PropertyVerdict::pass("every live correct replica decided")
        } else if ctx.ran_to_cap {
            PropertyVerdict::fail(format!("step cap hit with undecided replicas: {missing:?}"), vec![])
        } else {
            PropertyVerdict::fail(format!("replicas never decided: {missing:?}"), vec![])
        },
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx_cb() -> AnalysisContext {
        AnalysisContext {
            protocol: ProtocolKind::Cb,
            n: 3,
            f: 1,
            corrupted: BTreeSet::new(),
            crashed: BTreeSet::new(),
            sender: 0,
            receivers: vec![4, 5],
            replicas: vec![1, 2, 3],
            main_instance: Some("cb/0".into()),
            all_same_input: None,
            ran_to_cap: false,
        }
    }

    fn deliver(step: u64, actor: ProcessId, value: &str, path: DeliveryPath) -> Event {
        Event {
            step,
            kind: EventKind::Deliver,
            actor,
            payload: Payload::Deliver { instance: "cb/0".into(), value: value.into(), path },
        }
    }

    fn sender_write(step: u64, value: &str) -> Event {
        Event {
            step,
            kind: EventKind::RegisterWrite,
            actor: 0,
            payload: Payload::Reg { reg: "cb/0/sender/msg".into(), value: Some(value.into()) },
        }
    }

    fn sign(step: u64, signer: ProcessId, background: bool, kind: &str, view: Option<u64>) -> Event {
        Event {
            step,
            kind: EventKind::Sign,
            actor: signer,
            payload: Payload::Sign {
                signer,
                proto: "cb".into(),
                instance: "cb/0".into(),
                kind: kind.into(),
                background,
                digest: "d".into(),
                view,
            },
        }
    }

    fn stop() -> StopInfo {
        StopInfo { reason: "condition".into(), steps: 10 }
    }

    #[test]
    fn clean_run_passes_all_broadcast_properties() {
        let ev = vec![
            sender_write(0, "6d31"),
            sign(3, 0, true, "sender-msg", None),
            deliver(5, 4, "6d31", DeliveryPath::Fast),
            deliver(6, 5, "6d31", DeliveryPath::Fast),
        ];
        let r = analyze(&ev, &ctx_cb(), Some("t"), stop());
        assert!(r.violations().is_empty(), "{:?}", r.properties);
        assert_eq!(r.deliveries.len(), 2);
        assert_eq!(r.signatures.total, 1);
        assert_eq!(r.signatures.before_first_deliver, 1, "sign at step 3 precedes delivery at 5");
    }

    #[test]
    fn split_deliveries_fail_consistency_with_witnesses() {
        let ev = vec![
            sender_write(0, "6d31"),
            deliver(5, 4, "6d31", DeliveryPath::Slow),
            deliver(9, 5, "6d32", DeliveryPath::Slow),
        ];
        let r = analyze(&ev, &ctx_cb(), None, stop());
        let c = &r.properties["consistency"];
        assert!(c.failed());
        assert_eq!(c.witness_steps, vec![5, 9]);
        // Integrity also breaks: 6d32 was never broadcast by the correct sender.
        assert!(r.properties["integrity"].failed());
        assert_eq!(r.violations().len(), 2);
    }

    #[test]
    fn byzantine_sender_disarms_integrity_but_not_consistency() {
        let mut ctx = ctx_cb();
        ctx.corrupted.insert(0);
        let ev = vec![
            deliver(5, 4, "6d31", DeliveryPath::Slow),
            deliver(9, 5, "6d32", DeliveryPath::Slow),
        ];
        let r = analyze(&ev, &ctx, None, stop());
        assert_eq!(r.properties["integrity"].verdict, Verdict::NotApplicable);
        assert_eq!(r.properties["validity"].verdict, Verdict::NotApplicable);
        assert!(r.properties["consistency"].failed());
    }

    #[test]
    fn double_delivery_is_flagged() {
        let ev = vec![
            sender_write(0, "6d31"),
            deliver(5, 4, "6d31", DeliveryPath::Fast),
            deliver(8, 4, "6d31", DeliveryPath::Fast),
            deliver(9, 5, "6d31", DeliveryPath::Fast),
        ];
        let r = analyze(&ev, &ctx_cb(), None, stop());
        assert!(r.properties["no-duplication"].failed());
        assert_eq!(r.properties["no-duplication"].witness_steps, vec![5, 8]);
    }

    #[test]
    fn missing_receiver_fails_validity_only() {
        let ev = vec![sender_write(0, "6d31"), deliver(5, 4, "6d31", DeliveryPath::Fast)];
        let r = analyze(&ev, &ctx_cb(), None, stop());
        assert!(r.properties["validity"].failed());
        assert!(r.properties["consistency"].holds());
        // A crashed receiver is excused.
        let mut ctx = ctx_cb();
        ctx.crashed.insert(5);
        let r = analyze(&ev, &ctx, None, stop());
        assert!(r.properties["validity"].holds());
    }

    #[test]
    fn signature_accounting_splits_correct_and_byzantine() {
        let mut ctx = ctx_cb();
        ctx.corrupted.insert(1);
        let ev = vec![
            sign(1, 0, true, "sender-msg", None),
            sign(2, 1, false, "sender-msg", None), // forged by the corrupt process
            sign(3, 2, false, "view-change", Some(1)),
            sign(4, 2, true, "sender-msg", Some(0)),
            deliver(6, 4, "6d31", DeliveryPath::Fast),
        ];
        let r = analyze(&ev, &ctx, None, stop());
        assert_eq!(r.signatures.total, 4);
        assert_eq!(r.signatures.by_correct, 3);
        assert_eq!(r.signatures.by_byzantine, 1);
        assert_eq!(r.signatures.background_correct, 2);
        assert_eq!(r.signatures.explicit_correct, 1);
        assert_eq!(r.signatures.viewchange_explicit, 1);
        assert_eq!(r.signatures.per_view_background.get(&0), Some(&1));
        assert_eq!(r.signatures.before_first_deliver, 3);
    }

    #[test]
    fn consensus_agreement_and_termination() {
        let ctx = AnalysisContext {
            protocol: ProtocolKind::Consensus,
            n: 3,
            f: 1,
            corrupted: BTreeSet::new(),
            crashed: BTreeSet::from([0]),
            sender: 0,
            receivers: vec![],
            replicas: vec![0, 1, 2],
            main_instance: None,
            all_same_input: Some("76".into()),
            ran_to_cap: false,
        };
        let decide = |step: u64, replica: ProcessId, view: u64, value: &str| Event {
            step,
            kind: EventKind::Decide,
            actor: replica,
            payload: Payload::Decide { view, value: value.into() },
        };
        let ev = vec![decide(10, 1, 1, "76"), decide(12, 2, 1, "76")];
        let r = analyze(&ev, &ctx, None, stop());
        assert!(r.violations().is_empty(), "{:?}", r.properties);

        // Disagreement and a missing decider are both caught.
        let ev = vec![decide(10, 1, 1, "76"), decide(12, 2, 1, "77")];
        let r = analyze(&ev, &ctx, None, stop());
        assert!(r.properties["agreement"].failed());
        assert!(r.properties["validity"].failed(), "77 is not the common proposal");

        let ev = vec![decide(10, 1, 1, "76")];
        let r = analyze(&ev, &ctx, None, stop());
        assert!(r.properties["termination"].failed());
    }

    #[test]
    fn rb_totality_distinguishes_none_from_some() {
        let mut ctx = ctx_cb();
        ctx.protocol = ProtocolKind::Rb;
        ctx.main_instance = Some("rb/0".into());
        let deliver_rb = |step: u64, actor: ProcessId| Event {
            step,
            kind: EventKind::Deliver,
            actor,
            payload: Payload::Deliver {
                instance: "rb/0".into(),
                value: "6d31".into(),
                path: DeliveryPath::Fast,
            },
        };
        // Nobody delivered: totality not applicable (validity separately judges
        // liveness when the sender is correct and broadcast).
        let r = analyze(&[], &ctx, None, stop());
        assert_eq!(r.properties["totality"].verdict, Verdict::NotApplicable);
        // One of two delivered: totality fails.
        let r = analyze(&[deliver_rb(5, 4)], &ctx, None, stop());
        assert!(r.properties["totality"].failed());
        let r = analyze(&[deliver_rb(5, 4), deliver_rb(7, 5)], &ctx, None, stop());
        assert!(r.properties["totality"].holds());
    }

    #[test]
    fn scan_summary_counts_conflict_witnesses() {
        let scan = |step: u64, passes: u64, values: Vec<&str>| Event {
            step,
            kind: EventKind::ProtocolStep,
            actor: 4,
            payload: Payload::ScanStats {
                instance: "cb/0".into(),
                mode: crate::cb::ScanMode::Scan,
                passes,
                slot_reads: passes * 3,
                confirm_reads: 0,
                values: values.into_iter().map(String::from).collect(),
            },
        };
        let ev = vec![scan(3, 2, vec!["6d31"]), scan(9, 4, vec!["6d31", "6d32"])];
        let r = analyze(&ev, &ctx_cb(), None, stop());
        assert_eq!(r.scans.attempts, 2);
        assert_eq!(r.scans.max_passes, 4);
        assert_eq!(r.scans.max_slot_reads, 12);
        assert_eq!(r.scans.views_with_multiple_values, 1);
    }
}
