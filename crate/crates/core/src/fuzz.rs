//! Randomized adversarial runs: per-seed scenario synthesis, execution, and
//! verdict aggregation. One seed determines everything — corruption choices,
//! scripts, timing parameters, and the scheduling policy — so any failure
//! reproduces from its seed alone.

use crate::adversary::{self, SlotRef};
use crate::metrics::{self, ProtocolKind, StopInfo};
use crate::scenario::{
    self, AdversaryEntry, DeviationEntry, FaultsSection, InputsSection, Scenario, StopSpec,
    SystemSection,
};
use crate::substrate::policy::PolicySpec;
use crate::substrate::runner::{self, StopReason};
use crate::substrate::world::SimParams;
use crate::types::ProcessId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct FuzzPlan {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub f: usize,
    pub seed_start: u64,
    pub seed_end: u64,
    /// Fixed stabilization time; `None` draws one per seed.
    pub gst: Option<u64>,
    pub max_steps: u64,
}

impl FuzzPlan {
    pub fn new(protocol: ProtocolKind, n: usize, seeds: std::ops::Range<u64>) -> Self {
        assert!(n % 2 == 1 && n >= 3, "n must be odd and at least 3");
        FuzzPlan {
            protocol,
            n,
            f: n / 2,
            seed_start: seeds.start,
            seed_end: seeds.end,
            gst: None,
            max_steps: if protocol == ProtocolKind::Consensus { 60_000 } else { 20_000 },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzVerdict {
    pub seed: u64,
    /// Failed safety properties (agreement, consistency, …). Must stay empty.
    pub safety: Vec<String>,
    /// Failed liveness properties (termination, validity, totality).
    pub liveness: Vec<String>,
    /// Largest signature count any single correct process paid.
    pub max_correct_proc_signs: u64,
    pub correct_signs_total: u64,
    pub stop_reason: String,
    pub steps: u64,
    /// Harness-level failure (scenario refused to build or run).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzSummary {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub f: usize,
    pub runs: u64,
    /// Runs with at least one safety violation (or harness error).
    pub safety_violations: u64,
    /// Runs with at least one liveness failure.
    pub liveness_failures: u64,
    pub max_correct_proc_signs: u64,
    pub max_correct_signs_total: u64,
    /// Details of failing runs (capped).
    pub failures: Vec<FuzzVerdict>,
}

const FAILURE_DETAIL_CAP: usize = 20;

fn is_safety(protocol: ProtocolKind, prop: &str) -> bool {
    match protocol {
        ProtocolKind::Consensus => matches!(prop, "agreement" | "integrity" | "validity"),
        _ => matches!(prop, "consistency" | "no-duplication" | "integrity"),
    }
}

/// Synthesize the scenario a seed denotes. Public so a failing seed can be
/// re-materialized, inspected, or saved as a regression file.
pub fn build_scenario(plan: &FuzzPlan, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    match plan.protocol {
        ProtocolKind::Consensus => consensus_scenario(plan, seed, &mut rng),
        _ => broadcast_scenario(plan, seed, &mut rng),
    }
}

fn broadcast_scenario(plan: &FuzzPlan, seed: u64, rng: &mut ChaCha8Rng) -> Scenario {
    let n = plan.n;
    let replicators: Vec<ProcessId> = (1..=n).collect();
    let receivers: Vec<ProcessId> = vec![n + 1, n + 2];
    let is_rb = plan.protocol == ProtocolKind::Rb;
    let main = if is_rb { "rb/0" } else { "cb/0" };
    // The inner broadcast is where sender-side attacks land for rb.
    let inner = if is_rb { "rb/0/init".to_string() } else { main.to_string() };

    let mut adversary = Vec::new();
    match rng.gen_range(0..100u32) {
        // Two-faced sender, scripted end to end.
        0..=34 => adversary.push(AdversaryEntry {
            proc: 0,
            builtin: Some("equivocating-sender".into()),
            instance: Some(inner.clone()),
            ordinal: Some(0),
            steps: vec![],
            honest_tasks: None,
        }),
        // One replicator plays honest, then attacks its slots after delivery.
        35..=59 => {
            let ordinal = rng.gen_range(0..n);
            let (builtin, instance) = if is_rb {
                ("readyset-retractor", main.to_string())
            } else {
                ("overwrite-after-fastpath", inner.clone())
            };
            adversary.push(AdversaryEntry {
                proc: replicators[ordinal],
                builtin: Some(builtin.into()),
                instance: Some(instance),
                ordinal: Some(ordinal),
                steps: vec![],
                honest_tasks: None,
            });
        }
        // Random scripts on up to f replicators, sometimes the sender too.
        60..=84 => {
            let k = rng.gen_range(1..=plan.f);
            let mut ordinals: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let pick = rng.gen_range(i..ordinals.len());
                ordinals.swap(i, pick);
            }
            for &o in &ordinals[..k] {
                adversary.push(AdversaryEntry {
                    proc: replicators[o],
                    builtin: None,
                    instance: None,
                    ordinal: Some(o),
                    steps: adversary::random_script(
                        rng.gen(),
                        &replicator_slots(is_rb, &inner, main, o),
                        &foreign_slots(is_rb, &inner, main, o, n),
                        &["m1", "m2", "zz"],
                        rng.gen_range(2..8),
                    ),
                    honest_tasks: Some(rng.gen_bool(0.5)),
                });
            }
            if rng.gen_bool(0.3) {
                adversary.push(AdversaryEntry {
                    proc: 0,
                    builtin: None,
                    instance: None,
                    ordinal: None,
                    steps: adversary::random_script(
                        rng.gen(),
                        &[
                            SlotRef::CbSenderMsg { instance: inner.clone() },
                            SlotRef::CbSenderSgn { instance: inner.clone() },
                        ],
                        &[],
                        &["m1", "m2", "zz"],
                        rng.gen_range(2..6),
                    ),
                    honest_tasks: Some(false),
                });
            }
        }
        // Fault-free run: liveness under chaotic scheduling.
        _ => {}
    }

    Scenario {
        name: format!("fuzz-{:?}-{seed}", plan.protocol).to_lowercase(),
        protocol: plan.protocol,
        system: SystemSection {
            f: plan.f,
            sender: 0,
            replicators,
            receivers: receivers.clone(),
            processes: None,
        },
        inputs: InputsSection { value: Some("m1".into()), initials: vec![] },
        sim: SimParams {
            gst: plan.gst.unwrap_or_else(|| rng.gen_range(0..1500)),
            delta: 300,
            max_steps: plan.max_steps,
            sign_latency: [0, 5, 50][rng.gen_range(0..3)],
            ..SimParams::default()
        },
        policy: PolicySpec::Chaos { seed },
        adversary,
        deviations: vec![],
        faults: FaultsSection::default(),
        stop: StopSpec::Delivered { receivers, drain_signing: false },
        expect: Default::default(),
    }
}

fn replicator_slots(is_rb: bool, inner: &str, main: &str, o: usize) -> Vec<SlotRef> {
    let mut own = vec![
        SlotRef::CbReplMsg { instance: inner.into(), ordinal: o },
        SlotRef::CbReplSgn { instance: inner.into(), ordinal: o },
    ];
    if is_rb {
        own.push(SlotRef::RbEchoMsg { instance: main.into(), ordinal: o });
        own.push(SlotRef::RbEchoSgn { instance: main.into(), ordinal: o });
        own.push(SlotRef::RbReady { instance: main.into(), ordinal: o });
    }
    own
}

fn foreign_slots(is_rb: bool, inner: &str, main: &str, o: usize, n: usize) -> Vec<SlotRef> {
    let other = (o + 1) % n;
    let mut foreign = vec![
        SlotRef::CbSenderMsg { instance: inner.into() },
        SlotRef::CbSenderSgn { instance: inner.into() },
        SlotRef::CbReplMsg { instance: inner.into(), ordinal: other },
        SlotRef::CbReplSgn { instance: inner.into(), ordinal: other },
    ];
    if is_rb {
        foreign.push(SlotRef::RbEchoSgn { instance: main.into(), ordinal: other });
        foreign.push(SlotRef::RbReady { instance: main.into(), ordinal: other });
    }
    foreign
}

fn consensus_scenario(plan: &FuzzPlan, seed: u64, rng: &mut ChaCha8Rng) -> Scenario {
    let n = plan.n;
    let replicators: Vec<ProcessId> = (0..n).collect();
    // Common proposal half the time (arms the weak-validity check when the
    // run also happens to draw zero corruptions).
    let initials: Vec<String> = if rng.gen_bool(0.5) {
        vec!["v".into(); n]
    } else {
        (0..n).map(|i| format!("v{i}")).collect()
    };
    let k = rng.gen_range(0..=plan.f);
    let mut picks: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let pick = rng.gen_range(i..picks.len());
        picks.swap(i, pick);
    }
    let deviations: Vec<DeviationEntry> = picks[..k]
        .iter()
        .map(|&o| DeviationEntry {
            proc: replicators[o],
            kind: match rng.gen_range(0..10u32) {
                0..=3 => "silent",
                4..=6 => "commit-lie",
                _ => "vc-lie",
            }
            .into(),
            value: Some(format!("evil{o}")),
        })
        .collect();
    let correct: Vec<ProcessId> = replicators
        .iter()
        .copied()
        .filter(|p| !deviations.iter().any(|d| d.proc == *p))
        .collect();

    Scenario {
        name: format!("fuzz-consensus-{seed}"),
        protocol: ProtocolKind::Consensus,
        system: SystemSection {
            f: plan.f,
            sender: 0,
            replicators,
            receivers: vec![],
            processes: None,
        },
        inputs: InputsSection { value: None, initials },
        sim: SimParams {
            gst: plan.gst.unwrap_or_else(|| rng.gen_range(0..3000)),
            delta: 500,
            max_steps: plan.max_steps,
            sign_latency: [0, 10][rng.gen_range(0..2)],
            ..SimParams::default()
        },
        policy: PolicySpec::Chaos { seed },
        adversary: vec![],
        deviations,
        faults: FaultsSection::default(),
        stop: StopSpec::AllDecided { replicas: correct },
        expect: Default::default(),
    }
}

/// Run one seed end to end and judge it.
pub fn fuzz_one(plan: &FuzzPlan, seed: u64) -> FuzzVerdict {
    let sc = build_scenario(plan, seed);
    let mut verdict = FuzzVerdict {
        seed,
        safety: vec![],
        liveness: vec![],
        max_correct_proc_signs: 0,
        correct_signs_total: 0,
        stop_reason: String::new(),
        steps: 0,
        error: None,
    };
    let prepared = match scenario::prepare(&sc) {
        Ok(p) => p,
        Err(e) => {
            verdict.error = Some(e.to_string());
            return verdict;
        }
    };
    let mut world = prepared.world;
    let mut policy = prepared.policy.build();
    let outcome = match runner::run(&mut world, policy.as_mut(), &prepared.stop) {
        Ok(o) => o,
        Err(e) => {
            verdict.error = Some(e.to_string());
            return verdict;
        }
    };
    let mut ctx = prepared.ctx;
    ctx.ran_to_cap = outcome.reason == StopReason::MaxSteps;
    let report = metrics::analyze(&world.trace.events, &ctx, Some(&sc.name), StopInfo::from(&outcome));
    for (name, v) in &report.properties {
        if v.failed() {
            if is_safety(plan.protocol, name) {
                verdict.safety.push(name.clone());
            } else {
                verdict.liveness.push(name.clone());
            }
        }
    }
    verdict.max_correct_proc_signs = report
        .signatures
        .per_process
        .iter()
        .filter(|(p, _)| ctx.is_correct(**p))
        .map(|(_, c)| *c)
        .max()
        .unwrap_or(0);
    verdict.correct_signs_total = report.signatures.by_correct;
    verdict.stop_reason = report.stop.reason;
    verdict.steps = report.stop.steps;
    verdict
}

/// Run the whole seed range in parallel and aggregate.
pub fn fuzz(plan: &FuzzPlan) -> FuzzSummary {
    let verdicts: Vec<FuzzVerdict> =
        (plan.seed_start..plan.seed_end).into_par_iter().map(|s| fuzz_one(plan, s)).collect();
    let mut summary = FuzzSummary {
        protocol: plan.protocol,
        n: plan.n,
        f: plan.f,
        runs: verdicts.len() as u64,
        safety_violations: 0,
        liveness_failures: 0,
        max_correct_proc_signs: 0,
        max_correct_signs_total: 0,
        failures: vec![],
    };
    for v in verdicts {
        let bad_safety = !v.safety.is_empty() || v.error.is_some();
        let bad_liveness = !v.liveness.is_empty();
        summary.safety_violations += bad_safety as u64;
        summary.liveness_failures += bad_liveness as u64;
        summary.max_correct_proc_signs = summary.max_correct_proc_signs.max(v.max_correct_proc_signs);
        summary.max_correct_signs_total = summary.max_correct_signs_total.max(v.correct_signs_total);
        if (bad_safety || bad_liveness) && summary.failures.len() < FAILURE_DETAIL_CAP {
            summary.failures.push(v);
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_reproducible() {
        let plan = FuzzPlan::new(ProtocolKind::Cb, 3, 0..1);
        let a = build_scenario(&plan, 7);
        let b = build_scenario(&plan, 7);
        assert_eq!(a, b);
        let c = build_scenario(&plan, 8);
        assert_ne!(a, c, "different seeds draw different runs");
    }

    #[test]
    fn scenario_synthesis_stays_within_budgets() {
        for protocol in [ProtocolKind::Cb, ProtocolKind::Rb, ProtocolKind::Consensus] {
            let plan = FuzzPlan::new(protocol, 5, 0..1);
            for seed in 0..200 {
                let sc = build_scenario(&plan, seed);
                let corrupt_replicators = sc
                    .corrupted()
                    .iter()
                    .filter(|p| sc.system.replicators.contains(p))
                    .count();
                assert!(corrupt_replicators <= plan.f, "seed {seed}: {corrupt_replicators} > f");
                // Every synthesized scenario must pass its own validation.
                Scenario::parse(&sc.to_toml()).unwrap();
            }
        }
    }

    #[test]
    fn a_single_cb_seed_runs_clean() {
        let plan = FuzzPlan::new(ProtocolKind::Cb, 3, 0..1);
        let v = fuzz_one(&plan, 3);
        assert!(v.error.is_none(), "{:?}", v.error);
        assert!(v.safety.is_empty(), "{:?}", v.safety);
    }
}
