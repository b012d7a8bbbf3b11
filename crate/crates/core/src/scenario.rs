//! Scenario files: declarative run descriptions (TOML).
//!
//! A scenario names a protocol, the process layout, inputs, timing, the
//! scheduling policy, faults and Byzantine behavior, a stop condition, and
//! the expected outcome. Expected outcomes include *expected violations* —
//! a regression scenario can declare "consistency must FAIL here" and the
//! harness exits zero exactly when the declared violation occurs.
//!
//! ```toml
//! name = "cb-fastpath"
//! protocol = "cb"                  # cb | cb-collect | rb | consensus
//!
//! [system]
//! f = 1
//! sender = 0
//! replicators = [1, 2, 3]
//! receivers = [4, 5]
//!
//! [inputs]
//! value = "m1"
//!
//! [sim]
//! sign_latency = 20000
//!
//! [stop]
//! kind = "delivered"
//! receivers = [4, 5]
//! drain_signing = true
//!
//! [expect]
//! all_fast_paths = true
//! signs_before_first_deliver = 0
//! max_correct_signs = 1
//! ```

use crate::adversary::{builtin_script, ScriptStep};
use crate::cb::ScanMode;
use crate::consensus::Deviation;
use crate::metrics::{AnalysisContext, ProtocolKind, RunReport};
use crate::substrate::policy::PolicySpec;
use crate::substrate::runner::StopWhen;
use crate::substrate::world::{SimParams, World};
use crate::types::{Blob, ProcessId, RunError, SystemConfig};
use crate::{cb, consensus, rb};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub protocol: ProtocolKind,
    pub system: SystemSection,
    #[serde(default)]
    pub inputs: InputsSection,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub policy: PolicySpec,
    /// Byzantine processes and what they do.
    #[serde(default, rename = "adversary", skip_serializing_if = "Vec::is_empty")]
    pub adversary: Vec<AdversaryEntry>,
    /// Consensus-level lies, by process.
    #[serde(default, rename = "deviation", skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<DeviationEntry>,
    #[serde(default)]
    pub faults: FaultsSection,
    pub stop: StopSpec,
    #[serde(default)]
    pub expect: Expectations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSection {
    pub f: usize,
    /// Broadcast sender (cb/rb). Unused for consensus.
    #[serde(default)]
    pub sender: ProcessId,
    /// Replicator processes in ordinal order; must be exactly 2f+1.
    pub replicators: Vec<ProcessId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub receivers: Vec<ProcessId>,
    /// Total process count; defaults to one past the highest mentioned id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InputsSection {
    /// Broadcast payload (cb/rb).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    /// Consensus proposals, one per replica ordinal.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initials: Vec<String>,
}

/// One corrupted process. Either a named builtin attack or inline steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryEntry {
    pub proc: ProcessId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Instance label the builtin targets; defaults to the main instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    /// Replicator ordinal the builtin targets; defaults to the process's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<ScriptStep>,
    /// Whether the process also runs its honest protocol tasks. Defaults to
    /// true for attacks layered on honest behavior (slot retraction,
    /// overwrite-after-delivery), false otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub honest_tasks: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub proc: ProcessId,
    /// silent | commit-lie | vc-lie
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultsSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crashed: Vec<ProcessId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sleepers: Vec<Sleeper>,
}

/// A correct-but-slow process: asleep from the start until `until`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sleeper {
    pub proc: ProcessId,
    pub until: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StopSpec {
    /// Stop once the listed receivers delivered the main instance.
    Delivered {
        receivers: Vec<ProcessId>,
        #[serde(default)]
        drain_signing: bool,
    },
    /// Stop once the listed replicas decided.
    AllDecided { replicas: Vec<ProcessId> },
    /// Run to quiescence or the step cap.
    RunToEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictExpect {
    Pass,
    Fail,
}

/// What the run must show. Every evaluated safety property defaults to an
/// expected PASS; listing `properties.consistency = "fail"` inverts that for
/// declared-violation regressions. Numeric fields are checked exactly when
/// present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, VerdictExpect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_correct_signs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs_before_first_deliver: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs_before_first_decide: Option<u64>,
    /// Every correct receiver delivered on the fast path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_fast_paths: Option<bool>,
    /// All correct decides happened in this view.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_view: Option<u64>,
    /// Some receiver's completed scan view held ≥ 2 distinct values (the
    /// equivocation witness).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_saw_conflict: Option<bool>,
    /// Required stop reason: condition | max-steps | quiescent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, RunError> {
        let sc: Scenario = toml::from_str(text)
            .map_err(|e| RunError::ScenarioInvalid(format!("scenario parse error: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    fn validate(&self) -> Result<(), RunError> {
        let n = self.system.replicators.len();
        if n != 2 * self.system.f + 1 {
            return Err(RunError::ScenarioInvalid(format!(
                "{} replicators listed but n must be 2f+1 = {}",
                n,
                2 * self.system.f + 1
            )));
        }
        if self.protocol == ProtocolKind::Consensus {
            if !self.inputs.initials.is_empty() && self.inputs.initials.len() != n {
                return Err(RunError::ScenarioInvalid(format!(
                    "{} initial values for {} replicas",
                    self.inputs.initials.len(),
                    n
                )));
            }
        } else if self.system.receivers.is_empty() {
            return Err(RunError::ScenarioInvalid("broadcast scenario lists no receivers".into()));
        }
        // Only replicator corruption counts against f: the protocols tolerate
        // a Byzantine sender outright (it just weakens what they promise).
        let corrupt_replicators = self
            .corrupted()
            .iter()
            .filter(|p| self.system.replicators.contains(p))
            .count();
        if corrupt_replicators > self.system.f {
            return Err(RunError::ScenarioInvalid(format!(
                "{corrupt_replicators} corrupted replicators exceed f = {}",
                self.system.f
            )));
        }
        Ok(())
    }

    /// All processes with Byzantine behavior (scripts or deviations).
    pub fn corrupted(&self) -> Vec<ProcessId> {
        let mut out: Vec<ProcessId> = self
            .adversary
            .iter()
            .map(|a| a.proc)
            .chain(self.deviations.iter().map(|d| d.proc))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn num_processes(&self) -> usize {
        let highest = self
            .system
            .replicators
            .iter()
            .chain(self.system.receivers.iter())
            .chain(std::iter::once(&self.system.sender))
            .copied()
            .max()
            .unwrap_or(0);
        self.system.processes.unwrap_or(highest + 1).max(highest + 1)
    }

    /// Label of the instance the scenario revolves around.
    pub fn main_instance(&self) -> String {
        match self.protocol {
            ProtocolKind::Cb | ProtocolKind::CbCollect => "cb/0".to_string(),
            ProtocolKind::Rb => "rb/0".to_string(),
            ProtocolKind::Consensus => String::new(),
        }
    }
}

/// A scenario resolved against a fresh world, ready to run.
pub struct Prepared {
    pub world: World,
    pub policy: PolicySpec,
    pub stop: StopWhen,
    pub ctx: AnalysisContext,
}

pub fn prepare(sc: &Scenario) -> Result<Prepared, RunError> {
    let cfg = SystemConfig {
        num_processes: sc.num_processes(),
        f: sc.system.f,
        replicators: sc.system.replicators.clone(),
    };
    let mut world = World::new(cfg, sc.sim.clone(), true)?;
    for &p in &sc.faults.crashed {
        world.crash(p);
    }
    for s in &sc.faults.sleepers {
        world.sleep_until(s.proc, s.until);
    }
    let corrupted = sc.corrupted();
    for &p in &corrupted {
        world.adversary.mark_corrupted(p);
    }

    let value = Blob::from(sc.inputs.value.as_deref().unwrap_or("m1"));
    let label = sc.main_instance();
    let honest: Vec<ProcessId> = sc
        .system
        .replicators
        .iter()
        .copied()
        .filter(|r| !sc.adversary.iter().any(|a| a.proc == *r && !a.runs_honest_tasks()))
        .collect();
    let sender_corrupt = sc
        .adversary
        .iter()
        .any(|a| a.proc == sc.system.sender && !a.runs_honest_tasks());

    match sc.protocol {
        ProtocolKind::Cb | ProtocolKind::CbCollect => {
            let mode = if sc.protocol == ProtocolKind::CbCollect { ScanMode::Collect } else { ScanMode::Scan };
            let id = cb::create_instance(&mut world, sc.system.sender, &label);
            if !sender_corrupt {
                cb::broadcast(&mut world, id, value, None)?;
            }
            cb::spawn_replicators(&mut world, id, &honest);
            for &r in &sc.system.receivers {
                cb::spawn_receiver(&mut world, id, r, mode);
            }
        }
        ProtocolKind::Rb => {
            let id = rb::create_instance(&mut world, sc.system.sender, &label);
            if !sender_corrupt {
                rb::broadcast(&mut world, id, value)?;
            }
            rb::spawn_replicators(&mut world, id, &honest);
            for &r in &sc.system.receivers {
                rb::spawn_receiver(&mut world, id, r);
            }
        }
        ProtocolKind::Consensus => {
            let n = sc.system.replicators.len();
            let initials: Vec<Option<Blob>> = if sc.inputs.initials.is_empty() {
                vec![Some(value); n]
            } else {
                sc.inputs.initials.iter().map(|s| Some(Blob::from(s.as_str()))).collect()
            };
            let mut deviations = vec![Deviation::None; n];
            for d in &sc.deviations {
                let o = sc
                    .system
                    .replicators
                    .iter()
                    .position(|&r| r == d.proc)
                    .ok_or_else(|| {
                        RunError::ScenarioInvalid(format!("deviation for non-replica process {}", d.proc))
                    })?;
                deviations[o] = d.resolve()?;
            }
            consensus::setup(&mut world, initials, deviations)?;
        }
    }

    for entry in &sc.adversary {
        let steps = entry.resolve_steps(sc)?;
        world.adversary.install_script(entry.proc, steps);
    }

    let stop = match &sc.stop {
        StopSpec::Delivered { receivers, drain_signing } => match sc.protocol {
            ProtocolKind::Rb => StopWhen::RbDelivered {
                rb: crate::rb::RbId(0),
                receivers: receivers.clone(),
                drain_signing: *drain_signing,
            },
            ProtocolKind::Consensus => {
                return Err(RunError::ScenarioInvalid(
                    "stop kind 'delivered' does not apply to consensus".into(),
                ))
            }
            _ => StopWhen::CbDelivered {
                cb: crate::cb::CbId(0),
                receivers: receivers.clone(),
                drain_signing: *drain_signing,
            },
        },
        StopSpec::AllDecided { replicas } => StopWhen::AllDecided { replicas: replicas.clone() },
        StopSpec::RunToEnd => StopWhen::Never,
    };

    let all_same_input = match sc.protocol {
        ProtocolKind::Consensus => {
            let vals: Vec<&str> = if sc.inputs.initials.is_empty() {
                vec![sc.inputs.value.as_deref().unwrap_or("m1")]
            } else {
                sc.inputs.initials.iter().map(|s| s.as_str()).collect()
            };
            let first = vals[0];
            vals.iter().all(|v| *v == first).then(|| Blob::from(first).to_hex())
        }
        _ => None,
    };

    let ctx = AnalysisContext {
        protocol: sc.protocol,
        n: sc.system.replicators.len(),
        f: sc.system.f,
        corrupted: corrupted.iter().copied().collect(),
        crashed: sc.faults.crashed.iter().copied().collect(),
        sender: sc.system.sender,
        receivers: sc.system.receivers.clone(),
        replicas: sc.system.replicators.clone(),
        main_instance: (!label.is_empty()).then_some(label),
        all_same_input,
        ran_to_cap: false,
    };
    Ok(Prepared { world, policy: sc.policy.clone(), stop, ctx })
}

impl AdversaryEntry {
    pub fn runs_honest_tasks(&self) -> bool {
        // The ready-set retractor is a pure afterthought on honest behavior;
        // every other builtin script carries its own protocol moves.
        self.honest_tasks
            .unwrap_or_else(|| matches!(self.builtin.as_deref(), Some("readyset-retractor")))
    }

    fn resolve_steps(&self, sc: &Scenario) -> Result<Vec<ScriptStep>, RunError> {
        if let Some(name) = &self.builtin {
            let instance = self.instance.clone().unwrap_or_else(|| sc.main_instance());
            let ordinal = match self.ordinal {
                Some(o) => o,
                None => sc
                    .system
                    .replicators
                    .iter()
                    .position(|&r| r == self.proc)
                    .unwrap_or(sc.system.replicators.len().saturating_sub(1)),
            };
            builtin_script(name, &instance, ordinal).ok_or_else(|| {
                RunError::ScenarioInvalid(format!("unknown builtin adversary script '{name}'"))
            })
        } else if self.steps.is_empty() {
            Err(RunError::ScenarioInvalid(format!(
                "adversary entry for process {} has neither builtin nor steps",
                self.proc
            )))
        } else {
            Ok(self.steps.clone())
        }
    }
}

impl DeviationEntry {
    fn resolve(&self) -> Result<Deviation, RunError> {
        let val = || Blob::from(self.value.as_deref().unwrap_or("forged"));
        match self.kind.as_str() {
            "silent" => Ok(Deviation::Silent),
            "commit-lie" => Ok(Deviation::CommitLie(val())),
            "vc-lie" => Ok(Deviation::VcLie(val())),
            other => Err(RunError::ScenarioInvalid(format!("unknown deviation kind '{other}'"))),
        }
    }
}

/// Compare a finished run's report against the scenario's expectations.
/// Returns human-readable mismatches; empty means the scenario holds.
pub fn check_expectations(exp: &Expectations, report: &RunReport) -> Vec<String> {
    let mut bad = Vec::new();
    for (name, verdict) in &report.properties {
        let want = exp.properties.get(name).copied().unwrap_or(VerdictExpect::Pass);
        let holds = match want {
            VerdictExpect::Pass => verdict.holds(),
            VerdictExpect::Fail => verdict.failed(),
        };
        if !holds {
            bad.push(format!(
                "property {name}: expected {want:?}, got {:?}: {}",
                verdict.verdict, verdict.detail
            ));
        }
    }
    for (name, _) in exp.properties.iter().filter(|(n, _)| !report.properties.contains_key(*n)) {
        bad.push(format!("property {name}: expected a verdict but none was evaluated"));
    }
    if let Some(cap) = exp.max_correct_signs {
        if report.signatures.by_correct > cap {
            bad.push(format!(
                "correct-process signatures {} exceed cap {cap}",
                report.signatures.by_correct
            ));
        }
    }
    if let Some(want) = exp.signs_before_first_deliver {
        if report.signatures.before_first_deliver != want {
            bad.push(format!(
                "signatures before first delivery: {} (wanted {want})",
                report.signatures.before_first_deliver
            ));
        }
    }
    if let Some(want) = exp.signs_before_first_decide {
        if report.signatures.before_first_decide != want {
            bad.push(format!(
                "signatures before first decide: {} (wanted {want})",
                report.signatures.before_first_decide
            ));
        }
    }
    if exp.all_fast_paths == Some(true) {
        let slow = report
            .deliveries
            .iter()
            .filter(|d| d.path != crate::types::DeliveryPath::Fast)
            .count();
        if slow > 0 || report.deliveries.is_empty() {
            bad.push(format!("{slow} non-fast deliveries (fast-only expected)"));
        }
    }
    if let Some(view) = exp.decided_view {
        if report.decides.is_empty() {
            bad.push(format!("expected decisions in view {view}, saw none"));
        }
        for d in &report.decides {
            if d.view != view {
                bad.push(format!("process {} decided in view {} (wanted {view})", d.replica, d.view));
            }
        }
    }
    if let Some(want) = exp.scan_saw_conflict {
        let saw = report.scans.views_with_multiple_values > 0;
        if saw != want {
            bad.push(format!("scan conflict witness = {saw} (wanted {want})"));
        }
    }
    if let Some(reason) = &exp.stop_reason {
        if &report.stop.reason != reason {
            bad.push(format!("stop reason {} (wanted {reason})", report.stop.reason));
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "cb-fastpath"
protocol = "cb"

[system]
f = 1
sender = 0
replicators = [1, 2, 3]
receivers = [4, 5]

[inputs]
value = "m1"

[sim]
sign_latency = 20000

[stop]
kind = "delivered"
receivers = [4, 5]
drain_signing = true

[expect]
all_fast_paths = true
signs_before_first_deliver = 0
max_correct_signs = 1
"#;

    #[test]
    fn sample_scenario_parses_and_round_trips() {
        let sc = Scenario::parse(SAMPLE).unwrap();
        assert_eq!(sc.name, "cb-fastpath");
        assert_eq!(sc.protocol, ProtocolKind::Cb);
        assert_eq!(sc.system.replicators, vec![1, 2, 3]);
        assert_eq!(sc.sim.sign_latency, 20_000);
        assert_eq!(sc.sim.gst, 0, "omitted sim fields take defaults");
        let again = Scenario::parse(&sc.to_toml()).unwrap();
        assert_eq!(sc, again);
    }

    #[test]
    fn replicator_count_must_match_f() {
        let bad = SAMPLE.replace("replicators = [1, 2, 3]", "replicators = [1, 2]");
        let err = Scenario::parse(&bad).unwrap_err();
        assert!(matches!(err, RunError::ScenarioInvalid(_)));
    }

    #[test]
    fn corruption_budget_is_enforced() {
        let mut sc = Scenario::parse(SAMPLE).unwrap();
        sc.adversary = vec![
            AdversaryEntry {
                proc: 1,
                builtin: Some("equivocating-sender".into()),
                instance: None,
                ordinal: None,
                steps: vec![],
                honest_tasks: None,
            },
            AdversaryEntry {
                proc: 2,
                builtin: Some("equivocating-sender".into()),
                instance: None,
                ordinal: None,
                steps: vec![],
                honest_tasks: None,
            },
        ];
        let err = sc.validate().unwrap_err();
        assert!(err.to_string().contains("exceed f"));
    }

    #[test]
    fn prepare_builds_a_runnable_cb_world() {
        let sc = Scenario::parse(SAMPLE).unwrap();
        let prep = prepare(&sc).unwrap();
        assert_eq!(prep.world.cfg.num_processes, 6);
        assert_eq!(prep.world.cb.len(), 1);
        assert_eq!(prep.world.cb[0].label, "cb/0");
        // Sender broadcast + 3 replicators + 2 receivers spawned.
        assert!(prep.world.cb[0].broadcast.is_some());
        assert!(prep.world.tasks.len() >= 6);
    }

    #[test]
    fn corrupt_sender_does_not_broadcast_honestly() {
        let mut sc = Scenario::parse(SAMPLE).unwrap();
        sc.adversary = vec![AdversaryEntry {
            proc: 0,
            builtin: Some("equivocating-sender".into()),
            instance: None,
            ordinal: None,
            steps: vec![],
            honest_tasks: None,
        }];
        let prep = prepare(&sc).unwrap();
        assert!(prep.world.cb[0].broadcast.is_none());
        assert!(prep.world.adversary.is_corrupt(0));
        assert_eq!(prep.world.adversary.script_progress(0), Some((0, 4)));
    }

    #[test]
    fn unknown_builtin_is_a_scenario_error() {
        let mut sc = Scenario::parse(SAMPLE).unwrap();
        sc.adversary = vec![AdversaryEntry {
            proc: 0,
            builtin: Some("no-such-attack".into()),
            instance: None,
            ordinal: None,
            steps: vec![],
            honest_tasks: None,
        }];
        assert!(prepare(&sc).is_err());
    }
}
