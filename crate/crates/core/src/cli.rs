//! Command-line front end.
//!
//! Subcommands:
//! * `run <scenario.scn>` — execute one scenario; per-property PASS/FAIL
//!   lines; exit 0 exactly when the file's expectations hold (a declared
//!   violation counts as success when it occurs).
//! * `fuzz <protocol>` — seeded randomized runs in parallel; exit 0 exactly
//!   when zero safety violations and zero liveness failures.
//! * `modelcheck <scope>` — exhaustive small-scope exploration; exit 0 when
//!   the scope's verdict matches its contract (clean for `cb`/`rb`, the known
//!   counterexample found for `cb-collect`).
//! * `report <trace.jsonl>` — recompute the full report from a saved trace.
//!
//! Exit codes: 0 success, 1 property/expectation failure, 2 usage or input
//! errors.

use crate::metrics::{self, AnalysisContext, ProtocolKind, RunReport, StopInfo};
use crate::modelcheck::{self, McConfig, McScope};
use crate::scenario::{self, Scenario};
use crate::substrate::policy::PolicySpec;
use crate::substrate::runner::{self, StopReason};
use crate::substrate::trace::Trace;
use crate::{fuzz, types::RunError};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "frugalbft",
    about = "Simulator, fuzzer and model checker for signature-frugal Byzantine broadcast and consensus",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario file and check its expectations.
    Run(RunArgs),
    /// Randomized adversarial runs over a seed range.
    Fuzz(FuzzArgs),
    /// Exhaustive small-scope exploration.
    Modelcheck(McArgs),
    /// Recompute a report from a saved trace file.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML, conventionally *.scn).
    scenario: PathBuf,
    /// Replace the scenario's policy with seeded chaotic scheduling.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the run's trace as JSON lines (metadata record first).
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    /// cb | rb | consensus
    protocol: String,
    /// Replicator count (odd).
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Seed range, half-open (e.g. 0..1000).
    #[arg(long, default_value = "0..1000")]
    seeds: String,
    /// Fix the stabilization time instead of drawing it per seed.
    #[arg(long)]
    gst: Option<u64>,
    /// Step cap per run.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Write the summary as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// cb | cb-collect | rb
    scope: String,
    /// Depth cap (cut-offs are reported, not fatal).
    #[arg(long, default_value_t = 256)]
    depth: usize,
    /// Byzantine action budget override.
    #[arg(long)]
    budget: Option<u32>,
    /// Distinct-state cap.
    #[arg(long, default_value_t = 20_000_000)]
    max_states: u64,
    /// Catalogue every violation instead of stopping at the first.
    #[arg(long)]
    all: bool,
    /// Write the outcome as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace file written by `run --trace-out`.
    trace: PathBuf,
    /// Write the recomputed report as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

/// First line of a trace file: everything needed to re-analyze the events.
#[derive(Serialize, Deserialize)]
pub struct TraceMeta {
    pub meta: TraceMetaBody,
}

#[derive(Serialize, Deserialize)]
pub struct TraceMetaBody {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub ctx: AnalysisContext,
    pub stop: StopInfo,
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(&a),
        Cmd::Fuzz(a) => cmd_fuzz(&a),
        Cmd::Modelcheck(a) => cmd_modelcheck(&a),
        Cmd::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path)
        .map_err(|e| RunError::ScenarioInvalid(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents)
        .map_err(|e| RunError::ScenarioInvalid(format!("cannot write {}: {e}", path.display())))
}

/// Run a prepared scenario to completion and build its report.
pub fn execute_scenario(
    sc: &Scenario,
    seed: Option<u64>,
) -> Result<(RunReport, Trace, AnalysisContext), RunError> {
    let prepared = scenario::prepare(sc)?;
    let mut world = prepared.world;
    let spec = match seed {
        Some(s) => PolicySpec::Chaos { seed: s },
        None => prepared.policy,
    };
    let mut policy = spec.build();
    let outcome = runner::run(&mut world, policy.as_mut(), &prepared.stop)?;
    let mut ctx = prepared.ctx;
    ctx.ran_to_cap = outcome.reason == StopReason::MaxSteps;
    let report =
        metrics::analyze(&world.trace.events, &ctx, Some(&sc.name), StopInfo::from(&outcome));
    Ok((report, std::mem::take(&mut world.trace), ctx))
}

fn cmd_run(args: &RunArgs) -> Result<i32, RunError> {
    let sc = Scenario::parse(&read_to_string(&args.scenario)?)?;
    let (report, trace, ctx) = execute_scenario(&sc, args.seed)?;

    if let Some(path) = &args.trace_out {
        let meta = TraceMeta {
            meta: TraceMetaBody {
                scenario: Some(sc.name.clone()),
                seed: args.seed,
                ctx,
                stop: report.stop.clone(),
            },
        };
        let mut text = serde_json::to_string(&meta).expect("trace metadata serializes");
        text.push('\n');
        text.push_str(&trace.to_jsonl());
        write_file(path, &text)?;
    }
    if let Some(path) = &args.report_out {
        write_file(path, &report.to_json())?;
    }

    println!("scenario {} ({} steps, stopped: {})", sc.name, report.stop.steps, report.stop.reason);
    for (name, v) in &report.properties {
        println!("property {name}: {:?} — {}", v.verdict, v.detail);
    }
    println!(
        "signatures: {} total, {} by correct processes ({} background)",
        report.signatures.total, report.signatures.by_correct, report.signatures.background_correct
    );
    let mismatches = scenario::check_expectations(&sc.expect, &report);
    if mismatches.is_empty() {
        println!("expectations: all hold");
        Ok(0)
    } else {
        for m in &mismatches {
            println!("expectation failed: {m}");
        }
        Ok(1)
    }
}

fn parse_seed_range(text: &str) -> Result<std::ops::Range<u64>, RunError> {
    let bad = || RunError::ScenarioInvalid(format!("seed range must look like A..B, got '{text}'"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let start: u64 = a.trim().parse().map_err(|_| bad())?;
    let end: u64 = b.trim().parse().map_err(|_| bad())?;
    if end <= start {
        return Err(bad());
    }
    Ok(start..end)
}

fn parse_protocol(text: &str) -> Result<ProtocolKind, RunError> {
    match text {
        "cb" => Ok(ProtocolKind::Cb),
        "cb-collect" => Ok(ProtocolKind::CbCollect),
        "rb" => Ok(ProtocolKind::Rb),
        "consensus" => Ok(ProtocolKind::Consensus),
        other => Err(RunError::ScenarioInvalid(format!("unknown protocol '{other}'"))),
    }
}

fn cmd_fuzz(args: &FuzzArgs) -> Result<i32, RunError> {
    let protocol = parse_protocol(&args.protocol)?;
    if protocol == ProtocolKind::CbCollect {
        return Err(RunError::ScenarioInvalid(
            "fuzz drives cb, rb or consensus; the collect variant is for modelcheck and scripted scenarios".into(),
        ));
    }
    if args.n % 2 == 0 || args.n < 3 {
        return Err(RunError::ConfigInvalid(format!("n must be odd and >= 3, got {}", args.n)));
    }
    let seeds = parse_seed_range(&args.seeds)?;
    let mut plan = fuzz::FuzzPlan::new(protocol, args.n, seeds);
    plan.gst = args.gst;
    if let Some(cap) = args.max_steps {
        plan.max_steps = cap;
    }
    let summary = fuzz::fuzz(&plan);
    println!(
        "fuzz {} n={} f={}: {} runs, {} safety violations, {} liveness failures",
        args.protocol, plan.n, plan.f, summary.runs, summary.safety_violations, summary.liveness_failures
    );
    println!(
        "correct-process signatures: max {} per process, max {} per run",
        summary.max_correct_proc_signs, summary.max_correct_signs_total
    );
    for v in &summary.failures {
        println!(
            "  seed {}: safety {:?} liveness {:?}{}",
            v.seed,
            v.safety,
            v.liveness,
            v.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
        );
    }
    if let Some(path) = &args.report_out {
        write_file(path, &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    }
    Ok(if summary.safety_violations == 0 && summary.liveness_failures == 0 { 0 } else { 1 })
}

fn cmd_modelcheck(args: &McArgs) -> Result<i32, RunError> {
    let scope = match args.scope.as_str() {
        "cb" => McScope::Cb,
        "cb-collect" => McScope::CbCollect,
        "rb" => McScope::Rb,
        other => {
            return Err(RunError::ScenarioInvalid(format!(
                "unknown scope '{other}' (expected cb, cb-collect or rb; consensus is out of \
                 model-checking scope — use fuzz)"
            )))
        }
    };
    let mut cfg = McConfig::new(scope);
    cfg.max_depth = args.depth;
    cfg.max_states = args.max_states;
    cfg.budget = args.budget;
    cfg.stop_at_first = !args.all;
    println!("scope: {}", modelcheck::scope_description(&cfg)?);
    let out = modelcheck::check(&cfg)?;
    println!(
        "explored {} states, {} transitions, max depth {} ({} terminal, {} quiescent) in {} ms",
        out.states, out.transitions, out.max_depth_seen, out.terminal_states, out.quiescent_states,
        out.runtime_ms
    );
    if out.depth_exceeded {
        println!("note: depth cap {} hit; deeper states not explored", args.depth);
    }
    if out.states_exceeded {
        println!("note: state cap {} hit; exploration incomplete", args.max_states);
    }
    println!("violations: {}", out.violations_total);
    for v in &out.violations {
        println!("  {} at depth {}: {}", v.kind, v.depth, v.detail);
        for (i, step) in v.path.iter().enumerate() {
            println!("    {:>3}. {step}", i + 1);
        }
    }
    if let Some(path) = &args.report_out {
        write_file(path, &serde_json::to_string_pretty(&out).expect("outcome serializes"))?;
    }
    // cb and rb promise safety: any violation is a failure. cb-collect exists
    // to demonstrate its known flaw: *not* finding it is the regression.
    let ok = match scope {
        McScope::Cb | McScope::Rb => out.violations_total == 0,
        McScope::CbCollect => out.violations_total > 0,
    };
    Ok(if ok { 0 } else { 1 })
}

fn cmd_report(args: &ReportArgs) -> Result<i32, RunError> {
    let text = read_to_string(&args.trace)?;
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| RunError::ScenarioInvalid("trace file is empty".into()))?;
    let meta: TraceMeta = serde_json::from_str(first).map_err(|e| {
        RunError::ScenarioInvalid(format!("first line is not a trace metadata record: {e}"))
    })?;
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    let events = Trace::parse_jsonl(&rest)
        .map_err(|e| RunError::ScenarioInvalid(format!("bad trace line: {e}")))?;
    let report = metrics::analyze(
        &events,
        &meta.meta.ctx,
        meta.meta.scenario.as_deref(),
        meta.meta.stop.clone(),
    );
    for (name, v) in &report.properties {
        println!("property {name}: {:?} — {}", v.verdict, v.detail);
    }
    println!(
        "signatures: {} total, {} by correct processes; {} deliveries, {} decisions",
        report.signatures.total,
        report.signatures.by_correct,
        report.deliveries.len(),
        report.decides.len()
    );
    if let Some(path) = &args.report_out {
        write_file(path, &report.to_json())?;
    }
    Ok(if report.violations().is_empty() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_parse() {
        assert_eq!(parse_seed_range("0..10").unwrap(), 0..10);
        assert_eq!(parse_seed_range(" 5 .. 6 ").unwrap(), 5..6);
        assert!(parse_seed_range("10..10").is_err());
        assert!(parse_seed_range("abc").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["frugalbft", "no-such-subcommand"]), 2);
        assert_eq!(main_with_args(["frugalbft", "run", "/definitely/missing.scn"]), 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(main_with_args(["frugalbft", "--help"]), 0);
    }
}
