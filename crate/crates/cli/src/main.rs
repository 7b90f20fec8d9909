use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use deedchain::scenario::{
    bundled, bundled_scenarios, restore_state, run_scenario, snapshot_state, RunReport, ScenarioConfig,
    ScenarioScript, World,
};
use deedchain::{identity_digest, keypair_from_seed};
use serde_json::json;

/// Replays deed-transfer scenarios and inspects their artifacts.
#[derive(Parser)]
#[command(name = "deedchain", version)]
struct Cli {
    /// Override the script seed.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// JSON file with rate and balance overrides, replacing the script's config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a script (a path, or `bundled:<name>`) and emit its report.
    Run { script: String },
    /// Re-run the script embedded in a report and compare the result.
    Check { runlog: PathBuf },
    /// Run a script and archive the resulting state into a directory.
    Snapshot {
        path: PathBuf,
        #[arg(long, default_value = "bundled:happy_path")]
        script: String,
        /// Stop after the last event at or before this tick.
        #[arg(long)]
        tick: Option<u64>,
    },
    /// Verify an archive and summarize what it holds.
    Restore { path: PathBuf },
    /// Derive a keypair from a seed string.
    Keygen { seed: String },
    /// List the bundled scripts.
    Scenarios,
}

fn load_script(spec: &str, cli: &Cli) -> Result<ScenarioScript> {
    let mut script = match spec.strip_prefix("bundled:") {
        Some(name) => bundled(name).with_context(|| {
            let names: Vec<_> = bundled_scenarios().into_iter().map(|(n, _)| n).collect();
            format!("no bundled script {name:?} (have {})", names.join(", "))
        })?,
        None => {
            let text = std::fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
            ScenarioScript::from_json(&text).with_context(|| format!("parsing {spec}"))?
        }
    };
    if let Some(seed) = &cli.seed {
        script.seed.clone_from(seed);
    }
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        script.config = serde_json::from_str::<ScenarioConfig>(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
    }
    Ok(script)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summarize(report: &RunReport) {
    for inv in report.invariants.iter().filter(|i| !i.pass) {
        eprintln!("invariant {} failed: {}", inv.name, inv.detail);
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

fn exec(cli: &Cli) -> Result<bool> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Run { script } => {
            let report = run_scenario(&load_script(script, cli)?)?;
            emit(out, &report.to_json())?;
            summarize(&report);
            Ok(report.all_passed)
        }
        Command::Check { runlog } => {
            let text = std::fs::read_to_string(runlog).with_context(|| format!("reading {}", runlog.display()))?;
            let logged: RunReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", runlog.display()))?;
            if cli.seed.is_some() || cli.config.is_some() {
                bail!("check replays the embedded script; --seed and --config do not apply");
            }
            let fresh = run_scenario(&logged.script)?;
            let reproduced = fresh.to_json() == text;
            let first_divergence = logged
                .events
                .iter()
                .zip(&fresh.events)
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.seq);
            emit(
                out,
                &pretty(&json!({
                    "scenario": fresh.scenario,
                    "reproduced": reproduced,
                    "first_divergent_event": first_divergence,
                    "logged_head": logged.final_head,
                    "replayed_head": fresh.final_head,
                    "invariants": fresh.invariants,
                    "all_passed": fresh.all_passed,
                })),
            )?;
            summarize(&fresh);
            if !reproduced {
                eprintln!("run log does not match a fresh replay of its script");
            }
            Ok(reproduced && fresh.all_passed)
        }
        Command::Snapshot { path, script, tick } => {
            let script = load_script(script, cli)?;
            let actions = script.parse_actions()?;
            let mut world = World::new(&script);
            for (e, a) in script.events.iter().zip(actions) {
                if tick.is_some_and(|t| e.at_tick > t) {
                    break;
                }
                world.step(e, a);
            }
            let manifest = snapshot_state(&world, path)?;
            emit(out, &pretty(&serde_json::to_value(&manifest)?))?;
            Ok(true)
        }
        Command::Restore { path } => {
            let state = restore_state(path).with_context(|| format!("restoring {}", path.display()))?;
            let contracts: serde_json::Map<_, _> = state
                .contracts
                .iter()
                .map(|(n, c)| (n.clone(), json!({"state": c.state, "winner": c.winner, "deed_cid": c.deed_cid})))
                .collect();
            emit(
                out,
                &pretty(&json!({
                    "verified": true,
                    "tick": state.manifest.tick,
                    "head": state.chain.head_digest(),
                    "chain_len": state.chain.len(),
                    "store_objects": state.store.len(),
                    "contracts": contracts,
                })),
            )?;
            Ok(true)
        }
        Command::Keygen { seed } => {
            let pair = keypair_from_seed(seed.as_bytes())?;
            emit(
                out,
                &pretty(&json!({
                    "public": pair.public.to_hex(),
                    "identity": identity_digest(&pair).to_hex(),
                })),
            )?;
            Ok(true)
        }
        Command::Scenarios => {
            let names: Vec<_> = bundled_scenarios().into_iter().map(|(n, _)| format!("bundled:{n}\n")).collect();
            emit(out, &names.concat())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
