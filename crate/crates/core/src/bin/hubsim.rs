use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use toml::Value;

use hubsim::config::{parse_config, ConfigTree, SimConfig};
use hubsim::error::{Result, SimError};
use hubsim::report::manifest;
use hubsim::scenarios::{self, ScenarioId};

#[derive(Parser)]
#[command(
    name = "hubsim",
    version,
    about = "FPGA-hub datacenter co-design simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its CSV and manifest.
    Run {
        #[arg(value_parser = parse_scenario)]
        scenario: ScenarioId,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        /// `KEY=A..B`; KEY is a list key, bare names resolve under the scenario.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        trace: bool,
    },
    /// Check a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List scenarios and their modes.
    List,
}

fn parse_scenario(s: &str) -> std::result::Result<ScenarioId, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = ScenarioId::ALL.iter().map(|id| id.name()).collect();
        format!(
            "unknown scenario `{s}` (expected one of: {})",
            names.join(", ")
        )
    })
}

fn load(path: Option<&Path>) -> Result<ConfigTree> {
    match path {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| SimError::Io(format!("{}: {e}", p.display())))?;
            parse_config(&text)
        }
        None => Ok(ConfigTree::defaults()),
    }
}

fn parse_range(spec: &str) -> Result<(String, i64, i64)> {
    let bad = || SimError::Config(format!("--sweep expects KEY=A..B, got `{spec}`"));
    let (key, range) = spec.split_once('=').ok_or_else(bad)?;
    let (a, b) = range.split_once("..").ok_or_else(bad)?;
    let a: i64 = a.trim().parse().map_err(|_| bad())?;
    let b: i64 = b.trim().parse().map_err(|_| bad())?;
    if key.trim().is_empty() || a > b {
        return Err(bad());
    }
    Ok((key.trim().to_string(), a, b))
}

fn apply_overrides(
    tree: &mut ConfigTree,
    id: ScenarioId,
    seed: Option<u64>,
    mode: Option<&str>,
    sweep: Option<&str>,
) -> Result<()> {
    if let Some(seed) = seed {
        tree.set_value("scenario.seed", Value::Integer(seed as i64))?;
    }
    if let Some(mode) = mode {
        if id.modes().is_empty() {
            return Err(SimError::Config(format!("scenario `{id}` takes no --mode")));
        }
        if !id.modes().contains(&mode) {
            return Err(SimError::Config(format!(
                "--mode for {id} must be one of: {}",
                id.modes().join(", ")
            )));
        }
        tree.set_value(&format!("{id}.mode"), Value::String(mode.into()))?;
    }
    if let Some(spec) = sweep {
        let (name, a, b) = parse_range(spec)?;
        let key = id.sweep_key(&name);
        match tree.get(&key) {
            Some(Value::Array(_)) => {}
            Some(_) => {
                return Err(SimError::Config(format!(
                    "--sweep needs a list key, `{key}` is a scalar"
                )))
            }
            None => {
                return Err(SimError::ConfigKey {
                    key,
                    msg: "unknown key".into(),
                })
            }
        }
        let values = (a..=b).map(Value::Integer).collect();
        tree.set_value(&key, Value::Array(values))?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn run(
    id: ScenarioId,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    mode: Option<&str>,
    sweep: Option<&str>,
    trace: bool,
) -> Result<()> {
    let mut tree = load(config)?;
    apply_overrides(&mut tree, id, seed, mode, sweep)?;
    let cfg = SimConfig::from_tree(&tree)?;
    let result = scenarios::run(id, &cfg, trace)?;

    fs::create_dir_all(out).map_err(|e| SimError::Io(format!("{}: {e}", out.display())))?;
    let mut outputs = vec![format!("{id}.csv")];
    if trace {
        outputs.push(format!("{id}.trace"));
    }
    write(&out.join(format!("{id}.csv")), &result.table.to_csv()?)?;
    if let Some(text) = &result.trace {
        write(&out.join(format!("{id}.trace")), text)?;
    }
    let seed = tree.uint("scenario.seed");
    write(
        &out.join(format!("{id}.manifest")),
        &manifest(&tree, id.name(), seed, &outputs),
    )?;

    print!("{}", result.table.render());
    for n in &result.notes {
        println!("{n}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    let res = match &cli.cmd {
        Cmd::Run {
            scenario,
            config,
            seed,
            out,
            mode,
            sweep,
            trace,
        } => run(
            *scenario,
            config.as_deref(),
            *seed,
            out,
            mode.as_deref(),
            sweep.as_deref(),
            *trace,
        ),
        Cmd::Validate { config } => load(Some(config))
            .and_then(|t| SimConfig::from_tree(&t))
            .map(|_| {
                println!("{}: ok", config.display());
            }),
        Cmd::List => {
            for id in ScenarioId::ALL {
                let modes = if id.modes().is_empty() {
                    String::new()
                } else {
                    format!(" [modes: {}]", id.modes().join(", "))
                };
                println!("{:<14} {}{modes}", id.name(), id.describe());
            }
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
