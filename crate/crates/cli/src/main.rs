use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raidrel_cli::output::{write_scenario, write_sweep};
use raidrel_cli::run::DEFAULT_MC_RUNS;
use raidrel_cli::scenario::{parse_count, parse_truncation, McSpec};
use raidrel_cli::{builtin_scenarios, load_scenarios, run_scenario, run_sweep, CliError, Mode, ScenarioSpec, SweepAxis};
use raidrel_core::Truncation;

/// Reliability curves of SSD RAID arrays with aging-dependent error rates.
#[derive(Parser, Debug)]
#[command(name = "raidrel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario file (TOML); the built-in scenarios are used without it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this scenario.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// State cap of the truncated chain, "auto" or "full".
    #[arg(long, global = true, value_parser = parse_truncation)]
    truncate: Option<Truncation>,
    /// Monte Carlo runs.
    #[arg(long, global = true, value_parser = parse_count)]
    runs: Option<u64>,
    /// Emit a sample every this many solver intervals.
    #[arg(long, global = true, value_parser = parse_count)]
    stride: Option<u64>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the reliability curves of each scenario.
    Solve,
    /// Solve one scenario over a range of one parameter.
    Sweep {
        /// Swept parameter: n, ecc_c or m.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Probe ages (comma-separated); default is every replacement epoch.
        #[arg(long, value_delimiter = ',', value_parser = parse_count)]
        probe: Vec<u64>,
    },
    /// Solve and simulate each scenario at the same ages.
    Validate,
    /// Simulate each scenario.
    Mc,
}

fn select(global: &Global) -> Result<Vec<ScenarioSpec>, CliError> {
    let mut specs = match &global.config {
        Some(path) => load_scenarios(path)?,
        None => builtin_scenarios(),
    };
    if let Some(name) = &global.scenario {
        specs.retain(|s| &s.name == name);
        if specs.is_empty() {
            return Err(CliError::Validation(format!("no scenario named '{name}'")));
        }
    }
    for spec in &mut specs {
        if let Some(t) = global.truncate {
            spec.truncation = t;
        }
        if let Some(stride) = global.stride {
            spec.stride = stride;
        }
        if global.seed.is_some() || global.runs.is_some() {
            let mc = spec.mc.get_or_insert(McSpec {
                runs: DEFAULT_MC_RUNS,
                seed: 0,
            });
            if let Some(seed) = global.seed {
                mc.seed = seed;
            }
            if let Some(runs) = global.runs {
                mc.runs = runs;
            }
        }
        spec.validate()?;
    }
    Ok(specs)
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let specs = select(&cli.global)?;
    let mut complete = true;
    match cli.command {
        Command::Sweep { axis, values, probe } => {
            let spec = match specs.as_slice() {
                [one] => one,
                [] => return Err(CliError::Validation("no scenario to sweep".into())),
                _ => return Err(CliError::Validation("sweep needs --scenario when several are defined".into())),
            };
            let probes = (!probe.is_empty()).then_some(probe.as_slice());
            let sweep = run_sweep(spec, axis, &values, probes)?;
            for path in write_sweep(&sweep, &cli.global.out)? {
                println!("{}", path.display());
            }
            complete &= sweep.failures.is_empty();
        }
        command => {
            let mode = match command {
                Command::Solve => Mode::Solve,
                Command::Validate => Mode::Validate,
                _ => Mode::Simulate,
            };
            for spec in &specs {
                let run = run_scenario(spec, mode)?;
                for path in write_scenario(&run, &cli.global.out)? {
                    println!("{}", path.display());
                }
                for scheme in &run.schemes {
                    if let Some((inside, total)) = scheme.mc_agreement() {
                        log::info!("{} {}: solver inside the MC interval at {inside}/{total} ages", spec.name, scheme.label);
                    }
                }
                complete &= !run.partial();
            }
        }
    }
    Ok(complete)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some schemes failed; see the manifest");
            ExitCode::from(CliError::Solver(String::new()).exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
