use std::error::Error as _;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmwigner::scenario::{
    figure_scenarios, output_root, parse_override, run_scenario, Resolution, RunOptions, Scenario,
    ScenarioResult, Stage, FIGURES,
};

/// Non-Markovian open-system dynamics and generalized Wigner negativity.
#[derive(Parser, Debug)]
#[command(name = "nmwigner", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root directory; overrides $NMWIGNER_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a scenario value, e.g. `--set time.dt=0.002`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Phase-space grid preset.
    #[arg(long, global = true, value_parser = ["low", "ref", "high"])]
    resolution: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the damping rate γ(t).
    Rates,
    /// Integrate the master equation and dump the trajectory.
    Evolve,
    /// Dump Wigner fields at selected times (initial and final by default).
    Wigner {
        /// Comma-separated snapshot times.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
    },
    /// Negativity-volume trace and non-Markovianity degree.
    Measure,
    /// Run the bundled scenarios of one figure.
    Reproduce {
        #[arg(value_parser = FIGURES.to_vec())]
        figure: String,
    },
}

fn report(e: &nmwigner::Error) {
    eprintln!("error: {e}");
    let mut source = e.source();
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
}

fn print_result(r: &ScenarioResult) {
    match r.dn {
        Some(dn) => println!(
            "{}: D_N = {dn:.6} ({:.1} s) -> {}",
            r.name,
            r.runtime_s,
            r.output_dir.display()
        ),
        None => println!(
            "{}: {} done ({:.1} s) -> {}",
            r.name,
            r.stage.name(),
            r.runtime_s,
            r.output_dir.display()
        ),
    }
}

fn run(cli: Cli) -> Result<(), nmwigner::Error> {
    let overrides = cli
        .global
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    let resolution = cli
        .global
        .resolution
        .as_deref()
        .map(str::parse::<Resolution>)
        .transpose()?;
    let root = output_root(cli.global.out.as_deref());

    let (stage, mut extra) = match &cli.command {
        Command::Rates => (Stage::Rates, vec![]),
        Command::Evolve => (Stage::Evolve, vec![]),
        Command::Wigner { times } if !times.is_empty() => {
            let list = times
                .iter()
                .map(|t| format!("{t:?}"))
                .collect::<Vec<_>>()
                .join(", ");
            (
                Stage::Wigner,
                vec![("outputs.wigner_times".to_string(), format!("[{list}]"))],
            )
        }
        Command::Wigner { .. } => (Stage::Wigner, vec![]),
        Command::Measure => (Stage::Measure, vec![]),
        Command::Reproduce { figure } => {
            let (list, stage) = figure_scenarios(figure).expect("clap restricts figure ids");
            let opts = RunOptions {
                stage,
                output_root: root.clone(),
            };
            let mut rows = Vec::new();
            for (stem, text) in list {
                let s = Scenario::from_toml_with(text, resolution, &overrides)?;
                let r = run_scenario(&s, &opts)
                    .map_err(|e| nmwigner::Error::Config(format!("{stem}: {e}")))?;
                print_result(&r);
                let final_nv = r.negativity.as_ref().and_then(|n| n.values.last().copied());
                rows.push((r.name, r.dn, final_nv));
            }
            fs::create_dir_all(&root)?;
            let mut f = fs::File::create(root.join(format!("summary_{figure}.csv")))?;
            writeln!(f, "name,dn,final_negativity")?;
            let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
            for (name, dn, nv) in rows {
                writeln!(f, "{name},{},{}", fmt(dn), fmt(nv))?;
            }
            return Ok(());
        }
    };

    let path = cli.global.config.as_ref().expect("checked before dispatch");
    let mut all = overrides;
    all.append(&mut extra);
    let s = Scenario::load(path, resolution, &all)?;
    let r = run_scenario(
        &s,
        &RunOptions {
            stage,
            output_root: root,
        },
    )?;
    print_result(&r);
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
fn execute<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if cli.global.config.is_none() && !matches!(cli.command, Command::Reproduce { .. }) {
        eprintln!("error: this subcommand needs --config <path>");
        return 2;
    }
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            1
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(execute(std::env::args_os()))
}
