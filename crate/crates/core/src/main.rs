use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemoflow::harness::{self, exit, ScenarioConfig};
use chemoflow::Result;

#[derive(Parser)]
#[command(name = "chemoflow", version, about = "Chemotaxis–Navier–Stokes simulator and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario and write its series, summary and checkpoint.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and the environment).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a scenario once per mass, in parallel.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        masses: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-check a config against the oracles, or validate a checkpoint.
    Check {
        input: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write two-column data files for every tracked quantity of a run.
    PlotData {
        run: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run_cmd(config: PathBuf, output: Option<PathBuf>) -> Result<i32> {
    let c = ScenarioConfig::load(&config)?;
    let dir = output.unwrap_or_else(|| c.output_path());
    let r = harness::execute(&c, Some(&dir))?;
    let s = &r.summary;
    println!("t = {} after {} steps, {} samples -> {}", s.final_t, s.steps, s.samples, dir.display());
    for c in &s.invariants.checks {
        println!("  [{}] {:<16} worst {:.3e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.worst);
    }
    for f in &s.fits {
        match &f.fit {
            Some(k) => println!("  rate {:<12} {:.5} (R² {:.4})", f.quantity, k.kappa_hat, k.r_squared),
            None => println!("  rate {:<12} n/a", f.quantity),
        }
    }
    if let Some(e) = &s.failure {
        eprintln!("run stopped: {e}");
        return Ok(exit::SOLVER);
    }
    Ok(if s.invariants.all_passed() { exit::OK } else { exit::INVARIANT })
}

fn sweep_cmd(config: PathBuf, masses: Vec<f64>, output: Option<PathBuf>) -> Result<i32> {
    let c = ScenarioConfig::load(&config)?;
    let root = output.unwrap_or_else(|| c.output_path());
    let r = harness::sweep(&c, &masses, Some(&root))?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    println!("{:>10} {:>9} {:>10} {:>10}", "mass", "completed", "invariants", "F-monotone");
    for e in &r.entries {
        let mono = e.f_monotone.map(|f| f.monotone.to_string()).unwrap_or_else(|| "-".into());
        println!("{:>10} {:>9} {:>10} {:>10}", e.mass, e.completed, e.invariants_passed, mono);
    }
    Ok(if r.entries.iter().any(|e| !e.completed) {
        exit::SOLVER
    } else if r.all_passed() {
        exit::OK
    } else {
        exit::INVARIANT
    })
}

fn check_cmd(input: PathBuf, json: Option<PathBuf>) -> Result<i32> {
    let r = harness::check_path(&input)?;
    print!("{}", r.render());
    if let Some(path) = json {
        fs::write(path, serde_json::to_string_pretty(&r)? + "\n")?;
    }
    Ok(if r.passed() { exit::OK } else { exit::INVARIANT })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, output } => run_cmd(config, output),
        Command::Sweep { config, masses, output } => sweep_cmd(config, masses, output),
        Command::Check { input, json } => check_cmd(input, json),
        Command::PlotData { run, output } => harness::plot_data(&run, output.as_deref()).map(|files| {
            println!("wrote {} files", files.len());
            exit::OK
        }),
    };
    let code = outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        harness::exit_code(&e)
    });
    ExitCode::from(code as u8)
}
