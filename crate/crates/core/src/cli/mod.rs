//! Scenario-driven batch runner behind the `jumpsupport` binary.
//!
//! ```text
//! jumpsupport run <config> --out <dir> [--paths N] [--dt X] [--seed S] [--threads W]
//! jumpsupport list
//! jumpsupport validate <config>
//! ```
//!
//! `<config>` is a JSON scenario file or the name of a bundled scenario.

pub mod config;
pub mod model;
mod run;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::ScenarioConfig;
pub use run::{median_gap, run_scenario, shifted_rho, summary, validate_scenario, RunOutcome, RunReport, Verdict};

use crate::error::{Error, Result};

/// A scenario shipped with the crate.
#[derive(Clone, Copy, Debug)]
pub struct BundledScenario {
    pub name: &'static str,
    pub exercises: &'static str,
    pub source: &'static str,
}

macro_rules! bundled {
    ($($name:literal => $what:literal),* $(,)?) => {
        &[$(BundledScenario {
            name: $name,
            exercises: $what,
            source: include_str!(concat!("../../scenarios/", $name, ".json")),
        }),*]
    };
}

pub const BUNDLED: &[BundledScenario] = bundled! {
    "trivial_constant" => "zero coefficients keep every path constant",
    "poisson_law" => "Poisson random measure: counts follow Poisson(mT)",
    "support_scan_fullsupport" => "support theorem: Z_t has full support under the reachability condition",
    "support_scan_negative" => "support theorem negative control: upward-only jumps leave a gap",
    "coupled_distance" => "small-time coupling of the SDE with its jump-only process",
    "conditioned_coupling" => "jump-only process follows the skeleton after a conditioned first jump",
    "martingale_ou_jumps" => "Girsanov density is a martingale",
    "martingale_biased" => "Girsanov density with the jump compensator dropped is biased",
    "girsanov_consistent" => "path-independence theorem: consistent density equals exp(v(X0) - v(Xt))",
    "girsanov_conditions" => "path-independence theorem: the three conditions on a constructed example",
    "ito_decomposition" => "path-independence theorem: Itô expansion of v along the path",
    "galerkin_convergence" => "Galerkin lemma: truncated evolution equations converge",
    "galerkin_first_coordinate" => "Galerkin lemma: exact truncation when only the first mode moves",
};

pub fn bundled(name: &str) -> Option<&'static BundledScenario> {
    BUNDLED.iter().find(|b| b.name == name)
}

/// Reads a scenario from a file, or from the bundled set when no such file
/// exists.
pub fn load_scenario(spec: &str) -> Result<ScenarioConfig> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return ScenarioConfig::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())));
    }
    match bundled(spec) {
        Some(b) => ScenarioConfig::from_json(b.source),
        None => Err(Error::config(format!("no scenario file or bundled scenario named `{spec}`"))),
    }
}

#[derive(Debug, Parser)]
#[command(name = "jumpsupport", version, about = "Jump-diffusion simulation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its report.
    Run {
        config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List bundled scenarios.
    List,
    /// Parse a scenario and run its pre-simulation checks.
    Validate { config: String },
}

/// Exit status 0 when every verdict passes, 1 when a verdict fails, 2 on
/// configuration or runtime errors.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::List => {
            println!("{:<28} exercises", "scenario");
            for b in BUNDLED {
                println!("{:<28} {}", b.name, b.exercises);
            }
            0
        }
        Command::Validate { config } => match load_scenario(&config).and_then(|c| validate_scenario(&c)) {
            Ok(checks) => {
                for c in checks {
                    println!("ok: {c}");
                }
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
        Command::Run {
            config,
            out,
            paths,
            dt,
            seed,
            threads,
        } => {
            let outcome = load_scenario(&config).and_then(|mut c| {
                if let Some(p) = paths {
                    c.execution.n_paths = p;
                }
                if let Some(d) = dt {
                    c.execution.dt = d;
                }
                if let Some(s) = seed {
                    c.execution.seed = s;
                }
                if let Some(t) = threads {
                    c.execution.threads = t;
                }
                let outcome = run_scenario(&c)?;
                outcome.write_to(&out)?;
                Ok(outcome)
            });
            match outcome {
                Ok(o) => {
                    print!("{}", summary(&o.report));
                    if o.report.passed {
                        0
                    } else {
                        for v in o.report.failing() {
                            eprintln!("failed verdict: {}", v.name);
                        }
                        1
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    2
                }
            }
        }
    }
}
