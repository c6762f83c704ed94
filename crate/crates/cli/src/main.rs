use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ssm_core::scenario::{
    emit_csv, emit_snapshot_plotdata, load_scenario, run, verify_all, RunMethod, ScenarioError,
    SCHEMA,
};

#[derive(Parser)]
#[command(
    name = "ssm",
    version,
    about = "Surrogate safety measures on rolling-horizon scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Analytic,
    Numeric,
    Both,
}

impl From<MethodArg> for RunMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Analytic => RunMethod::Analytic,
            MethodArg::Numeric => RunMethod::Numeric,
            MethodArg::Both => RunMethod::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV (and snapshot) files.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the scenario horizon (s).
        #[arg(long, allow_negative_numbers = true)]
        horizon: Option<f64>,
        /// Overrides the coarse scan step (s).
        #[arg(long = "scan-step", allow_negative_numbers = true)]
        scan_step: Option<f64>,
    },
    /// Run the bundled experiments against their acceptance thresholds.
    Verify,
    /// Print the scenario file schema.
    Schema,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_ACCEPTANCE: u8 = 2;

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>, String> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => {
            Err(format!("--{name} must be a positive number, got {x}"))
        }
        _ => Ok(v),
    }
}

fn main() -> ExitCode {
    // Usage errors are validation errors (exit 1); clap's own code 2 is reserved
    // for acceptance failures here.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Schema => {
            print!("{SCHEMA}");
            ExitCode::SUCCESS
        }
        Command::Verify => match verify_all() {
            Ok(report) => {
                for c in &report.checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!(
                        "[{tag}] criterion {}: {} ({})",
                        c.criterion, c.name, c.detail
                    );
                }
                if report.all_passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_ACCEPTANCE)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Run {
            scenario,
            method,
            out,
            horizon,
            scan_step,
        } => {
            let (horizon, scan_step) = match (
                positive("horizon", horizon),
                positive("scan-step", scan_step),
            ) {
                (Ok(h), Ok(s)) => (h, s),
                (Err(e), _) | (_, Err(e)) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_VALIDATION);
                }
            };
            let text = match std::fs::read_to_string(&scenario) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", scenario.display());
                    return ExitCode::from(EXIT_VALIDATION);
                }
            };
            let result = load_scenario(&text).and_then(|mut sc| {
                if let Some(h) = horizon {
                    sc.sim.horizon = h;
                }
                if let Some(s) = scan_step {
                    sc.sim.scan_step = s;
                }
                let record = run(&sc, method.into())?;
                let mut files = emit_csv(&record, &out)?;
                files.extend(emit_snapshot_plotdata(&record, &out)?);
                Ok(files)
            });
            match result {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e @ ScenarioError::Validation { .. }) => {
                    eprintln!("{}: {e}", scenario.display());
                    ExitCode::from(EXIT_VALIDATION)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
