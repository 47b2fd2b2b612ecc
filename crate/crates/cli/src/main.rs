use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pint_cli::commands::{analyze_alpha, baseline, exit_code, run, schedule};
use pint_cli::config::RunConfig;
use pint_cli::report::{write_csv, RunReport};
use pint_cli::speedup::{speedup_model, SpeedupParams};
use pint_core::PintError;

#[derive(Parser)]
#[command(name = "pint", version, about = "Time-parallel alpha-circulant Richardson solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; stdin when omitted or `-`.
    config: Option<PathBuf>,
    /// Report path (overrides the `output` key).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the parallel iteration and write a JSON report.
    Run {
        #[command(flatten)]
        args: ConfigArgs,
        /// Per-iteration CSV path (overrides the `csv` key).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve step by step; same report schema as `run`.
    Baseline {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Preview the adaptive alpha schedule.
    Schedule {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Forbidden and defective alpha radii, and flagged alpha_k.
    AnalyzeAlpha {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate the operation-count speedup model.
    SpeedupModel {
        #[arg(short = 'L', long)]
        steps: f64,
        #[arg(short = 'M', long)]
        stages: f64,
        #[arg(short = 'k', long)]
        iterations: f64,
        #[arg(long)]
        t_sol: f64,
        #[arg(long)]
        t_sol_par: f64,
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Pint(PintError),
    Io(String),
}

impl From<PintError> for Failure {
    fn from(e: PintError) -> Self {
        Failure::Pint(e)
    }
}

fn io<E: std::fmt::Display>(what: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", what.display()))
}

fn load(args: &ConfigArgs) -> Result<RunConfig, Failure> {
    let text = match &args.config {
        Some(p) if p.as_os_str() != "-" => fs::read_to_string(p).map_err(io(p))?,
        _ => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::Io(format!("stdin: {e}")))?;
            s
        }
    };
    let mut config = RunConfig::from_json(&text)?;
    if args.output.is_some() {
        config.output = args.output.clone();
    }
    Ok(config)
}

fn emit_report(report: &RunReport) -> Result<(), Failure> {
    let json = report.to_json();
    match &report.config.output {
        Some(p) => fs::write(p, json).map_err(io(p)),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run { args, csv } => {
            let mut config = load(&args)?;
            if csv.is_some() {
                config.csv = csv;
            }
            let Some(report) = run(&config)? else {
                return Ok(0);
            };
            emit_report(&report)?;
            if let Some(p) = &report.config.csv {
                let f = fs::File::create(p).map_err(io(p))?;
                write_csv(&report.records, f).map_err(io(p))?;
            }
            Ok(if report.converged { 0 } else { 2 })
        }
        Command::Baseline { args } => {
            emit_report(&baseline(&load(&args)?)?)?;
            Ok(0)
        }
        Command::Schedule { args, json } => {
            let preview = schedule(&load(&args)?)?;
            if json {
                print_json(&preview);
            } else {
                println!("gamma = {:.6e}, m0 = {:.6e}", preview.gamma, preview.m0);
                println!("{:>4} {:>14} {:>14}", "k", "alpha_k", "m_k");
                for s in &preview.steps {
                    println!("{:>4} {:>14.6e} {:>14.6e}", s.k, s.alpha, s.m);
                }
            }
            Ok(0)
        }
        Command::AnalyzeAlpha { args, json } => {
            let a = analyze_alpha(&load(&args)?)?;
            if json {
                print_json(&a);
            } else {
                for (name, set) in [("forbidden", &a.forbidden), ("defective", &a.defective)] {
                    println!("{name}:");
                    for f in set {
                        println!("  r = {:+.6} {:+.6}i  alpha* = {:.6e}", f.r_re, f.r_im, f.alpha_star);
                    }
                }
                for f in &a.flagged {
                    println!(
                        "flagged: k = {} alpha = {:.6e} within {} of {:.6e}",
                        f.k, f.alpha, a.margin, f.alpha_star
                    );
                }
            }
            Ok(0)
        }
        Command::SpeedupModel {
            steps,
            stages,
            iterations,
            t_sol,
            t_sol_par,
            json,
        } => {
            let row = speedup_model(SpeedupParams {
                steps,
                stages,
                iterations,
                t_sol,
                t_sol_par,
            })?;
            if json {
                print_json(&row);
            } else {
                println!("T_seq  = {:.6e}", row.t_seq);
                println!("T_Mpar = {:.6e}", row.t_mpar);
                println!("T_par  = {:.6e}", row.t_par);
                println!("T_seq/T_par  = {:.6} (bound {:.6})", row.speedup_seq, row.bound_seq);
                println!("T_Mpar/T_par = {:.6} (bound {:.6})", row.speedup_mpar, row.bound_mpar);
                if row.no_gain {
                    println!("no speedup over the sequential baseline");
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Pint(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
