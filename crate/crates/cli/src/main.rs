use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use enercoord::batch::{random_suite, run_batch};
use enercoord::report::{compare, RunReport};
use enercoord::run::{run, Algorithm, RunRequest};
use enercoord::scenario::{bundled, generate_random, load_scenario, Scenario, ScenarioError, BUNDLED};
use enercoord::{CoordError, ExecMode};

#[derive(Parser)]
#[command(name = "enercoord", version, about = "Distributed generation and flow coordination on energy networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one coordination law or reference solver on a scenario.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Algorithm,
        /// Defaults to the scenario's solver mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ExecMode>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trajectory CSV destination.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Take the generation input of `flow` from an earlier report.
        #[arg(long)]
        pg_from: Option<PathBuf>,
        /// Record wall-clock time in the report.
        #[arg(long)]
        timing: bool,
    },
    /// Parse and validate a scenario, then print it with defaults filled in.
    Validate {
        #[arg(long)]
        scenario: String,
    },
    /// Compare two reports field by field.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Write a seeded random connected scenario.
    GenScenario {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an algorithm over a family of random scenarios.
    Sweep {
        #[arg(long, default_value_t = 6)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value = "joint-twoscale", value_parser = parse_algorithm)]
        algorithm: Algorithm,
        #[arg(long, default_value = "matrix", value_parser = parse_mode)]
        mode: ExecMode,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<ExecMode, String> {
    s.parse()
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }

    fn numerical(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 3, error: error.into() }
    }
}

impl From<CoordError> for Failure {
    fn from(e: CoordError) -> Self {
        let code = if e.is_precondition() { 2 } else { 3 };
        Failure { code, error: e.into() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::input(e)
    }
}

fn open_scenario(arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(spec) = bundled(arg) {
            return Ok(spec.compile()?);
        }
        return Err(Failure::input(anyhow!(
            "no scenario file `{arg}` and no bundled scenario of that name (bundled: {})",
            BUNDLED.join(", ")
        )));
    }
    Ok(load_scenario(path)?)
}

fn read_report(path: &Path) -> Result<RunReport, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::input)?;
    RunReport::from_json(&text).with_context(|| format!("in {}", path.display())).map_err(Failure::input)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())).map_err(Failure::input),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run { scenario, algorithm, mode, out, trace, pg_from, timing } => {
            let scenario = open_scenario(&scenario)?;
            let mode = mode.unwrap_or(scenario.spec.solver.mode);
            let mut req = RunRequest::new(algorithm, mode);
            req.trace = trace.is_some();
            if let Some(path) = pg_from {
                let prior = read_report(&path)?;
                if prior.p_g.len() != scenario.p_d.len() {
                    return Err(Failure::input(anyhow!(
                        "{} holds {} generation values, scenario has {} nodes",
                        path.display(),
                        prior.p_g.len(),
                        scenario.p_d.len()
                    )));
                }
                req.p_g = Some(prior.p_g);
            }
            let start = Instant::now();
            let mut output = run(&scenario, &req)?;
            if timing {
                output.report.wall_clock_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            if !output.report.is_finite() {
                return Err(Failure::numerical(anyhow!("report contains non-finite values")));
            }
            if let (Some(path), Some(log)) = (trace, output.trace.as_ref()) {
                let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display())).map_err(Failure::input)?;
                log.write_csv(file).map_err(Failure::input)?;
            }
            write_or_print(out.as_deref(), &output.report.to_json())?;
            let diverged = output.report.convergence.status == "diverged";
            if out.is_some() || diverged {
                let c = &output.report.convergence;
                eprintln!(
                    "{} on {}: {} after {} iterations, total cost {:.4}",
                    algorithm, output.report.scenario, c.status, c.iterations, output.report.costs.total
                );
            }
            Ok(if diverged { 3 } else { 0 })
        }
        Command::Validate { scenario } => {
            let scenario = open_scenario(&scenario)?;
            println!("{}", scenario.spec.to_json().trim_end());
            Ok(0)
        }
        Command::Compare { a, b, tol } => {
            if tol.is_nan() || tol < 0.0 {
                return Err(Failure::input(anyhow!("tolerance must be nonnegative")));
            }
            let (ra, rb) = (read_report(&a)?, read_report(&b)?);
            let cmp = compare(&ra, &rb, tol).map_err(Failure::input)?;
            print!("{}", cmp.summary());
            if cmp.within() {
                println!("within tolerance {tol:e}");
                Ok(0)
            } else {
                println!("differences exceed tolerance {tol:e}");
                Ok(1)
            }
        }
        Command::GenScenario { nodes, seed, out } => {
            if nodes == 0 {
                return Err(Failure::input(anyhow!("--nodes must be at least 1")));
            }
            write_or_print(out.as_deref(), &generate_random(nodes, seed).to_json())?;
            Ok(0)
        }
        Command::Sweep { nodes, first_seed, count, algorithm, mode } => {
            if nodes == 0 {
                return Err(Failure::input(anyhow!("--nodes must be at least 1")));
            }
            let suite = random_suite(nodes, first_seed, count)?;
            let start = Instant::now();
            let results = run_batch(&suite, &RunRequest::new(algorithm, mode));
            let mut failures = 0;
            for (s, r) in suite.iter().zip(&results) {
                match r {
                    Ok(o) => {
                        let worst = o.report.kkt.values().fold(0.0f64, |m, x| m.max(*x));
                        println!(
                            "{:<20} {:<14} cost {:>14.6} kkt {:.2e}",
                            s.spec.name, o.report.convergence.status, o.report.costs.total, worst
                        );
                    }
                    Err(e) => {
                        failures += 1;
                        println!("{:<20} error: {e}", s.spec.name);
                    }
                }
            }
            eprintln!("{} scenarios in {:.1} ms, {failures} failed", suite.len(), start.elapsed().as_secs_f64() * 1e3);
            Ok(if failures == 0 { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
