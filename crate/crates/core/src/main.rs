use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sfde::config::load_config;
use sfde::error::Error;
use sfde::io::{to_json_pretty, OutputDir};
use sfde::mittag_leffler::ml_eval;
use sfde::operator::{envelope_study, OperatorTable};
use sfde::pipeline::{
    self, load_run, render_analysis, run_analysis, run_check, run_simulate, write_analysis, SimulateOptions,
};
use sfde::solver::Scheme;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_HYPOTHESIS: u8 = 4;
const EXIT_VERDICT: u8 = 5;

#[derive(Parser)]
#[command(name = "sfde", version, about = "Neutral stochastic fractional delay equations with Levy noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the Mittag-Leffler function E_{alpha,beta}(z).
    MlEval {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(required = true, allow_negative_numbers = true)]
        z: Vec<f64>,
    },
    /// Tabulate the solution operator on the solver grid and report its decay envelope.
    OpTable {
        #[arg(long)]
        config: PathBuf,
        /// Number of lags (defaults to the solver horizon).
        #[arg(long)]
        lags: Option<usize>,
        #[arg(long, env = "SFDE_OUT_DIR", default_value = "runs")]
        out: PathBuf,
    },
    /// Validate the hypotheses and print both contraction constants.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate an ensemble of mild solutions.
    Simulate(SimArgs),
    /// Simulate by successive approximations and record D_n.
    Picard(SimArgs),
    /// Estimate periodicity gaps from a finished run.
    Analyze {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check, simulate and analyze in one go, with a summary.
    Report(SimArgs),
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "SFDE_OUT_DIR", default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Write the driving noise increments (and `<stem>_jumps.csv`).
    #[arg(long)]
    dump_noise: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    TimeStep,
    Picard,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::TimeStep => Scheme::TimeStep,
            SchemeArg::Picard => Scheme::Picard,
        }
    }
}

enum Failure {
    Error(Error),
    Hypothesis,
    Verdict,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn sim_options(args: &SimArgs, scheme: Option<Scheme>) -> SimulateOptions {
    SimulateOptions {
        scheme: scheme.or(args.scheme.map(Scheme::from)),
        paths: args.paths,
        seed: args.seed,
        threads: args.threads,
        dump_noise: args.dump_noise.clone(),
    }
}

fn simulate(args: &SimArgs, scheme: Option<Scheme>) -> Result<(), Failure> {
    let resolved = load_config(&args.config)?;
    let out = run_simulate(&resolved, &sim_options(args, scheme), &args.out)?;
    println!(
        "{} paths, {} steps of {} -> {}",
        out.manifest.paths,
        out.manifest.grid.n_steps,
        out.manifest.grid.step,
        out.out_dir.display()
    );
    if scheme == Some(Scheme::Picard) || args.scheme.map(Scheme::from) == Some(Scheme::Picard) {
        let mean = out.ensemble.mean_picard_diffs();
        for (n, d) in mean.iter().enumerate() {
            println!("mean D_{} = {d:.6e}", n + 1);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::MlEval { alpha, beta, z } => {
            for z in z {
                println!("{z},{}", ml_eval(alpha, beta, z)?);
            }
        }
        Command::OpTable { config, lags, out } => {
            let r = load_config(&config)?;
            let n = lags.unwrap_or(r.solver.n_steps());
            let table = OperatorTable::new(&r.model.sectorial, r.solver.step, n)?;
            let d = table.dim();
            let mut csv = String::from("k,t");
            for i in 0..d {
                for j in 0..d {
                    csv.push_str(&format!(",s{i}{j}"));
                }
            }
            csv.push('\n');
            for k in 0..=n {
                let m = table.matrix(k);
                csv.push_str(&format!("{k},{}", k as f64 * r.solver.step));
                for i in 0..d {
                    for j in 0..d {
                        csv.push_str(&format!(",{}", m[(i, j)]));
                    }
                }
                csv.push('\n');
            }
            let mut dir = OutputDir::create(&out)?;
            let path = dir.write("operator_table.csv", csv.as_bytes())?;
            let study = envelope_study(&r.model.sectorial, 100.0, 2001)?;
            dir.write("envelope.json", to_json_pretty(&study).as_bytes())?;
            println!("wrote {}", path.display());
            println!(
                "envelope C on [0,100]: {:.6} (refined {:.6}, on [0,200] {:.6}) stable={} divergent={}",
                study.base, study.refined, study.extended, study.stable, study.divergent
            );
        }
        Command::Check { config, samples, seed } => {
            let r = load_config(&config)?;
            let outcome = run_check(
                &r,
                samples.unwrap_or(r.config.run.validation_samples),
                seed.unwrap_or(r.config.run.seed),
            )?;
            print!("{}", outcome.render());
            if !outcome.passed() {
                return Err(Failure::Hypothesis);
            }
        }
        Command::Simulate(args) => simulate(&args, None)?,
        Command::Picard(args) => simulate(&args, Some(Scheme::Picard))?,
        Command::Analyze {
            runs,
            omega,
            checkpoints,
            out,
            threads,
        } => {
            let run = load_run(&runs)?;
            let mut analysis = run.resolved.analysis.clone();
            if let Some(c) = checkpoints {
                analysis.checkpoints = c;
            }
            let output = pipeline::with_threads(threads, || {
                run_analysis(&run.resolved, &run.ensemble, omega, &analysis)
            })??;
            let out = out.unwrap_or_else(|| runs.join("report"));
            write_analysis(&output, &out)?;
            print!("{}", render_analysis(&output));
            if output.failed() {
                return Err(Failure::Verdict);
            }
        }
        Command::Report(args) => report(&args)?,
    }
    Ok(())
}

fn report(args: &SimArgs) -> Result<(), Failure> {
    let resolved = load_config(&args.config)?;
    let check = run_check(&resolved, resolved.config.run.validation_samples, resolved.config.run.seed)?;
    let sim = run_simulate(&resolved, &sim_options(args, None), &args.out)?;
    let analysis = pipeline::with_threads(args.threads, || {
        run_analysis(&resolved, &sim.ensemble, None, &resolved.analysis)
    })??;
    write_analysis(&analysis, &args.out.join("report"))?;
    let summary = format!("{}\n{}", check.render(), render_analysis(&analysis));
    let json = serde_json::json!({
        "check": check,
        "analysis": analysis,
        "hypotheses_passed": check.passed(),
        "verdict_failed": analysis.failed(),
    });
    let dir = OutputDir::create(&args.out)?;
    dir.write_untracked("summary.txt", summary.as_bytes())?;
    dir.write_untracked("report.json", to_json_pretty(&json).as_bytes())?;
    print!("{summary}");
    if analysis.failed() {
        return Err(Failure::Verdict);
    }
    if !check.passed() {
        return Err(Failure::Hypothesis);
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Hypothesis) => {
            eprintln!("hypothesis check failed");
            ExitCode::from(EXIT_HYPOTHESIS)
        }
        Err(Failure::Verdict) => {
            eprintln!("periodicity verdict FAIL");
            ExitCode::from(EXIT_VERDICT)
        }
    }
}

