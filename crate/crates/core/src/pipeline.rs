//! Command stages shared by the CLI and the tests: check, simulate, analyze
//! and report, each writing its artifacts into an output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{resolve, Resolved, RunConfig};
use crate::error::{Error, Result};
use crate::io::{
    self, read_manifest, read_picard, read_trajectories, to_json_pretty, GridSummary, OutputDir, RunManifest,
    MANIFEST_JSON, PICARD_CSV, TRAJECTORIES_CSV,
};
use crate::model::{check_contraction, validate_hypotheses, ContractionSummary};
use crate::noise::PathSeed;
use crate::periodicity::{
    analyze, coefficient_process_gap, AnalysisConfig, CoefficientGaps, Estimate, OrderingCheck, PeriodicityReport,
    Verdict,
};
use crate::report::ValidationReport;
use crate::solver::{Ensemble, Scheme, Solver};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub report: ValidationReport,
    pub contraction: ContractionSummary,
}

impl CheckOutcome {
    /// Hypotheses hold and the contraction constant with the printed kappa2 is below 1.
    pub fn passed(&self) -> bool {
        self.report.passed() && self.contraction.paper_literal < 1.0
    }

    pub fn render(&self) -> String {
        let c = &self.contraction;
        let mut s = format!("{}\n", self.report);
        let _ = writeln!(s, "contraction constant");
        let _ = writeln!(s, "  kappa1                     {:.10e}", c.kappa1);
        let _ = writeln!(s, "  kappa2 (printed formula)   {:.10e}", c.kappa2.paper_value);
        let _ = writeln!(s, "  kappa2 (exact integral)    {:.10e}", c.kappa2.quadrature_value);
        let _ = writeln!(s, "  b                          {:.10e}", c.b + 0.0);
        for (name, theta) in [("paper_literal", c.paper_literal), ("quadrature_exact", c.quadrature_exact)] {
            let _ = writeln!(
                s,
                "  Theta {name:<17}    {theta:.10e}  margin {:+.6e}  {}",
                1.0 - theta,
                if theta < 1.0 { "< 1" } else { ">= 1" }
            );
        }
        s
    }
}

pub fn run_check(resolved: &Resolved, samples: usize, seed: u64) -> Result<CheckOutcome> {
    Ok(CheckOutcome {
        report: validate_hypotheses(&resolved.model, samples, seed)?,
        contraction: check_contraction(&resolved.model)?,
    })
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub scheme: Option<Scheme>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub dump_noise: Option<PathBuf>,
}

/// Runs `f` on a pool of `threads` workers (the global pool when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Applies command-line overrides to the configuration echo so that the
/// manifest records what actually ran.
pub fn apply_overrides(resolved: &Resolved, opts: &SimulateOptions) -> Result<Resolved> {
    let mut config: RunConfig = resolved.config.clone();
    if let Some(s) = opts.scheme {
        config.solver.scheme = s;
    }
    if let Some(p) = opts.paths {
        config.run.paths = p;
    }
    if let Some(s) = opts.seed {
        config.run.seed = s;
    }
    resolve(config)
}

pub struct SimulateOutcome {
    pub ensemble: Ensemble,
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

pub fn run_simulate(resolved: &Resolved, opts: &SimulateOptions, out: &Path) -> Result<SimulateOutcome> {
    let resolved = apply_overrides(resolved, opts)?;
    let cfg = &resolved.config;
    let started = std::time::Instant::now();
    let solver = Solver::new(&resolved.model, &resolved.solver)?;
    let paths = cfg.run.paths;
    let seed = cfg.run.seed;
    let ensemble = with_threads(opts.threads, || solver.run_ensemble(paths, seed))??;

    let mut dir = OutputDir::create(out)?;
    dir.write(TRAJECTORIES_CSV, io::trajectories_csv(&ensemble).as_bytes())?;
    if resolved.solver.scheme == Scheme::Picard {
        dir.write(PICARD_CSV, io::picard_csv(&ensemble).as_bytes())?;
    }
    if let Some(dump) = &opts.dump_noise {
        let noise: Result<Vec<_>> = (0..paths as u64)
            .map(|p| solver.sample_noise(PathSeed::new(seed, p)))
            .collect();
        let (inc, jumps) = io::noise_csv(&noise?);
        write_file(dump, inc.as_bytes())?;
        write_file(&jumps_path(dump), jumps.as_bytes())?;
    }
    let manifest = RunManifest {
        version: VERSION.to_string(),
        command: match resolved.solver.scheme {
            Scheme::TimeStep => "simulate".into(),
            Scheme::Picard => "picard".into(),
        },
        master_seed: seed,
        paths,
        grid: GridSummary {
            step: resolved.solver.step,
            tau: resolved.model.tau,
            history: solver.history(),
            n_steps: solver.n_steps(),
            horizon: resolved.solver.horizon,
        },
        config: serde_json::to_value(cfg).map_err(|e| Error::invalid(e.to_string()))?,
        files: dir.files.clone(),
    };
    dir.write_untracked(MANIFEST_JSON, to_json_pretty(&manifest).as_bytes())?;
    let timing = serde_json::json!({
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "threads": opts.threads.unwrap_or_else(rayon::current_num_threads),
        "paths": paths,
    });
    dir.write_untracked("timing.json", to_json_pretty(&timing).as_bytes())?;
    Ok(SimulateOutcome {
        ensemble,
        manifest,
        out_dir: out.to_path_buf(),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `noise.csv` -> `noise_jumps.csv`.
pub fn jumps_path(dump: &Path) -> PathBuf {
    let stem = dump.file_stem().and_then(|s| s.to_str()).unwrap_or("noise");
    dump.with_file_name(format!("{stem}_jumps.csv"))
}

/// A finished run loaded back from disk.
pub struct LoadedRun {
    pub resolved: Resolved,
    pub manifest: RunManifest,
    pub ensemble: Ensemble,
}

pub fn load_run(runs: &Path) -> Result<LoadedRun> {
    let manifest = read_manifest(&runs.join(MANIFEST_JSON))?;
    let config: RunConfig = serde_json::from_value(manifest.config.clone()).map_err(|e| Error::Format {
        path: runs.join(MANIFEST_JSON),
        message: e.to_string(),
    })?;
    let resolved = resolve(config)?;
    for rec in &manifest.files {
        let path = runs.join(&rec.name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if io::sha256_hex(&bytes) != rec.sha256 {
            return Err(Error::Format {
                path,
                message: "content hash differs from the manifest".into(),
            });
        }
    }
    let trajectories = read_trajectories(&runs.join(TRAJECTORIES_CSV), manifest.grid.history, manifest.grid.step)?;
    let diagnostics = read_picard(&runs.join(PICARD_CSV), trajectories.len())?;
    Ok(LoadedRun {
        resolved,
        ensemble: Ensemble {
            master_seed: manifest.master_seed,
            trajectories,
            diagnostics,
        },
        manifest,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisOutput {
    pub periodicity: PeriodicityReport,
    pub ordering: Vec<OrderingCheck>,
    /// Coefficient-output process gaps at each checkpoint.
    pub coefficient_process: Vec<CoefficientGaps<Estimate>>,
    pub mean_picard_diffs: Vec<f64>,
}

impl AnalysisOutput {
    pub fn failed(&self) -> bool {
        self.periodicity.ms_verdict == Verdict::Fail || self.periodicity.bl_verdict == Verdict::Fail
    }

    pub fn csv(&self) -> String {
        let r = &self.periodicity;
        let mut s = String::from(
            "t,ms_gap,ms_se,bl_gap,bl_se,trunc_bound,trunc_se,bl_below_trunc,trunc_below_ms\n",
        );
        for (k, t) in r.t_checkpoints.iter().enumerate() {
            let o = &self.ordering[k];
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{},{},{},{}",
                r.ms_gaps[k].estimate,
                r.ms_gaps[k].stderr,
                r.bl_gaps[k].estimate,
                r.bl_gaps[k].stderr,
                r.trunc_bounds[k].estimate,
                r.trunc_bounds[k].stderr,
                o.bl_below_trunc,
                o.trunc_below_ms
            );
        }
        s
    }

    /// gnuplot-ready `t estimate stderr` columns.
    pub fn dat(&self, which: &[Estimate]) -> String {
        let mut s = String::from("# t estimate stderr\n");
        for (t, e) in self.periodicity.t_checkpoints.iter().zip(which) {
            let _ = writeln!(s, "{t} {} {}", e.estimate, e.stderr);
        }
        s
    }
}

pub fn run_analysis(
    resolved: &Resolved,
    ensemble: &Ensemble,
    omega: Option<f64>,
    analysis: &AnalysisConfig,
) -> Result<AnalysisOutput> {
    let omega = omega.unwrap_or(resolved.model.omega);
    let periodicity = analyze(ensemble, omega, analysis)?;
    let coefficient_process = analysis
        .checkpoints
        .iter()
        .map(|&t| coefficient_process_gap(&resolved.model, ensemble, t, omega))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisOutput {
        ordering: periodicity.ordering(),
        periodicity,
        coefficient_process,
        mean_picard_diffs: ensemble.mean_picard_diffs(),
    })
}

pub fn write_analysis(output: &AnalysisOutput, out: &Path) -> Result<()> {
    let mut dir = OutputDir::create(out)?;
    let r = &output.periodicity;
    dir.write("periodicity.json", to_json_pretty(output).as_bytes())?;
    dir.write("periodicity.csv", output.csv().as_bytes())?;
    dir.write("ms_gap.dat", output.dat(&r.ms_gaps).as_bytes())?;
    dir.write("bl_gap.dat", output.dat(&r.bl_gaps).as_bytes())?;
    dir.write("trunc_bound.dat", output.dat(&r.trunc_bounds).as_bytes())?;
    Ok(())
}

pub fn render_analysis(output: &AnalysisOutput) -> String {
    let r = &output.periodicity;
    let mut s = format!("omega = {}\n", r.omega);
    let _ = writeln!(
        s,
        "{:>8}  {:>22}  {:>22}  {:>22}  ordering",
        "t", "E|x_t+w - x_t|^2", "d_BL", "E min(2, |x_t+w - x_t|)"
    );
    for (k, t) in r.t_checkpoints.iter().enumerate() {
        let o = &output.ordering[k];
        let _ = writeln!(
            s,
            "{t:>8}  {:>11.4e} ± {:<8.1e}  {:>11.4e} ± {:<8.1e}  {:>11.4e} ± {:<8.1e}  {}",
            r.ms_gaps[k].estimate,
            r.ms_gaps[k].stderr,
            r.bl_gaps[k].estimate,
            r.bl_gaps[k].stderr,
            r.trunc_bounds[k].estimate,
            r.trunc_bounds[k].stderr,
            if o.bl_below_trunc && o.trunc_below_ms { "ok" } else { "VIOLATED" }
        );
    }
    let _ = writeln!(s, "square-mean verdict:  {}", r.ms_verdict);
    let _ = writeln!(s, "distribution verdict: {}", r.bl_verdict);
    s
}
