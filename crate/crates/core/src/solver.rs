//! Discrete mild solutions on a uniform grid: a causal time-stepping scheme
//! and successive approximations sharing one noise path.
//!
//! Both schemes evaluate the same discretized right-hand side
//!
//! ```text
//! x(t_j) + h(t_j, x_{t_j}) = S(t_j) D0 + sum_{i<j} S(t_j - t_i) v_i + sum_{s <= t_j} S(t_j - s) w_s
//! v_i = f(t_i, x_{t_i}) dt + g(t_i, x_{t_i}) dw_i - dt sum_{|u_k|<1} rate_k F(t_i, x_{t_i}, u_k)
//! ```
//!
//! with `w_s` the jump coefficient at the pre-jump segment `x_{t_i}` for an
//! event `s` in `(t_i, t_{i+1}]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::noise::{sample_path, NoisePath, PathSeed};
use crate::operator::OperatorTable;
use crate::segment::{Segment, SegmentBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    TimeStep,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub step: f64,
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_picard_max_iter")]
    pub picard_max_iter: usize,
    /// Convergence threshold on `D_n = max_j |x^n(t_j) - x^{n-1}(t_j)|^2`.
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_neutral_tol")]
    pub neutral_tol: f64,
    #[serde(default = "default_neutral_max_iter")]
    pub neutral_max_iter: usize,
}

fn default_picard_max_iter() -> usize {
    50
}

fn default_picard_tol() -> f64 {
    1e-24
}

fn default_neutral_tol() -> f64 {
    1e-12
}

fn default_neutral_max_iter() -> usize {
    100
}

impl SolverConfig {
    pub fn new(step: f64, horizon: f64) -> Self {
        SolverConfig {
            step,
            horizon,
            scheme: Scheme::TimeStep,
            picard_max_iter: default_picard_max_iter(),
            picard_tol: default_picard_tol(),
            neutral_tol: default_neutral_tol(),
            neutral_max_iter: default_neutral_max_iter(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|j| j as f64 * self.step).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::validation("solver.step", "must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation("solver.horizon", "must be positive"));
        }
        grid_multiple("solver.horizon", self.horizon, self.step)?;
        if self.picard_max_iter == 0 {
            return Err(Error::validation("solver.picard_max_iter", "must be at least 1"));
        }
        if !(self.picard_tol >= 0.0) {
            return Err(Error::validation("solver.picard_tol", "must be nonnegative"));
        }
        if !(self.neutral_tol > 0.0) {
            return Err(Error::validation("solver.neutral_tol", "must be positive"));
        }
        if self.neutral_max_iter == 0 {
            return Err(Error::validation("solver.neutral_max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// `value / step` as an integer, within `1e-12` relative tolerance.
pub fn grid_multiple(field: &str, value: f64, step: f64) -> Result<usize> {
    let r = value / step;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-12 * r.max(1.0) {
        return Err(Error::validation(
            field,
            format!("{value} is not an integer multiple of the step {step}"),
        ));
    }
    Ok(k as usize)
}

/// Sample path on `-tau = s_0 < ... < 0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    /// History points before `t = 0` (`tau / step`).
    pub history: usize,
    pub n_steps: usize,
    pub dim: usize,
    /// Row-major `(history + n_steps + 1, dim)`.
    pub values: Vec<f64>,
    /// Indices `j` of grid times `t_j` that absorbed jump events.
    pub jump_marks: Vec<usize>,
    /// Largest neutral fixed-point update at acceptance.
    pub neutral_residual: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.history + self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of storage row `r`.
    pub fn time(&self, r: usize) -> f64 {
        (r as f64 - self.history as f64) * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.step
    }

    /// `x(t_j)` for `j = 0..=n_steps`.
    pub fn at_step(&self, j: usize) -> &[f64] {
        let r = self.history + j;
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    /// `x_{t_j}` as a window of `history + 1` points.
    pub fn segment_at_step(&self, j: usize) -> Segment<'_> {
        let lo = j * self.dim;
        let hi = (j + self.history + 1) * self.dim;
        Segment::new_unchecked(&self.values[lo..hi], self.dim, self.step)
    }

    pub fn step_index(&self, t: f64) -> Result<usize> {
        let r = t / self.step;
        let j = r.round();
        if !(t >= 0.0) || (r - j).abs() > 1e-9 * r.max(1.0) || j as usize > self.n_steps {
            return Err(Error::invalid(format!(
                "t = {t} is not a grid point of [0, {}] with step {}",
                self.horizon(),
                self.step
            )));
        }
        Ok(j as usize)
    }

    /// The history window on `[t - tau, t]`; `t` must be a grid point.
    pub fn segment_at(&self, t: f64) -> Result<Segment<'_>> {
        Ok(self.segment_at_step(self.step_index(t)?))
    }

    /// Grid times `t_0..=t_N`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| j as f64 * self.step).collect()
    }
}

pub fn segment_at(traj: &Trajectory, t: f64) -> Result<Segment<'_>> {
    traj.segment_at(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardDiagnostics {
    /// `D_n` for `n = 1..=iterations_run`.
    pub sup_diffs: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Shared read-only state for all paths of one model and grid.
#[derive(Debug, Clone)]
pub struct Solver {
    pub model: ModelSpec,
    pub config: SolverConfig,
    pub table: OperatorTable,
    history: usize,
    phi: SegmentBuf,
    /// `S(t_j) D0` in eigen-coordinates, row-major `(N + 1, dim)`.
    initial_term: Vec<f64>,
    small_atoms: Vec<usize>,
}

impl Solver {
    pub fn new(model: &ModelSpec, config: &SolverConfig) -> Result<Self> {
        model.validate_structure()?;
        config.validate()?;
        let history = grid_multiple("model.tau", model.tau, config.step)?;
        grid_multiple("model.omega", model.omega, config.step)?;
        let n = config.n_steps();
        let d = model.dim();
        let mut table = OperatorTable::new(&model.sectorial, config.step, n)?;
        if !model.noise.atoms.is_empty() {
            table = table.with_fine_table()?;
        }
        let phi = model.phi.on_grid(history, config.step)?;

        let mut d0 = phi.view().now().to_vec();
        let mut h0 = vec![0.0; d];
        model.coefficients.h.eval_into(0.0, &phi.view(), &mut h0)?;
        d0.iter_mut().zip(&h0).for_each(|(a, b)| *a += b);
        let mut d0_modes = vec![0.0; d];
        table.to_modes(&d0, &mut d0_modes);
        let mut initial_term = vec![0.0; (n + 1) * d];
        for j in 0..=n {
            for e in 0..d {
                initial_term[j * d + e] = table.mode(e, j) * d0_modes[e];
            }
        }
        let small_atoms = model.noise.small_atoms().map(|(k, _)| k).collect();
        Ok(Solver {
            model: model.clone(),
            config: config.clone(),
            table,
            history,
            phi,
            initial_term,
            small_atoms,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps()
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn grid(&self) -> Vec<f64> {
        self.config.grid()
    }

    pub fn sample_noise(&self, seed: PathSeed) -> Result<NoisePath> {
        sample_path(&self.model.noise, &self.grid(), seed)
    }

    fn check_noise(&self, noise: &NoisePath) -> Result<usize> {
        let n = noise.n_steps();
        if n > self.n_steps() || noise.dim != self.model.noise.dim {
            return Err(Error::invalid("noise path does not match the solver grid"));
        }
        let h = self.config.step;
        let aligned = noise
            .grid
            .iter()
            .enumerate()
            .all(|(j, &t)| (t - j as f64 * h).abs() <= 1e-12 * (j as f64 * h).max(1.0));
        if !aligned {
            return Err(Error::invalid("noise grid differs from the solver grid"));
        }
        Ok(n)
    }

    fn blank_trajectory(&self, n: usize) -> Trajectory {
        let d = self.dim();
        let mut values = vec![0.0; (self.history + n + 1) * d];
        values[..(self.history + 1) * d].copy_from_slice(&self.phi.values);
        Trajectory {
            step: self.config.step,
            history: self.history,
            n_steps: n,
            dim: d,
            values,
            jump_marks: Vec::new(),
            neutral_residual: 0.0,
        }
    }

    /// Adds the contributions of step `i` (drift, diffusion, compensator and
    /// the jumps in `(t_i, t_{i+1}]`), evaluated on `seg = x_{t_i}`, to the
    /// right-hand sides `rhs[k]`, `k > i`.
    fn scatter(
        &self,
        i: usize,
        seg: &Segment,
        noise: &NoisePath,
        rhs: &mut [f64],
        n: usize,
        work: &mut Work,
    ) -> Result<bool> {
        let d = self.dim();
        let h = self.config.step;
        let t = i as f64 * h;
        let c = &self.model.coefficients;
        let spec = &self.model.noise;

        work.v.iter_mut().for_each(|x| *x = 0.0);
        if !c.f.is_zero() {
            c.f.eval_into(t, seg, &mut work.tmp)?;
            axpy(h, &work.tmp, &mut work.v);
        }
        if !c.g.is_zero() {
            c.g.apply_into(t, seg, noise.increment(i), &mut work.tmp)?;
            axpy(1.0, &work.tmp, &mut work.v);
        }
        if !c.small_jump.is_zero() {
            for &k in &self.small_atoms {
                let atom = &spec.atoms[k];
                c.small_jump.eval_into(t, seg, &atom.mark, &mut work.tmp)?;
                axpy(-h * atom.rate, &work.tmp, &mut work.v);
            }
        }
        self.table.to_modes(&work.v, &mut work.modes);
        for k in i + 1..=n {
            let row = &mut rhs[k * d..(k + 1) * d];
            for e in 0..d {
                row[e] += self.table.mode(e, k - i) * work.modes[e];
            }
        }

        let events = noise.events_in_step(i);
        for ev in events {
            let atom = &spec.atoms[ev.atom];
            let field = if atom.is_big() { &c.big_jump } else { &c.small_jump };
            if field.is_zero() {
                continue;
            }
            field.eval_into(t, seg, &atom.mark, &mut work.tmp)?;
            self.table.to_modes(&work.tmp, &mut work.modes);
            for k in i + 1..=n {
                let lag = (k as f64 * h - ev.time).max(0.0);
                let row = &mut rhs[k * d..(k + 1) * d];
                for e in 0..d {
                    row[e] += self.table.mode_at(e, lag)? * work.modes[e];
                }
            }
        }
        Ok(!events.is_empty())
    }

    /// Solves `y + h(t_j, x_{t_j}[y]) = r` for the value at `t_j`, writing it
    /// into the trajectory. Returns the last update size.
    fn neutral_solve(&self, traj: &mut Trajectory, j: usize, r: &[f64], work: &mut Work) -> Result<f64> {
        let d = self.dim();
        let row = (self.history + j) * d;
        let hcoef = &self.model.coefficients.h;
        if hcoef.is_zero() {
            traj.values[row..row + d].copy_from_slice(r);
            return Ok(0.0);
        }
        let t = j as f64 * self.config.step;
        let scale = r.iter().map(|x| x.abs()).fold(1.0, f64::max);
        let tol = self.config.neutral_tol * scale;
        traj.values[row..row + d].copy_from_slice(r);
        let mut residual = f64::INFINITY;
        for _ in 0..self.config.neutral_max_iter {
            let seg = traj.segment_at_step(j);
            hcoef.eval_into(t, &seg, &mut work.tmp)?;
            residual = 0.0;
            for i in 0..d {
                let y = r[i] - work.tmp[i];
                residual = f64::max(residual, (y - traj.values[row + i]).abs());
                traj.values[row + i] = y;
            }
            if residual <= tol {
                return Ok(residual / scale);
            }
        }
        Err(Error::NeutralDivergence {
            t,
            iterations: self.config.neutral_max_iter,
            residual,
        })
    }

    /// Causal time stepping.
    pub fn simulate(&self, noise: &NoisePath) -> Result<Trajectory> {
        let n = self.check_noise(noise)?;
        let d = self.dim();
        let mut traj = self.blank_trajectory(n);
        let mut rhs = self.initial_term[..(n + 1) * d].to_vec();
        let mut work = Work::new(d);
        let mut phys = vec![0.0; d];
        for j in 0..=n {
            if j > 0 {
                self.table.from_modes(&rhs[j * d..(j + 1) * d], &mut phys);
                let res = self.neutral_solve(&mut traj, j, &phys, &mut work)?;
                traj.neutral_residual = traj.neutral_residual.max(res);
            }
            if j < n {
                let seg = traj.segment_at_step(j);
                if self.scatter(j, &seg, noise, &mut rhs, n, &mut work)? {
                    traj.jump_marks.push(j + 1);
                }
            }
        }
        Ok(traj)
    }

    /// Right-hand sides `R_j` (physical coordinates) with every integrand
    /// evaluated on `prev`.
    fn rhs_from(&self, prev: &Trajectory, noise: &NoisePath) -> Result<(Vec<f64>, Vec<usize>)> {
        let n = prev.n_steps;
        let d = self.dim();
        let mut rhs = self.initial_term[..(n + 1) * d].to_vec();
        let mut work = Work::new(d);
        let mut marks = Vec::new();
        for i in 0..n {
            let seg = prev.segment_at_step(i);
            if self.scatter(i, &seg, noise, &mut rhs, n, &mut work)? {
                marks.push(i + 1);
            }
        }
        let mut out = vec![0.0; rhs.len()];
        for j in 0..=n {
            self.table
                .from_modes(&rhs[j * d..(j + 1) * d], &mut out[j * d..(j + 1) * d]);
        }
        Ok((out, marks))
    }

    /// Successive approximations starting from `x^0(t) = S(t)(phi(0) + h(0, phi))`.
    pub fn picard(&self, noise: &NoisePath) -> Result<(Trajectory, PicardDiagnostics)> {
        let n = self.check_noise(noise)?;
        let d = self.dim();
        let mut current = self.blank_trajectory(n);
        let mut phys = vec![0.0; d];
        for j in 1..=n {
            self.table
                .from_modes(&self.initial_term[j * d..(j + 1) * d], &mut phys);
            current.at_step_mut(j).copy_from_slice(&phys);
        }
        let mut work = Work::new(d);
        let mut diag = PicardDiagnostics {
            sup_diffs: Vec::new(),
            iterations_run: 0,
            converged: false,
        };
        for _ in 0..self.config.picard_max_iter {
            let (rhs, marks) = self.rhs_from(&current, noise)?;
            let mut next = self.blank_trajectory(n);
            next.jump_marks = marks;
            for j in 1..=n {
                let res = self.neutral_solve(&mut next, j, &rhs[j * d..(j + 1) * d], &mut work)?;
                next.neutral_residual = next.neutral_residual.max(res);
            }
            let diff = (1..=n)
                .map(|j| {
                    next.at_step(j)
                        .iter()
                        .zip(current.at_step(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            diag.sup_diffs.push(diff);
            diag.iterations_run += 1;
            current = next;
            if diff <= self.config.picard_tol {
                diag.converged = true;
                break;
            }
        }
        Ok((current, diag))
    }

    /// `max_j |x(t_j) + h(t_j, x_{t_j}) - R_j(x)|`: how well a trajectory
    /// satisfies the discretized integral equation.
    pub fn mild_residual(&self, traj: &Trajectory, noise: &NoisePath) -> Result<f64> {
        let d = self.dim();
        let (rhs, _) = self.rhs_from(traj, noise)?;
        let mut hv = vec![0.0; d];
        let mut worst = 0.0f64;
        for j in 1..=traj.n_steps {
            let t = j as f64 * self.config.step;
            self.model
                .coefficients
                .h
                .eval_into(t, &traj.segment_at_step(j), &mut hv)?;
            for i in 0..d {
                worst = worst.max((traj.at_step(j)[i] + hv[i] - rhs[j * d + i]).abs());
            }
        }
        Ok(worst)
    }

    pub fn run(&self, noise: &NoisePath) -> Result<(Trajectory, Option<PicardDiagnostics>)> {
        match self.config.scheme {
            Scheme::TimeStep => Ok((self.simulate(noise)?, None)),
            Scheme::Picard => {
                let (t, d) = self.picard(noise)?;
                Ok((t, Some(d)))
            }
        }
    }
}

impl Trajectory {
    fn at_step_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.history + j;
        &mut self.values[r * self.dim..(r + 1) * self.dim]
    }
}

struct Work {
    v: Vec<f64>,
    tmp: Vec<f64>,
    modes: Vec<f64>,
}

impl Work {
    fn new(d: usize) -> Self {
        Work {
            v: vec![0.0; d],
            tmp: vec![0.0; d],
            modes: vec![0.0; d],
        }
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn simulate_mild(model: &ModelSpec, cfg: &SolverConfig, noise: &NoisePath) -> Result<Trajectory> {
    Solver::new(model, cfg)?.simulate(noise)
}

pub fn picard_iterate(
    model: &ModelSpec,
    cfg: &SolverConfig,
    noise: &NoisePath,
) -> Result<(Trajectory, PicardDiagnostics)> {
    Solver::new(model, cfg)?.picard(noise)
}

/// Trajectories of `n_paths` independent noise paths.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub master_seed: u64,
    pub trajectories: Vec<Trajectory>,
    pub diagnostics: Vec<Option<PicardDiagnostics>>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.trajectories[0].step
    }

    pub fn history(&self) -> usize {
        self.trajectories[0].history
    }

    pub fn n_steps(&self) -> usize {
        self.trajectories[0].n_steps
    }

    pub fn dim(&self) -> usize {
        self.trajectories[0].dim
    }

    /// Mean of `D_n` over paths, treating converged paths as contributing
    /// zero beyond their last iteration.
    pub fn mean_picard_diffs(&self) -> Vec<f64> {
        let diags: Vec<&PicardDiagnostics> = self.diagnostics.iter().flatten().collect();
        let len = diags.iter().map(|d| d.sup_diffs.len()).max().unwrap_or(0);
        (0..len)
            .map(|n| {
                diags.iter().map(|d| d.sup_diffs.get(n).copied().unwrap_or(0.0)).sum::<f64>()
                    / diags.len() as f64
            })
            .collect()
    }
}

/// Runs paths `0..n_paths` with seeds `(master_seed, path)` on the current
/// rayon pool; results do not depend on the pool size.
pub fn run_ensemble(model: &ModelSpec, cfg: &SolverConfig, n_paths: usize, master_seed: u64) -> Result<Ensemble> {
    let solver = Solver::new(model, cfg)?;
    solver.run_ensemble(n_paths, master_seed)
}

impl Solver {
    pub fn run_ensemble(&self, n_paths: usize, master_seed: u64) -> Result<Ensemble> {
        if n_paths == 0 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        let results: Result<Vec<(Trajectory, Option<PicardDiagnostics>)>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|p| {
                let noise = self.sample_noise(PathSeed::new(master_seed, p))?;
                self.run(&noise)
            })
            .collect();
        let (trajectories, diagnostics) = results?.into_iter().unzip();
        Ok(Ensemble {
            master_seed,
            trajectories,
            diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientSet, Field, Functional, TimeProfile};
    use crate::model::InitialSegment;
    use crate::noise::LevySpec;
    use crate::operator::SectorialSpec;

    fn model(coefficients: CoefficientSet) -> ModelSpec {
        ModelSpec {
            sectorial: SectorialSpec::scalar(1.5, -1.0, -1.0, 0.2, 1.0, 1.0),
            noise: LevySpec::wiener(vec![1.0]),
            tau: 0.5,
            omega: 1.0,
            phi: InitialSegment::Constant(vec![1.0]),
            coefficients,
        }
    }

    #[test]
    fn grid_alignment() {
        assert_eq!(grid_multiple("x", 1.0, 0.125).unwrap(), 8);
        assert!(grid_multiple("x", 1.0, 0.3).is_err());
        let mut m = model(CoefficientSet::zero(0.5, 1.0, 1.0));
        m.tau = 1.0;
        assert!(Solver::new(&m, &SolverConfig::new(0.3, 3.0)).is_err());
    }

    #[test]
    fn neutral_term_resolved() {
        let mut c = CoefficientSet::zero(0.5, 1.0, 1.0);
        c.h = Field::linear(TimeProfile::constant(0.4), Functional::Average);
        c.f = Field::linear(TimeProfile::constant(-0.3), Functional::Lag);
        let m = model(c);
        let s = Solver::new(&m, &SolverConfig::new(0.125, 4.0)).unwrap();
        let noise = s.sample_noise(PathSeed::new(1, 0)).unwrap();
        let x = s.simulate(&noise).unwrap();
        assert!(x.neutral_residual <= 1e-12);
        assert!(s.mild_residual(&x, &noise).unwrap() < 1e-11);
        assert_eq!(&x.values[..5], &[1.0; 5]);
    }

    #[test]
    fn segment_lookup() {
        let m = model(CoefficientSet::zero(0.5, 1.0, 1.0));
        let s = Solver::new(&m, &SolverConfig::new(0.125, 2.0)).unwrap();
        let x = s.simulate(&s.sample_noise(PathSeed::new(0, 0)).unwrap()).unwrap();
        assert_eq!(x.segment_at(0.0).unwrap().values(), &[1.0; 5]);
        assert_eq!(x.segment_at(1.0).unwrap().now(), x.at_step(8));
        assert!(x.segment_at(0.3).is_err());
        assert!(x.segment_at(2.5).is_err());
    }
}
