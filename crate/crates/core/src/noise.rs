//! Levy driving noise: Q-Wiener increments plus finite-activity Poisson jumps
//! split at `|u| = 1` (Levy-Ito decomposition with an atomic intensity measure
//! `nu = sum_k rate_k delta_{mark_k}`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub mark: Vec<f64>,
    pub rate: f64,
}

impl JumpAtom {
    pub fn new(mark: Vec<f64>, rate: f64) -> Self {
        JumpAtom { mark, rate }
    }

    pub fn norm(&self) -> f64 {
        self.mark.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Marks with `|u| >= 1` belong to the uncompensated big-jump part.
    pub fn is_big(&self) -> bool {
        self.norm() >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevySpec {
    pub dim: usize,
    pub drift: Vec<f64>,
    pub q_diag: Vec<f64>,
    pub atoms: Vec<JumpAtom>,
}

impl LevySpec {
    /// Pure Wiener noise with covariance `diag(q_diag)`.
    pub fn wiener(q_diag: Vec<f64>) -> Self {
        let dim = q_diag.len();
        LevySpec {
            dim,
            drift: vec![0.0; dim],
            q_diag,
            atoms: Vec::new(),
        }
    }

    pub fn with_atom(mut self, mark: Vec<f64>, rate: f64) -> Self {
        self.atoms.push(JumpAtom::new(mark, rate));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("noise.dim", "must be positive"));
        }
        if self.drift.len() != self.dim {
            return Err(Error::validation(
                "noise.drift",
                format!("length {} != dim {}", self.drift.len(), self.dim),
            ));
        }
        if self.q_diag.len() != self.dim {
            return Err(Error::validation(
                "noise.q_diag",
                format!("length {} != dim {}", self.q_diag.len(), self.dim),
            ));
        }
        for (i, &a) in self.drift.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::validation(format!("noise.drift[{i}]"), "must be finite"));
            }
        }
        for (i, &q) in self.q_diag.iter().enumerate() {
            if !(q.is_finite() && q >= 0.0) {
                return Err(Error::validation(
                    format!("noise.q_diag[{i}]"),
                    "must be finite and nonnegative",
                ));
            }
        }
        for (k, atom) in self.atoms.iter().enumerate() {
            let field = format!("noise.atoms[{k}]");
            if atom.mark.len() != self.dim {
                return Err(Error::validation(
                    format!("{field}.mark"),
                    format!("length {} != dim {}", atom.mark.len(), self.dim),
                ));
            }
            if atom.mark.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{field}.mark"), "must be finite"));
            }
            if atom.norm() == 0.0 {
                return Err(Error::validation(format!("{field}.mark"), "must be nonzero"));
            }
            if !(atom.rate.is_finite() && atom.rate > 0.0) {
                return Err(Error::validation(
                    format!("{field}.rate"),
                    "must be finite and positive",
                ));
            }
        }
        Ok(())
    }

    pub fn trace_q(&self) -> f64 {
        self.q_diag.iter().sum()
    }

    pub fn total_rate(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum()
    }

    pub fn small_atoms(&self) -> impl Iterator<Item = (usize, &JumpAtom)> {
        self.atoms.iter().enumerate().filter(|(_, a)| !a.is_big())
    }

    pub fn big_atoms(&self) -> impl Iterator<Item = (usize, &JumpAtom)> {
        self.atoms.iter().enumerate().filter(|(_, a)| a.is_big())
    }
}

/// `b = nu({|u| >= 1})`.
pub fn big_jump_intensity(spec: &LevySpec) -> f64 {
    spec.big_atoms().map(|(_, a)| a.rate).sum()
}

/// `sum_{|u_k| < 1} rate_k * integrand(u_k)`: the drift rate of the compensator.
pub fn small_jump_compensator<F>(spec: &LevySpec, out_dim: usize, integrand: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut acc = vec![0.0; out_dim];
    for (_, atom) in spec.small_atoms() {
        let v = integrand(&atom.mark);
        for (a, x) in acc.iter_mut().zip(v) {
            *a += atom.rate * x;
        }
    }
    acc
}

/// Per-path seed: the master seed keys the generator, the path index selects
/// an independent stream, so results never depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathSeed {
    pub master: u64,
    pub path: u64,
}

impl PathSeed {
    pub fn new(master: u64, path: u64) -> Self {
        PathSeed { master, path }
    }
}

impl From<u64> for PathSeed {
    fn from(master: u64) -> Self {
        PathSeed { master, path: 0 }
    }
}

const DOMAIN_TAG: u64 = 0x5346_4445_4e4f_4953; // "SFDENOIS"

/// ChaCha20 keyed by `(master, purpose)` on stream `path`.
pub(crate) fn stream_rng(seed: PathSeed, purpose: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.master.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    key[16..24].copy_from_slice(&DOMAIN_TAG.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(seed.path);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub atom: usize,
    /// Index `j` of the step `(t_j, t_{j+1}]` containing the event.
    pub step: usize,
}

/// One realization of the driving noise on a time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub grid: Vec<f64>,
    pub dim: usize,
    /// Row-major `(n_steps, dim)`.
    increments: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("noise grid needs at least two points"));
    }
    if grid[0] != 0.0 {
        return Err(Error::invalid("noise grid must start at t = 0"));
    }
    for w in grid.windows(2) {
        ensure_finite("grid time", w[1])?;
        if !(w[1] > w[0]) {
            return Err(Error::invalid("noise grid must be strictly increasing"));
        }
    }
    Ok(())
}

/// Index of the step `(t_j, t_{j+1}]` containing `s`, for `0 < s <= t_N`.
fn step_of(grid: &[f64], s: f64) -> usize {
    // first index with grid[i] >= s, minus one
    let i = grid.partition_point(|&t| t < s);
    i.saturating_sub(1).min(grid.len() - 2)
}

pub fn sample_path(spec: &LevySpec, grid: &[f64], seed: impl Into<PathSeed>) -> Result<NoisePath> {
    spec.validate()?;
    validate_grid(grid)?;
    let seed = seed.into();
    let n = grid.len() - 1;
    let dim = spec.dim;

    let mut rng = stream_rng(seed, 0);
    let mut increments = Vec::with_capacity(n * dim);
    let sd: Vec<f64> = spec.q_diag.iter().map(|q| q.sqrt()).collect();
    for w in grid.windows(2) {
        let dt_sqrt = (w[1] - w[0]).sqrt();
        for s in &sd {
            let z: f64 = rng.sample(StandardNormal);
            increments.push(s * dt_sqrt * z);
        }
    }

    let horizon = grid[n];
    let mut jumps = Vec::new();
    for (k, atom) in spec.atoms.iter().enumerate() {
        let mut rng = stream_rng(seed, 1 + k as u64);
        let mut s = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            s += gap / atom.rate;
            if s > horizon {
                break;
            }
            if s > 0.0 {
                jumps.push(JumpEvent {
                    time: s,
                    atom: k,
                    step: step_of(grid, s),
                });
            }
        }
    }
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.atom.cmp(&b.atom)));

    Ok(NoisePath {
        grid: grid.to_vec(),
        dim,
        increments,
        jumps,
    })
}

impl NoisePath {
    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.grid[self.n_steps()]
    }

    /// Wiener increment over `(t_j, t_{j+1}]`.
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    /// Events with `t_j < s <= t_{j+1}`.
    pub fn events_in_step(&self, j: usize) -> &[JumpEvent] {
        let lo = self.jumps.partition_point(|e| e.step < j);
        let hi = self.jumps.partition_point(|e| e.step <= j);
        &self.jumps[lo..hi]
    }

    pub fn event_count(&self, atom: usize) -> usize {
        self.jumps.iter().filter(|e| e.atom == atom).count()
    }

    /// Keeps the first `n_steps` steps and the events inside them.
    pub fn truncate(&self, n_steps: usize) -> Result<NoisePath> {
        if n_steps == 0 || n_steps > self.n_steps() {
            return Err(Error::invalid(format!(
                "cannot truncate {} steps to {n_steps}",
                self.n_steps()
            )));
        }
        Ok(NoisePath {
            grid: self.grid[..=n_steps].to_vec(),
            dim: self.dim,
            increments: self.increments[..n_steps * self.dim].to_vec(),
            jumps: self.jumps.iter().copied().filter(|e| e.step < n_steps).collect(),
        })
    }

    /// Aggregates blocks of `factor` steps; jump times are kept exactly.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.n_steps().is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps()
            )));
        }
        let grid: Vec<f64> = self.grid.iter().step_by(factor).copied().collect();
        let n = grid.len() - 1;
        let mut increments = vec![0.0; n * self.dim];
        for j in 0..self.n_steps() {
            let block = j / factor;
            for (i, x) in self.increment(j).iter().enumerate() {
                increments[block * self.dim + i] += x;
            }
        }
        let jumps = self
            .jumps
            .iter()
            .map(|e| JumpEvent {
                step: step_of(&grid, e.time),
                ..*e
            })
            .collect();
        Ok(NoisePath {
            grid,
            dim: self.dim,
            increments,
            jumps,
        })
    }

    /// `L(t_j) = a t_j + w(t_j) + sum_{small} u - t_j sum_{small} rate u + sum_{big} u`.
    pub fn levy_value(&self, spec: &LevySpec, j: usize) -> Vec<f64> {
        let t = self.grid[j];
        let mut value: Vec<f64> = spec.drift.iter().map(|a| a * t).collect();
        for step in 0..j {
            for (v, dw) in value.iter_mut().zip(self.increment(step)) {
                *v += dw;
            }
        }
        for e in self.jumps.iter().filter(|e| e.time <= t) {
            for (v, u) in value.iter_mut().zip(&spec.atoms[e.atom].mark) {
                *v += u;
            }
        }
        let comp = small_jump_compensator(spec, spec.dim, |u| u.to_vec());
        for (v, c) in value.iter_mut().zip(comp) {
            *v -= t * c;
        }
        value
    }
}
