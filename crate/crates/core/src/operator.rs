//! Fractional solution operators `S_alpha(t) = E_alpha(A t^alpha)` for
//! real-diagonalizable sectorial operators, sector checks, and the algebraic
//! decay envelope `||S_alpha(t)|| <= C M / (1 + |mu| t^alpha)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::mittag_leffler::ml_eval;
use crate::report::ValidationReport;

/// A sectorial operator on `H = R^d` given through its real eigen-decomposition
/// `A = V diag(a) V^{-1}`, together with the sector data `(mu, theta)` and the
/// bound constants `(C, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorialSpec {
    pub alpha: f64,
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub basis: DMatrix<f64>,
    pub mu: f64,
    pub theta: f64,
    pub c: f64,
    pub m: f64,
}

impl SectorialSpec {
    pub fn scalar(alpha: f64, a: f64, mu: f64, theta: f64, c: f64, m: f64) -> Self {
        SectorialSpec {
            alpha,
            eigenvalues: vec![a],
            basis: DMatrix::identity(1, 1),
            mu,
            theta,
            c,
            m,
        }
    }

    pub fn diagonal(alpha: f64, eigenvalues: Vec<f64>, mu: f64, theta: f64, c: f64, m: f64) -> Self {
        let d = eigenvalues.len();
        SectorialSpec {
            alpha,
            eigenvalues,
            basis: DMatrix::identity(d, d),
            mu,
            theta,
            c,
            m,
        }
    }

    pub fn with_basis(mut self, basis: DMatrix<f64>) -> Self {
        self.basis = basis;
        self
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest admissible sector angle, `pi (1 - alpha/2)`.
    pub fn max_theta(&self) -> f64 {
        PI * (1.0 - self.alpha / 2.0)
    }

    /// Product `C * M` appearing in every bound.
    pub fn cm(&self) -> f64 {
        self.c * self.m
    }

    pub fn spectral(&self) -> Result<Spectral> {
        Spectral::new(self)
    }
}

/// Checked eigen-decomposition with a cached inverse basis.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub alpha: f64,
    pub eigenvalues: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// 2-norm condition number of the basis.
    pub condition: f64,
    identity: bool,
}

impl Spectral {
    fn new(spec: &SectorialSpec) -> Result<Self> {
        ensure_finite("alpha", spec.alpha)?;
        if !(spec.alpha > 0.0 && spec.alpha <= 2.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 2], got {}",
                spec.alpha
            )));
        }
        let d = spec.dim();
        if d == 0 {
            return Err(Error::invalid("operator needs at least one eigenvalue"));
        }
        for (i, &a) in spec.eigenvalues.iter().enumerate() {
            ensure_finite(&format!("eigenvalue[{i}]"), a)?;
        }
        if spec.basis.nrows() != d || spec.basis.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "basis is {}x{} but there are {d} eigenvalues",
                spec.basis.nrows(),
                spec.basis.ncols()
            )));
        }
        if spec.basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("basis has non-finite entries"));
        }
        let identity = spec.basis == DMatrix::identity(d, d);
        let (inverse, condition) = if identity {
            (DMatrix::identity(d, d), 1.0)
        } else {
            let sv = spec.basis.clone().singular_values();
            let smax = sv.max();
            let smin = sv.min();
            if smin <= smax * 1e-12 {
                return Err(Error::invalid("operator basis is not invertible"));
            }
            let inv = spec
                .basis
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::invalid("operator basis is not invertible"))?;
            (inv, smax / smin)
        };
        Ok(Spectral {
            alpha: spec.alpha,
            eigenvalues: spec.eigenvalues.clone(),
            basis: spec.basis.clone(),
            inverse,
            condition,
            identity,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_identity_basis(&self) -> bool {
        self.identity
    }

    /// `E_alpha(a_i t^alpha)` for every eigenvalue.
    pub fn mode_values(&self, t: f64) -> Result<Vec<f64>> {
        ensure_finite("t", t)?;
        if t < 0.0 {
            return Err(Error::invalid(format!("time must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(vec![1.0; self.dim()]);
        }
        let ta = t.powf(self.alpha);
        self.eigenvalues
            .iter()
            .map(|&a| ml_eval(self.alpha, 1.0, a * ta))
            .collect()
    }

    /// `V diag(modes) V^{-1}`.
    pub fn assemble(&self, modes: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        if self.identity {
            return DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(modes));
        }
        let mut scaled = self.basis.clone();
        for j in 0..d {
            for i in 0..d {
                scaled[(i, j)] *= modes[j];
            }
        }
        scaled * &self.inverse
    }
}

/// Value of the solution operator at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorValue {
    pub t: f64,
    pub matrix: DMatrix<f64>,
}

pub fn solution_operator_eval(spec: &SectorialSpec, t: f64) -> Result<OperatorValue> {
    let spectral = spec.spectral()?;
    let modes = spectral.mode_values(t)?;
    let matrix = if t == 0.0 {
        DMatrix::identity(spectral.dim(), spectral.dim())
    } else {
        spectral.assemble(&modes)
    };
    Ok(OperatorValue { t, matrix })
}

/// Checks `1 < alpha < 2`, `mu < 0`, `a_i <= mu`, `0 < theta < pi(1 - alpha/2)`,
/// `C >= 1`, `M > 0`. Never errors; malformed input shows up as failed checks.
pub fn check_sectorial(spec: &SectorialSpec) -> ValidationReport {
    let mut r = ValidationReport::new();
    let alpha = spec.alpha;
    r.push(
        "alpha in (1,2)",
        alpha > 1.0 && alpha < 2.0,
        Some(alpha),
        None,
        "fractional order",
    );
    r.push("mu < 0", spec.mu < 0.0, Some(spec.mu), Some(0.0), "sector type");
    for (i, &a) in spec.eigenvalues.iter().enumerate() {
        let ok = a.is_finite() && a <= spec.mu && spec.mu < 0.0;
        r.push(
            format!("eigenvalue[{i}] <= mu"),
            ok,
            Some(a),
            Some(spec.mu),
            if ok { "inside the sector" } else { "offending eigenvalue" },
        );
    }
    let max_theta = spec.max_theta();
    r.push(
        "0 < theta < pi(1-alpha/2)",
        spec.theta > 0.0 && spec.theta < max_theta,
        Some(spec.theta),
        Some(max_theta),
        "sector angle",
    );
    r.push("C >= 1", spec.c >= 1.0, Some(spec.c), Some(1.0), "bound constant");
    r.push("M > 0", spec.m > 0.0, Some(spec.m), Some(0.0), "resolvent constant");
    match spec.spectral() {
        Ok(s) => r.note("basis condition", Some(s.condition), "2-norm condition number"),
        Err(e) => r.push("basis invertible", false, None, None, e.to_string()),
    }
    r
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone().singular_values().max()
}

/// `max_t ||S_alpha(t)||_2 (1 + |mu| t^alpha) / M` over the grid.
pub fn decay_envelope(spec: &SectorialSpec, t_grid: &[f64]) -> Result<f64> {
    if t_grid.is_empty() {
        return Err(Error::invalid("envelope grid is empty"));
    }
    for &t in t_grid {
        ensure_finite("grid time", t)?;
        if t < 0.0 {
            return Err(Error::invalid(format!("grid time {t} is negative")));
        }
    }
    if !(spec.m > 0.0) {
        return Err(Error::validation("operator.m", "M must be positive"));
    }
    let spectral = spec.spectral()?;
    let mu = spec.mu.abs();
    let values: Result<Vec<f64>> = t_grid
        .par_iter()
        .map(|&t| {
            let modes = spectral.mode_values(t)?;
            let norm = if t == 0.0 {
                1.0
            } else {
                spectral_norm(&spectral.assemble(&modes))
            };
            Ok(norm * (1.0 + mu * t.powf(spectral.alpha)) / spec.m)
        })
        .collect();
    Ok(values?.into_iter().fold(0.0, f64::max))
}

/// Envelope constant on `[0, T]` at two resolutions and on `[0, 2T]`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EnvelopeStudy {
    pub horizon: f64,
    pub base: f64,
    pub refined: f64,
    pub extended: f64,
    /// `|refined / base - 1| <= 5%`.
    pub stable: bool,
    /// The constant keeps growing when the horizon doubles.
    pub divergent: bool,
    pub condition: f64,
}

pub const ENVELOPE_STABILITY_TOL: f64 = 0.05;

pub fn envelope_study(spec: &SectorialSpec, horizon: f64, points: usize) -> Result<EnvelopeStudy> {
    if !(horizon > 0.0) || points < 2 {
        return Err(Error::invalid("envelope study needs a positive horizon and >= 2 points"));
    }
    let grid = |t_end: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
    };
    let base = decay_envelope(spec, &grid(horizon, points))?;
    let refined = decay_envelope(spec, &grid(horizon, 2 * points - 1))?;
    let extended = decay_envelope(spec, &grid(2.0 * horizon, 2 * points - 1))?;
    let stable = base.is_finite() && (refined / base - 1.0).abs() <= ENVELOPE_STABILITY_TOL;
    let divergent = !extended.is_finite() || extended > refined * (1.0 + ENVELOPE_STABILITY_TOL);
    Ok(EnvelopeStudy {
        horizon,
        base,
        refined,
        extended,
        stable,
        divergent,
        condition: spec.spectral()?.condition,
    })
}

/// Solution-operator values on a uniform lag grid `k * step`, shared by all
/// paths of a run, optionally with a finer table for off-grid lags (jump
/// times). Values are stored per eigenmode.
#[derive(Debug, Clone)]
pub struct OperatorTable {
    pub spectral: Spectral,
    pub step: f64,
    /// `modes[e][k] = E_alpha(a_e (k step)^alpha)`.
    modes: Vec<Vec<f64>>,
    fine: Option<FineTable>,
}

#[derive(Debug, Clone)]
struct FineTable {
    spacing: f64,
    modes: Vec<Vec<f64>>,
}

/// Fine-table points per coarse step.
pub const FINE_RESOLUTION: usize = 64;

fn mode_table(spectral: &Spectral, spacing: f64, count: usize) -> Result<Vec<Vec<f64>>> {
    let rows: Result<Vec<Vec<f64>>> = (0..count)
        .into_par_iter()
        .map(|k| spectral.mode_values(k as f64 * spacing))
        .collect();
    let rows = rows?;
    let d = spectral.dim();
    Ok((0..d).map(|e| rows.iter().map(|r| r[e]).collect()).collect())
}

impl OperatorTable {
    /// Lags `0..=n_lags` at spacing `step`.
    pub fn new(spec: &SectorialSpec, step: f64, n_lags: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("table step must be positive, got {step}")));
        }
        let spectral = spec.spectral()?;
        let modes = mode_table(&spectral, step, n_lags + 1)?;
        Ok(OperatorTable {
            spectral,
            step,
            modes,
            fine: None,
        })
    }

    /// Adds the off-grid interpolation table (cubic Lagrange at spacing
    /// `step / FINE_RESOLUTION`; lags below one coarse step are evaluated
    /// exactly).
    pub fn with_fine_table(mut self) -> Result<Self> {
        let spacing = self.step / FINE_RESOLUTION as f64;
        let count = (self.n_lags() + 1) * FINE_RESOLUTION + 4;
        self.fine = Some(FineTable {
            spacing,
            modes: mode_table(&self.spectral, spacing, count)?,
        });
        Ok(self)
    }

    pub fn has_fine_table(&self) -> bool {
        self.fine.is_some()
    }

    pub fn dim(&self) -> usize {
        self.spectral.dim()
    }

    pub fn n_lags(&self) -> usize {
        self.modes[0].len() - 1
    }

    #[inline]
    pub fn mode(&self, e: usize, k: usize) -> f64 {
        self.modes[e][k]
    }

    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        if k == 0 {
            let d = self.dim();
            return DMatrix::identity(d, d);
        }
        let modes: Vec<f64> = (0..self.dim()).map(|e| self.modes[e][k]).collect();
        self.spectral.assemble(&modes)
    }

    /// Mode value at an arbitrary lag in `[0, n_lags * step]`.
    pub fn mode_at(&self, e: usize, lag: f64) -> Result<f64> {
        if lag < 0.0 || lag > self.n_lags() as f64 * self.step * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("lag {lag} outside the operator table")));
        }
        let ratio = lag / self.step;
        if (ratio - ratio.round()).abs() < 1e-12 {
            return Ok(self.modes[e][ratio.round() as usize]);
        }
        if lag < self.step {
            let ta = lag.powf(self.spectral.alpha);
            return ml_eval(self.spectral.alpha, 1.0, self.spectral.eigenvalues[e] * ta);
        }
        let fine = self
            .fine
            .as_ref()
            .ok_or_else(|| Error::invalid("off-grid lag requested without a fine table"))?;
        let s = lag / fine.spacing;
        let k = (s.floor() as usize).clamp(1, fine.modes[e].len() - 3);
        let u = s - k as f64;
        let y = &fine.modes[e];
        // cubic Lagrange through k-1, k, k+1, k+2
        let (um1, u0, u1, u2) = (u + 1.0, u, u - 1.0, u - 2.0);
        Ok(-y[k - 1] * u0 * u1 * u2 / 6.0 + y[k] * um1 * u1 * u2 / 2.0
            - y[k + 1] * um1 * u0 * u2 / 2.0
            + y[k + 2] * um1 * u0 * u1 / 6.0)
    }

    /// Maps a vector of `H` into eigen-coordinates.
    pub fn to_modes(&self, v: &[f64], out: &mut [f64]) {
        if self.spectral.is_identity_basis() {
            out.copy_from_slice(v);
            return;
        }
        let d = self.dim();
        for i in 0..d {
            out[i] = (0..d).map(|j| self.spectral.inverse[(i, j)] * v[j]).sum();
        }
    }

    pub fn from_modes(&self, w: &[f64], out: &mut [f64]) {
        if self.spectral.is_identity_basis() {
            out.copy_from_slice(w);
            return;
        }
        let d = self.dim();
        for i in 0..d {
            out[i] = (0..d).map(|j| self.spectral.basis[(i, j)] * w[j]).sum();
        }
    }
}
