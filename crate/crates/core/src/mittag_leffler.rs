//! Two-parameter Mittag-Leffler function `E_{a,b}(z) = sum_k z^k / Gamma(a k + b)`
//! on the real line.
//!
//! Regimes for `z < 0`:
//! * `|z| <= z_switch`: Taylor series with compensated accumulation.
//! * `|z| > z_switch`, `1 < a <= 2`: the Hankel-contour representation collapsed
//!   onto the negative real axis. The two poles at `|z|^{1/a} e^{+-i pi/a}`
//!   contribute `(2/a) Re(lambda^{1-b} e^lambda)`; the cut contributes a smooth
//!   real integral, evaluated by its algebraic asymptotic series once the first
//!   omitted term is negligible and by exp-sinh quadrature otherwise.
//! * `0 < a < 1`: the same cut integral, with no pole terms.

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::exp_sinh;
use crate::special::{cos_pi, ln_gamma, rgamma, sin_pi, CompensatedSum};

/// Tunables for [`ml_eval_with`].
#[derive(Debug, Clone, Copy)]
pub struct MlOptions {
    /// Largest `|z|` (for `z < 0`) handled by the Taylor series.
    pub z_switch: f64,
    /// Width of the band beyond `z_switch` where both regimes are evaluated
    /// and must agree.
    pub overlap: f64,
    /// Required agreement inside the overlap band.
    pub overlap_tol: f64,
    /// Absolute tolerance for the cut integral.
    pub abs_tol: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            z_switch: 5.0,
            overlap: 1.0,
            overlap_tol: 1e-9,
            abs_tol: 1e-15,
        }
    }
}

/// `E_{alpha,beta}(z)` with the default options.
pub fn ml_eval(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    ml_eval_with(alpha, beta, z, &MlOptions::default())
}

pub fn ml_eval_with(alpha: f64, beta: f64, z: f64, opts: &MlOptions) -> Result<f64> {
    ensure_finite("alpha", alpha)?;
    ensure_finite("beta", beta)?;
    ensure_finite("z", z)?;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if beta <= 0.0 {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(z.exp());
    }
    if z > 0.0 || -z <= opts.z_switch {
        return series(alpha, beta, z);
    }

    let x = -z;
    if alpha == 1.0 {
        return Err(Error::invalid(format!(
            "E_(1,{beta}) for z < -{} is not supported",
            opts.z_switch
        )));
    }
    if beta >= alpha + 1.0 {
        return Err(Error::invalid(format!(
            "beta must be below alpha + 1 for z < -{}, got beta = {beta}",
            opts.z_switch
        )));
    }

    let value = pole_terms(alpha, beta, x) + cut_integral(alpha, beta, x, opts.abs_tol)?;
    if x <= opts.z_switch + opts.overlap {
        let reference = series(alpha, beta, z)?;
        if (reference - value).abs() > opts.overlap_tol {
            // one retry with the cut integral pushed to full precision
            let retry = pole_terms(alpha, beta, x) + cut_quadrature(alpha, beta, x, 1e-17)?;
            if (reference - retry).abs() > opts.overlap_tol {
                return Err(Error::Numerical(format!(
                    "series and contour regimes disagree at z = {z}: {reference} vs {retry}"
                )));
            }
            return Ok(retry);
        }
    }
    Ok(value)
}

/// Taylor series. Positive `z` has no cancellation; for negative `z` the
/// caller keeps `|z|` small enough that the largest term stays O(10^2).
pub(crate) fn series(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    const MAX_TERMS: usize = 5000;
    let log_abs_z = z.abs().ln();
    let mut acc = CompensatedSum::default();
    let mut small_run = 0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        let arg = alpha * kf + beta;
        let magnitude = if k == 0 {
            rgamma(beta)
        } else if arg < 170.0 && kf * log_abs_z < 700.0 {
            z.abs().powi(k as i32) * rgamma(arg)
        } else {
            (kf * log_abs_z - ln_gamma(arg)).exp()
        };
        let term = if z < 0.0 && k % 2 == 1 {
            -magnitude
        } else {
            magnitude
        };
        if !term.is_finite() {
            return Err(Error::Numerical(format!(
                "Mittag-Leffler series overflow at z = {z}"
            )));
        }
        acc.add(term);
        // past the peak (the term ratio is ~ |z| / (alpha k)^alpha) and negligible
        let past_peak = (alpha * kf).powf(alpha) > z.abs();
        if past_peak && term.abs() <= 1e-17 * acc.value().abs().max(1.0) {
            small_run += 1;
            if small_run >= 3 {
                let v = acc.value();
                return if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Numerical(format!("series overflow at z = {z}")))
                };
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::Numerical(format!(
        "Mittag-Leffler series did not converge at z = {z}"
    )))
}

/// Residues at `lambda = x^{1/alpha} e^{+-i pi / alpha}` (present for alpha > 1).
fn pole_terms(alpha: f64, beta: f64, x: f64) -> f64 {
    if alpha <= 1.0 {
        return 0.0;
    }
    let rho = x.powf(1.0 / alpha);
    let decay = rho * cos_pi(1.0 / alpha);
    if decay < -745.0 {
        return 0.0;
    }
    let amplitude = x.powf((1.0 - beta) / alpha) * decay.exp();
    let phase = rho * sin_pi(1.0 / alpha) + std::f64::consts::PI * (1.0 - beta) / alpha;
    2.0 / alpha * amplitude * phase.cos()
}

fn cut_integral(alpha: f64, beta: f64, x: f64, abs_tol: f64) -> Result<f64> {
    match cut_asymptotic(alpha, beta, x, abs_tol) {
        Some(v) => Ok(v),
        None => cut_quadrature(alpha, beta, x, abs_tol),
    }
}

/// `-sum_{k>=1} z^{-k} / Gamma(beta - alpha k)` with `z = -x`, accepted only
/// when the first omitted term is below `abs_tol`.
fn cut_asymptotic(alpha: f64, beta: f64, x: f64, abs_tol: f64) -> Option<f64> {
    const MAX_TERMS: usize = 200;
    let mut acc = CompensatedSum::default();
    let mut last_nonzero = f64::INFINITY;
    let inv_x = 1.0 / x;
    let mut power = 1.0;
    for k in 1..=MAX_TERMS {
        power *= inv_x;
        let r = rgamma(beta - alpha * k as f64);
        if r == 0.0 {
            continue;
        }
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        let term = -sign * power * r;
        if !term.is_finite() {
            return None;
        }
        if term.abs() < abs_tol {
            return Some(acc.value());
        }
        if term.abs() > last_nonzero {
            // diverging before the tolerance was reached
            return None;
        }
        last_nonzero = term.abs();
        acc.add(term);
    }
    // every term vanished (e.g. alpha = 2, beta = 1)
    if last_nonzero.is_infinite() {
        Some(0.0)
    } else {
        None
    }
}

/// `(1/pi) int_0^inf e^{-r} r^{alpha-beta} [r^alpha sin(pi beta) - x sin(pi(alpha-beta))]
///  / (r^{2 alpha} + 2 x r^alpha cos(pi alpha) + x^2) dr`
fn cut_quadrature(alpha: f64, beta: f64, x: f64, abs_tol: f64) -> Result<f64> {
    let s_beta = sin_pi(beta);
    let s_diff = sin_pi(alpha - beta);
    let c_alpha = cos_pi(alpha);
    if s_beta == 0.0 && s_diff == 0.0 {
        return Ok(0.0);
    }
    // scale by 1/x^2 so the integrand is O(1/x) and the tolerance stays absolute
    let inv_x = 1.0 / x;
    let integrand = |r: f64| {
        let ra = r.powf(alpha);
        let u = ra * inv_x;
        let lead = if beta == 1.0 { ra / r } else { r.powf(alpha - beta) };
        let num = u * s_beta - s_diff;
        let den = u * u + 2.0 * u * c_alpha + 1.0;
        (-r).exp() * lead * num / den * inv_x
    };
    let r = exp_sinh(integrand, 0.0, abs_tol * std::f64::consts::PI)?;
    Ok(r.value / std::f64::consts::PI)
}
