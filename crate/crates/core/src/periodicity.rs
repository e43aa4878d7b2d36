//! Estimators for square-mean S-asymptotic periodicity and periodicity in
//! distribution on simulated ensembles, plus coefficient-level gaps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bl::{bl_distance_weighted, WeightedCloud, SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::model::{coefficient_gaps_at, ModelSpec};
use crate::segment::{sup_distance, SegmentBuf};
use crate::solver::Ensemble;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(estimate: f64, stderr: f64) -> Self {
        Estimate { estimate, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Estimate::new(value, 0.0)
    }

    pub fn upper(&self, z: f64) -> f64 {
        self.estimate + z * self.stderr
    }

    pub fn lower(&self, z: f64) -> f64 {
        self.estimate - z * self.stderr
    }

    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Estimate::exact(mean);
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Estimate::new(mean, (var / n).sqrt())
    }
}

/// Segment samples at one time, flattened `(n, (m + 1) * dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pub samples: Vec<f64>,
    pub point_dim: usize,
    pub dim: usize,
    pub t_label: f64,
}

impl EmpiricalLaw {
    pub fn from_paths(ensemble: &Ensemble, t: f64, paths: impl IntoIterator<Item = usize>) -> Result<Self> {
        let first = ensemble
            .trajectories
            .first()
            .ok_or_else(|| Error::invalid("empty ensemble"))?;
        let j = first.step_index(t)?;
        let mut samples = Vec::new();
        for p in paths {
            let traj = ensemble
                .trajectories
                .get(p)
                .ok_or_else(|| Error::invalid(format!("path {p} not in ensemble")))?;
            samples.extend_from_slice(traj.segment_at_step(j).values());
        }
        Ok(EmpiricalLaw {
            samples,
            point_dim: (first.history + 1) * first.dim,
            dim: first.dim,
            t_label: t,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.point_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn cloud(&self) -> WeightedCloud<'_> {
        WeightedCloud::uniform(&self.samples, self.point_dim, self.dim)
    }
}

/// Exact empirical bounded-Lipschitz distance.
pub fn bl_distance(p: &EmpiricalLaw, q: &EmpiricalLaw) -> Result<f64> {
    bl_distance_weighted(&p.cloud(), &q.cloud(), SUPPORT_CAP)
}

fn check_times(ensemble: &Ensemble, t: f64, omega: f64) -> Result<(usize, usize)> {
    let first = ensemble
        .trajectories
        .first()
        .ok_or_else(|| Error::invalid("empty ensemble"))?;
    if !(omega >= 0.0) {
        return Err(Error::invalid("omega must be nonnegative"));
    }
    Ok((first.step_index(t)?, first.step_index(t + omega)?))
}

/// Coupled pathwise `||x_{t+omega} - x_t||_C` for every path.
fn pathwise_gaps(ensemble: &Ensemble, t: f64, omega: f64) -> Result<Vec<f64>> {
    let (a, b) = check_times(ensemble, t, omega)?;
    Ok(ensemble
        .trajectories
        .iter()
        .map(|x| {
            sup_distance(
                x.segment_at_step(b).values(),
                x.segment_at_step(a).values(),
                x.dim,
            )
        })
        .collect())
}

/// Monte Carlo `E ||x_{t+omega} - x_t||_C^2`.
pub fn mean_square_gap(ensemble: &Ensemble, t: f64, omega: f64) -> Result<Estimate> {
    let g: Vec<f64> = pathwise_gaps(ensemble, t, omega)?.iter().map(|d| d * d).collect();
    Ok(Estimate::from_samples(&g))
}

/// Monte Carlo `E min(2, ||x_{t+omega} - x_t||_C)`.
pub fn truncated_moment_bound(ensemble: &Ensemble, t: f64, omega: f64) -> Result<Estimate> {
    let g: Vec<f64> = pathwise_gaps(ensemble, t, omega)?.iter().map(|d| d.min(2.0)).collect();
    Ok(Estimate::from_samples(&g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionGapOptions {
    /// Paths per cloud; `None` uses every path of its subset.
    #[serde(default = "default_cloud_size")]
    pub cloud_size: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub seed: u64,
    /// Use the same paths for both clouds instead of disjoint halves.
    #[serde(default)]
    pub shared: bool,
}

fn default_cloud_size() -> Option<usize> {
    Some(200)
}

fn default_bootstrap() -> usize {
    200
}

impl Default for DistributionGapOptions {
    fn default() -> Self {
        DistributionGapOptions {
            cloud_size: default_cloud_size(),
            bootstrap: default_bootstrap(),
            seed: 0,
            shared: false,
        }
    }
}

/// Empirical `d_BL(law x_t, law x_{t+omega})` from disjoint path subsets
/// (even paths at `t`, odd paths at `t + omega`) with a bootstrap standard
/// error.
pub fn distribution_gap(
    ensemble: &Ensemble,
    t: f64,
    omega: f64,
    opts: &DistributionGapOptions,
) -> Result<Estimate> {
    check_times(ensemble, t, omega)?;
    let n = ensemble.len();
    let (left, right): (Vec<usize>, Vec<usize>) = if opts.shared {
        ((0..n).collect(), (0..n).collect())
    } else {
        ((0..n).step_by(2).collect(), (1..n).step_by(2).collect())
    };
    if left.is_empty() || right.is_empty() {
        return Err(Error::invalid("distribution gap needs at least two paths"));
    }
    let take = |v: Vec<usize>| match opts.cloud_size {
        Some(k) => v.into_iter().take(k).collect::<Vec<_>>(),
        None => v,
    };
    let p = EmpiricalLaw::from_paths(ensemble, t, take(left))?;
    let q = EmpiricalLaw::from_paths(ensemble, t + omega, take(right))?;
    let value = bl_distance(&p, &q)?;
    if opts.bootstrap == 0 {
        return Ok(Estimate::exact(value));
    }
    let stream_seed = opts.seed ^ t.to_bits().rotate_left(17) ^ omega.to_bits();
    let boot: Result<Vec<f64>> = (0..opts.bootstrap as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(stream_seed);
            rng.set_stream(b);
            let pc = resample_counts(&mut rng, p.len());
            let qc = resample_counts(&mut rng, q.len());
            let (pp, pcn) = compress(&p, &pc);
            let (qq, qcn) = compress(&q, &qc);
            bl_distance_weighted(
                &WeightedCloud {
                    points: &pp,
                    point_dim: p.point_dim,
                    counts: Some(&pcn),
                    dim: p.dim,
                },
                &WeightedCloud {
                    points: &qq,
                    point_dim: q.point_dim,
                    counts: Some(&qcn),
                    dim: q.dim,
                },
                SUPPORT_CAP,
            )
        })
        .collect();
    let boot = boot?;
    let mean = boot.iter().sum::<f64>() / boot.len() as f64;
    let var = boot.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (boot.len().max(2) - 1) as f64;
    Ok(Estimate::new(value, var.sqrt()))
}

fn resample_counts(rng: &mut ChaCha20Rng, n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Drops points with zero multiplicity.
fn compress(law: &EmpiricalLaw, counts: &[u64]) -> (Vec<f64>, Vec<u64>) {
    let mut pts = Vec::new();
    let mut cs = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            pts.extend_from_slice(&law.samples[i * law.point_dim..(i + 1) * law.point_dim]);
            cs.push(c);
        }
    }
    (pts, cs)
}

/// Gaps of the five coefficients: `[h, f, g Q^{1/2}, nu-F, nu-G]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CoefficientGaps<T> {
    pub h: T,
    pub f: T,
    pub g: T,
    pub small_jump: T,
    pub big_jump: T,
}

impl<T: Copy> CoefficientGaps<T> {
    fn from_array(a: [T; 5]) -> Self {
        CoefficientGaps {
            h: a[0],
            f: a[1],
            g: a[2],
            small_jump: a[3],
            big_jump: a[4],
        }
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.h, self.f, self.g, self.small_jump, self.big_jump]
    }
}

/// `max_phi ||c(t + omega, phi) - c(t, phi)||^2` over probe segments, per
/// coefficient (jump coefficients integrated against `nu` on their side).
pub fn coefficient_sap_gap(
    model: &ModelSpec,
    t: f64,
    omega: f64,
    probes: &[SegmentBuf],
) -> Result<CoefficientGaps<f64>> {
    if probes.is_empty() {
        return Err(Error::invalid("coefficient gap needs at least one probe segment"));
    }
    let d = model.dim();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut worst = [0.0f64; 5];
    for p in probes {
        if p.dim != d {
            return Err(Error::DimensionMismatch(format!(
                "probe dimension {} differs from the model dimension {d}",
                p.dim
            )));
        }
        let seg = p.view();
        let gaps = coefficient_gaps_at(model, (t + omega, &seg), (t, &seg), &mut a, &mut b)?;
        for k in 0..5 {
            worst[k] = worst[k].max(gaps[k]);
        }
    }
    Ok(CoefficientGaps::from_array(worst))
}

/// Monte Carlo `E ||c(t + omega, x_{t+omega}) - c(t, x_t)||^2` per
/// coefficient: the coefficient-output process gap.
pub fn coefficient_process_gap(
    model: &ModelSpec,
    ensemble: &Ensemble,
    t: f64,
    omega: f64,
) -> Result<CoefficientGaps<Estimate>> {
    let (ia, ib) = check_times(ensemble, t, omega)?;
    let d = model.dim();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut cols: [Vec<f64>; 5] = Default::default();
    for x in &ensemble.trajectories {
        let later = x.segment_at_step(ib);
        let now = x.segment_at_step(ia);
        let gaps = coefficient_gaps_at(model, (t + omega, &later), (t, &now), &mut a, &mut b)?;
        for k in 0..5 {
            cols[k].push(gaps[k]);
        }
    }
    Ok(CoefficientGaps::from_array([
        Estimate::from_samples(&cols[0]),
        Estimate::from_samples(&cols[1]),
        Estimate::from_samples(&cols[2]),
        Estimate::from_samples(&cols[3]),
        Estimate::from_samples(&cols[4]),
    ]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictConfig {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Width of the error bands in standard errors.
    #[serde(default = "default_z")]
    pub z: f64,
}

fn default_fraction() -> f64 {
    0.25
}

fn default_z() -> f64 {
    2.0
}

impl Default for VerdictConfig {
    fn default() -> Self {
        VerdictConfig {
            fraction: default_fraction(),
            z: default_z(),
        }
    }
}

/// Finite-horizon decay trend: PASS when the running maximum over the last
/// half of the checkpoints stays below `fraction` of the first estimate even
/// at the pessimistic ends of the error bands, FAIL when it exceeds it at the
/// optimistic ends, INCONCLUSIVE otherwise.
pub fn sap_decay_verdict(gaps: &[Estimate], cfg: &VerdictConfig) -> Verdict {
    if gaps.len() < 4 {
        return Verdict::Inconclusive;
    }
    let first = gaps[0];
    let tail = &gaps[gaps.len() / 2..];
    let tail_hi = tail.iter().map(|g| g.upper(cfg.z)).fold(f64::NEG_INFINITY, f64::max);
    let tail_lo = tail.iter().map(|g| g.lower(cfg.z)).fold(f64::NEG_INFINITY, f64::max);
    if tail_hi <= cfg.fraction * first.lower(cfg.z) {
        Verdict::Pass
    } else if tail_lo > cfg.fraction * first.upper(cfg.z) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub distribution: DistributionGapOptions,
    #[serde(default)]
    pub verdict: VerdictConfig,
}

fn default_checkpoints() -> Vec<f64> {
    vec![5.0, 10.0, 20.0, 40.0, 80.0]
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            checkpoints: default_checkpoints(),
            distribution: DistributionGapOptions::default(),
            verdict: VerdictConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub omega: f64,
    pub t_checkpoints: Vec<f64>,
    pub ms_gaps: Vec<Estimate>,
    pub bl_gaps: Vec<Estimate>,
    pub trunc_bounds: Vec<Estimate>,
    pub ms_verdict: Verdict,
    pub bl_verdict: Verdict,
}

/// One checkpoint's ordering checks: `d_BL <= trunc + 3 SE` and
/// `trunc <= sqrt(ms) + 3 SE`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub t: f64,
    pub bl_below_trunc: bool,
    pub trunc_below_ms: bool,
}

/// Slack for ties in exact (zero-variance) comparisons.
const TIE_TOL: f64 = 1e-12;

impl PeriodicityReport {
    pub fn ordering(&self) -> Vec<OrderingCheck> {
        (0..self.t_checkpoints.len())
            .map(|k| {
                let bl = self.bl_gaps[k];
                let tr = self.trunc_bounds[k];
                let ms = self.ms_gaps[k];
                let se1 = bl.stderr.hypot(tr.stderr);
                let root = ms.estimate.max(0.0).sqrt();
                // delta method for sqrt; falls back to sqrt(se) near zero
                let se_root = if root > 0.0 {
                    ms.stderr / (2.0 * root)
                } else {
                    ms.stderr.sqrt()
                };
                let se2 = tr.stderr.hypot(se_root);
                OrderingCheck {
                    t: self.t_checkpoints[k],
                    bl_below_trunc: bl.estimate <= tr.estimate + 3.0 * se1 + TIE_TOL,
                    trunc_below_ms: tr.estimate <= root + 3.0 * se2 + TIE_TOL,
                }
            })
            .collect()
    }
}

pub fn analyze(ensemble: &Ensemble, omega: f64, cfg: &AnalysisConfig) -> Result<PeriodicityReport> {
    let mut ms = Vec::new();
    let mut bl = Vec::new();
    let mut tr = Vec::new();
    for &t in &cfg.checkpoints {
        ms.push(mean_square_gap(ensemble, t, omega)?);
        tr.push(truncated_moment_bound(ensemble, t, omega)?);
        bl.push(distribution_gap(ensemble, t, omega, &cfg.distribution)?);
    }
    Ok(PeriodicityReport {
        omega,
        t_checkpoints: cfg.checkpoints.clone(),
        ms_verdict: sap_decay_verdict(&ms, &cfg.verdict),
        bl_verdict: sap_decay_verdict(&bl, &cfg.verdict),
        ms_gaps: ms,
        bl_gaps: bl,
        trunc_bounds: tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ests(xs: &[f64], se: f64) -> Vec<Estimate> {
        xs.iter().map(|&x| Estimate::new(x, se)).collect()
    }

    #[test]
    fn verdict_examples() {
        let cfg = VerdictConfig::default();
        assert_eq!(sap_decay_verdict(&ests(&[1.0, 0.5, 0.25, 0.125], 0.0), &cfg), Verdict::Pass);
        assert_eq!(sap_decay_verdict(&ests(&[1.0, 1.0, 1.0, 1.0], 0.0), &cfg), Verdict::Fail);
        assert_eq!(
            sap_decay_verdict(&ests(&[1.0, 0.6, 0.27, 0.24], 0.02), &cfg),
            Verdict::Inconclusive
        );
        assert_eq!(sap_decay_verdict(&ests(&[1.0, 0.5, 0.2], 0.0), &cfg), Verdict::Inconclusive);
    }

    #[test]
    fn estimate_from_samples() {
        let e = Estimate::from_samples(&[1.0, 3.0]);
        assert_eq!(e.estimate, 2.0);
        assert!((e.stderr - 1.0).abs() < 1e-15);
    }
}
