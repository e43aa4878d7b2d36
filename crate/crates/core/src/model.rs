//! Problem instances: operator, noise, delay structure, initial history and
//! coefficients, with hypothesis validation and the contraction constant.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::noise::{big_jump_intensity, LevySpec};
use crate::operator::{check_sectorial, decay_envelope, SectorialSpec};
use crate::report::ValidationReport;
use crate::segment::{sup_distance, Segment, SegmentBuf};

/// Initial history `phi` on `[-tau, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSegment {
    Constant(Vec<f64>),
    /// `phi(theta) = at_zero + theta * slope`.
    Affine { at_zero: Vec<f64>, slope: Vec<f64> },
    /// Values at `theta = -tau, -tau + h, ..., 0`; must match the solver grid.
    Samples(Vec<Vec<f64>>),
}

impl InitialSegment {
    pub fn dim(&self) -> usize {
        match self {
            InitialSegment::Constant(v) => v.len(),
            InitialSegment::Affine { at_zero, .. } => at_zero.len(),
            InitialSegment::Samples(rows) => rows.first().map_or(0, |r| r.len()),
        }
    }

    /// Samples `phi` on `m + 1` grid points with spacing `step`.
    pub fn on_grid(&self, m: usize, step: f64) -> Result<SegmentBuf> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::validation("model.phi", "empty initial segment"));
        }
        let mut buf = SegmentBuf::zeros(m + 1, d, step);
        match self {
            InitialSegment::Constant(v) => {
                for k in 0..=m {
                    buf.point_mut(k).copy_from_slice(v);
                }
            }
            InitialSegment::Affine { at_zero, slope } => {
                if slope.len() != d {
                    return Err(Error::validation("model.phi.slope", "length differs from at_zero"));
                }
                for k in 0..=m {
                    let theta = -((m - k) as f64) * step;
                    for (i, x) in buf.point_mut(k).iter_mut().enumerate() {
                        *x = at_zero[i] + theta * slope[i];
                    }
                }
            }
            InitialSegment::Samples(rows) => {
                if rows.len() != m + 1 {
                    return Err(Error::validation(
                        "model.phi.samples",
                        format!("{} samples given, the grid needs {}", rows.len(), m + 1),
                    ));
                }
                for (k, r) in rows.iter().enumerate() {
                    if r.len() != d {
                        return Err(Error::validation(
                            format!("model.phi.samples[{k}]"),
                            format!("length {} != {d}", r.len()),
                        ));
                    }
                    buf.point_mut(k).copy_from_slice(r);
                }
            }
        }
        if buf.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("model.phi", "values must be finite"));
        }
        Ok(buf)
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub sectorial: SectorialSpec,
    pub noise: LevySpec,
    pub tau: f64,
    pub omega: f64,
    pub phi: InitialSegment,
    pub coefficients: CoefficientSet,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.sectorial.dim()
    }

    /// Structural checks: positivity, dimensions, finite profiles.
    pub fn validate_structure(&self) -> Result<()> {
        let d = self.dim();
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::validation("model.tau", "must be positive"));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::validation("model.omega", "must be positive"));
        }
        self.noise.validate()?;
        if self.phi.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "initial segment has dimension {}, operator has {d}",
                self.phi.dim()
            )));
        }
        let c = &self.coefficients;
        if let crate::coefficients::Diffusion::Linear { loading, .. } = &c.g {
            if loading.len() != self.noise.dim {
                return Err(Error::DimensionMismatch(format!(
                    "g loading has length {}, noise dimension is {}",
                    loading.len(),
                    self.noise.dim
                )));
            }
        }
        for (name, p) in c.profiles() {
            p.validate(&format!("coefficients.{name}"))?;
        }
        if !(c.sap_omega > 0.0 && c.sap_omega.is_finite()) {
            return Err(Error::validation("coefficients.sap_omega", "must be positive"));
        }
        if !c.k0.is_finite() || !c.lipschitz.is_finite() {
            return Err(Error::validation("coefficients", "k0 and L must be finite"));
        }
        Ok(())
    }
}

/// `int_0^inf dt / (1 + |mu| t^alpha) = |mu|^{-1/alpha} pi / (alpha sin(pi/alpha))`.
pub fn kappa1(alpha: f64, mu: f64) -> Result<f64> {
    check_kappa_args(alpha, mu)?;
    Ok((-mu).powf(-1.0 / alpha) * PI / (alpha * (PI / alpha).sin()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa2 {
    /// `|mu|^{-1/(2 alpha)} pi / (2 alpha sin(pi / (2 alpha)))`, as printed
    /// in the contraction condition.
    pub paper_value: f64,
    /// `int_0^inf (1 + |mu| t^alpha)^{-2} dt`, via the Beta integral.
    pub quadrature_value: f64,
}

pub fn kappa2(alpha: f64, mu: f64) -> Result<Kappa2> {
    check_kappa_args(alpha, mu)?;
    let a = -mu;
    Ok(Kappa2 {
        paper_value: a.powf(-1.0 / (2.0 * alpha)) * PI / (2.0 * alpha * (PI / (2.0 * alpha)).sin()),
        quadrature_value: a.powf(-1.0 / alpha) * (1.0 - 1.0 / alpha) * PI
            / (alpha * (PI / alpha).sin()),
    })
}

fn check_kappa_args(alpha: f64, mu: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::invalid(format!("alpha must lie in (1, 2], got {alpha}")));
    }
    if !(mu < 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be negative, got {mu}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionVariant {
    PaperLiteral,
    QuadratureExact,
}

/// Raw inputs of the contraction constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionInputs {
    pub k0: f64,
    pub lipschitz: f64,
    pub b: f64,
    pub c: f64,
    pub m: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl ContractionInputs {
    pub fn from_model(model: &ModelSpec) -> Self {
        ContractionInputs {
            k0: model.coefficients.k0,
            lipschitz: model.coefficients.lipschitz,
            b: big_jump_intensity(&model.noise),
            c: model.sectorial.c,
            m: model.sectorial.m,
            alpha: model.sectorial.alpha,
            mu: model.sectorial.mu,
        }
    }

    /// `5 k0^2 + 5 (CM)^2 L kappa1^2 (1 + b) + 20 L (CM)^2 kappa2`.
    pub fn theta(&self, variant: ContractionVariant) -> Result<f64> {
        let k1 = kappa1(self.alpha, self.mu)?;
        let k2 = kappa2(self.alpha, self.mu)?;
        let k2 = match variant {
            ContractionVariant::PaperLiteral => k2.paper_value,
            ContractionVariant::QuadratureExact => k2.quadrature_value,
        };
        let cm2 = (self.c * self.m).powi(2);
        Ok(5.0 * self.k0 * self.k0
            + 5.0 * cm2 * self.lipschitz * k1 * k1 * (1.0 + self.b)
            + 20.0 * self.lipschitz * cm2 * k2)
    }
}

pub fn contraction_constant(model: &ModelSpec, variant: ContractionVariant) -> Result<f64> {
    model.validate_structure()?;
    ContractionInputs::from_model(model).theta(variant)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionSummary {
    pub kappa1: f64,
    pub kappa2: Kappa2,
    pub b: f64,
    pub paper_literal: f64,
    pub quadrature_exact: f64,
}

impl ContractionSummary {
    pub fn theta(&self, variant: ContractionVariant) -> f64 {
        match variant {
            ContractionVariant::PaperLiteral => self.paper_literal,
            ContractionVariant::QuadratureExact => self.quadrature_exact,
        }
    }

    pub fn margin(&self, variant: ContractionVariant) -> f64 {
        1.0 - self.theta(variant)
    }

    pub fn passes(&self, variant: ContractionVariant) -> bool {
        self.theta(variant) < 1.0
    }
}

pub fn check_contraction(model: &ModelSpec) -> Result<ContractionSummary> {
    model.validate_structure()?;
    let inputs = ContractionInputs::from_model(model);
    Ok(ContractionSummary {
        kappa1: kappa1(inputs.alpha, inputs.mu)?,
        kappa2: kappa2(inputs.alpha, inputs.mu)?,
        b: inputs.b,
        paper_literal: inputs.theta(ContractionVariant::PaperLiteral)?,
        quadrature_exact: inputs.theta(ContractionVariant::QuadratureExact)?,
    })
}

/// Grid points used for probe segments.
const PROBE_POINTS: usize = 17;
const ZERO_TOL: f64 = 1e-12;
const QUOTIENT_SLACK: f64 = 1e-9;
const ENVELOPE_HORIZON: f64 = 100.0;
const ENVELOPE_POINTS: usize = 2000;

struct Probe {
    t: f64,
    phi: SegmentBuf,
    psi: SegmentBuf,
}

/// Structured pairs (constant and single-point differences, which realize the
/// Lipschitz constants of the shipped functionals) plus random pairs.
fn probes(model: &ModelSpec, budget: usize, seed: u64) -> Vec<Probe> {
    let d = model.dim();
    let step = model.tau / (PROBE_POINTS - 1) as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let horizon = 4.0 * model.omega.max(model.tau).max(1.0);
    let mut times = vec![0.0, model.omega, 0.5 * model.tau];
    let mut out = Vec::with_capacity(budget);
    let random_seg = |rng: &mut ChaCha20Rng, scale: f64| {
        let mut s = SegmentBuf::zeros(PROBE_POINTS, d, step);
        s.values.iter_mut().for_each(|x| *x = scale * (2.0 * rng.random::<f64>() - 1.0));
        s
    };
    while out.len() < budget {
        let i = out.len();
        let t = if i < times.len() * 4 {
            times[i % times.len()]
        } else {
            horizon * rng.random::<f64>()
        };
        let scale = 1.0 + 4.0 * rng.random::<f64>();
        let phi = random_seg(&mut rng, scale);
        let psi = match i % 4 {
            // constant offset
            0 => {
                let mut psi = phi.clone();
                let dir: Vec<f64> = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                for k in 0..PROBE_POINTS {
                    for (x, v) in psi.point_mut(k).iter_mut().zip(&dir) {
                        *x += v;
                    }
                }
                psi
            }
            // single-point offset at theta = 0, -tau, or interior
            1 => {
                let mut psi = phi.clone();
                let k = [0, PROBE_POINTS - 1, rng.random_range(0..PROBE_POINTS)][rng.random_range(0..3)];
                for x in psi.point_mut(k) {
                    *x += 2.0 * rng.random::<f64>() - 1.0;
                }
                psi
            }
            2 => SegmentBuf::zeros(PROBE_POINTS, d, step),
            _ => random_seg(&mut rng, 1.0),
        };
        out.push(Probe { t, phi, psi });
        if times.len() < 8 {
            times.push(horizon * rng.random::<f64>());
        }
    }
    out
}

/// Checks the operator, vanishing-at-zero and Lipschitz hypotheses on sampled
/// times and segment pairs. Declared constants are authoritative; sampling
/// can only falsify them.
pub fn validate_hypotheses(model: &ModelSpec, sample_budget: usize, seed: u64) -> Result<ValidationReport> {
    if sample_budget < 100 {
        return Err(Error::invalid("sample_budget must be at least 100"));
    }
    model.validate_structure()?;
    let c = &model.coefficients;
    let noise = &model.noise;
    let d = model.dim();
    let mut report = ValidationReport::new();
    report.extend("sector: ", check_sectorial(&model.sectorial));
    let sect = &model.sectorial;
    if sect.alpha > 1.0 && sect.alpha <= 2.0 && sect.mu < 0.0 && sect.m > 0.0 {
        let grid: Vec<f64> = (0..=ENVELOPE_POINTS)
            .map(|k| ENVELOPE_HORIZON * k as f64 / ENVELOPE_POINTS as f64)
            .collect();
        let envelope = sect.m * decay_envelope(sect, &grid)?;
        report.push(
            "decay envelope <= C*M",
            envelope <= sect.cm() * (1.0 + QUOTIENT_SLACK),
            Some(envelope),
            Some(sect.cm()),
            format!("max ||S(t)|| (1 + |mu| t^alpha) on [0, {ENVELOPE_HORIZON}]"),
        );
    }

    report.push(
        "k0 in (0,1)",
        c.k0 > 0.0 && c.k0 < 1.0,
        Some(c.k0),
        Some(1.0),
        "neutral Lipschitz constant",
    );
    report.push("L > 0", c.lipschitz > 0.0, Some(c.lipschitz), None, "shared Lipschitz constant");
    report.note("trace Q", Some(noise.trace_q()), "finite in finite dimension");
    report.note("b", Some(big_jump_intensity(noise)), "big-jump intensity");

    for (name, p) in c.profiles() {
        report.push(
            format!("{name} periodic with sap_omega"),
            p.is_periodic_with(c.sap_omega),
            Some(p.period),
            Some(c.sap_omega),
            "profile period must divide sap_omega",
        );
    }

    let k0_sq = c.k0 * c.k0;
    let analytic = [
        ("h", c.h.lipschitz_sq(), k0_sq),
        ("f", c.f.lipschitz_sq(), c.lipschitz),
        ("g", c.g.lipschitz_sq(&noise.q_diag), c.lipschitz),
        ("F", c.small_jump.lipschitz_sq(noise, false), c.lipschitz),
        ("G", c.big_jump.lipschitz_sq(noise, true), c.lipschitz),
    ];
    for (name, value, bound) in analytic {
        if let Some(v) = value {
            report.push(
                format!("{name} analytic constant"),
                v <= bound * (1.0 + QUOTIENT_SLACK),
                Some(v),
                Some(bound),
                "squared Lipschitz constant of the preset",
            );
        }
    }

    let probes = probes(model, sample_budget, seed);
    let mut zero_res = [0.0f64; 5];
    let mut quot = [0.0f64; 5];
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    for p in &probes {
        let phi = p.phi.view();
        let psi = p.psi.view();
        let zero = SegmentBuf::zeros(PROBE_POINTS, d, phi.step());
        let z = zero.view();
        let t = p.t;

        let gaps = coefficient_gaps(model, t, &phi, &psi, &mut a, &mut b)?;
        let at_zero = coefficient_values_sq(model, t, &z, &mut a)?;
        for k in 0..5 {
            zero_res[k] = zero_res[k].max(at_zero[k].sqrt());
        }
        let dist = sup_distance(phi.values(), psi.values(), d);
        if dist > 0.0 {
            for k in 0..5 {
                quot[k] = quot[k].max(gaps[k] / (dist * dist));
            }
        }
    }

    let names = ["h", "f", "g", "F", "G"];
    for k in 0..5 {
        report.push(
            format!("{}(t,0) = 0", names[k]),
            zero_res[k] < ZERO_TOL,
            Some(zero_res[k]),
            Some(ZERO_TOL),
            "max residual over sampled t",
        );
    }
    for k in 0..5 {
        let bound = if k == 0 { k0_sq } else { c.lipschitz };
        report.push(
            format!("{} quotient", names[k]),
            quot[k] <= bound * (1.0 + QUOTIENT_SLACK),
            Some(quot[k]),
            Some(bound),
            if k == 0 {
                "max |h(phi)-h(psi)|^2 / |phi-psi|_C^2 vs k0^2"
            } else if k >= 3 {
                "nu-integrated quotient on its threshold side vs L"
            } else {
                "max empirical quotient vs L"
            },
        );
    }
    Ok(report)
}

/// Squared differences `[h, f, g Q^{1/2}, nu-F, nu-G]` between two segments.
pub(crate) fn coefficient_gaps(
    model: &ModelSpec,
    t: f64,
    phi: &Segment,
    psi: &Segment,
    a: &mut [f64],
    b: &mut [f64],
) -> Result<[f64; 5]> {
    coefficient_gaps_at(model, (t, phi), (t, psi), a, b)
}

/// As [`coefficient_gaps`] with independent evaluation times.
pub(crate) fn coefficient_gaps_at(
    model: &ModelSpec,
    (s, phi): (f64, &Segment),
    (t, psi): (f64, &Segment),
    a: &mut [f64],
    b: &mut [f64],
) -> Result<[f64; 5]> {
    let c = &model.coefficients;
    let noise = &model.noise;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut out = [0.0; 5];

    c.h.eval_into(s, phi, a)?;
    c.h.eval_into(t, psi, b)?;
    out[0] = sq(a, b);
    c.f.eval_into(s, phi, a)?;
    c.f.eval_into(t, psi, b)?;
    out[1] = sq(a, b);

    let mut e = vec![0.0; noise.dim];
    for (k, q) in noise.q_diag.iter().enumerate() {
        if *q == 0.0 {
            continue;
        }
        e.iter_mut().for_each(|x| *x = 0.0);
        e[k] = q.sqrt();
        c.g.apply_into(s, phi, &e, a)?;
        c.g.apply_into(t, psi, &e, b)?;
        out[2] += sq(a, b);
    }

    for atom in &noise.atoms {
        let (field, slot) = if atom.is_big() {
            (&c.big_jump, 4)
        } else {
            (&c.small_jump, 3)
        };
        field.eval_into(s, phi, &atom.mark, a)?;
        field.eval_into(t, psi, &atom.mark, b)?;
        out[slot] += atom.rate * sq(a, b);
    }
    Ok(out)
}

fn coefficient_values_sq(model: &ModelSpec, t: f64, seg: &Segment, a: &mut [f64]) -> Result<[f64; 5]> {
    let c = &model.coefficients;
    let noise = &model.noise;
    let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut out = [0.0; 5];
    c.h.eval_into(t, seg, a)?;
    out[0] = n2(a);
    c.f.eval_into(t, seg, a)?;
    out[1] = n2(a);
    out[2] = c.g.q_norm_sq(t, seg, &noise.q_diag, a.len())?;
    for atom in &noise.atoms {
        let (field, slot) = if atom.is_big() {
            (&c.big_jump, 4)
        } else {
            (&c.small_jump, 3)
        };
        field.eval_into(t, seg, &atom.mark, a)?;
        out[slot] += atom.rate * n2(a);
    }
    Ok(out)
}
