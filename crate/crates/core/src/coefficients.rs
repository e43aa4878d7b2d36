//! Coefficient presets `c(t) * Lambda[phi]` (optionally scaled by a mark
//! factor or a noise loading) and closure-backed custom coefficients.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::LevySpec;
use crate::segment::{norm, Segment};
use crate::special::{cos_pi, sin_pi};

/// `c(t) = constant + sum_k (cos_k cos(2 pi k t / period) + sin_k sin(2 pi k t / period))
///        + decay / (1 + t)^power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeProfile {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default = "default_power")]
    pub power: f64,
}

fn default_period() -> f64 {
    1.0
}

fn default_power() -> f64 {
    1.0
}

impl Default for TimeProfile {
    fn default() -> Self {
        TimeProfile {
            constant: 0.0,
            cos: Vec::new(),
            sin: Vec::new(),
            period: 1.0,
            decay: 0.0,
            power: 1.0,
        }
    }
}

impl TimeProfile {
    pub fn constant(c: f64) -> Self {
        TimeProfile {
            constant: c,
            ..Default::default()
        }
    }

    pub fn with_decay(mut self, decay: f64, power: f64) -> Self {
        self.decay = decay;
        self.power = power;
        self
    }

    pub fn with_harmonic(mut self, period: f64, cos: f64, sin: f64) -> Self {
        self.period = period;
        self.cos.push(cos);
        self.sin.push(sin);
        self
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let finite = self.constant.is_finite()
            && self.decay.is_finite()
            && self.cos.iter().chain(&self.sin).all(|x| x.is_finite());
        if !finite {
            return Err(Error::validation(field, "profile coefficients must be finite"));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::validation(format!("{field}.period"), "must be positive"));
        }
        if !(self.power >= 1.0 && self.power.is_finite()) {
            return Err(Error::validation(format!("{field}.power"), "must be at least 1"));
        }
        Ok(())
    }

    /// The phase is reduced modulo the period first, so `t` and
    /// `t + period` give identical values whenever both are exact in binary.
    pub fn periodic_part(&self, t: f64) -> f64 {
        let n = self.cos.len().max(self.sin.len());
        let mut v = self.constant;
        let phase = t.rem_euclid(self.period) / self.period;
        for k in 0..n {
            let x = 2.0 * ((k + 1) as f64 * phase).fract();
            let c = self.cos.get(k).copied().unwrap_or(0.0);
            let s = self.sin.get(k).copied().unwrap_or(0.0);
            v += c * cos_pi(x) + s * sin_pi(x);
        }
        v
    }

    pub fn decaying_part(&self, t: f64) -> f64 {
        if self.decay == 0.0 {
            0.0
        } else {
            self.decay / (1.0 + t).powf(self.power)
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.periodic_part(t) + self.decaying_part(t)
    }

    /// Upper bound on `sup_{t >= 0} |c(t)|`.
    pub fn sup_abs(&self) -> f64 {
        let n = self.cos.len().max(self.sin.len());
        let harmonics: f64 = (0..n)
            .map(|k| {
                let c = self.cos.get(k).copied().unwrap_or(0.0);
                let s = self.sin.get(k).copied().unwrap_or(0.0);
                c.hypot(s)
            })
            .sum();
        self.constant.abs() + harmonics + self.decay.abs()
    }

    pub fn has_harmonics(&self) -> bool {
        self.cos.iter().chain(&self.sin).any(|&x| x != 0.0)
    }

    /// True when the periodic part is `omega`-periodic.
    pub fn is_periodic_with(&self, omega: f64) -> bool {
        if !self.has_harmonics() {
            return true;
        }
        let r = omega / self.period;
        r >= 0.5 && (r - r.round()).abs() <= 1e-9 * r.max(1.0)
    }
}

/// The segment functional `Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `phi(0)`
    Now,
    /// `phi(-tau)`
    Lag,
    /// trapezoid mean over `[-tau, 0]`
    Average,
}

impl Functional {
    pub fn apply(self, seg: &Segment, out: &mut [f64]) {
        match self {
            Functional::Now => out.copy_from_slice(seg.now()),
            Functional::Lag => out.copy_from_slice(seg.lag()),
            Functional::Average => seg.average_into(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub profile: TimeProfile,
    pub functional: Functional,
}

impl Linear {
    pub fn new(profile: TimeProfile, functional: Functional) -> Self {
        Linear { profile, functional }
    }

    fn eval(&self, t: f64, seg: &Segment, out: &mut [f64]) {
        self.functional.apply(seg, out);
        let c = self.profile.value(t);
        out.iter_mut().for_each(|x| *x *= c);
    }
}

/// Mark factor `rho(u)` of jump coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarkScale {
    #[default]
    One,
    Norm,
}

impl MarkScale {
    pub fn factor(self, u: &[f64]) -> f64 {
        match self {
            MarkScale::One => 1.0,
            MarkScale::Norm => norm(u),
        }
    }
}

pub type FieldFn = Arc<dyn Fn(f64, &Segment) -> Vec<f64> + Send + Sync>;
/// `(t, phi, v) -> g(t, phi) v`, linear in `v`.
pub type DiffusionFn = Arc<dyn Fn(f64, &Segment, &[f64]) -> Vec<f64> + Send + Sync>;
pub type MarkFn = Arc<dyn Fn(f64, &Segment, &[f64]) -> Vec<f64> + Send + Sync>;

/// Coefficient `H`-valued in the segment (`h` and `f`).
#[derive(Clone, Default)]
pub enum Field {
    #[default]
    Zero,
    Linear(Linear),
    Custom { name: String, eval: FieldFn },
}

/// Noise coefficient `g: C -> L(U, H)`; the linear preset is `c(t) Lambda[phi] loading^T`.
#[derive(Clone, Default)]
pub enum Diffusion {
    #[default]
    Zero,
    Linear { linear: Linear, loading: Vec<f64> },
    Custom { name: String, eval: DiffusionFn },
}

/// Jump coefficient (`F` for small marks, `G` for big marks).
#[derive(Clone, Default)]
pub enum MarkField {
    #[default]
    Zero,
    Linear { linear: Linear, scale: MarkScale },
    Custom { name: String, eval: MarkFn },
}

fn check_len(name: &str, v: Vec<f64>, out: &mut [f64]) -> Result<()> {
    if v.len() != out.len() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient `{name}` returned {} components, expected {}",
            v.len(),
            out.len()
        )));
    }
    out.copy_from_slice(&v);
    Ok(())
}

impl Field {
    pub fn linear(profile: TimeProfile, functional: Functional) -> Self {
        Field::Linear(Linear::new(profile, functional))
    }

    pub fn custom(name: &str, eval: impl Fn(f64, &Segment) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Field::Custom {
            name: name.to_string(),
            eval: Arc::new(eval),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Field::Zero)
    }

    pub fn eval_into(&self, t: f64, seg: &Segment, out: &mut [f64]) -> Result<()> {
        match self {
            Field::Zero => {
                out.iter_mut().for_each(|x| *x = 0.0);
                Ok(())
            }
            Field::Linear(l) => {
                l.eval(t, seg, out);
                Ok(())
            }
            Field::Custom { name, eval } => check_len(name, eval(t, seg), out),
        }
    }

    /// Analytic `sup_t Lip^2`, when known.
    pub fn lipschitz_sq(&self) -> Option<f64> {
        match self {
            Field::Zero => Some(0.0),
            Field::Linear(l) => Some(l.profile.sup_abs().powi(2)),
            Field::Custom { .. } => None,
        }
    }

    pub fn profile(&self) -> Option<&TimeProfile> {
        match self {
            Field::Linear(l) => Some(&l.profile),
            _ => None,
        }
    }
}

impl Diffusion {
    pub fn linear(profile: TimeProfile, functional: Functional, loading: Vec<f64>) -> Self {
        Diffusion::Linear {
            linear: Linear::new(profile, functional),
            loading,
        }
    }

    pub fn custom(
        name: &str,
        eval: impl Fn(f64, &Segment, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Diffusion::Custom {
            name: name.to_string(),
            eval: Arc::new(eval),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Diffusion::Zero)
    }

    /// `out = g(t, seg) v`.
    pub fn apply_into(&self, t: f64, seg: &Segment, v: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Diffusion::Zero => {
                out.iter_mut().for_each(|x| *x = 0.0);
                Ok(())
            }
            Diffusion::Linear { linear, loading } => {
                linear.eval(t, seg, out);
                let s: f64 = loading.iter().zip(v).map(|(l, x)| l * x).sum();
                out.iter_mut().for_each(|x| *x *= s);
                Ok(())
            }
            Diffusion::Custom { name, eval } => check_len(name, eval(t, seg, v), out),
        }
    }

    /// `||g(t, seg) Q^{1/2}||_F^2`, computed column by column.
    pub fn q_norm_sq(&self, t: f64, seg: &Segment, q_diag: &[f64], h_dim: usize) -> Result<f64> {
        let mut total = 0.0;
        let mut e = vec![0.0; q_diag.len()];
        let mut out = vec![0.0; h_dim];
        for (k, q) in q_diag.iter().enumerate() {
            if *q == 0.0 {
                continue;
            }
            e.iter_mut().for_each(|x| *x = 0.0);
            e[k] = q.sqrt();
            self.apply_into(t, seg, &e, &mut out)?;
            total += out.iter().map(|x| x * x).sum::<f64>();
        }
        Ok(total)
    }

    pub fn lipschitz_sq(&self, q_diag: &[f64]) -> Option<f64> {
        match self {
            Diffusion::Zero => Some(0.0),
            Diffusion::Linear { linear, loading } => {
                let w: f64 = loading.iter().zip(q_diag).map(|(l, q)| l * l * q).sum();
                Some(linear.profile.sup_abs().powi(2) * w)
            }
            Diffusion::Custom { .. } => None,
        }
    }

    pub fn profile(&self) -> Option<&TimeProfile> {
        match self {
            Diffusion::Linear { linear, .. } => Some(&linear.profile),
            _ => None,
        }
    }
}

impl MarkField {
    pub fn linear(profile: TimeProfile, functional: Functional, scale: MarkScale) -> Self {
        MarkField::Linear {
            linear: Linear::new(profile, functional),
            scale,
        }
    }

    pub fn custom(
        name: &str,
        eval: impl Fn(f64, &Segment, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        MarkField::Custom {
            name: name.to_string(),
            eval: Arc::new(eval),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MarkField::Zero)
    }

    pub fn eval_into(&self, t: f64, seg: &Segment, u: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            MarkField::Zero => {
                out.iter_mut().for_each(|x| *x = 0.0);
                Ok(())
            }
            MarkField::Linear { linear, scale } => {
                linear.eval(t, seg, out);
                let r = scale.factor(u);
                out.iter_mut().for_each(|x| *x *= r);
                Ok(())
            }
            MarkField::Custom { name, eval } => check_len(name, eval(t, seg, u), out),
        }
    }

    /// Analytic `sup_t sum_k rate_k Lip^2` over the atoms on one side of
    /// the unit threshold.
    pub fn lipschitz_sq(&self, noise: &LevySpec, big: bool) -> Option<f64> {
        match self {
            MarkField::Zero => Some(0.0),
            MarkField::Linear { linear, scale } => {
                let w: f64 = noise
                    .atoms
                    .iter()
                    .filter(|a| a.is_big() == big)
                    .map(|a| a.rate * scale.factor(&a.mark).powi(2))
                    .sum();
                Some(linear.profile.sup_abs().powi(2) * w)
            }
            MarkField::Custom { .. } => None,
        }
    }

    pub fn profile(&self) -> Option<&TimeProfile> {
        match self {
            MarkField::Linear { linear, .. } => Some(&linear.profile),
            _ => None,
        }
    }
}

macro_rules! debug_coefficient {
    ($ty:ident) => {
        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self {
                    $ty::Zero => write!(f, "Zero"),
                    $ty::Custom { name, .. } => write!(f, "Custom({name})"),
                    other => write!(f, "{}", other.describe()),
                }
            }
        }
    };
}

impl Field {
    fn describe(&self) -> String {
        match self {
            Field::Linear(l) => format!("Linear({:?}, {:?})", l.functional, l.profile),
            _ => String::new(),
        }
    }
}

impl Diffusion {
    fn describe(&self) -> String {
        match self {
            Diffusion::Linear { linear, loading } => {
                format!("Linear({:?}, {:?}, loading {loading:?})", linear.functional, linear.profile)
            }
            _ => String::new(),
        }
    }
}

impl MarkField {
    fn describe(&self) -> String {
        match self {
            MarkField::Linear { linear, scale } => {
                format!("Linear({:?}, {:?}, {scale:?})", linear.functional, linear.profile)
            }
            _ => String::new(),
        }
    }
}

debug_coefficient!(Field);
debug_coefficient!(Diffusion);
debug_coefficient!(MarkField);

/// All five coefficients with their declared constants.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub h: Field,
    pub f: Field,
    pub g: Diffusion,
    pub small_jump: MarkField,
    pub big_jump: MarkField,
    pub k0: f64,
    pub lipschitz: f64,
    pub sap_omega: f64,
}

impl CoefficientSet {
    /// All coefficients zero.
    pub fn zero(k0: f64, lipschitz: f64, sap_omega: f64) -> Self {
        CoefficientSet {
            h: Field::Zero,
            f: Field::Zero,
            g: Diffusion::Zero,
            small_jump: MarkField::Zero,
            big_jump: MarkField::Zero,
            k0,
            lipschitz,
            sap_omega,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.h.is_zero()
            && self.f.is_zero()
            && self.g.is_zero()
            && self.small_jump.is_zero()
            && self.big_jump.is_zero()
    }

    pub fn profiles(&self) -> Vec<(&'static str, &TimeProfile)> {
        let mut out = Vec::new();
        for (name, p) in [
            ("h", self.h.profile()),
            ("f", self.f.profile()),
            ("g", self.g.profile()),
            ("small_jump", self.small_jump.profile()),
            ("big_jump", self.big_jump.profile()),
        ] {
            if let Some(p) = p {
                out.push((name, p));
            }
        }
        out
    }
}
