//! TOML run configuration: parsing, defaults, validation and conversion into
//! library types. A `manifest.json` written by a previous run is accepted in
//! place of a TOML file; its echoed configuration is used.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientSet, Diffusion, Field, Functional, MarkField, MarkScale, TimeProfile};
use crate::error::{Error, Result};
use crate::model::{InitialSegment, ModelSpec};
use crate::noise::{JumpAtom, LevySpec};
use crate::operator::SectorialSpec;
use crate::periodicity::AnalysisConfig;
use crate::solver::{grid_multiple, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operator: OperatorConfig,
    pub noise: NoiseConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub coefficients: CoefficientsConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub run: RunSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub alpha: f64,
    /// Scalar operator `A = a`; exclusive with `eigenvalues`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    /// Eigenvector matrix given by rows; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    /// Sector type; defaults to the largest eigenvalue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Sector angle; defaults to half the admissible maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub m: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Defaults to the length of `q_diag`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    pub q_diag: Vec<f64>,
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub mark: Vec<f64>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub tau: f64,
    pub omega: f64,
    pub phi: InitialSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    #[serde(default = "default_k0")]
    pub k0: f64,
    #[serde(default = "one")]
    pub lipschitz: f64,
    /// Defaults to `model.omega`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sap_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<PresetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<PresetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<PresetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_jump: Option<PresetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_jump: Option<PresetConfig>,
}

fn default_k0() -> f64 {
    0.5
}

impl Default for CoefficientsConfig {
    fn default() -> Self {
        CoefficientsConfig {
            k0: default_k0(),
            lipschitz: 1.0,
            sap_omega: None,
            h: None,
            f: None,
            g: None,
            small_jump: None,
            big_jump: None,
        }
    }
}

/// One preset `c(t) Lambda[phi]`; `loading` only for `g`, `mark_scale` only
/// for the jump coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetConfig {
    pub functional: Functional,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default)]
    pub decay: f64,
    #[serde(default = "one")]
    pub power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loading: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mark_scale: Option<MarkScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub validation_samples: usize,
}

fn default_paths() -> usize {
    100
}

fn default_samples() -> usize {
    1000
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            paths: default_paths(),
            seed: 0,
            validation_samples: default_samples(),
        }
    }
}

/// Library objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: ModelSpec,
    pub solver: SolverConfig,
    pub analysis: AnalysisConfig,
}

pub fn load_config(path: &Path) -> Result<Resolved> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: format!("cannot read: {e}"),
    })?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let config = if is_json {
        parse_manifest_config(&text).map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })?
    } else {
        parse_toml(&text).map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })?
    };
    resolve(config).map_err(|e| match e {
        Error::Validation { field, reason } => Error::Config {
            path: path.to_path_buf(),
            message: format!("`{field}`: {reason}"),
        },
        other => Error::Config {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Parses TOML; errors carry line and column.
pub fn parse_toml(text: &str) -> std::result::Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
}

fn parse_manifest_config(text: &str) -> std::result::Result<RunConfig, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let config = value
        .get("config")
        .cloned()
        .ok_or_else(|| "manifest has no `config` entry".to_string())?;
    serde_json::from_value(config).map_err(|e| e.to_string())
}

/// Fills defaults into the echoed configuration and builds the library
/// objects; rejects out-of-range constants and misaligned grids.
pub fn resolve(mut config: RunConfig) -> Result<Resolved> {
    let op = &mut config.operator;
    let eigenvalues = match (&op.scalar, &op.eigenvalues) {
        (Some(a), None) => vec![*a],
        (None, Some(v)) if !v.is_empty() => v.clone(),
        (Some(_), Some(_)) => {
            return Err(Error::validation("operator", "give either `scalar` or `eigenvalues`, not both"))
        }
        _ => return Err(Error::validation("operator", "missing `scalar` or `eigenvalues`")),
    };
    if eigenvalues.iter().any(|a| !a.is_finite()) {
        return Err(Error::validation("operator.eigenvalues", "must be finite"));
    }
    if !(op.alpha > 1.0 && op.alpha <= 2.0) {
        return Err(Error::validation("operator.alpha", "must lie in (1, 2]"));
    }
    let mu = *op
        .mu
        .get_or_insert_with(|| eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let max_theta = std::f64::consts::PI * (1.0 - op.alpha / 2.0);
    let theta = *op.theta.get_or_insert(0.5 * max_theta);
    let d = eigenvalues.len();
    let mut sectorial = SectorialSpec::diagonal(op.alpha, eigenvalues, mu, theta, op.c, op.m);
    if let Some(rows) = &op.basis {
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(Error::validation("operator.basis", format!("must be {d} x {d}")));
        }
        sectorial = sectorial.with_basis(DMatrix::from_fn(d, d, |i, j| rows[i][j]));
    }
    if !(mu < 0.0) {
        return Err(Error::validation("operator.mu", "sector type must be negative"));
    }
    if !(op.m > 0.0 && op.c > 0.0) {
        return Err(Error::validation("operator", "C and M must be positive"));
    }

    let nz = &mut config.noise;
    let u_dim = *nz.dim.get_or_insert(nz.q_diag.len());
    let drift = nz.drift.get_or_insert_with(|| vec![0.0; u_dim]).clone();
    let noise = LevySpec {
        dim: u_dim,
        drift,
        q_diag: nz.q_diag.clone(),
        atoms: nz
            .atoms
            .iter()
            .map(|a| JumpAtom::new(a.mark.clone(), a.rate))
            .collect(),
    };
    noise.validate()?;

    let cc = &mut config.coefficients;
    if !(cc.k0 > 0.0 && cc.k0 < 1.0) {
        return Err(Error::validation(
            "coefficients.k0",
            format!("neutral Lipschitz constant {} must lie in (0, 1)", cc.k0),
        ));
    }
    if !(cc.lipschitz > 0.0 && cc.lipschitz.is_finite()) {
        return Err(Error::validation("coefficients.lipschitz", "must be positive and finite"));
    }
    let sap_omega = *cc.sap_omega.get_or_insert(config.model.omega);
    let period = sap_omega;
    let profile = |p: &mut PresetConfig| {
        let per = *p.period.get_or_insert(period);
        TimeProfile {
            constant: p.constant,
            cos: p.cos.clone(),
            sin: p.sin.clone(),
            period: per,
            decay: p.decay,
            power: p.power,
        }
    };
    let no_extras = |name: &str, p: &PresetConfig, loading: bool, mark: bool| -> Result<()> {
        if p.loading.is_some() && !loading {
            return Err(Error::validation(format!("coefficients.{name}.loading"), "only `g` takes a loading"));
        }
        if p.mark_scale.is_some() && !mark {
            return Err(Error::validation(
                format!("coefficients.{name}.mark_scale"),
                "only jump coefficients take a mark scale",
            ));
        }
        Ok(())
    };
    let field = |name: &str, p: &mut Option<PresetConfig>| -> Result<Field> {
        Ok(match p {
            None => Field::Zero,
            Some(p) => {
                no_extras(name, p, false, false)?;
                Field::linear(profile(p), p.functional)
            }
        })
    };
    let h = field("h", &mut cc.h)?;
    let f = field("f", &mut cc.f)?;
    let g = match &mut cc.g {
        None => Diffusion::Zero,
        Some(p) => {
            no_extras("g", p, true, false)?;
            let loading = p.loading.get_or_insert_with(|| vec![1.0; u_dim]).clone();
            Diffusion::linear(profile(p), p.functional, loading)
        }
    };
    let mark = |name: &str, p: &mut Option<PresetConfig>| -> Result<MarkField> {
        Ok(match p {
            None => MarkField::Zero,
            Some(p) => {
                no_extras(name, p, false, true)?;
                let scale = *p.mark_scale.get_or_insert(MarkScale::One);
                MarkField::linear(profile(p), p.functional, scale)
            }
        })
    };
    let small_jump = mark("small_jump", &mut cc.small_jump)?;
    let big_jump = mark("big_jump", &mut cc.big_jump)?;
    let coefficients = CoefficientSet {
        h,
        f,
        g,
        small_jump,
        big_jump,
        k0: cc.k0,
        lipschitz: cc.lipschitz,
        sap_omega,
    };

    let model = ModelSpec {
        sectorial,
        noise,
        tau: config.model.tau,
        omega: config.model.omega,
        phi: config.model.phi.clone(),
        coefficients,
    };
    model.validate_structure()?;
    let solver = config.solver.clone();
    solver.validate()?;
    let m = grid_multiple("model.tau", model.tau, solver.step)?;
    grid_multiple("model.omega", model.omega, solver.step)?;
    model.phi.on_grid(m, solver.step)?;
    if config.run.paths == 0 {
        return Err(Error::validation("run.paths", "must be at least 1"));
    }
    let analysis = config.analysis.clone();
    for &t in &analysis.checkpoints {
        if t < 0.0 || t + model.omega > solver.horizon * (1.0 + 1e-12) {
            return Err(Error::validation(
                "analysis.checkpoints",
                format!("checkpoint {t} plus omega exceeds the horizon {}", solver.horizon),
            ));
        }
        grid_multiple("analysis.checkpoints", t.max(solver.step), solver.step)?;
    }
    Ok(Resolved {
        config,
        model,
        solver,
        analysis,
    })
}
