//! JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use svelab_core::analytic::AppendixSettings;
use svelab_core::engine::{DiagonalKernel, DiffusionField, DriftField, ModelSpec, SingularCellMode};
use svelab_core::kernels::{KernelComponent, Perturbation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Rate,
    Qv,
    Psi,
    LimitLaw,
    KernelCheck,
    AppendixCheck,
    Holder,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Simulate,
        Experiment::Rate,
        Experiment::Qv,
        Experiment::Psi,
        Experiment::LimitLaw,
        Experiment::KernelCheck,
        Experiment::AppendixCheck,
        Experiment::Holder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Rate => "rate",
            Experiment::Qv => "qv",
            Experiment::Psi => "psi",
            Experiment::LimitLaw => "limit-law",
            Experiment::KernelCheck => "kernel-check",
            Experiment::AppendixCheck => "appendix-check",
            Experiment::Holder => "holder",
        }
    }

    fn needs_model(self) -> bool {
        !matches!(self, Experiment::KernelCheck | Experiment::AppendixCheck)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub x0: Vec<f64>,
    /// Brownian dimension; defaults to the state dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub drift: DriftField,
    pub diffusion: DiffusionField,
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.x0.clone(), self.m.unwrap_or(self.x0.len()), self.drift.clone(), self.diffusion.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "zero_perturbation")]
    pub perturbation: Perturbation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst_hat: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn zero_perturbation() -> Perturbation {
    Perturbation::Zero
}

/// Kernel shared roughness plus per-component data; a single component is
/// replicated to the model dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub components: Vec<ComponentConfig>,
}

impl KernelConfig {
    pub fn build(&self, d: usize) -> svelab_core::Result<DiagonalKernel> {
        let mut comps = self
            .components
            .iter()
            .map(|c| match c.hurst_hat {
                Some(hat) => KernelComponent::with_hurst_hat(c.c, self.h, c.perturbation, hat),
                None => KernelComponent::new(c.c, self.h, c.perturbation),
            })
            .collect::<svelab_core::Result<Vec<_>>>()?;
        if comps.len() == 1 && d > 1 {
            comps = vec![comps[0]; d];
        }
        match self.alpha {
            Some(a) => DiagonalKernel::with_alpha(comps, a),
            None => DiagonalKernel::new(comps),
        }
    }
}

/// Optional overrides of the default pass thresholds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance of QV estimate against theory (default 0.10).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qv_relative: Option<f64>,
    /// Allowed `|slope + H|` in rate studies (default 0.10).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_slope: Option<f64>,
    /// Pathwise bound on the ψ identity residual (default 1e-8).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_identity: Option<f64>,
    /// Relative variance difference in limit-law comparisons (default 0.15).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_variance: Option<f64>,
    /// Slope tolerance of the kernel checks (default 0.05).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_slope: Option<f64>,
    /// Required ratio of cross-variation L¹ norms, last over first `n` (default 1, i.e. decrease).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub n_sequence: Vec<usize>,
    #[serde(rename = "M", default = "default_refinement")]
    pub refinement: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Size of the limit ensemble in limit-law runs; defaults to `paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths_limit: Option<usize>,
    /// Fine steps of the limit solver; defaults to `n·M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_steps: Option<usize>,
    #[serde(rename = "T", default = "one")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_eval: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub allow_unbounded: bool,
    #[serde(default)]
    pub mode: SingularCellMode,
    /// Moment order of the Hölder study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appendix: Option<AppendixSettings>,
}

fn default_refinement() -> usize {
    16
}

fn default_paths() -> usize {
    1000
}

/// Configuration error naming the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the field path of the first error.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<root>".to_string() } else { path };
            ConfigError::new(path, e.into_inner().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        self.model
            .as_ref()
            .map(ModelConfig::spec)
            .ok_or_else(|| ConfigError::new("model", format!("required for experiment {}", self.experiment)))
    }

    pub fn kernel(&self) -> Result<DiagonalKernel, ConfigError> {
        let k = self
            .kernel
            .as_ref()
            .ok_or_else(|| ConfigError::new("kernel", format!("required for experiment {}", self.experiment)))?;
        let d = self.model.as_ref().map_or(k.components.len(), |m| m.x0.len());
        k.build(d).map_err(|e| ConfigError::new("kernel", e.to_string()))
    }

    pub fn t_eval(&self) -> f64 {
        self.t_eval.unwrap_or(self.horizon)
    }

    /// Semantic checks beyond the JSON shape.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::new("T", format!("must be positive, got {}", self.horizon)));
        }
        if let Some(t) = self.t_eval {
            if !(t > 0.0 && t <= self.horizon) {
                return Err(ConfigError::new("t_eval", format!("must lie in (0, T], got {t}")));
            }
        }
        for (i, w) in self.n_sequence.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(ConfigError::new(
                    format!("n_sequence[{}]", i + 1),
                    format!("must exceed the previous entry {} (got {})", w[0], w[1]),
                ));
            }
        }
        if let Some(i) = self.n_sequence.iter().position(|&n| n == 0) {
            return Err(ConfigError::new(format!("n_sequence[{i}]"), "must be positive"));
        }
        if self.refinement == 0 {
            return Err(ConfigError::new("M", "must be positive"));
        }
        if self.paths == 0 {
            return Err(ConfigError::new("paths", "must be positive"));
        }
        if let Some(p) = self.p {
            if p != 2 && p != 4 {
                return Err(ConfigError::new("p", format!("must be 2 or 4, got {p}")));
            }
        }
        let needs_n = matches!(
            self.experiment,
            Experiment::Simulate
                | Experiment::Rate
                | Experiment::Qv
                | Experiment::Psi
                | Experiment::LimitLaw
                | Experiment::Holder
        );
        if needs_n && self.n_sequence.is_empty() {
            return Err(ConfigError::new("n_sequence", format!("required for experiment {}", self.experiment)));
        }
        if self.experiment == Experiment::Rate && self.n_sequence.len() < 4 {
            return Err(ConfigError::new("n_sequence", "rate studies need at least 4 entries"));
        }
        if self.experiment == Experiment::Rate && self.refinement < 16 {
            return Err(ConfigError::new("M", "rate studies need M >= 16"));
        }
        if self.experiment.needs_model() {
            let model = self.model_spec()?;
            model.validate(self.allow_unbounded).map_err(|e| ConfigError::new("model", e.to_string()))?;
            let kernel = self.kernel()?;
            if kernel.dim() != model.d {
                return Err(ConfigError::new(
                    "kernel.components",
                    format!("{} components for a model of dimension {}", kernel.dim(), model.d),
                ));
            }
        } else if self.experiment == Experiment::KernelCheck {
            self.kernel()?;
        }
        if let Some(app) = &self.appendix {
            if let Some(i) = app.alphas.iter().position(|a| a.is_nan() || a.abs() >= 0.5) {
                return Err(ConfigError::new(format!("appendix.alphas[{i}]"), "must lie in (-1/2, 1/2)"));
            }
        }
        Ok(())
    }
}

/// A minimal classical configuration, used by docs and tests.
pub fn example_config(experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        model: Some(ModelConfig {
            x0: vec![0.0],
            m: None,
            drift: DriftField::Zero,
            diffusion: DiffusionField::AffineTrig { a: vec![2.0], b: vec![1.0] },
        }),
        kernel: Some(KernelConfig {
            h: 0.5,
            alpha: None,
            components: vec![ComponentConfig { c: 1.0, perturbation: Perturbation::Zero, hurst_hat: None }],
        }),
        n_sequence: vec![16, 32, 64, 128],
        refinement: 16,
        paths: 100,
        paths_limit: None,
        limit_steps: None,
        horizon: 1.0,
        t_eval: None,
        master_seed: 1,
        output_dir: None,
        tolerances: Tolerances::default(),
        allow_unbounded: false,
        mode: SingularCellMode::CellAverage,
        p: None,
        appendix: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for e in Experiment::ALL {
            let c = example_config(e);
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
    }

    #[test]
    fn errors_name_the_field() {
        let text = r#"{"experiment":"qv","model":{"x0":[0.0],"drift":{"family":"zero"},"diffusion":{"family":"bogus"}}}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(err.path.starts_with("model.diffusion"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"experiment":"qv","pathz":3}"#).unwrap_err();
        assert!(err.message.contains("pathz"), "{err}");
        let mut c = example_config(Experiment::Rate);
        c.n_sequence = vec![4, 8, 8, 16];
        assert_eq!(c.validate().unwrap_err().path, "n_sequence[2]");
        c.n_sequence = vec![4, 8, 16, 32];
        c.horizon = -1.0;
        assert_eq!(c.validate().unwrap_err().path, "T");
    }

    #[test]
    fn unbounded_family_needs_the_flag() {
        let mut c = example_config(Experiment::Simulate);
        c.model.as_mut().unwrap().diffusion = DiffusionField::Linear { a: vec![0.5] };
        assert_eq!(c.validate().unwrap_err().path, "model");
        c.allow_unbounded = true;
        c.validate().unwrap();
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut c = example_config(Experiment::Qv);
        c.kernel.as_mut().unwrap().components.push(ComponentConfig {
            c: 1.0,
            perturbation: Perturbation::Zero,
            hurst_hat: None,
        });
        assert_eq!(c.validate().unwrap_err().path, "kernel.components");
    }
}
