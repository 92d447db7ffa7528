//! Experiment configuration: a TOML file with sections `[kernel]`,
//! `[lattice]`, `[experiment]`, `[quadrature]` and `[output]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::numerics::QuadratureSettings;
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSection {
    #[serde(flatten)]
    pub family: KernelFamily,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "two")]
    pub p: f64,
    /// Declared `α`; the family default when absent.
    #[serde(default)]
    pub decay_rate: Option<f64>,
    /// Declared `C`; fitted on the working box when absent.
    #[serde(default)]
    pub decay_amplitude: Option<f64>,
    /// Multiplier applied to `C` after fitting or declaration.
    #[serde(default = "unit")]
    pub decay_amplitude_scale: f64,
    #[serde(default = "twelve")]
    pub working_half_width: f64,
    #[serde(default)]
    pub fit_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    #[serde(default = "twelve")]
    pub half_width: f64,
    /// Gap `η`; `1/n` when absent.
    #[serde(default)]
    pub gap: Option<f64>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection { half_width: 12.0, gap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Side `R` of `C_R`.
    pub side: f64,
    pub delta: f64,
    pub mu: f64,
    /// Sample count `r`.
    pub samples: usize,
    pub trials: usize,
    pub functions_per_trial: usize,
    pub seed: u64,
    /// Sample counts of the sweep; no sweep when empty.
    pub sweep_samples: Vec<usize>,
    pub mu_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub truncation_eps: Vec<f64>,
    pub truncation_members: usize,
    pub frame_trials: usize,
    pub verify_members: usize,
    pub moment_pairs: usize,
    pub moment_draws: usize,
    pub decay_pairs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            side: 4.0,
            delta: 0.2,
            mu: 0.5,
            samples: 256,
            trials: 200,
            functions_per_trial: 1,
            seed: 20_240_601,
            sweep_samples: Vec::new(),
            mu_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            eps_grid: vec![0.5, 0.25, 0.1],
            truncation_eps: Vec::new(),
            truncation_members: 20,
            frame_trials: 200,
            verify_members: 10,
            moment_pairs: 5,
            moment_draws: 10_000,
            decay_pairs: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub cells_per_unit: usize,
    pub order: usize,
    pub truncation_half_width: f64,
    pub cube_grid_points: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let s = QuadratureSettings::<f64>::default();
        QuadratureSection {
            cells_per_unit: s.cells_per_unit,
            order: s.order,
            truncation_half_width: s.truncation_half_width,
            cube_grid_points: s.cube_grid_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir() }
    }
}

fn one() -> usize {
    1
}
fn two() -> f64 {
    2.0
}
fn unit() -> f64 {
    1.0
}
fn twelve() -> f64 {
    12.0
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn field_error(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {message}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Field-level checks; `α` against its threshold is left to kernel construction.
    pub fn validate(&self) -> Result<()> {
        let k = &self.kernel;
        if !(1..=2).contains(&k.dim) {
            return Err(field_error("kernel.dim", format!("must be 1 or 2, got {}", k.dim)));
        }
        if !(k.p > 1.0 && k.p.is_finite()) {
            return Err(field_error("kernel.p", format!("must lie in (1, ∞), got {}", k.p)));
        }
        if let Some(c) = k.decay_amplitude {
            if !(c > 0.0 && c.is_finite()) {
                return Err(field_error("kernel.decay_amplitude", "must be positive"));
            }
        }
        if !(k.decay_amplitude_scale > 0.0 && k.decay_amplitude_scale.is_finite()) {
            return Err(field_error("kernel.decay_amplitude_scale", "must be positive"));
        }
        if !(k.working_half_width > 0.0) {
            return Err(field_error("kernel.working_half_width", "must be positive"));
        }
        let l = &self.lattice;
        if !(l.half_width >= 0.0) {
            return Err(field_error("lattice.half_width", "must be non-negative"));
        }
        if let Some(g) = l.gap {
            let limit = 2.0 / k.dim as f64;
            if !(g > 0.0 && g < limit) {
                return Err(field_error("lattice.gap", format!("must lie in (0, 2/n = {limit}), got {g}")));
            }
        }
        let e = &self.experiment;
        if !(e.side > 0.0 && e.side.is_finite()) {
            return Err(field_error("experiment.side", "R must be positive"));
        }
        if !(e.delta > 0.0 && e.delta < 1.0) {
            return Err(field_error("experiment.delta", format!("δ must lie in (0, 1), got {}", e.delta)));
        }
        let mu_ok = |mu: f64| mu > 0.0 && mu < 1.0 - e.delta;
        if !mu_ok(e.mu) {
            return Err(field_error(
                "experiment.mu",
                format!("μ must lie in (0, 1 - δ = {}), got {}", 1.0 - e.delta, e.mu),
            ));
        }
        if let Some(bad) = e.mu_grid.iter().find(|m| !(**m > 0.0)) {
            return Err(field_error("experiment.mu_grid", format!("μ = {bad} must be positive")));
        }
        for (name, v) in [
            ("experiment.samples", e.samples),
            ("experiment.trials", e.trials),
            ("experiment.functions_per_trial", e.functions_per_trial),
            ("experiment.frame_trials", e.frame_trials),
            ("experiment.moment_draws", e.moment_draws),
            ("experiment.decay_pairs", e.decay_pairs),
        ] {
            if v == 0 {
                return Err(field_error(name, "must be at least 1"));
            }
        }
        if e.sweep_samples.contains(&0) {
            return Err(field_error("experiment.sweep_samples", "sample counts must be at least 1"));
        }
        if e.eps_grid.iter().chain(&e.truncation_eps).any(|x| !(*x > 0.0)) {
            return Err(field_error("experiment.eps_grid", "ε values must be positive"));
        }
        let q = &self.quadrature;
        if q.cells_per_unit == 0 || q.order == 0 || q.cube_grid_points < 2 {
            return Err(field_error("quadrature", "cells_per_unit and order must be positive, cube_grid_points at least 2"));
        }
        if !(q.truncation_half_width > 0.0) {
            return Err(field_error("quadrature.truncation_half_width", "must be positive"));
        }
        Ok(())
    }

    pub fn quadrature_settings<T: Real>(&self) -> QuadratureSettings<T> {
        QuadratureSettings {
            cells_per_unit: self.quadrature.cells_per_unit,
            order: self.quadrature.order,
            truncation_half_width: lit(self.quadrature.truncation_half_width),
            cube_grid_points: self.quadrature.cube_grid_points,
        }
    }

    pub fn decay_rate(&self) -> f64 {
        self.kernel
            .decay_rate
            .unwrap_or_else(|| KernelFamily::default_decay_rate(self.kernel.dim))
    }

    pub fn gap(&self) -> f64 {
        self.lattice.gap.unwrap_or(1.0 / self.kernel.dim as f64)
    }

    /// Canonical JSON of the effective configuration (keys sorted, defaults filled in, output section dropped).
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("configuration serialises");
        // where results land does not change what is computed
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        serde_json::to_string(&value).expect("json value serialises")
    }

    /// SHA-256 of [`ExperimentConfig::canonical_json`], hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical_json().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[kernel]\nfamily = \"hermite\"\nrank = 5\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.kernel.family, KernelFamily::Hermite { rank: 5 });
        assert_eq!(c.kernel.dim, 1);
        assert_eq!(c.experiment.delta, 0.2);
        assert_eq!(c.decay_rate(), 4.0);
        assert_eq!(c.gap(), 1.0);
    }

    #[test]
    fn digest_ignores_key_order() {
        let a = "[experiment]\nside = 4.0\ndelta = 0.1\n[kernel]\nrank = 5\nfamily = \"hermite\"\n";
        let b = "[kernel]\nfamily = \"hermite\"\nrank = 5\n[experiment]\ndelta = 0.1\nside = 4.0\n";
        let ca = ExperimentConfig::from_toml_str(a).unwrap();
        let cb = ExperimentConfig::from_toml_str(b).unwrap();
        assert_eq!(ca.digest(), cb.digest());
        assert_eq!(ca.digest().len(), 64);
        let other = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_ne!(ca.digest(), other.digest());
    }

    #[test]
    fn digest_ignores_output_dir() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn delta_one_names_the_field() {
        let text = format!("{MINIMAL}[experiment]\ndelta = 1.0\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("experiment.delta")), "{err}");
    }

    #[test]
    fn mu_must_leave_room_for_delta() {
        let text = format!("{MINIMAL}[experiment]\ndelta = 0.5\nmu = 0.6\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(m)) if m.contains("experiment.mu")));
    }

    #[test]
    fn missing_family_is_a_config_error() {
        let err = ExperimentConfig::from_toml_str("[kernel]\nrank = 5\n").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("family")));
    }

    #[test]
    fn syntax_errors_report_a_line() {
        let err = ExperimentConfig::from_toml_str("[kernel]\nfamily = \n").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("line")));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!("{MINIMAL}[experiment]\nsamplez = 3\n");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn other_families_parse() {
        let c = ExperimentConfig::from_toml_str("[kernel]\nfamily = \"spline\"\nlattice_half_width = 6\n").unwrap();
        assert_eq!(c.kernel.family, KernelFamily::Spline { lattice_half_width: 6 });
        let c = ExperimentConfig::from_toml_str("[kernel]\nfamily = \"rank_one_gaussian\"\nscale = 2.0\n").unwrap();
        assert_eq!(c.kernel.family, KernelFamily::RankOneGaussian { scale: 2.0 });
    }
}
