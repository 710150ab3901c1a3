//! Pipeline configuration: one JSON file, every field optional, with
//! defaults identical to the module defaults.  Command-line flags
//! override single fields on top of the loaded file.

use std::fs;
use std::path::Path;

use celltrack_core::dml::{DmlConfig, DML_DIM};
use celltrack_core::gnn::{GnnConfig, GnnTrainConfig};
use celltrack_core::synth::{desk_preset, high_motion_preset, SynthConfig};
use celltrack_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stochastic component derives from it.
    pub seed: u64,
    /// Gate multiplier for the candidate neighborhood.
    pub gate_alpha: f64,
    pub dml: DmlSection,
    pub gnn: GnnSection,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            gate_alpha: 2.0,
            dml: DmlSection::default(),
            gnn: GnnSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {}", path.display(), e)))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
    }

    /// Loads the given file or falls back to all defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmlSection {
    pub kappa: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub lr_trunk: f64,
    pub lr_head: f64,
    pub weight_decay: f64,
}

impl Default for DmlSection {
    fn default() -> Self {
        let d = DmlConfig::default();
        DmlSection {
            kappa: d.kappa,
            m: d.m,
            alpha: d.alpha,
            beta: d.beta,
            lambda: d.lambda,
            epsilon: d.epsilon,
            steps: d.steps,
            lr_trunk: d.lr_trunk,
            lr_head: d.lr_head,
            weight_decay: d.weight_decay,
        }
    }
}

impl DmlSection {
    pub fn to_config(&self) -> DmlConfig {
        DmlConfig {
            kappa: self.kappa,
            m: self.m,
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            epsilon: self.epsilon,
            steps: self.steps,
            lr_trunk: self.lr_trunk,
            lr_head: self.lr_head,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub blocks: usize,
    pub d_v: usize,
    pub d_e: usize,
    pub classifier_hidden: [usize; 2],
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub window: usize,
    pub stride: usize,
    pub joint_dml: bool,
    pub joint_dml_lr: f64,
}

impl Default for GnnSection {
    fn default() -> Self {
        let arch = GnnConfig::default();
        let train = GnnTrainConfig::default();
        GnnSection {
            blocks: arch.blocks,
            d_v: arch.d_v,
            d_e: arch.d_e,
            classifier_hidden: [arch.classifier_hidden.0, arch.classifier_hidden.1],
            lr: train.lr,
            weight_decay: train.weight_decay,
            epochs: train.epochs,
            window: train.window,
            stride: train.stride,
            joint_dml: train.joint_dml,
            joint_dml_lr: train.joint_dml_lr,
        }
    }
}

impl GnnSection {
    /// Architecture for the given input widths.
    pub fn arch(&self, st_width: usize) -> GnnConfig {
        GnnConfig {
            d_v: self.d_v,
            d_e: self.d_e,
            blocks: self.blocks,
            classifier_hidden: (self.classifier_hidden[0], self.classifier_hidden[1]),
            st_width,
            dml_dim: DML_DIM,
        }
    }

    pub fn train(&self) -> GnnTrainConfig {
        GnnTrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            window: self.window,
            stride: self.stride,
            joint_dml: self.joint_dml,
            joint_dml_lr: self.joint_dml_lr,
        }
    }
}

/// Overrides applied on top of a named preset; `None` keeps the preset
/// value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub frames: Option<usize>,
    pub initial_cells: Option<usize>,
    pub division_prob: Option<f64>,
    pub exit_prob: Option<f64>,
    pub entry_prob: Option<f64>,
    pub step_sigma: Option<f64>,
    pub drift_max: Option<f64>,
    pub radius_min: Option<f64>,
    pub radius_max: Option<f64>,
    pub intensity_drift: Option<f64>,
    pub allow_overlap: Option<bool>,
    pub maxval: Option<u16>,
}

impl SynthSection {
    pub fn apply(&self, cfg: &mut SynthConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(
            height,
            width,
            frames,
            initial_cells,
            division_prob,
            exit_prob,
            entry_prob,
            step_sigma,
            drift_max,
            radius_min,
            radius_max,
            intensity_drift,
            allow_overlap,
            maxval
        );
    }
}

pub fn preset(name: &str, seed: u64) -> Result<SynthConfig> {
    match name {
        "desk" => Ok(desk_preset(seed)),
        "high-motion" => Ok(high_motion_preset(seed)),
        other => Err(Error::config(format!(
            "unknown preset `{}` (expected `desk` or `high-motion`)",
            other
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_module_defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.dml.to_config().kappa, DmlConfig::default().kappa);
        assert_eq!(cfg.gnn.train().lr, GnnTrainConfig::default().lr);
        assert_eq!(cfg.gnn.arch(13), GnnConfig::default());
        assert_eq!(cfg.gate_alpha, 2.0);
    }

    #[test]
    fn partial_file_overrides_only_named_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 99, "gnn": {"epochs": 3}}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.gnn.epochs, 3);
        assert_eq!(cfg.gnn.lr, GnnTrainConfig::default().lr);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, "{\n  \"sede\": 1\n}").unwrap();
        let err = PipelineConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("cfg.json:2"), "{}", err);
    }

    #[test]
    fn synth_overrides_apply() {
        let mut cfg = desk_preset(1);
        let section = SynthSection { frames: Some(5), step_sigma: Some(9.5), ..Default::default() };
        section.apply(&mut cfg);
        assert_eq!(cfg.frames, 5);
        assert_eq!(cfg.step_sigma, 9.5);
        assert_eq!(cfg.initial_cells, desk_preset(1).initial_cells);
    }
}
