//! Run configuration: one JSON document plus CLI flag overrides (flags win).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::rotation::{self, RotationSet, RotationSetFile, UnitVector};
use crate::sphere::{MeasurableSet, MeasurableSetFile, SpherePartition};

/// Where the generator rotations come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorSpec {
    Preset { preset: String },
    File { file: PathBuf },
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::Preset {
            preset: "arccos35".into(),
        }
    }
}

/// A set definition: a spherical cap (by measure or radius) or a mask file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetSpec {
    Cap { cap: CapSpec },
    Mask { mask: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapSpec {
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

/// Full pipeline configuration. Optional fields (`eta`, `epsilon`,
/// `mc_samples`) are derived from the run when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub generators: GeneratorSpec,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_set_a")]
    pub set_a: SetSpec,
    #[serde(default = "default_set_b")]
    pub set_b: SetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_max_word_length")]
    pub max_word_length: usize,
    #[serde(default = "default_trials")]
    pub expander_trials: usize,
    #[serde(default = "default_cover_pool")]
    pub cover_pool: usize,
    #[serde(default = "default_max_degree")]
    pub max_degree: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default = "default_mc_iterations")]
    pub mc_iterations: usize,
    #[serde(default = "default_max_phases")]
    pub max_phases: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_cells() -> usize {
    100_000
}
fn default_set_a() -> SetSpec {
    SetSpec::Cap {
        cap: CapSpec {
            center: [0.0, 0.0, 1.0],
            measure: Some(0.2),
            radius: None,
        },
    }
}
fn default_set_b() -> SetSpec {
    SetSpec::Cap {
        cap: CapSpec {
            center: [0.0, 0.0, -1.0],
            measure: Some(0.2),
            radius: None,
        },
    }
}
fn default_max_word_length() -> usize {
    4
}
fn default_trials() -> usize {
    48
}
fn default_cover_pool() -> usize {
    96
}
fn default_max_degree() -> u32 {
    20
}
fn default_mc_iterations() -> usize {
    50
}
fn default_max_phases() -> u32 {
    40
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// CLI flag overrides; every present value wins over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cells: Option<usize>,
    pub eta: Option<f64>,
    pub max_degree: Option<u32>,
    pub max_phases: Option<u32>,
    pub epsilon: Option<f64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let bytes =
            std::fs::read(path).map_err(|e| format!("cannot read config {:?}: {}", path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| format!("malformed config {:?}: {}", path, e))
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.cells {
            self.cells = v;
        }
        if let Some(v) = o.eta {
            self.eta = Some(v);
        }
        if let Some(v) = o.max_degree {
            self.max_degree = v;
        }
        if let Some(v) = o.max_phases {
            self.max_phases = v;
        }
        if let Some(v) = o.epsilon {
            self.epsilon = Some(v);
        }
        if let Some(v) = o.samples {
            self.mc_samples = Some(v);
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(eta) = self.eta {
            if !(0.0 < eta && eta < 1.0) {
                return Err(format!("eta must be in (0, 1), got {}", eta));
            }
        }
        if let Some(eps) = self.epsilon {
            if eps <= 0.0 {
                return Err(format!("epsilon must be positive, got {}", eps));
            }
        }
        if self.cells < 8 {
            return Err("cells must be at least 8".into());
        }
        if self.max_degree < 1 {
            return Err("max_degree must be at least 1".into());
        }
        if self.max_phases < 1 {
            return Err("max_phases must be at least 1".into());
        }
        Ok(())
    }

    /// Resolves the generator set (not yet symmetrized).
    pub fn resolve_generators(&self) -> Result<RotationSet, String> {
        match &self.generators {
            GeneratorSpec::Preset { preset } => {
                rotation::preset(preset).map_err(|e| e.to_string())
            }
            GeneratorSpec::File { file } => {
                let bytes = std::fs::read(file)
                    .map_err(|e| format!("cannot read rotation file {:?}: {}", file, e))?;
                let parsed: RotationSetFile = serde_json::from_slice(&bytes)
                    .map_err(|e| format!("malformed rotation file {:?}: {}", file, e))?;
                parsed.into_rotation_set().map_err(|e| e.to_string())
            }
        }
    }

    /// Resolves a set definition against a partition.
    pub fn resolve_set(
        &self,
        spec: &SetSpec,
        partition: &SpherePartition,
    ) -> Result<MeasurableSet, String> {
        match spec {
            SetSpec::Cap { cap } => {
                let center = UnitVector::new(cap.center[0], cap.center[1], cap.center[2])
                    .map_err(|e| format!("bad cap center: {}", e))?;
                match (cap.measure, cap.radius) {
                    (Some(mu), None) => {
                        if !(0.0..=1.0).contains(&mu) {
                            return Err(format!("cap measure {} outside [0, 1]", mu));
                        }
                        Ok(partition.cap_of_measure(center, mu))
                    }
                    (None, Some(r)) => partition
                        .try_cap(center, r)
                        .map_err(|e| e.to_string()),
                    _ => Err("cap needs exactly one of `measure` or `radius`".into()),
                }
            }
            SetSpec::Mask { mask } => {
                let bytes = std::fs::read(mask)
                    .map_err(|e| format!("cannot read mask file {:?}: {}", mask, e))?;
                let parsed: MeasurableSetFile = serde_json::from_slice(&bytes)
                    .map_err(|e| format!("malformed mask file {:?}: {}", mask, e))?;
                let set = parsed.into_set();
                if set.universe() != partition.universe() {
                    return Err("mask universe does not match the configured partition".into());
                }
                Ok(set)
            }
        }
    }

    /// Default Monte Carlo sample count: ten per cell.
    pub fn mc_samples_for(&self, partition: &SpherePartition) -> usize {
        self.mc_samples.unwrap_or(10 * partition.n_cells())
    }
}
