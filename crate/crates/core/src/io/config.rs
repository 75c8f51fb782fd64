//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Estimator, Hc4mConstants, ModelOptions};
use crate::inference::{Correction, CorrectionSpec, PermutationPlan, Scheme};
use crate::synth::{NoiseModel, SweepConfig, Variant};
use crate::tfce::TfceParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub model: ModelConfig,
    pub tfce: TfceParams,
    pub permutation: PermutationConfig,
    pub correction: CorrectionConfig,
    pub run: RunSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// PLY surface.
    pub mesh: Option<PathBuf>,
    /// Whitespace-separated vertex coordinates, used with `faces` instead of
    /// a PLY file.
    pub vertices: Option<PathBuf>,
    pub faces: Option<PathBuf>,
    pub design: Option<PathBuf>,
    pub phenotype: Option<PathBuf>,
    /// Optional user-supplied coefficient map for sweeps.
    pub beta_map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub interest: Vec<String>,
    pub nuisance: Vec<String>,
    pub standardize: bool,
    pub estimator: Estimator,
    pub hc4m: Hc4mConstants,
    /// Design column holding a per-subject scalar phenotype, for `global`.
    pub response: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let m = ModelOptions::default();
        ModelConfig {
            interest: Vec::new(),
            nuisance: Vec::new(),
            standardize: m.standardize,
            estimator: m.estimator,
            hc4m: m.hc4m,
            response: None,
        }
    }
}

impl ModelConfig {
    pub fn options(&self) -> ModelOptions {
        ModelOptions {
            estimator: self.estimator,
            standardize: self.standardize,
            hc4m: self.hc4m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationConfig {
    pub count: usize,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            count: 1000,
            seed: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    pub method: Correction,
    pub q: f64,
    /// Correct all interest columns in one BH pass instead of one pass per
    /// column.
    pub pooled: bool,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        let c = CorrectionSpec::default();
        CorrectionConfig {
            method: c.method,
            q: c.q,
            pooled: false,
        }
    }
}

impl CorrectionConfig {
    pub fn spec(&self) -> CorrectionSpec {
        CorrectionSpec {
            method: self.method,
            q: self.q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Tfce,
    /// Mass univariate regression on `|t|` without TFCE.
    Mur,
    ClusterExtent,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfce" => Ok(Mode::Tfce),
            "mur" => Ok(Mode::Mur),
            "cluster_extent" | "cluster-extent" => Ok(Mode::ClusterExtent),
            _ => Err(Error::Validation(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub cluster_extent_thresholds: Vec<f64>,
    pub out: Option<PathBuf>,
    /// Include per-stage wall-clock timings in the manifest. Off by default
    /// so repeated runs give identical output trees.
    pub record_timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub coverage: f64,
    pub centers: Vec<usize>,
    pub sign: f64,
    /// Coefficient magnitude at the patch rim, relative to the centre.
    pub floor: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            coverage: 0.1,
            centers: vec![0],
            sign: 1.0,
            floor: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub intensities: Vec<f64>,
    /// Empty means MUR, TFCE with the `[tfce]` exponents, and one
    /// cluster-extent variant per `run.cluster_extent_thresholds` entry.
    pub variants: Vec<Variant>,
    pub replicates: usize,
    /// Permutations per grid cell; fewer than a full analysis by default.
    pub permutations: usize,
    pub cohort_subjects: usize,
    pub noise: NoiseModel,
    pub signal: SignalConfig,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        SweepSection {
            sizes: s.sizes,
            intensities: s.intensities,
            variants: Vec::new(),
            replicates: s.replicates,
            permutations: s.permutations,
            cohort_subjects: s.cohort_subjects,
            noise: s.noise,
            signal: SignalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.correction.q > 0.0 && self.correction.q < 1.0) {
            return Err(Error::Validation(format!(
                "q = {} must lie in (0, 1)",
                self.correction.q
            )));
        }
        if self.permutation.count == 0 {
            return Err(Error::Validation("permutation count must be >= 1".into()));
        }
        if self.permutation.workers == Some(0) {
            return Err(Error::Validation("worker count must be >= 1".into()));
        }
        self.tfce.validate()?;
        if let Some(&h) = self
            .run
            .cluster_extent_thresholds
            .iter()
            .find(|&&h| !(h > 0.0 && h.is_finite()))
        {
            return Err(Error::Validation(format!("cluster-forming threshold {h} must be > 0")));
        }
        if self.run.mode == Mode::ClusterExtent && self.run.cluster_extent_thresholds.is_empty() {
            return Err(Error::Validation(
                "cluster-extent mode needs at least one threshold".into(),
            ));
        }
        Ok(())
    }

    pub fn plan(&self) -> PermutationPlan {
        PermutationPlan {
            num_permutations: self.permutation.count,
            seed: self.permutation.seed,
            scheme: Scheme::FreedmanLane,
            model: self.model.options(),
            tfce: (self.run.mode == Mode::Tfce).then_some(self.tfce),
            workers: self.permutation.workers,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let variants = if self.sweep.variants.is_empty() {
            let mut v = vec![
                Variant::Mur,
                Variant::Tfce {
                    e: self.tfce.e,
                    h: self.tfce.h,
                },
            ];
            v.extend(
                self.run
                    .cluster_extent_thresholds
                    .iter()
                    .map(|&threshold| Variant::ClusterExtent { threshold }),
            );
            v
        } else {
            self.sweep.variants.clone()
        };
        SweepConfig {
            sizes: self.sweep.sizes.clone(),
            intensities: self.sweep.intensities.clone(),
            variants,
            replicates: self.sweep.replicates,
            permutations: self.sweep.permutations,
            seed: self.permutation.seed,
            cohort_subjects: self.sweep.cohort_subjects,
            noise: self.sweep.noise,
            tfce_steps: self.tfce.num_steps,
            min_cluster_vertices: self.tfce.min_cluster_vertices,
            model: self.model.options(),
            correction: self.correction.spec(),
            workers: self.permutation.workers,
        }
    }
}
