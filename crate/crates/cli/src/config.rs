use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinboson::{BasisIndex, ModelParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub branches: BranchesConfig,
    #[serde(default)]
    pub perturb: PerturbConfig,
    #[serde(default)]
    pub resonance: ResonanceConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub degenerate: DegenerateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchesConfig {
    pub g_min: f64,
    pub g_max: f64,
    pub points: usize,
    /// Branches followed; defaults to the trust cutoff.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

impl Default for BranchesConfig {
    fn default() -> Self {
        Self {
            g_min: -0.5,
            g_max: 0.5,
            points: 101,
            levels: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    /// Levels `(n, s)` for `n <= n_max` and both spins.
    pub n_max: usize,
    pub half_width: f64,
    pub points: usize,
    pub degree: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        let p = spinboson::perturbation::FitProtocol::SERIES;
        Self {
            n_max: 5,
            half_width: p.half_width,
            points: p.points,
            degree: p.degree,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceConfig {
    pub window: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    /// Number of seeded uniform `g` samples; 0 uses `model.g` only.
    pub samples: usize,
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        Self {
            window: 12,
            tol: None,
            floor: None,
            samples: 0,
            g_min: 0.05,
            g_max: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub source: BasisIndex,
    pub target: BasisIndex,
    pub delta: f64,
    pub threshold: f64,
    pub max_periods: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        let t = spinboson::control::TransferOptions::default();
        Self {
            source: BasisIndex::down(0),
            target: BasisIndex::down(1),
            delta: 0.02,
            threshold: t.threshold,
            max_periods: t.max_periods,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub sizes: Vec<usize>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { sizes: vec![64, 128] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegenerateConfig {
    pub j_max: usize,
    pub window: usize,
}

impl Default for DegenerateConfig {
    fn default() -> Self {
        Self { j_max: 5, window: 12 }
    }
}

/// Reads and parses a config, reporting the JSON path of the first bad key.
pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        if key.is_empty() || key == "." {
            format!("config: {inner}")
        } else {
            format!("config key `{key}`: {inner}")
        }
    })
}
