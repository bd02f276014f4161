//! Experiment configuration: the versioned JSON file plus command-line
//! overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use lra_noise::ensemble_stats::{EnsembleOptions, Thresholds, DEFAULT_BINS};
use lra_noise::kernel_lab::{Kernel, KernelDocument, DEFAULT_GRID_STEP, DEFAULT_HALF_RANGE};
use lra_noise::lra_theory::DEFAULT_NODES;
use lra_noise::noise_model::{NoiseDistribution, VarianceField};
use lra_noise::scan_geometry::{build_grid, AngleConvention, GridSpec, LocalPatch, Point};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Keys { a: f64 },
    Piecewise { document: KernelDocument },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Keys { a: -0.5 }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        Ok(match self {
            KernelSpec::Keys { a } => Kernel::keys(*a),
            KernelSpec::Piecewise { document } => Kernel::from_document(document.clone())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub grid_step: f64,
    pub half_range: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig { grid_step: DEFAULT_GRID_STEP, half_range: DEFAULT_HALF_RANGE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// ε = 1/j_m for each entry.
    pub j_m: Vec<u32>,
    /// Samples per point; defaults to `n_samples`.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// The covariance error at the largest ε must exceed this.
    pub min_error_at_largest: f64,
    /// Spearman correlation of (ε, error) must exceed this.
    pub min_rank_correlation: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            j_m: vec![10, 22, 46, 100, 215, 464, 1000],
            n_samples: None,
            min_error_at_largest: 0.20,
            min_rank_correlation: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageConfig {
    pub resolution: usize,
    /// Half-width of the full-scale image around the origin.
    pub full_half_width: f64,
    /// Half-width of the local image around x₀, in units of ε.
    pub local_half_width: f64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig { resolution: 128, full_half_width: 0.7, local_half_width: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_m: Option<u32>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Detector half-width P.
    #[serde(default = "default_radius", rename = "P")]
    pub radius: f64,
    #[serde(default)]
    pub p_bar: Option<f64>,
    #[serde(default)]
    pub convention: AngleConvention,
    #[serde(default = "default_x0")]
    pub x0: Point,
    #[serde(default = "default_offsets")]
    pub offsets: Vec<Point>,
    #[serde(default = "VarianceField::reference")]
    pub field: VarianceField,
    #[serde(default)]
    pub distribution: NoiseDistribution,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub kernel_table: TableConfig,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Detector window in units of ε; `null` uses every detector.
    #[serde(default = "default_window")]
    pub window: Option<f64>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub plots: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub image: ImageConfig,
}

fn default_kappa() -> f64 {
    2.0 * PI
}

fn default_radius() -> f64 {
    1.0
}

fn default_x0() -> Point {
    [2f64.sqrt() / 4.0, 3f64.sqrt() / 4.0]
}

fn default_offsets() -> Vec<Point> {
    let h = 0.5 / 2f64.sqrt();
    vec![[0.0, 0.0], [h, h]]
}

fn default_n_samples() -> usize {
    10_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("lra-noise-out")
}

fn default_window() -> Option<f64> {
    EnsembleOptions::default().window
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub plots: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("malformed experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        self.plots |= o.plots;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            bail!("unsupported config schema {} (expected {SCHEMA_VERSION})", self.schema);
        }
        match (self.epsilon, self.j_m) {
            (Some(e), None) if e > 0.0 => {}
            (None, Some(j)) if j > 0 => {}
            (Some(_), Some(_)) => bail!("give exactly one of epsilon and j_m, not both"),
            (None, None) => bail!("one of epsilon or j_m is required"),
            _ => bail!("epsilon and j_m must be positive"),
        }
        if self.n_samples < 2 {
            bail!("n_samples must be at least 2");
        }
        if self.offsets.is_empty() {
            bail!("offsets must not be empty");
        }
        if self.threads == Some(0) {
            bail!("threads must be positive");
        }
        if self.histogram_bins == 0 {
            bail!("histogram_bins must be positive");
        }
        if let Some(w) = self.window {
            if w.is_nan() || w <= 0.0 {
                bail!("window must be positive or null");
            }
        }
        if self.sweep.j_m.is_empty() || self.sweep.j_m.contains(&0) {
            bail!("sweep.j_m must be a nonempty list of positive integers");
        }
        if self.image.resolution == 0 {
            bail!("image.resolution must be positive");
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| 1.0 / self.j_m.expect("validated") as f64)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        Ok(build_grid(self.epsilon(), self.kappa, self.p_bar, self.radius, self.convention)?)
    }

    pub fn patch(&self) -> Result<LocalPatch> {
        Ok(LocalPatch::new(self.x0, self.offsets.clone(), self.epsilon())?)
    }

    pub fn ensemble_options(&self, half_width: Option<f64>) -> EnsembleOptions {
        EnsembleOptions { window: self.window, bins: self.histogram_bins, half_width }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
