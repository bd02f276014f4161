//! Independent, non-identically distributed sinogram noise with
//! E η² = σ²(α_k, p_j) Δα, drawn from a counter-based generator.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan_geometry::GridSpec;

/// The noise variance surface σ²(α, p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceField {
    /// scale · [1 + a_α sin α] · [1 + a_p sin πp]
    ProductSinusoidal {
        scale: f64,
        alpha_amplitude: f64,
        p_amplitude: f64,
    },
    Constant {
        value: f64,
    },
    /// Samples on a periodic α-grid over [0, 2π) times a uniform p-grid over
    /// `[p_min, p_max]`, row-major in α. Interpolated with Catmull–Rom
    /// splines in both directions, which keeps the surface C¹.
    Tabulated {
        alpha_nodes: usize,
        p_min: f64,
        p_max: f64,
        p_nodes: usize,
        values: Vec<f64>,
    },
}

impl VarianceField {
    /// σ²(α, p) = (1/3)[1 + ½ sin α][1 + ½ sin πp].
    pub fn reference() -> Self {
        VarianceField::ProductSinusoidal {
            scale: 1.0 / 3.0,
            alpha_amplitude: 0.5,
            p_amplitude: 0.5,
        }
    }

    pub fn constant(value: f64) -> Self {
        VarianceField::Constant { value }
    }

    pub fn sigma2(&self, alpha: f64, p: f64) -> f64 {
        match self {
            VarianceField::ProductSinusoidal {
                scale,
                alpha_amplitude,
                p_amplitude,
            } => scale * (1.0 + alpha_amplitude * alpha.sin()) * (1.0 + p_amplitude * (PI * p).sin()),
            VarianceField::Constant { value } => *value,
            VarianceField::Tabulated {
                alpha_nodes,
                p_min,
                p_max,
                p_nodes,
                values,
            } => {
                let na = *alpha_nodes;
                let np = *p_nodes;
                let ua = alpha.rem_euclid(2.0 * PI) / (2.0 * PI) * na as f64;
                let ia = ua.floor() as i64;
                let fa = ua - ia as f64;
                let up = ((p - p_min) / (p_max - p_min) * (np - 1) as f64).clamp(0.0, (np - 1) as f64);
                let ip = (up.floor() as i64).min(np as i64 - 2).max(0);
                let fp = up - ip as f64;
                let at = |a: i64, q: i64| {
                    let a = a.rem_euclid(na as i64) as usize;
                    let q = q.clamp(0, np as i64 - 1) as usize;
                    values[a * np + q]
                };
                let row = |a: i64| {
                    catmull_rom(at(a, ip - 1), at(a, ip), at(a, ip + 1), at(a, ip + 2), fp)
                };
                catmull_rom(row(ia - 1), row(ia), row(ia + 1), row(ia + 2), fa)
            }
        }
    }

    /// Largest σ² over the lattice.
    pub fn max_on_grid(&self, grid: &GridSpec) -> f64 {
        let mut m = 0.0_f64;
        for alpha in grid.angles() {
            for p in grid.detectors() {
                m = m.max(self.sigma2(alpha, p));
            }
        }
        m
    }
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p1)
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// η = U √(3σ²Δα), U uniform on [−1, 1].
    #[default]
    Uniform,
    /// η ~ N(0, σ²Δα).
    Gaussian,
}

impl NoiseDistribution {
    /// Multiplier turning a unit draw into a sample of variance `variance`.
    pub fn scale_for(self, variance: f64) -> f64 {
        match self {
            NoiseDistribution::Uniform => (3.0 * variance).sqrt(),
            NoiseDistribution::Gaussian => variance.sqrt(),
        }
    }

    /// Variance of the unit draw (before scaling).
    pub fn unit_variance(self) -> f64 {
        match self {
            NoiseDistribution::Uniform => 1.0 / 3.0,
            NoiseDistribution::Gaussian => 1.0,
        }
    }

    /// E|η|³ / (E η²)^{3/2}, which is constant for a scaled law.
    pub fn third_moment_ratio(self) -> f64 {
        match self {
            // a³/4 with a = √(3v)
            NoiseDistribution::Uniform => 3.0 * 3f64.sqrt() / 4.0,
            NoiseDistribution::Gaussian => 2.0 * (2.0 / PI).sqrt(),
        }
    }

    /// Exact E|η|³ for an entry of variance `variance`.
    pub fn abs_third_moment(self, variance: f64) -> f64 {
        self.third_moment_ratio() * variance.max(0.0).powf(1.5)
    }

    #[inline]
    pub fn unit_sample(self, rng: &CounterRng, entry: u64) -> f64 {
        match self {
            NoiseDistribution::Uniform => rng.uniform_pm1(entry),
            NoiseDistribution::Gaussian => rng.gaussian(entry),
        }
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless generator: word `n` of a stream is the SplitMix64 output for
/// state `key + (n + 1)·γ`, so any entry can be produced independently of
/// the others and of the order of evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { key: mix64(seed ^ 0x5851_F42D_4C95_7F2D) }
    }

    /// Stream for sample `index` of an ensemble keyed by `master_seed`.
    pub fn for_sample(master_seed: u64, index: u64) -> Self {
        CounterRng::new(sample_seed(master_seed, index))
    }

    #[inline]
    pub fn word(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on [−1, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform_pm1(&self, entry: u64) -> f64 {
        let u = (self.word(entry) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        2.0 * u - 1.0
    }

    /// Standard normal via Box–Muller on words 2·entry and 2·entry + 1.
    #[inline]
    pub fn gaussian(&self, entry: u64) -> f64 {
        let u1 = ((self.word(2 * entry) >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.word(2 * entry + 1) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// Seed of sample `index` derived from an ensemble master seed.
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed).wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

/// Per-entry noise standard multipliers, row-major (angle, detector).
pub fn noise_scales(grid: &GridSpec, field: &VarianceField, dist: NoiseDistribution) -> Result<Vec<f64>> {
    let mut scales = Vec::with_capacity(grid.len());
    for k in 0..grid.angle_count {
        let alpha = grid.alpha(k);
        for j in 0..grid.detector_count {
            let p = grid.p(j);
            let s2 = field.sigma2(alpha, p);
            if s2 < 0.0 || !s2.is_finite() {
                return Err(Error::NegativeVariance { alpha, p, value: s2 });
            }
            scales.push(dist.scale_for(s2 * grid.delta_alpha));
        }
    }
    Ok(scales)
}

/// One realization η_{k,j} on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub angle_count: usize,
    pub detector_count: usize,
    pub seed: u64,
    pub distribution: NoiseDistribution,
    /// Row-major: index = k·detector_count + j (local indices).
    pub values: Vec<f64>,
}

impl NoiseDraw {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.detector_count + j]
    }

    /// Writes the raw little-endian f64 sinogram plus a JSON sidecar
    /// (`<path>.json`) describing the grid and seed.
    pub fn export(&self, path: &Path, grid: &GridSpec) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        let sidecar = serde_json::json!({
            "schema": 1,
            "layout": "row-major (angle, detector), f64 little-endian",
            "angle_count": self.angle_count,
            "detector_count": self.detector_count,
            "seed": self.seed,
            "distribution": self.distribution,
            "grid": grid,
        });
        let mut f = std::fs::File::create(path.with_extension("json"))?;
        f.write_all(serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
        Ok(())
    }

    /// Reads a sinogram written by [`NoiseDraw::export`].
    pub fn import(path: &Path) -> Result<Self> {
        let sidecar: serde_json::Value =
            serde_json::from_slice(&std::fs::read(path.with_extension("json"))?)?;
        let field = |name: &str| {
            sidecar[name]
                .as_u64()
                .ok_or_else(|| Error::InvalidParameter(format!("sidecar is missing {name}")))
        };
        let angle_count = field("angle_count")? as usize;
        let detector_count = field("detector_count")? as usize;
        let seed = field("seed")?;
        let distribution = serde_json::from_value(sidecar["distribution"].clone())?;
        let bytes = std::fs::read(path)?;
        if bytes.len() != angle_count * detector_count * 8 {
            return Err(Error::DimensionMismatch {
                expected: angle_count * detector_count * 8,
                actual: bytes.len(),
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(NoiseDraw { angle_count, detector_count, seed, distribution, values })
    }
}

pub fn draw_noise(
    grid: &GridSpec,
    field: &VarianceField,
    dist: NoiseDistribution,
    seed: u64,
) -> Result<NoiseDraw> {
    let scales = noise_scales(grid, field, dist)?;
    Ok(draw_with_scales(grid, &scales, dist, seed))
}

pub(crate) fn draw_with_scales(grid: &GridSpec, scales: &[f64], dist: NoiseDistribution, seed: u64) -> NoiseDraw {
    let rng = CounterRng::new(seed);
    let values = scales
        .iter()
        .enumerate()
        .map(|(e, &s)| dist.unit_sample(&rng, e as u64) * s)
        .collect();
    NoiseDraw {
        angle_count: grid.angle_count,
        detector_count: grid.detector_count,
        seed,
        distribution: dist,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThirdMomentReport {
    pub distribution: NoiseDistribution,
    /// c in E|η|³ ≤ c (Δα)^{3/2}.
    pub constant: f64,
    pub sigma2_max: f64,
    /// max over entries of E|η|³ / (Δα)^{3/2}; never exceeds `constant`.
    pub worst_entry_ratio: f64,
    pub holds: bool,
}

pub fn third_moment_bound_check(
    grid: &GridSpec,
    field: &VarianceField,
    dist: NoiseDistribution,
) -> ThirdMomentReport {
    let sigma2_max = field.max_on_grid(grid);
    let constant = dist.third_moment_ratio() * sigma2_max.powf(1.5);
    let da32 = grid.delta_alpha.powf(1.5);
    let mut worst = 0.0_f64;
    for alpha in grid.angles() {
        for p in grid.detectors() {
            let m3 = dist.abs_third_moment(field.sigma2(alpha, p) * grid.delta_alpha);
            worst = worst.max(m3 / da32);
        }
    }
    ThirdMomentReport {
        distribution: dist,
        constant,
        sigma2_max,
        worst_entry_ratio: worst,
        holds: worst <= constant * (1.0 + 1e-12),
    }
}
