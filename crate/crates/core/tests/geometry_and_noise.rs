use std::f64::consts::PI;

use lra_noise::fbp_engine::{reconstruct_local, PatchOperator};
use lra_noise::kernel_lab::{build_filtered_kernel, build_keys_kernel};
use lra_noise::noise_model::{draw_noise, noise_scales, sample_seed, CounterRng, NoiseDistribution, VarianceField};
use lra_noise::scan_geometry::{a_k_of, build_grid, AngleConvention, LocalPatch};

const X0: [f64; 2] = [0.353_553_390_593_273_8, 0.433_012_701_892_219_3];

#[test]
fn a_k_matches_extended_precision() {
    // 40-digit evaluation of (α·x₀ − p̄)/ε with α = 137·2π·10⁻³, p̄ = −1.001
    let reference = 1_559.838_365_634_498_1;
    let grid = build_grid(1e-3, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
    assert_eq!(grid.p_bar, -1.001);
    let a = a_k_of(&grid, X0, 137);
    assert!((a - reference).abs() < 1e-9, "{a}");
}

#[test]
fn ensemble_sample_equals_materialized_draw() {
    let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
    let eps = 0.02;
    let grid = build_grid(eps, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
    let patch = LocalPatch::new(X0, vec![[0.0, 0.0], [0.4, -0.2]], eps).unwrap();
    let field = VarianceField::reference();
    for dist in [NoiseDistribution::Uniform, NoiseDistribution::Gaussian] {
        let scales = noise_scales(&grid, &field, dist).unwrap();
        let op = PatchOperator::build(&grid, &patch, &fk, Some(24.0)).unwrap();
        for s in [0u64, 5, 999] {
            let mut direct = vec![0.0; 2];
            op.apply_generated(&CounterRng::for_sample(11, s), dist, &scales, &mut direct);
            let draw = draw_noise(&grid, &field, dist, sample_seed(11, s)).unwrap();
            let via_draw = reconstruct_local(&draw, &patch, &grid, &fk, Some(24.0)).unwrap();
            assert_eq!(direct, via_draw.values);
        }
    }
}

#[test]
fn sample_seeds_do_not_collide() {
    let mut seen = std::collections::HashSet::new();
    for m in 0..4u64 {
        for i in 0..5000u64 {
            assert!(seen.insert(sample_seed(m, i)));
        }
    }
}

#[test]
fn uniform_and_gaussian_draws_share_the_variance_law() {
    let grid = build_grid(0.005, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
    let field = VarianceField::reference();
    for dist in [NoiseDistribution::Uniform, NoiseDistribution::Gaussian] {
        let draw = draw_noise(&grid, &field, dist, 3).unwrap();
        let n = draw.values.len() as f64;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for k in 0..grid.angle_count {
            for j in 0..grid.detector_count {
                let z = draw.get(k, j).powi(2) / (field.sigma2(grid.alpha(k), grid.p(j)) * grid.delta_alpha);
                s += z;
                s2 += z * z;
            }
        }
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "{dist:?}: {mean} ± {se}");
    }
}
