use std::f64::consts::PI;

use proptest::prelude::*;

use lra_noise::ensemble_stats::{run_ensemble, EnsembleOptions};
use lra_noise::fbp_engine::PatchOperator;
use lra_noise::kernel_lab::{build_filtered_kernel, build_keys_kernel, FilteredKernelTable};
use lra_noise::lra_theory::{d_epsilon, psi_sum, second_moment_multi};
use lra_noise::noise_model::{NoiseDistribution, VarianceField};
use lra_noise::scan_geometry::{build_grid, AngleConvention, GridSpec, LocalPatch};

const X0: [f64; 2] = [0.353_553_390_593_273_8, 0.433_012_701_892_219_3];

fn fk() -> FilteredKernelTable {
    build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap()
}

fn grid(eps: f64) -> GridSpec {
    build_grid(eps, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap()
}

#[test]
fn d_epsilon_matches_independent_lattice_sum() {
    // scipy Cauchy-weight quadrature for Hφ′, ψ tabulated on 801 nodes
    let reference = [(100.0, 5.759_890), (200.0, 5.408_019), (400.0, 5.553_989), (800.0, 5.577_036)];
    let fk = fk();
    let field = VarianceField::reference();
    for (j, r) in reference {
        let d = d_epsilon(&grid(1.0 / j), X0, [0.0, 0.0], &field, &fk);
        assert!((d - r).abs() < 1e-4, "j_m = {j}: {d} vs {r}");
    }
}

#[test]
fn second_moment_matches_operator_covariance() {
    let fk = fk();
    let eps = 0.01;
    let g = grid(eps);
    let c = 0.5 / 2f64.sqrt();
    let patch = LocalPatch::new(X0, vec![[0.0, 0.0], [c, c]], eps).unwrap();
    let field = VarianceField::reference();
    let op = PatchOperator::build(&g, &patch, &fk, None).unwrap();
    let var: Vec<f64> = (0..g.len())
        .map(|e| field.sigma2(g.alpha(e / g.detector_count), g.p(e % g.detector_count)) * g.delta_alpha)
        .collect();
    let cov = op.covariance(|e| var[e]);
    let theta = [1.0, -1.0];
    let quad = cov[0] - cov[1] - cov[2] + cov[3];
    let sm = second_moment_multi(&g, &patch, &theta, &field, &fk).unwrap();
    assert!((sm.exact - quad).abs() < 1e-10 * quad, "{} vs {quad}", sm.exact);
}

#[test]
fn gaussian_sample_covariance_converges_to_exact() {
    let fk = fk();
    let eps = 0.01;
    let g = grid(eps);
    let patch = LocalPatch::new(X0, vec![[0.0, 0.0], [0.3, 0.3]], eps).unwrap();
    let field = VarianceField::reference();
    let opts = EnsembleOptions::default();
    let op = PatchOperator::build(&g, &patch, &fk, opts.window).unwrap();
    let cov = op.covariance(|e| field.sigma2(g.alpha(e / g.detector_count), g.p(e % g.detector_count)) * g.delta_alpha);
    let frob = |s: &Vec<Vec<f64>>| {
        let num: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (s[i][j] - cov[2 * i + j]).powi(2)).sum();
        let den: f64 = cov.iter().map(|v| v * v).sum();
        (num / den).sqrt()
    };
    // average over seeds so one lucky draw cannot invert the ordering
    let mean_err = |n: usize| {
        (0..4u64)
            .map(|s| frob(&run_ensemble(n, &g, &patch, &field, NoiseDistribution::Gaussian, &fk, s, &opts).unwrap().sample_cov))
            .sum::<f64>()
            / 4.0
    };
    let small = mean_err(1000);
    let large = mean_err(10000);
    assert!(large < small, "{large} !< {small}");
    assert!(large < 0.04);
}

#[test]
fn histogram_marginals_match_diagonal() {
    let fk = fk();
    let eps = 0.01;
    let g = grid(eps);
    let patch = LocalPatch::new(X0, vec![[0.0, 0.0], [0.3, 0.3]], eps).unwrap();
    let field = VarianceField::reference();
    let n = 5000;
    let stats =
        run_ensemble(n, &g, &patch, &field, NoiseDistribution::Uniform, &fk, 1, &EnsembleOptions::default()).unwrap();
    let h = stats.histogram_2d.as_ref().unwrap();
    assert_eq!(h.total(), n as u64);
    let b = h.spec.bins;
    for axis in 0..2 {
        let mut m = vec![0u64; b];
        for iy in 0..b {
            for ix in 0..b {
                m[if axis == 0 { ix } else { iy }] += h.counts[iy * b + ix];
            }
        }
        let mean: f64 = (0..b).map(|i| m[i] as f64 * h.spec.centre(i)).sum::<f64>() / n as f64;
        let var: f64 = (0..b).map(|i| m[i] as f64 * (h.spec.centre(i) - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // binned variance carries Sheppard's w²/12
        let target = stats.sample_cov[axis][axis] + h.spec.bin_width().powi(2) / 12.0;
        let se = target * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - target).abs() < 5.0 * se, "axis {axis}: {var} vs {target}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn psi_is_one_periodic(a in -500.0f64..500.0, b in -3.0f64..3.0) {
        let fk = fk();
        let p0 = psi_sum(a, b, &fk, 200).unwrap();
        let p1 = psi_sum(a + 1.0, b, &fk, 200).unwrap();
        prop_assert!((p0.psi - p1.psi).abs() <= p0.psi_tail_bound + p1.psi_tail_bound + 1e-12);
        prop_assert!(p0.psi > 0.0 && p0.big_psi > 0.0);
    }

    #[test]
    fn reconstruction_is_linear(s in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let fk = fk();
        let eps = 0.05;
        let g = grid(eps);
        let patch = LocalPatch::new(X0, vec![[0.0, 0.0], [1.0, 0.5]], eps).unwrap();
        let op = PatchOperator::build(&g, &patch, &fk, None).unwrap();
        let rng = lra_noise::noise_model::CounterRng::new(s);
        let u: Vec<f64> = (0..g.len() as u64).map(|e| rng.gaussian(e)).collect();
        let v: Vec<f64> = (0..g.len() as u64).map(|e| rng.uniform_pm1((1 << 40) + e)).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let (mut ru, mut rv, mut rw) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        op.apply(&u, &mut ru);
        op.apply(&v, &mut rv);
        op.apply(&w, &mut rw);
        let scale = ru.iter().chain(&rv).fold(1e-300_f64, |m, x| m.max(x.abs())) * (1.0 + a.abs() + b.abs());
        for i in 0..2 {
            prop_assert!((rw[i] - a * ru[i] - b * rv[i]).abs() <= 1e-12 * scale);
        }
    }
}
