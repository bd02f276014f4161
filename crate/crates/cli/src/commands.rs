//! The five workflows. Each writes its artifacts into the configured output
//! directory and reports whether its thresholds were met.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use lra_noise::ensemble_stats::{
    compare, epsilon_sweep, gaussian_pdf_on_grid, pair_block, run_ensemble, sweep_trend, write_sweep_csv,
    EnsembleStats, SweepBase, DEFAULT_EXTENT_SIGMAS,
};
use lra_noise::fbp_engine::{reconstruct_image, write_json, Region};
use lra_noise::kernel_lab::oracle::run_kernel_checks;
use lra_noise::kernel_lab::{
    build_autocorrelation_with_step, build_filtered_kernel, Autocorrelation, FilteredKernelTable, Kernel,
};
use lra_noise::lra_theory::{predicted_cov, predicted_cov_matrix, PredictedCovariance};
use lra_noise::noise_model::{draw_noise, sample_seed};

use crate::config::ExperimentConfig;
use crate::plots;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

struct Tables {
    kernel: Kernel,
    fk: FilteredKernelTable,
    ac: Autocorrelation,
}

fn tables(cfg: &ExperimentConfig) -> Result<Tables> {
    let kernel = cfg.kernel.build()?;
    let t = cfg.kernel_table;
    let fk = build_filtered_kernel(&kernel, t.grid_step, t.half_range)?;
    let ac = build_autocorrelation_with_step(&kernel, t.grid_step)?;
    Ok(Tables { kernel, fk, ac })
}

/// Creates the output directory and echoes the effective config into it.
pub fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    std::fs::write(dir.join("effective_config.json"), cfg.to_json()?)?;
    Ok(dir)
}

fn predict_matrix(cfg: &ExperimentConfig, ac: &Autocorrelation) -> Result<PredictedCovariance> {
    Ok(predicted_cov_matrix(&cfg.patch()?, &cfg.field, ac, cfg.kappa, cfg.quadrature_nodes)?)
}

pub fn kernel_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = prepare_output(cfg)?;
    let t = tables(cfg)?;
    let report = run_kernel_checks(&t.kernel, &t.fk, &t.ac)?;
    write_json(&report, &dir.join("kernel_check.json"))?;
    for c in &report.checks {
        println!(
            "{} {:<44} error {:.3e} (tolerance {:.0e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.error,
            c.tolerance
        );
    }
    println!("parseval constant C = {:.10}", report.parseval_constant);
    Ok(Outcome::from_bool(report.all_passed()))
}

#[derive(Serialize)]
struct ProfileRow {
    s: f64,
    v_x: f64,
    v_y: f64,
    covariance: f64,
    error_estimate: f64,
}

pub fn predict(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = prepare_output(cfg)?;
    let t = tables(cfg)?;
    let pred = predict_matrix(cfg, &t.ac)?;
    write_json(&pred, &dir.join("predicted_covariance.json"))?;

    // C(s·u) along the direction of the first nonzero offset
    let u = cfg
        .offsets
        .iter()
        .find(|o| o[0] != 0.0 || o[1] != 0.0)
        .map(|o| {
            let n = o[0].hypot(o[1]);
            [o[0] / n, o[1] / n]
        })
        .unwrap_or([1.0, 0.0]);
    let mut w = csv::Writer::from_path(dir.join("covariance_profile.csv"))?;
    for i in 0..=160 {
        let s = i as f64 * 0.05;
        let v = [s * u[0], s * u[1]];
        let c = predicted_cov(v, cfg.x0, &cfg.field, &t.ac, cfg.kappa, cfg.quadrature_nodes)?;
        w.serialize(ProfileRow { s, v_x: v[0], v_y: v[1], covariance: c.value, error_estimate: c.error_estimate })?;
    }
    w.flush()?;

    for row in &pred.matrix {
        println!("{}", row.iter().map(|v| format!("{v:>10.6}")).collect::<Vec<_>>().join(" "));
    }
    let symmetric = (0..pred.dim()).all(|i| (0..pred.dim()).all(|j| pred.matrix[i][j] == pred.matrix[j][i]));
    println!("min eigenvalue {:.3e}", pred.min_eigenvalue);
    Ok(Outcome::from_bool(symmetric && pred.is_psd()))
}

fn write_histograms(stats: &EnsembleStats, pred: Option<&PredictedCovariance>, dir: &Path) -> Result<()> {
    if let Some(h) = &stats.histogram_2d {
        h.write_csv(&dir.join("histogram_observed.csv"))?;
        if let Some(pred) = pred {
            let p = gaussian_pdf_on_grid(pair_block(pred, 0, 1), h.spec)?;
            let mut w = csv::Writer::from_path(dir.join("histogram_predicted.csv"))?;
            w.write_record(["x_centre", "y_centre", "count", "density"])?;
            for iy in 0..h.spec.bins {
                for ix in 0..h.spec.bins {
                    w.write_record([
                        h.spec.centre(ix).to_string(),
                        h.spec.centre(iy).to_string(),
                        String::new(),
                        p[iy * h.spec.bins + ix].to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = prepare_output(cfg)?;
    let t = tables(cfg)?;
    let grid = cfg.grid()?;
    let eps = grid.epsilon;

    let draw = draw_noise(&grid, &cfg.field, cfg.distribution, sample_seed(cfg.master_seed, 0))?;
    draw.export(&dir.join("noise_sample0.bin"), &grid)?;
    let full = Region::square([0.0, 0.0], cfg.image.full_half_width);
    let mut img = reconstruct_image(&draw.values, full, cfg.image.resolution, &grid, &t.fk, cfg.window)?;
    img.seed = Some(draw.seed);
    img.write_csv(&dir.join("image_full.csv"))?;
    let local = Region::square(cfg.x0, cfg.image.local_half_width * eps);
    let mut img = reconstruct_image(&draw.values, local, cfg.image.resolution, &grid, &t.fk, cfg.window)?;
    img.seed = Some(draw.seed);
    img.write_csv(&dir.join("image_local.csv"))?;

    let patch = cfg.patch()?;
    let pred = predict_matrix(cfg, &t.ac).ok();
    let hw = pred.as_ref().map(|p| DEFAULT_EXTENT_SIGMAS * p.c0.sqrt());
    let stats = run_ensemble(
        cfg.n_samples,
        &grid,
        &patch,
        &cfg.field,
        cfg.distribution,
        &t.fk,
        cfg.master_seed,
        &cfg.ensemble_options(hw),
    )?;
    write_json(&stats, &dir.join("ensemble_stats.json"))?;
    write_histograms(&stats, pred.as_ref(), &dir)?;

    if cfg.plots {
        plots::image_png(&dir.join("image_full.csv"), &dir.join("image_full.png"))?;
        plots::image_png(&dir.join("image_local.csv"), &dir.join("image_local.png"))?;
        if stats.histogram_2d.is_some() {
            plots::histogram_png(&dir.join("histogram_observed.csv"), &dir.join("histogram_observed.png"))?;
        }
    }
    println!("sample covariance:");
    for row in &stats.sample_cov {
        println!("{}", row.iter().map(|v| format!("{v:>10.6}")).collect::<Vec<_>>().join(" "));
    }
    Ok(Outcome::Pass)
}

pub fn validate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = prepare_output(cfg)?;
    let t = tables(cfg)?;
    let grid = cfg.grid()?;
    let patch = cfg.patch()?;
    let pred = predict_matrix(cfg, &t.ac)?;
    let options = cfg.ensemble_options(Some(DEFAULT_EXTENT_SIGMAS * pred.c0.sqrt()));
    let stats = run_ensemble(
        cfg.n_samples,
        &grid,
        &patch,
        &cfg.field,
        cfg.distribution,
        &t.fk,
        cfg.master_seed,
        &options,
    )?;
    let report = compare(&stats, &pred, cfg.thresholds)?;
    write_json(&stats, &dir.join("ensemble_stats.json"))?;
    write_json(&pred, &dir.join("predicted_covariance.json"))?;
    write_json(&report, &dir.join("comparison_report.json"))?;
    write_histograms(&stats, Some(&pred), &dir)?;
    if cfg.plots && stats.histogram_2d.is_some() {
        plots::histogram_png(&dir.join("histogram_observed.csv"), &dir.join("histogram_observed.png"))?;
        plots::histogram_png(&dir.join("histogram_predicted.csv"), &dir.join("histogram_predicted.png"))?;
    }

    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    println!(
        "{} covariance error {:.4} (limit {})",
        mark(report.cov_pass),
        report.cov_error_frobenius,
        report.thresholds.cov_error
    );
    if let Some(e) = report.pdf_error_l2 {
        println!("{} pdf error {:.4} (limit {})", mark(report.pdf_pass), e, report.thresholds.pdf_error);
    }
    println!("{} mean norm {:.3e} (bound {:.3e})", mark(report.mean_pass), report.mean_norm, report.mean_bound);
    Ok(Outcome::from_bool(report.passed()))
}

#[derive(Serialize)]
struct SweepSummary {
    epsilons: Vec<f64>,
    n_samples: usize,
    rank_correlation: f64,
    largest_epsilon: f64,
    error_at_largest_epsilon: f64,
    min_error_at_largest: f64,
    min_rank_correlation: f64,
    passed: bool,
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = prepare_output(cfg)?;
    let t = tables(cfg)?;
    let eps: Vec<f64> = cfg.sweep.j_m.iter().map(|&j| 1.0 / j as f64).collect();
    let n = cfg.sweep.n_samples.unwrap_or(cfg.n_samples);
    let base = SweepBase {
        kappa: cfg.kappa,
        radius: cfg.radius,
        convention: cfg.convention,
        x0: cfg.x0,
        offsets: cfg.offsets.clone(),
        field: cfg.field.clone(),
        dist: cfg.distribution,
        master_seed: cfg.master_seed,
        options: cfg.ensemble_options(None),
    };
    let rows = epsilon_sweep(&eps, n, &base, &t.fk, &t.ac)?;
    write_sweep_csv(&rows, &dir.join("sweep.csv"))?;
    let rho = if rows.len() >= 2 { sweep_trend(&rows)? } else { f64::NAN };
    let largest = rows.iter().max_by(|a, b| a.epsilon.total_cmp(&b.epsilon)).expect("nonempty sweep");
    let passed = largest.cov_error_frobenius > cfg.sweep.min_error_at_largest && rho > cfg.sweep.min_rank_correlation;
    let summary = SweepSummary {
        epsilons: eps,
        n_samples: n,
        rank_correlation: rho,
        largest_epsilon: largest.epsilon,
        error_at_largest_epsilon: largest.cov_error_frobenius,
        min_error_at_largest: cfg.sweep.min_error_at_largest,
        min_rank_correlation: cfg.sweep.min_rank_correlation,
        passed,
    };
    write_json(&summary, &dir.join("sweep_summary.json"))?;
    if cfg.plots {
        plots::sweep_png(&dir.join("sweep.csv"), &dir.join("sweep.png"))?;
    }
    for r in &rows {
        println!("eps {:.5}  covariance error {:.4}", r.epsilon, r.cov_error_frobenius);
    }
    println!("rank correlation {rho:.3}");
    Ok(Outcome::from_bool(passed))
}
