use std::f64::consts::PI;

use proptest::prelude::*;

use lra_noise::kernel_lab::oracle::pv_hilbert_derivative;
use lra_noise::kernel_lab::{
    autocorrelation_exact, build_autocorrelation, build_filtered_kernel, build_keys_kernel, hilbert_derivative_exact,
};
use lra_noise::lra_theory::{filtered_energy, predicted_cov, DEFAULT_NODES};
use lra_noise::noise_model::VarianceField;

/// Keys kernel (a = −½) written out directly.
fn keys(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        1.5 * t.powi(3) - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t.powi(3) + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

#[test]
fn kernel_matches_its_written_form() {
    let k = build_keys_kernel();
    for i in -300..=300 {
        let t = i as f64 / 97.0;
        assert!((k.value(t) - keys(t)).abs() < 1e-14);
    }
}

#[test]
fn filtered_energy_is_seven_thirds() {
    // ∫(φ′)² = 7/3 in closed form for a = −½
    let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
    assert!((filtered_energy(&fk) - 7.0 / 3.0).abs() < 1e-7);
}

#[test]
fn far_field_is_inverse_square_over_pi() {
    // m₂ = 0 and m₄ = −0.3 leave πt²Hφ′(t) = 1 − 1.5/t⁴ + O(t⁻⁶)
    let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
    for t in [40.0, 100.0, -1000.0] {
        let v = fk.value(t) * t * t * PI;
        assert!((v - 1.0 + 1.5 / t.powi(4)).abs() < 10.0 / t.powi(6) + 1e-14, "{t}: {v}");
    }
}

#[test]
fn covariance_at_origin_from_independent_quadrature() {
    // C(0) = (κ/4π)² (7/3) ∫σ²(α, α·x₀)dα with a plain midpoint rule
    let x0 = [2f64.sqrt() / 4.0, 3f64.sqrt() / 4.0];
    let field = VarianceField::reference();
    let n = 20000;
    let h = 2.0 * PI / n as f64;
    let integral: f64 = (0..n)
        .map(|i| {
            let a = (i as f64 + 0.5) * h;
            field.sigma2(a, a.cos() * x0[0] + a.sin() * x0[1])
        })
        .sum::<f64>()
        * h;
    let expected = 0.25 * 7.0 / 3.0 * integral;
    let ac = build_autocorrelation(&build_keys_kernel());
    let c0 = predicted_cov([0.0, 0.0], x0, &field, &ac, 2.0 * PI, DEFAULT_NODES).unwrap().value;
    assert!((c0 - expected).abs() < 1e-9, "{c0} vs {expected}");
    assert!((c0 - 1.36).abs() < 0.01 * 1.36);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_tracks_closed_form(t in -30.0f64..30.0) {
        let k = build_keys_kernel();
        let fk = build_filtered_kernel(&k, 1e-3, 24.0).unwrap();
        let exact = hilbert_derivative_exact(&k, t);
        prop_assert!((fk.value(t) - exact).abs() < 1e-9);
    }

    #[test]
    fn closed_form_tracks_pv_quadrature(t in 0.05f64..5.0) {
        let k = build_keys_kernel();
        let pv = pv_hilbert_derivative(&k, t).unwrap();
        prop_assert!((hilbert_derivative_exact(&k, t) - pv).abs() < 1e-6);
    }

    #[test]
    fn autocorrelation_is_even_and_supported(t in 0.0f64..5.0) {
        let k = build_keys_kernel();
        prop_assert!((autocorrelation_exact(&k, t) - autocorrelation_exact(&k, -t)).abs() < 1e-12);
        if t >= 4.0 {
            prop_assert!(autocorrelation_exact(&k, t) == 0.0);
        }
    }
}
