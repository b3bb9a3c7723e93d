mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::{random_params, Lcg, Oracle};
use mrtnoise::rate_model::*;
use mrtnoise::units::{Energy, Flux};
use mrtnoise::{MrtParams, Well};
use proptest::prelude::*;

fn reference() -> MrtParams {
    MrtParams::reference()
}

fn window() -> Vec<Flux> {
    uniform_biases(-500.0, 3000.0, 200)
}

#[test]
fn fft_pipeline_matches_nested_quadrature() {
    let mut rng = Lcg(7);
    for _ in 0..3 {
        let p = random_params(&mut rng);
        let oracle = Oracle::new(&p);
        let grid = window();
        let curve = simulate_curve(&grid, &p, Well::Left).unwrap();
        let peak = curve.rates().iter().cloned().fold(0.0, f64::max);
        let mut checked = 0;
        while checked < 8 {
            let phi = rng.range(-500.0, 3000.0);
            let model = total_rate(Flux::from_micro_phi0(phi), &p, Well::Left).unwrap().per_us();
            if model < 1e-6 * peak {
                continue;
            }
            let exact = oracle.total(phi);
            assert!((model / exact - 1.0).abs() < 1e-3, "{p:?} at {phi}: {model} vs {exact}");
            checked += 1;
        }
    }
}

#[test]
fn zeroth_peak_matches_single_quadrature() {
    let mut p = reference();
    p.gamma_phi = Flux::from_micro_phi0(5.0);
    let oracle = Oracle::new(&p);
    for phi in [-200.0, -60.0, 0.0, 38.0, 90.0, 400.0, 1500.0] {
        let model = rate_01(Flux::from_micro_phi0(phi), &p).unwrap().per_us();
        assert!((model / oracle.rate01(phi) - 1.0).abs() < 1e-4, "at {phi}");
    }
}

#[test]
fn gaussian_limit_is_exact() {
    let mut p = reference();
    p.gamma_phi = Flux::ZERO;
    p.zeta_phi = Flux::ZERO;
    let o = Oracle::new(&p);
    for phi in uniform_biases(-300.0, 400.0, 71) {
        let model = rate_01(phi, &p).unwrap().per_us();
        let exact = 1e3 * PI * PI * o.d01 * o.d01 * o.gl(o.k * phi.micro_phi0());
        assert_relative_eq!(model, exact, max_relative = 1e-6);
    }
}

#[test]
fn gaussian_peak_height_and_position() {
    let mut p = reference();
    p.gamma_phi = Flux::ZERO;
    let shift = p.peak_shift().micro_phi0();
    assert!((shift - 38.9).abs() < 0.1, "peak shift {shift}");
    // √(2π)Δ²/(4ℏW) in s⁻¹ with Δ and W as angular frequencies.
    let d = 2.0 * PI * 2.72e6;
    let w = 2.0 * PI * 2.0 * 1.37e-6 * 37.2e-6 * 2.067_833_848_461_929e-15 / 6.626_070_15e-34;
    let expected_per_s = (2.0 * PI).sqrt() * d * d / (4.0 * w);
    let got = rate_01(Flux::from_micro_phi0(shift), &p).unwrap().per_s();
    assert_relative_eq!(got, expected_per_s, max_relative = 1e-9);
    assert!((got - 9.2e4).abs() < 0.1e4);
}

fn white_noise_params() -> MrtParams {
    MrtParams {
        w_phi: Flux::from_micro_phi0(0.2),
        gamma_phi: Flux::from_micro_phi0(5.0),
        delta03: Energy::ZERO,
        zeta_phi: Flux::ZERO,
        ..reference()
    }
}

#[test]
fn bloch_redfield_limit() {
    let p = white_noise_params();
    let o = Oracle::new(&p);
    let (d, g, t) = (2.0 * PI * o.d01, 2.0 * PI * o.gamma, 2.0 * PI * o.t);
    let eta = 2.0 * g / t;
    for phi in [100.0, 150.0, 250.0] {
        let eps = 2.0 * PI * o.k * phi;
        assert!(eps > 20.0 * g);
        let s = eta * eps / (1.0 - (-eps / t).exp());
        let expected = 1e3 * d * d / (4.0 * eps * eps) * s;
        let model = rate_01(Flux::from_micro_phi0(phi), &p).unwrap().per_us();
        assert!((model / expected - 1.0).abs() < 0.01, "at {phi}: {model} vs {expected}");
    }
}

#[test]
fn white_noise_lorentzian_peak() {
    let p = white_noise_params();
    let o = Oracle::new(&p);
    let (d, g) = (2.0 * PI * o.d01, 2.0 * PI * o.gamma);
    let expected = 1e3 * d * d / (2.0 * g);
    let model = rate_01(Flux::ZERO, &p).unwrap().per_us();
    assert!((model / expected - 1.0).abs() < 0.01, "{model} vs {expected}");
}

#[test]
fn first_peak_without_relaxation_is_a_translated_zeroth_peak() {
    let mut p = reference();
    p.zeta_phi = Flux::ZERO;
    let ratio = (p.delta03.ghz() / p.delta01.ghz()).powi(2);
    let shift = p.phi31.micro_phi0();
    // One lattice for both evaluations so the comparison isolates the model.
    let model = RateModel::new(&p, &uniform_biases(-800.0, 2600.0, 2), Well::Left, &ModelOptions::default()).unwrap();
    for phi in uniform_biases(1800.0, 2600.0, 17) {
        let r03 = model.parts(phi, Well::Left).unwrap().first.per_us();
        let r01 = model.parts(Flux::from_micro_phi0(phi.micro_phi0() - shift), Well::Left).unwrap().zeroth.per_us();
        assert_relative_eq!(r03, ratio * r01, max_relative = 1e-9);
    }
}

#[test]
fn first_peak_sits_near_its_nominal_position() {
    let p = reference();
    let grid = uniform_biases(1900.0, 2400.0, 1001);
    let rates: Vec<f64> = grid.iter().map(|&b| rate_03(b, &p).unwrap().per_us()).collect();
    let top = rates.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let nominal = p.phi31.micro_phi0() + p.peak_shift().micro_phi0();
    assert!((grid[top].micro_phi0() - nominal).abs() < 0.5 * p.w_phi.micro_phi0());
}

#[test]
fn mirror_symmetry() {
    let p = reference();
    let grid = window();
    let mirrored: Vec<Flux> = grid.iter().rev().map(|b| Flux::from_micro_phi0(-b.micro_phi0())).collect();
    let left = simulate_curve(&grid, &p, Well::Left).unwrap();
    let right = simulate_curve(&mirrored, &p, Well::Right).unwrap();
    for (l, r) in left.points.iter().zip(right.points.iter().rev()) {
        assert_relative_eq!(l.rate.per_us(), r.rate.per_us(), max_relative = 1e-12);
    }
}

#[test]
fn lattice_refinement_changes_little() {
    let p = reference();
    let grid = window();
    let coarse = simulate_curve(&grid, &p, Well::Left).unwrap();
    let d = ModelOptions::default();
    let fine_opts = ModelOptions { resolution: 2.0 * d.resolution, min_points: 2 * d.min_points, ..d };
    let fine = simulate_curve_with(&grid, &p, Well::Left, &fine_opts).unwrap();
    for (a, b) in coarse.points.iter().zip(&fine.points) {
        assert!((a.rate.per_us() / b.rate.per_us() - 1.0).abs() < 1e-4);
    }
}

#[test]
fn valley_fills_with_relaxation() {
    let mut last = 0.0;
    let valley = Flux::from_micro_phi0(1000.0);
    for z in [1.0, 2.0, 4.0, 8.0] {
        let p = MrtParams { zeta_phi: Flux::from_micro_phi0(z), ..reference() };
        let total = total_rate(valley, &p, Well::Left).unwrap().per_us();
        assert!(total > rate_01(valley, &p).unwrap().per_us());
        assert!(total > last, "valley rate not increasing at zeta {z}");
        last = total;
    }
}

fn fwhm(p: &MrtParams) -> f64 {
    let grid = uniform_biases(-400.0, 500.0, 1801);
    let rates: Vec<f64> = grid.iter().map(|&b| rate_01(b, p).unwrap().per_us()).collect();
    let phi: Vec<f64> = grid.iter().map(|b| b.micro_phi0()).collect();
    mrtnoise::io::families::fwhm(&phi, &rates).unwrap()
}

#[test]
fn width_is_monotone_in_both_flux_noises() {
    let mut last = 0.0;
    for w in [10.0, 20.0, 30.0, 40.0] {
        let f = fwhm(&MrtParams { w_phi: Flux::from_micro_phi0(w), ..reference() });
        assert!(f > last);
        last = f;
    }
    let mut last = 0.0;
    for g in [0.1, 1.0, 5.0, 20.0] {
        let f = fwhm(&MrtParams { gamma_phi: Flux::from_micro_phi0(g), ..reference() });
        assert!(f >= last);
        last = f;
    }
}

#[test]
fn ohmic_tail_is_asymmetric() {
    let p = reference();
    let c = p.peak_shift().micro_phi0();
    let w = p.w_phi.micro_phi0();
    for x in [3.5 * w, 5.0 * w, 8.0 * w] {
        let up = rate_01(Flux::from_micro_phi0(c + x), &p).unwrap().per_us();
        let down = rate_01(Flux::from_micro_phi0(c - x), &p).unwrap().per_us();
        assert!(up > down, "at {x}: {up} vs {down}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn amplitude_scales_quadratically(c in 0.1f64..10.0, phi in -400.0f64..2800.0) {
        let p = reference();
        let q = MrtParams { delta01: Energy::from_mhz(p.delta01.mhz() * c), ..p };
        let a = rate_01(Flux::from_micro_phi0(phi), &p).unwrap().per_us();
        let b = rate_01(Flux::from_micro_phi0(phi), &q).unwrap().per_us();
        prop_assert!((b / (c * c * a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn right_well_mirrors_left(phi in -3000.0f64..3000.0) {
        let p = reference();
        let l = total_rate(Flux::from_micro_phi0(phi), &p, Well::Left).unwrap().per_us();
        let r = total_rate(Flux::from_micro_phi0(-phi), &p, Well::Right).unwrap().per_us();
        prop_assert!((l / r - 1.0).abs() < 1e-12);
    }
}
