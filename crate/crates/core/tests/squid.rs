use std::f64::consts::PI;

use approx::assert_relative_eq;
use mrtnoise::error::Error;
use mrtnoise::rate_model::{simulate_curve, uniform_biases, ModelOptions};
use mrtnoise::squid::*;
use mrtnoise::units::constants::HBAR;
use mrtnoise::units::{Energy, Flux};
use mrtnoise::{MrtParams, Well};

fn circuit() -> RfSquidParams {
    RfSquidParams::reference()
}

fn basis(points: usize) -> WellBasis {
    let pot = effective_potential(&circuit(), &GridSpec { points, ..GridSpec::default() }).unwrap();
    solve_wells(&pot, 3).unwrap()
}

#[test]
fn potential_is_symmetric_at_degeneracy() {
    let pot = effective_potential(&circuit(), &GridSpec::default()).unwrap();
    let c = pot.partition;
    let scale = pot.u.iter().map(|u| u.abs()).fold(0.0, f64::max);
    for x in 1..c {
        assert!((pot.u[c + x] - pot.u[c - x]).abs() <= 1e-12 * scale, "offset {x}");
    }
    let m = pot.minima();
    assert_eq!(m.len(), 2);
    assert_eq!(m[0] + m[1], 2 * c);
}

#[test]
fn reference_circuit_screening_parameter() {
    // 2π·250 pH·2.30 μA·|cos(0.74π)|/Φ₀
    let expected = 2.0 * PI * 250e-12 * 2.30e-6 * (0.74 * PI).cos().abs() / 2.067_833_848_461_929e-15;
    assert_relative_eq!(circuit().beta_eff(), expected, max_relative = 1e-12);
    assert!((expected - 1.2).abs() < 0.01);
}

#[test]
fn cjj_at_half_flux_quantum_is_single_well() {
    let p = RfSquidParams { phi_cjj_x: 0.5, ..circuit() };
    assert!(matches!(effective_potential(&p, &GridSpec::default()), Err(Error::SingleWell(_))));
}

#[test]
fn subspace_structure() {
    let b = basis(8192);
    let ej = circuit().josephson_energy();
    for m in 0..6 {
        for n in 0..6 {
            let overlap: f64 = b.states[m].wavefunction.iter().zip(&b.states[n].wavefunction).map(|(x, y)| x * y).sum();
            let same = m % 2 == n % 2;
            if same {
                let expected = if m == n { 1.0 } else { 0.0 };
                assert!((overlap - expected).abs() < 1e-10, "<{m}|{n}> = {overlap}");
                assert!(b.delta(m, n).unwrap().abs() <= 1e-12 * ej);
            } else {
                assert_eq!(overlap, 0.0);
                assert!(b.current(m, n).unwrap().abs() <= 1e-10 * 1.37e-6);
            }
        }
    }
}

#[test]
fn matrix_elements_are_hermitian() {
    let b = basis(4096);
    let v31 = b.voltage(3, 1).unwrap().norm();
    let ej = circuit().josephson_energy();
    for m in 0..6 {
        for n in 0..6 {
            let (h_mn, h_nm) = (b.hamiltonian_element(m, n).unwrap(), b.hamiltonian_element(n, m).unwrap());
            assert!((h_mn - h_nm).abs() <= 1e-12 * ej, "H {m}{n}");
            let (i_mn, i_nm) = (b.current(m, n).unwrap(), b.current(n, m).unwrap());
            assert!((i_mn - i_nm).abs() <= 1e-12 * 1.37e-6, "I {m}{n}");
            let (v_mn, v_nm) = (b.voltage(m, n).unwrap(), b.voltage(n, m).unwrap());
            assert!((v_mn - v_nm.conj()).norm() <= 1e-12 * v31, "V {m}{n}");
        }
    }
    assert_eq!(b.delta(1, 0).unwrap(), b.delta(0, 1).unwrap());
    for n in 0..6 {
        assert!(b.voltage(n, n).unwrap().norm() < 1e-3 * v31);
    }
}

#[test]
fn wells_are_degenerate_at_zero_bias() {
    let b = basis(8192);
    let gap = (b.energy(0).unwrap() - b.energy(1).unwrap()).abs();
    let delta01 = b.delta(0, 1).unwrap();
    assert!(gap < delta01 / 100.0, "gap {gap} vs delta {delta01}");
    let ip = persistent_current(&b).unwrap();
    // Mirror-image wells carry opposite currents.
    assert_relative_eq!(b.current(1, 1).unwrap(), -b.current(0, 0).unwrap(), max_relative = 1e-9);
    assert_relative_eq!(ip.amps(), b.current(1, 1).unwrap(), max_relative = 1e-9);
    assert!((ip.micro_amps() / 1.37 - 1.0).abs() < 0.1, "I_P {} uA", ip.micro_amps());
}

/// Energies in the potential's own zero converge to 1e-8 for the levels the
/// rate model uses; level heights above the well bottom, a much smaller
/// number, show the plain second-order error.
#[test]
fn grid_refinement_converges() {
    let (a, b) = (basis(GridSpec::default().points), basis(2 * GridSpec::default().points));
    let floor = |w: &WellBasis| w.potential.u.iter().cloned().fold(f64::INFINITY, f64::min);
    for n in 0..6 {
        let (ea, eb) = (a.energy(n).unwrap(), b.energy(n).unwrap());
        if n < 4 {
            assert!((ea / eb - 1.0).abs() < 1e-8, "E{n}: {ea} vs {eb}");
        }
        let (ha, hb) = (ea - floor(&a), eb - floor(&b));
        assert!((ha / hb - 1.0).abs() < 1e-6, "E{n} above the bottom: {ha} vs {hb}");
    }
    let (da, db) = (a.delta(0, 1).unwrap(), b.delta(0, 1).unwrap());
    assert!((da / db - 1.0).abs() < 0.01, "delta01 {da} vs {db}");
}

#[test]
fn harmonic_voltage_reference_values() {
    let v = harmonic_v31(2.0 * PI * 9.17e9, 110e-15).unwrap();
    // √(ħω/2C) by hand.
    let expected = (1.054_571_817e-34 * 2.0 * PI * 9.17e9 / 220e-15f64).sqrt();
    assert_relative_eq!(v, expected, max_relative = 1e-9);
    assert!((v * 1e6 - 5.3).abs() < 0.05);
    assert_relative_eq!(harmonic_v31(2.0 * PI * 9.17e9, 440e-15).unwrap(), v / 2.0, max_relative = 1e-12);
}

#[test]
fn computed_voltage_is_close_to_harmonic() {
    let q = basis_quantities(&circuit(), &GridSpec::default()).unwrap();
    let omega = q.omega31.joules() / HBAR;
    let harmonic = harmonic_v31(omega, q.c).unwrap();
    assert!((q.v31 / harmonic - 1.0).abs() < 0.2, "{} vs {harmonic}", q.v31);
    // ζ = 2CV₃₁² tan δ_C against ħω₃₁ tan δ_C.
    let tan = 2e-3;
    let ratio = q.zeta_energy(tan) / (HBAR * omega * tan);
    assert!((ratio - 1.0).abs() < 0.2, "zeta ratio {ratio}");
    assert!(q.delta01.mhz() > 0.0 && q.delta03.mhz() > q.delta01.mhz());
    assert!(q.phi31.micro_phi0() > 0.0);
}

#[test]
fn overridden_basis_delegates_exactly() {
    let target = MrtParams::reference();
    let c = 110e-15;
    let v31 = 5.3e-6;
    let q = BasisQuantities {
        delta01: target.delta01,
        delta03: target.delta03,
        phi31: target.phi31,
        omega31: Energy::from_ghz(9.17),
        ip: target.ip,
        v31,
        c,
    };
    let zeta_j = 2.0 * target.ip.amps() * target.zeta_phi.webers();
    let noise = NoiseInputs {
        w_phi: target.w_phi,
        gamma_phi: target.gamma_phi,
        tan_delta_c: zeta_j / (2.0 * c * v31 * v31),
        temperature: target.temperature,
    };
    let mapped = q.mrt_params(&noise).unwrap();
    assert_relative_eq!(mapped.zeta_phi.micro_phi0(), target.zeta_phi.micro_phi0(), max_relative = 1e-12);
    let grid = uniform_biases(-500.0, 3000.0, 120);
    let full = rate_from_basis(&q, &noise, &grid, Well::Left, &ModelOptions::default()).unwrap();
    let simple = simulate_curve(&grid, &target, Well::Left).unwrap();
    for (a, b) in full.points.iter().zip(&simple.points) {
        assert_relative_eq!(a.rate.per_us(), b.rate.per_us(), max_relative = 1e-12);
    }
    let cmp = compare_curves(&full, &simple, 1e-4).unwrap();
    assert!(cmp.max_ratio < 1.0 + 1e-12);
    assert!(cmp.points > 0);
}

#[test]
fn bias_moves_the_partition_with_the_well_center() {
    let p = circuit().at_bias(Flux::from_micro_phi0(300.0));
    let pot = effective_potential(&p, &GridSpec::default()).unwrap();
    assert_relative_eq!(pot.phi[pot.partition], p.phi_x.webers(), max_relative = 1e-9);
    let b = solve_wells(&pot, 2).unwrap();
    // Positive bias lifts the left well, which is what drives tunneling out of it.
    assert!(b.energy(0).unwrap() > b.energy(1).unwrap());
}
