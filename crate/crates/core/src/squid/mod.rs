//! rf-SQUID double-well solver: metastable per-well states, tunneling gaps,
//! persistent current and junction voltage elements, and the rate curve they
//! imply.
//!
//! The CJJ coordinate is pinned at its bias, leaving the 1D potential
//! `U(Φ) = (Φ − Φˣ)²/2L − E_J cos(πΦ_CJJˣ/Φ₀) cos(2πΦ/Φ₀)` with `Φˣ`
//! measured from degeneracy. The two wells are the half-spaces `Φ < Φˣ` and
//! `Φ > Φˣ`; even state indices live in the left well, odd in the right.

pub mod tridiag;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate_model::{simulate_curve_with, CurvePoint, ModelOptions, RateCurve, RateModel};
use crate::units::constants::{H, HBAR, PHI0};
use crate::units::{Current, Energy, Flux, Temperature};
use crate::{MrtParams, Well};

use tridiag::SymTridiagonal;

/// Joules per GHz.
const J_PER_GHZ: f64 = H * 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfSquidParams {
    /// Total critical current of the CJJ, A.
    pub ic: f64,
    /// Main-loop inductance, H.
    pub l: f64,
    /// Parallel junction capacitance, F.
    pub c: f64,
    /// CJJ bias, Φ₀.
    pub phi_cjj_x: f64,
    /// Main-loop bias from degeneracy.
    pub phi_x: Flux,
}

impl RfSquidParams {
    /// The reference qubit circuit.
    pub fn reference() -> Self {
        RfSquidParams { ic: 2.30e-6, l: 250e-12, c: 110e-15, phi_cjj_x: -0.74, phi_x: Flux::ZERO }
    }

    pub fn at_bias(&self, phi_x: Flux) -> Self {
        RfSquidParams { phi_x, ..*self }
    }

    /// `E_J = I_c Φ₀ / 2π`, J.
    pub fn josephson_energy(&self) -> f64 {
        self.ic * PHI0 / (2.0 * PI)
    }

    /// `2πL I_c |cos(πΦ_CJJˣ)| / Φ₀`.
    pub fn beta_eff(&self) -> f64 {
        2.0 * PI * self.l * self.ic * (PI * self.phi_cjj_x).cos().abs() / PHI0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("critical current", self.ic), ("inductance", self.l), ("capacitance", self.c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.phi_cjj_x.is_finite() || !self.phi_x.micro_phi0().is_finite() {
            return Err(Error::Domain("flux biases must be finite".into()));
        }
        let c = (PI * self.phi_cjj_x).cos();
        if !(c < 0.0) {
            return Err(Error::SingleWell(format!(
                "cos(pi * phi_cjj_x) = {c:.4} at phi_cjj_x = {} puts a well at degeneracy; a barrier needs cos < 0",
                self.phi_cjj_x
            )));
        }
        let beta = self.beta_eff();
        if !(beta > 1.0) {
            return Err(Error::SingleWell(format!(
                "effective screening beta_eff = {beta:.4} <= 1 at phi_cjj_x = {}; no double well",
                self.phi_cjj_x
            )));
        }
        Ok(())
    }

    /// `U(Φ)` in J, `Φ` in Wb.
    pub fn potential(&self, phi: f64) -> f64 {
        let d = phi - self.phi_x.webers();
        d * d / (2.0 * self.l) - self.josephson_energy() * (PI * self.phi_cjj_x).cos() * (2.0 * PI * phi / PHI0).cos()
    }

    /// Offset of each minimum from the barrier at degeneracy, Wb.
    pub fn well_offset(&self) -> Result<f64> {
        self.validate()?;
        let beta = self.beta_eff();
        // Root of s = β sin s on (0, π).
        let (mut lo, mut hi) = (1e-12, PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - beta * mid.sin() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi) * PHI0 / (2.0 * PI))
    }
}

/// Discretization of the flux coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Grid intervals; the grid has one more point, the middle one on the partition.
    pub points: usize,
    /// Half-span in units of the well offset.
    pub span: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 8192, span: 2.0 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 64 || self.points % 2 != 0 {
            return Err(Error::Validation(format!("grid needs an even number >= 64 of points, got {}", self.points)));
        }
        if !(self.span > 1.0 && self.span.is_finite()) {
            return Err(Error::Validation(format!("grid span must exceed one well offset, got {}", self.span)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePotential {
    pub params: RfSquidParams,
    /// Uniform flux grid, Wb.
    pub phi: Vec<f64>,
    /// `U(Φ)`, J.
    pub u: Vec<f64>,
    /// Grid index of `Φ = Φˣ`, where both half-space states vanish.
    pub partition: usize,
}

impl EffectivePotential {
    pub fn spacing(&self) -> f64 {
        self.phi[1] - self.phi[0]
    }

    /// Indices of interior local minima of `u`.
    pub fn minima(&self) -> Vec<usize> {
        (1..self.u.len() - 1).filter(|&i| self.u[i] < self.u[i - 1] && self.u[i] <= self.u[i + 1]).collect()
    }
}

pub fn effective_potential(params: &RfSquidParams, grid: &GridSpec) -> Result<EffectivePotential> {
    params.validate()?;
    grid.validate()?;
    let d = params.well_offset()?;
    let half = grid.span * d;
    let center = params.phi_x.webers();
    let n = grid.points;
    let dx = 2.0 * half / n as f64;
    let phi: Vec<f64> = (0..=n).map(|j| center - half + j as f64 * dx).collect();
    let u: Vec<f64> = phi.iter().map(|p| params.potential(*p)).collect();
    let pot = EffectivePotential { params: *params, phi, u, partition: n / 2 };
    let minima = pot.minima();
    if minima.len() != 2 || !(minima[0] < pot.partition && minima[1] > pot.partition) {
        return Err(Error::SingleWell(format!(
            "expected one minimum on each side of the partition, found {} at indices {minima:?}",
            minima.len()
        )));
    }
    Ok(pot)
}

/// One metastable state.
#[derive(Debug, Clone, PartialEq)]
pub struct WellState {
    /// Even: left well, odd: right well.
    pub index: usize,
    /// J.
    pub energy: f64,
    /// Unit-norm samples on the full grid, zero outside the state's well.
    pub wavefunction: Vec<f64>,
}

fn same_well(m: usize, n: usize) -> bool {
    m % 2 == n % 2
}

/// Metastable states of both wells with their matrix elements.
#[derive(Debug, Clone)]
pub struct WellBasis {
    pub potential: EffectivePotential,
    pub states: Vec<WellState>,
    hamiltonian: SymTridiagonal,
    grid: GridSpec,
}

fn hamiltonian(pot: &EffectivePotential) -> Result<SymTridiagonal> {
    let dx = pot.spacing();
    let t = HBAR * HBAR / (2.0 * pot.params.c * dx * dx) / J_PER_GHZ;
    let umin = pot.u.iter().cloned().fold(f64::INFINITY, f64::min);
    let diag = pot.u.iter().map(|u| 2.0 * t + (u - umin) / J_PER_GHZ).collect();
    SymTridiagonal::new(diag, vec![-t; pot.u.len() - 1])
}

fn energy_offset(pot: &EffectivePotential) -> f64 {
    pot.u.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest boundary probability density a state may have.
const EDGE_TOLERANCE: f64 = 1e-8;

pub fn solve_wells(pot: &EffectivePotential, levels_per_well: usize) -> Result<WellBasis> {
    if levels_per_well < 2 {
        return Err(Error::Validation(format!("need at least 2 levels per well, got {levels_per_well}")));
    }
    let h = hamiltonian(pot)?;
    let n = pot.u.len();
    let p = pot.partition;
    let offset = energy_offset(pot);
    let mut states = Vec::with_capacity(2 * levels_per_well);
    for (side, range) in [(0usize, 0..p), (1usize, p + 1..n)] {
        let block = h.block(range.clone())?;
        let pairs = block.lowest(levels_per_well).map_err(|e| Error::EigenSolve {
            reason: e.to_string(),
            points: n,
            spacing: pot.spacing(),
        })?;
        for (k, (lambda, v)) in pairs.into_iter().enumerate() {
            let outer = if side == 0 { v[0] } else { v[v.len() - 1] };
            if outer * outer > EDGE_TOLERANCE {
                return Err(Error::EigenSolve {
                    reason: format!("state {} reaches the grid edge (|psi|^2 = {:.2e}); widen the span", 2 * k + side, outer * outer),
                    points: n,
                    spacing: pot.spacing(),
                });
            }
            let mut w = vec![0.0; n];
            w[range.clone()].copy_from_slice(&v);
            states.push(WellState { index: 2 * k + side, energy: lambda * J_PER_GHZ + offset, wavefunction: w });
        }
    }
    states.sort_by_key(|s| s.index);
    let grid = GridSpec { points: n - 1, span: (pot.phi[n - 1] - pot.phi[0]) / 2.0 / pot.params.well_offset()? };
    Ok(WellBasis { potential: pot.clone(), states, hamiltonian: h, grid })
}

impl WellBasis {
    pub fn state(&self, n: usize) -> Result<&WellState> {
        self.states
            .get(n)
            .ok_or_else(|| Error::Contract(format!("state {n} not computed ({} available)", self.states.len())))
    }

    pub fn energy(&self, n: usize) -> Result<f64> {
        Ok(self.state(n)?.energy)
    }

    /// `⟨m|H|n⟩` between partitioned states, J.
    pub fn hamiltonian_element(&self, m: usize, n: usize) -> Result<f64> {
        let hn = self.hamiltonian.apply(&self.state(n)?.wavefunction);
        let v: f64 = self.state(m)?.wavefunction.iter().zip(&hn).map(|(a, b)| a * b).sum();
        let diag_shift = if m == n { energy_offset(&self.potential) } else { 0.0 };
        Ok(v * J_PER_GHZ + diag_shift)
    }

    /// Loop-current element `⟨m|(Φ − Φˣ)/L|n⟩`, A.
    pub fn current(&self, m: usize, n: usize) -> Result<f64> {
        let (a, b) = (&self.state(m)?.wavefunction, &self.state(n)?.wavefunction);
        let pot = &self.potential;
        let center = pot.params.phi_x.webers();
        Ok(a.iter().zip(b).zip(&pot.phi).map(|((x, y), p)| x * y * (p - center)).sum::<f64>() / pot.params.l)
    }

    /// Junction-voltage element `⟨m|q/C|n⟩`, V. Purely imaginary for real states.
    pub fn voltage(&self, m: usize, n: usize) -> Result<Complex64> {
        let (a, b) = (&self.state(m)?.wavefunction, &self.state(n)?.wavefunction);
        let dx = self.potential.spacing();
        let len = a.len();
        let mut s = 0.0;
        for j in 0..len {
            let up = if j + 1 < len { b[j + 1] } else { 0.0 };
            let down = if j > 0 { b[j - 1] } else { 0.0 };
            s += a[j] * (up - down) / (2.0 * dx);
        }
        Ok(Complex64::new(0.0, -HBAR / self.potential.params.c * s))
    }

    /// Tunneling amplitude `Δ_mn`, J: zero within a well, otherwise the
    /// minimum gap of the unpartitioned Hamiltonian at the m–n anticrossing.
    pub fn delta(&self, m: usize, n: usize) -> Result<f64> {
        self.state(m)?;
        self.state(n)?;
        if same_well(m, n) {
            return Ok(0.0);
        }
        let (left, right) = if m % 2 == 0 { (m, n) } else { (n, m) };
        let levels = self.states.len() / 2;
        anticrossing(&self.potential.params, &self.grid, left, right, levels).map(|a| a.gap)
    }
}

/// Persistent current `(I₁₁ − I₀₀)/2`.
pub fn persistent_current(basis: &WellBasis) -> Result<Current> {
    Ok(Current::from_amps((basis.current(1, 1)? - basis.current(0, 0)?) / 2.0))
}

/// `√(ħω₃₁/2C)`, V.
pub fn harmonic_v31(omega31: f64, c: f64) -> Result<f64> {
    if !(omega31 > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!("omega31 and C must be positive, got {omega31} and {c}")));
    }
    Ok((HBAR * omega31 / (2.0 * c)).sqrt())
}

/// Located anticrossing of a left and a right state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anticrossing {
    pub bias: Flux,
    /// Minimum gap, J.
    pub gap: f64,
}

fn full_gap(params: &RfSquidParams, grid: &GridSpec, lower: usize) -> Result<f64> {
    let pot = effective_potential(params, grid)?;
    let h = hamiltonian(&pot)?;
    Ok((h.eigenvalue(lower + 1)? - h.eigenvalue(lower)?) * J_PER_GHZ)
}

fn half_space_energies(params: &RfSquidParams, grid: &GridSpec, levels: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let pot = effective_potential(params, grid)?;
    let h = hamiltonian(&pot)?;
    let p = pot.partition;
    let left = h.block(0..p)?;
    let right = h.block(p + 1..pot.u.len())?;
    let e = |t: &SymTridiagonal| -> Result<Vec<f64>> { (0..levels).map(|k| t.eigenvalue(k)).collect() };
    Ok((e(&left)?, e(&right)?))
}

/// Minimum full-Hamiltonian gap between left state `left` and right state `right`.
pub fn anticrossing(params: &RfSquidParams, grid: &GridSpec, left: usize, right: usize, levels: usize) -> Result<Anticrossing> {
    let (kl, kr) = (left / 2, right / 2);
    let levels = levels.max(kl.max(kr) + 1);
    // Secant on the partitioned level difference locates the crossing.
    let diff = |phi: f64| -> Result<f64> {
        let (l, r) = half_space_energies(&params.at_bias(Flux::from_micro_phi0(phi)), grid, levels)?;
        Ok(l[kl] - r[kr])
    };
    let (mut x0, mut x1) = (0.0, 100.0);
    let (mut f0, mut f1) = (diff(x0)?, diff(x1)?);
    for _ in 0..60 {
        if f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = diff(x1)?;
        if (x1 - x0).abs() < 1e-9 * x1.abs().max(1.0) {
            break;
        }
    }
    let cross = x1;
    let (l, r) = half_space_energies(&params.at_bias(Flux::from_micro_phi0(cross)), grid, levels)?;
    let level = l[kl];
    let lower = l.iter().chain(&r).filter(|e| **e < level - 1e-9 * level.abs().max(1.0)).count();
    let lower = lower.min(l.iter().chain(&r).count() - 1);
    // The anticrossing is a hyperbola in bias: golden-section on the gap.
    let gap = |phi: f64| full_gap(&params.at_bias(Flux::from_micro_phi0(phi)), grid, lower);
    let slope = (f1 - f0) / (x1 - x0);
    let est = gap(cross)? / J_PER_GHZ;
    let reach = if slope.abs() > 0.0 && slope.is_finite() { 4.0 * est / slope.abs() } else { 10.0 };
    let (mut a, mut b) = (cross - reach.max(1e-3), cross + reach.max(1e-3));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (gap(c)?, gap(d)?);
    for _ in 0..80 {
        if (b - a).abs() < 1e-7 * cross.abs().max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = gap(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = gap(d)?;
        }
    }
    let bias = 0.5 * (a + b);
    Ok(Anticrossing { bias: Flux::from_micro_phi0(bias), gap: gap(bias)?.min(fc).min(fd) })
}

/// Circuit-derived inputs of the two-peak model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisQuantities {
    pub delta01: Energy,
    pub delta03: Energy,
    /// Bias of the 0–3 anticrossing.
    pub phi31: Flux,
    /// `(E₃ − E₁)/h` in the right well.
    pub omega31: Energy,
    pub ip: Current,
    /// `|V₃₁|`, V.
    pub v31: f64,
    /// Junction capacitance, F.
    pub c: f64,
}

/// Noise inputs of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseInputs {
    pub w_phi: Flux,
    pub gamma_phi: Flux,
    pub tan_delta_c: f64,
    pub temperature: Temperature,
}

impl BasisQuantities {
    /// `ζ = 2C V₃₁² tan δ_C`, J.
    pub fn zeta_energy(&self, tan_delta_c: f64) -> f64 {
        2.0 * self.c * self.v31 * self.v31 * tan_delta_c
    }

    /// Two-peak parameters with `ζ` mapped to flux units through `2I_P`.
    pub fn mrt_params(&self, noise: &NoiseInputs) -> Result<MrtParams> {
        if !(noise.tan_delta_c >= 0.0 && noise.tan_delta_c.is_finite()) {
            return Err(Error::Domain(format!("tan_delta_c must be non-negative, got {}", noise.tan_delta_c)));
        }
        let zeta_phi = Flux::from_webers(self.zeta_energy(noise.tan_delta_c) / (2.0 * self.ip.amps()));
        let p = MrtParams {
            delta01: self.delta01,
            delta03: self.delta03,
            phi31: self.phi31,
            w_phi: noise.w_phi,
            gamma_phi: noise.gamma_phi,
            zeta_phi,
            temperature: noise.temperature,
            ip: self.ip,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Where circuit quantities are evaluated along the bias axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// `I_P` at degeneracy, `ω₃₁` and `V₃₁` at the first-peak anticrossing.
    #[default]
    Representative,
    /// `I_P`, `ω₃₁` and `V₃₁` recomputed at every bias.
    PerBias,
}

/// Levels solved per well: states 0–3 plus one spare.
const LEVELS: usize = 3;

fn local_quantities(params: &RfSquidParams, grid: &GridSpec) -> Result<(Current, f64, f64)> {
    let basis = solve_wells(&effective_potential(params, grid)?, LEVELS)?;
    let ip = persistent_current(&basis)?;
    let omega31 = (basis.energy(3)? - basis.energy(1)?) / HBAR;
    let v31 = basis.voltage(3, 1)?.norm();
    Ok((ip, omega31, v31))
}

/// Circuit quantities at the representative biases.
pub fn basis_quantities(params: &RfSquidParams, grid: &GridSpec) -> Result<BasisQuantities> {
    let at0 = params.at_bias(Flux::ZERO);
    let (ip, _, _) = local_quantities(&at0, grid)?;
    let d01 = anticrossing(&at0, grid, 0, 1, LEVELS)?;
    let d03 = anticrossing(&at0, grid, 0, 3, LEVELS)?;
    let (_, omega31, v31) = local_quantities(&params.at_bias(d03.bias), grid)?;
    Ok(BasisQuantities {
        delta01: Energy::from_joules(d01.gap),
        delta03: Energy::from_joules(d03.gap),
        phi31: d03.bias,
        omega31: Energy::from_joules(HBAR * omega31),
        ip,
        v31,
        c: params.c,
    })
}

/// Rate curve from a given basis, delegated to the two-peak model.
pub fn rate_from_basis(basis: &BasisQuantities, noise: &NoiseInputs, grid: &[Flux], well: Well, opts: &ModelOptions) -> Result<RateCurve> {
    simulate_curve_with(grid, &basis.mrt_params(noise)?, well, opts)
}

/// Full-model rate curve for a circuit.
pub fn full_model_rate(
    params: &RfSquidParams,
    noise: &NoiseInputs,
    biases: &[Flux],
    grid: &GridSpec,
    mode: BiasMode,
) -> Result<RateCurve> {
    let base = basis_quantities(params, grid)?;
    match mode {
        BiasMode::Representative => rate_from_basis(&base, noise, biases, Well::Left, &ModelOptions::default()),
        BiasMode::PerBias => {
            let points = biases
                .par_iter()
                .map(|&phi| {
                    let (ip, omega31, v31) = local_quantities(&params.at_bias(phi), grid)?;
                    let local = BasisQuantities {
                        ip,
                        v31,
                        omega31: Energy::from_joules(HBAR * omega31),
                        phi31: Flux::from_webers(HBAR * omega31 / (2.0 * ip.amps())),
                        ..base
                    };
                    let p = local.mrt_params(noise)?;
                    let parts = RateModel::new(&p, &[phi], Well::Left, &ModelOptions::default())?
                        .parts(phi, Well::Left)?;
                    Ok(CurvePoint { phi_x: phi, rate: parts.total(), zeroth: parts.zeroth, first: parts.first })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RateCurve { points, init_well: Well::Left })
        }
    }
}

/// Log-space discrepancy between two curves on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    /// `Σ (ln a − ln b)²` over biases where both rates exceed the floor.
    pub chi2: f64,
    pub points: usize,
    /// Largest pointwise ratio `max(a/b, b/a)`.
    pub max_ratio: f64,
}

pub fn compare_curves(a: &RateCurve, b: &RateCurve, floor_per_us: f64) -> Result<CurveComparison> {
    if a.points.len() != b.points.len() {
        return Err(Error::Validation("curves have different lengths".into()));
    }
    let mut chi2 = 0.0;
    let mut points = 0;
    let mut max_ratio: f64 = 1.0;
    for (p, q) in a.points.iter().zip(&b.points) {
        let (x, y) = (p.rate.per_us(), q.rate.per_us());
        if x > floor_per_us || y > floor_per_us {
            let l = (x / y).ln();
            chi2 += l * l;
            points += 1;
            max_ratio = max_ratio.max(l.abs().exp());
        }
    }
    Ok(CurveComparison { chi2, points, max_ratio })
}
