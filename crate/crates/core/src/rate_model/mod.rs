//! Two-peak macroscopic resonant tunneling rate versus flux bias.
//!
//! The rate out of the initial well is
//! `Γ(ε) = (Δ₀₁²/4ħ²)·G₀₁(ε) + (Δ₀₃²/4ħ²)·G₀₃(ε − ω₃₁)`
//! with `ε = 2 I_P Φˣ`, `G₀₁ = G_L ⋆ G_H` and `G₀₃ = G_L ⋆ G_H ⋆ G_R`.

mod lineshape;
pub mod spectrum;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::envelopes::{HighFreqBroadening, IntrawellBroadening, LowFreqBroadening, RelaxationForm};
use crate::error::{Error, Result};
use crate::units::{ghz_per_micro_phi0, Current, Energy, Flux, Rate, Temperature};

pub use lineshape::LineShape;
pub use spectrum::{convolve, convolve_lines, FrequencyGrid, LineFunction, Spectrum};

/// Which well the system is initialized in before tunneling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Well {
    #[default]
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl Well {
    /// Flux bias as seen from a left-well initialization.
    pub fn to_left_frame(self, phi: Flux) -> Flux {
        match self {
            Well::Left => phi,
            Well::Right => Flux::from_micro_phi0(-phi.micro_phi0()),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Well::Left => "L",
            Well::Right => "R",
        }
    }
}

impl std::str::FromStr for Well {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" | "l" | "left" | "Left" => Ok(Well::Left),
            "R" | "r" | "right" | "Right" => Ok(Well::Right),
            other => Err(Error::Validation(format!("unknown well tag '{other}', expected L or R"))),
        }
    }
}

/// Parameters of the two-peak model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrtParams {
    /// Tunneling amplitude to the target ground state, `Δ₀₁/h`.
    pub delta01: Energy,
    /// Tunneling amplitude to the target first excited state, `Δ₀₃/h`.
    pub delta03: Energy,
    /// Flux separation of the two peaks.
    pub phi31: Flux,
    /// r.m.s. low-frequency flux noise.
    pub w_phi: Flux,
    /// Ohmic broadening in flux units.
    pub gamma_phi: Flux,
    /// Charge-noise broadening in flux units.
    pub zeta_phi: Flux,
    pub temperature: Temperature,
    /// Persistent current, fixed.
    pub ip: Current,
}

impl MrtParams {
    /// Best-fit values for the reference qubit.
    pub fn reference() -> Self {
        MrtParams {
            delta01: Energy::from_mhz(2.72),
            delta03: Energy::from_mhz(29.8),
            phi31: Flux::from_micro_phi0(2153.6),
            w_phi: Flux::from_micro_phi0(37.2),
            gamma_phi: Flux::from_micro_phi0(0.54),
            zeta_phi: Flux::from_micro_phi0(4.53),
            temperature: Temperature::from_millikelvin(7.3),
            ip: Current::from_micro_amps(1.37),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64, bool); 8] = [
            ("delta01", self.delta01.ghz(), true),
            ("delta03", self.delta03.ghz(), false),
            ("phi31", self.phi31.micro_phi0(), true),
            ("w_phi", self.w_phi.micro_phi0(), true),
            ("gamma_phi", self.gamma_phi.micro_phi0(), false),
            ("zeta_phi", self.zeta_phi.micro_phi0(), false),
            ("temperature", self.temperature.kelvin(), true),
            ("ip", self.ip.amps(), true),
        ];
        for (name, v, strict) in checks {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                let rel = if strict { "positive" } else { "non-negative" };
                return Err(Error::Domain(format!("{name} must be finite and {rel}, got {v}")));
            }
        }
        Ok(())
    }

    /// GHz of energy bias per μΦ₀.
    pub fn energy_per_flux(&self) -> f64 {
        ghz_per_micro_phi0(self.ip)
    }

    /// `ε_p` in flux units, the zeroth-peak offset from degeneracy.
    pub fn peak_shift(&self) -> Flux {
        let e = self.energies_unchecked();
        Flux::from_micro_phi0(e.width * e.width / (2.0 * e.kt) / e.k)
    }

    pub(crate) fn energies(&self) -> Result<ModelEnergies> {
        self.validate()?;
        Ok(self.energies_unchecked())
    }

    /// Conditions under which the model's approximations are marginal.
    pub fn regime_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let e = self.energies_unchecked();
        if self.delta01.ghz() > 0.1 * e.width.max(e.gamma) {
            out.push(format!(
                "delta01 = {:.4} GHz is not small against the line width {:.4} GHz; incoherent tunneling assumption is marginal",
                self.delta01.ghz(),
                e.width.max(e.gamma)
            ));
        }
        if let Ok(eta) = crate::units::derive_eta(self.gamma_phi, self.ip, self.temperature) {
            if eta > crate::envelopes::ETA_WARN {
                out.push(format!(
                    "ohmic coupling eta = {eta:.3} exceeds {}; weak-coupling envelope may be inaccurate",
                    crate::envelopes::ETA_WARN
                ));
            }
        }
        out
    }

    fn energies_unchecked(&self) -> ModelEnergies {
        let k = self.energy_per_flux();
        ModelEnergies {
            k,
            width: k * self.w_phi.micro_phi0(),
            gamma: k * self.gamma_phi.micro_phi0(),
            zeta: k * self.zeta_phi.micro_phi0(),
            spacing: k * self.phi31.micro_phi0(),
            kt: self.temperature.energy().ghz(),
        }
    }
}

/// Model parameters converted to GHz.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ModelEnergies {
    pub k: f64,
    pub width: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub spacing: f64,
    pub kt: f64,
}

impl ModelEnergies {
    fn temperature(&self) -> Temperature {
        Temperature::from_energy(Energy::from_ghz(self.kt))
    }
    pub fn low(&self) -> Result<LowFreqBroadening> {
        LowFreqBroadening::new(Energy::from_ghz(self.width), self.temperature())
    }
    pub fn high(&self) -> Result<HighFreqBroadening> {
        HighFreqBroadening::new(Energy::from_ghz(self.gamma), self.temperature())
    }
    pub fn relax(&self, form: RelaxationForm) -> Result<IntrawellBroadening> {
        IntrawellBroadening::with_form(
            Energy::from_ghz(self.zeta),
            Energy::from_ghz(self.spacing),
            self.temperature(),
            form,
        )
    }
}

/// Numerical and model-variant settings of the line-shape computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub relaxation_form: RelaxationForm,
    /// Lattice steps per narrowest relevant width.
    pub resolution: f64,
    pub min_points: usize,
    pub max_points: usize,
    /// Fixed lattice step in GHz; overrides the automatic choice.
    pub step: Option<f64>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            relaxation_form: RelaxationForm::FullRate,
            resolution: 48.0,
            min_points: 1 << 14,
            max_points: 1 << 19,
            step: None,
        }
    }
}

impl ModelOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution >= 2.0 && self.resolution.is_finite()) {
            return Err(Error::Validation(format!("resolution must be >= 2, got {}", self.resolution)));
        }
        if self.min_points < 16 || self.max_points < self.min_points {
            return Err(Error::Validation(format!(
                "need 16 <= min_points <= max_points, got {} and {}",
                self.min_points, self.max_points
            )));
        }
        Ok(())
    }

    /// The lattice step the automatic rule picks for `p` over `biases`.
    pub fn resolve_step(&self, p: &MrtParams, biases: &[Flux], well: Well) -> Result<f64> {
        let e = p.energies()?;
        let (lo, hi) = energy_window(p, biases, well)?;
        Ok(lineshape::auto_step(&e, lo, hi, self))
    }
}

fn energy_window(p: &MrtParams, biases: &[Flux], well: Well) -> Result<(f64, f64)> {
    if biases.is_empty() {
        return Err(Error::Domain("bias grid is empty".into()));
    }
    let k = p.energy_per_flux();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in biases {
        let v = well.to_left_frame(*b).micro_phi0();
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite flux bias {v}")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((k * lo, k * hi))
}

/// `π²Δ²` in 1/μs per ns of line shape: `(2πΔ)²/4` with Δ in GHz.
fn amplitude(delta: Energy) -> f64 {
    1e3 * PI * PI * delta.ghz() * delta.ghz()
}

/// A line shape paired with the parameters it was built from.
#[derive(Debug, Clone)]
pub struct RateModel {
    params: MrtParams,
    shape: LineShape,
}

/// Zeroth- and first-peak contributions at one bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParts {
    pub zeroth: Rate,
    pub first: Rate,
}

impl RateParts {
    pub fn total(&self) -> Rate {
        Rate::from_per_us(self.zeroth.per_us() + self.first.per_us())
    }
}

impl RateModel {
    /// Tabulate the line shape for evaluation anywhere in `biases`' range.
    pub fn new(p: &MrtParams, biases: &[Flux], well: Well, opts: &ModelOptions) -> Result<Self> {
        opts.validate()?;
        let e = p.energies()?;
        let (lo, hi) = energy_window(p, biases, well)?;
        let shape = LineShape::build(&e, lo, hi, opts)?;
        Ok(RateModel { params: *p, shape })
    }

    pub fn params(&self) -> &MrtParams {
        &self.params
    }
    pub fn line_shape(&self) -> &LineShape {
        &self.shape
    }

    /// Line-shape densities `(G₀₁(ε), G₀₃(ε − ω₃₁))` in ns.
    pub fn densities(&self, phi: Flux, well: Well) -> Result<(f64, f64)> {
        let eps = self.params.energy_per_flux() * well.to_left_frame(phi).micro_phi0();
        self.shape.densities(eps)
    }

    pub fn parts(&self, phi: Flux, well: Well) -> Result<RateParts> {
        let (g01, g03) = self.densities(phi, well)?;
        Ok(RateParts {
            zeroth: Rate::from_per_us(amplitude(self.params.delta01) * g01),
            first: Rate::from_per_us(amplitude(self.params.delta03) * g03),
        })
    }

    pub fn total(&self, phi: Flux, well: Well) -> Result<Rate> {
        Ok(self.parts(phi, well)?.total())
    }
}

/// Rates from line-shape densities for given tunneling amplitudes.
pub(crate) fn rates_from_densities(delta01: Energy, delta03: Energy, g01: f64, g03: f64) -> (f64, f64) {
    (amplitude(delta01) * g01, amplitude(delta03) * g03)
}

/// Zeroth-peak rate, left-well initialization.
pub fn rate_01(phi_x: Flux, p: &MrtParams) -> Result<Rate> {
    Ok(RateModel::new(p, &[phi_x], Well::Left, &ModelOptions::default())?.parts(phi_x, Well::Left)?.zeroth)
}

/// First-peak rate, left-well initialization.
pub fn rate_03(phi_x: Flux, p: &MrtParams) -> Result<Rate> {
    Ok(RateModel::new(p, &[phi_x], Well::Left, &ModelOptions::default())?.parts(phi_x, Well::Left)?.first)
}

/// Two-peak rate out of `well`.
pub fn total_rate(phi_x: Flux, p: &MrtParams, well: Well) -> Result<Rate> {
    RateModel::new(p, &[phi_x], well, &ModelOptions::default())?.total(phi_x, well)
}

/// One sample of a model curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub phi_x: Flux,
    pub rate: Rate,
    pub zeroth: Rate,
    pub first: Rate,
}

/// Model rate curve over increasing flux bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<CurvePoint>,
    pub init_well: Well,
}

impl RateCurve {
    pub fn biases(&self) -> Vec<Flux> {
        self.points.iter().map(|p| p.phi_x).collect()
    }
    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate.per_us()).collect()
    }
}

/// Tabulate the total rate over a strictly increasing bias grid.
pub fn simulate_curve(grid: &[Flux], p: &MrtParams, well: Well) -> Result<RateCurve> {
    simulate_curve_with(grid, p, well, &ModelOptions::default())
}

pub fn simulate_curve_with(grid: &[Flux], p: &MrtParams, well: Well, opts: &ModelOptions) -> Result<RateCurve> {
    if let Some(w) = grid.windows(2).find(|w| !(w[1].micro_phi0() > w[0].micro_phi0())) {
        return Err(Error::Domain(format!(
            "bias grid must be strictly increasing ({} then {})",
            w[0].micro_phi0(),
            w[1].micro_phi0()
        )));
    }
    for w in p.regime_warnings() {
        log::warn!("{w}");
    }
    let model = RateModel::new(p, grid, well, opts)?;
    let points = grid
        .iter()
        .map(|&phi| {
            let parts = model.parts(phi, well)?;
            Ok(CurvePoint { phi_x: phi, rate: parts.total(), zeroth: parts.zeroth, first: parts.first })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurve { points, init_well: well })
}

/// `n` evenly spaced biases over `[lo, hi]` μΦ₀.
pub fn uniform_biases(lo: f64, hi: f64, n: usize) -> Vec<Flux> {
    match n {
        0 => Vec::new(),
        1 => vec![Flux::from_micro_phi0(lo)],
        _ => (0..n)
            .map(|i| Flux::from_micro_phi0(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}
