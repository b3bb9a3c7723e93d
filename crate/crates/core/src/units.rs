//! Physical constants, unit-bearing quantity types and the conversions
//! between flux-unit noise parameters and the derived noise metrics.
//!
//! Model code works in units where `ħ = k_B = 1` with energies expressed
//! as frequencies `E/h` in GHz, fluxes in μΦ₀ and rates in 1/μs. In those
//! units an envelope `G(ν)` is a density in ns normalized as `∫ dν G = 1`,
//! which is the same statement as `∫ dω/2π G(ω) = 1` for angular frequency.
//! SI values appear only at the API boundary.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// CODATA 2018 exact and recommended values.
pub mod constants {
    /// Planck constant, J·s.
    pub const H: f64 = 6.626_070_15e-34;
    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = H / (2.0 * std::f64::consts::PI);
    /// Boltzmann constant, J/K.
    pub const K_B: f64 = 1.380_649e-23;
    /// Elementary charge, C.
    pub const E_CHARGE: f64 = 1.602_176_634e-19;
    /// Magnetic flux quantum h/2e, Wb.
    pub const PHI0: f64 = H / (2.0 * E_CHARGE);
}

/// The constants above bundled as a value, for callers that want to
/// report them or run a computation in a rescaled unit system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub h: f64,
    pub hbar: f64,
    pub k_b: f64,
    pub phi0: f64,
    pub e: f64,
}

impl PhysicalConstants {
    pub const CODATA2018: PhysicalConstants = PhysicalConstants {
        h: constants::H,
        hbar: constants::HBAR,
        k_b: constants::K_B,
        phi0: constants::PHI0,
        e: constants::E_CHARGE,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA2018
    }
}

const GHZ: f64 = 1e9;
const MICRO: f64 = 1e-6;

/// Magnetic flux, stored in μΦ₀.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Flux(f64);

impl Flux {
    pub const ZERO: Flux = Flux(0.0);

    pub const fn from_micro_phi0(v: f64) -> Self {
        Flux(v)
    }
    pub fn from_webers(wb: f64) -> Self {
        Flux(wb / (constants::PHI0 * MICRO))
    }
    pub fn from_phi0(v: f64) -> Self {
        Flux(v / MICRO)
    }
    pub const fn micro_phi0(self) -> f64 {
        self.0
    }
    pub fn phi0(self) -> f64 {
        self.0 * MICRO
    }
    pub fn webers(self) -> f64 {
        self.0 * MICRO * constants::PHI0
    }
}

/// Energy, stored as the equivalent frequency `E/h` in GHz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Energy(f64);

impl Energy {
    pub const ZERO: Energy = Energy(0.0);

    pub const fn from_ghz(v: f64) -> Self {
        Energy(v)
    }
    pub fn from_mhz(v: f64) -> Self {
        Energy(v * 1e-3)
    }
    pub fn from_joules(j: f64) -> Self {
        Energy(j / (constants::H * GHZ))
    }
    pub const fn ghz(self) -> f64 {
        self.0
    }
    pub fn mhz(self) -> f64 {
        self.0 * 1e3
    }
    pub fn hz(self) -> f64 {
        self.0 * GHZ
    }
    pub fn joules(self) -> f64 {
        self.0 * GHZ * constants::H
    }
    /// Angular frequency `E/ħ` in rad/s.
    pub fn angular(self) -> f64 {
        2.0 * PI * self.hz()
    }
    pub fn from_angular(omega: f64) -> Self {
        Energy(omega / (2.0 * PI * GHZ))
    }
}

/// Absolute temperature in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Temperature(f64);

impl Temperature {
    pub const fn from_kelvin(v: f64) -> Self {
        Temperature(v)
    }
    pub fn from_millikelvin(v: f64) -> Self {
        Temperature(v * 1e-3)
    }
    pub const fn kelvin(self) -> f64 {
        self.0
    }
    pub fn millikelvin(self) -> f64 {
        self.0 * 1e3
    }
    /// Thermal energy `k_B T`.
    pub fn energy(self) -> Energy {
        Energy::from_joules(constants::K_B * self.0)
    }
    pub fn from_energy(e: Energy) -> Self {
        Temperature(e.joules() / constants::K_B)
    }
}

/// Electric current in amperes.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Current(f64);

impl Current {
    pub const fn from_amps(v: f64) -> Self {
        Current(v)
    }
    pub fn from_micro_amps(v: f64) -> Self {
        Current(v * MICRO)
    }
    pub const fn amps(self) -> f64 {
        self.0
    }
    pub fn micro_amps(self) -> f64 {
        self.0 / MICRO
    }
}

/// Transition rate, stored in 1/μs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rate(f64);

impl Rate {
    pub const fn from_per_us(v: f64) -> Self {
        Rate(v)
    }
    pub fn from_per_ns(v: f64) -> Self {
        Rate(v * 1e3)
    }
    pub fn from_per_s(v: f64) -> Self {
        Rate(v * MICRO)
    }
    pub const fn per_us(self) -> f64 {
        self.0
    }
    pub fn per_s(self) -> f64 {
        self.0 / MICRO
    }
}

macro_rules! display_unit {
    ($t:ty, $unit:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} {}", self.0, $unit)
            }
        }
    };
}
display_unit!(Flux, "uPhi0");
display_unit!(Energy, "GHz");
display_unit!(Temperature, "K");
display_unit!(Current, "A");
display_unit!(Rate, "1/us");

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Energy bias `ε = 2 I_P Φˣ` for a flux bias measured from degeneracy.
pub fn flux_to_energy(phi_x: Flux, ip: Current) -> Result<Energy> {
    require_positive("persistent current", ip.amps())?;
    Ok(Energy::from_joules(2.0 * ip.amps() * phi_x.webers()))
}

/// Inverse of [`flux_to_energy`].
pub fn energy_to_flux(eps: Energy, ip: Current) -> Result<Flux> {
    require_positive("persistent current", ip.amps())?;
    Ok(Flux::from_webers(eps.joules() / (2.0 * ip.amps())))
}

/// GHz of energy bias per μΦ₀ of flux bias, `2 I_P Φ₀·10⁻⁶ / h / 10⁹`.
pub(crate) fn ghz_per_micro_phi0(ip: Current) -> f64 {
    2.0 * ip.amps() * constants::PHI0 * MICRO / (constants::H * GHZ)
}

/// Dimensionless ohmic coupling `η = 4 I_P γ_Φ / k_B T`.
pub fn derive_eta(gamma_phi: Flux, ip: Current, t: Temperature) -> Result<f64> {
    require_positive("temperature", t.kelvin())?;
    Ok(4.0 * ip.amps() * gamma_phi.webers() / (constants::K_B * t.kelvin()))
}

/// Shunt resistance and inductive loss tangents implied by the ohmic
/// broadening.
#[derive(Debug, Clone, PartialEq)]
pub struct InductiveLoss {
    /// Ω. Infinite when there is no ohmic flux noise.
    pub r_shunt: f64,
    /// `(ω in rad/s, tan δ_L(ω))` pairs.
    pub tan_delta_l: Vec<(f64, f64)>,
}

impl InductiveLoss {
    pub fn has_ohmic_noise(&self) -> bool {
        self.r_shunt.is_finite()
    }
}

/// `R_S = 2 I_P L² k_B T / (ħ γ_Φ)` and `tan δ_L(ω) = ωL/R_S`.
///
/// `γ_Φ = 0` yields `R_S = ∞` and vanishing loss tangents.
pub fn derive_shunt_and_inductive_loss(
    gamma_phi: Flux,
    ip: Current,
    inductance: f64,
    t: Temperature,
    omegas: &[f64],
) -> Result<InductiveLoss> {
    require_positive("persistent current", ip.amps())?;
    require_positive("inductance", inductance)?;
    require_positive("temperature", t.kelvin())?;
    if gamma_phi.micro_phi0() < 0.0 {
        return Err(Error::Domain(format!(
            "gamma_phi must be non-negative, got {}",
            gamma_phi.micro_phi0()
        )));
    }
    if let Some(w) = omegas.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::Domain(format!("angular frequency must be positive, got {w}")));
    }
    if gamma_phi.micro_phi0() == 0.0 {
        return Ok(InductiveLoss {
            r_shunt: f64::INFINITY,
            tan_delta_l: omegas.iter().map(|&w| (w, 0.0)).collect(),
        });
    }
    let r_shunt = 2.0 * ip.amps() * inductance * inductance * constants::K_B * t.kelvin()
        / (constants::HBAR * gamma_phi.webers());
    let tan_delta_l = omegas.iter().map(|&w| (w, w * inductance / r_shunt)).collect();
    Ok(InductiveLoss { r_shunt, tan_delta_l })
}

/// Capacitive loss tangent `tan δ_C = ζ_Φ / Φˣ₃₁`.
pub fn derive_tan_delta_c(zeta_phi: Flux, phi31: Flux) -> Result<f64> {
    require_positive("peak separation phi31", phi31.micro_phi0())?;
    Ok(zeta_phi.micro_phi0() / phi31.micro_phi0())
}

/// Circuit parameters of the qubit, SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitCircuitParams {
    /// Total critical current of the compound junction, A.
    pub ic: f64,
    /// Main-loop inductance, H.
    pub l: f64,
    /// Parallel junction capacitance, F.
    pub c: f64,
    /// CJJ bias in units of Φ₀.
    pub phi_cjj_x: f64,
    /// Persistent current, A.
    pub ip: f64,
}

impl QubitCircuitParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("critical current", self.ic)?;
        require_positive("inductance", self.l)?;
        require_positive("capacitance", self.c)?;
        require_positive("persistent current", self.ip)?;
        if !(self.phi_cjj_x.abs() <= 1.0) {
            return Err(Error::Domain(format!(
                "CJJ bias must satisfy |phi_cjj_x| <= 1, got {}",
                self.phi_cjj_x
            )));
        }
        Ok(())
    }
}

/// The four derived noise metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub eta: f64,
    /// Ω; infinite without ohmic noise.
    pub r_shunt: f64,
    pub tan_delta_c: f64,
    /// `(ω in rad/s, tan δ_L)`.
    pub tan_delta_l_at: Vec<(f64, f64)>,
}

impl NoiseSummary {
    pub fn compute(
        gamma_phi: Flux,
        zeta_phi: Flux,
        phi31: Flux,
        ip: Current,
        t: Temperature,
        inductance: f64,
        omegas: &[f64],
    ) -> Result<Self> {
        let eta = derive_eta(gamma_phi, ip, t)?;
        let loss = derive_shunt_and_inductive_loss(gamma_phi, ip, inductance, t, omegas)?;
        let tan_delta_c = derive_tan_delta_c(zeta_phi, phi31)?;
        Ok(NoiseSummary {
            eta,
            r_shunt: loss.r_shunt,
            tan_delta_c,
            tan_delta_l_at: loss.tan_delta_l,
        })
    }

    /// tan δ_L at `freq_hz` (ordinary frequency), from the linear scaling.
    pub fn tan_delta_l_at_hz(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz;
        if self.r_shunt.is_infinite() {
            return 0.0;
        }
        match self.tan_delta_l_at.first() {
            Some(&(w, v)) => v * omega / w,
            None => f64::NAN,
        }
    }
}

/// Angular frequency of 1 GHz, the customary reporting point for tan δ_L.
pub const ONE_GHZ_RAD: f64 = 2.0 * PI * 1e9;
