//! Broadening envelopes of the tunneling line shape.
//!
//! Every envelope is a function of the energy offset `ν = E/h` (GHz) and
//! returns a spectral density in ns, normalized as `∫ dν G(ν) = 1`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Energy, Rate, Temperature};

/// Below this `|ν/k_BT|` the thermal factors use their Taylor series.
const SERIES_CUTOFF: f64 = 1e-6;

/// Ohmic coupling above which the weak-coupling envelope is suspect.
pub const ETA_WARN: f64 = 0.3;

/// `x / (1 − e^{−x})`, the Bose enhancement of the ohmic spectral density.
pub fn thermal_factor(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 + x * (0.5 + x / 12.0)
    } else {
        x / -(-x).exp_m1()
    }
}

/// Derivative of [`thermal_factor`].
pub(crate) fn thermal_factor_slope(x: f64) -> f64 {
    if x.abs() < 0.05 {
        let x2 = x * x;
        0.5 + x * (1.0 / 6.0 - x2 * (1.0 / 180.0 - x2 / 5040.0))
    } else if x > 0.0 {
        let e = (-x).exp();
        let d = -(-x).exp_m1();
        (1.0 - e * (1.0 + x)) / (d * d)
    } else {
        let e = x.exp();
        let d = x.exp_m1();
        (e * e - e * (1.0 + x)) / (d * d)
    }
}

/// `tanh(x) / (1 − e^{−x})`, finite at `x = 0` where it equals 1.
pub fn relaxation_factor(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        (1.0 + e) / (1.0 + e * e)
    } else {
        let e = x.exp();
        (e * e + e) / (e * e + 1.0)
    }
}

/// Probability mass of a Cauchy density of half-width `width` centered at
/// zero over the cell `[ν − h/2, ν + h/2]`.
pub(crate) fn cauchy_cell_mass(nu: f64, h: f64, width: f64) -> f64 {
    let half = 0.5 * h;
    (h * width).atan2(width * width + nu * nu - half * half) / PI
}

fn normal_cdf_diff(za: f64, zb: f64) -> f64 {
    if za >= 0.0 {
        0.5 * (libm::erfc(za * FRAC_1_SQRT_2) - libm::erfc(zb * FRAC_1_SQRT_2))
    } else if zb <= 0.0 {
        0.5 * (libm::erfc(-zb * FRAC_1_SQRT_2) - libm::erfc(-za * FRAC_1_SQRT_2))
    } else {
        0.5 * (libm::erf(zb * FRAC_1_SQRT_2) - libm::erf(za * FRAC_1_SQRT_2))
    }
}

fn check_temperature(t: Temperature) -> Result<f64> {
    let kt = t.energy().ghz();
    if kt > 0.0 && kt.is_finite() {
        Ok(kt)
    } else {
        Err(Error::Domain(format!("temperature must be positive, got {} K", t.kelvin())))
    }
}

/// Gaussian envelope from low-frequency flux noise.
///
/// The reorganization shift is tied to the width by `W² = 2 k_B T ε_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowFreqBroadening {
    width: f64,
    shift: f64,
    kt: f64,
}

impl LowFreqBroadening {
    pub fn new(width: Energy, t: Temperature) -> Result<Self> {
        let kt = check_temperature(t)?;
        let w = width.ghz();
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!("Gaussian width must be positive, got {w} GHz")));
        }
        Ok(LowFreqBroadening { width: w, shift: w * w / (2.0 * kt), kt })
    }

    pub fn width(&self) -> Energy {
        Energy::from_ghz(self.width)
    }
    pub fn shift(&self) -> Energy {
        Energy::from_ghz(self.shift)
    }
    pub fn thermal_energy(&self) -> Energy {
        Energy::from_ghz(self.kt)
    }

    pub fn density(&self, nu: Energy) -> f64 {
        self.at(nu.ghz())
    }

    pub(crate) fn at(&self, nu: f64) -> f64 {
        let z = (nu - self.shift) / self.width;
        (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * self.width)
    }

    /// Mean of the density over `[ν − h/2, ν + h/2]`.
    pub(crate) fn cell_mean(&self, nu: f64, h: f64) -> f64 {
        let za = (nu - 0.5 * h - self.shift) / self.width;
        let zb = (nu + 0.5 * h - self.shift) / self.width;
        normal_cdf_diff(za, zb) / h
    }
}

/// Lorentzian envelope from ohmic (high-frequency) flux noise, weighted by
/// the thermal factor so that it obeys detailed balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighFreqBroadening {
    gamma: f64,
    kt: f64,
}

impl HighFreqBroadening {
    /// `gamma = 0` is allowed here and marks the delta-function limit;
    /// [`g_high`] rejects it.
    pub fn new(gamma: Energy, t: Temperature) -> Result<Self> {
        let kt = check_temperature(t)?;
        let g = gamma.ghz();
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::Domain(format!("ohmic half-width must be non-negative, got {g} GHz")));
        }
        let eta = 2.0 * g / kt;
        if eta > ETA_WARN {
            log::debug!("ohmic coupling eta = {eta:.3} exceeds {ETA_WARN}; weak-coupling envelope may be inaccurate");
        }
        Ok(HighFreqBroadening { gamma: g, kt })
    }

    pub fn gamma(&self) -> Energy {
        Energy::from_ghz(self.gamma)
    }
    pub fn thermal_energy(&self) -> Energy {
        Energy::from_ghz(self.kt)
    }
    /// Dimensionless ohmic coupling `2γ / k_B T`.
    pub fn eta(&self) -> f64 {
        2.0 * self.gamma / self.kt
    }
    pub fn is_delta(&self) -> bool {
        self.gamma == 0.0
    }

    pub(crate) fn at(&self, nu: f64) -> f64 {
        let g = self.gamma;
        g / (PI * (nu * nu + g * g)) * thermal_factor(nu / self.kt)
    }

    /// Mean over `[ν − h/2, ν + h/2]`, with the thermal factor expanded to
    /// first order about the cell center.
    pub(crate) fn cell_mean(&self, nu: f64, h: f64) -> f64 {
        let g = self.gamma;
        let half = 0.5 * h;
        let mass = cauchy_cell_mass(nu, h, g);
        let lo = nu - half;
        let first = g / (2.0 * PI) * (2.0 * nu * h / (lo * lo + g * g)).ln_1p() - nu * mass;
        let x = nu / self.kt;
        (thermal_factor(x) * mass + thermal_factor_slope(x) / self.kt * first) / h
    }
}

/// Which Lorentzian width convention the relaxation envelope uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationForm {
    /// `2Γ/(ω² + Γ²)`: half-width equal to the relaxation rate.
    #[default]
    FullRate,
    /// `Γ/(ω² + (Γ/2)²)`: half-width equal to half the relaxation rate.
    HalfRate,
}

/// Charge-noise induced intrawell relaxation from the excited target state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntrawellBroadening {
    zeta: f64,
    spacing: f64,
    kt: f64,
    form: RelaxationForm,
}

impl IntrawellBroadening {
    pub fn new(zeta: Energy, spacing: Energy, t: Temperature) -> Result<Self> {
        Self::with_form(zeta, spacing, t, RelaxationForm::FullRate)
    }

    pub fn with_form(zeta: Energy, spacing: Energy, t: Temperature, form: RelaxationForm) -> Result<Self> {
        let kt = check_temperature(t)?;
        let (z, s) = (zeta.ghz(), spacing.ghz());
        if !(z >= 0.0 && z.is_finite()) {
            return Err(Error::Domain(format!("charge-noise coefficient must be non-negative, got {z} GHz")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!("intrawell spacing must be positive, got {s} GHz")));
        }
        Ok(IntrawellBroadening { zeta: z, spacing: s, kt, form })
    }

    pub fn zeta(&self) -> Energy {
        Energy::from_ghz(self.zeta)
    }
    pub fn spacing(&self) -> Energy {
        Energy::from_ghz(self.spacing)
    }
    pub fn thermal_energy(&self) -> Energy {
        Energy::from_ghz(self.kt)
    }
    pub fn form(&self) -> RelaxationForm {
        self.form
    }
    pub fn is_delta(&self) -> bool {
        self.zeta == 0.0
    }

    /// Relaxation rate divided by 2π, in GHz.
    pub(crate) fn rate_ghz(&self, nu: f64) -> f64 {
        self.zeta * relaxation_factor(nu / self.kt)
    }

    /// Lorentzian half-width of the envelope at offset `ν`, GHz.
    pub(crate) fn half_width(&self, offset: f64) -> f64 {
        let g = self.rate_ghz(offset + self.spacing);
        match self.form {
            RelaxationForm::FullRate => g,
            RelaxationForm::HalfRate => 0.5 * g,
        }
    }

    /// `half_width(offset)·e^{−(offset+ω₃₁)/k_BT}`, finite for any offset.
    pub(crate) fn half_width_tilted(&self, offset: f64) -> f64 {
        let g = self.rate_ghz(-(offset + self.spacing));
        match self.form {
            RelaxationForm::FullRate => g,
            RelaxationForm::HalfRate => 0.5 * g,
        }
    }

    pub(crate) fn at(&self, nu: f64) -> f64 {
        let g = self.half_width(nu);
        g / (PI * (nu * nu + g * g))
    }

    pub(crate) fn cell_mean(&self, nu: f64, h: f64) -> f64 {
        cauchy_cell_mass(nu, h, self.half_width(nu)) / h
    }
}

/// One of the three broadening envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeSpec {
    Gaussian(LowFreqBroadening),
    Ohmic(HighFreqBroadening),
    Relaxation(IntrawellBroadening),
}

impl EnvelopeSpec {
    pub fn density(&self, nu: Energy) -> Result<f64> {
        match self {
            EnvelopeSpec::Gaussian(p) => Ok(g_low(nu, p)),
            EnvelopeSpec::Ohmic(p) => g_high(nu, p),
            EnvelopeSpec::Relaxation(p) => g_relax(nu, p),
        }
    }

    /// Half-width used to size sampling grids.
    pub fn scale(&self) -> Energy {
        match self {
            EnvelopeSpec::Gaussian(p) => p.width(),
            EnvelopeSpec::Ohmic(p) => p.gamma(),
            EnvelopeSpec::Relaxation(p) => p.zeta(),
        }
    }
}

/// Gaussian envelope `G_L`, centered at the reorganization shift.
pub fn g_low(nu: Energy, p: &LowFreqBroadening) -> f64 {
    p.at(nu.ghz())
}

/// Ohmic envelope `G_H`. Rejects the `γ = 0` delta limit.
pub fn g_high(nu: Energy, p: &HighFreqBroadening) -> Result<f64> {
    if p.is_delta() {
        return Err(Error::Domain("g_high needs gamma > 0; gamma = 0 is the delta-function limit".into()));
    }
    Ok(p.at(nu.ghz()))
}

/// Intrawell relaxation rate `Γ₃₁` at transition energy `ν`.
pub fn intrawell_rate(nu: Energy, p: &IntrawellBroadening) -> Rate {
    Rate::from_per_ns(2.0 * PI * p.rate_ghz(nu.ghz()))
}

/// Relaxation envelope `G_R`. Rejects the `ζ = 0` delta limit.
pub fn g_relax(nu: Energy, p: &IntrawellBroadening) -> Result<f64> {
    if p.is_delta() {
        return Err(Error::Domain("g_relax needs zeta > 0; zeta = 0 is the delta-function limit".into()));
    }
    Ok(p.at(nu.ghz()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t() -> Temperature {
        Temperature::from_millikelvin(7.3)
    }

    #[test]
    fn thermal_factor_is_continuous_at_series_cutoff() {
        for x in [SERIES_CUTOFF * 0.999, SERIES_CUTOFF * 1.001, -SERIES_CUTOFF * 1.001] {
            assert_relative_eq!(thermal_factor(x), 1.0 + x / 2.0, max_relative = 1e-12);
        }
        assert_eq!(thermal_factor(0.0), 1.0);
    }

    #[test]
    fn thermal_slope_matches_finite_difference() {
        for x in [-30.0, -3.0, -0.06, -0.04, 0.0, 0.01, 0.049, 0.051, 1.0, 12.0, 40.0] {
            let d = 1e-5;
            let fd = (thermal_factor(x + d) - thermal_factor(x - d)) / (2.0 * d);
            assert_relative_eq!(thermal_factor_slope(x), fd, max_relative = 1e-7, epsilon = 1e-14);
        }
    }

    #[test]
    fn relaxation_factor_limits() {
        assert_eq!(relaxation_factor(0.0), 1.0);
        assert_relative_eq!(relaxation_factor(50.0), 1.0, max_relative = 1e-15);
        let x: f64 = 0.7;
        assert_relative_eq!(relaxation_factor(x), x.tanh() / (1.0 - (-x).exp()), max_relative = 1e-14);
        assert!(relaxation_factor(-800.0) >= 0.0);
    }

    #[test]
    fn gaussian_peak_and_sigma_point() {
        let w = Energy::from_mhz(318.0);
        let p = LowFreqBroadening::new(w, t()).unwrap();
        let peak = g_low(p.shift(), &p);
        assert_relative_eq!(peak, 1.0 / ((2.0 * PI).sqrt() * w.ghz()), max_relative = 1e-15);
        let at_sigma = g_low(Energy::from_ghz(p.shift().ghz() + w.ghz()), &p);
        assert_relative_eq!(at_sigma, (-0.5f64).exp() * peak, max_relative = 1e-14);
    }

    #[test]
    fn fdt_tie_is_exact() {
        let p = LowFreqBroadening::new(Energy::from_mhz(318.0), t()).unwrap();
        let w = p.width().ghz();
        assert_relative_eq!(w * w, 2.0 * p.thermal_energy().ghz() * p.shift().ghz(), max_relative = 1e-15);
    }

    #[test]
    fn ohmic_value_at_zero() {
        let p = HighFreqBroadening::new(Energy::from_mhz(4.6), t()).unwrap();
        // 2ħ/γ in frequency units is 1/(πγ).
        assert_relative_eq!(g_high(Energy::ZERO, &p).unwrap(), 1.0 / (PI * 4.6e-3), max_relative = 1e-14);
    }

    #[test]
    fn delta_limits_are_rejected() {
        let h = HighFreqBroadening::new(Energy::ZERO, t()).unwrap();
        assert!(g_high(Energy::ZERO, &h).is_err());
        let r = IntrawellBroadening::new(Energy::ZERO, Energy::from_ghz(18.0), t()).unwrap();
        assert!(g_relax(Energy::ZERO, &r).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(LowFreqBroadening::new(Energy::ZERO, t()).is_err());
        assert!(LowFreqBroadening::new(Energy::from_ghz(0.3), Temperature::from_kelvin(0.0)).is_err());
        assert!(HighFreqBroadening::new(Energy::from_ghz(-1.0), t()).is_err());
        assert!(IntrawellBroadening::new(Energy::from_ghz(0.1), Energy::ZERO, t()).is_err());
    }

    #[test]
    fn relaxation_value_at_resonance() {
        let zeta = Energy::from_mhz(38.7);
        let kt = t().energy().ghz();
        let p = IntrawellBroadening::new(zeta, Energy::from_ghz(60.0 * kt), t()).unwrap();
        assert_relative_eq!(g_relax(Energy::ZERO, &p).unwrap(), 1.0 / (PI * zeta.ghz()), max_relative = 1e-12);
        let half = IntrawellBroadening::with_form(zeta, Energy::from_ghz(60.0 * kt), t(), RelaxationForm::HalfRate)
            .unwrap();
        assert_relative_eq!(half.at(0.0), 2.0 * p.at(0.0), max_relative = 1e-12);
    }

    #[test]
    fn intrawell_rate_limits() {
        let zeta = Energy::from_mhz(38.7);
        let p = IntrawellBroadening::new(zeta, Energy::from_ghz(18.0), t()).unwrap();
        let zeta_rate = 2.0 * PI * zeta.ghz() * 1e3;
        assert_relative_eq!(intrawell_rate(Energy::ZERO, &p).per_us(), zeta_rate, max_relative = 1e-15);
        assert_relative_eq!(intrawell_rate(Energy::from_ghz(100.0), &p).per_us(), zeta_rate, max_relative = 1e-12);
    }

    #[test]
    fn cell_means_approach_point_values_for_fine_cells() {
        let tt = t();
        let l = LowFreqBroadening::new(Energy::from_mhz(318.0), tt).unwrap();
        let hf = HighFreqBroadening::new(Energy::from_mhz(4.6), tt).unwrap();
        let r = IntrawellBroadening::new(Energy::from_mhz(38.7), Energy::from_ghz(18.0), tt).unwrap();
        let h = 1e-5;
        for nu in [-0.5, -0.01, 0.0, 0.003, 0.2, 1.5] {
            assert_relative_eq!(l.cell_mean(nu, h), l.at(nu), max_relative = 1e-6);
            assert_relative_eq!(hf.cell_mean(nu, h), hf.at(nu), max_relative = 1e-6);
            assert_relative_eq!(r.cell_mean(nu, h), r.at(nu), max_relative = 1e-5);
        }
    }

    #[test]
    fn ohmic_cell_means_conserve_mass_of_narrow_core() {
        let hf = HighFreqBroadening::new(Energy::from_mhz(0.5), t()).unwrap();
        let h = 2e-3;
        let cells: f64 = (-250i64..=250).map(|k| hf.cell_mean(k as f64 * h, h) * h).sum();
        let fine = 1e-6;
        let half = 250.5 * h;
        let n = (2.0 * half / fine) as i64;
        let direct: f64 = (0..n).map(|k| hf.at(-half + (k as f64 + 0.5) * fine) * fine).sum();
        assert_relative_eq!(cells, direct, max_relative = 1e-4);
    }

    proptest::proptest! {
        #[test]
        fn detailed_balance(n in -20.0f64..20.0, g_rel in 0.001f64..0.3, z_rel in 0.001f64..0.5) {
            let tt = t();
            let kt = tt.energy().ghz();
            let nu = n * kt;
            let hf = HighFreqBroadening::new(Energy::from_ghz(g_rel * kt), tt).unwrap();
            let ratio = hf.at(nu) * (-n).exp() / hf.at(-nu);
            proptest::prop_assert!((ratio - 1.0).abs() < 1e-12, "ohmic ratio {}", ratio);
            let r = IntrawellBroadening::new(Energy::from_ghz(z_rel * kt), Energy::from_ghz(18.0), tt).unwrap();
            let a = intrawell_rate(Energy::from_ghz(nu), &r).per_us();
            let b = intrawell_rate(Energy::from_ghz(-nu), &r).per_us();
            proptest::prop_assert!((a * (-n).exp() / b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn positivity_and_asymmetry(n in 1e-3f64..40.0, g_rel in 0.001f64..0.3) {
            let tt = t();
            let kt = tt.energy().ghz();
            let hf = HighFreqBroadening::new(Energy::from_ghz(g_rel * kt), tt).unwrap();
            let (p, m) = (hf.at(n * kt), hf.at(-n * kt));
            proptest::prop_assert!(p > m && m > 0.0);
            let l = LowFreqBroadening::new(Energy::from_ghz(2.0 * kt), tt).unwrap();
            proptest::prop_assert!(l.at(n * kt) > 0.0 && l.at(-n * kt) > 0.0);
            let r = IntrawellBroadening::new(Energy::from_ghz(0.1 * kt), Energy::from_ghz(18.0), tt).unwrap();
            proptest::prop_assert!(r.at(n * kt) > 0.0 && r.at(-n * kt) > 0.0);
        }

        #[test]
        fn fdt_tie_holds(w in 1e-3f64..10.0, t_mk in 1.0f64..100.0) {
            let tt = Temperature::from_millikelvin(t_mk);
            let p = LowFreqBroadening::new(Energy::from_ghz(w), tt).unwrap();
            let lhs = p.width().ghz().powi(2);
            let rhs = 2.0 * p.thermal_energy().ghz() * p.shift().ghz();
            proptest::prop_assert!((lhs / rhs - 1.0).abs() < 1e-12);
        }
    }
}
