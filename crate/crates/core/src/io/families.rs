//! Parameter ladders illustrating each broadening mechanism in isolation.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::tables::{family_table, Table};
use crate::rate_model::{simulate_curve_with, uniform_biases, ModelOptions, RateCurve};
use crate::units::{Current, Energy, Flux, Temperature};
use crate::{MrtParams, Well};

/// One curve of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub label: String,
    pub params: MrtParams,
    pub well: Well,
    /// The varied parameter, μΦ₀.
    pub knob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub name: &'static str,
    pub members: Vec<Member>,
    pub biases: Vec<Flux>,
}

fn base() -> MrtParams {
    MrtParams {
        delta01: Energy::from_mhz(2.0),
        delta03: Energy::ZERO,
        phi31: Flux::from_micro_phi0(2153.6),
        w_phi: Flux::from_micro_phi0(35.0),
        gamma_phi: Flux::from_micro_phi0(10.0),
        zeta_phi: Flux::ZERO,
        temperature: Temperature::from_millikelvin(5.0),
        ip: Current::from_micro_amps(1.37),
    }
}

pub const W_LADDER: [f64; 2] = [10.0, 30.0];
pub const GAMMA_LADDER: [f64; 4] = [0.1, 1.0, 3.0, 10.0];
pub const ZETA_LADDER: [f64; 4] = [0.5, 2.0, 5.0, 10.0];

/// Low-frequency width ladder, both initial wells.
pub fn width_family() -> Family {
    let members = W_LADDER
        .iter()
        .flat_map(|&w| {
            [Well::Left, Well::Right].map(|well| Member {
                label: format!("w{w}_{}", well.tag()),
                params: MrtParams { w_phi: Flux::from_micro_phi0(w), ..base() },
                well,
                knob: w,
            })
        })
        .collect();
    Family { name: "width", members, biases: uniform_biases(-400.0, 400.0, 401) }
}

/// High-frequency width ladder, both initial wells.
pub fn gamma_family() -> Family {
    let members = GAMMA_LADDER
        .iter()
        .flat_map(|&g| {
            [Well::Left, Well::Right].map(|well| Member {
                label: format!("gamma{g}_{}", well.tag()),
                params: MrtParams { gamma_phi: Flux::from_micro_phi0(g), ..base() },
                well,
                knob: g,
            })
        })
        .collect();
    Family { name: "gamma", members, biases: uniform_biases(-400.0, 400.0, 401) }
}

/// Intrawell relaxation ladder, both peaks, left well.
pub fn zeta_family() -> Family {
    let members = ZETA_LADDER
        .iter()
        .map(|&z| Member {
            label: format!("zeta{z}_L"),
            params: MrtParams {
                delta03: Energy::from_mhz(20.0),
                gamma_phi: Flux::from_micro_phi0(3.0),
                zeta_phi: Flux::from_micro_phi0(z),
                ..base()
            },
            well: Well::Left,
            knob: z,
        })
        .collect();
    Family { name: "zeta", members, biases: uniform_biases(-500.0, 3000.0, 701) }
}

pub fn broadening_families() -> Vec<Family> {
    vec![width_family(), gamma_family(), zeta_family()]
}

impl Family {
    pub fn curves(&self, opts: &ModelOptions) -> Result<Vec<(String, RateCurve)>> {
        self.members
            .iter()
            .map(|m| Ok((m.label.clone(), simulate_curve_with(&self.biases, &m.params, m.well, opts)?)))
            .collect()
    }

    pub fn table(&self, opts: &ModelOptions) -> Result<Table> {
        family_table(&self.curves(opts)?)
    }

    /// Write `families_<name>.tsv` into `dir`.
    pub fn write(&self, dir: &Path, opts: &ModelOptions) -> Result<PathBuf> {
        let path = dir.join(format!("families_{}.tsv", self.name));
        self.table(opts)?.write(&path)?;
        Ok(path)
    }
}

fn argmax(rates: &[f64]) -> Result<usize> {
    rates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Domain("empty curve".into()))
}

/// Linear interpolation of the flux where `rates` crosses `level`
/// between samples `i` and `j`.
fn crossing(phi: &[f64], rates: &[f64], i: usize, j: usize, level: f64) -> f64 {
    let t = (level - rates[i]) / (rates[j] - rates[i]);
    phi[i] + t * (phi[j] - phi[i])
}

/// Full width at half maximum of the tallest peak, μΦ₀.
pub fn fwhm(phi: &[f64], rates: &[f64]) -> Result<f64> {
    let top = argmax(rates)?;
    let half = 0.5 * rates[top];
    let left = (0..top).rev().find(|&i| rates[i] < half).ok_or_else(|| Error::Domain("peak is not resolved on the left".into()))?;
    let right = (top + 1..rates.len()).find(|&i| rates[i] < half).ok_or_else(|| Error::Domain("peak is not resolved on the right".into()))?;
    Ok(crossing(phi, rates, right - 1, right, half) - crossing(phi, rates, left, left + 1, half))
}

/// `ln(Γ(φ_peak + d) / Γ(φ_peak − d))`, positive when the tail leans to
/// larger bias.
pub fn tail_asymmetry(phi: &[f64], rates: &[f64], d: f64) -> Result<f64> {
    let top = argmax(rates)?;
    let at = |x: f64| -> Result<f64> {
        let j = phi.partition_point(|p| *p < x);
        if j == 0 || j >= phi.len() {
            return Err(Error::Domain(format!("offset {d} leaves the bias window")));
        }
        let t = (x - phi[j - 1]) / (phi[j] - phi[j - 1]);
        Ok((rates[j - 1].ln() * (1.0 - t) + rates[j].ln() * t).exp())
    };
    Ok((at(phi[top] + d)? / at(phi[top] - d)?).ln())
}

/// Minimum rate strictly between the zeroth and first peaks.
pub fn valley_level(phi: &[f64], rates: &[f64], phi31: f64) -> Result<f64> {
    let lo = phi.partition_point(|p| *p < 0.25 * phi31);
    let hi = phi.partition_point(|p| *p < 0.75 * phi31);
    rates[lo..hi].iter().copied().reduce(f64::min).ok_or_else(|| Error::Domain("no samples in the valley".into()))
}
