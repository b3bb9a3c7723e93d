//! The tabulated two-peak line shape.
//!
//! The zeroth-peak shape is `G_L ⋆ G_H` and the first-peak shape is
//! `G_L ⋆ G_H ⋆ G_R`. Both are built once per parameter set on a uniform
//! lattice and then interpolated at arbitrary biases.
//!
//! Two identities keep the exponentially small tails accurate far below
//! FFT round-off. The zeroth shape obeys `G(−ν) = e^{−ν/T} G(ν)`, so its
//! negative side is taken from the mirror. Below the first peak's
//! detailed-balance point the triple convolution is computed on
//! exponentially tilted factors and rescaled afterwards.

use crate::envelopes::{HighFreqBroadening, IntrawellBroadening, LowFreqBroadening};
use crate::error::{Error, Result};

use super::spectrum::{linear_convolution, FrequencyGrid, Spectrum};
use super::{ModelEnergies, ModelOptions};

/// Envelopes narrower than this many lattice steps are cell-averaged.
const CELL_AVERAGE_BELOW: f64 = 8.0;
/// Gaussian kernel half-span in units of its width.
const GAUSS_SPAN: f64 = 12.0;
/// Thermal suppression span in units of k_BT.
const THERMAL_SPAN: f64 = 40.0;

#[derive(Debug, Clone)]
enum Zeroth {
    Gaussian(LowFreqBroadening),
    /// Tabulated for `ν ≥ −4·step`; the rest comes from the mirror.
    Table(Spectrum),
}

#[derive(Debug, Clone)]
enum First {
    /// `ζ = 0`: the relaxation envelope is a delta function.
    Shifted,
    Tables { direct: Option<Spectrum>, tilted: Option<Spectrum> },
}

/// Zeroth- and first-peak line shapes, valid over a fixed energy window.
#[derive(Debug, Clone)]
pub struct LineShape {
    step: f64,
    kt: f64,
    spacing: f64,
    window: (f64, f64),
    zeroth: Zeroth,
    first: First,
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }
    fn extent(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// The ranges each tabulation must cover for a given evaluation window.
#[derive(Debug, Clone, Copy)]
struct Plan {
    margin: f64,
    /// Largest `|ν|` at which the zeroth shape is needed.
    extent: f64,
    direct: Option<(Range, Range)>,
    tilted: Option<(Range, Range)>,
}

impl Plan {
    fn new(e: &ModelEnergies, lo: f64, hi: f64, step: f64) -> Plan {
        let margin = 4.0 * step;
        let (a1, b1) = (lo - margin, hi + margin);
        let mut extent = a1.abs().max(b1.abs());
        let (mut direct, mut tilted) = (None, None);
        if e.zeta == 0.0 {
            extent = extent.max((a1 - e.spacing).abs()).max((b1 - e.spacing).abs());
        } else {
            let pad = 8.0 * e.width + 40.0 * e.gamma + 4.0 * e.zeta + THERMAL_SPAN * e.kt;
            let (a3, b3) = (a1 - e.spacing, b1 - e.spacing);
            let split = -e.spacing;
            if b3 > split {
                let out = Range::new(a3.max(split - margin), b3);
                let kernel = Range::new(split.min(0.0) - pad, out.hi.max(0.0) + pad + THERMAL_SPAN * e.kt);
                let need = Range::new(out.lo - kernel.hi, out.hi - kernel.lo);
                extent = extent.max(need.extent());
                direct = Some((out, kernel));
            }
            if a3 < split {
                let out = Range::new(a3, b3.min(split + margin));
                let kernel = Range::new(out.lo - pad, split + pad);
                let need = Range::new(kernel.lo - out.hi, kernel.hi - out.lo);
                extent = extent.max(need.extent());
                tilted = Some((out, kernel));
            }
        }
        Plan { margin, extent: extent + margin, direct, tilted }
    }
}

/// Lattice step for a parameter set and evaluation window.
pub(crate) fn auto_step(e: &ModelEnergies, lo: f64, hi: f64, opts: &ModelOptions) -> f64 {
    let base = e.width.max(e.gamma).min(e.kt) / opts.resolution;
    let span = 2.0 * Plan::new(e, lo, hi, base).extent;
    let mut step = base.min(span / opts.min_points as f64);
    if span / step > opts.max_points as f64 {
        let coarse = span / opts.max_points as f64;
        log::warn!(
            "line-shape lattice capped at {} points; step raised from {:.3e} to {:.3e} GHz",
            opts.max_points,
            step,
            coarse
        );
        step = coarse;
    }
    step
}

fn sample_gaussian(p: &LowFreqBroadening, grid: FrequencyGrid) -> Spectrum {
    let h = grid.step;
    if p.width().ghz() < CELL_AVERAGE_BELOW * h {
        Spectrum::tabulate(grid, |nu| p.cell_mean(nu, h))
    } else {
        Spectrum::tabulate(grid, |nu| p.at(nu))
    }
}

fn sample_ohmic(p: &HighFreqBroadening, grid: FrequencyGrid) -> Spectrum {
    let h = grid.step;
    if p.gamma().ghz() < CELL_AVERAGE_BELOW * h {
        Spectrum::tabulate(grid, |nu| p.cell_mean(nu, h))
    } else {
        Spectrum::tabulate(grid, |nu| p.at(nu))
    }
}

fn sample_relax(p: &IntrawellBroadening, grid: FrequencyGrid) -> Spectrum {
    let h = grid.step;
    Spectrum::tabulate(grid, |z| {
        if p.half_width(z) < CELL_AVERAGE_BELOW * h {
            p.cell_mean(z, h)
        } else {
            p.at(z)
        }
    })
}

/// `G_R(z)·e^{−(z+ω₃₁)/T}` without overflow.
fn sample_relax_tilted(p: &IntrawellBroadening, grid: FrequencyGrid) -> Spectrum {
    let h = grid.step;
    let kt = p.thermal_energy().ghz();
    let spacing = p.spacing().ghz();
    Spectrum::tabulate(grid, |z| {
        let x = (z + spacing) / kt;
        let g = p.half_width(z);
        let tilted_width = p.half_width_tilted(z);
        if g < CELL_AVERAGE_BELOW * h {
            if x > -30.0 {
                p.cell_mean(z, h) * (-x).exp()
            } else {
                tilted_width / (std::f64::consts::PI * (z * z - 0.25 * h * h + g * g))
            }
        } else {
            tilted_width / (std::f64::consts::PI * (z * z + g * g))
        }
    })
}

/// Convolve two lattice tabulations and keep `[lo, hi]`.
fn convolve_range(f: &Spectrum, g: &Spectrum, lo: f64, hi: f64) -> Result<Spectrum> {
    let values = linear_convolution(&f.values, &g.values, f.grid.step);
    let grid = FrequencyGrid::new(f.grid.step, f.grid.first + g.grid.first, values.len())?;
    Spectrum { grid, values }.restrict(lo, hi)
}

impl LineShape {
    /// Build the line shape valid for zeroth-peak energies `ε ∈ [lo, hi]`.
    pub(crate) fn build(e: &ModelEnergies, lo: f64, hi: f64, opts: &ModelOptions) -> Result<LineShape> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Domain(format!("invalid energy window [{lo}, {hi}]")));
        }
        let step = match opts.step {
            Some(s) if s > 0.0 && s.is_finite() => s,
            Some(s) => return Err(Error::Domain(format!("lattice step must be positive, got {s}"))),
            None => auto_step(e, lo, hi, opts),
        };
        let plan = Plan::new(e, lo, hi, step);
        let glow = e.low()?;
        let ghigh = e.high()?;
        let m = plan.margin;

        let zeroth = if ghigh.is_delta() {
            Zeroth::Gaussian(glow)
        } else {
            let shift = glow.shift().ghz();
            let kernel = FrequencyGrid::covering(
                step,
                shift - GAUSS_SPAN * e.width - 2.0 * step,
                shift + GAUSS_SPAN * e.width + 2.0 * step,
            )?;
            let gl = sample_gaussian(&glow, kernel);
            let top = plan.extent + m;
            let ohmic = FrequencyGrid::covering(step, -m - kernel.hi(), top - kernel.lo())?;
            let gh = sample_ohmic(&ghigh, ohmic);
            Zeroth::Table(convolve_range(&gl, &gh, -m, top)?)
        };

        let mut shape = LineShape {
            step,
            kt: e.kt,
            spacing: e.spacing,
            window: (lo, hi),
            zeroth,
            first: First::Shifted,
        };

        if e.zeta > 0.0 {
            let relax = e.relax(opts.relaxation_form)?;
            let full = FrequencyGrid::covering(step, -plan.extent, plan.extent)?;
            let g01 = match &shape.zeroth {
                Zeroth::Gaussian(p) => sample_gaussian(p, full),
                Zeroth::Table(_) => {
                    let values = full
                        .points()
                        .map(|nu| shape.zeroth_density(nu))
                        .collect::<Result<Vec<_>>>()?;
                    Spectrum::new(full, values)?
                }
            };
            let direct = match plan.direct {
                Some((out, kernel)) => {
                    let kr = FrequencyGrid::covering(step, kernel.lo, kernel.hi)?;
                    let gr = sample_relax(&relax, kr);
                    let need = g01.restrict(out.lo - kr.hi(), out.hi - kr.lo())?;
                    Some(convolve_range(&need, &gr, out.lo - m, out.hi + m)?)
                }
                None => None,
            };
            let tilted = match plan.tilted {
                Some((out, kernel)) => {
                    let kr = FrequencyGrid::covering(step, kernel.lo, kernel.hi)?;
                    let gr = sample_relax_tilted(&relax, kr);
                    let need = FrequencyGrid::covering(step, out.lo - kr.hi(), out.hi - kr.lo())?;
                    let values = (0..need.len)
                        .map(|i| {
                            let k = -(need.first + i as i64);
                            g01.at_index(k).ok_or_else(|| {
                                Error::Contract("zeroth-shape table too short for tilted pass".into())
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let mirrored = Spectrum::new(need, values)?;
                    Some(convolve_range(&mirrored, &gr, out.lo - m, out.hi + m)?)
                }
                None => None,
            };
            shape.first = First::Tables { direct, tilted };
        }
        Ok(shape)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Energy window (GHz) the shape was built for.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    fn out_of_range(&self, what: &str, nu: f64) -> Error {
        Error::Contract(format!(
            "{what} requested at {nu} GHz, outside the tabulated window [{}, {}] GHz",
            self.window.0, self.window.1
        ))
    }

    /// `(G_L ⋆ G_H)(ν)` in ns.
    pub fn zeroth_density(&self, nu: f64) -> Result<f64> {
        match &self.zeroth {
            Zeroth::Gaussian(p) => Ok(p.at(nu)),
            Zeroth::Table(t) => {
                if nu >= 0.0 {
                    t.interpolate(nu).ok_or_else(|| self.out_of_range("zeroth shape", nu))
                } else {
                    let v = t.interpolate(-nu).ok_or_else(|| self.out_of_range("zeroth shape", nu))?;
                    Ok((nu / self.kt).exp() * v)
                }
            }
        }
    }

    /// `(G_L ⋆ G_H ⋆ G_R)(ω)` in ns, with `ω = ε − ω₃₁`.
    pub fn first_density(&self, omega: f64) -> Result<f64> {
        match &self.first {
            First::Shifted => self.zeroth_density(omega),
            First::Tables { direct, tilted } => {
                let split = -self.spacing;
                if omega >= split {
                    direct
                        .as_ref()
                        .and_then(|t| t.interpolate(omega))
                        .ok_or_else(|| self.out_of_range("first shape", omega))
                } else {
                    let s = tilted
                        .as_ref()
                        .and_then(|t| t.interpolate(omega))
                        .ok_or_else(|| self.out_of_range("first shape", omega))?;
                    Ok(((omega - split) / self.kt).exp() * s)
                }
            }
        }
    }

    /// Both shapes at zeroth-peak energy `ε`.
    pub fn densities(&self, eps: f64) -> Result<(f64, f64)> {
        Ok((self.zeroth_density(eps)?, self.first_density(eps - self.spacing)?))
    }
}
