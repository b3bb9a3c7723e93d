//! Initial parameter estimates from peak positions, heights and widths.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::envelopes::{relaxation_factor, thermal_factor};
use crate::error::{Error, Result};
use crate::units::{Energy, Flux, Temperature};
use crate::MrtParams;

use super::RateDataset;

/// Temperature assumed when the zeroth-peak shift does not give a usable one.
pub const PROVISIONAL_TEMPERATURE_MK: f64 = 10.0;

/// Peaks closer than this many Gaussian widths are treated as one.
const MIN_PEAK_SEPARATION: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub params: MrtParams,
    /// Only one peak was found; `Δ₀₃` and `ζ_Φ` are zero and should stay fixed.
    pub single_peak: bool,
    pub notes: Vec<String>,
}

/// Scaled complementary error function `e^{x²} erfc(x)`.
pub(crate) fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        let x2 = x * x;
        (1.0 - 0.5 / x2 + 0.75 / (x2 * x2) - 1.875 / (x2 * x2 * x2)) / (x * PI.sqrt())
    }
}

fn median5(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            let mut w: Vec<f64> = v[lo..hi].to_vec();
            w.sort_by(|a, b| a.total_cmp(b));
            w[w.len() / 2]
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    phi: f64,
    /// ln of the rate at the top.
    log_height: f64,
    /// Gaussian width estimate, μΦ₀.
    width: f64,
}

/// Least-squares parabola `ln Γ = a + bφ + cφ²` over the top of a peak.
fn refine_peak(phi: &[f64], ln: &[f64], idx: usize) -> Option<Peak> {
    // Walk to the raw maximum near the smoothed one.
    let lo = idx.saturating_sub(2);
    let hi = (idx + 3).min(ln.len());
    let top = (lo..hi).max_by(|a, b| ln[*a].total_cmp(&ln[*b]))?;
    let floor = ln[top] - 2.0;
    let mut a = top;
    while a > 0 && ln[a - 1] >= floor {
        a -= 1;
    }
    let mut b = top;
    while b + 1 < ln.len() && ln[b + 1] >= floor {
        b += 1;
    }
    if b - a + 1 >= 4 {
        let x0 = phi[top];
        let (mut s, mut sx, mut sx2, mut sx3, mut sx4, mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for i in a..=b {
            let x = phi[i] - x0;
            let y = ln[i];
            s += 1.0;
            sx += x;
            sx2 += x * x;
            sx3 += x * x * x;
            sx4 += x * x * x * x;
            sy += y;
            sxy += x * y;
            sx2y += x * x * y;
        }
        let m = nalgebra::Matrix3::new(s, sx, sx2, sx, sx2, sx3, sx2, sx3, sx4);
        let r = nalgebra::Vector3::new(sy, sxy, sx2y);
        if let Some(c) = m.lu().solve(&r) {
            let (ca, cb, cc) = (c[0], c[1], c[2]);
            let vertex = -cb / (2.0 * cc);
            if cc < 0.0 && vertex.abs() <= (phi[b] - phi[a]) {
                return Some(Peak {
                    phi: x0 + vertex,
                    log_height: ca - cb * cb / (4.0 * cc),
                    width: 1.0 / (-2.0 * cc).sqrt(),
                });
            }
        }
    }
    // Half-maximum crossing on whichever side is resolved.
    let half = ln[top] - std::f64::consts::LN_2;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = top;
        for j in range {
            if ln[j] < half {
                let t = (ln[prev] - half) / (ln[prev] - ln[j]);
                return Some((phi[prev] + t * (phi[j] - phi[prev]) - phi[top]).abs());
            }
            prev = j;
        }
        None
    };
    let hwhm = cross(&mut (0..top).rev()).or_else(|| cross(&mut (top + 1..ln.len())))?;
    Some(Peak { phi: phi[top], log_height: ln[top], width: hwhm / (2.0 * std::f64::consts::LN_2).sqrt() })
}

fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    (1..n.saturating_sub(1))
        .filter(|&i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            v[i] > v[i - 1] && v[i] >= v[i + 1] && (lo..hi).all(|j| v[j] <= v[i]) && prominence(v, i) >= MIN_PROMINENCE
        })
        .collect()
}

/// A peak must stand this far above the deeper of its two flanking minima, in `ln Γ`.
const MIN_PROMINENCE: f64 = 1.0;

/// Drop from `v[i]` to the lowest point before the signal climbs higher, on the shallower side.
fn prominence(v: &[f64], i: usize) -> f64 {
    let side = |range: &mut dyn Iterator<Item = usize>| {
        let mut low = v[i];
        for j in range {
            if v[j] > v[i] {
                break;
            }
            low = low.min(v[j]);
        }
        v[i] - low
    };
    side(&mut (0..i).rev()).min(side(&mut (i + 1..v.len())))
}

/// Non-negative least squares for two columns, rows weighted by `1/y²`.
fn nnls2(a: &[f64], b: &[f64], y: &[f64], scale: &[f64]) -> (f64, f64) {
    let (mut aa, mut ab, mut bb, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        let w = 1.0 / (scale[i] * scale[i]);
        aa += w * a[i] * a[i];
        ab += w * a[i] * b[i];
        bb += w * b[i] * b[i];
        ay += w * a[i] * y[i];
        by += w * b[i] * y[i];
    }
    let det = aa * bb - ab * ab;
    if det > 0.0 {
        let x = (ay * bb - by * ab) / det;
        let z = (aa * by - ab * ay) / det;
        if x >= 0.0 && z >= 0.0 {
            return (x, z);
        }
    }
    let only_a = if aa > 0.0 { (ay / aa).max(0.0) } else { 0.0 };
    let only_b = if bb > 0.0 { (by / bb).max(0.0) } else { 0.0 };
    let res = |x: f64, z: f64| -> f64 {
        (0..y.len()).map(|i| ((a[i] * x + b[i] * z - y[i]) / scale[i]).powi(2)).sum()
    };
    if res(only_a, 0.0) <= res(0.0, only_b) {
        (only_a, 0.0)
    } else {
        (0.0, only_b)
    }
}

const GHZ_PER_K: f64 = crate::units::constants::K_B / crate::units::constants::H * 1e-9;

pub fn initial_guess(data: &RateDataset) -> Result<InitialGuess> {
    data.validate()?;
    let mut pts: Vec<(f64, f64)> = data
        .points
        .iter()
        .map(|p| (p.well.to_left_frame(p.phi_x).micro_phi0(), p.rate.per_us().ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let phi: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ln: Vec<f64> = pts.iter().map(|p| p.1).collect();
    if phi.len() < 5 {
        return Err(Error::Validation(format!("need at least 5 points for an initial guess, got {}", phi.len())));
    }
    let smooth = median5(&ln);
    let mut maxima = local_maxima(&smooth);
    maxima.sort_by(|a, b| smooth[*b].total_cmp(&smooth[*a]));
    let mut notes = Vec::new();

    let peaks: Vec<Peak> = maxima.iter().filter_map(|&i| refine_peak(&phi, &ln, i)).collect();
    let highest = *peaks
        .first()
        .ok_or_else(|| Error::Validation("no peak found in the dataset".into()))?;
    let second = peaks
        .iter()
        .skip(1)
        .find(|p| (p.phi - highest.phi).abs() > MIN_PEAK_SEPARATION * highest.width)
        .copied();

    let (zeroth, first) = match second {
        Some(s) if s.phi < highest.phi => (s, Some(highest)),
        Some(s) => (highest, Some(s)),
        None => (highest, None),
    };

    let k = crate::units::ghz_per_micro_phi0(data.ip);
    let w_phi = zeroth.width;
    let w = k * w_phi;
    let fallback_t = data
        .temperature_hint
        .map(|t| t.kelvin())
        .unwrap_or(PROVISIONAL_TEMPERATURE_MK * 1e-3);
    let t_kelvin = if zeroth.phi > 0.0 {
        let kt = w * w / (2.0 * k * zeroth.phi);
        let t = kt / GHZ_PER_K;
        if (5e-4..=1.0).contains(&t) {
            t
        } else {
            notes.push(format!("shift-derived temperature {:.3} mK implausible; using {:.1} mK", t * 1e3, fallback_t * 1e3));
            fallback_t
        }
    } else {
        notes.push(format!("zeroth peak at non-positive bias; using {:.1} mK", fallback_t * 1e3));
        fallback_t
    };
    let kt = t_kelvin * GHZ_PER_K;
    let eps_p = w * w / (2.0 * kt);
    let amp = |d: f64| 1e3 * PI * PI * d * d;
    let delta01 = (zeroth.log_height.exp() * (2.0 * PI).sqrt() * w / (1e3 * PI * PI)).sqrt();
    let gauss = |eps: f64| (-0.5 * ((eps - eps_p) / w).powi(2)).exp() / ((2.0 * PI).sqrt() * w);

    let Some(first) = first else {
        notes.push("fewer than two peaks found; single-peak guess".into());
        // Ohmic tail right of the zeroth peak.
        let (mut a, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (x, l) in phi.iter().zip(&ln) {
            let nu = k * x - eps_p;
            if x - zeroth.phi > MIN_PEAK_SEPARATION * w_phi && nu > 0.0 {
                let rate = l.exp();
                a.push(amp(delta01) * thermal_factor(nu / kt) / (PI * nu * nu));
                y.push(rate - amp(delta01) * gauss(k * x));
                s.push(rate);
            }
        }
        let zeros = vec![0.0; a.len()];
        let (gamma, _) = if a.len() >= 2 { nnls2(&a, &zeros, &y, &s) } else { (0.0, 0.0) };
        let gamma_phi = if gamma > 0.0 { gamma / k } else { 0.02 * w_phi };
        let span = phi.last().unwrap() - phi.first().unwrap();
        return Ok(InitialGuess {
            params: MrtParams {
                delta01: Energy::from_ghz(delta01),
                delta03: Energy::ZERO,
                phi31: Flux::from_micro_phi0(span.max(1.0)),
                w_phi: Flux::from_micro_phi0(w_phi),
                gamma_phi: Flux::from_micro_phi0(gamma_phi),
                zeta_phi: Flux::ZERO,
                temperature: Temperature::from_kelvin(t_kelvin),
                ip: data.ip,
            },
            single_peak: true,
            notes,
        });
    };

    let phi31 = first.phi - zeroth.phi;
    let spacing = k * phi31;
    // Valley: both line shapes are in their Lorentzian tails.
    let (mut a, mut b, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (x, l) in phi.iter().zip(&ln) {
        let lo = zeroth.phi + MIN_PEAK_SEPARATION * w_phi;
        let hi = first.phi - MIN_PEAK_SEPARATION * w_phi;
        if *x > lo && *x < hi {
            let eps = k * x;
            let nu = eps - eps_p;
            let z = eps - spacing - eps_p;
            let rate = l.exp();
            a.push(amp(delta01) * thermal_factor(nu / kt) / (PI * nu * nu));
            b.push(1e3 * PI * PI * relaxation_factor((z + spacing) / kt) / (PI * z * z));
            y.push(rate - amp(delta01) * gauss(eps));
            s.push(rate);
        }
    }
    let (mut gamma, mut c) = if a.len() >= 3 { nnls2(&a, &b, &y, &s) } else { (0.0, 0.0) };
    if gamma <= 0.0 {
        notes.push("no ohmic tail resolved; gamma guessed from the width".into());
        gamma = 0.02 * w;
    }
    // First-peak height fixes Δ₀₃ for a given ζ; the valley fixes Δ₀₃²ζ.
    let zeroth_at_first = amp(delta01) * (gauss(k * first.phi) + gamma * thermal_factor((k * first.phi - eps_p) / kt) / (PI * (k * first.phi - eps_p).powi(2)));
    let peak1 = (first.log_height.exp() - zeroth_at_first).max(0.5 * first.log_height.exp());
    let voigt = |zeta: f64| erfcx((zeta + gamma) / (w * 2f64.sqrt())) / (w * (2.0 * PI).sqrt());
    let zeta = if c > 0.0 {
        // (c/ζ)·V(ζ) decreases monotonically in ζ.
        let height = |zeta: f64| amp(1.0) * c / zeta * voigt(zeta);
        let (mut lo, mut hi) = ((1e-6 * w).ln(), (10.0 * w).ln());
        if height(lo.exp()) < peak1 {
            lo.exp()
        } else if height(hi.exp()) > peak1 {
            hi.exp()
        } else {
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if height(mid.exp()) > peak1 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (0.5 * (lo + hi)).exp()
        }
    } else {
        notes.push("valley not resolved; zeta guessed from the width".into());
        c = 0.0;
        0.1 * w
    };
    let _ = c;
    let delta03 = (peak1 / (amp(1.0) * voigt(zeta))).sqrt();

    Ok(InitialGuess {
        params: MrtParams {
            delta01: Energy::from_ghz(delta01),
            delta03: Energy::from_ghz(delta03),
            phi31: Flux::from_micro_phi0(phi31),
            w_phi: Flux::from_micro_phi0(w_phi),
            gamma_phi: Flux::from_micro_phi0(gamma / k),
            zeta_phi: Flux::from_micro_phi0(zeta / k),
            temperature: Temperature::from_kelvin(t_kelvin),
            ip: data.ip,
        },
        single_peak: false,
        notes,
    })
}
