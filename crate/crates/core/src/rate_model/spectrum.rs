//! Tabulated spectral functions on a uniform frequency lattice and their
//! linear convolution.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Uniform lattice `ν_k = k·step` (GHz) restricted to `k ∈ [first, first + len)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub step: f64,
    pub first: i64,
    pub len: usize,
}

impl FrequencyGrid {
    pub fn new(step: f64, first: i64, len: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain(format!("grid step must be positive, got {step}")));
        }
        Ok(FrequencyGrid { step, first, len })
    }

    /// Smallest lattice range of spacing `step` covering `[lo, hi]`.
    pub fn covering(step: f64, lo: f64, hi: f64) -> Result<Self> {
        let first = (lo / step).floor() as i64;
        let last = (hi / step).ceil() as i64;
        let len = (last - first + 1).max(1) as usize;
        Self::new(step, first, len)
    }

    pub fn last(&self) -> i64 {
        self.first + self.len as i64 - 1
    }
    pub fn lo(&self) -> f64 {
        self.first as f64 * self.step
    }
    pub fn hi(&self) -> f64 {
        self.last() as f64 * self.step
    }
    pub fn nu(&self, i: usize) -> f64 {
        (self.first + i as i64) as f64 * self.step
    }
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.nu(i))
    }
}

/// A spectral density tabulated on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len {
            return Err(Error::Contract(format!(
                "spectrum has {} values for a grid of {} points",
                values.len(),
                grid.len
            )));
        }
        Ok(Spectrum { grid, values })
    }

    pub fn tabulate(grid: FrequencyGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().map(f).collect();
        Spectrum { grid, values }
    }

    /// `Σ values · step`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.step
    }

    /// Value at lattice index `k`, if tabulated.
    pub fn at_index(&self, k: i64) -> Option<f64> {
        let i = k - self.grid.first;
        (i >= 0 && (i as usize) < self.values.len()).then(|| self.values[i as usize])
    }

    /// Sub-table over the lattice indices covering `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Spectrum> {
        let want = FrequencyGrid::covering(self.grid.step, lo, hi)?;
        if want.first < self.grid.first || want.last() > self.grid.last() {
            return Err(Error::Contract(format!(
                "requested range [{lo}, {hi}] exceeds tabulated range [{}, {}]",
                self.grid.lo(),
                self.grid.hi()
            )));
        }
        let s = (want.first - self.grid.first) as usize;
        Ok(Spectrum { grid: want, values: self.values[s..s + want.len].to_vec() })
    }

    /// Catmull-Rom interpolation, done on the logarithm when the four
    /// supporting values are positive. `None` outside the table.
    pub fn interpolate(&self, nu: f64) -> Option<f64> {
        let pos = nu / self.grid.step - self.grid.first as f64;
        let i = pos.floor();
        let t = pos - i;
        let i = i as i64;
        if i < 1 || i + 2 >= self.values.len() as i64 {
            // Lattice-exact lookups at the edges are still allowed.
            if t == 0.0 && i >= 0 && (i as usize) < self.values.len() {
                return Some(self.values[i as usize]);
            }
            return None;
        }
        let i = i as usize;
        let p = [self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]];
        if t == 0.0 {
            return Some(p[1]);
        }
        if p.iter().all(|v| *v > 0.0) {
            let l = p.map(f64::ln);
            Some(catmull_rom(l, t).exp())
        } else {
            Some(catmull_rom(p, t))
        }
    }
}

fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * p[1]
        + (p[2] - p[0]) * t
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t2
        + (3.0 * (p[1] - p[2]) + p[3] - p[0]) * t3)
}

/// Either a tabulated density or the `2πδ(ω)` identity element.
#[derive(Debug, Clone, PartialEq)]
pub enum LineFunction {
    Delta,
    Sampled(Spectrum),
}

/// Linear convolution `h(ν) = ∫ dν′ f(ν − ν′) g(ν′)` of two tabulations on
/// the same lattice. The result covers the full support
/// `[f.lo + g.lo, f.hi + g.hi]`; zero padding makes it free of wraparound.
pub fn convolve(f: &Spectrum, g: &Spectrum) -> Result<Spectrum> {
    let (a, b) = (&f.grid, &g.grid);
    if (a.step - b.step).abs() > 1e-12 * a.step {
        return Err(Error::Contract(format!(
            "cannot convolve spectra on different lattices (steps {} and {})",
            a.step, b.step
        )));
    }
    if f.values.is_empty() || g.values.is_empty() {
        return Err(Error::Contract("cannot convolve an empty spectrum".into()));
    }
    let out_len = f.values.len() + g.values.len() - 1;
    let grid = FrequencyGrid::new(a.step, a.first + b.first, out_len)?;
    let values = linear_convolution(&f.values, &g.values, a.step);
    Ok(Spectrum { grid, values })
}

/// Convolution with the delta function passed through analytically.
pub fn convolve_lines(f: &LineFunction, g: &LineFunction) -> Result<LineFunction> {
    Ok(match (f, g) {
        (LineFunction::Delta, other) | (other, LineFunction::Delta) => other.clone(),
        (LineFunction::Sampled(a), LineFunction::Sampled(b)) => LineFunction::Sampled(convolve(a, b)?),
    })
}

/// `c[n] = scale · Σ_i a[i] b[n − i]`, both inputs real.
pub(crate) fn linear_convolution(a: &[f64], b: &[f64], scale: f64) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
        return out;
    }
    let n = out_len.next_power_of_two();
    let (fwd, inv) = plans(n);
    // Both real inputs share one complex transform: z = a + i b.
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for (k, v) in a.iter().enumerate() {
        z[k].re = *v;
    }
    for (k, v) in b.iter().enumerate() {
        z[k].im = *v;
    }
    fwd.process(&mut z);
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = z[k];
        let zc = z[(n - k) % n].conj();
        let fa = (zk + zc) * 0.5;
        let fb = (zk - zc) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let norm = scale / n as f64;
    prod[..out_len].iter().map(|c| c.re * norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn gauss(s: f64) -> impl Fn(f64) -> f64 {
        move |x| (-0.5 * x * x / (s * s)).exp() / ((2.0 * PI).sqrt() * s)
    }

    #[test]
    fn fft_matches_direct_sum() {
        let a: Vec<f64> = (0..300).map(|k| ((k as f64) * 0.37).sin().abs()).collect();
        let b: Vec<f64> = (0..123).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let fast = linear_convolution(&a, &b, 0.5);
        let mut slow = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                slow[i + j] += 0.5 * a[i] * b[j];
            }
        }
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn gaussian_closure() {
        let h = 0.01;
        let (s1, s2) = (0.3, 0.4);
        let f = Spectrum::tabulate(FrequencyGrid::covering(h, -4.0, 4.0).unwrap(), gauss(s1));
        let g = Spectrum::tabulate(FrequencyGrid::covering(h, -5.0, 5.0).unwrap(), gauss(s2));
        let c = convolve(&f, &g).unwrap();
        let expect = gauss((s1 * s1 + s2 * s2).sqrt());
        assert_relative_eq!(c.at_index(0).unwrap(), expect(0.0), max_relative = 1e-6);
        assert_relative_eq!(c.interpolate(0.123).unwrap(), expect(0.123), max_relative = 1e-6);
    }

    #[test]
    fn delta_is_identity() {
        let f = Spectrum::tabulate(FrequencyGrid::covering(0.1, -1.0, 1.0).unwrap(), gauss(0.2));
        let s = LineFunction::Sampled(f.clone());
        assert_eq!(convolve_lines(&s, &LineFunction::Delta).unwrap(), s);
        assert_eq!(convolve_lines(&LineFunction::Delta, &s).unwrap(), s);
    }

    #[test]
    fn mismatched_lattices_are_rejected() {
        let f = Spectrum::tabulate(FrequencyGrid::covering(0.1, -1.0, 1.0).unwrap(), gauss(0.2));
        let g = Spectrum::tabulate(FrequencyGrid::covering(0.05, -1.0, 1.0).unwrap(), gauss(0.2));
        assert!(matches!(convolve(&f, &g), Err(Error::Contract(_))));
    }

    #[test]
    fn log_interpolation_is_exact_for_gaussians() {
        let f = Spectrum::tabulate(FrequencyGrid::covering(0.25, -6.0, 6.0).unwrap(), gauss(1.0));
        for x in [-3.3, -0.1, 0.77, 2.9] {
            assert_relative_eq!(f.interpolate(x).unwrap(), gauss(1.0)(x), max_relative = 1e-12);
        }
        assert!(f.interpolate(7.0).is_none());
    }

    #[test]
    fn restrict_keeps_lattice_alignment() {
        let f = Spectrum::tabulate(FrequencyGrid::covering(0.1, -2.0, 2.0).unwrap(), |x| x);
        let r = f.restrict(-0.55, 0.31).unwrap();
        assert_eq!(r.grid.first, -6);
        assert_eq!(r.grid.last(), 4);
        assert_relative_eq!(r.values[0], -0.6, max_relative = 1e-12);
        assert!(f.restrict(-3.0, 0.0).is_err());
    }
}
