//! Independent reference implementations used by the integration tests:
//! adaptive Gauss-Kronrod quadrature and a direct nested-integral rate model
//! written from the closed-form envelopes, sharing no code with the crate.

#![allow(dead_code)]

use mrtnoise::units::{Current, Energy, Flux, Temperature};
use mrtnoise::MrtParams;
use std::f64::consts::PI;

pub mod quad {
    const XGK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];

    /// Kronrod estimate and |Kronrod − Gauss| on `[a, b]`.
    pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut k = WGK[7] * fc;
        let mut g = WG[3] * fc;
        for j in 0..7 {
            let dx = h * XGK[j];
            let s = f(c - dx) + f(c + dx);
            k += WGK[j] * s;
            if j % 2 == 1 {
                g += WG[j / 2] * s;
            }
        }
        (k * h, ((k - g) * h).abs())
    }

    /// Globally adaptive integration over consecutive breakpoints.
    pub fn integrate(f: &impl Fn(f64) -> f64, breaks: &[f64], rel: f64) -> f64 {
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        let mut parts: Vec<(f64, f64, f64, f64)> = pts
            .windows(2)
            .map(|w| {
                let (v, e) = gk15(f, w[0], w[1]);
                (w[0], w[1], v, e)
            })
            .collect();
        for _ in 0..20_000 {
            let total: f64 = parts.iter().map(|p| p.2).sum();
            let err: f64 = parts.iter().map(|p| p.3).sum();
            if err <= rel * total.abs() || err < 1e-300 {
                break;
            }
            let (i, _) = parts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .3.partial_cmp(&b.1 .3).unwrap())
                .unwrap();
            let (a, b, _, _) = parts.swap_remove(i);
            let m = 0.5 * (a + b);
            let (v1, e1) = gk15(f, a, m);
            let (v2, e2) = gk15(f, m, b);
            parts.push((a, m, v1, e1));
            parts.push((m, b, v2, e2));
        }
        parts.iter().map(|p| p.2).sum()
    }
}

/// Reference model in frequency units (GHz, ns), built from scratch.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub k: f64,
    pub w: f64,
    pub eps_p: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub w31: f64,
    pub t: f64,
    pub d01: f64,
    pub d03: f64,
    /// Relaxation half-width as a fraction of the rate (1 or 1/2).
    pub width_factor: f64,
}

const H: f64 = 6.626_070_15e-34;
const KB: f64 = 1.380_649e-23;
const E: f64 = 1.602_176_634e-19;

impl Oracle {
    pub fn new(p: &MrtParams) -> Self {
        let phi0 = H / (2.0 * E);
        let k = 2.0 * p.ip.amps() * phi0 * 1e-6 / H * 1e-9;
        let t = KB * p.temperature.kelvin() / H * 1e-9;
        let w = k * p.w_phi.micro_phi0();
        Oracle {
            k,
            w,
            eps_p: w * w / (2.0 * t),
            gamma: k * p.gamma_phi.micro_phi0(),
            zeta: k * p.zeta_phi.micro_phi0(),
            w31: k * p.phi31.micro_phi0(),
            t,
            d01: p.delta01.ghz(),
            d03: p.delta03.ghz(),
            width_factor: 1.0,
        }
    }

    pub fn gl(&self, nu: f64) -> f64 {
        let z = (nu - self.eps_p) / self.w;
        (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * self.w)
    }

    pub fn gh(&self, nu: f64) -> f64 {
        let x = nu / self.t;
        let bose = if x == 0.0 { 1.0 } else { x / (1.0 - (-x).exp()) };
        self.gamma / PI / (nu * nu + self.gamma * self.gamma) * bose
    }

    pub fn relax_rate(&self, nu: f64) -> f64 {
        let x = nu / self.t;
        if x == 0.0 {
            return self.zeta;
        }
        if x < -300.0 {
            return 0.0;
        }
        self.zeta * x.tanh() / (1.0 - (-x).exp())
    }

    pub fn gr(&self, z: f64) -> f64 {
        let g = self.width_factor * self.relax_rate(z + self.w31);
        g / PI / (z * z + g * g)
    }

    fn g01_breaks(&self, eps: f64) -> Vec<f64> {
        let c = eps - self.eps_p;
        let lo = c - 14.0 * self.w;
        let hi = c + 2.0 * self.eps_p + 14.0 * self.w;
        let mut b = vec![lo, hi, c, c + 2.0 * self.eps_p, c - 3.0 * self.w, c + 3.0 * self.w];
        for s in [0.0, -self.gamma, self.gamma, -10.0 * self.gamma, 10.0 * self.gamma] {
            if s > lo && s < hi {
                b.push(s);
            }
        }
        b.retain(|x| *x >= lo && *x <= hi);
        b
    }

    /// `∫ du G_L(ε − u) G_H(u)`.
    pub fn g01(&self, eps: f64) -> f64 {
        if self.gamma == 0.0 {
            return self.gl(eps);
        }
        quad::integrate(&|u| self.gl(eps - u) * self.gh(u), &self.g01_breaks(eps), 1e-10)
    }

    /// `∫ dz G_R(z) G₀₁(ω − z)`.
    pub fn g03(&self, omega: f64) -> f64 {
        if self.zeta == 0.0 {
            return self.g01(omega);
        }
        let span = 14.0 * self.w + 80.0 * self.t + 40.0 * self.gamma;
        let lo = (-self.w31).min(omega - self.eps_p) - span;
        let hi = 0.0f64.max(omega + self.eps_p) + span;
        let mut b = vec![lo, hi, -self.w31, omega - self.eps_p, omega + self.eps_p, omega];
        for s in [0.0, -self.zeta, self.zeta, -10.0 * self.zeta, 10.0 * self.zeta] {
            b.push(s);
        }
        b.retain(|x| *x >= lo && *x <= hi);
        quad::integrate(&|z| self.gr(z) * self.g01(omega - z), &b, 1e-8)
    }

    pub fn rate01(&self, phi: f64) -> f64 {
        1e3 * PI * PI * self.d01 * self.d01 * self.g01(self.k * phi)
    }

    pub fn rate03(&self, phi: f64) -> f64 {
        1e3 * PI * PI * self.d03 * self.d03 * self.g03(self.k * phi - self.w31)
    }

    pub fn total(&self, phi: f64) -> f64 {
        self.rate01(phi) + self.rate03(phi)
    }
}

/// Small deterministic generator for sampling test inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
    pub fn log_range(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }
}

/// Random parameter set with `γ/W ∈ [0.01, 1]` and `ζ/W ∈ [0, 0.5]`.
pub fn random_params(rng: &mut Lcg) -> MrtParams {
    let w = rng.range(20.0, 50.0);
    MrtParams {
        delta01: Energy::from_mhz(rng.range(1.0, 5.0)),
        delta03: Energy::from_mhz(rng.range(10.0, 40.0)),
        phi31: Flux::from_micro_phi0(rng.range(1800.0, 2400.0)),
        w_phi: Flux::from_micro_phi0(w),
        gamma_phi: Flux::from_micro_phi0(w * rng.log_range(0.01, 1.0)),
        zeta_phi: Flux::from_micro_phi0(w * rng.range(0.0, 0.5)),
        temperature: Temperature::from_millikelvin(rng.range(5.0, 15.0)),
        ip: Current::from_micro_amps(rng.range(1.0, 2.0)),
    }
}
