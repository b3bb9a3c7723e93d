//! Seeded synthetic datasets with multiplicative log-normal noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fitter::{ParamId, RateDataset, RatePoint};
use crate::rate_model::{simulate_curve_with, uniform_biases, ModelOptions};
use crate::units::Rate;
use crate::{MrtParams, Well};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub phi_min_uphi0: f64,
    pub phi_max_uphi0: f64,
    pub points: usize,
    /// Standard deviation of `ln Γ`.
    pub noise_rel: f64,
    pub well: Well,
    pub write_sigma: bool,
}

impl From<&crate::io::config::GenSection> for SynthSpec {
    fn from(g: &crate::io::config::GenSection) -> Self {
        SynthSpec {
            phi_min_uphi0: g.phi_min_uphi0,
            phi_max_uphi0: g.phi_max_uphi0,
            points: g.points,
            noise_rel: g.noise_rel,
            well: g.well,
            write_sigma: g.write_sigma,
        }
    }
}

/// One noisy dataset drawn from `p`.
pub fn synthesize(p: &MrtParams, spec: &SynthSpec, seed: u64, opts: &ModelOptions) -> Result<RateDataset> {
    if !(spec.noise_rel >= 0.0 && spec.noise_rel.is_finite()) {
        return Err(Error::Domain(format!("noise_rel must be non-negative, got {}", spec.noise_rel)));
    }
    let biases = uniform_biases(spec.phi_min_uphi0, spec.phi_max_uphi0, spec.points);
    let curve = simulate_curve_with(&biases, p, spec.well, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(curve.points.len());
    for c in &curve.points {
        let z: f64 = rng.sample(StandardNormal);
        let rate = c.rate.per_us() * (spec.noise_rel * z).exp();
        if !(rate > 0.0) {
            return Err(Error::Domain(format!(
                "model rate underflows at {} uPhi0; narrow the bias window",
                c.phi_x.micro_phi0()
            )));
        }
        points.push(RatePoint {
            phi_x: c.phi_x,
            rate: Rate::from_per_us(rate),
            sigma_rel: (spec.write_sigma && spec.noise_rel > 0.0).then_some(spec.noise_rel),
            well: spec.well,
        });
    }
    Ok(RateDataset { points, ip: p.ip, label: None, temperature_hint: None })
}

/// Per-qubit parameters: each fit parameter scaled by `1 + jitter·u`, `u ∈ [−1, 1]`.
pub fn jittered(p: &MrtParams, jitter: f64, seed: u64) -> MrtParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut q = *p;
    for id in ParamId::ALL {
        let u: f64 = rng.random_range(-1.0..=1.0);
        id.set(&mut q, id.get(p) * (1.0 + jitter * u));
    }
    q
}

/// `count` qubits labelled `q01`, `q02`, ... with independent noise streams.
pub fn synthesize_batch(
    p: &MrtParams,
    spec: &SynthSpec,
    count: usize,
    jitter: f64,
    seed: u64,
    opts: &ModelOptions,
) -> Result<Vec<(MrtParams, RateDataset)>> {
    (0..count as u64)
        .map(|i| {
            let q = if jitter > 0.0 { jittered(p, jitter, seed.wrapping_add(i)) } else { *p };
            let mut d = synthesize(&q, spec, seed.wrapping_add(i), opts)?;
            d.label = Some(format!("q{:02}", i + 1));
            Ok((q, d))
        })
        .collect()
}
