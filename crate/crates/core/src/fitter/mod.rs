//! Weighted least-squares estimation of [`MrtParams`] from measured rates.
//!
//! Residuals are `√wᵢ·(ln Γ_model(φᵢ) − ln Γᵢ)` and all free parameters are
//! optimized in log space, so positivity holds at every iterate and the
//! line-shape shift stays tied to `W²/2k_BT`.

mod guess;
pub mod lm;

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate_model::{rates_from_densities, ModelOptions, RateModel};
use crate::units::{Current, Energy, Flux, NoiseSummary, Rate, Temperature, ONE_GHZ_RAD};
use crate::{MrtParams, Well};

pub use guess::{initial_guess, InitialGuess, PROVISIONAL_TEMPERATURE_MK};
pub use lm::{FitStatus, LmSettings};

/// Minimum dataset size for a two-peak fit.
pub const MIN_TWO_PEAK_POINTS: usize = 12;

/// One measured escape rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub phi_x: Flux,
    pub rate: Rate,
    /// Relative 1σ error of `rate`.
    pub sigma_rel: Option<f64>,
    pub well: Well,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDataset {
    pub points: Vec<RatePoint>,
    /// Independently measured persistent current.
    pub ip: Current,
    pub label: Option<String>,
    /// Thermometry reading, used only as an initial-guess fallback.
    pub temperature_hint: Option<Temperature>,
}

impl RateDataset {
    pub fn new(points: Vec<RatePoint>, ip: Current) -> Self {
        RateDataset { points, ip, label: None, temperature_hint: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ip.amps() > 0.0 && self.ip.amps().is_finite()) {
            return Err(Error::Validation(format!("persistent current must be positive, got {} A", self.ip.amps())));
        }
        if self.points.is_empty() {
            return Err(Error::Validation("dataset has no points".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.phi_x.micro_phi0().is_finite() {
                return Err(Error::Validation(format!("point {i}: non-finite flux bias")));
            }
            let r = p.rate.per_us();
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Validation(format!("point {i}: rate must be positive and finite, got {r}")));
            }
            if let Some(s) = p.sigma_rel {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::Validation(format!("point {i}: sigma_rel must be positive, got {s}")));
                }
            }
        }
        Ok(())
    }

    /// The same measurement seen from the opposite well.
    pub fn mirrored(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| RatePoint {
                phi_x: Flux::from_micro_phi0(-p.phi_x.micro_phi0()),
                well: match p.well {
                    Well::Left => Well::Right,
                    Well::Right => Well::Left,
                },
                ..*p
            })
            .collect();
        RateDataset { points, ..self.clone() }
    }
}

/// The seven fit parameters, in optimizer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamId {
    Delta01,
    Delta03,
    Phi31,
    WPhi,
    GammaPhi,
    ZetaPhi,
    Temperature,
}

impl ParamId {
    pub const ALL: [ParamId; 7] = [
        ParamId::Delta01,
        ParamId::Delta03,
        ParamId::Phi31,
        ParamId::WPhi,
        ParamId::GammaPhi,
        ParamId::ZetaPhi,
        ParamId::Temperature,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::Delta01 => "delta01",
            ParamId::Delta03 => "delta03",
            ParamId::Phi31 => "phi31",
            ParamId::WPhi => "w_phi",
            ParamId::GammaPhi => "gamma_phi",
            ParamId::ZetaPhi => "zeta_phi",
            ParamId::Temperature => "temperature",
        }
    }

    /// Reporting unit.
    pub fn unit(self) -> &'static str {
        match self {
            ParamId::Delta01 | ParamId::Delta03 => "MHz",
            ParamId::Temperature => "mK",
            _ => "uPhi0",
        }
    }

    /// Value in reporting units.
    pub fn get(self, p: &MrtParams) -> f64 {
        match self {
            ParamId::Delta01 => p.delta01.mhz(),
            ParamId::Delta03 => p.delta03.mhz(),
            ParamId::Phi31 => p.phi31.micro_phi0(),
            ParamId::WPhi => p.w_phi.micro_phi0(),
            ParamId::GammaPhi => p.gamma_phi.micro_phi0(),
            ParamId::ZetaPhi => p.zeta_phi.micro_phi0(),
            ParamId::Temperature => p.temperature.millikelvin(),
        }
    }

    pub fn set(self, p: &mut MrtParams, v: f64) {
        match self {
            ParamId::Delta01 => p.delta01 = Energy::from_mhz(v),
            ParamId::Delta03 => p.delta03 = Energy::from_mhz(v),
            ParamId::Phi31 => p.phi31 = Flux::from_micro_phi0(v),
            ParamId::WPhi => p.w_phi = Flux::from_micro_phi0(v),
            ParamId::GammaPhi => p.gamma_phi = Flux::from_micro_phi0(v),
            ParamId::ZetaPhi => p.zeta_phi = Flux::from_micro_phi0(v),
            ParamId::Temperature => p.temperature = Temperature::from_millikelvin(v),
        }
    }
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ParamId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ParamId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{s}'")))
    }
}

/// Which parameters the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamMask([bool; 7]);

impl Default for ParamMask {
    fn default() -> Self {
        ParamMask([true; 7])
    }
}

impl ParamMask {
    pub fn all() -> Self {
        Self::default()
    }
    pub fn none() -> Self {
        ParamMask([false; 7])
    }
    pub fn is_free(&self, id: ParamId) -> bool {
        self.0[id.index()]
    }
    pub fn set(&mut self, id: ParamId, free: bool) {
        self.0[id.index()] = free;
    }
    pub fn with(mut self, id: ParamId, free: bool) -> Self {
        self.set(id, free);
        self
    }
    pub fn free(&self) -> Vec<ParamId> {
        ParamId::ALL.into_iter().filter(|id| self.is_free(*id)).collect()
    }
}

/// Box bounds in reporting units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds([(f64, f64); 7]);

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds([
            (1e-3, 1e4),
            (1e-3, 1e4),
            (1.0, 1e5),
            (1e-2, 1e4),
            (1e-4, 1e4),
            (1e-4, 1e4),
            (0.1, 1e3),
        ])
    }
}

impl ParamBounds {
    pub fn get(&self, id: ParamId) -> (f64, f64) {
        self.0[id.index()]
    }
    pub fn set(&mut self, id: ParamId, lo: f64, hi: f64) {
        self.0[id.index()] = (lo, hi);
    }
    pub fn contains(&self, id: ParamId, v: f64) -> bool {
        let (lo, hi) = self.get(id);
        v >= lo && v <= hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub free: ParamMask,
    pub bounds: ParamBounds,
    pub lm: LmSettings,
    /// Number of starts, the first being the guess itself.
    pub multistart: usize,
    /// Relative jitter of the extra starts.
    pub jitter: f64,
    pub seed: u64,
    /// Central-difference step in log parameter space.
    pub jacobian_step: f64,
    pub model: ModelOptions,
    /// Main-loop inductance for the derived metrics, H.
    pub inductance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            free: ParamMask::all(),
            bounds: ParamBounds::default(),
            lm: LmSettings::default(),
            multistart: 5,
            jitter: 0.2,
            seed: 0,
            jacobian_step: 1e-4,
            model: ModelOptions::default(),
            inductance: 250e-12,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let lm = &self.lm;
        for (name, v) in [
            ("gradient_tol", lm.gradient_tol),
            ("step_tol", lm.step_tol),
            ("cost_tol", lm.cost_tol),
            ("initial_damping", lm.initial_damping),
            ("jacobian_step", self.jacobian_step),
            ("inductance", self.inductance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if lm.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.multistart == 0 {
            return Err(Error::Config("multistart must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Config(format!("jitter must be in [0, 1), got {}", self.jitter)));
        }
        for id in ParamId::ALL {
            let (lo, hi) = self.bounds.get(id);
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!("bounds for {id} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        self.model.validate()
    }
}

/// Per-point comparison of data and best-fit model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub phi_x: Flux,
    pub well: Well,
    pub data: Rate,
    pub model: Rate,
    pub zeroth: Rate,
    pub first: Rate,
    /// Weighted log residual.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub best: MrtParams,
    /// Free parameters, the index set of `covariance` and `uncertainties`.
    pub free: Vec<ParamId>,
    pub chi2: f64,
    pub dof: usize,
    /// Covariance in reporting units; infinite entries mark unidentifiable directions.
    pub covariance: Vec<Vec<f64>>,
    /// Linearized 1σ in reporting units.
    pub uncertainties: Vec<f64>,
    pub unidentifiable: Vec<ParamId>,
    pub status: FitStatus,
    pub iterations: usize,
    pub evaluations: usize,
    pub cost_history: Vec<f64>,
    pub starts: usize,
    pub best_start: usize,
    /// Line-shape lattice step used at the optimum, GHz.
    pub lattice_step: f64,
    pub derived: NoiseSummary,
    pub residuals: Vec<ResidualRow>,
    pub notes: Vec<String>,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.status.converged()
    }
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
    pub fn value(&self, id: ParamId) -> f64 {
        id.get(&self.best)
    }
    /// 1σ of `id`, `None` when it was held fixed.
    pub fn sigma(&self, id: ParamId) -> Option<f64> {
        self.free.iter().position(|f| *f == id).map(|i| self.uncertainties[i])
    }
}

/// Linearized parameter covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Uncertainty {
    pub covariance: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// Indices of parameters with a component in the Jacobian null space.
    pub unidentifiable: Vec<usize>,
    /// Residual variance `χ²/dof`.
    pub s2: f64,
}

/// Singular values below this fraction of the largest span the null space.
const RANK_TOLERANCE: f64 = 1e-10;

/// `s²(JᵀJ)⁻¹` for a Jacobian of weighted residuals with respect to
/// `ln xᵢ`, mapped to the natural parameters `values`.
pub fn uncertainties(jacobian: &DMatrix<f64>, residuals: &DVector<f64>, values: &[f64]) -> Uncertainty {
    let (m, n) = jacobian.shape();
    let chi2 = residuals.norm_squared();
    let dof = m.saturating_sub(n);
    let s2 = chi2 / dof.max(1) as f64;
    let svd = jacobian.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut null_weight = vec![0.0; n];
    for (k, s) in svd.singular_values.iter().enumerate() {
        let row = vt.row(k);
        if *s > RANK_TOLERANCE * smax && *s > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] += row[i] * row[j] / (s * s);
                }
            }
        } else {
            for i in 0..n {
                null_weight[i] += row[i] * row[i];
            }
        }
    }
    // Thin SVD omits null directions when m < n.
    let missing = n.saturating_sub(svd.singular_values.len());
    let unidentifiable: Vec<usize> =
        (0..n).filter(|&i| null_weight[i] > 1e-6 || (missing > 0 && cov[(i, i)] == 0.0)).collect();
    let mut out = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let bad = unidentifiable.contains(&i) || unidentifiable.contains(&j);
            out[(i, j)] = if bad { f64::INFINITY } else { s2 * cov[(i, j)] * values[i] * values[j] };
        }
    }
    let sigma = (0..n).map(|i| out[(i, i)].sqrt()).collect();
    Uncertainty { covariance: out, sigma, unidentifiable, s2 }
}

/// Data prepared for residual evaluation, all in the left-well frame.
struct Prepared {
    biases: Vec<Flux>,
    ln_rate: Vec<f64>,
    sqrt_w: Vec<f64>,
}

impl Prepared {
    fn new(data: &RateDataset) -> Self {
        Prepared {
            biases: data.points.iter().map(|p| p.well.to_left_frame(p.phi_x)).collect(),
            ln_rate: data.points.iter().map(|p| p.rate.per_us().ln()).collect(),
            sqrt_w: data.points.iter().map(|p| p.sigma_rel.map_or(1.0, |s| 1.0 / s)).collect(),
        }
    }
}

struct MrtProblem<'a> {
    data: &'a Prepared,
    template: MrtParams,
    free: &'a [ParamId],
    opts: ModelOptions,
    h: f64,
    /// Densities at the last point `residuals` succeeded on.
    cache: RefCell<Option<(DVector<f64>, Vec<(f64, f64)>)>>,
}

impl MrtProblem<'_> {
    fn params_at(&self, x: &DVector<f64>) -> MrtParams {
        let mut p = self.template;
        for (id, v) in self.free.iter().zip(x.iter()) {
            id.set(&mut p, v.exp());
        }
        p
    }

    fn densities(&self, p: &MrtParams) -> Option<Vec<(f64, f64)>> {
        let model = RateModel::new(p, &self.data.biases, Well::Left, &self.opts)
            .map_err(|e| log::debug!("model not evaluable: {e}"))
            .ok()?;
        self.data
            .biases
            .iter()
            .map(|b| model.densities(*b, Well::Left).map_err(|e| log::debug!("density not evaluable: {e}")).ok())
            .collect()
    }

    fn residuals_from(&self, p: &MrtParams, dens: &[(f64, f64)]) -> Option<DVector<f64>> {
        let mut r = DVector::zeros(dens.len());
        for (i, (g01, g03)) in dens.iter().enumerate() {
            let (a, b) = rates_from_densities(p.delta01, p.delta03, *g01, *g03);
            let total = a + b;
            if !(total > 0.0 && total.is_finite()) {
                return None;
            }
            r[i] = self.data.sqrt_w[i] * (total.ln() - self.data.ln_rate[i]);
        }
        Some(r)
    }

    fn cached(&self, x: &DVector<f64>) -> Option<Vec<(f64, f64)>> {
        match &*self.cache.borrow() {
            Some((cx, d)) if cx == x => Some(d.clone()),
            _ => None,
        }
    }
}

impl lm::LeastSquares for MrtProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let p = self.params_at(x);
        let dens = self.densities(&p)?;
        let r = self.residuals_from(&p, &dens)?;
        *self.cache.borrow_mut() = Some((x.clone(), dens));
        Some(r)
    }

    fn jacobian(&self, x: &DVector<f64>, _r: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = self.data.biases.len();
        let n = x.len();
        let base = match self.cached(x) {
            Some(d) => d,
            None => self.densities(&self.params_at(x))?,
        };
        let mut j = DMatrix::zeros(m, n);
        for (col, id) in self.free.iter().enumerate() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += self.h;
            xm[col] -= self.h;
            let (pp, pm) = (self.params_at(&xp), self.params_at(&xm));
            // Amplitudes scale the densities without changing them.
            let (rp, rm) = if matches!(id, ParamId::Delta01 | ParamId::Delta03) {
                (self.residuals_from(&pp, &base)?, self.residuals_from(&pm, &base)?)
            } else {
                let dp = self.densities(&pp)?;
                let dm = self.densities(&pm)?;
                (self.residuals_from(&pp, &dp)?, self.residuals_from(&pm, &dm)?)
            };
            j.set_column(col, &((rp - rm) / (2.0 * self.h)));
        }
        Some(j)
    }
}

/// Free set actually fitted: amplitudes and widths at zero stay fixed.
fn effective_free(config: &FitConfig, guess: &MrtParams, notes: &mut Vec<String>) -> Vec<ParamId> {
    let mut mask = config.free;
    if guess.delta03.ghz() == 0.0 {
        for id in [ParamId::Delta03, ParamId::ZetaPhi, ParamId::Phi31] {
            if mask.is_free(id) {
                notes.push(format!("{id} fixed: delta03 is zero so the first peak is absent"));
                mask.set(id, false);
            }
        }
    }
    for id in [ParamId::GammaPhi, ParamId::ZetaPhi] {
        if mask.is_free(id) && id.get(guess) == 0.0 {
            notes.push(format!("{id} fixed at zero"));
            mask.set(id, false);
        }
    }
    mask.free()
}

struct StartOutcome {
    out: lm::LmOutcome,
    step: f64,
}

/// Fit `data` starting from `guess`.
pub fn fit(data: &RateDataset, config: &FitConfig, guess: &MrtParams) -> Result<FitResult> {
    data.validate()?;
    config.validate()?;
    guess.validate()?;
    if guess.ip != data.ip {
        return Err(Error::Validation(format!(
            "guess persistent current {} A differs from the dataset's {} A",
            guess.ip.amps(),
            data.ip.amps()
        )));
    }
    let mut notes = Vec::new();
    let free = effective_free(config, guess, &mut notes);
    if free.is_empty() {
        return Err(Error::Validation("no free parameters".into()));
    }
    let two_peak = guess.delta03.ghz() > 0.0;
    if two_peak && data.points.len() < MIN_TWO_PEAK_POINTS {
        return Err(Error::Validation(format!(
            "a two-peak fit needs at least {MIN_TWO_PEAK_POINTS} points, got {}",
            data.points.len()
        )));
    }
    if data.points.len() < free.len() {
        return Err(Error::Validation(format!(
            "{} points cannot constrain {} free parameters",
            data.points.len(),
            free.len()
        )));
    }
    for id in &free {
        let v = id.get(guess);
        if !config.bounds.contains(*id, v) {
            let (lo, hi) = config.bounds.get(*id);
            return Err(Error::Validation(format!("guess {id} = {v} {} outside bounds [{lo}, {hi}]", id.unit())));
        }
    }

    let prepared = Prepared::new(data);
    let lower = DVector::from_iterator(free.len(), free.iter().map(|id| config.bounds.get(*id).0.ln()));
    let upper = DVector::from_iterator(free.len(), free.iter().map(|id| config.bounds.get(*id).1.ln()));
    let x0 = DVector::from_iterator(free.len(), free.iter().map(|id| id.get(guess).ln()));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<DVector<f64>> = (0..config.multistart)
        .map(|s| {
            let mut x = x0.clone();
            if s > 0 {
                for i in 0..x.len() {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    x[i] = (x[i] + (1.0 + config.jitter * u).ln()).clamp(lower[i], upper[i]);
                }
            }
            x
        })
        .collect();

    let run = |x: DVector<f64>, step: Option<f64>| -> Result<StartOutcome> {
        let mut opts = config.model;
        let template = {
            let mut p = *guess;
            for (id, v) in free.iter().zip(x.iter()) {
                id.set(&mut p, v.exp());
            }
            p
        };
        let step = match (config.model.step, step) {
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => opts.resolve_step(&template, &prepared.biases, Well::Left)?,
        };
        opts.step = Some(step);
        let problem =
            MrtProblem { data: &prepared, template: *guess, free: &free, opts, h: config.jacobian_step, cache: RefCell::new(None) };
        Ok(StartOutcome { out: lm::minimize(&problem, x, &lower, &upper, &config.lm), step })
    };

    let outcomes: Vec<Result<StartOutcome>> = starts.into_par_iter().map(|x| run(x, None)).collect();
    let mut best: Option<(usize, StartOutcome)> = None;
    let mut first_err = None;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) if o.out.status != FitStatus::InvalidStart => {
                if best.as_ref().is_none_or(|(_, b)| o.out.cost < b.out.cost) {
                    best = Some((i, o));
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((best_start, mut chosen)) = best else {
        return Err(first_err.unwrap_or_else(|| Error::NonConvergence("model could not be evaluated at any start".into())));
    };
    let mut iterations = chosen.out.iterations;
    let mut evaluations = chosen.out.evaluations;

    // Re-polish when the optimum wants a noticeably different lattice.
    if config.model.step.is_none() {
        let p = params_from(guess, &free, &chosen.out.x);
        let wanted = config.model.resolve_step(&p, &prepared.biases, Well::Left)?;
        if (wanted / chosen.step - 1.0).abs() > 0.1 {
            let polished = run(chosen.out.x.clone(), Some(wanted))?;
            iterations += polished.out.iterations;
            evaluations += polished.out.evaluations;
            if polished.out.status != FitStatus::InvalidStart {
                let mut history = chosen.out.cost_history.clone();
                history.extend(polished.out.cost_history.iter().skip(1));
                chosen = polished;
                chosen.out.cost_history = history;
            }
        }
    }

    let best_params = params_from(guess, &free, &chosen.out.x);
    let mut opts = config.model;
    opts.step = Some(chosen.step);
    let problem =
        MrtProblem { data: &prepared, template: *guess, free: &free, opts, h: config.jacobian_step, cache: RefCell::new(None) };
    let r = lm::LeastSquares::residuals(&problem, &chosen.out.x)
        .ok_or_else(|| Error::NonConvergence("model not evaluable at the optimum".into()))?;
    let jac = lm::LeastSquares::jacobian(&problem, &chosen.out.x, &r)
        .ok_or_else(|| Error::NonConvergence("Jacobian not evaluable at the optimum".into()))?;
    let values: Vec<f64> = free.iter().map(|id| id.get(&best_params)).collect();
    let unc = uncertainties(&jac, &r, &values);
    let unidentifiable: Vec<ParamId> = unc.unidentifiable.iter().map(|&i| free[i]).collect();
    if !unidentifiable.is_empty() {
        let names: Vec<&str> = unidentifiable.iter().map(|id| id.name()).collect();
        notes.push(format!("singular Jacobian: unidentifiable {}", names.join(", ")));
    }
    if !chosen.out.status.converged() {
        notes.push(format!("not converged ({:?}); best-so-far parameters reported", chosen.out.status));
    }

    let model = RateModel::new(&best_params, &prepared.biases, Well::Left, &opts)?;
    let residuals = data
        .points
        .iter()
        .zip(&prepared.biases)
        .zip(r.iter())
        .map(|((pt, b), res)| {
            let parts = model.parts(*b, Well::Left)?;
            Ok(ResidualRow {
                phi_x: pt.phi_x,
                well: pt.well,
                data: pt.rate,
                model: parts.total(),
                zeroth: parts.zeroth,
                first: parts.first,
                residual: *res,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let derived = derive_metrics(&best_params, config.inductance)?;
    for w in best_params.regime_warnings() {
        log::warn!("best fit: {w}");
        notes.push(w);
    }
    let n = free.len();
    Ok(FitResult {
        best: best_params,
        chi2: r.norm_squared(),
        dof: data.points.len() - n,
        covariance: (0..n).map(|i| (0..n).map(|j| unc.covariance[(i, j)]).collect()).collect(),
        uncertainties: unc.sigma,
        unidentifiable,
        free,
        status: chosen.out.status,
        iterations,
        evaluations,
        cost_history: chosen.out.cost_history,
        starts: config.multistart,
        best_start,
        lattice_step: chosen.step,
        derived,
        residuals,
        notes,
    })
}

fn params_from(template: &MrtParams, free: &[ParamId], x: &DVector<f64>) -> MrtParams {
    let mut p = *template;
    for (id, v) in free.iter().zip(x.iter()) {
        id.set(&mut p, v.exp());
    }
    p
}

/// The noise metrics implied by a parameter set.
pub fn derive_metrics(p: &MrtParams, inductance: f64) -> Result<NoiseSummary> {
    NoiseSummary::compute(p.gamma_phi, p.zeta_phi, p.phi31, p.ip, p.temperature, inductance, &[ONE_GHZ_RAD])
}

/// Guess and fit one dataset.
pub fn fit_dataset(data: &RateDataset, config: &FitConfig) -> Result<FitResult> {
    let g = initial_guess(data)?;
    let mut config = config.clone();
    if g.single_peak {
        for id in [ParamId::Delta03, ParamId::ZetaPhi, ParamId::Phi31] {
            config.free.set(id, false);
        }
    }
    let mut guess = g.params;
    for id in config.free.free() {
        let (lo, hi) = config.bounds.get(id);
        let v = id.get(&guess);
        if v > 0.0 {
            id.set(&mut guess, v.clamp(lo, hi));
        }
    }
    let mut res = fit(data, &config, &guess)?;
    let mut notes = g.notes;
    notes.append(&mut res.notes);
    res.notes = notes;
    Ok(res)
}

/// A batch member that could not be fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub label: String,
    pub outcome: std::result::Result<FitResult, BatchFailure>,
}

/// Equal-width histogram over `[edges[0], edges[n]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let bins = bins.max(1);
        if finite.is_empty() {
            return Histogram { edges: Vec::new(), counts: Vec::new() };
        }
        let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + lo.abs().max(1e-300) * 1e-6;
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for v in finite {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub histogram: Histogram,
}

impl MetricSummary {
    pub fn new(name: &str, values: &[f64], bins: usize) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len();
        let mean = if n > 0 { finite.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let std = if n > 1 {
            (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else if n == 1 {
            0.0
        } else {
            f64::NAN
        };
        MetricSummary { name: name.into(), count: n, mean, std, histogram: Histogram::new(&finite, bins) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub entries: Vec<BatchEntry>,
    pub summary: Vec<MetricSummary>,
}

pub const HISTOGRAM_BINS: usize = 8;

/// Fit every dataset independently; failures are recorded, not propagated.
pub fn batch_fit(datasets: &[RateDataset], config: &FitConfig) -> BatchOutcome {
    let entries: Vec<BatchEntry> = datasets
        .par_iter()
        .enumerate()
        .map(|(i, d)| BatchEntry {
            label: d.label.clone().unwrap_or_else(|| format!("dataset_{i}")),
            outcome: fit_dataset(d, config)
                .map_err(|e| BatchFailure { kind: e.kind().to_string(), message: e.to_string() }),
        })
        .collect();
    let summary = summarize(&entries);
    BatchOutcome { entries, summary }
}

fn summarize(entries: &[BatchEntry]) -> Vec<MetricSummary> {
    let ok: Vec<&FitResult> = entries.iter().filter_map(|e| e.outcome.as_ref().ok()).collect();
    let metric = |f: &dyn Fn(&FitResult) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    vec![
        MetricSummary::new("eta", &metric(&|r| r.derived.eta), HISTOGRAM_BINS),
        MetricSummary::new("r_shunt_ohm", &metric(&|r| r.derived.r_shunt), HISTOGRAM_BINS),
        MetricSummary::new("tan_delta_c", &metric(&|r| r.derived.tan_delta_c), HISTOGRAM_BINS),
        MetricSummary::new("tan_delta_l_1ghz", &metric(&|r| r.derived.tan_delta_l_at_hz(1e9)), HISTOGRAM_BINS),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_ids_round_trip_through_names() {
        for id in ParamId::ALL {
            assert_eq!(id.name().parse::<ParamId>().unwrap(), id);
        }
        assert!("nope".parse::<ParamId>().is_err());
    }

    #[test]
    fn param_set_get_round_trip() {
        let mut p = MrtParams::reference();
        for (i, id) in ParamId::ALL.into_iter().enumerate() {
            id.set(&mut p, 1.5 + i as f64);
            assert!((id.get(&p) - (1.5 + i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn full_rank_covariance_matches_normal_equations() {
        let j = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let r = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.1]);
        let u = uncertainties(&j, &r, &[1.0, 1.0]);
        let inv = (j.transpose() * &j).try_inverse().unwrap();
        let s2 = r.norm_squared() / 2.0;
        for a in 0..2 {
            for b in 0..2 {
                assert!((u.covariance[(a, b)] - s2 * inv[(a, b)]).abs() < 1e-12);
            }
        }
        assert!(u.unidentifiable.is_empty());
    }

    #[test]
    fn null_space_parameters_are_flagged() {
        let j = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 1.0, 3.0, 3.0, 0.0]);
        let r = DVector::from_vec(vec![0.1, 0.1, 0.1]);
        let u = uncertainties(&j, &r, &[1.0, 1.0, 1.0]);
        assert_eq!(u.unidentifiable, vec![0, 1]);
        assert!(u.sigma[0].is_infinite() && u.sigma[1].is_infinite());
        assert!(u.sigma[2].is_finite());
    }

    #[test]
    fn histogram_counts_every_value() {
        let h = Histogram::new(&[0.0, 1.0, 2.0, 3.0, 3.0], 3);
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert_eq!(h.counts, vec![1, 1, 3]);
    }

    #[test]
    fn config_rejects_nonpositive_tolerance() {
        let mut c = FitConfig::default();
        c.lm.step_tol = 0.0;
        assert!(c.validate().is_err());
    }
}
