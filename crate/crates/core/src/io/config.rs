//! TOML run configuration. Every key has a default and unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envelopes::RelaxationForm;
use crate::error::{Error, Result};
use crate::fitter::{FitConfig, LmSettings, ParamBounds, ParamId, ParamMask};
use crate::rate_model::{ModelOptions, MrtParams, Well};
use crate::squid::{BiasMode, GridSpec, NoiseInputs, RfSquidParams};
use crate::units::{Current, Energy, Flux, Temperature};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "MRTNOISE_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub model: ModelSection,
    pub solver: SolverSection,
    pub squid: SquidSection,
    pub simulate: SimulateSection,
    pub gen: GenSection,
    pub output: OutputSection,
}

/// Model parameters for simulation, generation and derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub delta01_mhz: f64,
    pub delta03_mhz: f64,
    pub phi31_uphi0: f64,
    pub w_phi_uphi0: f64,
    pub gamma_phi_uphi0: f64,
    pub zeta_phi_uphi0: f64,
    pub temperature_mk: f64,
    pub ip_ua: f64,
    /// Main-loop inductance for R_S and tan δ_L.
    pub inductance_ph: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self::from_params(&MrtParams::reference(), 250.0)
    }
}

impl ParamsSection {
    pub fn from_params(p: &MrtParams, inductance_ph: f64) -> Self {
        ParamsSection {
            delta01_mhz: p.delta01.mhz(),
            delta03_mhz: p.delta03.mhz(),
            phi31_uphi0: p.phi31.micro_phi0(),
            w_phi_uphi0: p.w_phi.micro_phi0(),
            gamma_phi_uphi0: p.gamma_phi.micro_phi0(),
            zeta_phi_uphi0: p.zeta_phi.micro_phi0(),
            temperature_mk: p.temperature.millikelvin(),
            ip_ua: p.ip.micro_amps(),
            inductance_ph,
        }
    }

    pub fn to_params(&self) -> Result<MrtParams> {
        let p = MrtParams {
            delta01: Energy::from_mhz(self.delta01_mhz),
            delta03: Energy::from_mhz(self.delta03_mhz),
            phi31: Flux::from_micro_phi0(self.phi31_uphi0),
            w_phi: Flux::from_micro_phi0(self.w_phi_uphi0),
            gamma_phi: Flux::from_micro_phi0(self.gamma_phi_uphi0),
            zeta_phi: Flux::from_micro_phi0(self.zeta_phi_uphi0),
            temperature: Temperature::from_millikelvin(self.temperature_mk),
            ip: Current::from_micro_amps(self.ip_ua),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn inductance(&self) -> Result<f64> {
        if !(self.inductance_ph > 0.0 && self.inductance_ph.is_finite()) {
            return Err(Error::Config(format!("inductance_ph must be positive, got {}", self.inductance_ph)));
        }
        Ok(self.inductance_ph * 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub relaxation_form: RelaxationForm,
    pub resolution: f64,
    pub min_points: usize,
    pub max_points: usize,
    /// Fixed lattice step, GHz; automatic when absent.
    pub step_ghz: Option<f64>,
    /// Parameters held at their initial value during fits.
    pub fixed: Vec<ParamId>,
    /// `[lo, hi]` in reporting units, overriding the built-in bounds.
    pub bounds: BTreeMap<ParamId, [f64; 2]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let o = ModelOptions::default();
        ModelSection {
            relaxation_form: o.relaxation_form,
            resolution: o.resolution,
            min_points: o.min_points,
            max_points: o.max_points,
            step_ghz: None,
            fixed: Vec::new(),
            bounds: BTreeMap::new(),
        }
    }
}

impl ModelSection {
    pub fn options(&self) -> Result<ModelOptions> {
        let o = ModelOptions {
            relaxation_form: self.relaxation_form,
            resolution: self.resolution,
            min_points: self.min_points,
            max_points: self.max_points,
            step: self.step_ghz,
        };
        o.validate()?;
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub cost_tol: f64,
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub multistart: usize,
    pub jitter: f64,
    pub seed: u64,
    pub jacobian_step: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let lm = LmSettings::default();
        let f = FitConfig::default();
        SolverSection {
            gradient_tol: lm.gradient_tol,
            step_tol: lm.step_tol,
            cost_tol: lm.cost_tol,
            max_iterations: lm.max_iterations,
            initial_damping: lm.initial_damping,
            multistart: f.multistart,
            jitter: f.jitter,
            seed: f.seed,
            jacobian_step: f.jacobian_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquidSection {
    pub ic_ua: f64,
    pub l_ph: f64,
    pub c_ff: f64,
    pub phi_cjj_x: f64,
    pub grid_points: usize,
    pub grid_span: f64,
    pub bias_mode: BiasMode,
    /// Capacitive loss tangent; derived from `params` when absent.
    pub tan_delta_c: Option<f64>,
    pub phi_min_uphi0: f64,
    pub phi_max_uphi0: f64,
    pub bias_points: usize,
}

/// Drop the last-bit noise of a unit conversion so templates print cleanly.
fn tidy(v: f64) -> f64 {
    format!("{v:.12e}").parse().unwrap_or(v)
}

impl Default for SquidSection {
    fn default() -> Self {
        let c = RfSquidParams::reference();
        let g = GridSpec::default();
        SquidSection {
            ic_ua: tidy(c.ic * 1e6),
            l_ph: tidy(c.l * 1e12),
            c_ff: tidy(c.c * 1e15),
            phi_cjj_x: c.phi_cjj_x,
            grid_points: g.points,
            grid_span: g.span,
            bias_mode: BiasMode::Representative,
            tan_delta_c: None,
            phi_min_uphi0: -500.0,
            phi_max_uphi0: 3000.0,
            bias_points: 200,
        }
    }
}

impl SquidSection {
    pub fn circuit(&self) -> RfSquidParams {
        RfSquidParams { ic: self.ic_ua * 1e-6, l: self.l_ph * 1e-12, c: self.c_ff * 1e-15, phi_cjj_x: self.phi_cjj_x, phi_x: Flux::ZERO }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { points: self.grid_points, span: self.grid_span }
    }

    pub fn noise(&self, p: &MrtParams) -> Result<NoiseInputs> {
        let tan_delta_c = match self.tan_delta_c {
            Some(t) => t,
            None => crate::units::derive_tan_delta_c(p.zeta_phi, p.phi31)?,
        };
        Ok(NoiseInputs { w_phi: p.w_phi, gamma_phi: p.gamma_phi, tan_delta_c, temperature: p.temperature })
    }
}

/// Bias sweep for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub phi_min_uphi0: f64,
    pub phi_max_uphi0: f64,
    pub points: usize,
    pub well: Well,
    /// Add per-peak columns.
    pub decompose: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { phi_min_uphi0: -500.0, phi_max_uphi0: 3000.0, points: 200, well: Well::Left, decompose: true }
    }
}

/// Synthetic dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub phi_min_uphi0: f64,
    pub phi_max_uphi0: f64,
    pub points: usize,
    /// Relative σ of the multiplicative log-normal noise.
    pub noise_rel: f64,
    pub seed: u64,
    pub well: Well,
    /// Number of qubits; more than one writes a directory of datasets.
    pub qubits: usize,
    /// Relative spread of generator parameters across qubits.
    pub param_jitter: f64,
    /// Write `rate_rel_err` equal to `noise_rel`.
    pub write_sigma: bool,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            phi_min_uphi0: -500.0,
            phi_max_uphi0: 3000.0,
            points: 200,
            noise_rel: 0.05,
            seed: 1,
            well: Well::Left,
            qubits: 1,
            param_jitter: 0.0,
            write_sigma: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub report: String,
    pub report_text: String,
    pub residuals: String,
    pub curve: String,
    pub dataset: String,
    pub summary: String,
    /// Include the wall-clock time in report provenance.
    pub timestamp: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("."),
            report: "report.json".into(),
            report_text: "report.txt".into(),
            residuals: "residuals.tsv".into(),
            curve: "curve.tsv".into(),
            dataset: "dataset.csv".into(),
            summary: "summary.tsv".into(),
            timestamp: true,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Explicit path, else the environment variable, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = explicit.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        match path {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.fit_config()?;
        self.params.to_params()?;
        self.params.inductance()?;
        for (name, n) in [("simulate.points", self.simulate.points), ("gen.points", self.gen.points), ("squid.bias_points", self.squid.bias_points)] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, lo, hi) in [
            ("simulate", self.simulate.phi_min_uphi0, self.simulate.phi_max_uphi0),
            ("gen", self.gen.phi_min_uphi0, self.gen.phi_max_uphi0),
            ("squid", self.squid.phi_min_uphi0, self.squid.phi_max_uphi0),
        ] {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Config(format!("{name}: need phi_min_uphi0 < phi_max_uphi0, got {lo} and {hi}")));
            }
        }
        if !(self.gen.noise_rel >= 0.0 && self.gen.noise_rel.is_finite()) {
            return Err(Error::Config(format!("gen.noise_rel must be non-negative, got {}", self.gen.noise_rel)));
        }
        if !(0.0..1.0).contains(&self.gen.param_jitter) {
            return Err(Error::Config(format!("gen.param_jitter must be in [0, 1), got {}", self.gen.param_jitter)));
        }
        if self.gen.qubits == 0 {
            return Err(Error::Config("gen.qubits must be at least 1".into()));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let s = &self.solver;
        let mut free = ParamMask::all();
        for id in &self.model.fixed {
            free.set(*id, false);
        }
        let mut bounds = ParamBounds::default();
        for (id, [lo, hi]) in &self.model.bounds {
            bounds.set(*id, *lo, *hi);
        }
        let cfg = FitConfig {
            free,
            bounds,
            lm: LmSettings {
                gradient_tol: s.gradient_tol,
                step_tol: s.step_tol,
                cost_tol: s.cost_tol,
                max_iterations: s.max_iterations,
                initial_damping: s.initial_damping,
            },
            multistart: s.multistart,
            jitter: s.jitter,
            seed: s.seed,
            jacobian_step: s.jacobian_step,
            model: self.model.options()?,
            inductance: self.params.inductance()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::parse("[solver]\nmultistrat = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
        assert!(RunConfig::parse("[nonsense]\n").is_err());
    }

    #[test]
    fn fixed_and_bounds_reach_the_fit_config() {
        let c = RunConfig::parse("[model]\nfixed = [\"temperature\"]\n[model.bounds]\nw_phi = [1.0, 100.0]\n").unwrap();
        let f = c.fit_config().unwrap();
        assert!(!f.free.is_free(ParamId::Temperature));
        assert_eq!(f.bounds.get(ParamId::WPhi), (1.0, 100.0));
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }
}
