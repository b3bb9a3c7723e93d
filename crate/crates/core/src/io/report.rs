//! Machine-readable fit reports and their text rendering.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fitter::{derive_metrics, FitResult, FitStatus, ParamId};
use crate::io::{sci, write_file};
use crate::units::{Current, NoiseSummary, ONE_GHZ_RAD};
use crate::MrtParams;

pub const REPORT_TAG: &str = "mrt-fit-report v1";

/// Relative tolerance of the load-time recomputation check.
pub const SELF_CONSISTENCY_RTOL: f64 = 1e-7;

/// A float written in fixed scientific notation; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            RawValue::from_string(sci(self.0)).map_err(serde::ser::Error::custom)?.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Num(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: ParamId,
    pub unit: String,
    pub value: Num,
    /// Absent for fixed parameters; `null` when unidentifiable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Num>,
    pub free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedEntry {
    pub eta: Num,
    pub r_shunt_ohm: Num,
    pub tan_delta_c: Num,
    pub tan_delta_l_1ghz: Num,
}

impl From<&NoiseSummary> for DerivedEntry {
    fn from(n: &NoiseSummary) -> Self {
        DerivedEntry {
            eta: n.eta.into(),
            r_shunt_ohm: n.r_shunt.into(),
            tan_delta_c: n.tan_delta_c.into(),
            tan_delta_l_1ghz: n.tan_delta_l_at_hz(ONE_GHZ_RAD / (2.0 * std::f64::consts::PI)).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEntry {
    /// Row and column order.
    pub params: Vec<ParamId>,
    pub matrix: Vec<Vec<Num>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input_sha256: String,
    pub config_sha256: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch; ignored by [`FitReport::same_content`].
    #[serde(default)]
    pub timestamp_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub format: String,
    pub label: Option<String>,
    pub parameters: Vec<ParamEntry>,
    pub ip_ua: Num,
    pub inductance_ph: Num,
    pub chi2: Num,
    pub dof: usize,
    pub reduced_chi2: Num,
    pub status: FitStatus,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub starts: usize,
    pub unidentifiable: Vec<ParamId>,
    pub covariance: CovarianceEntry,
    pub derived: DerivedEntry,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now_unix() -> Option<u64> {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs())
}

impl FitReport {
    pub fn from_fit(
        fit: &FitResult,
        label: Option<String>,
        inductance: f64,
        input: &[u8],
        config: &[u8],
        timestamp: bool,
    ) -> Self {
        let parameters = ParamId::ALL
            .iter()
            .map(|&id| ParamEntry {
                name: id,
                unit: id.unit().to_string(),
                value: fit.value(id).into(),
                sigma: fit.sigma(id).map(Num),
                free: fit.free.contains(&id),
            })
            .collect();
        FitReport {
            format: REPORT_TAG.to_string(),
            label,
            parameters,
            ip_ua: fit.best.ip.micro_amps().into(),
            inductance_ph: (inductance * 1e12).into(),
            chi2: fit.chi2.into(),
            dof: fit.dof,
            reduced_chi2: fit.reduced_chi2().into(),
            status: fit.status,
            converged: fit.converged(),
            iterations: fit.iterations,
            evaluations: fit.evaluations,
            starts: fit.starts,
            unidentifiable: fit.unidentifiable.clone(),
            covariance: CovarianceEntry {
                params: fit.free.clone(),
                matrix: fit.covariance.iter().map(|r| r.iter().copied().map(Num).collect()).collect(),
            },
            derived: (&fit.derived).into(),
            notes: fit.notes.clone(),
            provenance: Provenance {
                input_sha256: sha256_hex(input),
                config_sha256: sha256_hex(config),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp_unix: if timestamp { now_unix() } else { None },
            },
        }
    }

    pub fn value(&self, id: ParamId) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == id).map(|p| p.value.0)
    }

    /// Best-fit parameters as stored.
    pub fn params(&self) -> Result<MrtParams> {
        let mut p = MrtParams::reference();
        p.ip = Current::from_micro_amps(self.ip_ua.0);
        for id in ParamId::ALL {
            let v = self.value(id).ok_or_else(|| Error::Validation(format!("report lacks parameter {id}")))?;
            id.set(&mut p, v);
        }
        p.validate()?;
        Ok(p)
    }

    /// Recompute the derived metrics from the stored parameters and compare.
    pub fn verify(&self) -> Result<()> {
        if self.format != REPORT_TAG {
            return Err(Error::Validation(format!("unsupported report format '{}'", self.format)));
        }
        let fresh: DerivedEntry = (&derive_metrics(&self.params()?, self.inductance_ph.0 * 1e-12)?).into();
        let pairs = [
            ("eta", self.derived.eta, fresh.eta),
            ("r_shunt_ohm", self.derived.r_shunt_ohm, fresh.r_shunt_ohm),
            ("tan_delta_c", self.derived.tan_delta_c, fresh.tan_delta_c),
            ("tan_delta_l_1ghz", self.derived.tan_delta_l_1ghz, fresh.tan_delta_l_1ghz),
        ];
        for (name, stored, recomputed) in pairs {
            let (a, b) = (stored.0, recomputed.0);
            let ok = if a.is_finite() && b.is_finite() {
                (a - b).abs() <= SELF_CONSISTENCY_RTOL * a.abs().max(b.abs()) || a == b
            } else {
                !a.is_finite() && !b.is_finite()
            };
            if !ok {
                return Err(Error::Validation(format!(
                    "derived {name} is {a:e} in the report but {b:e} from its parameters"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("report: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: FitReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        r.verify()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json())
    }

    /// Equality ignoring the timestamp.
    pub fn same_content(&self, other: &FitReport) -> bool {
        let strip = |r: &FitReport| {
            let mut r = r.clone();
            r.provenance.timestamp_unix = None;
            r.to_json()
        };
        strip(self) == strip(other)
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "MRT fit report{}", self.label.as_ref().map(|l| format!(": {l}")).unwrap_or_default());
        let _ = writeln!(s, "status {:?}, {} iterations, {} starts", self.status, self.iterations, self.starts);
        let _ = writeln!(s, "chi2 = {:.4}, dof = {}, chi2/dof = {:.4}", self.chi2.0, self.dof, self.reduced_chi2.0);
        let _ = writeln!(s);
        for p in &self.parameters {
            let body = match p.sigma {
                Some(sig) => with_uncertainty(p.value.0, sig.0),
                None => format!("{} (fixed)", trim_float(p.value.0)),
            };
            let _ = writeln!(s, "  {:<12} = {body} {}", p.name.name(), p.unit);
        }
        let _ = writeln!(s, "  {:<12} = {} uA (measured)", "ip", trim_float(self.ip_ua.0));
        let _ = writeln!(s);
        let d = &self.derived;
        let _ = writeln!(s, "  eta          = {:.3e}", d.eta.0);
        let _ = writeln!(s, "  R_S          = {:.3e} Ohm", d.r_shunt_ohm.0);
        let _ = writeln!(s, "  tan_delta_C  = {:.3e}", d.tan_delta_c.0);
        let _ = writeln!(s, "  tan_delta_L  = {:.3e} at 1 GHz", d.tan_delta_l_1ghz.0);
        if !self.unidentifiable.is_empty() {
            let names: Vec<&str> = self.unidentifiable.iter().map(|p| p.name()).collect();
            let _ = writeln!(s, "\nunidentifiable: {}", names.join(", "));
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(s, "\ninput sha256 {}", self.provenance.input_sha256);
        let _ = writeln!(s, "config sha256 {}", self.provenance.config_sha256);
        s
    }
}

fn trim_float(v: f64) -> String {
    format!("{}", (v * 1e9).round() / 1e9)
}

/// `value ± sigma` rounded to two significant digits of `sigma`.
pub fn with_uncertainty(value: f64, sigma: f64) -> String {
    if !sigma.is_finite() {
        return format!("{} ± inf", trim_float(value));
    }
    if sigma <= 0.0 {
        return format!("{} ± 0", trim_float(value));
    }
    let decimals = (1 - sigma.log10().floor() as i32).max(0) as usize;
    format!("{value:.decimals$} ± {sigma:.decimals$}")
}
