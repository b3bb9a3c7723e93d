//! Delimited-text rate datasets.
//!
//! ```text
//! # mrt-dataset v1
//! # ip_uA: 1.37
//! # temperature_mK: 7.3
//! # qubit_id: q07
//! phi_x_uPhi0,rate_per_us,rate_rel_err,well
//! -5.00000000e2,1.23400000e-3,5.00000000e-2,L
//! ```
//!
//! `rate_rel_err` and `well` are optional columns. A `# well:` line sets the
//! well for files without a `well` column. Comma or tab delimited.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitter::{RateDataset, RatePoint};
use crate::io::{sci, write_file};
use crate::units::{Current, Flux, Rate, Temperature};
use crate::Well;

pub const DATASET_TAG: &str = "mrt-dataset v1";

const PHI: &str = "phi_x_uPhi0";
const RATE: &str = "rate_per_us";
const ERR: &str = "rate_rel_err";
const WELL: &str = "well";

pub fn load_dataset(path: &Path) -> Result<RateDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut d = parse_dataset(&text, path)?;
    if d.label.is_none() {
        d.label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(d)
}

struct Meta {
    ip: Option<f64>,
    temperature: Option<f64>,
    qubit: Option<String>,
    well: Option<Well>,
}

fn parse_well(s: &str) -> Option<Well> {
    match s.trim() {
        "L" | "l" => Some(Well::Left),
        "R" | "r" => Some(Well::Right),
        _ => None,
    }
}

fn parse_meta(text: &str, path: &Path) -> Result<Meta> {
    let err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut meta = Meta { ip: None, temperature: None, qubit: None, well: None };
    let mut tagged = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(body) = raw.trim_start().strip_prefix('#') else { continue };
        let body = body.trim();
        if let Some(version) = body.strip_prefix("mrt-dataset") {
            if version.trim() != "v1" {
                return Err(err(line, format!("unsupported dataset format '{body}'")));
            }
            tagged = true;
            continue;
        }
        let Some((key, value)) = body.split_once([':', '=']) else { continue };
        let (key, value) = (key.trim(), value.trim());
        let number = |v: &str| v.parse::<f64>().map_err(|_| err(line, format!("{key}: '{v}' is not a number")));
        match key {
            "ip_uA" => meta.ip = Some(number(value)?),
            "temperature_mK" => meta.temperature = Some(number(value)?),
            "qubit_id" => meta.qubit = Some(value.to_string()),
            WELL => meta.well = Some(parse_well(value).ok_or_else(|| err(line, format!("well must be L or R, got '{value}'")))?),
            _ => log::warn!("{}:{line}: ignoring metadata key '{key}'", path.display()),
        }
    }
    if !tagged {
        log::warn!("{}: no '# {DATASET_TAG}' header, assuming v1", path.display());
    }
    Ok(meta)
}

/// Parse dataset text; `path` is used only in diagnostics.
pub fn parse_dataset(text: &str, path: &Path) -> Result<RateDataset> {
    let err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let meta = parse_meta(text, path)?;
    let (header_line, header) = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .ok_or_else(|| err(1, "no header row".into()))?;
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| err(header_line + 1, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let phi_col = column(PHI).ok_or_else(|| err(header_line + 1, format!("missing column '{PHI}'")))?;
    let rate_col = column(RATE).ok_or_else(|| err(header_line + 1, format!("missing column '{RATE}'")))?;
    let err_col = column(ERR);
    let well_col = column(WELL);
    for h in headers.iter().filter(|h| ![PHI, RATE, ERR, WELL].contains(h)) {
        log::warn!("{}:{}: ignoring unknown column '{h}'", path.display(), header_line + 1);
    }

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| record.get(c).unwrap_or("");
        let number = |c: usize, name: &str| {
            field(c).parse::<f64>().map_err(|_| err(line, format!("{name}: '{}' is not a number", field(c))))
        };
        let phi = number(phi_col, PHI)?;
        if !phi.is_finite() {
            return Err(err(line, format!("{PHI} must be finite, got {phi}")));
        }
        let rate = number(rate_col, RATE)?;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(err(line, format!("{RATE} must be positive and finite, got {rate}")));
        }
        let sigma_rel = match err_col.map(field).filter(|s| !s.is_empty()) {
            None => None,
            Some(_) => {
                let s = number(err_col.unwrap(), ERR)?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err(err(line, format!("{ERR} must be positive, got {s}")));
                }
                Some(s)
            }
        };
        let well = match well_col {
            Some(c) => parse_well(field(c)).ok_or_else(|| err(line, format!("well must be L or R, got '{}'", field(c))))?,
            None => meta.well.unwrap_or_default(),
        };
        points.push(RatePoint { phi_x: Flux::from_micro_phi0(phi), rate: Rate::from_per_us(rate), sigma_rel, well });
    }

    let ip = meta.ip.ok_or_else(|| err(1, "missing '# ip_uA:' metadata line".into()))?;
    points.sort_by(|a, b| {
        (a.well as u8).cmp(&(b.well as u8)).then(a.phi_x.micro_phi0().total_cmp(&b.phi_x.micro_phi0()))
    });
    let data = RateDataset {
        points,
        ip: Current::from_micro_amps(ip),
        label: meta.qubit,
        temperature_hint: meta.temperature.map(Temperature::from_millikelvin),
    };
    data.validate()?;
    Ok(data)
}

pub fn format_dataset(d: &RateDataset) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {DATASET_TAG}");
    let _ = writeln!(s, "# ip_uA: {}", sci(d.ip.micro_amps()));
    if let Some(t) = d.temperature_hint {
        let _ = writeln!(s, "# temperature_mK: {}", sci(t.millikelvin()));
    }
    if let Some(q) = &d.label {
        let _ = writeln!(s, "# qubit_id: {q}");
    }
    let with_err = d.points.iter().any(|p| p.sigma_rel.is_some());
    if with_err {
        let _ = writeln!(s, "{PHI},{RATE},{ERR},{WELL}");
    } else {
        let _ = writeln!(s, "{PHI},{RATE},{WELL}");
    }
    for p in &d.points {
        let _ = write!(s, "{},{}", sci(p.phi_x.micro_phi0()), sci(p.rate.per_us()));
        if with_err {
            let _ = write!(s, ",{}", p.sigma_rel.map(sci).unwrap_or_default());
        }
        let _ = writeln!(s, ",{}", p.well.tag());
    }
    s
}

pub fn write_dataset(d: &RateDataset, path: &Path) -> Result<()> {
    write_file(path, &format_dataset(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RateDataset> {
        parse_dataset(text, Path::new("t.csv"))
    }

    #[test]
    fn minimal_file() {
        let d = parse("# ip_uA: 1.37\nphi_x_uPhi0,rate_per_us\n0,1\n10,2\n-5,3\n").unwrap();
        assert_eq!(d.points.len(), 3);
        assert_eq!(d.points[0].phi_x.micro_phi0(), -5.0);
        assert!(d.points.iter().all(|p| p.well == Well::Left));
    }

    #[test]
    fn zero_rate_names_the_line() {
        match parse("# ip_uA: 1.37\nphi_x_uPhi0,rate_per_us\n0,1\n10,0\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("rate_per_us"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn tab_delimited_with_extra_column() {
        let d = parse("# ip_uA: 1.37\nwell\tphi_x_uPhi0\tnote\trate_per_us\nR\t1\tx\t2\nL\t3\ty\t4\n").unwrap();
        assert_eq!(d.points[0].well, Well::Left);
        assert_eq!(d.points[1].rate.per_us(), 2.0);
    }

    #[test]
    fn missing_ip_is_a_parse_error() {
        assert!(matches!(parse("phi_x_uPhi0,rate_per_us\n0,1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_number() {
        match parse("# ip_uA: 1\nphi_x_uPhi0,rate_per_us\n0,abc\n") {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
