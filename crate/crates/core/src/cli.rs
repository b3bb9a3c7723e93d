use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mrtnoise::error::{Error, Result};
use mrtnoise::fitter::{batch_fit, derive_metrics, fit_dataset, BatchOutcome, RateDataset};
use mrtnoise::io::config::RunConfig;
use mrtnoise::io::families::broadening_families;
use mrtnoise::io::report::{DerivedEntry, FitReport};
use mrtnoise::io::synthetic::{synthesize, synthesize_batch, SynthSpec};
use mrtnoise::io::tables::{model_table, residual_table, Column, Table};
use mrtnoise::io::{load_dataset, sci, write_dataset};
use mrtnoise::rate_model::{simulate_curve_with, uniform_biases};
use mrtnoise::squid::{
    anticrossing, basis_quantities, effective_potential, full_model_rate, harmonic_v31, persistent_current, solve_wells,
};
use mrtnoise::units::{Current, Flux, Temperature};
use mrtnoise::Well;

#[derive(Debug, Parser)]
#[command(name = "mrtnoise", version, about = "Macroscopic resonant tunneling simulation and noise spectroscopy")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, env = mrtnoise::io::config::CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides both the generator and the multistart seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Worker threads for batch fits and multistart.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the model rate curve for `[params]`.
    Simulate {
        #[arg(long)]
        well: Option<WellArg>,
    },
    /// Fit a dataset file and write a report and residual table.
    Fit { dataset: PathBuf },
    /// Print the noise metrics implied by a parameter set.
    Derive(DeriveArgs),
    /// Solve the circuit Hamiltonian and summarize the well basis.
    Squid,
    /// Write synthetic datasets with seeded log-normal noise.
    Gen,
    /// Fit every dataset in a directory.
    Batch { dir: PathBuf },
    /// Write the broadening family tables.
    Families,
    /// Check a saved report against its own parameters.
    Verify { report: PathBuf },
    /// Print a configuration file with every default spelled out.
    ConfigTemplate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WellArg {
    L,
    R,
}

impl From<WellArg> for Well {
    fn from(w: WellArg) -> Self {
        match w {
            WellArg::L => Well::Left,
            WellArg::R => Well::Right,
        }
    }
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    /// μΦ₀
    #[arg(long)]
    pub gamma_phi: Option<f64>,
    /// μΦ₀
    #[arg(long)]
    pub zeta_phi: Option<f64>,
    /// μΦ₀
    #[arg(long)]
    pub phi31: Option<f64>,
    /// μA
    #[arg(long)]
    pub ip: Option<f64>,
    /// mK
    #[arg(long)]
    pub temperature: Option<f64>,
    /// pH
    #[arg(long)]
    pub inductance: Option<f64>,
}

struct Context {
    config: RunConfig,
    config_text: String,
    out: PathBuf,
    format: Format,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let (mut config, _) = RunConfig::resolve(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        config.gen.seed = seed;
        config.solver.seed = seed;
    }
    if let Some(dir) = &cli.global.out {
        config.output.dir = dir.clone();
    }
    config.validate()?;
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
    }
    let ctx = Context { config_text: config.to_toml(), out: config.output.dir.clone(), config, format: cli.global.format };
    match cli.command {
        Command::Simulate { well } => simulate(&ctx, well.map(Well::from)),
        Command::Fit { dataset } => fit(&ctx, &dataset),
        Command::Derive(args) => derive(&ctx, &args),
        Command::Squid => squid(&ctx),
        Command::Gen => gen(&ctx),
        Command::Batch { dir } => batch(&ctx, &dir),
        Command::Families => families(&ctx),
        Command::Verify { report } => verify(&ctx, &report),
        Command::ConfigTemplate => {
            out(&RunConfig::default().to_toml());
            Ok(())
        }
    }
}

fn emit<T: Serialize>(ctx: &Context, value: &T, table: impl FnOnce() -> String) {
    match ctx.format {
        Format::Json => out(&(serde_json::to_string_pretty(value).expect("serializable") + "\n")),
        Format::Table => out(&table()),
    }
}

/// Write to stdout, ignoring a closed pipe.
fn out(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

#[derive(Serialize)]
struct Written {
    files: Vec<PathBuf>,
}

fn report_written(ctx: &Context, files: Vec<PathBuf>) {
    let w = Written { files };
    emit(ctx, &w, || w.files.iter().map(|f| format!("wrote {}\n", f.display())).collect());
}

fn simulate(ctx: &Context, well: Option<Well>) -> Result<()> {
    let s = &ctx.config.simulate;
    let p = ctx.config.params.to_params()?;
    let biases = uniform_biases(s.phi_min_uphi0, s.phi_max_uphi0, s.points);
    let curve = simulate_curve_with(&biases, &p, well.unwrap_or(s.well), &ctx.config.model.options()?)?;
    let path = ctx.path(&ctx.config.output.curve);
    model_table(&curve, s.decompose).write(&path)?;
    report_written(ctx, vec![path]);
    Ok(())
}

fn fit_one(ctx: &Context, data: &RateDataset, input: &[u8]) -> Result<(FitReport, Table)> {
    let cfg = ctx.config.fit_config()?;
    let res = fit_dataset(data, &cfg)?;
    let report = FitReport::from_fit(
        &res,
        data.label.clone(),
        cfg.inductance,
        input,
        ctx.config_text.as_bytes(),
        ctx.config.output.timestamp,
    );
    Ok((report, residual_table(&res.residuals)))
}

fn fit(ctx: &Context, dataset: &Path) -> Result<()> {
    let input = std::fs::read(dataset).map_err(|e| Error::io(dataset, e))?;
    let data = load_dataset(dataset)?;
    let (report, residuals) = fit_one(ctx, &data, &input)?;
    let o = &ctx.config.output;
    report.save(&ctx.path(&o.report))?;
    std::fs::write(ctx.path(&o.report_text), report.render_text()).map_err(|e| Error::io(ctx.path(&o.report_text), e))?;
    residuals.write(&ctx.path(&o.residuals))?;
    emit(ctx, &report, || report.render_text());
    if !report.converged {
        return Err(Error::NonConvergence(format!("{:?}; report written anyway", report.status)));
    }
    Ok(())
}

fn derive(ctx: &Context, a: &DeriveArgs) -> Result<()> {
    let mut p = ctx.config.params.to_params()?;
    if let Some(v) = a.gamma_phi {
        p.gamma_phi = Flux::from_micro_phi0(v);
    }
    if let Some(v) = a.zeta_phi {
        p.zeta_phi = Flux::from_micro_phi0(v);
    }
    if let Some(v) = a.phi31 {
        p.phi31 = Flux::from_micro_phi0(v);
    }
    if let Some(v) = a.ip {
        p.ip = Current::from_micro_amps(v);
    }
    if let Some(v) = a.temperature {
        p.temperature = Temperature::from_millikelvin(v);
    }
    let inductance = match a.inductance {
        Some(v) => v * 1e-12,
        None => ctx.config.params.inductance()?,
    };
    let d: DerivedEntry = (&derive_metrics(&p, inductance)?).into();
    emit(ctx, &d, || {
        format!(
            "eta\t{}\nr_shunt_ohm\t{}\ntan_delta_c\t{}\ntan_delta_l_1ghz\t{}\n",
            sci(d.eta.0),
            sci(d.r_shunt_ohm.0),
            sci(d.tan_delta_c.0),
            sci(d.tan_delta_l_1ghz.0)
        )
    });
    Ok(())
}

#[derive(Serialize)]
struct SquidSummary {
    beta_eff: f64,
    /// Level energies at degeneracy above the potential minimum, GHz.
    energies_ghz: Vec<f64>,
    ip_ua: f64,
    delta01_mhz: f64,
    delta03_mhz: f64,
    phi31_uphi0: f64,
    omega31_ghz: f64,
    v31_uv: f64,
    v31_harmonic_uv: f64,
    delta01_bias_uphi0: f64,
}

fn squid(ctx: &Context) -> Result<()> {
    let s = &ctx.config.squid;
    let circuit = s.circuit();
    let grid = s.grid();
    let basis = solve_wells(&effective_potential(&circuit, &grid)?, 3)?;
    let energies_ghz = basis.states.iter().map(|st| mrtnoise::units::Energy::from_joules(st.energy).ghz()).collect();
    let q = basis_quantities(&circuit, &grid)?;
    let omega = q.omega31.angular();
    let summary = SquidSummary {
        beta_eff: circuit.beta_eff(),
        energies_ghz,
        ip_ua: persistent_current(&basis)?.micro_amps(),
        delta01_mhz: q.delta01.mhz(),
        delta03_mhz: q.delta03.mhz(),
        phi31_uphi0: q.phi31.micro_phi0(),
        omega31_ghz: q.omega31.ghz(),
        v31_uv: q.v31 * 1e6,
        v31_harmonic_uv: harmonic_v31(omega, circuit.c)? * 1e6,
        delta01_bias_uphi0: anticrossing(&circuit, &grid, 0, 1, 3)?.bias.micro_phi0(),
    };

    let p = ctx.config.params.to_params()?;
    let noise = s.noise(&p)?;
    let biases = uniform_biases(s.phi_min_uphi0, s.phi_max_uphi0, s.bias_points);
    let full = full_model_rate(&circuit, &noise, &biases, &grid, s.bias_mode)?;
    let simple = simulate_curve_with(&biases, &p, Well::Left, &ctx.config.model.options()?)?;
    let mut t = Table::new();
    t.push("phi_x_uPhi0", Column::Numbers(biases.iter().map(|b| b.micro_phi0()).collect()))?;
    t.push("full_rate_per_us", Column::Numbers(full.rates()))?;
    t.push("simplified_rate_per_us", Column::Numbers(simple.rates()))?;
    let curve_path = ctx.path("squid_curve.tsv");
    t.write(&curve_path)?;
    let json_path = ctx.path("squid.json");
    std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary).expect("serializable") + "\n")
        .map_err(|e| Error::io(&json_path, e))?;

    emit(ctx, &summary, || {
        let mut o = String::new();
        let _ = writeln!(o, "beta_eff\t{}", sci(summary.beta_eff));
        for (i, e) in summary.energies_ghz.iter().enumerate() {
            let _ = writeln!(o, "E{i}_GHz\t{}", sci(*e));
        }
        for (k, v) in [
            ("ip_uA", summary.ip_ua),
            ("delta01_MHz", summary.delta01_mhz),
            ("delta03_MHz", summary.delta03_mhz),
            ("phi31_uPhi0", summary.phi31_uphi0),
            ("omega31_GHz", summary.omega31_ghz),
            ("v31_uV", summary.v31_uv),
            ("v31_harmonic_uV", summary.v31_harmonic_uv),
        ] {
            let _ = writeln!(o, "{k}\t{}", sci(v));
        }
        let _ = writeln!(o, "wrote {}\nwrote {}", json_path.display(), curve_path.display());
        o
    });
    Ok(())
}

fn gen(ctx: &Context) -> Result<()> {
    let g = &ctx.config.gen;
    let p = ctx.config.params.to_params()?;
    let spec = SynthSpec::from(g);
    let opts = ctx.config.model.options()?;
    let mut files = Vec::new();
    if g.qubits == 1 {
        let d = synthesize(&p, &spec, g.seed, &opts)?;
        let path = ctx.path(&ctx.config.output.dataset);
        write_dataset(&d, &path)?;
        files.push(path);
    } else {
        for (_, d) in synthesize_batch(&p, &spec, g.qubits, g.param_jitter, g.seed, &opts)? {
            let path = ctx.path(&format!("{}.csv", d.label.as_deref().unwrap_or("qubit")));
            write_dataset(&d, &path)?;
            files.push(path);
        }
    }
    report_written(ctx, files);
    Ok(())
}

fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "tsv" | "dat")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!("no .csv, .tsv or .dat files in {}", dir.display())));
    }
    Ok(files)
}

fn batch(ctx: &Context, dir: &Path) -> Result<()> {
    let files = dataset_files(dir)?;
    let mut datasets = Vec::with_capacity(files.len());
    let mut inputs = Vec::with_capacity(files.len());
    for f in &files {
        let mut d = load_dataset(f)?;
        d.label = f.file_stem().map(|s| s.to_string_lossy().into_owned());
        inputs.push(std::fs::read(f).map_err(|e| Error::io(f, e))?);
        datasets.push(d);
    }
    let cfg = ctx.config.fit_config()?;
    let outcome: BatchOutcome = batch_fit(&datasets, &cfg);

    let mut rows = Table::new();
    let mut labels = Vec::new();
    let mut status = Vec::new();
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (entry, input) in outcome.entries.iter().zip(&inputs) {
        labels.push(entry.label.clone());
        match &entry.outcome {
            Ok(res) => {
                let report = FitReport::from_fit(
                    res,
                    Some(entry.label.clone()),
                    cfg.inductance,
                    input,
                    ctx.config_text.as_bytes(),
                    ctx.config.output.timestamp,
                );
                let sub = ctx.out.join(&entry.label);
                report.save(&sub.join(&ctx.config.output.report))?;
                residual_table(&res.residuals).write(&sub.join(&ctx.config.output.residuals))?;
                status.push(if res.converged() { "ok".to_string() } else { "not_converged".to_string() });
                let d: DerivedEntry = (&res.derived).into();
                for (c, v) in cols.iter_mut().zip([d.eta.0, d.r_shunt_ohm.0, d.tan_delta_c.0, d.tan_delta_l_1ghz.0, res.reduced_chi2()]) {
                    c.push(v);
                }
            }
            Err(f) => {
                log::warn!("{}: {}", entry.label, f.message);
                status.push(format!("failed:{}", f.kind));
                cols.iter_mut().for_each(|c| c.push(f64::NAN));
            }
        }
    }
    rows.push("qubit", Column::Text(labels))?;
    rows.push("status", Column::Text(status))?;
    for (h, c) in ["eta", "r_shunt_ohm", "tan_delta_c", "tan_delta_l_1ghz", "reduced_chi2"].iter().zip(cols) {
        rows.push(h, Column::Numbers(c))?;
    }
    let summary_path = ctx.path(&ctx.config.output.summary);
    rows.write(&summary_path)?;
    let hist_path = ctx.path("histograms.json");
    std::fs::write(&hist_path, serde_json::to_string_pretty(&outcome.summary).expect("serializable") + "\n")
        .map_err(|e| Error::io(&hist_path, e))?;

    emit(ctx, &outcome.summary, || {
        let mut o = rows.to_tsv();
        for m in &outcome.summary {
            let _ = writeln!(o, "# {}: n={} mean={} std={}", m.name, m.count, sci(m.mean), sci(m.std));
        }
        o
    });
    let failed = outcome.entries.iter().filter(|e| e.outcome.is_err()).count();
    if failed > 0 {
        return Err(Error::NonConvergence(format!("{failed} of {} datasets failed", outcome.entries.len())));
    }
    Ok(())
}

fn families(ctx: &Context) -> Result<()> {
    let opts = ctx.config.model.options()?;
    let files = broadening_families().iter().map(|f| f.write(&ctx.out, &opts)).collect::<Result<Vec<_>>>()?;
    report_written(ctx, files);
    Ok(())
}

fn verify(ctx: &Context, path: &Path) -> Result<()> {
    let r = FitReport::load(path)?;
    #[derive(Serialize)]
    struct Verified<'a> {
        report: &'a Path,
        ok: bool,
        input_sha256: &'a str,
    }
    let v = Verified { report: path, ok: true, input_sha256: &r.provenance.input_sha256 };
    emit(ctx, &v, || format!("{}: derived metrics consistent\n", path.display()));
    Ok(())
}
