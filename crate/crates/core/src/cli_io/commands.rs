//! `mtb` subcommands.
//!
//! Exit status: 0 success, 1 usage/config/validation/analysis error,
//! 2 equilibrium solver failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{parse_config, ResolvedSpec};
use super::report::{sha256_hex, write_report, Provenance, ReportDocument};
use super::trace_io::{parse_trace, trace_to_string, write_trace};
use crate::analysis::{analyze, fit_hall_petch, AnalysisOptions, AnalysisReport, FitStrategy, DEFAULT_YIELD_OFFSET};
use crate::error::{Error, Result};
use crate::loadtrain::{machine_compliance, run_profile};
use crate::profile;
use crate::trace::Trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mtb", version, about = "Virtual micro-tensile test bench for thin films")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configured test and write the measured trace.
    Simulate(SimulateArgs),
    /// Reduce a trace to modulus, offset yield and relaxation data.
    Analyze(AnalyzeArgs),
    /// Fit σ0 = σi + k·D^(-1/2) to a grain_size_nm,yield_stress_MPa file.
    Hallpetch(HallPetchArgs),
    /// Simulate, analyze and compare the recovered values with the inputs.
    Roundtrip(RoundtripArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Trace CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides run.seed and MTB_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Report JSON to write; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Machine compliance (um/mN); defaults to the trace's load-train metadata.
    #[arg(long = "compliance-um-per-mN")]
    pub compliance_um_per_mn: Option<f64>,
    #[arg(long)]
    pub gauge_length_um: Option<f64>,
    #[arg(long)]
    pub width_um: Option<f64>,
    #[arg(long)]
    pub thickness_nm: Option<f64>,
    /// Modulus fit window in strain, as LO,HI.
    #[arg(long, value_parser = parse_window)]
    pub fit_window: Option<(f64, f64)>,
    #[arg(long, default_value_t = DEFAULT_YIELD_OFFSET)]
    pub offset: f64,
    /// Bulk reference modulus for the film/bulk ratio.
    #[arg(long = "bulk-modulus-GPa")]
    pub bulk_modulus_gpa: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HallPetchArgs {
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the simulated trace here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the analysis report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("invalid number \"{lo}\""))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("invalid number \"{hi}\""))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("window must satisfy LO < HI, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

pub fn exit_code(error: &Error) -> i32 {
    if error.is_solver() {
        EXIT_SOLVER
    } else {
        EXIT_INVALID
    }
}

/// Seed priority: flag, then config, then `MTB_SEED`, then 0.
pub fn choose_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("MTB_SEED must be an unsigned integer, got \"{v}\""))),
        None => Ok(0),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, env_seed, out, err),
        Command::Analyze(a) => analyze_cmd(&a, out, err),
        Command::Hallpetch(a) => hallpetch(&a, out),
        Command::Roundtrip(a) => roundtrip(&a, env_seed, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

struct Loaded {
    spec: ResolvedSpec,
    config_digest: String,
    seed: u64,
}

fn load_config(path: &Path, seed_flag: Option<u64>, env_seed: Option<&str>) -> Result<Loaded> {
    let text = read_text(path)?;
    let spec = parse_config(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .resolve()?;
    let seed = choose_seed(seed_flag, spec.seed, env_seed)?;
    Ok(Loaded {
        config_digest: sha256_hex(text.as_bytes()),
        spec,
        seed,
    })
}

/// Validates the profile, prints warnings, and runs it.
fn simulate_loaded(loaded: &Loaded, err: &mut dyn Write) -> Result<Trace> {
    let s = &loaded.spec;
    let report = profile::validate(&s.profile, &s.machine, &s.geometry);
    for w in &report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    if !report.is_ok() {
        let messages: Vec<String> = report.errors.iter().map(|e| e.to_string()).collect();
        return Err(Error::Profile(messages.join("; ")));
    }
    let mut trace = run_profile(&s.machine, &s.geometry, &s.model, &s.profile, &s.sensors, loaded.seed)?;
    trace.metadata.notes.extend(s.notes.iter().cloned());
    trace
        .metadata
        .notes
        .extend(s.defaults_applied.iter().map(|d| format!("default {d}")));
    trace
        .metadata
        .notes
        .push(format!("config_sha256 {}", loaded.config_digest));
    Ok(trace)
}

fn simulate(a: &SimulateArgs, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let loaded = load_config(&a.config, a.seed, env_seed)?;
    let trace = simulate_loaded(&loaded, err)?;
    write_trace(&trace, &a.out)?;
    let _ = writeln!(
        out,
        "wrote {} samples ({} segments, seed {}) to {}",
        trace.len(),
        trace.segments.len(),
        loaded.seed,
        a.out.display()
    );
    Ok(())
}

fn analyze_text(text: &str, source: &str, a: &AnalyzeArgs) -> Result<(AnalysisReport, ReportDocument)> {
    let parsed = parse_trace(text, source)?;
    let trace = parsed.trace;
    let mut geometry = trace.metadata.geometry;
    if let Some(v) = a.gauge_length_um {
        geometry.gauge_length = v * 1e-6;
    }
    if let Some(v) = a.width_um {
        geometry.width = v * 1e-6;
    }
    if let Some(v) = a.thickness_nm {
        geometry.thickness = v * 1e-9;
    }
    geometry.validate().map_err(|e| Error::Input(e.to_string()))?;
    let compliance = match a.compliance_um_per_mn {
        Some(c) => c * 1e-3,
        None => machine_compliance(&trace.metadata.machine),
    };
    let options = AnalysisOptions {
        strategy: match a.fit_window {
            Some((strain_lo, strain_hi)) => FitStrategy::Window { strain_lo, strain_hi },
            None => FitStrategy::Auto,
        },
        offset: a.offset,
        bulk_modulus: a.bulk_modulus_gpa.map(|e| e * 1e9),
    };
    let mut report = analyze(&trace, &geometry, compliance, &options)?;
    let overridden = |key: &str| match key {
        "gauge_length_um" => a.gauge_length_um.is_some(),
        "width_um" => a.width_um.is_some(),
        "thickness_nm" => a.thickness_nm.is_some(),
        _ => a.compliance_um_per_mn.is_some(),
    };
    for key in parsed.missing_metadata.iter().filter(|k| !overridden(k)) {
        report
            .warnings
            .push(format!("trace metadata lacks {key}; the bench default was used"));
    }

    let mut provenance = Provenance::new(text.as_bytes());
    let meta = &trace.metadata;
    provenance.seed = Some(meta.seed);
    if !meta.profile_digest.is_empty() {
        provenance.profile_sha256 = Some(meta.profile_digest.clone());
    }
    for note in &meta.notes {
        if let Some(d) = note.strip_prefix("default ") {
            provenance.defaults_applied.push(d.to_string());
        } else if let Some(c) = note.strip_prefix("config_sha256 ") {
            provenance.config_sha256 = Some(c.to_string());
        } else {
            provenance.notes.push(note.clone());
        }
    }
    let doc = ReportDocument::analysis(&report, provenance);
    Ok((report, doc))
}

fn emit_report(doc: &ReportDocument, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => write_report(doc, p),
        None => out
            .write_all(doc.to_json().as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn analyze_cmd(a: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let text = read_text(&a.trace)?;
    let (_, doc) = analyze_text(&text, &a.trace.display().to_string(), a)?;
    for w in &doc.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    emit_report(&doc, a.out.as_deref(), out)
}

/// Reads `grain_size_nm,yield_stress_MPa` rows into SI pairs.
pub fn parse_points(text: &str, source: &str) -> Result<Vec<(f64, f64)>> {
    let fail = |line: usize, message: String| Error::TraceFormat {
        path: source.to_string(),
        line,
        message,
    };
    let mut points = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line.replace(' ', "") != "grain_size_nm,yield_stress_MPa" {
                return Err(fail(i + 1, "expected header grain_size_nm,yield_stress_MPa".into()));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [d, s] = fields[..] else {
            return Err(fail(i + 1, format!("expected 2 fields, found {}", fields.len())));
        };
        let num = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| fail(i + 1, format!("invalid number \"{v}\"")))
        };
        points.push((num(d)? * 1e-9, num(s)? * 1e6));
    }
    if !header_seen {
        return Err(fail(1, "expected header grain_size_nm,yield_stress_MPa".into()));
    }
    Ok(points)
}

fn hallpetch(a: &HallPetchArgs, out: &mut dyn Write) -> Result<()> {
    let text = read_text(&a.points)?;
    let points = parse_points(&text, &a.points.display().to_string())?;
    let fit = fit_hall_petch(&points)?;
    let doc = ReportDocument::hall_petch(&fit, Provenance::new(text.as_bytes()));
    emit_report(&doc, a.out.as_deref(), out)
}

fn relative_error(recovered: f64, truth: f64) -> f64 {
    (recovered - truth) / truth
}

fn roundtrip(a: &RoundtripArgs, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let loaded = load_config(&a.config, a.seed, env_seed)?;
    let trace = simulate_loaded(&loaded, err)?;
    let text = trace_to_string(&trace);
    if let Some(path) = &a.out {
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    }
    let args = AnalyzeArgs {
        trace: a.out.clone().unwrap_or_default(),
        out: None,
        compliance_um_per_mn: None,
        gauge_length_um: None,
        width_um: None,
        thickness_nm: None,
        fit_window: None,
        offset: DEFAULT_YIELD_OFFSET,
        bulk_modulus_gpa: None,
    };
    let (report, doc) = analyze_text(&text, "<roundtrip>", &args)?;
    if let Some(path) = &a.report {
        write_report(&doc, path)?;
    }

    let model = &loaded.spec.model;
    let e_true = model.elastic.modulus;
    let e_rec = report.modulus.modulus;
    let _ = writeln!(out, "seed {}, {} samples", loaded.seed, trace.len());
    let _ = writeln!(
        out,
        "{:<18} {:>12} {:>12} {:>10}",
        "quantity", "truth", "recovered", "rel_error"
    );
    let _ = writeln!(
        out,
        "{:<18} {:>12.4} {:>12.4} {:>9.3}%",
        "modulus_GPa",
        e_true * 1e-9,
        e_rec * 1e-9,
        100.0 * relative_error(e_rec, e_true)
    );
    if model.plastic.enabled {
        let y_true = model.plastic.yield_stress;
        match report.offset_yield {
            Some(y) => {
                let _ = writeln!(
                    out,
                    "{:<18} {:>12.4} {:>12.4} {:>9.3}%",
                    "offset_yield_MPa",
                    y_true * 1e-6,
                    y.stress * 1e-6,
                    100.0 * relative_error(y.stress, y_true)
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<18} {:>12.4} {:>12} {:>10}",
                    "offset_yield_MPa",
                    y_true * 1e-6,
                    "not reached",
                    "-"
                );
            }
        }
    }
    for w in &report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(())
}
