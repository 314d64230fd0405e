//! The `tendon` command line: generate, benchmark, distill, validate, report.
//!
//! Every stage writes under the run directory and records its files in
//! `manifest.json`; later stages only read files the manifest lists.

pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{build_dataset, read_csv, split, write_csv, Dataset, DatasetMeta};
use crate::distill::{
    distill_analytical, distill_predictions, probe_grid, read_transfer_function, render_equations,
    write_transfer_function, PolyBasis, ANALYTICAL_SOURCE,
};
use crate::error::Error;
use crate::evalkit::{
    export_curves, overlay_svg, pred_vs_actual_svg, run_benchmark, validate_controller, write_text, Controller,
    DeviationReport,
};
use crate::models::Family;
use crate::numerics::Matrix;
use crate::plant::{PoseAngles, TendonDelta};

pub use config::{parse_config_text, RunConfig};
pub use manifest::{FileRecord, Manifest, StageRecord, MANIFEST_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_MODEL: i32 = 4;
pub const EXIT_MISSING: i32 = 5;

pub const DATASET_FILE: &str = "data/dataset.csv";
pub const DATASET_META_FILE: &str = "data/dataset.meta.json";
pub const REPORT_FILE: &str = "benchmark/report.csv";
pub const SUMMARY_FILE: &str = "validate/summary.txt";

/// Ratios are reported only when the analytical controller deviates by at
/// least this much on the axis.
pub const RATIO_FLOOR_DEG: f64 = 1e-6;

const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn missing(message: impl Into<String>) -> Self {
        CliError::new(EXIT_MISSING, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Exit code for a library error raised inside a stage.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_)
        | Error::BadGridSpec(_)
        | Error::UnknownFamily(_)
        | Error::UnknownHyperparameter { .. } => EXIT_CONFIG,
        Error::DatasetTooSparse { .. }
        | Error::TooFewSamples(_)
        | Error::SchemaMismatch(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::MissingOrderingMetadata => EXIT_DATA,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING,
        Error::Io { .. } => EXIT_DATA,
        _ => EXIT_MODEL,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::new(exit_code(&e), e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "tendon",
    version,
    about = "Data-driven transfer functions for tendon-driven continuum robots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<String>,
    /// Run directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Comma-separated model families.
    #[arg(long, global = true, value_name = "LIST")]
    models: Option<String>,
    /// Plant preset: ideal, default or heavy.
    #[arg(long, global = true, value_name = "PRESET")]
    plant: Option<String>,
    #[arg(long, global = true)]
    replicates: Option<String>,
    #[arg(long = "noise-sigma", global = true)]
    noise_sigma: Option<String>,
    /// Grid-search ridge/lasso lambda and GPR lengthscale.
    #[arg(long, global = true)]
    tune: bool,
    /// alternating or grid.
    #[arg(long = "sweep-protocol", global = true)]
    sweep_protocol: Option<String>,
    /// Distillation basis degree (1 or 2).
    #[arg(long, global = true)]
    degree: Option<String>,
    /// No progress output on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep the plant and write the dataset.
    Generate,
    /// Fit and score every model family.
    Benchmark {
        /// Generate the dataset first.
        #[arg(long)]
        generate: bool,
    },
    /// Fit polynomial transfer functions to each benchmarked model.
    Distill,
    /// Run the analytical and best distilled controllers on the plant.
    Validate,
    /// Collate the manifest into report.md.
    Report,
}

impl GlobalArgs {
    fn pairs(&self) -> CliResult<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {}", path.display(), e)))?;
            pairs = parse_config_text(&text)?;
        }
        let flags = [
            ("seed", &self.seed),
            ("out", &self.out),
            ("models", &self.models),
            ("plant", &self.plant),
            ("replicates", &self.replicates),
            ("noise_sigma", &self.noise_sigma),
            ("validate.sweep_protocol", &self.sweep_protocol),
            ("distill.degree", &self.degree),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        if self.tune {
            pairs.push(("tune".into(), "true".into()));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::new(EXIT_CONFIG, format!("--set expects KEY=VALUE, got `{}`", kv)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = cli
        .global
        .pairs()
        .and_then(|p| RunConfig::from_pairs(&p).map_err(CliError::from))
        .map(|mut cfg| {
            cfg.quiet = cli.global.quiet;
            cfg
        })
        .and_then(|cfg| match cli.command {
            Command::Generate => cmd_generate(&cfg),
            Command::Benchmark { generate } => {
                if generate {
                    cmd_generate(&cfg)?;
                }
                cmd_benchmark(&cfg)
            }
            Command::Distill => cmd_distill(&cfg),
            Command::Validate => cmd_validate(&cfg),
            Command::Report => cmd_report(&cfg),
        });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

macro_rules! say {
    ($cfg:expr, $($arg:tt)*) => {
        if !$cfg.quiet {
            println!($($arg)*);
        }
    };
}

fn rel(p: &str) -> PathBuf {
    PathBuf::from(p)
}

fn load_manifest(run_dir: &Path) -> CliResult<Manifest> {
    if !run_dir.is_dir() {
        return Err(CliError::missing(format!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    Manifest::load(run_dir)?.ok_or_else(|| CliError::missing(format!("no {} in {}", MANIFEST_NAME, run_dir.display())))
}

fn require_stage<'a>(m: &'a Manifest, stage: &str, needed_by: &str) -> CliResult<&'a StageRecord> {
    m.stage(stage).ok_or_else(|| {
        CliError::missing(format!(
            "`{}` needs the `{}` stage; run `tendon {}` first",
            needed_by, stage, stage
        ))
    })
}

/// Resolves a manifest-listed file, checking its digest.
fn listed(m: &Manifest, run_dir: &Path, stage: &StageRecord, path: &str) -> CliResult<PathBuf> {
    let rec = stage
        .file(path)
        .ok_or_else(|| CliError::missing(format!("{} is not listed in the manifest", path)))?;
    let p = m.verify(run_dir, rec).map_err(|e| match e {
        Error::Io { .. } => CliError::missing(e.to_string()),
        other => CliError::new(EXIT_DATA, other.to_string()),
    })?;
    Ok(p)
}

fn finish_stage(
    m: &mut Manifest,
    cfg: &RunConfig,
    stage: &str,
    files: &[PathBuf],
    notes: BTreeMap<String, String>,
) -> CliResult<()> {
    m.toolkit_version = TOOLKIT_VERSION.to_string();
    m.config = cfg.snapshot()?;
    m.record_stage(&cfg.out, stage, files, notes)?;
    m.save(&cfg.out)?;
    Ok(())
}

fn load_dataset(m: &Manifest, cfg: &RunConfig, needed_by: &str) -> CliResult<Dataset> {
    let gen = require_stage(m, "generate", needed_by)?;
    let csv = listed(m, &cfg.out, gen, DATASET_FILE)?;
    listed(m, &cfg.out, gen, DATASET_META_FILE)?;
    Ok(read_csv(&csv)?)
}

pub fn cmd_generate(cfg: &RunConfig) -> CliResult<()> {
    let params = cfg.plant()?;
    let ds = build_dataset(&cfg.grid, cfg.replicates, &params, cfg.seed)?.with_preset_label(cfg.preset.name());
    write_csv(&ds, &cfg.out.join(DATASET_FILE))?;
    let mut m = Manifest::load(&cfg.out)?.unwrap_or_default();
    let mut notes = BTreeMap::new();
    notes.insert("samples".to_string(), ds.len().to_string());
    notes.insert("inversion_failures".to_string(), ds.meta.inversion_failures.to_string());
    finish_stage(
        &mut m,
        cfg,
        "generate",
        &[rel(DATASET_FILE), rel(DATASET_META_FILE)],
        notes,
    )?;
    say!(
        cfg,
        "generate: {} samples, {} inversion failures -> {}",
        ds.len(),
        ds.meta.inversion_failures,
        cfg.out.join(DATASET_FILE).display()
    );
    Ok(())
}

fn to_matrix(cmds: &[TendonDelta]) -> Matrix {
    let mut out = Matrix::zeros(cmds.len(), 3);
    for (i, c) in cmds.iter().enumerate() {
        out.row_mut(i).copy_from_slice(&c.as_array());
    }
    out
}

pub const PROBE_HEADER: &str = "alpha_deg,beta_deg,l1,l2,l3";

/// Predictions on the probe grid in shortest round-trip notation, so the
/// distill stage sees exactly the model's outputs.
fn probe_csv(poses: &[PoseAngles], preds: &[TendonDelta]) -> String {
    let mut out = String::from(PROBE_HEADER);
    out.push('\n');
    for (p, c) in poses.iter().zip(preds) {
        out.push_str(&format!("{},{},{},{},{}\n", p.alpha, p.beta, c.l1, c.l2, c.l3));
    }
    out
}

fn read_probe_csv(path: &Path) -> CliResult<(Vec<PoseAngles>, Vec<TendonDelta>)> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::from)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(Error::from)?
        .iter()
        .map(String::from)
        .collect();
    if header.join(",") != PROBE_HEADER {
        return Err(CliError::new(
            EXIT_DATA,
            format!("{}: unexpected header", path.display()),
        ));
    }
    let mut poses = Vec::new();
    let mut preds = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CliError::new(EXIT_DATA, format!("{}: row {} is not numeric", path.display(), i + 2)))?;
        if v.len() != 5 {
            return Err(CliError::new(
                EXIT_DATA,
                format!("{}: row {} has {} fields", path.display(), i + 2, v.len()),
            ));
        }
        poses.push(PoseAngles::new(v[0], v[1]));
        preds.push(TendonDelta::new(v[2], v[3], v[4]));
    }
    Ok((poses, preds))
}

pub fn cmd_benchmark(cfg: &RunConfig) -> CliResult<()> {
    let mut m = load_manifest(&cfg.out)?;
    let ds = load_dataset(&m, cfg, "benchmark")?;
    let (train, val) = split(&ds, cfg.train_fraction, cfg.seed)?;
    let specs = cfg.specs()?;
    let outcome = run_benchmark(&specs, &train, &val)?;

    let mut files = vec![rel(REPORT_FILE)];
    write_text(&cfg.out.join(REPORT_FILE), &outcome.report.to_csv())?;

    let val_poses = val.poses();
    let actual = to_matrix(&val.cmds());
    let probe = probe_grid();
    let mut curves = Vec::new();
    for model in outcome.models.iter().flatten() {
        let name = model.family().name();
        let pred = to_matrix(&model.predict(&val_poses)?);
        let svg = format!("benchmark/{}_pred_vs_actual.svg", name);
        write_text(&cfg.out.join(&svg), &pred_vs_actual_svg(name, &pred, &actual))?;
        files.push(rel(&svg));

        let probe_file = format!("benchmark/probe/{}.csv", name);
        write_text(&cfg.out.join(&probe_file), &probe_csv(&probe, &model.predict(&probe)?))?;
        files.push(rel(&probe_file));

        if let Some(curve) = model.training_curve.as_ref().filter(|c| !c.is_empty()) {
            curves.push((name.to_string(), curve.clone()));
        }
    }
    if !curves.is_empty() {
        for p in export_curves(&curves, &cfg.out.join("benchmark/curves"))? {
            let r = p.strip_prefix(&cfg.out).map(Path::to_path_buf).unwrap_or(p);
            files.push(r);
        }
    }

    let mut notes = BTreeMap::new();
    let best = outcome
        .report
        .best_index()
        .map(|i| outcome.report.rows[i].model.clone());
    if let Some(b) = &best {
        notes.insert("best_model".to_string(), b.clone());
    }
    let mut failed = Vec::new();
    for row in &outcome.report.rows {
        if let Some(e) = &row.error {
            notes.insert(format!("error.{}", row.model), e.clone());
            failed.push(row.model.clone());
        }
    }
    finish_stage(&mut m, cfg, "benchmark", &files, notes)?;

    say!(cfg, "{}", outcome.report.to_csv().trim_end());
    if let Some(b) = best {
        say!(cfg, "best model: {}", b);
    }
    if !failed.is_empty() {
        return Err(CliError::new(
            EXIT_MODEL,
            format!("model(s) failed: {}", failed.join(", ")),
        ));
    }
    Ok(())
}

pub fn cmd_distill(cfg: &RunConfig) -> CliResult<()> {
    let mut m = load_manifest(&cfg.out)?;
    let bench = require_stage(&m, "benchmark", "distill")?.clone();
    let basis = PolyBasis::from_degree(cfg.degree)?;

    let mut files = Vec::new();
    let mut emit = |tf: &crate::distill::TransferFunction, stem: &str| -> CliResult<()> {
        let json = format!("distill/{}.json", stem);
        write_transfer_function(tf, &cfg.out.join(&json))?;
        files.push(rel(&json));
        files.push(rel(&format!("distill/{}.txt", stem)));
        say!(
            cfg,
            "{} (residual rms {:.3e}):\n{}",
            stem,
            tf.residual_rms,
            render_equations(tf)
        );
        Ok(())
    };

    let analytical = distill_analytical(basis, &probe_grid())?;
    emit(&analytical, ANALYTICAL_SOURCE)?;
    for rec in &bench.files {
        let Some(name) = rec
            .path
            .strip_prefix("benchmark/probe/")
            .and_then(|s| s.strip_suffix(".csv"))
        else {
            continue;
        };
        let path = listed(&m, &cfg.out, &bench, &rec.path)?;
        let (poses, preds) = read_probe_csv(&path)?;
        let mut tf = distill_predictions(&poses, &preds, basis, name)?;
        tf.surrogate_of_implicit_model = Family::parse(name).map(Family::is_implicit).unwrap_or(false);
        emit(&tf, name)?;
    }
    let mut notes = BTreeMap::new();
    notes.insert("degree".to_string(), basis.degree().to_string());
    finish_stage(&mut m, cfg, "distill", &files, notes)?;
    Ok(())
}

/// `analytical / best` mean |deviation| on each axis, `None` where the
/// analytical controller is already exact.
pub fn improvement_ratio(analytical: &DeviationReport, best: &DeviationReport) -> [Option<f64>; 2] {
    [0, 1].map(|k| {
        (analytical.mean_abs[k] >= RATIO_FLOOR_DEG)
            .then(|| analytical.mean_abs[k] / best.mean_abs[k].max(f64::MIN_POSITIVE))
    })
}

fn axis_series(report: &DeviationReport, axis: usize) -> Vec<(f64, f64)> {
    let other = 1 - axis;
    let pick = |p: PoseAngles| if axis == 0 { p.alpha } else { p.beta };
    let pick_other = |p: PoseAngles| if other == 0 { p.alpha } else { p.beta };
    let mut pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| pick_other(r.target) == 0.0)
        .map(|r| (pick(r.target), pick(r.achieved)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map(|v| format!("{:.3}", v))
        .unwrap_or_else(|| "not applicable".to_string())
}

pub fn cmd_validate(cfg: &RunConfig) -> CliResult<()> {
    let mut m = load_manifest(&cfg.out)?;
    let gen = require_stage(&m, "generate", "validate")?;
    let meta_path = listed(&m, &cfg.out, gen, DATASET_META_FILE)?;
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text).map_err(Error::from)?;
    let bench = require_stage(&m, "benchmark", "validate")?;
    let best = bench
        .notes
        .get("best_model")
        .cloned()
        .ok_or_else(|| CliError::missing("benchmark recorded no best model"))?;
    let distill = require_stage(&m, "distill", "validate")?;
    let tf_path = listed(&m, &cfg.out, distill, &format!("distill/{}.json", best))?;
    let tf = read_transfer_function(&tf_path)?;

    let targets = cfg.sweep.targets(&meta.grid.unwrap_or(cfg.grid))?;
    let analytical = validate_controller(&Controller::Analytical, &meta.plant, &targets)?;
    let learned = validate_controller(&Controller::Transfer(tf), &meta.plant, &targets)?;
    let ratio = improvement_ratio(&analytical, &learned);

    let mut files = Vec::new();
    let analytical_csv = "validate/deviation_analytical.csv".to_string();
    let best_csv = format!("validate/deviation_{}.csv", best);
    write_text(&cfg.out.join(&analytical_csv), &analytical.to_csv())?;
    write_text(&cfg.out.join(&best_csv), &learned.to_csv())?;
    files.push(rel(&analytical_csv));
    files.push(rel(&best_csv));
    for (axis, name) in [(0, "alpha"), (1, "beta")] {
        let series = vec![
            ("analytical".to_string(), axis_series(&analytical, axis)),
            (best.clone(), axis_series(&learned, axis)),
        ];
        let svg = format!("validate/overlay_{}.svg", name);
        write_text(&cfg.out.join(&svg), &overlay_svg(name, &series))?;
        files.push(rel(&svg));
    }

    let mut summary = format!("targets: {}\nbest model: {}\n", targets.len(), best);
    for r in [&analytical, &learned] {
        summary.push_str(&format!(
            "{}: mean |dev| alpha {:.6} beta {:.6}; max |dev| alpha {:.6} beta {:.6}\n",
            r.controller, r.mean_abs[0], r.mean_abs[1], r.max_abs[0], r.max_abs[1]
        ));
    }
    summary.push_str(&format!(
        "improvement ratio alpha: {}\nimprovement ratio beta: {}\n",
        fmt_ratio(ratio[0]),
        fmt_ratio(ratio[1])
    ));
    write_text(&cfg.out.join(SUMMARY_FILE), &summary)?;
    files.push(rel(SUMMARY_FILE));

    let mut notes = BTreeMap::new();
    notes.insert("best_model".to_string(), best);
    notes.insert("improvement_ratio_alpha".to_string(), fmt_ratio(ratio[0]));
    notes.insert("improvement_ratio_beta".to_string(), fmt_ratio(ratio[1]));
    finish_stage(&mut m, cfg, "validate", &files, notes)?;
    say!(cfg, "{}", summary.trim_end());
    Ok(())
}

fn csv_to_markdown(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        out.push_str(&format!("| {} |\n", line.split(',').collect::<Vec<_>>().join(" | ")));
        if i == 0 {
            let n = line.split(',').count();
            out.push_str(&format!("|{}\n", " --- |".repeat(n)));
        }
    }
    out
}

pub fn cmd_report(cfg: &RunConfig) -> CliResult<()> {
    let mut m = load_manifest(&cfg.out)?;
    let mut md = format!(
        "# Run report\n\ntoolkit version {}\n\n## Configuration\n\n",
        m.toolkit_version
    );
    md.push_str("| key | value |\n| --- | --- |\n");
    for (k, v) in &m.config {
        md.push_str(&format!("| {} | {} |\n", k, v));
    }
    for (name, stage) in m.stages.iter().filter(|(n, _)| n.as_str() != "report") {
        md.push_str(&format!("\n## {}\n\n", name));
        for (k, v) in &stage.notes {
            md.push_str(&format!("- {}: {}\n", k, v));
        }
        if !stage.notes.is_empty() {
            md.push('\n');
        }
        for f in &stage.files {
            md.push_str(&format!("- `{}` sha256 `{}`\n", f.path, f.sha256));
        }
        match name.as_str() {
            "benchmark" => {
                let p = listed(&m, &cfg.out, stage, REPORT_FILE)?;
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                md.push_str("\n### Validation metrics\n\n");
                md.push_str(&csv_to_markdown(&text));
            }
            "distill" => {
                md.push_str("\n### Transfer functions\n");
                for f in stage.files.iter().filter(|f| f.path.ends_with(".txt")) {
                    let p = listed(&m, &cfg.out, stage, &f.path)?;
                    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    md.push_str(&format!("\n`{}`\n\n```\n{}```\n", f.path, text));
                }
            }
            "validate" => {
                let p = listed(&m, &cfg.out, stage, SUMMARY_FILE)?;
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                md.push_str(&format!("\n```\n{}```\n", text));
            }
            _ => {}
        }
    }
    write_text(&cfg.out.join("report.md"), &md)?;
    finish_stage(&mut m, cfg, "report", &[rel("report.md")], BTreeMap::new())?;
    say!(cfg, "report: {}", cfg.out.join("report.md").display());
    Ok(())
}
