use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use cavmag_core::analyzer::{
    assign_phase_jumps, convergence_study, nearest_antiresonance, nearest_first_ordering, ConvergenceOptions,
};
use cavmag_core::io::{
    read_branch_csv, read_map_csv, read_spectrum_csv, write_branch_csv, write_map_csv, write_spectrum_csv,
    write_touchstone, BRANCH_HEADER, MAP_HEADER,
};
use cavmag_core::{
    extract_branches, find_features, fit_effective_model, load_spec, magnon_map, predict_coupling_behavior, sweep,
    AnalyzerError, ConfigError, FeatureKind, FitError, FrequencyGrid, IoError, ModelError, PhaseReference,
    SpectralFeature, SystemSpec, Trace,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const THREADS_VAR: &str = "CAVMAG_THREADS";

/// Input-output simulation and analysis of cavity-magnon systems.
#[derive(Debug, Parser)]
#[command(name = "cavmag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the drive frequency and write the scattering spectrum.
    Simulate(SimulateArgs),
    /// Sweep drive and magnon frequency; write the S21 map and antiresonance branches.
    Map(MapArgs),
    /// Classify the features of a spectrum CSV.
    Analyze(AnalyzeArgs),
    /// Fit the effective two-mode model to a map or branch file.
    Fit(FitArgs),
    /// Track the antiresonance while cavity modes are added one by one.
    Converge(ConvergeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Touchstone,
}

#[derive(Debug, Args, Serialize)]
struct DriveGrid {
    /// Lower drive frequency, GHz.
    #[arg(long, default_value_t = 12.0)]
    fmin: f64,
    /// Upper drive frequency, GHz.
    #[arg(long, default_value_t = 17.0)]
    fmax: f64,
    /// Number of drive samples (at least 2).
    #[arg(long, default_value_t = 5001, value_parser = clap::value_parser!(u32).range(2..))]
    points: u32,
}

impl DriveGrid {
    fn grid(&self) -> anyhow::Result<FrequencyGrid> {
        FrequencyGrid::new(self.fmin, self.fmax, self.points as usize).map_err(usage)
    }
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: DriveGrid,
    /// Touchstone additionally writes `spectrum.sNp`.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Extra S-parameters for the CSV as 1-based pairs, e.g. `11,22`.
    #[arg(long = "sparam", value_delimiter = ',')]
    sparams: Vec<String>,
    #[arg(long, default_value_t = 3.0)]
    prominence_db: f64,
}

#[derive(Debug, Args, Serialize)]
struct MapArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 13.44)]
    fmin: f64,
    #[arg(long, default_value_t = 13.69)]
    fmax: f64,
    #[arg(long, default_value_t = 2001, value_parser = clap::value_parser!(u32).range(2..))]
    points: u32,
    #[arg(long, default_value_t = 13.3)]
    magnon_min: f64,
    #[arg(long, default_value_t = 13.9)]
    magnon_max: f64,
    #[arg(long, default_value_t = 201, value_parser = clap::value_parser!(u32).range(2..))]
    magnon_points: u32,
    /// Which magnon mode is tuned.
    #[arg(long, default_value_t = 0)]
    magnon_index: usize,
    /// Minimum depth of an antiresonance dip, dB.
    #[arg(long, default_value_t = 20.0)]
    prominence_db: f64,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    /// Spectrum CSV with `freq_ghz,re_s21,im_s21` columns.
    input: PathBuf,
    /// Optional directory for `report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    prominence_db: f64,
    /// Antiresonance used as phase anchor and for the coupling predictions;
    /// defaults to the deepest one.
    #[arg(long)]
    reference_ghz: Option<f64>,
    /// Read jumps in the raw input-output convention instead of anchoring them.
    #[arg(long)]
    absolute: bool,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    /// Map CSV (from `map`) or branch CSV.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Extraction window for map input, GHz; defaults to the drive range.
    #[arg(long)]
    fmin: Option<f64>,
    #[arg(long)]
    fmax: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    prominence_db: f64,
}

#[derive(Debug, Args, Serialize)]
struct ConvergeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Observed antiresonance frequency, GHz.
    #[arg(long)]
    reference_ghz: f64,
    /// `nearest`, `reversed`, `config`, or a comma list of mode labels or indices.
    #[arg(long, default_value = "nearest")]
    ordering: String,
    /// Drive-grid spacing, GHz.
    #[arg(long, default_value_t = 5e-4)]
    step: f64,
}

/// Marks an error as caused by the invocation or its inputs (exit code 2).
#[derive(Debug)]
struct Usage(anyhow::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(Usage(e.into()))
}

fn io_usage(e: IoError) -> anyhow::Error {
    match e {
        IoError::Io(_) => e.into(),
        other => usage(other),
    }
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: Option<&'a Path>,
    input: Option<&'a Path>,
    parameters: &'a P,
    threads: usize,
    outputs: Vec<PathBuf>,
    duration_s: f64,
}

struct Run {
    start: Instant,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            outputs: Vec::new(),
        }
    }

    fn create(&mut self, dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        self.outputs.push(path);
        Ok(BufWriter::new(file))
    }

    fn finish<P: Serialize>(
        self,
        dir: &Path,
        subcommand: &'static str,
        config: Option<&Path>,
        input: Option<&Path>,
        parameters: &P,
    ) -> anyhow::Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config,
            input,
            parameters,
            threads: rayon::current_num_threads(),
            outputs: self.outputs,
            duration_s: self.start.elapsed().as_secs_f64(),
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))
}

fn load(path: &Path) -> anyhow::Result<SystemSpec> {
    let (spec, warnings) = load_spec(path).map_err(usage)?;
    for w in warnings {
        eprintln!("warning: {}: {}: {}", path.display(), w.field, w.message);
    }
    Ok(spec)
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)
}

fn parse_sparam(text: &str, n_ports: usize) -> anyhow::Result<(usize, usize)> {
    let digits: Vec<usize> = text
        .trim()
        .trim_start_matches(['S', 's'])
        .chars()
        .map(|c| c.to_digit(10).map(|d| d as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| usage(anyhow!("bad S-parameter `{text}`")))?;
    match digits[..] {
        [i, j] if (1..=n_ports).contains(&i) && (1..=n_ports).contains(&j) => Ok((i - 1, j - 1)),
        _ => Err(usage(anyhow!(
            "S-parameter `{text}` is not a pair of ports in 1..={n_ports}"
        ))),
    }
}

/// Assigns each configured mode to the nearest resonance within five of its
/// linewidths (at least three grid steps).
fn mode_labels(spec: &SystemSpec, features: &[SpectralFeature], step: f64) -> Vec<Option<String>> {
    let photons = spec
        .photon_modes
        .iter()
        .map(|m| (&m.label, m.frequency, m.total_gamma() + m.intrinsic_loss));
    let magnons = spec
        .magnon_modes
        .iter()
        .map(|m| (&m.label, m.frequency, m.intrinsic_loss));
    let mut labels = vec![None; features.len()];
    for (label, freq, width) in photons.chain(magnons) {
        let nearest = features
            .iter()
            .enumerate()
            .filter(|(k, f)| f.kind == FeatureKind::Resonance && labels[*k].is_none())
            .min_by(|a, b| (a.1.frequency - freq).abs().total_cmp(&(b.1.frequency - freq).abs()));
        if let Some((k, f)) = nearest {
            if (f.frequency - freq).abs() <= 5.0 * width.max(3.0 * step) {
                labels[k] = Some(label.clone());
            }
        }
    }
    labels
}

/// Resonances without a label are printed as background maxima.
fn print_features(
    out: &mut impl Write,
    features: &[SpectralFeature],
    labels: Option<&[Option<String>]>,
) -> std::io::Result<()> {
    let header = format!(
        "{:<14} {:>14} {:>10} {:>12} {:>14}",
        "kind", "freq_ghz", "depth_db", "width_mhz", "jump"
    );
    writeln!(out, "{}", if labels.is_some() { header + "  mode" } else { header })?;
    for (k, f) in features.iter().enumerate() {
        let label = labels.and_then(|l| l[k].as_deref());
        let kind = match (f.kind, labels, label) {
            (FeatureKind::Antiresonance, ..) => "antiresonance",
            (FeatureKind::Resonance, Some(_), None) => "maximum",
            (FeatureKind::Resonance, ..) => "resonance",
        };
        let line = format!(
            "{kind:<14} {:>14.6} {:>10.2} {:>12.3} {:>14}",
            f.frequency,
            f.prominence_db,
            f.linewidth * 1e3,
            f.phase_jump.to_string()
        );
        match labels {
            Some(_) => writeln!(out, "{line}  {}", label.unwrap_or("-"))?,
            None => writeln!(out, "{line}")?,
        }
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let mut run = Run::new();
    let spec = load(&args.config)?;
    let grid = args.grid.grid()?;
    let extra: Vec<(usize, usize)> = args
        .sparams
        .iter()
        .map(|s| parse_sparam(s, spec.n_ports))
        .collect::<anyhow::Result<_>>()?;
    if spec.n_ports < 2 {
        return Err(usage(anyhow!(
            "{}: S21 needs at least two ports",
            args.config.display()
        )));
    }
    let spectrum = sweep(&spec, &grid)?;
    prepare_dir(&args.out)?;
    let mut w = run.create(&args.out, "spectrum.csv")?;
    write_spectrum_csv(&mut w, &spectrum, &extra)?;
    w.flush()?;
    if args.format == Format::Touchstone {
        let mut w = run.create(&args.out, &format!("spectrum.s{}p", spec.n_ports))?;
        write_touchstone(&mut w, &spectrum)?;
        w.flush()?;
    }
    let features = find_features(&Trace::s21(&spectrum), args.prominence_db)?;
    let labels = mode_labels(&spec, &features, grid.step());
    print_features(&mut std::io::stdout().lock(), &features, Some(&labels))?;
    run.finish(&args.out, "simulate", Some(&args.config), None, args)
}

fn map(args: &MapArgs) -> anyhow::Result<()> {
    let mut run = Run::new();
    let spec = load(&args.config)?;
    if args.magnon_index >= spec.magnon_modes.len() {
        return Err(usage(anyhow!(
            "{}: magnon index {} but the config has {} magnon modes",
            args.config.display(),
            args.magnon_index,
            spec.magnon_modes.len()
        )));
    }
    let drive = FrequencyGrid::new(args.fmin, args.fmax, args.points as usize).map_err(usage)?;
    let magnons = FrequencyGrid::new(args.magnon_min, args.magnon_max, args.magnon_points as usize).map_err(usage)?;
    let sweep_map = magnon_map(&spec, args.magnon_index, &magnons, &drive)?;
    let branch = extract_branches(&sweep_map, (args.fmin, args.fmax), args.prominence_db)?;
    prepare_dir(&args.out)?;
    let mut w = run.create(&args.out, "map.csv")?;
    write_map_csv(&mut w, &sweep_map)?;
    w.flush()?;
    let mut w = run.create(&args.out, "branches.csv")?;
    write_branch_csv(&mut w, &branch)?;
    w.flush()?;
    let merged = branch.merged_mask.iter().filter(|&&m| m).count();
    println!(
        "{} magnon columns, {} usable branch samples, {} merged",
        branch.len(),
        branch.usable_samples(),
        merged
    );
    run.finish(&args.out, "map", Some(&args.config), None, args)
}

#[derive(Serialize)]
struct Prediction {
    frequency: f64,
    jump: cavmag_core::PhaseJump,
    behavior: Option<cavmag_core::CouplingBehavior>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    reference: Option<f64>,
    features: Vec<SpectralFeature>,
    predictions: Vec<Prediction>,
}

fn analyze(args: &AnalyzeArgs) -> anyhow::Result<()> {
    let run = Run::new();
    let trace = read_spectrum_csv(open(&args.input)?)
        .map_err(io_usage)
        .with_context(|| args.input.display().to_string())?;
    let mut features = find_features(&trace, args.prominence_db).map_err(|e| match e {
        AnalyzerError::InsufficientData { .. } => usage(e),
        other => other.into(),
    })?;
    let anchor = match args.reference_ghz {
        Some(f) => nearest_antiresonance(&features, f),
        None => features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FeatureKind::Antiresonance)
            .max_by(|a, b| a.1.prominence_db.total_cmp(&b.1.prominence_db))
            .map(|(k, _)| k),
    };
    let anchor_freq = anchor.map(|k| features[k].frequency);
    if !args.absolute {
        match anchor_freq {
            Some(f) => assign_phase_jumps(&trace, &mut features, PhaseReference::AnchoredAntiresonance(f)),
            None => eprintln!("warning: no antiresonance to anchor the phase; jumps are absolute"),
        }
    }
    let mut predictions = Vec::new();
    let mut out = std::io::stdout().lock();
    print_features(&mut out, &features, None)?;
    if let Some(k) = anchor {
        let ar = features[k];
        writeln!(out)?;
        writeln!(out, "antiresonance {:.6} GHz, jump {}", ar.frequency, ar.phase_jump)?;
        for f in features.iter().filter(|f| f.is_mode_resonance()) {
            let behavior = predict_coupling_behavior(ar.phase_jump, f.phase_jump).ok();
            let text = behavior.map_or("undetermined".to_string(), |b| b.to_string());
            writeln!(out, "  mode {:>12.6} GHz ({}): {}", f.frequency, f.phase_jump, text)?;
            predictions.push(Prediction {
                frequency: f.frequency,
                jump: f.phase_jump,
                behavior,
            });
        }
    }
    out.flush()?;
    if let Some(dir) = &args.out {
        prepare_dir(dir)?;
        let mut run = run;
        let mut w = run.create(dir, "report.json")?;
        let report = AnalyzeReport {
            reference: anchor_freq,
            features,
            predictions,
        };
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
        run.finish(dir, "analyze", None, Some(&args.input), args)?;
    }
    Ok(())
}

fn first_line(path: &Path) -> anyhow::Result<String> {
    let mut line = String::new();
    open(path)?
        .read_line(&mut line)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(line.trim().to_string())
}

fn fit(args: &FitArgs) -> anyhow::Result<()> {
    let mut run = Run::new();
    let header = first_line(&args.input)?;
    let context = || args.input.display().to_string();
    let branch = if header == BRANCH_HEADER.join(",") {
        read_branch_csv(open(&args.input)?)
            .map_err(io_usage)
            .with_context(context)?
    } else if header.starts_with(&MAP_HEADER[..2].join(",")) {
        let map = read_map_csv(open(&args.input)?)
            .map_err(io_usage)
            .with_context(context)?;
        let window = (
            args.fmin.unwrap_or(map.drive_grid.start()),
            args.fmax.unwrap_or(map.drive_grid.stop()),
        );
        extract_branches(&map, window, args.prominence_db)?
    } else {
        bail!(usage(anyhow!(
            "{}: neither a map nor a branch CSV (header `{header}`)",
            args.input.display()
        )));
    };
    let result = fit_effective_model(&branch).map_err(|e| match e {
        FitError::InsufficientSamples { .. } => usage(e),
        other => other.into(),
    })?;
    prepare_dir(&args.out)?;
    let mut w = run.create(&args.out, "fit.json")?;
    serde_json::to_writer_pretty(&mut w, &result)?;
    writeln!(w)?;
    w.flush()?;
    println!(
        "{}: |g_ar| = {:.3} MHz, omega_ar = {:.6} GHz, rms {:.3e} GHz{}",
        result.verdict,
        result.g_ar_magnitude * 1e3,
        result.omega_ar,
        result.rms_residual,
        if result.ambiguous { " (ambiguous)" } else { "" }
    );
    run.finish(&args.out, "fit", None, Some(&args.input), args)
}

fn parse_ordering(text: &str, spec: &SystemSpec, reference: f64) -> anyhow::Result<Vec<usize>> {
    let n = spec.photon_modes.len();
    match text {
        "nearest" => Ok(nearest_first_ordering(spec, reference)),
        "reversed" => Ok(nearest_first_ordering(spec, reference).into_iter().rev().collect()),
        "config" => Ok((0..n).collect()),
        list => list
            .split(',')
            .map(|item| {
                let item = item.trim();
                spec.photon_modes
                    .iter()
                    .position(|m| m.label == item)
                    .or_else(|| item.parse().ok().filter(|&i: &usize| i < n))
                    .ok_or_else(|| {
                        usage(anyhow!(
                            "ordering entry `{item}` is neither a mode label nor an index below {n}"
                        ))
                    })
            })
            .collect(),
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map_or("absent".to_string(), |x| format!("{x:.11e}"))
}

fn converge(args: &ConvergeArgs) -> anyhow::Result<()> {
    let mut run = Run::new();
    let spec = load(&args.config)?;
    let ordering = parse_ordering(&args.ordering, &spec, args.reference_ghz)?;
    let options = ConvergenceOptions {
        step: args.step,
        ..ConvergenceOptions::default()
    };
    let report = convergence_study(&spec, &ordering, args.reference_ghz, options).map_err(|e| match e {
        AnalyzerError::BadOrdering { .. } | AnalyzerError::Model(ModelError::Grid(_)) => usage(e),
        other => other.into(),
    })?;
    prepare_dir(&args.out)?;
    let mut w = run.create(&args.out, "converge.csv")?;
    writeln!(w, "k,added_mode,omega_io_ghz,mismatch_ghz")?;
    for (row, &k) in report.mode_counts.iter().enumerate() {
        writeln!(
            w,
            "{k},{},{},{}",
            report.labels[k - 1],
            opt_field(report.antires_freq[row]),
            opt_field(report.mismatch[row])
        )?;
    }
    w.flush()?;
    if let (Some(&k), Some(m)) = (report.mode_counts.last(), report.mismatch.last()) {
        match m {
            Some(m) => println!("{k} modes: mismatch {:.3} MHz", m * 1e3),
            None => println!("{k} modes: no antiresonance near {} GHz", args.reference_ghz),
        }
    }
    run.finish(&args.out, "converge", Some(&args.config), None, args)
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(anyhow!("{THREADS_VAR} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Map(a) => map(a),
        Command::Analyze(a) => analyze(a),
        Command::Fit(a) => fit(a),
        Command::Converge(a) => converge(a),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let input_error = e.chain().any(|c| {
        c.is::<Usage>() || c.is::<ConfigError>() || matches!(c.downcast_ref::<ModelError>(), Some(ModelError::Grid(_)))
    });
    if input_error {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
