//! Command-line surface: reproducible file-driven runs. Every command writes
//! a flat `key=value` manifest next to its outputs, so reruns are
//! byte-comparable.
//!
//! Exit codes: 0 success, 2 usage, 3 data/format, 4 numeric failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::activation::ActivationFamily;
use crate::discretize::{euler_resnet, merge_affine, split_plain};
use crate::error::{Error, Result};
use crate::flow::{integrate_reference, FlowProblem};
use crate::network::{load_path, save_path, Network};
use crate::operator::BasisFrame;
use crate::params::StructureKind;
use crate::state::{ChannelKind, LatentState};
use crate::train::{fit, fit_operator, Budget, FitTask, LrSchedule, Template};
use crate::verify::{
    all_suites, suite_construct, suite_conv, suite_core, suite_discretize, suite_flow, suite_train,
    SuiteReport,
};

#[derive(Parser)]
#[command(
    name = "neural-flow",
    version,
    about = "Continuous-depth neural flows and their finite-depth discretizations"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate initial states through a parameter path (RK4 reference).
    Integrate {
        /// Parameter path document (JSON).
        #[arg(long)]
        path: PathBuf,
        /// Initial states (CSV; see README for the header format).
        #[arg(long)]
        z0: PathBuf,
        /// RK4 substeps per constant segment.
        #[arg(long, default_value_t = 64)]
        substeps: usize,
        /// Leaky-ReLU slope of the activation family.
        #[arg(long, default_value_t = 0.0)]
        slope: f64,
        /// Output CSV of final states.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile a path into a finite-depth network model.
    Discretize {
        #[arg(long)]
        path: PathBuf,
        /// Time step; segment durations are snapped to multiples first.
        #[arg(long)]
        dt: f64,
        /// euler (composition -> ResNet) or split (separation -> plain).
        #[arg(long, value_enum)]
        scheme: Scheme,
        /// Leaky-ReLU slope of the activation family.
        #[arg(long, default_value_t = 0.0)]
        slope: f64,
        /// Fuse maximal runs of affine layers after compiling.
        #[arg(long, default_value_t = false)]
        merge: bool,
        /// Channel kind of the states the network will run on.
        #[arg(long, default_value = "scalar")]
        channel_kind: String,
        /// Output model document (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also measure discretization error at these steps (comma-separated,
        /// descending) against the reference flow of the probe states.
        #[arg(long)]
        measure_dts: Option<String>,
        /// Probe states for the error table (CSV, same format as --z0).
        #[arg(long)]
        probes: Option<PathBuf>,
        /// Where to write the error table CSV.
        #[arg(long)]
        error_out: Option<PathBuf>,
    },
    /// Run the property suites and report each invariant.
    Verify {
        /// core | flow | discretize | conv | construct | train | all
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to a file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a tabulated scalar function target (config-driven).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit an operator target through the basis-frame pipeline.
    TrainOperator {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Euler,
    Split,
}

pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Integrate {
            path,
            z0,
            substeps,
            slope,
            out,
        } => cmd_integrate(&path, &z0, substeps, slope, &out),
        Command::Discretize {
            path,
            dt,
            scheme,
            slope,
            merge,
            channel_kind,
            out,
            measure_dts,
            probes,
            error_out,
        } => cmd_discretize(
            &path,
            dt,
            scheme,
            slope,
            merge,
            &channel_kind,
            &out,
            measure_dts.as_deref(),
            probes.as_deref(),
            error_out.as_deref(),
        ),
        Command::Verify { suite, seed, out } => cmd_verify(&suite, seed, out.as_deref()),
        Command::Train { config, out_dir } => cmd_train(&config, &out_dir),
        Command::TrainOperator { config, out_dir } => cmd_train_operator(&config, &out_dir),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::Domain(_) | Error::Alignment(_) => ExitCode::from(2),
        Error::Shape(_) | Error::Format(_) | Error::Version { .. } | Error::Io(_) => {
            ExitCode::from(3)
        }
        Error::Divergence { .. } | Error::NonFinite { .. } | Error::TrainingDiverged { .. } => {
            ExitCode::from(4)
        }
    }
}

// ---- file formats ----------------------------------------------------------

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))
}

fn parse_header(line: &str) -> Result<std::collections::BTreeMap<String, String>> {
    let mut map = std::collections::BTreeMap::new();
    for part in line.trim().split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header entry {part:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn header_usize(map: &std::collections::BTreeMap<String, String>, key: &str) -> Result<usize> {
    map.get(key)
        .ok_or_else(|| Error::Format(format!("header is missing {key}")))?
        .parse()
        .map_err(|_| Error::Format(format!("header {key} is not an integer")))
}

/// States CSV: header `channel_kind=scalar,D=2` or
/// `channel_kind=grid,D=2,n=16,dim=1`; one state per following line,
/// channel-major.
pub fn read_states(path: &Path) -> Result<Vec<LatentState>> {
    let text = read_text(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = parse_header(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty states file".into()))?,
    )?;
    let d = header_usize(&header, "D")?;
    let kind = match header.get("channel_kind").map(String::as_str) {
        Some("scalar") => ChannelKind::Scalar,
        Some("grid") => ChannelKind::Grid {
            n: header_usize(&header, "n")?,
            dim: header_usize(&header, "dim")?,
        },
        other => return Err(Error::Format(format!("unknown channel_kind {other:?}"))),
    };
    lines
        .map(|line| {
            let values = parse_csv_row(line)?;
            LatentState::from_flat(kind, d, &values)
        })
        .collect()
}

pub fn write_states(path: &Path, states: &[LatentState]) -> Result<()> {
    if states.is_empty() {
        return Err(Error::Domain("no states to write".into()));
    }
    let mut out = String::new();
    let kind = states[0].kind();
    match kind {
        ChannelKind::Scalar => {
            let _ = writeln!(out, "channel_kind=scalar,D={}", states[0].num_channels());
        }
        ChannelKind::Grid { n, dim } => {
            let _ = writeln!(
                out,
                "channel_kind=grid,D={},n={n},dim={dim}",
                states[0].num_channels()
            );
        }
    }
    for s in states {
        let row: Vec<String> = s.flatten().iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Function CSV: header `n=64,dx=0.015625`; one grid function per line.
pub fn read_functions(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = parse_header(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty function file".into()))?,
    )?;
    let n = header_usize(&header, "n")?;
    lines
        .map(|line| {
            let values = parse_csv_row(line)?;
            if values.len() != n {
                return Err(Error::Format(format!(
                    "function row has {} samples, header says {n}",
                    values.len()
                )));
            }
            Ok(values)
        })
        .collect()
}

pub fn write_functions(path: &Path, functions: &[Vec<f64>]) -> Result<()> {
    if functions.is_empty() {
        return Err(Error::Domain("no functions to write".into()));
    }
    let n = functions[0].len();
    let mut out = String::new();
    let _ = writeln!(out, "n={n},dx={}", 1.0 / n as f64);
    for f in functions {
        let row: Vec<String> = f.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_csv_row(line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number {tok:?}")))
        })
        .collect()
}

fn write_manifest(target: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    let manifest = target.with_extension(match target.extension() {
        Some(ext) => format!("{}.manifest", ext.to_string_lossy()),
        None => "manifest".to_string(),
    });
    std::fs::write(manifest, out)?;
    Ok(())
}

// ---- commands ---------------------------------------------------------------

fn cmd_integrate(
    path: &Path,
    z0: &Path,
    substeps: usize,
    slope: f64,
    out: &Path,
) -> Result<ExitCode> {
    if substeps == 0 {
        return Err(Error::Domain("--substeps must be at least 1".into()));
    }
    let p = load_path(&read_text(path)?)?;
    let states = read_states(z0)?;
    let fam = ActivationFamily::new(slope);
    let results: Vec<LatentState> = states
        .iter()
        .map(|s| integrate_reference(&FlowProblem::new(p.clone(), s.clone(), fam)?, substeps))
        .collect::<Result<_>>()?;
    write_states(out, &results)?;
    write_manifest(
        out,
        &[
            ("command", "integrate".into()),
            ("path", path.display().to_string()),
            ("z0", z0.display().to_string()),
            ("substeps", substeps.to_string()),
            ("slope", format!("{slope}")),
            ("states", results.len().to_string()),
            ("crate_version", env!("CARGO_PKG_VERSION").into()),
        ],
    )?;
    println!(
        "integrated {} state(s) to t = {}",
        results.len(),
        p.total_time()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_channel_kind(text: &str) -> Result<ChannelKind> {
    if text == "scalar" {
        return Ok(ChannelKind::Scalar);
    }
    if let Some(rest) = text.strip_prefix("grid:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let n = parts[0]
            .parse()
            .map_err(|_| Error::Domain(format!("bad grid size in {text:?}")))?;
        let dim = if parts.len() > 1 {
            parts[1]
                .parse()
                .map_err(|_| Error::Domain(format!("bad grid dim in {text:?}")))?
        } else {
            1
        };
        return ChannelKind::grid(n, dim);
    }
    Err(Error::Domain(format!(
        "unknown channel kind {text:?} (use scalar or grid:<n>[:<dim>])"
    )))
}

#[allow(clippy::too_many_arguments)]
fn cmd_discretize(
    path: &Path,
    dt: f64,
    scheme: Scheme,
    slope: f64,
    merge: bool,
    channel_kind: &str,
    out: &Path,
    measure_dts: Option<&str>,
    probes: Option<&Path>,
    error_out: Option<&Path>,
) -> Result<ExitCode> {
    if measure_dts.is_some() && (probes.is_none() || error_out.is_none()) {
        return Err(Error::Domain(
            "--measure-dts needs --probes and --error-out".into(),
        ));
    }
    let p = load_path(&read_text(path)?)?;
    let kind = parse_channel_kind(channel_kind)?;
    let fam = ActivationFamily::new(slope);
    let (corrected, max_shift) = p.time_correct(dt)?;
    let mut net = match scheme {
        Scheme::Euler => euler_resnet(&corrected, dt, fam, kind)?,
        Scheme::Split => split_plain(&corrected, dt, fam, kind)?,
    };
    if merge {
        net = merge_affine(&net)?;
    }
    let layers = net.depth();
    std::fs::write(out, net.save()?)?;
    write_manifest(
        out,
        &[
            ("command", "discretize".into()),
            ("path", path.display().to_string()),
            ("dt", format!("{dt}")),
            (
                "scheme",
                match scheme {
                    Scheme::Euler => "euler".into(),
                    Scheme::Split => "split".into(),
                },
            ),
            ("slope", format!("{slope}")),
            ("merge", merge.to_string()),
            ("time_correction_max_shift", format!("{max_shift}")),
            ("layers", layers.to_string()),
            ("crate_version", env!("CARGO_PKG_VERSION").into()),
        ],
    )?;
    println!("compiled {layers} layer(s); time-correction shift {max_shift:.3e}");

    if let Some(dts_text) = measure_dts {
        let (probes_file, table_file) = (
            probes.expect("validated above"),
            error_out.expect("validated above"),
        );
        let dts: Vec<f64> = dts_text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Domain(format!("bad dt {t:?} in --measure-dts")))
            })
            .collect::<Result<_>>()?;
        let probe_states = read_states(probes_file)?;
        let rows =
            crate::discretize::measure_discretization_error(&p, &dts, fam, &probe_states, 512)?;
        let mut csv = String::from("dt,sup_error,ratio_to_prev\n");
        for r in &rows {
            let ratio = r.ratio_to_prev.map_or(String::new(), |x| format!("{x}"));
            let _ = writeln!(csv, "{},{},{ratio}", r.dt, r.sup_error);
        }
        std::fs::write(table_file, csv)?;
        println!("wrote error table with {} rows", rows.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: &str, seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let reports: Vec<SuiteReport> = match suite {
        "core" => vec![suite_core(seed)],
        "flow" => vec![suite_flow(seed)?],
        "discretize" => vec![suite_discretize(seed)?],
        "conv" => vec![suite_conv(seed)?],
        "construct" => vec![suite_construct(seed)?],
        "train" => vec![suite_train(seed)?],
        "all" => all_suites(seed)?,
        other => {
            return Err(Error::Domain(format!(
                "unknown suite {other:?} (use core|flow|discretize|conv|construct|train|all)"
            )))
        }
    };
    let mut text = String::new();
    let mut all_passed = true;
    for report in &reports {
        let _ = writeln!(text, "suite {}", report.suite);
        for check in &report.checks {
            let status = if check.passed { "PASS" } else { "FAIL" };
            all_passed &= check.passed;
            let _ = writeln!(text, "  [{status}] {} - {}", check.name, check.detail);
        }
    }
    let _ = writeln!(
        text,
        "overall: {}",
        if all_passed { "PASS" } else { "FAIL" }
    );
    print!("{text}");
    if let Some(out) = out {
        std::fs::write(out, &text)?;
        write_manifest(
            out,
            &[
                ("command", "verify".into()),
                ("suite", suite.into()),
                ("seed", seed.to_string()),
                ("crate_version", env!("CARGO_PKG_VERSION").into()),
            ],
        )?;
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfig {
    target: String,
    #[serde(default = "default_domain")]
    domain: [f64; 2],
    #[serde(default = "default_probes")]
    num_probes: usize,
    structure: String,
    d_latent: usize,
    depth: usize,
    dt: f64,
    #[serde(default)]
    slope: f64,
    #[serde(default = "default_init_scale")]
    init_scale: f64,
    #[serde(default = "default_alpha_init")]
    alpha_init: f64,
    max_iters: usize,
    lr0: f64,
    #[serde(default = "default_lr1")]
    lr1: f64,
    #[serde(default = "default_restarts")]
    restarts: usize,
    seed: u64,
}

fn default_domain() -> [f64; 2] {
    [-1.0, 1.0]
}
fn default_probes() -> usize {
    201
}
fn default_init_scale() -> f64 {
    0.3
}
fn default_alpha_init() -> f64 {
    1.0
}
fn default_lr1() -> f64 {
    1e-4
}
fn default_restarts() -> usize {
    1
}

fn parse_structure(text: &str) -> Result<StructureKind> {
    match text {
        "composition" => Ok(StructureKind::Composition),
        "separation" => Ok(StructureKind::Separation),
        other => Err(Error::Format(format!("unknown structure {other:?}"))),
    }
}

fn target_fn(name: &str) -> Result<Box<dyn Fn(f64) -> f64>> {
    match name {
        "abs" => Ok(Box::new(f64::abs)),
        "sin_pi" => Ok(Box::new(|x: f64| (std::f64::consts::PI * x).sin())),
        "linear2x" => Ok(Box::new(|x: f64| 2.0 * x)),
        other => Err(Error::Format(format!(
            "unknown target {other:?} (use abs|sin_pi|linear2x)"
        ))),
    }
}

fn grid_probes(domain: [f64; 2], n: usize, f: &dyn Fn(f64) -> f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|i| {
            let x = domain[0] + (domain[1] - domain[0]) * i as f64 / (n - 1) as f64;
            (vec![x], vec![f(x)])
        })
        .collect()
}

fn write_loss_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut out = String::from("iter,loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_train(config_path: &Path, out_dir: &Path) -> Result<ExitCode> {
    let cfg: TrainConfig = serde_json::from_str(&read_text(config_path)?)
        .map_err(|e| Error::Format(format!("bad train config: {e}")))?;
    if cfg.num_probes < 2 {
        return Err(Error::Domain("num_probes must be at least 2".into()));
    }
    let f = target_fn(&cfg.target)?;
    let template = Template {
        structure: parse_structure(&cfg.structure)?,
        d_in: 1,
        d_latent: cfg.d_latent,
        d_out: 1,
        depth: cfg.depth,
        dt: cfg.dt,
        activation: ActivationFamily::new(cfg.slope),
        init_scale: cfg.init_scale,
        alpha_init: cfg.alpha_init,
    };
    let task = FitTask {
        probes: grid_probes(cfg.domain, cfg.num_probes, f.as_ref()),
        budget: Budget {
            max_iters: cfg.max_iters,
            lr: LrSchedule::Cosine {
                lr0: cfg.lr0,
                lr1: cfg.lr1,
            },
            restarts: cfg.restarts,
        },
        seed: cfg.seed,
    };
    let outcome = fit(&task, &template)?;

    // sup error on a denser evaluation grid
    let dense = grid_probes(cfg.domain, 4 * cfg.num_probes, f.as_ref());
    let mut sup_error = 0.0f64;
    for (x, y) in &dense {
        let out = outcome.network.forward_vec(x)?;
        sup_error = sup_error.max((out[0] - y[0]).abs());
    }

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("model.json"), outcome.network.save()?)?;
    std::fs::write(out_dir.join("path.json"), save_path(&outcome.path)?)?;
    write_loss_csv(&out_dir.join("loss.csv"), &outcome.loss_curve)?;
    let metrics = format!(
        "best_loss={}\nsup_error={}\niterations={}\n",
        outcome.best_loss,
        sup_error,
        outcome.loss_curve.len()
    );
    std::fs::write(out_dir.join("metrics.txt"), metrics)?;
    write_manifest(
        &out_dir.join("run"),
        &[
            ("command", "train".into()),
            (
                "config",
                read_text(config_path)?.split_whitespace().collect(),
            ),
            ("crate_version", env!("CARGO_PKG_VERSION").into()),
        ],
    )?;
    println!(
        "target {}: best loss {:.3e}, sup error {:.3e}",
        cfg.target, outcome.best_loss, sup_error
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorConfig {
    operator: String,
    n: usize,
    k: usize,
    m: usize,
    #[serde(default = "default_num_train")]
    num_train: usize,
    #[serde(default = "default_num_holdout")]
    num_holdout: usize,
    #[serde(default)]
    train_inputs: Option<PathBuf>,
    #[serde(default)]
    train_outputs: Option<PathBuf>,
    #[serde(default)]
    holdout_inputs: Option<PathBuf>,
    #[serde(default)]
    holdout_outputs: Option<PathBuf>,
    structure: String,
    d_latent: usize,
    depth: usize,
    dt: f64,
    #[serde(default)]
    slope: f64,
    #[serde(default = "default_init_scale")]
    init_scale: f64,
    #[serde(default = "default_alpha_init")]
    alpha_init: f64,
    max_iters: usize,
    lr0: f64,
    #[serde(default = "default_lr1")]
    lr1: f64,
    #[serde(default = "default_restarts")]
    restarts: usize,
    seed: u64,
}

fn default_num_train() -> usize {
    64
}
fn default_num_holdout() -> usize {
    16
}

/// Zero-mean band-limited input with its antiderivative (the zero-mean
/// primitive), both inside the frame's span.
fn antiderivative_pair(frame: &BasisFrame, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let k = frame.input_count();
    let mut in_coeffs = vec![0.0; k];
    for c in in_coeffs.iter_mut().skip(1) {
        *c = rng.gen_range(-1.0..=1.0);
    }
    let mut out_coeffs = vec![0.0; frame.output_count()];
    let two_pi = 2.0 * std::f64::consts::PI;
    for j in (1..k).step_by(2) {
        let freq = j.div_ceil(2) as f64;
        // cos mode j integrates to sin mode j+1; sin mode j+1 to -cos mode j
        if j < out_coeffs.len() {
            out_coeffs[j] -= in_coeffs.get(j + 1).copied().unwrap_or(0.0) / (two_pi * freq);
        }
        if j + 1 < out_coeffs.len() {
            out_coeffs[j + 1] += in_coeffs[j] / (two_pi * freq);
        }
    }
    let v = frame.decode_input(&in_coeffs).expect("sized coefficients");
    let u = frame.decode(&out_coeffs).expect("sized coefficients");
    (v, u)
}

fn cmd_train_operator(config_path: &Path, out_dir: &Path) -> Result<ExitCode> {
    let cfg: OperatorConfig = serde_json::from_str(&read_text(config_path)?)
        .map_err(|e| Error::Format(format!("bad operator config: {e}")))?;
    let frame = BasisFrame::fourier(cfg.n, cfg.k, cfg.m)?;

    let (train_pairs, holdout_pairs) = if let (Some(ti), Some(to)) =
        (&cfg.train_inputs, &cfg.train_outputs)
    {
        let tin = read_functions(ti)?;
        let tout = read_functions(to)?;
        if tin.len() != tout.len() {
            return Err(Error::Format("train input/output row counts differ".into()));
        }
        let train: Vec<_> = tin.into_iter().zip(tout).collect();
        let holdout = match (&cfg.holdout_inputs, &cfg.holdout_outputs) {
            (Some(hi), Some(ho)) => {
                let hin = read_functions(hi)?;
                let hout = read_functions(ho)?;
                if hin.len() != hout.len() {
                    return Err(Error::Format(
                        "holdout input/output row counts differ".into(),
                    ));
                }
                hin.into_iter().zip(hout).collect()
            }
            _ => Vec::new(),
        };
        (train, holdout)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xDA7A));
        let gen_pair = |rng: &mut ChaCha8Rng| -> Result<(Vec<f64>, Vec<f64>)> {
            match cfg.operator.as_str() {
                "antiderivative" => Ok(antiderivative_pair(&frame, rng)),
                "identity" => {
                    let coeffs: Vec<f64> = (0..cfg.k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    let v = frame.decode_input(&coeffs).expect("sized coefficients");
                    Ok((v.clone(), v))
                }
                other => Err(Error::Format(format!(
                    "unknown operator {other:?} (use antiderivative|identity)"
                ))),
            }
        };
        let mut train = Vec::with_capacity(cfg.num_train);
        for _ in 0..cfg.num_train {
            train.push(gen_pair(&mut rng)?);
        }
        let mut holdout = Vec::with_capacity(cfg.num_holdout);
        for _ in 0..cfg.num_holdout {
            holdout.push(gen_pair(&mut rng)?);
        }
        (train, holdout)
    };

    let template = Template {
        structure: parse_structure(&cfg.structure)?,
        d_in: cfg.k,
        d_latent: cfg.d_latent,
        d_out: cfg.m,
        depth: cfg.depth,
        dt: cfg.dt,
        activation: ActivationFamily::new(cfg.slope),
        init_scale: cfg.init_scale,
        alpha_init: cfg.alpha_init,
    };
    let budget = Budget {
        max_iters: cfg.max_iters,
        lr: LrSchedule::Cosine {
            lr0: cfg.lr0,
            lr1: cfg.lr1,
        },
        restarts: cfg.restarts,
    };
    let report = fit_operator(
        &train_pairs,
        &holdout_pairs,
        &frame,
        &template,
        budget,
        cfg.seed,
    )?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("operator_model.json"), report.model.save()?)?;
    write_loss_csv(&out_dir.join("loss.csv"), &report.loss_curve)?;
    let metrics = format!(
        "best_loss={}\nholdout_relative_l2={}\ntruncation_relative_l2={}\nnetwork_relative_l2={}\ncoeff_bound={}\n",
        report.best_loss,
        report.holdout_relative_l2,
        report.truncation_relative_l2,
        report.network_relative_l2,
        report.model.coeff_bound,
    );
    std::fs::write(out_dir.join("metrics.txt"), metrics)?;
    write_manifest(
        &out_dir.join("run"),
        &[
            ("command", "train-operator".into()),
            (
                "config",
                read_text(config_path)?.split_whitespace().collect(),
            ),
            ("crate_version", env!("CARGO_PKG_VERSION").into()),
        ],
    )?;
    println!(
        "operator {}: held-out relative L2 {:.3e} (truncation {:.3e}, network {:.3e})",
        cfg.operator,
        report.holdout_relative_l2,
        report.truncation_relative_l2,
        report.network_relative_l2
    );
    Ok(ExitCode::SUCCESS)
}

/// Round-trip a freshly built network through its document (sanity hook used
/// by the integration tests).
pub fn reload(net: &Network) -> Result<Network> {
    Network::load(&net.save()?)
}
