//! Command-line front end: argument definitions, config-file resolution and
//! the subcommand implementations.
//!
//! Every tunable can come from a flag, from a `key = value` file given with
//! `--config`, or from the built-in default, in that order of precedence.
//! Keys in the file are the long flag names without the leading dashes. The
//! resolved values are echoed to `run_config.txt` in the output directory.
//!
//! Exit codes: 0 on success, 1 on runtime failures (I/O, unreadable images,
//! failed checks), 2 on invalid arguments or configuration.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use crate::augment::{corrupt, flip_h, flip_v, median_intensity, rot90, rotate_arbitrary, LabeledScene};
use crate::dataset_io::{
    load_manifest, read_pgm, read_pose_csv, write_class_names, write_label_file, write_pgm,
    write_pose_csv, write_ppm, PoseRow, YoloRecord,
};
use crate::detection::{
    format_detection_sections, nms, parse_detection_sections, select_best, Detection,
};
use crate::detector::{detect, DetectorConfig, Polarity, ThresholdMode};
use crate::eval::{
    check_table1, emit_report, evaluate_pairs, fmt2, parse_table1, EvalPair, Estimate,
    ReportFormat, TABLE1_FIXTURE, TABLE1_MEAN_ANG_ERR, TABLE1_MEAN_TIP_DIST,
};
use crate::geometry::pose_from_detection;
use crate::overlay::render_overlay;
use crate::synth::{derive_seed, generate_batch_with_background, mm_to_px, SynthRanges, NEEDLE_DIAMETER_MM};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "needlepose", version, about = "Needle tip and orientation from vertex-anchored boxes")]
pub struct Cli {
    /// `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a labeled synthetic dataset with a train/test split.
    Synth(SynthArgs),
    /// Expand a labeled dataset with label-consistent augmentations.
    Augment(AugmentArgs),
    /// Run the reference detector (or read detections) and recover poses.
    Detect(DetectArgs),
    /// Compare detected poses with ground truth and write a report.
    Eval(EvalArgs),
    /// Recompute the published results table and check every value.
    Table1(Table1Args),
    /// Draw a detection over its image.
    Overlay(OverlayArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of scenes in total.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub angle_min: Option<f64>,
    #[arg(long)]
    pub angle_max: Option<f64>,
    #[arg(long)]
    pub half_length_min: Option<f64>,
    #[arg(long)]
    pub half_length_max: Option<f64>,
    #[arg(long)]
    pub width_tip: Option<f64>,
    #[arg(long)]
    pub width_tail: Option<f64>,
    /// Scale used to derive the tail width from the physical diameter.
    #[arg(long)]
    pub px_per_mm: Option<f64>,
    #[arg(long)]
    pub fg: Option<u8>,
    #[arg(long)]
    pub bg: Option<u8>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Grayscale PGM to render over instead of a flat field.
    #[arg(long)]
    pub background: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AugmentArgs {
    /// Dataset root holding `images/` and `labels/`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated operations: identity, flip_h, flip_v, rot90xK,
    /// rotD, rot-D, rotpmD (random sign), noiseS.
    #[arg(long)]
    pub ops: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DetectArgs {
    /// Dataset root with `images/`, or a directory of PGM files.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Read detections from an exchange file instead of running the detector.
    #[arg(long)]
    pub from_file: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    /// `auto` or a fixed level 0..=255.
    #[arg(long)]
    pub threshold: Option<ThresholdMode>,
    /// `dark` or `bright`.
    #[arg(long)]
    pub polarity: Option<Polarity>,
    #[arg(long)]
    pub min_component_px: Option<usize>,
    #[arg(long)]
    pub tip_probe_radius: Option<f64>,
    #[arg(long)]
    pub confidence_floor: Option<f64>,
    #[arg(long)]
    pub smoothing_radius: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// Detected poses (`poses.csv`).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Ground-truth poses (`truths.csv`).
    #[arg(long)]
    pub truths: Option<PathBuf>,
    /// Pre-paired table in the results-table layout; `builtin` for the
    /// bundled fixture.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Table1Args {
    /// Fixture CSV; the bundled transcription when omitted.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Check a single 1-based row only.
    #[arg(long)]
    pub row: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Exchange file; the section matching `--image-id` is used when present.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Defaults to the image file stem.
    #[arg(long)]
    pub image_id: Option<String>,
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Merges flag values, config-file values and defaults, remembering what was
/// resolved for the echo file.
#[derive(Debug, Default)]
pub struct Resolver {
    file: HashMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    pub fn new() -> Self {
        Resolver::default()
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut file = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            file.insert(key, v.trim().to_owned());
        }
        Ok(Resolver {
            file,
            resolved: Vec::new(),
        })
    }

    pub fn from_file(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Resolver::new()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                Resolver::from_text(&text)
            }
        }
    }

    fn config_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key `{key}`: {e}"))),
        }
    }

    fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.push((key.to_owned(), value.to_string()));
    }

    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.config_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.config_value(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<&PathBuf>) -> Option<PathBuf> {
        let v = flag.cloned().or_else(|| self.file.get(key).map(PathBuf::from));
        if let Some(p) = &v {
            self.record(key, p.display());
        }
        v
    }

    pub fn required_path(&mut self, key: &str, flag: Option<&PathBuf>) -> Result<PathBuf, CliError> {
        self.path(key, flag)
            .ok_or_else(|| usage(format!("--{key} is required")))
    }

    pub fn echo(&self, command: &str) -> String {
        let mut out = format!("command = {command}\n");
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write_echo(&self, command: &str, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("run_config.txt");
        fs::write(&path, self.echo(command))
            .map_err(|e| runtime(format!("{}: {e}", path.display())))
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Parses arguments and runs the selected command, returning the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = Resolver::from_file(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, &mut cfg).map(|o| {
            println!("wrote {} train and {} test scenes", o.train, o.test);
        }),
        Command::Augment(a) => cmd_augment(a, &mut cfg).map(|o| {
            println!("wrote {} images from {} inputs", o.written, o.inputs);
        }),
        Command::Detect(a) => cmd_detect(a, &mut cfg).map(|o| {
            println!("{} images, {} with a pose, {} failed", o.images, o.with_pose, o.failed.len());
        }),
        Command::Eval(a) => cmd_eval(a, &mut cfg).map(|line| println!("{line}")),
        Command::Table1(a) => cmd_table1(a, &mut cfg),
        Command::Overlay(a) => cmd_overlay(a, &mut cfg),
    }
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOutcome {
    pub train: usize,
    pub test: usize,
}

pub fn cmd_synth(args: &SynthArgs, cfg: &mut Resolver) -> Result<SynthOutcome, CliError> {
    let out = cfg.required_path("out", args.out.as_ref())?;
    let n = cfg.value("n", args.n, 120usize)?;
    let seed = cfg.value("seed", args.seed, 7u64)?;
    let train_fraction = cfg.value("train-fraction", args.train_fraction, 0.8)?;
    let background = match cfg.path("background", args.background.as_ref()) {
        Some(p) => Some(read_pgm(&p).map_err(usage)?),
        None => None,
    };
    let d = SynthRanges::default();
    let (dw, dh) = background
        .as_ref()
        .map_or((d.img_w, d.img_h), |b| (b.width(), b.height()));
    let px_per_mm = cfg.optional("px-per-mm", args.px_per_mm)?;
    if let Some(ppm) = px_per_mm {
        if !(ppm > 0.0 && ppm.is_finite()) {
            return Err(usage(format!("--px-per-mm must be > 0, got {ppm}")));
        }
    }
    let tail_default = px_per_mm.map_or(d.width_tail, |ppm| mm_to_px(NEEDLE_DIAMETER_MM, ppm));
    let width_tail = cfg.value("width-tail", args.width_tail, tail_default)?;
    let ranges = SynthRanges {
        img_w: cfg.value("width", args.width, dw)?,
        img_h: cfg.value("height", args.height, dh)?,
        angle_deg: (
            cfg.value("angle-min", args.angle_min, d.angle_deg.0)?,
            cfg.value("angle-max", args.angle_max, d.angle_deg.1)?,
        ),
        half_length: (
            cfg.value("half-length-min", args.half_length_min, d.half_length.0)?,
            cfg.value("half-length-max", args.half_length_max, d.half_length.1)?,
        ),
        width_tip: cfg.value("width-tip", args.width_tip, width_tail * d.width_tip / d.width_tail)?,
        width_tail,
        fg_intensity: cfg.value("fg", args.fg, d.fg_intensity)?,
        bg_intensity: cfg.value("bg", args.bg, d.bg_intensity)?,
        noise_sigma: cfg.value("noise-sigma", args.noise_sigma, d.noise_sigma)?,
    };

    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(usage(format!("--train-fraction must lie in [0, 1], got {train_fraction}")));
    }
    ranges.validate().map_err(usage)?;
    if let Some(b) = &background {
        if (b.width(), b.height()) != (ranges.img_w, ranges.img_h) {
            return Err(usage(format!(
                "background is {}x{} but the canvas is {}x{}",
                b.width(),
                b.height(),
                ranges.img_w,
                ranges.img_h
            )));
        }
    }

    let scenes = generate_batch_with_background(n, &ranges, seed, background.as_ref()).map_err(usage)?;
    let n_train = ((n as f64 * train_fraction).round() as usize).min(n);

    for (split, range) in [("train", 0..n_train), ("test", n_train..n)] {
        let root = out.join(split);
        create_dir(&root.join("images"))?;
        create_dir(&root.join("labels"))?;
        write_class_names(&root).map_err(runtime)?;
        let rows = range
            .into_par_iter()
            .map(|i| {
                let s = &scenes[i];
                let id = format!("needle_{i:04}");
                write_pgm(&s.image, &root.join("images").join(format!("{id}.pgm")))?;
                let rec = YoloRecord::from_box(&s.truth_box, s.truth_class, ranges.img_w, ranges.img_h)?;
                write_label_file(&root.join("labels").join(format!("{id}.txt")), &[rec])?;
                Ok(PoseRow {
                    image_id: id,
                    pose: s.truth_pose,
                    confidence: None,
                })
            })
            .collect::<crate::Result<Vec<_>>>()
            .map_err(runtime)?;
        write_pose_csv(&root.join("truths.csv"), &rows).map_err(runtime)?;
    }
    cfg.write_echo("synth", &out)?;
    info!("synthesized {n} scenes into {}", out.display());
    Ok(SynthOutcome {
        train: n_train,
        test: n - n_train,
    })
}

// ---------------------------------------------------------------- augment

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    Identity,
    FlipH,
    FlipV,
    Rot90(i32),
    Rotate(f64),
    /// Rotation by the given magnitude with a sign drawn per image.
    RotateEitherWay(f64),
    Noise(f64),
}

pub const DEFAULT_AUGMENT_OPS: &str = "identity,flip_h,flip_v,rot90x1,rotpm15,noise10";

impl FromStr for AugmentOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let num = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("bad number in augmentation `{s}`"))
        };
        match s {
            "identity" => Ok(AugmentOp::Identity),
            "flip_h" => Ok(AugmentOp::FlipH),
            "flip_v" => Ok(AugmentOp::FlipV),
            _ => {
                if let Some(k) = s.strip_prefix("rot90x") {
                    k.parse()
                        .map(AugmentOp::Rot90)
                        .map_err(|_| format!("bad quarter-turn count in `{s}`"))
                } else if let Some(v) = s.strip_prefix("rotpm") {
                    num(v).map(AugmentOp::RotateEitherWay)
                } else if let Some(v) = s.strip_prefix("rot") {
                    num(v).map(AugmentOp::Rotate)
                } else if let Some(v) = s.strip_prefix("noise") {
                    let sigma = num(v)?;
                    if sigma < 0.0 {
                        return Err(format!("negative noise sigma in `{s}`"));
                    }
                    Ok(AugmentOp::Noise(sigma))
                } else {
                    Err(format!("unknown augmentation `{s}`"))
                }
            }
        }
    }
}

pub fn parse_ops(list: &str) -> Result<Vec<AugmentOp>, String> {
    let ops: Vec<AugmentOp> = list
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    if ops.is_empty() {
        return Err("no augmentations given".into());
    }
    Ok(ops)
}

fn fmt_amount(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}

fn rotation_suffix(deg: f64) -> String {
    if deg < 0.0 {
        format!("_rm{}", fmt_amount(-deg))
    } else {
        format!("_rp{}", fmt_amount(deg))
    }
}

/// Applies one operation, returning the file suffix, the result and any
/// dropped-label warnings.
pub fn apply_op(
    scene: &LabeledScene,
    op: AugmentOp,
    seed: u64,
) -> crate::Result<(String, LabeledScene, Vec<String>)> {
    Ok(match op {
        AugmentOp::Identity => ("_id".into(), scene.clone(), Vec::new()),
        AugmentOp::FlipH => ("_fh".into(), flip_h(scene), Vec::new()),
        AugmentOp::FlipV => ("_fv".into(), flip_v(scene), Vec::new()),
        AugmentOp::Rot90(k) => (format!("_r90x{k}"), rot90(scene, k), Vec::new()),
        AugmentOp::Rotate(deg) | AugmentOp::RotateEitherWay(deg) => {
            let deg = match op {
                AugmentOp::RotateEitherWay(_) if seed & 1 == 1 => -deg,
                _ => deg,
            };
            let (s, w) = rotate_arbitrary(scene, deg, median_intensity(scene.image()));
            (rotation_suffix(deg), s, w)
        }
        AugmentOp::Noise(sigma) => (format!("_n{}", fmt_amount(sigma)), corrupt(scene, sigma, seed)?, Vec::new()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentOutcome {
    pub inputs: usize,
    pub written: usize,
    pub warnings: Vec<String>,
}

pub fn cmd_augment(args: &AugmentArgs, cfg: &mut Resolver) -> Result<AugmentOutcome, CliError> {
    let input = cfg.required_path("input", args.input.as_ref())?;
    let out = cfg.required_path("out", args.out.as_ref())?;
    let ops_text = cfg.value("ops", args.ops.clone(), DEFAULT_AUGMENT_OPS.to_owned())?;
    let seed = cfg.value("seed", args.seed, 7u64)?;
    let ops = parse_ops(&ops_text).map_err(usage)?;
    let manifest = load_manifest(&input).map_err(usage)?;
    for w in &manifest.warnings {
        warn!("{w}");
    }

    create_dir(&out.join("images"))?;
    create_dir(&out.join("labels"))?;
    write_class_names(&out).map_err(runtime)?;

    let per_item = manifest
        .items
        .par_iter()
        .enumerate()
        .map(|(idx, item)| -> crate::Result<(usize, Vec<String>)> {
            let image = read_pgm(&item.image_path)?;
            let scene = LabeledScene::from_records(image, &item.records)?;
            let item_seed = derive_seed(seed, idx as u64);
            let mut warnings = Vec::new();
            let mut written = 0;
            for (k, &op) in ops.iter().enumerate() {
                let (suffix, result, w) = apply_op(&scene, op, derive_seed(item_seed, k as u64))?;
                warnings.extend(w.into_iter().map(|m| format!("{}{suffix}: {m}", item.image_id)));
                let stem = format!("{}{suffix}", item.image_id);
                write_pgm(result.image(), &out.join("images").join(format!("{stem}.pgm")))?;
                write_label_file(&out.join("labels").join(format!("{stem}.txt")), &result.records()?)?;
                written += 1;
            }
            Ok((written, warnings))
        })
        .collect::<crate::Result<Vec<_>>>()
        .map_err(runtime)?;

    let mut outcome = AugmentOutcome {
        inputs: manifest.items.len(),
        written: 0,
        warnings: manifest.warnings,
    };
    for (n, w) in per_item {
        outcome.written += n;
        outcome.warnings.extend(w);
    }
    for w in &outcome.warnings {
        warn!("{w}");
    }
    cfg.write_echo("augment", &out)?;
    Ok(outcome)
}

// ---------------------------------------------------------------- detect

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectOutcome {
    pub images: usize,
    pub with_pose: usize,
    pub failed: Vec<String>,
}

fn list_pgm(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(runtime)?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_owned(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn resolve_detector(args: &DetectArgs, cfg: &mut Resolver) -> Result<DetectorConfig, CliError> {
    let d = DetectorConfig::default();
    let c = DetectorConfig {
        threshold_mode: cfg.value("threshold", args.threshold, d.threshold_mode)?,
        polarity: cfg.value("polarity", args.polarity, d.polarity)?,
        min_component_px: cfg.value("min-component-px", args.min_component_px, d.min_component_px)?,
        tip_probe_radius: cfg.value("tip-probe-radius", args.tip_probe_radius, d.tip_probe_radius)?,
        confidence_floor: cfg.value("confidence-floor", args.confidence_floor, d.confidence_floor)?,
        smoothing_radius: cfg.value("smoothing-radius", args.smoothing_radius, d.smoothing_radius)?,
    };
    c.validate().map_err(usage)?;
    Ok(c)
}

fn check_unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie in [0, 1], got {v}")))
    }
}

pub fn cmd_detect(args: &DetectArgs, cfg: &mut Resolver) -> Result<DetectOutcome, CliError> {
    let out = cfg.required_path("out", args.out.as_ref())?;
    let input = cfg.path("input", args.input.as_ref());
    let from_file = cfg.path("from-file", args.from_file.as_ref());
    let iou_thr = cfg.value("iou-threshold", args.iou_threshold, 0.45)?;
    let conf_thr = cfg.value("conf-threshold", args.conf_threshold, 0.25)?;
    check_unit("iou-threshold", iou_thr)?;
    check_unit("conf-threshold", conf_thr)?;

    // Raw detections per image, with per-image wall time.
    let mut raw: Vec<(String, Result<Vec<Detection>, String>, f64)> = Vec::new();
    if let Some(path) = &from_file {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let sections = parse_detection_sections(&text, None).map_err(usage)?;
        raw.extend(sections.into_iter().map(|(id, dets)| (id, Ok(dets), 0.0)));
    } else {
        let detector = resolve_detector(args, cfg)?;
        let input = input.ok_or_else(|| usage("one of --input or --from-file is required"))?;
        if !input.is_dir() {
            return Err(usage(format!("input directory {} does not exist", input.display())));
        }
        let images_dir = input.join("images");
        let dir = if images_dir.is_dir() { images_dir } else { input };
        let files = list_pgm(&dir)?;
        raw = files
            .par_iter()
            .map(|(id, path)| {
                let start = Instant::now();
                let dets = read_pgm(path)
                    .map(|img| detect(&img, &detector))
                    .map_err(|e| e.to_string());
                (id.clone(), dets, start.elapsed().as_secs_f64())
            })
            .collect();
    }

    create_dir(&out)?;
    let mut kept: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    let mut poses = Vec::new();
    let mut failed = Vec::new();
    let mut timing = csv::Writer::from_path(out.join("timing.csv")).map_err(runtime)?;
    timing.write_record(["image_id", "seconds"]).map_err(runtime)?;
    for (id, dets, secs) in &raw {
        let dets = match dets {
            Ok(d) => d,
            Err(e) => {
                warn!("{id}: {e}");
                failed.push(id.clone());
                continue;
            }
        };
        timing.write_record([id.as_str(), &format!("{secs:.6}")]).map_err(runtime)?;
        let after_nms: Vec<Detection> = nms(dets, iou_thr)
            .into_iter()
            .filter(|d| d.confidence >= conf_thr)
            .collect();
        if let Some(best) = select_best(&after_nms, conf_thr) {
            poses.push(PoseRow {
                image_id: id.clone(),
                pose: pose_from_detection(&best.bbox, best.class),
                confidence: Some(best.confidence),
            });
        }
        kept.insert(id.clone(), after_nms);
    }
    timing.flush().map_err(runtime)?;

    let text = format_detection_sections(kept.iter().map(|(k, v)| (k.as_str(), v.as_slice())));
    let det_path = out.join("detections.txt");
    fs::write(&det_path, text).map_err(|e| runtime(format!("{}: {e}", det_path.display())))?;
    write_pose_csv(&out.join("poses.csv"), &poses).map_err(runtime)?;
    cfg.write_echo("detect", &out)?;

    let outcome = DetectOutcome {
        images: raw.len(),
        with_pose: poses.len(),
        failed,
    };
    if !outcome.failed.is_empty() {
        return Err(runtime(format!(
            "{} image(s) could not be read: {}",
            outcome.failed.len(),
            outcome.failed.join(", ")
        )));
    }
    Ok(outcome)
}

// ---------------------------------------------------------------- eval

/// Pairs every truth row with the first detection of the same image id.
pub fn join_poses(detections: &[PoseRow], truths: &[PoseRow]) -> Vec<EvalPair> {
    let mut by_id: HashMap<&str, &PoseRow> = HashMap::new();
    for d in detections {
        by_id.entry(d.image_id.as_str()).or_insert(d);
    }
    truths
        .iter()
        .map(|t| EvalPair {
            image_id: t.image_id.clone(),
            detected: by_id.get(t.image_id.as_str()).map(|d| Estimate::from(&d.pose)),
            truth: Estimate::from(&t.pose),
        })
        .collect()
}

/// Runs the evaluation and returns the summary line.
pub fn cmd_eval(args: &EvalArgs, cfg: &mut Resolver) -> Result<String, CliError> {
    let pairs_src = cfg.path("pairs", args.pairs.as_ref());
    let out = cfg.path("out", args.out.as_ref());
    let pairs = if let Some(src) = pairs_src {
        let text = if src.as_os_str() == "builtin" {
            TABLE1_FIXTURE.to_owned()
        } else {
            fs::read_to_string(&src).map_err(|e| usage(format!("{}: {e}", src.display())))?
        };
        parse_table1(&text)
            .map_err(usage)?
            .iter()
            .map(|r| r.pair())
            .collect()
    } else {
        let det = cfg.required_path("detections", args.detections.as_ref())?;
        let truth = cfg.required_path("truths", args.truths.as_ref())?;
        let dets = read_pose_csv(&det).map_err(usage)?;
        let truths = read_pose_csv(&truth).map_err(usage)?;
        let pairs = join_poses(&dets, &truths);
        if !pairs.iter().any(|p| p.detected.is_some()) {
            return Err(usage(format!(
                "no image id in {} matches {}",
                det.display(),
                truth.display()
            )));
        }
        pairs
    };
    if pairs.is_empty() {
        return Err(usage("nothing to evaluate"));
    }
    let (records, summary) = evaluate_pairs(&pairs).map_err(usage)?;
    if let Some(dir) = out {
        create_dir(&dir)?;
        for (name, format) in [("report.csv", ReportFormat::Csv), ("report.md", ReportFormat::Markdown)] {
            let path = dir.join(name);
            fs::write(&path, emit_report(&records, &summary, format))
                .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        }
        cfg.write_echo("eval", &dir)?;
    }
    Ok(summary.summary_line())
}

// ---------------------------------------------------------------- table1

/// Recomputes the fixture and returns one PASS/FAIL line per checked item.
pub fn table1_lines(args: &Table1Args, cfg: &mut Resolver) -> Result<(Vec<String>, bool), CliError> {
    let text = match cfg.path("fixture", args.fixture.as_ref()) {
        Some(p) => fs::read_to_string(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => TABLE1_FIXTURE.to_owned(),
    };
    let row = cfg.optional("row", args.row)?;
    let rows = parse_table1(&text).map_err(usage)?;
    if rows.is_empty() {
        return Err(usage("fixture has no rows"));
    }
    let check = check_table1(&rows).map_err(usage)?;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };

    let mut lines = Vec::new();
    let mut ok = true;
    let selected: Vec<usize> = match row {
        Some(r) if r == 0 || r > rows.len() => {
            return Err(usage(format!("--row must be in 1..={}", rows.len())))
        }
        Some(r) => vec![r - 1],
        None => (0..rows.len()).collect(),
    };
    for i in selected {
        let c = &check.rows[i];
        ok &= c.pass;
        lines.push(format!(
            "row {:>2} image {}: tip_dist {} (printed {}) ang_err {} (printed {}) {}",
            i + 1,
            c.image,
            fmt2(c.tip_dist),
            fmt2(c.printed_tip_dist),
            fmt2(c.ang_err),
            fmt2(c.printed_ang_err),
            verdict(c.pass)
        ));
    }
    if row.is_none() {
        ok &= check.means_pass;
        lines.push(format!(
            "mean: tip_dist {} (published {}) ang_err {} (published {}) {}",
            fmt2(check.mean_tip_dist),
            fmt2(TABLE1_MEAN_TIP_DIST),
            fmt2(check.mean_ang_err),
            fmt2(TABLE1_MEAN_ANG_ERR),
            verdict(check.means_pass)
        ));
    }
    Ok((lines, ok))
}

pub fn cmd_table1(args: &Table1Args, cfg: &mut Resolver) -> Result<(), CliError> {
    let (lines, ok) = table1_lines(args, cfg)?;
    for l in &lines {
        println!("{l}");
    }
    if ok {
        Ok(())
    } else {
        Err(runtime("recomputed values disagree with the printed table"))
    }
}

// ---------------------------------------------------------------- overlay

pub fn cmd_overlay(args: &OverlayArgs, cfg: &mut Resolver) -> Result<(), CliError> {
    let image_path = cfg.required_path("image", args.image.as_ref())?;
    let out = cfg.required_path("out", args.out.as_ref())?;
    let det_path = cfg.path("detections", args.detections.as_ref());
    let conf_thr = cfg.value("conf-threshold", args.conf_threshold, 0.0)?;
    check_unit("conf-threshold", conf_thr)?;
    let stem = image_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_owned();
    let image_id = cfg.value("image-id", args.image_id.clone(), stem)?;

    let image = read_pgm(&image_path).map_err(usage)?;
    let best = match &det_path {
        None => None,
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let sections = parse_detection_sections(&text, Some(&image_id)).map_err(usage)?;
            sections
                .get(&image_id)
                .and_then(|dets| select_best(dets, conf_thr))
        }
    };
    if best.is_none() {
        info!("{image_id}: no detection to draw");
    }
    let rendered = render_overlay(&image, best.as_ref());
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_ppm(&rendered, &out).map_err(runtime)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let mut r = Resolver::from_text("# comment\nseed = 11\nn=5\ntrain_fraction = 0.5\n").unwrap();
        assert_eq!(r.value("seed", Some(3u64), 7).unwrap(), 3);
        assert_eq!(r.value("n", None, 120usize).unwrap(), 5);
        assert_eq!(r.value("train-fraction", None, 0.8).unwrap(), 0.5);
        assert_eq!(r.value("width", None, 692u32).unwrap(), 692);
        assert_eq!(r.echo("synth"), "command = synth\nseed = 3\nn = 5\ntrain-fraction = 0.5\nwidth = 692\n");
    }

    #[test]
    fn bad_config_values_are_usage_errors() {
        let mut r = Resolver::from_text("n = lots\n").unwrap();
        assert_eq!(r.value("n", None, 1usize).unwrap_err().exit_code(), 2);
        assert!(Resolver::from_text("just words\n").is_err());
    }

    #[test]
    fn op_names() {
        assert_eq!(
            parse_ops(DEFAULT_AUGMENT_OPS).unwrap(),
            vec![
                AugmentOp::Identity,
                AugmentOp::FlipH,
                AugmentOp::FlipV,
                AugmentOp::Rot90(1),
                AugmentOp::RotateEitherWay(15.0),
                AugmentOp::Noise(10.0),
            ]
        );
        assert_eq!("rot-7.5".parse::<AugmentOp>().unwrap(), AugmentOp::Rotate(-7.5));
        assert!("shear".parse::<AugmentOp>().is_err());
        assert!("noise-1".parse::<AugmentOp>().is_err());
        assert!(parse_ops(" , ").is_err());
        assert_eq!(rotation_suffix(-7.5), "_rm7p5");
        assert_eq!(rotation_suffix(15.0), "_rp15");
    }

    #[test]
    fn synth_rejects_zero_scenes() {
        let args = SynthArgs {
            out: Some(PathBuf::from("/nonexistent/never-written")),
            n: Some(0),
            ..Default::default()
        };
        assert_eq!(cmd_synth(&args, &mut Resolver::new()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn table1_single_row() {
        let args = Table1Args { fixture: None, row: Some(5) };
        let (lines, ok) = table1_lines(&args, &mut Resolver::new()).unwrap();
        assert!(ok);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].contains("tip_dist 0.00 (printed 0.00)"), "{}", lines[0]);
        assert!(lines[0].ends_with("PASS"));
        let bad = Table1Args { fixture: None, row: Some(25) };
        assert_eq!(table1_lines(&bad, &mut Resolver::new()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn join_marks_misses() {
        let pose = |x: f64| {
            crate::NeedlePose::from_keypoints(
                crate::PixelPoint::new(x, 10.0).unwrap(),
                crate::PixelPoint::new(x + 20.0, 30.0).unwrap(),
            )
            .unwrap()
        };
        let row = |id: &str, x: f64| PoseRow {
            image_id: id.into(),
            pose: pose(x),
            confidence: None,
        };
        let pairs = join_poses(&[row("b", 12.0)], &[row("a", 10.0), row("b", 10.0)]);
        assert!(pairs[0].detected.is_none());
        assert_eq!(pairs[1].detected.unwrap().tip.x, 12.0);
    }
}
