use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use mmreg::eval::{
    compute_tre, format_ablation_table, run_ablation, transform_landmarks, write_ablation_csv, AblationPair, Mapping,
};
use mmreg::features::{BuiltinMatcher, ExternalMatcher, Matcher};
use mmreg::io::{self, BitDepth, PipelineConfig, DEFAULT_MATCHER_TIMEOUT_SECS};
use mmreg::pipeline::{overlay, register_pair, warp_into};
use mmreg::synth::{make_synthetic_pair, SyntheticSpec};

#[derive(Parser)]
#[command(name = "mmreg", version, about = "Multimodal H&E / SHG microscopy registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source image onto a target image.
    Register {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after the initial affine alignment.
        #[arg(long)]
        initial_only: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Target registration error between two landmark sets.
    Evaluate {
        /// Source-frame landmarks.
        #[arg(long)]
        landmarks_a: PathBuf,
        /// Target-frame landmarks, mapped through the transform or field first.
        #[arg(long)]
        landmarks_b: PathBuf,
        #[arg(long, conflicts_with = "field")]
        transform: Option<PathBuf>,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Pull an image through a displacement field.
    Warp {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Initial-alignment success rates per matcher.
    Ablate {
        /// CSV with columns source,target,landmarks_source,landmarks_target.
        #[arg(long)]
        pairs: PathBuf,
        /// Comma-separated: `builtin` or `cmd:<shell command>`.
        #[arg(long, value_delimiter = ',', required = true)]
        matchers: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic H&E/SHG pair with ground truth.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        rotation: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        tx: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        ty: f64,
        #[arg(long, default_value_t = 0.0)]
        deform: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            let message = format!("{err:#}");
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(code)
        }
    }
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    if err.downcast_ref::<UsageError>().is_some() {
        return ("usage", 2);
    }
    let diverged = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<mmreg::Error>(), Some(mmreg::Error::Diverged { .. })));
    if diverged {
        ("numerical", 4)
    } else {
        ("input", 3)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Register {
            source,
            target,
            config,
            out,
            initial_only,
            seed,
        } => register(&source, &target, config.as_deref(), out, initial_only, seed),
        Command::Evaluate {
            landmarks_a,
            landmarks_b,
            transform,
            field,
        } => evaluate(&landmarks_a, &landmarks_b, transform.as_deref(), field.as_deref()),
        Command::Warp { image, field, out } => warp(&image, &field, &out),
        Command::Ablate {
            pairs,
            matchers,
            config,
            out,
        } => ablate(&pairs, &matchers, config.as_deref(), &out),
        Command::Synth {
            seed,
            size,
            rotation,
            tx,
            ty,
            deform,
            out,
        } => synth(
            &SyntheticSpec {
                seed,
                size,
                rotation,
                translation: (tx, ty),
                deform_amplitude: deform,
            },
            &out,
        ),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(io::load_pipeline_config(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn register(
    source: &Path,
    target: &Path,
    config: Option<&Path>,
    out: Option<PathBuf>,
    initial_only: bool,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.registration.seed = seed;
    }
    let Some(out) = out.or_else(|| cfg.output_dir.clone()) else {
        bail!(UsageError("no output directory: pass --out or set output_dir".into()));
    };
    let source_img = io::load_image(source)?;
    let target_img = io::load_image(target)?;
    let matcher = cfg.matcher.build(&cfg.registration);
    let result = register_pair(&source_img, &target_img, &cfg, matcher.as_ref(), initial_only)?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    io::save_affine(&result.transform, out.join("transform.txt"))?;
    io::save_displacement_field(&result.field, out.join("field.mmdf"))?;
    let report = serde_json::to_string_pretty(&result.report)?;
    fs::write(out.join("report.json"), report + "\n")
        .with_context(|| format!("writing report in {}", out.display()))?;
    let overlay_img = overlay(&result.source_preprocessed, &result.target_preprocessed, &result.field)?;
    io::save_image(&overlay_img, out.join("overlay.png"), BitDepth::Eight)?;

    let selected = result
        .report
        .selected
        .as_ref()
        .map_or("none (identity fallback)".to_string(), |c| {
            format!("angle {} at {} px, {} inliers", c.angle, c.resolution, c.inlier_count)
        });
    println!("selected candidate: {selected}");
    println!("folds: {}", result.report.folding.fold_count);
    println!("wrote {}", out.display());
    Ok(())
}

fn evaluate(a: &Path, b: &Path, transform: Option<&Path>, field: Option<&Path>) -> Result<()> {
    let set_a = io::load_landmarks(a)?;
    let set_b = io::load_landmarks(b)?;
    let mapped = match (transform, field) {
        (Some(t), _) => transform_landmarks(&set_b, Mapping::Affine(&io::load_affine(t)?)),
        (_, Some(f)) => transform_landmarks(&set_b, Mapping::Field(&io::load_displacement_field(f)?)),
        (None, None) => set_b,
    };
    let report = compute_tre(&set_a, &mapped)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn warp(image: &Path, field: &Path, out: &Path) -> Result<()> {
    let img = io::load_image(image)?;
    let u = io::load_displacement_field(field)?;
    let warped = warp_into(&img, &u)?;
    let depth = match out.extension().and_then(|e| e.to_str()) {
        Some("tif" | "tiff") => BitDepth::Sixteen,
        _ => BitDepth::Eight,
    };
    io::save_image(&warped, out, depth)?;
    Ok(())
}

#[derive(Deserialize)]
struct ManifestRow {
    source: PathBuf,
    target: PathBuf,
    landmarks_source: Option<PathBuf>,
    landmarks_target: Option<PathBuf>,
}

fn parse_matcher(spec: &str, cfg: &PipelineConfig) -> Result<Box<dyn Matcher>> {
    let spec = spec.trim();
    if spec == "builtin" {
        return Ok(Box::new(BuiltinMatcher::from_config(&cfg.registration)));
    }
    match spec.strip_prefix("cmd:") {
        Some(command) if !command.trim().is_empty() => Ok(Box::new(ExternalMatcher::new(
            command.trim(),
            Duration::from_secs(DEFAULT_MATCHER_TIMEOUT_SECS),
        ))),
        _ => bail!(UsageError(format!(
            "unknown matcher `{spec}`; use `builtin` or `cmd:<command>`"
        ))),
    }
}

fn ablate(manifest: &Path, matchers: &[String], config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let matchers = matchers
        .iter()
        .map(|m| parse_matcher(m, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut reader = csv::Reader::from_path(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let mut pairs = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.with_context(|| format!("parsing {}", manifest.display()))?;
        let landmarks = match (&row.landmarks_source, &row.landmarks_target) {
            (Some(s), Some(t)) => Some((io::load_landmarks(resolve(s))?, io::load_landmarks(resolve(t))?)),
            (None, None) => None,
            _ => bail!(
                "{}: landmark columns must both be set or both be empty",
                manifest.display()
            ),
        };
        pairs.push(AblationPair {
            he: io::load_image(resolve(&row.source))?,
            shg: io::load_image(resolve(&row.target))?,
            landmarks,
        });
    }
    if pairs.is_empty() {
        bail!("{}: no pairs listed", manifest.display());
    }
    let refs: Vec<&dyn Matcher> = matchers.iter().map(|m| m.as_ref()).collect();
    let rows = run_ablation(&pairs, &refs, &cfg.registration);
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_ablation_csv(&rows, file)?;
    print!("{}", format_ablation_table(&rows));
    Ok(())
}

fn synth(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    if spec.size < 64 {
        bail!(UsageError(format!("--size must be at least 64, got {}", spec.size)));
    }
    let pair = make_synthetic_pair(spec);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::save_image(&pair.he, out.join("he.png"), BitDepth::Eight)?;
    io::save_image(&pair.shg, out.join("shg.png"), BitDepth::Sixteen)?;
    io::save_affine(&pair.affine, out.join("ground_truth_transform.txt"))?;
    io::save_displacement_field(&pair.field, out.join("ground_truth_field.mmdf"))?;
    io::save_landmarks(&pair.landmarks_source, out.join("landmarks_source.csv"))?;
    io::save_landmarks(&pair.landmarks_target, out.join("landmarks_target.csv"))?;
    println!("wrote {}", out.display());
    Ok(())
}
