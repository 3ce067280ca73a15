//! `prepare`: turn two frame sources into a seeded train/test manifest.

use std::path::{Path, PathBuf};
use vhs2hdtv_core::data::{
    extract_frames_with, DatasetManifest, DegradationConfig, Domain, Resample, Split,
    DEFAULT_DECODER,
};
use vhs2hdtv_core::{Error, Result};

#[derive(clap::Args)]
pub struct Args {
    /// Domain X (degraded-style) source: a directory of PNG frames or a
    /// video file to extract.
    #[arg(long = "x-dir", value_name = "PATH")]
    pub x_dir: PathBuf,
    /// Domain Y (target-style) source: a directory of PNG frames or a
    /// video file to extract.
    #[arg(long = "y-dir", value_name = "PATH")]
    pub y_dir: PathBuf,
    /// Where to write the manifest.
    #[arg(long, default_value = "manifest.json")]
    pub out: PathBuf,
    /// Fraction of each domain assigned to the training split.
    #[arg(long, default_value_t = 0.95)]
    pub train_frac: f64,
    /// Seed for the split shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep every stride-th frame when extracting from video.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// External decoder executable for video inputs.
    #[arg(long, default_value = DEFAULT_DECODER)]
    pub decoder: String,
    /// Gaussian blur sigma for low-resolution synthesis.
    #[arg(long, default_value_t = 2.0)]
    pub blur_sigma: f64,
    /// Downscale factor for low-resolution synthesis.
    #[arg(long, default_value_t = 4)]
    pub scale_factor: usize,
    /// Downscale filter: bicubic or bilinear.
    #[arg(long, default_value = "bicubic")]
    pub resample: String,
    /// Keep synthesized low-res frames at the reduced size instead of
    /// restoring them to the source dimensions.
    #[arg(long)]
    pub no_restore_size: bool,
}

/// A domain source is either an existing frame directory (used in place)
/// or a video file (extracted next to the manifest).
fn resolve_domain(flag: &str, path: &Path, args: &Args, tag: &str) -> Result<PathBuf> {
    if path.is_dir() {
        return Ok(path.to_path_buf());
    }
    if path.is_file() {
        let parent = args.out.parent().unwrap_or(Path::new("."));
        let frames = parent.join(format!("frames_{}", tag));
        std::fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
        extract_frames_with(path, &frames, args.stride, &args.decoder)?;
        return Ok(frames);
    }
    Err(Error::Config(format!(
        "{}: `{}` is neither a directory nor a file",
        flag,
        path.display()
    )))
}

fn parse_resample(name: &str) -> Result<Resample> {
    match name.to_ascii_lowercase().as_str() {
        "bicubic" => Ok(Resample::Bicubic),
        "bilinear" => Ok(Resample::Bilinear),
        other => Err(Error::Config(format!(
            "--resample must be bicubic or bilinear, got `{}`",
            other
        ))),
    }
}

fn count(manifest: &DatasetManifest, domain: Domain, split: Split) -> usize {
    manifest.items(domain, split).len()
}

pub fn run(args: Args) -> Result<()> {
    let x = resolve_domain("--x-dir", &args.x_dir, &args, "x")?;
    let y = resolve_domain("--y-dir", &args.y_dir, &args, "y")?;
    let degradation = DegradationConfig {
        blur_sigma: args.blur_sigma,
        kernel_radius: None,
        scale_factor: args.scale_factor,
        resample: parse_resample(&args.resample)?,
        restore_size: !args.no_restore_size,
    };
    let manifest = DatasetManifest::build(&x, &y, args.train_frac, args.seed, degradation)?;
    manifest.save(&args.out)?;
    for (name, domain) in [("X", Domain::X), ("Y", Domain::Y)] {
        println!(
            "domain {}: {} train / {} test",
            name,
            count(&manifest, domain, Split::Train),
            count(&manifest, domain, Split::Test),
        );
    }
    for warning in &manifest.warnings {
        eprintln!("warning: {}", warning);
    }
    println!("manifest written to {}", args.out.display());
    Ok(())
}
