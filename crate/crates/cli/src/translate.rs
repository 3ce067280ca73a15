//! `translate`: run the trained style generator over frames.
//!
//! Frames are converted to signed range, reflect-padded so both dimensions
//! divide 2^depth, pushed through the generator (whole-frame or tiled), then
//! cropped back and saved under their original names. Tiled inference
//! blends overlapping tiles (32 px overlap) with a linear feather and
//! normalizes by the accumulated weight, so any constant function of the
//! input survives tiling bit-for-bit.

use crate::overrides;
use std::path::{Path, PathBuf};
use vhs2hdtv_core::data::{extract_frames_with, Frame, ValueRange, DEFAULT_DECODER};
use vhs2hdtv_core::tensor::Tensor;
use vhs2hdtv_core::trainer::{TrainConfig, Trainer};
use vhs2hdtv_core::{Error, Result};

pub const TILE_OVERLAP: usize = 32;

#[derive(clap::Args)]
pub struct Args {
    /// Training run directory holding config.json and checkpoints.
    #[arg(long, value_name = "DIR")]
    pub run_dir: PathBuf,
    /// Checkpoint archive to load (default: the run's `latest`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Input: a directory of PNG frames or a video file.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for translated frames.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Tile size for tiled inference; 0 translates whole frames.
    #[arg(long, default_value_t = 0)]
    pub tile: usize,
    /// Config override applied before the networks are built
    /// (diagnostics, e.g. `model.residual_bypass=true`). Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// External decoder executable for video inputs.
    #[arg(long, default_value = DEFAULT_DECODER)]
    pub decoder: String,
}

fn load_trainer(args: &Args) -> Result<Trainer> {
    let cfg_path = args.run_dir.join("config.json");
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    overrides::apply(&mut value, &args.overrides)?;
    let cfg: TrainConfig = overrides::into_config(value)?;
    cfg.validate()?;
    let mut trainer = Trainer::new(cfg)?;
    let ckpt = match &args.checkpoint {
        Some(path) => path.clone(),
        None => {
            let pointer = args.run_dir.join("latest");
            let name = std::fs::read_to_string(&pointer).map_err(|e| Error::io(&pointer, e))?;
            args.run_dir.join(name.trim())
        }
    };
    trainer.load_checkpoint(&ckpt)?;
    Ok(trainer)
}

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Edge-inclusive mirror that keeps bouncing, so padding may exceed the
/// source size (tiny frames, deep encoders).
fn reflect(i: usize, n: usize) -> usize {
    let mut i = i as isize;
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// HWC signed frame -> [1,3,H,W] tensor, reflect-padded on the bottom and
/// right to the requested dimensions.
fn to_padded_nchw(frame: &Frame, ph: usize, pw: usize) -> Tensor {
    let (h, w) = (frame.height(), frame.width());
    let src = frame.pixels().data();
    let mut out = vec![0.0; 3 * ph * pw];
    for c in 0..3 {
        for i in 0..ph {
            let si = reflect(i, h);
            for j in 0..pw {
                let sj = reflect(j, w);
                out[(c * ph + i) * pw + j] = src[(si * w + sj) * 3 + c];
            }
        }
    }
    Tensor::new(&[1, 3, ph, pw], out)
}

/// [1,3,·,·] tensor -> signed HWC frame cropped to h×w.
fn to_frame(nchw: &Tensor, h: usize, w: usize, source_id: String) -> Frame {
    let (ph, pw) = (nchw.shape()[2], nchw.shape()[3]);
    let data = nchw.data();
    let mut px = vec![0.0; h * w * 3];
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                px[(i * w + j) * 3 + c] = data[(c * ph + i) * pw + j].clamp(-1.0, 1.0);
            }
        }
    }
    Frame::from_pixels(Tensor::new(&[h, w, 3], px), ValueRange::Signed, source_id)
        .expect("translated frame keeps valid dimensions")
}

/// Linear feather: full weight in the tile interior, ramping to the border
/// across the overlap region.
fn feather(len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| {
            let rise = (t + 1) as f64 / (TILE_OVERLAP + 1) as f64;
            let fall = (len - t) as f64 / (TILE_OVERLAP + 1) as f64;
            rise.min(fall).min(1.0)
        })
        .collect()
}

fn tile_starts(len: usize, tile: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let step = tile - TILE_OVERLAP;
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        if s + tile >= len {
            starts.push(len - tile);
            return starts;
        }
        starts.push(s);
        s += step;
    }
}

fn infer_tiled(trainer: &Trainer, padded: &Tensor, tile: usize) -> Result<Tensor> {
    let (ph, pw) = (padded.shape()[2], padded.shape()[3]);
    let src = padded.data();
    let mut acc = vec![0.0; 3 * ph * pw];
    let mut weight = vec![0.0; ph * pw];
    let (th, tw) = (tile.min(ph), tile.min(pw));
    let (ramp_i, ramp_j) = (feather(th), feather(tw));
    for &ti in &tile_starts(ph, tile) {
        for &tj in &tile_starts(pw, tile) {
            let mut patch = vec![0.0; 3 * th * tw];
            for c in 0..3 {
                for i in 0..th {
                    for j in 0..tw {
                        patch[(c * th + i) * tw + j] = src[(c * ph + ti + i) * pw + tj + j];
                    }
                }
            }
            let out = trainer.models.g.infer(Tensor::new(&[1, 3, th, tw], patch))?;
            let out = out.data();
            for i in 0..th {
                for j in 0..tw {
                    let wgt = ramp_i[i] * ramp_j[j];
                    weight[(ti + i) * pw + tj + j] += wgt;
                    for c in 0..3 {
                        acc[(c * ph + ti + i) * pw + tj + j] += wgt * out[(c * th + i) * tw + j];
                    }
                }
            }
        }
    }
    for i in 0..ph * pw {
        let wgt = weight[i];
        for c in 0..3 {
            acc[c * ph * pw + i] /= wgt;
        }
    }
    Ok(Tensor::new(&[1, 3, ph, pw], acc))
}

pub fn run(args: Args) -> Result<()> {
    let trainer = load_trainer(&args)?;
    let depth = trainer.cfg().model.depth;
    let multiple = 1usize << depth;
    if args.tile > 0 {
        if args.tile % multiple != 0 {
            return Err(Error::Config(format!(
                "--tile {} must be divisible by {} (2^depth)",
                args.tile, multiple
            )));
        }
        if args.tile <= TILE_OVERLAP {
            return Err(Error::Config(format!(
                "--tile {} must exceed the {} px overlap",
                args.tile, TILE_OVERLAP
            )));
        }
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    // Video inputs are decoded into a staging directory first; frame
    // directories are read in place.
    let staging;
    let input_dir = if args.input.is_dir() {
        args.input.clone()
    } else {
        staging = tempfile::tempdir_in(&args.out).map_err(|e| Error::io(&args.out, e))?;
        extract_frames_with(&args.input, staging.path(), 1, &args.decoder)?;
        staging.path().to_path_buf()
    };

    let files = sorted_pngs(&input_dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDomain(format!(
            "{} (no PNG files)",
            input_dir.display()
        )));
    }
    for path in &files {
        let frame = Frame::load_png(path)?.to_signed();
        let (h, w) = (frame.height(), frame.width());
        let ph = h.div_ceil(multiple) * multiple;
        let pw = w.div_ceil(multiple) * multiple;
        let padded = to_padded_nchw(&frame, ph, pw);
        let translated = if args.tile > 0 && (ph > args.tile || pw > args.tile) {
            infer_tiled(&trainer, &padded, args.tile)?
        } else {
            trainer.models.g.infer(padded)?
        };
        let name = path.file_name().expect("listing yields file names");
        let out_path = args.out.join(name);
        to_frame(&translated, h, w, name.to_string_lossy().into_owned()).save_png(&out_path)?;
    }
    println!(
        "translated {} frame(s) into {}",
        files.len(),
        args.out.display()
    );
    Ok(())
}
