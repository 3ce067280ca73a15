//! `grid`: side-by-side comparison montages across method directories.
//!
//! Every directory must contain the same PNG file names; each shared name
//! becomes one montage with one labeled panel per directory.

use crate::font;
use std::collections::BTreeSet;
use std::path::PathBuf;
use vhs2hdtv_core::data::{Frame, ValueRange};
use vhs2hdtv_core::tensor::Tensor;
use vhs2hdtv_core::{Error, Result};

const GUTTER: usize = 8;
const LABEL_SCALE: usize = 2;
const BANNER: usize = font::HEIGHT * LABEL_SCALE + 8;

#[derive(clap::Args)]
pub struct Args {
    /// Method directories, left to right (e.g. input, baseline, ours).
    #[arg(long = "dir", value_name = "DIR", required = true, num_args = 1..)]
    pub dirs: Vec<PathBuf>,
    /// Panel labels (default: directory names).
    #[arg(long, num_args = 1..)]
    pub labels: Option<Vec<String>>,
    /// Output directory for montage PNGs.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn png_names(dir: &PathBuf) -> Result<BTreeSet<String>> {
    Ok(std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect())
}

fn labels_for(args: &Args) -> Result<Vec<String>> {
    match &args.labels {
        Some(labels) => {
            if labels.len() != args.dirs.len() {
                return Err(Error::Config(format!(
                    "--labels got {} values for {} directories",
                    labels.len(),
                    args.dirs.len()
                )));
            }
            Ok(labels.clone())
        }
        None => Ok(args
            .dirs
            .iter()
            .map(|d| {
                d.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| d.display().to_string())
            })
            .collect()),
    }
}

/// All directories must agree on file names; the error lists what each
/// directory is missing relative to the union.
fn shared_names(args: &Args) -> Result<Vec<String>> {
    let sets = args
        .dirs
        .iter()
        .map(png_names)
        .collect::<Result<Vec<_>>>()?;
    let union: BTreeSet<&String> = sets.iter().flatten().collect();
    if union.is_empty() {
        return Err(Error::EmptyDomain(format!(
            "{} (no PNG files in any directory)",
            args.dirs[0].display()
        )));
    }
    let mut complaints = Vec::new();
    for (dir, set) in args.dirs.iter().zip(&sets) {
        let missing: Vec<&str> = union
            .iter()
            .filter(|n| !set.contains(n.as_str()))
            .map(|n| n.as_str())
            .collect();
        if !missing.is_empty() {
            complaints.push(format!("{} is missing {}", dir.display(), missing.join(", ")));
        }
    }
    if !complaints.is_empty() {
        return Err(Error::Config(format!(
            "directories do not share file names: {}",
            complaints.join("; ")
        )));
    }
    Ok(union.into_iter().cloned().collect())
}

fn montage(panels: &[Frame], labels: &[String], name: &str) -> Result<Frame> {
    let (h, w) = (panels[0].height(), panels[0].width());
    for (panel, label) in panels.iter().zip(labels) {
        if panel.height() != h || panel.width() != w {
            return Err(Error::Shape(format!(
                "{}: panel `{}` is {}x{}, expected {}x{} like the first panel",
                name,
                label,
                panel.height(),
                panel.width(),
                h,
                w
            )));
        }
    }
    let n = panels.len();
    let out_w = n * w + (n - 1) * GUTTER;
    let out_h = BANNER + h;
    let mut px = vec![0.0; out_h * out_w * 3];
    for (k, panel) in panels.iter().enumerate() {
        let unit = panel.to_unit();
        let src = unit.pixels().data();
        let x0 = k * (w + GUTTER);
        for i in 0..h {
            let dst = ((BANNER + i) * out_w + x0) * 3;
            let s = i * w * 3;
            px[dst..dst + w * 3].copy_from_slice(&src[s..s + w * 3]);
        }
        let label = &labels[k];
        let text_w = font::text_width(label, LABEL_SCALE);
        let tx = x0 + (w.saturating_sub(text_w)) / 2;
        font::draw_text(&mut px, out_w, tx, 4, LABEL_SCALE, label);
    }
    Frame::from_pixels(
        Tensor::new(&[out_h, out_w, 3], px),
        ValueRange::Unit,
        name.to_string(),
    )
}

pub fn run(args: Args) -> Result<()> {
    let labels = labels_for(&args)?;
    let names = shared_names(&args)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for name in &names {
        let panels = args
            .dirs
            .iter()
            .map(|dir| Frame::load_png(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        montage(&panels, &labels, name)?.save_png(&args.out.join(name))?;
    }
    println!(
        "wrote {} montage(s) with {} panel(s) each into {}",
        names.len(),
        args.dirs.len(),
        args.out.display()
    );
    Ok(())
}
