//! `evaluate`: no-reference quality scores for one or more method
//! directories, with per-directory CSV/JSON reports and a combined
//! comparison table of per-method means.

use std::path::PathBuf;
use vhs2hdtv_core::data::Frame;
use vhs2hdtv_core::iqa::{brisque_features, evaluate_dir, IqaReport, SvrModel, BRISQUE_FEATURES};
use vhs2hdtv_core::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Metric {
    Brisque,
    Piqe,
    Both,
}

impl Metric {
    fn wants_brisque(self) -> bool {
        matches!(self, Metric::Brisque | Metric::Both)
    }

    fn wants_piqe(self) -> bool {
        matches!(self, Metric::Piqe | Metric::Both)
    }
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    match s.to_ascii_lowercase().as_str() {
        "brisque" => Ok(Metric::Brisque),
        // The block-based score goes by both spellings in the literature.
        "piqe" | "pique" => Ok(Metric::Piqe),
        "both" => Ok(Metric::Both),
        other => Err(format!(
            "unknown metric `{}` (choose brisque, piqe, or both)",
            other
        )),
    }
}

#[derive(clap::Args)]
pub struct Args {
    /// Method directories of PNG frames to score.
    #[arg(long = "dir", value_name = "DIR", required = true, num_args = 1..)]
    pub dirs: Vec<PathBuf>,
    /// Method labels (default: directory names).
    #[arg(long, num_args = 1..)]
    pub labels: Option<Vec<String>>,
    /// Output directory for the report files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Which scores to compute: brisque, piqe, or both.
    #[arg(long, default_value = "both", value_parser = parse_metric)]
    pub metric: Metric,
    /// Trained regression model for the 36-feature score. Without it the
    /// brisque part of the report falls back to raw feature CSVs.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

fn labels_for(args: &Args) -> Result<Vec<String>> {
    let labels: Vec<String> = match &args.labels {
        Some(labels) => {
            if labels.len() != args.dirs.len() {
                return Err(Error::Config(format!(
                    "--labels got {} values for {} directories",
                    labels.len(),
                    args.dirs.len()
                )));
            }
            labels.clone()
        }
        None => args
            .dirs
            .iter()
            .map(|d| {
                d.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| d.display().to_string())
            })
            .collect(),
    };
    for (i, label) in labels.iter().enumerate() {
        if labels[..i].contains(label) {
            return Err(Error::Config(format!(
                "duplicate method label `{}`; pass distinct --labels",
                label
            )));
        }
    }
    Ok(labels)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sorted_pngs(dir: &PathBuf) -> Result<Vec<PathBuf>> {
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

/// Report CSV restricted to the requested score columns.
fn report_csv(report: &IqaReport, metric: Metric) -> String {
    if metric == Metric::Both {
        return report.to_csv();
    }
    let mut out = String::new();
    let name = match metric {
        Metric::Brisque => "brisque",
        _ => "piqe",
    };
    out.push_str(&format!("path,{},error\n", name));
    for r in &report.rows {
        let score = match metric {
            Metric::Brisque => r.brisque,
            _ => r.piqe,
        };
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(&r.path),
            score.map(|v| v.to_string()).unwrap_or_default(),
            csv_field(r.error.as_deref().unwrap_or("")),
        ));
    }
    out
}

/// Raw 36-feature CSV used when no regression model is available.
fn features_csv(dir: &PathBuf) -> Result<String> {
    let mut out = String::from("path");
    for i in 0..BRISQUE_FEATURES {
        out.push_str(&format!(",f{:02}", i));
    }
    out.push_str(",error\n");
    for path in sorted_pngs(dir)? {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push_str(&csv_field(&name));
        match Frame::load_png(&path).and_then(|f| brisque_features(&f)) {
            Ok(feats) => {
                for v in feats {
                    out.push_str(&format!(",{}", v));
                }
                out.push_str(",\n");
            }
            Err(e) => {
                out.push_str(&",".repeat(BRISQUE_FEATURES));
                out.push_str(&format!(",{}\n", csv_field(&e.to_string())));
            }
        }
    }
    Ok(out)
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fmt_mean(v: Option<f64>) -> String {
    v.map(|v| format!("{:.4}", v)).unwrap_or_default()
}

pub fn run(args: Args) -> Result<()> {
    let labels = labels_for(&args)?;
    let model = match &args.model {
        Some(path) => Some(SvrModel::load(path)?),
        None => None,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let features_only = args.metric.wants_brisque() && model.is_none();
    if features_only {
        println!(
            "notice: no regression model given (--model); writing raw {}-feature \
             CSVs instead of brisque scores",
            BRISQUE_FEATURES
        );
    }

    let mut reports = Vec::new();
    for (dir, label) in args.dirs.iter().zip(&labels) {
        if features_only {
            let path = args.out.join(format!("{}_features.csv", label));
            write(&path, &features_csv(dir)?)?;
            println!("wrote {}", path.display());
        }
        if args.metric.wants_piqe() || !features_only {
            // Scored report: piqe always when requested, brisque when the
            // model is present.
            let wants_model = args.metric.wants_brisque();
            let mut report = evaluate_dir(dir, model.as_ref().filter(|_| wants_model))?;
            if !args.metric.wants_piqe() {
                let rows = report
                    .rows
                    .into_iter()
                    .map(|mut r| {
                        r.piqe = None;
                        r
                    })
                    .collect();
                report = IqaReport::from_rows(rows);
            }
            let csv_path = args.out.join(format!("{}.csv", label));
            let metric = if features_only { Metric::Piqe } else { args.metric };
            write(&csv_path, &report_csv(&report, metric))?;
            write(&args.out.join(format!("{}.json", label)), &report.to_json()?)?;
            println!("wrote {} (+ .json)", csv_path.display());
            reports.push(report);
        }
    }

    if reports.is_empty() {
        return Ok(());
    }

    let show_brisque = args.metric.wants_brisque() && !features_only;
    let show_piqe = args.metric.wants_piqe();
    let mut comparison = String::from("method");
    if show_brisque {
        comparison.push_str(",mean_brisque");
    }
    if show_piqe {
        comparison.push_str(",mean_piqe");
    }
    comparison.push('\n');
    for (label, report) in labels.iter().zip(&reports) {
        comparison.push_str(&csv_field(label));
        if show_brisque {
            comparison.push_str(&format!(
                ",{}",
                report.mean_brisque.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        if show_piqe {
            comparison.push_str(&format!(
                ",{}",
                report.mean_piqe.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        comparison.push('\n');
    }
    let comparison_path = args.out.join("comparison.csv");
    write(&comparison_path, &comparison)?;

    let width = labels.iter().map(|l| l.len()).max().unwrap_or(6).max(6);
    println!("\nper-method means (lower is better)");
    print!("{:<width$}", "method", width = width);
    if show_brisque {
        print!("  {:>12}", "mean_brisque");
    }
    if show_piqe {
        print!("  {:>12}", "mean_piqe");
    }
    println!();
    for (label, report) in labels.iter().zip(&reports) {
        print!("{:<width$}", label, width = width);
        if show_brisque {
            print!("  {:>12}", fmt_mean(report.mean_brisque));
        }
        if show_piqe {
            print!("  {:>12}", fmt_mean(report.mean_piqe));
        }
        println!();
    }
    println!("\nwrote {}", comparison_path.display());
    Ok(())
}
