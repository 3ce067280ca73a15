//! Epsilon-SVR scoring with an RBF kernel, loaded from a plain-text model
//! file. The schema mirrors the common support-vector format (dual
//! coefficients, support vectors, kernel gamma, bias) plus the feature
//! scaling ranges that normally travel in a companion file:
//!
//! ```text
//! svr_rbf v1
//! gamma 0.05
//! rho -12.5
//! scale -1 1
//! range 0 0.31 9.87        # one line per feature: index, min, max
//! ...
//! sv 0.75 0.1 0.2 ...      # dual coefficient, then one value per feature
//! ```
//!
//! Blank lines and `#` comments are ignored. Prediction first rescales each
//! raw feature x into the `scale` interval via its `range` line
//! (features with a collapsed range map to 0), then evaluates
//! Σᵢ coefᵢ·exp(−γ‖x − svᵢ‖²) − rho.

use crate::error::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SvrModel {
    gamma: f64,
    rho: f64,
    scale_lo: f64,
    scale_hi: f64,
    /// Per-feature (min, max) of the raw training features.
    ranges: Vec<(f64, f64)>,
    /// Per support vector: dual coefficient and scaled components.
    vectors: Vec<(f64, Vec<f64>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFile(msg.into())
}

fn parse_num(tok: &str, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| bad(format!("{} is not a number: `{}`", what, tok)))?;
    if !v.is_finite() {
        return Err(bad(format!("{} is not finite: `{}`", what, tok)));
    }
    Ok(v)
}

impl SvrModel {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::ModelFile(msg) => bad(format!("{}: {}", path.display(), msg)),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(|l| {
            let l = l.split('#').next().unwrap_or("");
            l.trim()
        });
        let header = lines
            .by_ref()
            .find(|l| !l.is_empty())
            .ok_or_else(|| bad("empty model file"))?;
        if header != "svr_rbf v1" {
            return Err(bad(format!(
                "unsupported header `{}` (expected `svr_rbf v1`)",
                header
            )));
        }
        let mut gamma = None;
        let mut rho = None;
        let mut scale = None;
        let mut ranges: Vec<Option<(f64, f64)>> = Vec::new();
        let mut vectors = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let key = toks.next().unwrap();
            let rest: Vec<&str> = toks.collect();
            match key {
                "gamma" | "rho" => {
                    if rest.len() != 1 {
                        return Err(bad(format!("`{}` takes one value", key)));
                    }
                    let v = parse_num(rest[0], key)?;
                    if key == "gamma" {
                        gamma = Some(v);
                    } else {
                        rho = Some(v);
                    }
                }
                "scale" => {
                    if rest.len() != 2 {
                        return Err(bad("`scale` takes two values"));
                    }
                    let lo = parse_num(rest[0], "scale low")?;
                    let hi = parse_num(rest[1], "scale high")?;
                    if lo >= hi {
                        return Err(bad("scale interval must be increasing"));
                    }
                    scale = Some((lo, hi));
                }
                "range" => {
                    if rest.len() != 3 {
                        return Err(bad("`range` takes index, min, max"));
                    }
                    let idx: usize = rest[0]
                        .parse()
                        .map_err(|_| bad(format!("range index is not an integer: `{}`", rest[0])))?;
                    let min = parse_num(rest[1], "range min")?;
                    let max = parse_num(rest[2], "range max")?;
                    if idx >= ranges.len() {
                        ranges.resize(idx + 1, None);
                    }
                    if ranges[idx].is_some() {
                        return Err(bad(format!("duplicate range for feature {}", idx)));
                    }
                    ranges[idx] = Some((min, max));
                }
                "sv" => {
                    if rest.is_empty() {
                        return Err(bad("`sv` line has no values"));
                    }
                    let coef = parse_num(rest[0], "sv coefficient")?;
                    let comps = rest[1..]
                        .iter()
                        .map(|t| parse_num(t, "sv component"))
                        .collect::<Result<Vec<f64>>>()?;
                    vectors.push((coef, comps));
                }
                other => return Err(bad(format!("unknown key `{}`", other))),
            }
        }
        let gamma = gamma.ok_or_else(|| bad("missing `gamma`"))?;
        if gamma <= 0.0 {
            return Err(bad("gamma must be positive"));
        }
        let rho = rho.ok_or_else(|| bad("missing `rho`"))?;
        let (scale_lo, scale_hi) = scale.ok_or_else(|| bad("missing `scale`"))?;
        let ranges = ranges
            .iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| bad(format!("missing range for feature {}", i))))
            .collect::<Result<Vec<_>>>()?;
        if ranges.is_empty() {
            return Err(bad("no `range` lines"));
        }
        if vectors.is_empty() {
            return Err(bad("no support vectors"));
        }
        for (i, (_, comps)) in vectors.iter().enumerate() {
            if comps.len() != ranges.len() {
                return Err(bad(format!(
                    "support vector {} has {} components, expected {}",
                    i,
                    comps.len(),
                    ranges.len()
                )));
            }
        }
        Ok(SvrModel {
            gamma,
            rho,
            scale_lo,
            scale_hi,
            ranges,
            vectors,
        })
    }

    /// Number of raw features the model expects.
    pub fn dims(&self) -> usize {
        self.ranges.len()
    }

    fn scaled(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(&self.ranges)
            .map(|(&x, &(min, max))| {
                if max > min {
                    self.scale_lo + (self.scale_hi - self.scale_lo) * (x - min) / (max - min)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.ranges.len() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.ranges.len(),
                features.len()
            )));
        }
        let x = self.scaled(features);
        let mut acc = 0.0;
        for (coef, sv) in &self.vectors {
            let d2: f64 = x.iter().zip(sv).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += coef * (-self.gamma * d2).exp();
        }
        Ok(acc - self.rho)
    }
}
