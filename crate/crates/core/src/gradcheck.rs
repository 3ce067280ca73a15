//! Central-difference gradient verification.
//!
//! The checker is deliberately independent of the tape internals: it only
//! nudges parameter storage and re-runs a caller-supplied evaluation closure,
//! so it would catch a systematic error in the backward machinery rather
//! than reproduce it.

use crate::autodiff::Param;

/// Outcome of a finite-difference sweep over a set of parameters.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error seen across all checked elements.
    pub max_rel_err: f64,
    /// Parameter name and flat element index of the worst offender.
    pub worst: (String, usize),
    /// Analytic and numeric gradient at the worst offender.
    pub worst_pair: (f64, f64),
    /// Total number of elements compared.
    pub checked: usize,
}

/// Denominator floor for the relative error, so agreement between two
/// near-zero gradients is not drowned out by finite-difference noise.
const REL_FLOOR: f64 = 1e-3;

/// Compare analytic gradients against central differences.
///
/// `eval(true)` must rebuild the computation from current parameter values,
/// run a backward pass (accumulating into `Param` gradients), and return the
/// loss. `eval(false)` must return the loss without touching gradients.
/// Gradients are zeroed here before the analytic pass.
pub fn check_gradients<F>(params: &[Param], h: f64, mut eval: F) -> GradCheckReport
where
    F: FnMut(bool) -> f64,
{
    for p in params {
        p.zero_grad();
    }
    let _ = eval(true);
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad_clone().into_data()).collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        worst_pair: (0.0, 0.0),
        checked: 0,
    };
    for (p, grads) in params.iter().zip(&analytic) {
        for (i, &a) in grads.iter().enumerate() {
            p.nudge(i, h);
            let f_plus = eval(false);
            p.nudge(i, -2.0 * h);
            let f_minus = eval(false);
            p.nudge(i, h);
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (p.name(), i);
                report.worst_pair = (a, numeric);
            }
        }
    }
    report
}
