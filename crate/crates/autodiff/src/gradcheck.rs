//! Central finite-difference verification of tape gradients.

use crate::error::AutodiffError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One checked gradient coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    /// Largest relative error over every coordinate.
    pub max_rel_error: f64,
    /// Largest relative error per parameter tensor, in input order.
    pub per_param: Vec<f64>,
    pub worst: Option<Coordinate>,
    /// First coordinate exceeding the tolerance, if any.
    pub failing: Option<Coordinate>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failing.is_none() && self.max_rel_error.is_finite()
    }
}

/// `|a − n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares the tape gradient of `build` against central differences with step `h`.
///
/// `build` receives a fresh tape plus one leaf per parameter and must return a
/// scalar loss. It is called `1 + 2·(total coordinates)` times and has to be
/// deterministic across calls.
pub fn finite_diff_check<E, F>(
    mut build: F,
    params: &[Tensor<f64>],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport, E>
where
    E: From<AutodiffError>,
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad_data(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; p.len()])
        })
        .collect();

    let mut eval = |values: &[Tensor<f64>]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        tolerance: tol,
        step: h,
        max_rel_error: 0.0,
        per_param: vec![0.0; params.len()],
        worst: None,
        failing: None,
        coordinates: 0,
    };
    for p in 0..params.len() {
        for i in 0..params[p].len() {
            let original = params[p].data()[i];
            work[p].data_mut()[i] = original + h;
            let plus = eval(&work)?;
            work[p].data_mut()[i] = original - h;
            let minus = eval(&work)?;
            work[p].data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[p][i];
            let rel_error = relative_error(a, numeric);
            let coord = Coordinate {
                param: p,
                index: i,
                analytic: a,
                numeric,
                rel_error,
            };
            report.coordinates += 1;
            // NaN compares false everywhere, so treat it as an explicit failure.
            let bad = rel_error.is_nan() || rel_error > tol;
            if rel_error > report.per_param[p] || rel_error.is_nan() {
                report.per_param[p] = rel_error;
            }
            if rel_error > report.max_rel_error || rel_error.is_nan() {
                report.max_rel_error = rel_error;
                report.worst = Some(coord);
            }
            if bad && report.failing.is_none() {
                report.failing = Some(coord);
            }
        }
    }
    Ok(report)
}
