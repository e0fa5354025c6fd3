//! Central finite-difference gradient checking.
//!
//! This is verification-side machinery: it never touches the backward pass,
//! only re-evaluates the forward closure at perturbed parameter values, so
//! it stays an independent oracle for the analytic gradients.

use crate::tensor::{ModelParams, Tape, TensorError, VarId};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
pub const DEFAULT_ABS_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_err: f64,
    /// Parameter element where the worst error occurred.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self) -> bool {
        self.max_rel_err <= DEFAULT_REL_TOL
    }
}

/// Compare analytic gradients of `build`'s scalar output against central
/// finite differences over every element of every parameter.
///
/// `build` must be a pure function of the parameters: the same tape
/// construction with perturbed values, no fresh randomness.
pub fn check_gradients<F>(params: &ModelParams, build: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &ModelParams) -> Result<VarId, TensorError>,
{
    check_gradients_with(params, build, DEFAULT_STEP)
}

pub fn check_gradients_with<F>(
    params: &ModelParams,
    build: F,
    h: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &ModelParams) -> Result<VarId, TensorError>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.backward(loss)?;
    let mut work = params.clone();
    work.zero_grads();
    tape.accumulate_param_grads(&mut work, 1.0);

    let names: Vec<String> = params.names().cloned().collect();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: String::new(), checked: 0 };

    for name in &names {
        let numel = params.get(name).unwrap().numel();
        for idx in 0..numel {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data[idx] += h;
            let mut tape_p = Tape::new();
            let lp = build(&mut tape_p, &plus)?;
            let fp = tape_p.scalar(lp);

            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data[idx] -= h;
            let mut tape_m = Tape::new();
            let lm = build(&mut tape_m, &minus)?;
            let fm = tape_m.scalar(lm);

            let numeric = (fp - fm) / (2.0 * h);
            let analytic = work.get(name).unwrap().grad.as_ref().unwrap()[idx];
            let diff = (analytic - numeric).abs();
            if diff <= DEFAULT_ABS_TOL {
                report.checked += 1;
                continue;
            }
            let rel = diff / analytic.abs().max(numeric.abs()).max(1e-3);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{name}[{idx}] analytic={analytic:.6e} numeric={numeric:.6e}");
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
