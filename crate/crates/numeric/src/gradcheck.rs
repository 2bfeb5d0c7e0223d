//! Central finite-difference check of analytic gradients.

use crate::error::{NumericError, Result};
use crate::params::ParamSet;
use crate::tape::{Tape, Var};

/// Relative error is measured against `max(|analytic|, |numeric|, floor)`
/// so that coordinates whose true gradient is ~0 are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares the gradients produced by [`Tape::backward`] with central
/// differences `(L(θ+ε) − L(θ−ε)) / 2ε`.
///
/// `loss_fn` must rebuild the whole forward pass on the given tape and be
/// deterministic; a closure whose loss changes between two identical calls
/// (dropout left on, an unseeded rng) is rejected. Tensors larger than
/// `max_coords_per_param` are checked on an evenly strided subset.
pub fn finite_diff_check<F>(
    params: &mut ParamSet,
    eps: f64,
    max_coords_per_param: usize,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamSet) -> Result<Var>,
{
    fn eval<F>(loss_fn: &mut F, params: &ParamSet) -> Result<f64>
    where
        F: FnMut(&mut Tape, &ParamSet) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, params)?;
        Ok(tape.value(loss).item())
    }

    let first = eval(&mut loss_fn, params)?;
    let second = eval(&mut loss_fn, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(NumericError::NonDeterministic { first, second });
    }

    params.zero_grad();
    {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, params)?;
        tape.backward(loss, params)?;
    }
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.data().to_vec()).collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coordinates_checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for (slot, id) in ids.into_iter().enumerate() {
        let numel = params.value(id).numel();
        let stride = numel.div_ceil(max_coords_per_param.max(1)).max(1);
        for i in (0..numel).step_by(stride) {
            let orig = params.value(id).data()[i];
            params.value_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(&mut loss_fn, params)?;
            params.value_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(&mut loss_fn, params)?;
            params.value_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[slot][i], numeric);
            report.coordinates_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_param = params.get(id).name.clone();
                report.worst_index = i;
            }
        }
    }
    params.zero_grad();
    Ok(report)
}
