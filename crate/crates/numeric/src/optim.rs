use crate::error::{NumericError, Result};
use crate::params::ParamSet;

pub const DEFAULT_LEARNING_RATE: f64 = 0.15;
pub const DEFAULT_ACCUMULATOR_INIT: f64 = 0.1;
pub const DEFAULT_MAX_GRAD_NORM: f64 = 2.0;

/// Global L2 norm over every parameter gradient.
pub fn grad_norm(params: &ParamSet) -> f64 {
    params
        .iter()
        .map(|p| p.grad.squared_norm())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor that was applied (1.0 when no clipping happened).
pub fn clip_grad_norm(params: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let factor = max_norm / norm;
    for p in params.iter_mut() {
        for g in p.grad.data_mut() {
            *g *= factor;
        }
    }
    factor
}

/// Adagrad with a positive initial accumulator.
#[derive(Clone, Debug)]
pub struct AdagradState {
    pub learning_rate: f64,
    pub accumulator_init: f64,
    accumulators: Vec<Vec<f64>>,
}

impl AdagradState {
    pub fn new(params: &ParamSet, learning_rate: f64, accumulator_init: f64) -> Self {
        let accumulators = params
            .iter()
            .map(|p| vec![accumulator_init; p.value.numel()])
            .collect();
        Self {
            learning_rate,
            accumulator_init,
            accumulators,
        }
    }

    pub fn with_defaults(params: &ParamSet) -> Self {
        Self::new(params, DEFAULT_LEARNING_RATE, DEFAULT_ACCUMULATOR_INIT)
    }

    pub fn accumulator(&self, index: usize) -> &[f64] {
        &self.accumulators[index]
    }

    /// `acc += g²; p -= lr · g / √acc`, then zeroes the gradients.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.accumulators.len() {
            return Err(NumericError::InvalidArgument {
                op: "adagrad_step",
                msg: format!(
                    "state tracks {} parameters, got {}",
                    self.accumulators.len(),
                    params.len()
                ),
            });
        }
        for (p, acc) in params.iter().zip(&self.accumulators) {
            if p.value.numel() != acc.len() {
                return Err(NumericError::InvalidArgument {
                    op: "adagrad_step",
                    msg: format!("accumulator for `{}` has the wrong size", p.name),
                });
            }
        }
        let lr = self.learning_rate;
        for (p, acc) in params.iter_mut().zip(&mut self.accumulators) {
            let grad = p.grad.data().to_vec();
            for ((v, a), g) in p.value.data_mut().iter_mut().zip(acc.iter_mut()).zip(&grad) {
                *a += g * g;
                *v -= lr * g / a.sqrt();
            }
            p.grad.data_mut().fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_param(value: f64, grad: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        let id = ps.add("p", Tensor::scalar(value)).unwrap();
        ps.get_mut(id).grad = Tensor::scalar(grad);
        ps
    }

    #[test]
    fn single_step_matches_hand_arithmetic() {
        let mut ps = scalar_param(1.0, 1.0);
        let mut opt = AdagradState::with_defaults(&ps);
        opt.step(&mut ps).unwrap();
        assert!((opt.accumulator(0)[0] - 1.1).abs() < 1e-15);
        let expected = 1.0 - 0.15 / 1.1f64.sqrt();
        assert!((ps.iter().next().unwrap().value.item() - expected).abs() < 1e-12);
        assert!((expected - 0.856_980_6).abs() < 1e-7);
        assert_eq!(ps.iter().next().unwrap().grad.item(), 0.0);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = scalar_param(0.7, 0.0);
        let mut opt = AdagradState::with_defaults(&ps);
        opt.step(&mut ps).unwrap();
        assert_eq!(ps.iter().next().unwrap().value.item(), 0.7);
    }

    #[test]
    fn repeated_steps_shrink() {
        let mut ps = scalar_param(1.0, 1.0);
        let mut opt = AdagradState::with_defaults(&ps);
        opt.step(&mut ps).unwrap();
        let first = 1.0 - ps.iter().next().unwrap().value.item();
        let before = ps.iter().next().unwrap().value.item();
        ps.iter_mut().next().unwrap().grad = Tensor::scalar(1.0);
        opt.step(&mut ps).unwrap();
        let second = before - ps.iter().next().unwrap().value.item();
        assert!(second < first);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let ps = scalar_param(1.0, 1.0);
        let mut opt = AdagradState::with_defaults(&ps);
        let mut other = ParamSet::new();
        other.add_zeros("a", &[1, 1]).unwrap();
        other.add_zeros("b", &[1, 1]).unwrap();
        assert!(opt.step(&mut other).is_err());
    }

    #[test]
    fn clipping() {
        let mut ps = ParamSet::new();
        let id = ps.add_zeros("g", &[1, 2]).unwrap();
        ps.get_mut(id).grad = Tensor::row(vec![0.6, 0.8]);
        assert_eq!(clip_grad_norm(&mut ps, 2.0), 1.0);

        ps.get_mut(id).grad = Tensor::row(vec![2.4, 3.2]);
        let f = clip_grad_norm(&mut ps, 2.0);
        assert!((f - 0.5).abs() < 1e-12);
        assert!((grad_norm(&ps) - 2.0).abs() < 1e-9);

        ps.zero_grad();
        assert_eq!(clip_grad_norm(&mut ps, 2.0), 1.0);
    }
}
