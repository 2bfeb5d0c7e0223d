//! Parameterized building blocks shared by the classifier and the
//! sequence models. Inputs are row-major with one example row per time step.

use crate::error::Result;
use crate::params::{Initializer, ParamId, ParamSet};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `x · W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        range: f64,
        init: &mut Initializer,
    ) -> Result<Self> {
        let weight = params.add_uniform(format!("{name}.weight"), &[input, output], range, init)?;
        let bias = if bias {
            Some(params.add_zeros(format!("{name}.bias"), &[1, output])?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        let w = tape.param(params, self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(params, b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Single-layer LSTM cell, gates ordered input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmCell {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        range: f64,
        init: &mut Initializer,
    ) -> Result<Self> {
        let gates = 4 * hidden_size;
        let w_input = params.add_uniform(format!("{name}.w_input"), &[input_size, gates], range, init)?;
        let w_hidden =
            params.add_uniform(format!("{name}.w_hidden"), &[hidden_size, gates], range, init)?;
        let bias = params.add_zeros(format!("{name}.bias"), &[1, gates])?;
        Ok(Self {
            w_input,
            w_hidden,
            bias,
            input_size,
            hidden_size,
        })
    }

    pub fn zero_state(&self, tape: &mut Tape) -> Result<LstmState> {
        let h = tape.constant(Tensor::zeros(&[1, self.hidden_size]))?;
        let c = tape.constant(Tensor::zeros(&[1, self.hidden_size]))?;
        Ok(LstmState { h, c })
    }

    /// Input projections `X · W_input + b` for a whole `[T, in]` sequence.
    pub fn project_inputs(&self, tape: &mut Tape, params: &ParamSet, xs: Var) -> Result<Var> {
        let w = tape.param(params, self.w_input);
        let b = tape.param(params, self.bias);
        let proj = tape.matmul(xs, w)?;
        tape.add_row(proj, b)
    }

    /// One step from an already projected `[1, 4H]` input row.
    pub fn step_projected(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        projected: Var,
        state: LstmState,
    ) -> Result<LstmState> {
        let hs = self.hidden_size;
        let w_h = tape.param(params, self.w_hidden);
        let rec = tape.matmul(state.h, w_h)?;
        let gates = tape.add(projected, rec)?;
        let i = tape.slice_cols(gates, 0, hs)?;
        let f = tape.slice_cols(gates, hs, 2 * hs)?;
        let g = tape.slice_cols(gates, 2 * hs, 3 * hs)?;
        let o = tape.slice_cols(gates, 3 * hs, 4 * hs)?;
        let i = tape.sigmoid(i)?;
        let f = tape.sigmoid(f)?;
        let g = tape.tanh(g)?;
        let o = tape.sigmoid(o)?;
        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// One step from a `[1, in]` input row.
    pub fn step(&self, tape: &mut Tape, params: &ParamSet, x: Var, state: LstmState) -> Result<LstmState> {
        let projected = self.project_inputs(tape, params, x)?;
        self.step_projected(tape, params, projected, state)
    }

    /// Runs the cell over the rows of `xs` (`[T, in]`), returning every
    /// hidden state and the final state.
    pub fn run(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        xs: Var,
        initial: LstmState,
    ) -> Result<(Vec<LstmState>, LstmState)> {
        let steps = tape.value(xs).rows();
        let projected = self.project_inputs(tape, params, xs)?;
        let mut state = initial;
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            let row = tape.select_row(projected, t)?;
            state = self.step_projected(tape, params, row, state)?;
            states.push(state);
        }
        Ok((states, state))
    }
}
