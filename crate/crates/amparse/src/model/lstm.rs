//! LSTM cells and bidirectional stacks recorded on the tape.
//!
//! Parameter layout per direction: `prefix.l{layer}.{fw,bw}.{w_ih,w_hh,b}`
//! with the usual gate packing (input, forget, cell, output) along the first
//! axis. Forget-gate biases start at 1.

use rand::Rng;
#[cfg(test)]
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::checkpoint::{Bindings, ParamStore};
use crate::tensor::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct BiLstmSpec {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
}

pub fn init_bilstm(store: &mut ParamStore, prefix: &str, spec: &BiLstmSpec, rng: &mut ChaCha8Rng) {
    for layer in 0..spec.layers {
        let input = if layer == 0 { spec.input } else { 2 * spec.hidden };
        for dir in ["fw", "bw"] {
            init_cell(store, &format!("{prefix}.l{layer}.{dir}"), input, spec.hidden, rng);
        }
    }
}

fn init_cell(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) {
    let bound = 1.0 / (hidden as f64).sqrt();
    let uni = |rng: &mut ChaCha8Rng, shape: &[usize]| -> Tensor {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        Tensor::from_vec(shape.to_vec(), data).unwrap()
    };
    store.insert(&format!("{prefix}.w_ih"), uni(rng, &[4 * hidden, input]));
    store.insert(&format!("{prefix}.w_hh"), uni(rng, &[4 * hidden, hidden]));
    let mut bias = Tensor::zeros(&[4 * hidden]);
    for i in hidden..2 * hidden {
        bias.data_mut()[i] = 1.0;
    }
    store.insert(&format!("{prefix}.b"), bias);
}

fn run_cell(
    tape: &mut Tape,
    b: &Bindings,
    prefix: &str,
    hidden: usize,
    inputs: &[Var],
    reverse: bool,
) -> Result<Vec<Var>> {
    let w_ih = b.var(&format!("{prefix}.w_ih"));
    let w_hh = b.var(&format!("{prefix}.w_hh"));
    let bias = b.var(&format!("{prefix}.b"));
    let mut h = tape.constant(Tensor::zeros(&[hidden]));
    let mut c = tape.constant(Tensor::zeros(&[hidden]));
    let mut states = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let xw = tape.matvec(w_ih, inputs[t])?;
        let hw = tape.matvec(w_hh, h)?;
        let pre = tape.add(xw, hw)?;
        let pre = tape.add(pre, bias)?;
        let i_gate = tape.slice(pre, 0, hidden)?;
        let i_gate = tape.sigmoid(i_gate);
        let f_gate = tape.slice(pre, hidden, hidden)?;
        let f_gate = tape.sigmoid(f_gate);
        let g_gate = tape.slice(pre, 2 * hidden, hidden)?;
        let g_gate = tape.tanh(g_gate);
        let o_gate = tape.slice(pre, 3 * hidden, hidden)?;
        let o_gate = tape.sigmoid(o_gate);
        let fc = tape.mul(f_gate, c)?;
        let ig = tape.mul(i_gate, g_gate)?;
        c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        h = tape.mul(o_gate, tc)?;
        states[t] = h;
    }
    Ok(states)
}

/// Runs a stacked bidirectional LSTM; per position, forward and backward
/// states are concatenated (size `2 * hidden`).
pub fn bilstm_run(
    tape: &mut Tape,
    b: &Bindings,
    prefix: &str,
    spec: &BiLstmSpec,
    inputs: &[Var],
) -> Result<Vec<Var>> {
    let mut layer_inputs: Vec<Var> = inputs.to_vec();
    for layer in 0..spec.layers {
        let fw = run_cell(
            tape,
            b,
            &format!("{prefix}.l{layer}.fw"),
            spec.hidden,
            &layer_inputs,
            false,
        )?;
        let bw = run_cell(
            tape,
            b,
            &format!("{prefix}.l{layer}.bw"),
            spec.hidden,
            &layer_inputs,
            true,
        )?;
        layer_inputs = fw
            .into_iter()
            .zip(bw)
            .map(|(f, w)| tape.concat(&[f, w]))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(layer_inputs)
}
