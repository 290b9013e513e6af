use super::covariates::CovariateVector;
use super::init::{covariate_scale, glorot};
use crate::error::{Error, Result};
use crate::numeric::{Axis, NodeId, Tape, Tensor};
use crate::rng::Rng;

/// Gate order used everywhere: forget, input, candidate state, output.
pub const GATES: [&str; 4] = ["f", "i", "C", "o"];

/// LSTM cell weights plus the four covariate matrices `W_fs, W_is, W_Cs, W_os`,
/// shared across all time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridLSTMCellParams {
    /// `hidden x (hidden + n)` per gate, applied to `[h_prev, x_t]`.
    pub w: [Tensor; 4],
    /// `hidden x d` per gate.
    pub ws: [Tensor; 4],
    /// `hidden x 1` per gate.
    pub b: [Tensor; 4],
}

impl HybridLSTMCellParams {
    pub fn init(hidden: usize, input: usize, d: usize, rng: &mut Rng) -> Self {
        let w = std::array::from_fn(|_| glorot(rng, vec![hidden, hidden + input], hidden + input, hidden, 1.0));
        let ws = std::array::from_fn(|_| glorot(rng, vec![hidden, d], d, hidden, covariate_scale(d)));
        let b = std::array::from_fn(|_| Tensor::zeros(vec![hidden, 1]));
        HybridLSTMCellParams { w, ws, b }
    }

    pub fn hidden(&self) -> usize {
        self.w[0].rows()
    }

    pub fn input(&self) -> usize {
        self.w[0].cols() - self.hidden()
    }

    pub fn covariates(&self) -> usize {
        self.ws[0].cols()
    }

    /// Total parameter count; independent of sequence length.
    pub fn parameter_count(&self) -> usize {
        self.w.iter().chain(&self.ws).chain(&self.b).map(Tensor::len).sum()
    }
}

/// Tape nodes of an LSTM layer.
#[derive(Clone, Copy, Debug)]
pub struct LstmNodes {
    pub w: [NodeId; 4],
    pub b: [NodeId; 4],
    /// Covariate weights and the covariate column, when hybrid.
    pub covariate: Option<([NodeId; 4], NodeId)>,
}

/// Per-gate additive offsets `W_gs · s + b_g` (or `b_g`), constant in time.
pub fn gate_offsets(tape: &mut Tape, nodes: &LstmNodes) -> Result<[NodeId; 4]> {
    let mut out = nodes.b;
    if let Some((ws, s)) = nodes.covariate {
        for g in 0..4 {
            let term = tape.matmul(ws[g], s)?;
            out[g] = tape.add(term, nodes.b[g])?;
        }
    }
    Ok(out)
}

/// One cell update given precomputed gate offsets.
pub fn lstm_step_graph(
    tape: &mut Tape,
    w: &[NodeId; 4],
    offsets: &[NodeId; 4],
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let hx = tape.concat(&[h_prev, x_t], Axis::Rows)?;
    let mut pre = [hx; 4];
    for g in 0..4 {
        let z = tape.matmul(w[g], hx)?;
        pre[g] = tape.add(z, offsets[g])?;
    }
    let f = tape.sigmoid(pre[0])?;
    let i = tape.sigmoid(pre[1])?;
    let candidate = tape.tanh(pre[2])?;
    let o = tape.sigmoid(pre[3])?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, candidate)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}

/// Run the cell over every column of an `n x t` input from zero state.
/// Returns the hidden state after each step.
pub fn lstm_sequence(tape: &mut Tape, nodes: &LstmNodes, x: NodeId, hidden: usize) -> Result<Vec<NodeId>> {
    let (_, t) = tape
        .value(x)
        .dims2()
        .ok_or_else(|| Error::shape(tape.len(), "sequence must be a matrix"))?;
    let offsets = gate_offsets(tape, nodes)?;
    let mut h = tape.input(Tensor::zeros(vec![hidden, 1]));
    let mut c = tape.input(Tensor::zeros(vec![hidden, 1]));
    let mut hs = Vec::with_capacity(t);
    for step in 0..t {
        let x_t = tape.slice(x, Axis::Cols, step, 1, 1)?;
        (h, c) = lstm_step_graph(tape, &nodes.w, &offsets, x_t, h, c)?;
        hs.push(h);
    }
    Ok(hs)
}

/// Add the cell parameters to a tape as trainable leaves.
pub fn lstm_params_to_tape(tape: &mut Tape, p: &HybridLSTMCellParams, s: Option<NodeId>) -> LstmNodes {
    let w = std::array::from_fn(|g| tape.param(p.w[g].clone()));
    let ws: [NodeId; 4] = std::array::from_fn(|g| tape.param(p.ws[g].clone()));
    let b = std::array::from_fn(|g| tape.param(p.b[g].clone()));
    LstmNodes {
        w,
        b,
        covariate: s.map(|s| (ws, s)),
    }
}

/// One hybrid LSTM step on plain tensors: returns `(h_t, c_t)`.
pub fn hybrid_lstm_step(
    x_t: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    s: &CovariateVector,
    p: &HybridLSTMCellParams,
) -> Result<(Tensor, Tensor)> {
    let hidden = p.hidden();
    if x_t.len() != p.input() || h_prev.len() != hidden || c_prev.len() != hidden || s.len() != p.covariates() {
        return Err(Error::shape(
            0,
            format!(
                "cell expects x {} / state {} / covariates {}, got {} / {},{} / {}",
                p.input(),
                hidden,
                p.covariates(),
                x_t.len(),
                h_prev.len(),
                c_prev.len(),
                s.len()
            ),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.input(x_t.reshaped(vec![p.input(), 1])?);
    let h = tape.input(h_prev.reshaped(vec![hidden, 1])?);
    let c = tape.input(c_prev.reshaped(vec![hidden, 1])?);
    let sn = tape.input(s.column());
    let nodes = lstm_params_to_tape(&mut tape, p, Some(sn));
    let offsets = gate_offsets(&mut tape, &nodes)?;
    let (h, c) = lstm_step_graph(&mut tape, &nodes.w, &offsets, x, h, c)?;
    Ok((tape.value(h).clone(), tape.value(c).clone()))
}
