//! Randomised gradient checks of every layer type.
//!
//! Each check draws small random dimensions and weights, projects the layer
//! output onto a random direction to get a scalar loss, and compares
//! reverse-mode gradients of every leaf (weights and inputs) with central
//! differences. Draws that put a ReLU input or a pooling tie within
//! [`KINK_MARGIN`] of a non-differentiable point are redrawn.

use rand::Rng as _;

use super::conv::{conv1d, max_pool_graph, ConvNodes, CovariateTerm};
use super::dense::dense_graph;
use super::lstm::{lstm_sequence, LstmNodes};
use super::Activation;
use crate::error::{Error, Result};
use crate::numeric::{grad_check, GradientReport, NodeId, Tape, Tensor, DEFAULT_STEP};
use crate::rng::{derive_seed, derived_rng, Rng};

pub const KINK_MARGIN: f64 = 1e-3;
const MAX_REDRAWS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    HybridConv1d,
    HybridLstmStep,
    HybridFc,
    MaxPoolComposition,
    SoftmaxCrossEntropy,
}

impl LayerKind {
    pub const ALL: [LayerKind; 5] = [
        LayerKind::HybridConv1d,
        LayerKind::HybridLstmStep,
        LayerKind::HybridFc,
        LayerKind::MaxPoolComposition,
        LayerKind::SoftmaxCrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::HybridConv1d => "hybrid_conv1d",
            LayerKind::HybridLstmStep => "hybrid_lstm_step",
            LayerKind::HybridFc => "hybrid_fc",
            LayerKind::MaxPoolComposition => "max_pool",
            LayerKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }
}

fn uniform(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("positive dims")
}

/// Scalar `sum(R ⊙ out)` for a random `R`.
fn project(tape: &mut Tape, out: NodeId, rng: &mut Rng) -> Result<NodeId> {
    let r = tape.input(uniform(rng, tape.value(out).shape().to_vec()));
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

fn min_abs(t: &Tensor) -> f64 {
    t.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Smallest gap between the largest and second largest entry of any pooling window.
fn min_window_gap(t: &Tensor, window: usize) -> f64 {
    let (rows, cols) = t.dims2().expect("matrix");
    let mut gap = f64::INFINITY;
    for r in 0..rows {
        for w in 0..cols / window {
            let mut v: Vec<f64> = (0..window).map(|k| t.at(r, w * window + k)).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            gap = gap.min(v[0] - v[1]);
        }
    }
    gap
}

struct Built {
    tape: Tape,
    loss: NodeId,
    /// Pre-activation values that must stay clear of kinks.
    margin: f64,
}

fn conv_graph(rng: &mut Rng, pool: bool) -> Result<Built> {
    let c_in = rng.random_range(1..=3);
    let c_out = rng.random_range(2..=4);
    let width = rng.random_range(1..=3);
    let t = rng.random_range(8..=12);
    let d = rng.random_range(1..=4);
    let mut tape = Tape::new();
    let x = tape.input(uniform(rng, vec![c_in, t]));
    let s = tape.input(uniform(rng, vec![d, 1]));
    let kernel = tape.param(uniform(rng, vec![c_out, c_in * width]));
    let bias = tape.param(uniform(rng, vec![c_out, 1]));
    let weights = tape.param(uniform(rng, vec![c_out, d]));
    let nodes = ConvNodes {
        kernel,
        bias,
        in_channels: c_in,
        kernel_width: width,
        covariate: Some(CovariateTerm { weights, s, mask: None }),
    };
    let pre = conv1d(&mut tape, x, &nodes, 1, Activation::Identity)?;
    let (out, margin) = if pool {
        let window = rng.random_range(2..=3);
        let margin = min_window_gap(tape.value(pre), window);
        (max_pool_graph(&mut tape, pre, window)?, margin)
    } else {
        let margin = min_abs(tape.value(pre));
        (tape.relu(pre)?, margin)
    };
    let loss = project(&mut tape, out, rng)?;
    Ok(Built { tape, loss, margin })
}

fn lstm_graph(rng: &mut Rng) -> Result<Built> {
    let hidden = rng.random_range(2..=4);
    let n = rng.random_range(1..=3);
    let d = rng.random_range(1..=3);
    let t = rng.random_range(1..=3);
    let mut tape = Tape::new();
    let x = tape.input(uniform(rng, vec![n, t]));
    let s = tape.input(uniform(rng, vec![d, 1]));
    let w = std::array::from_fn(|_| tape.param(uniform(rng, vec![hidden, hidden + n])));
    let ws = std::array::from_fn(|_| tape.param(uniform(rng, vec![hidden, d])));
    let b = std::array::from_fn(|_| tape.param(uniform(rng, vec![hidden, 1])));
    let nodes = LstmNodes {
        w,
        b,
        covariate: Some((ws, s)),
    };
    let hs = lstm_sequence(&mut tape, &nodes, x, hidden)?;
    let loss = project(&mut tape, *hs.last().expect("t >= 1"), rng)?;
    Ok(Built {
        tape,
        loss,
        margin: f64::INFINITY,
    })
}

fn fc_graph(rng: &mut Rng) -> Result<Built> {
    let m = rng.random_range(2..=6);
    let out = rng.random_range(2..=5);
    let d = rng.random_range(1..=4);
    let mut tape = Tape::new();
    let x = tape.input(uniform(rng, vec![m, 1]));
    let s = tape.input(uniform(rng, vec![d, 1]));
    let w = tape.param(uniform(rng, vec![out, m]));
    let v = tape.param(uniform(rng, vec![out, d]));
    let b = tape.param(uniform(rng, vec![out, 1]));
    let pre = dense_graph(&mut tape, w, x, Some((v, s)), b, Activation::Identity)?;
    let margin = min_abs(tape.value(pre));
    let y = tape.relu(pre)?;
    let loss = project(&mut tape, y, rng)?;
    Ok(Built { tape, loss, margin })
}

fn softmax_graph(rng: &mut Rng) -> Result<Built> {
    let k = rng.random_range(2..=6);
    let mut tape = Tape::new();
    let logits = tape.param(uniform(rng, vec![k, 1]).map(|v| 3.0 * v));
    let target = rng.random_range(0..k);
    let loss = tape.softmax_cross_entropy(logits, target)?;
    Ok(Built {
        tape,
        loss,
        margin: f64::INFINITY,
    })
}

/// One randomised gradient check of `kind`, checking every leaf.
pub fn audit_layer(kind: LayerKind, seed: u64) -> Result<GradientReport> {
    for attempt in 0..MAX_REDRAWS {
        let mut rng = derived_rng(seed, &[attempt]);
        let built = match kind {
            LayerKind::HybridConv1d => conv_graph(&mut rng, false)?,
            LayerKind::MaxPoolComposition => conv_graph(&mut rng, true)?,
            LayerKind::HybridLstmStep => lstm_graph(&mut rng)?,
            LayerKind::HybridFc => fc_graph(&mut rng)?,
            LayerKind::SoftmaxCrossEntropy => softmax_graph(&mut rng)?,
        };
        if built.margin < KINK_MARGIN {
            continue;
        }
        let leaves = built.tape.leaves();
        return grad_check(&built.tape, built.loss, &leaves, DEFAULT_STEP);
    }
    Err(Error::Invariant(format!(
        "no draw clear of kinks for {} after {MAX_REDRAWS} attempts",
        kind.name()
    )))
}

/// `runs` checks of every layer type.
pub fn gradient_audit(seed: u64, runs: usize) -> Result<Vec<(LayerKind, Vec<GradientReport>)>> {
    LayerKind::ALL
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let reports = (0..runs)
                .map(|r| audit_layer(kind, derive_seed(seed, &[k as u64, r as u64])))
                .collect::<Result<Vec<_>>>()?;
            Ok((kind, reports))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes_once() {
        for kind in LayerKind::ALL {
            let r = audit_layer(kind, 11).unwrap();
            assert!(r.passed, "{}: {}", kind.name(), r.max_relative_error);
        }
    }

    #[test]
    fn window_gap() {
        let t = Tensor::new(vec![1, 4], vec![1.0, 0.5, 2.0, 2.25]).unwrap();
        assert_eq!(min_window_gap(&t, 2), 0.25);
    }
}
