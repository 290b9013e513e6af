use std::ops::Range;

use super::{LossTape, Network, NoiseSeeds};
use crate::error::{Error, Result};
use crate::layers::{argmax, conv1d, glorot, max_pool_graph, softmax_output, Activation, ConvNodes, CovariateVector};
use crate::numeric::{Axis, NodeId, Tape, Tensor};
use crate::pipeline::Sample;
use crate::rng::rng_from;

/// Two convolutional branches, each gated by one of two mutually exclusive
/// binary covariates before the branches are merged.
///
/// Branch `k` only receives gradient from samples whose covariate `k` is
/// active, so each branch learns features for its own group.
#[derive(Clone, Debug)]
pub struct GatedFeatureModel {
    n: usize,
    t: usize,
    filters: usize,
    kernel_width: usize,
    num_classes: usize,
    params: Vec<Tensor>,
}

/// Build the two-branch fixture with `filters` filters of width `kernel_width` per branch.
pub fn gated_feature_fixture(
    n: usize,
    t: usize,
    filters: usize,
    kernel_width: usize,
    num_classes: usize,
    seed: u64,
) -> Result<GatedFeatureModel> {
    if kernel_width == 0 || kernel_width > t || filters == 0 || n == 0 || num_classes < 2 {
        return Err(Error::config("gated_fixture", "inconsistent fixture dimensions"));
    }
    let mut rng = rng_from(seed);
    let mut params = Vec::new();
    for _ in 0..2 {
        params.push(glorot(
            &mut rng,
            vec![filters, n * kernel_width],
            n * kernel_width,
            filters * kernel_width,
            1.0,
        ));
        params.push(Tensor::zeros(vec![filters, 1]));
    }
    params.push(glorot(&mut rng, vec![num_classes, filters], filters, num_classes, 1.0));
    params.push(Tensor::zeros(vec![num_classes, 1]));
    Ok(GatedFeatureModel {
        n,
        t,
        filters,
        kernel_width,
        num_classes,
        params,
    })
}

/// Reject anything but exactly one active binary covariate out of two.
pub fn check_one_hot(s: &CovariateVector) -> Result<usize> {
    let v = s.as_slice();
    let valid = v.len() == 2 && v.iter().all(|&x| x == 0.0 || x == 1.0) && v[0] + v[1] == 1.0;
    if !valid {
        return Err(Error::data(format!(
            "gated fixture needs two mutually exclusive binary covariates, got {v:?}"
        )));
    }
    Ok(if v[0] == 1.0 { 0 } else { 1 })
}

impl GatedFeatureModel {
    /// Indices of branch `k`'s parameters.
    pub fn branch_params(&self, k: usize) -> Range<usize> {
        2 * k..2 * k + 2
    }

    /// Returns the tape, parameter nodes, logits, and each branch's gated features.
    pub fn forward_tape(&self, sample: &Sample) -> Result<(Tape, Vec<NodeId>, NodeId, [NodeId; 2])> {
        check_one_hot(&sample.s)?;
        if sample.x.dims2() != Some((self.n, self.t)) {
            return Err(Error::shape(0, "series dimensions differ from the fixture"));
        }
        let mut tape = Tape::new();
        let p: Vec<NodeId> = self.params.iter().map(|t| tape.param(t.clone())).collect();
        let x = tape.input(sample.x.clone());
        let s = tape.input(sample.s.column());
        let ones = tape.input(Tensor::ones(vec![self.filters, 1]));
        let mut gated = [x; 2];
        for (k, out) in gated.iter_mut().enumerate() {
            tape.scope(&format!("branch{k}"));
            let nodes = ConvNodes {
                kernel: p[2 * k],
                bias: p[2 * k + 1],
                in_channels: self.n,
                kernel_width: self.kernel_width,
                covariate: None,
            };
            let map = conv1d(&mut tape, x, &nodes, 1, Activation::Relu)?;
            let len = self.t - self.kernel_width + 1;
            let pooled = max_pool_graph(&mut tape, map, len)?;
            let sk = tape.slice(s, Axis::Rows, k, 1, 1)?;
            let gate = tape.matmul(ones, sk)?;
            *out = tape.mul(pooled, gate)?;
        }
        tape.scope("output");
        let merged = tape.add(gated[0], gated[1])?;
        let z = tape.matmul(p[4], merged)?;
        let logits = tape.add(z, p[5])?;
        Ok((tape, p, logits, gated))
    }

    pub fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        let (tape, _, logits, _) = self.forward_tape(sample)?;
        Ok(softmax_output(tape.value(logits).data()))
    }
}

impl Network for GatedFeatureModel {
    fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn parameter_names(&self) -> Vec<String> {
        [
            "branch0.kernel",
            "branch0.bias",
            "branch1.kernel",
            "branch1.bias",
            "output.weight",
            "output.bias",
        ]
        .map(String::from)
        .to_vec()
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn dropout(&self) -> f64 {
        0.0
    }

    fn loss_tape(&self, sample: &Sample, _noise: Option<NoiseSeeds>) -> Result<LossTape> {
        let (mut tape, params, logits, _) = self.forward_tape(sample)?;
        let loss = tape.softmax_cross_entropy(logits, sample.y)?;
        Ok(LossTape { tape, params, loss })
    }

    fn classify(&self, sample: &Sample) -> Result<usize> {
        Ok(argmax(&self.predict(sample)?))
    }
}
