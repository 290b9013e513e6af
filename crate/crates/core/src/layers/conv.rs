use super::covariates::CovariateVector;
use super::init::{covariate_scale, glorot};
use super::Activation;
use crate::error::{Error, Result};
use crate::numeric::{Axis, NodeId, Tape, Tensor};
use crate::rng::Rng;

/// A bank of 1D convolution filters with covariate weights shared across
/// every temporal position.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridConvFilter {
    /// `out_channels x in_channels x kernel_width`
    pub kernel: Tensor,
    /// `out_channels x d`
    pub covariate_weights: Tensor,
    /// `out_channels`
    pub bias: Tensor,
    /// `out_channels x d`, binary; all ones outside training.
    pub covariate_mask: Tensor,
}

impl HybridConvFilter {
    pub fn new(kernel: Tensor, covariate_weights: Tensor, bias: Tensor) -> Result<Self> {
        let [out, _, _] = kernel.shape() else {
            return Err(Error::shape(0, "kernel must be out x in x width"));
        };
        let (v_out, _) = covariate_weights
            .dims2()
            .ok_or_else(|| Error::shape(0, "covariate weights must be a matrix"))?;
        if v_out != *out || bias.len() != *out {
            return Err(Error::shape(0, "filter, covariate weight and bias counts differ"));
        }
        let covariate_mask = Tensor::ones(covariate_weights.shape().to_vec());
        Ok(HybridConvFilter {
            kernel,
            covariate_weights,
            bias,
            covariate_mask,
        })
    }

    pub fn init(out: usize, input: usize, width: usize, d: usize, rng: &mut Rng) -> Self {
        let kernel = glorot(rng, vec![out, input, width], input * width, out * width, 1.0);
        let v = glorot(rng, vec![out, d], d, out, covariate_scale(d));
        HybridConvFilter::new(kernel, v, Tensor::zeros(vec![out])).expect("consistent init")
    }

    pub fn with_mask(mut self, mask: Tensor) -> Result<Self> {
        if mask.shape() != self.covariate_weights.shape() {
            return Err(Error::shape(0, "mask shape differs from covariate weights"));
        }
        self.covariate_mask = mask;
        Ok(self)
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel.shape()[2]
    }

    /// Kernel as the `out x (in * width)` matrix used on the tape.
    pub fn kernel_matrix(&self) -> Tensor {
        self.kernel
            .reshaped(vec![self.out_channels(), self.in_channels() * self.kernel_width()])
            .expect("kernel reshape")
    }
}

/// Tape nodes of one convolution layer.
#[derive(Clone, Copy, Debug)]
pub struct ConvNodes {
    /// `out x (in * width)`, element `[j, c * width + k]`.
    pub kernel: NodeId,
    /// `out x 1`
    pub bias: NodeId,
    pub in_channels: usize,
    pub kernel_width: usize,
    pub covariate: Option<CovariateTerm>,
}

/// Covariate input to a layer: `(mask ⊙ V) · s`.
#[derive(Clone, Copy, Debug)]
pub struct CovariateTerm {
    pub weights: NodeId,
    pub s: NodeId,
    pub mask: Option<NodeId>,
}

impl CovariateTerm {
    /// `(mask ⊙ V) · s`, a column.
    pub fn build(&self, tape: &mut Tape) -> Result<NodeId> {
        let v = match self.mask {
            Some(m) => tape.mul(self.weights, m)?,
            None => self.weights,
        };
        tape.matmul(v, self.s)
    }
}

/// Output length of a valid convolution.
pub fn conv_output_len(t: usize, width: usize, stride: usize) -> Option<usize> {
    (width <= t && stride > 0).then(|| (t - width) / stride + 1)
}

/// Valid 1D convolution over an `in x t` map.
///
/// `out[j, τ] = act(Σ_k K_k · x[:, τ·stride + k] + ((mask ⊙ V)·s + b)[j])`,
/// where `K_k` is the `out x in` slice of the kernel at offset `k`. The
/// covariate term is computed once and repeated across all positions.
pub fn conv1d(tape: &mut Tape, x: NodeId, conv: &ConvNodes, stride: usize, activation: Activation) -> Result<NodeId> {
    let (c_in, t) = tape.value(x).dims2().unwrap_or((0, 0));
    if c_in != conv.in_channels {
        return Err(Error::shape(
            tape.len(),
            format!("conv expects {} input channels, got {c_in}", conv.in_channels),
        ));
    }
    let t_out = conv_output_len(t, conv.kernel_width, stride).ok_or_else(|| {
        Error::shape(
            tape.len(),
            format!("kernel width {} wider than input length {t}", conv.kernel_width),
        )
    })?;
    let mut acc: Option<NodeId> = None;
    for k in 0..conv.kernel_width {
        let kk = tape.slice(conv.kernel, Axis::Cols, k, c_in, conv.kernel_width)?;
        let xk = tape.slice(x, Axis::Cols, k, t_out, stride)?;
        let p = tape.matmul(kk, xk)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, p)?,
            None => p,
        });
    }
    let offset = match &conv.covariate {
        Some(term) => {
            let vs = term.build(tape)?;
            tape.add(vs, conv.bias)?
        }
        None => conv.bias,
    };
    let offset = tape.repeat_cols(offset, t_out)?;
    let out = tape.add(acc.expect("kernel width >= 1"), offset)?;
    activation.apply(tape, out)
}

/// Non-overlapping max over windows along time; the remainder is dropped.
pub fn max_pool_graph(tape: &mut Tape, x: NodeId, window: usize) -> Result<NodeId> {
    let (_, t) = tape.value(x).dims2().unwrap_or((0, 0));
    if window == 0 || window > t {
        return Err(Error::shape(
            tape.len(),
            format!("pool window {window} invalid for length {t}"),
        ));
    }
    if window == 1 {
        return Ok(x);
    }
    let t_out = t / window;
    let parts = (0..window)
        .map(|i| tape.slice(x, Axis::Cols, i, t_out, window))
        .collect::<Result<Vec<_>>>()?;
    tape.max(&parts)
}

/// Evaluate a hybrid convolution on plain tensors.
pub fn hybrid_conv1d(
    x: &Tensor,
    s: &CovariateVector,
    f: &HybridConvFilter,
    stride: usize,
    activation: Activation,
) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::config("stride", "must be positive"));
    }
    if s.len() != f.covariate_weights.cols() {
        return Err(Error::shape(
            0,
            format!(
                "{} covariates for {} covariate weights",
                s.len(),
                f.covariate_weights.cols()
            ),
        ));
    }
    let mut tape = Tape::new();
    let xn = tape.input(x.clone());
    let kernel = tape.param(f.kernel_matrix());
    let bias = tape.param(f.bias.reshaped(vec![f.out_channels(), 1])?);
    let weights = tape.param(f.covariate_weights.clone());
    let mask = tape.input(f.covariate_mask.clone());
    let sn = tape.input(s.column());
    let nodes = ConvNodes {
        kernel,
        bias,
        in_channels: f.in_channels(),
        kernel_width: f.kernel_width(),
        covariate: Some(CovariateTerm {
            weights,
            s: sn,
            mask: Some(mask),
        }),
    };
    let out = conv1d(&mut tape, xn, &nodes, stride, activation)?;
    Ok(tape.value(out).clone())
}

/// Max pooling on a `channels x time` tensor.
pub fn max_pool(x: &Tensor, window: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xn = tape.input(x.clone());
    let out = max_pool_graph(&mut tape, xn, window)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filter(kernel: Vec<f64>, out: usize, input: usize, width: usize, v: Vec<f64>, d: usize) -> HybridConvFilter {
        HybridConvFilter::new(
            Tensor::new(vec![out, input, width], kernel).unwrap(),
            Tensor::new(vec![out, d], v).unwrap(),
            Tensor::zeros(vec![out]),
        )
        .unwrap()
    }

    #[test]
    fn hand_convolution() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let f = filter(vec![1.0, -1.0], 1, 1, 2, vec![0.5], 1);
        let out = hybrid_conv1d(&x, &CovariateVector::new(vec![1.0]), &f, 1, Activation::Identity).unwrap();
        assert_eq!(out.data(), &[-0.5, -0.5, -0.5]);
    }

    #[test]
    fn only_covariate_term_survives() {
        let x = Tensor::from_rows(&[vec![0.3, -2.0, 1.0, 4.0, 2.0]]).unwrap();
        let f = filter(vec![0.0; 6], 2, 1, 3, vec![1.0, 2.0, -1.0, 0.5], 2);
        let s = CovariateVector::new(vec![0.25, 1.0]);
        let out = hybrid_conv1d(&x, &s, &f, 1, Activation::Identity).unwrap();
        assert_eq!(out.shape(), &[2, 3]);
        assert!(out.row_slice(0).iter().all(|&v| v == 2.25));
        assert!(out.row_slice(1).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn stride_arithmetic_and_width_error() {
        let x = Tensor::from_rows(&[vec![1.0; 10]]).unwrap();
        let f = filter(vec![1.0; 3], 1, 1, 3, vec![0.0], 1);
        let s = CovariateVector::new(vec![0.0]);
        let out = hybrid_conv1d(&x, &s, &f, 3, Activation::Relu).unwrap();
        assert_eq!(out.shape(), &[1, (10 - 3) / 3 + 1]);
        let short = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(hybrid_conv1d(&short, &s, &f, 1, Activation::Relu).is_err());
    }

    #[test]
    fn mask_removes_covariates() {
        let x = Tensor::from_rows(&[vec![0.0; 4]]).unwrap();
        let f = filter(vec![0.0; 2], 1, 1, 2, vec![1.0, 10.0], 2)
            .with_mask(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap())
            .unwrap();
        let out = hybrid_conv1d(&x, &CovariateVector::new(vec![2.0, 3.0]), &f, 1, Activation::Identity).unwrap();
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn pooling_examples() {
        let x = Tensor::from_rows(&[vec![1.0, 3.0, 2.0, 5.0]]).unwrap();
        assert_eq!(max_pool(&x, 1).unwrap(), x);
        assert_eq!(max_pool(&x, 2).unwrap().data(), &[3.0, 5.0]);
        let y = Tensor::from_rows(&[vec![-1.0, -2.0, -3.0]]).unwrap();
        assert_eq!(max_pool(&y, 3).unwrap().data(), &[-1.0]);
        let z = Tensor::from_rows(&[vec![1.0, 9.0, 2.0, 3.0, 7.0]]).unwrap();
        assert_eq!(max_pool(&z, 2).unwrap().data(), &[9.0, 3.0]);
        assert!(max_pool(&y, 4).is_err());
    }
}
