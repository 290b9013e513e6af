use rand::Rng as _;

use super::spec::{ArchitectureSpec, Family, FusionMode, LATE_FUSE_WIDTH};
use super::{LossTape, Network, NoiseSeeds};
use crate::error::{Error, Result};
use crate::layers::{
    argmax, conv1d, conv_output_len, covariate_dropout_mask, covariate_scale, glorot, lstm_sequence, max_pool_graph,
    softmax_output, Activation, ConvNodes, CovariateTerm, CovariateVector, LstmNodes,
};
use crate::numeric::{Axis, NodeId, Tape, Tensor};
use crate::pipeline::Sample;
use crate::rng::{derive_seed, rng_from, Rng};

/// Name and role of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    /// Multiplies the covariate vector (directly or through the covariate subnetwork).
    pub covariate: bool,
}

#[derive(Clone, Debug)]
struct ConvLayout {
    kernel: usize,
    bias: usize,
    covariate: Option<usize>,
    in_channels: usize,
}

#[derive(Clone, Debug)]
enum Trunk {
    Cnn {
        convs: Vec<ConvLayout>,
        dense_w: usize,
        dense_b: usize,
        channels: usize,
        length: usize,
    },
    Lstm {
        w: [usize; 4],
        b: [usize; 4],
        ws: Option<[usize; 4]>,
    },
}

#[derive(Clone, Debug)]
struct LateLayout {
    u1: usize,
    c1: usize,
    u2: usize,
    c2: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    trunk: Trunk,
    late: Option<LateLayout>,
    out_w: usize,
    out_b: usize,
}

struct Builder {
    params: Vec<Tensor>,
    info: Vec<ParamInfo>,
    rng: Rng,
}

impl Builder {
    fn weight(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        scale: f64,
        covariate: bool,
    ) -> usize {
        let t = glorot(&mut self.rng, shape, fan_in, fan_out, scale);
        self.push(name, t, covariate)
    }

    fn zeros(&mut self, name: &str, shape: Vec<usize>, covariate: bool) -> usize {
        self.push(name, Tensor::zeros(shape), covariate)
    }

    fn push(&mut self, name: &str, t: Tensor, covariate: bool) -> usize {
        self.params.push(t);
        self.info.push(ParamInfo {
            name: name.to_string(),
            covariate,
        });
        self.params.len() - 1
    }
}

/// A network assembled from an [`ArchitectureSpec`] for fixed `(n, t, d)`.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ArchitectureSpec,
    n: usize,
    t: usize,
    d: usize,
    seed: u64,
    params: Vec<Tensor>,
    info: Vec<ParamInfo>,
    layout: Layout,
}

impl Model {
    /// Construct and initialise a model; deterministic in `seed`.
    pub fn build(spec: &ArchitectureSpec, n: usize, t: usize, d: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if n == 0 || t == 0 {
            return Err(Error::config("series", "n and t must be positive"));
        }
        if spec.fusion.uses_covariates() && d == 0 {
            return Err(Error::config("fusion", "covariate fusion needs d >= 1"));
        }
        let mut b = Builder {
            params: Vec::new(),
            info: Vec::new(),
            rng: rng_from(seed),
        };
        let input_channels = if spec.fusion == FusionMode::Replicate { n + d } else { n };
        let h = spec.hidden_size;
        let g = LATE_FUSE_WIDTH;
        let k = spec.num_classes;
        let trunk = match spec.family {
            Family::Cnn => {
                let (f, kw) = (spec.filters, spec.kernel_width);
                let mut convs = Vec::new();
                let (mut c_in, mut len) = (input_channels, t);
                for l in 0..spec.num_conv_layers {
                    let conv_len = conv_output_len(len, kw, 1).ok_or_else(|| {
                        Error::config(
                            "num_conv_layers",
                            format!("layer {l}: kernel width {kw} exceeds remaining length {len}"),
                        )
                    })?;
                    if spec.pool_window > conv_len {
                        return Err(Error::config(
                            "num_conv_layers",
                            format!("layer {l}: pool window {} exceeds length {conv_len}", spec.pool_window),
                        ));
                    }
                    let kernel = b.weight(
                        &format!("conv{l}.kernel"),
                        vec![f, c_in * kw],
                        c_in * kw,
                        f * kw,
                        1.0,
                        false,
                    );
                    let bias = b.zeros(&format!("conv{l}.bias"), vec![f, 1], false);
                    let covariate = spec.conv_layer_is_hybrid(l).then(|| {
                        b.weight(
                            &format!("conv{l}.covariate"),
                            vec![f, d],
                            d,
                            f,
                            covariate_scale(d),
                            true,
                        )
                    });
                    convs.push(ConvLayout {
                        kernel,
                        bias,
                        covariate,
                        in_channels: c_in,
                    });
                    c_in = f;
                    len = conv_len / spec.pool_window;
                }
                let flat = c_in * len;
                let dense_w = b.weight("dense.weight", vec![flat, h], flat, h, 1.0, false);
                let dense_b = b.zeros("dense.bias", vec![1, h], false);
                Trunk::Cnn {
                    convs,
                    dense_w,
                    dense_b,
                    channels: c_in,
                    length: len,
                }
            }
            Family::Lstm => {
                let w = std::array::from_fn(|gate| {
                    b.weight(
                        &format!("lstm.w{gate}"),
                        vec![h, h + input_channels],
                        h + input_channels,
                        h,
                        1.0,
                        false,
                    )
                });
                let bias = std::array::from_fn(|gate| b.zeros(&format!("lstm.b{gate}"), vec![h, 1], false));
                let ws = (spec.fusion == FusionMode::ShortFuse).then(|| {
                    std::array::from_fn(|gate| {
                        b.weight(&format!("lstm.ws{gate}"), vec![h, d], d, h, covariate_scale(d), true)
                    })
                });
                Trunk::Lstm { w, b: bias, ws }
            }
        };
        let row = spec.family == Family::Cnn;
        let late = (spec.fusion == FusionMode::LateFuse).then(|| {
            let (s1, s2) = if row {
                (vec![d, g], vec![1, g])
            } else {
                (vec![g, d], vec![g, 1])
            };
            let u1 = b.weight("late.u1", s1, d, g, covariate_scale(d), true);
            let c1 = b.zeros("late.c1", s2.clone(), true);
            let u2 = b.weight("late.u2", vec![g, g], g, g, 1.0, true);
            let c2 = b.zeros("late.c2", s2, true);
            LateLayout { u1, c1, u2, c2 }
        });
        let merged = h + if late.is_some() { g } else { 0 };
        let (ow, ob) = if row {
            (vec![merged, k], vec![1, k])
        } else {
            (vec![k, merged], vec![k, 1])
        };
        let out_w = b.weight("output.weight", ow, merged, k, 1.0, false);
        let out_b = b.zeros("output.bias", ob, false);
        Ok(Model {
            spec: spec.clone(),
            n,
            t,
            d,
            seed,
            params: b.params,
            info: b.info,
            layout: Layout {
                trunk,
                late,
                out_w,
                out_b,
            },
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    /// `(n, t, d)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.t, self.d)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param_info(&self) -> &[ParamInfo] {
        &self.info
    }

    /// Replace all parameters; shapes must match the layout.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::Invariant(
                "parameter shapes do not match the architecture".into(),
            ));
        }
        self.params = params;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn covariate_parameter_count(&self) -> usize {
        self.params
            .iter()
            .zip(&self.info)
            .filter(|(_, i)| i.covariate)
            .map(|(p, _)| p.len())
            .sum()
    }

    /// Mutable access to a parameter by name.
    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.info.iter().position(|p| p.name == name)?;
        Some(&mut self.params[i])
    }

    fn check_sample(&self, x: &Tensor, s: &CovariateVector) -> Result<()> {
        if x.dims2() != Some((self.n, self.t)) || s.len() != self.d {
            return Err(Error::shape(
                0,
                format!(
                    "model expects series {}x{} and {} covariates, got {:?} and {}",
                    self.n,
                    self.t,
                    self.d,
                    x.shape(),
                    s.len()
                ),
            ));
        }
        Ok(())
    }

    /// Record the forward pass up to the logits. Training randomness is drawn
    /// from `noise` when given; otherwise masks are identity.
    pub fn forward_tape(
        &self,
        x: &Tensor,
        s: &CovariateVector,
        noise: Option<NoiseSeeds>,
    ) -> Result<(Tape, Vec<NodeId>, NodeId)> {
        self.check_sample(x, s)?;
        let mut tape = Tape::new();
        tape.scope("input");
        let p: Vec<NodeId> = self.params.iter().map(|t| tape.param(t.clone())).collect();
        let xn = tape.input(x.clone());
        let needs_s = self.spec.fusion.uses_covariates();
        let s_col = needs_s.then(|| tape.input(s.column()));
        let mut input = xn;
        if self.spec.fusion == FusionMode::Replicate {
            tape.scope("replicate");
            let rep = tape.repeat_cols(s_col.expect("covariates"), self.t)?;
            input = tape.concat(&[xn, rep], Axis::Rows)?;
        }
        let h = self.spec.hidden_size;
        let logits = match &self.layout.trunk {
            Trunk::Cnn {
                convs,
                dense_w,
                dense_b,
                channels,
                length,
            } => {
                let mut map = input;
                for (l, c) in convs.iter().enumerate() {
                    tape.scope(&format!("conv{l}"));
                    let covariate = match c.covariate {
                        Some(v) => {
                            let mask = match noise {
                                Some(ns) if self.spec.covariate_dropout > 0.0 => {
                                    Some(tape.input(self.covariate_mask(ns.batch, l)?))
                                }
                                _ => None,
                            };
                            Some(CovariateTerm {
                                weights: p[v],
                                s: s_col.expect("covariates"),
                                mask,
                            })
                        }
                        None => None,
                    };
                    let nodes = ConvNodes {
                        kernel: p[c.kernel],
                        bias: p[c.bias],
                        in_channels: c.in_channels,
                        kernel_width: self.spec.kernel_width,
                        covariate,
                    };
                    let out = conv1d(&mut tape, map, &nodes, 1, Activation::Relu)?;
                    map = max_pool_graph(&mut tape, out, self.spec.pool_window)?;
                }
                tape.scope("dense");
                let mut acc = None;
                for c in 0..*channels {
                    let row = tape.slice(map, Axis::Rows, c, 1, 1)?;
                    let wc = tape.slice(p[*dense_w], Axis::Rows, c * length, *length, 1)?;
                    let term = tape.matmul(row, wc)?;
                    acc = Some(match acc {
                        Some(a) => tape.add(a, term)?,
                        None => term,
                    });
                }
                let z = tape.add(acc.expect("at least one channel"), p[*dense_b])?;
                let mut hidden = tape.relu(z)?;
                if let Some(mask) = self.dropout_mask(noise, vec![1, h]) {
                    let m = tape.input(mask);
                    hidden = tape.mul(hidden, m)?;
                }
                if let Some(late) = &self.layout.late {
                    tape.scope("covariate_net");
                    let s_row = tape.input(s.row());
                    let a = tape.matmul(s_row, p[late.u1])?;
                    let a = tape.add(a, p[late.c1])?;
                    let a = tape.relu(a)?;
                    let g = tape.matmul(a, p[late.u2])?;
                    let g = tape.add(g, p[late.c2])?;
                    let g = tape.relu(g)?;
                    hidden = tape.concat(&[hidden, g], Axis::Cols)?;
                }
                tape.scope("output");
                let z = tape.matmul(hidden, p[self.layout.out_w])?;
                tape.add(z, p[self.layout.out_b])?
            }
            Trunk::Lstm { w, b, ws } => {
                tape.scope("lstm");
                let nodes = LstmNodes {
                    w: w.map(|i| p[i]),
                    b: b.map(|i| p[i]),
                    covariate: ws.map(|ws| (ws.map(|i| p[i]), s_col.expect("covariates"))),
                };
                let hs = lstm_sequence(&mut tape, &nodes, input, h)?;
                let mut last = *hs.last().expect("t >= 1");
                if let Some(mask) = self.dropout_mask(noise, vec![h, 1]) {
                    let m = tape.input(mask);
                    last = tape.mul(last, m)?;
                }
                if let Some(late) = &self.layout.late {
                    tape.scope("covariate_net");
                    let sc = s_col.expect("covariates");
                    let a = tape.matmul(p[late.u1], sc)?;
                    let a = tape.add(a, p[late.c1])?;
                    let a = tape.relu(a)?;
                    let g = tape.matmul(p[late.u2], a)?;
                    let g = tape.add(g, p[late.c2])?;
                    let g = tape.relu(g)?;
                    last = tape.concat(&[last, g], Axis::Rows)?;
                }
                tape.scope("output");
                let z = tape.matmul(p[self.layout.out_w], last)?;
                tape.add(z, p[self.layout.out_b])?
            }
        };
        Ok((tape, p, logits))
    }

    /// Scaled covariate-dropout mask for conv layer `layer` in the given minibatch.
    fn covariate_mask(&self, batch_seed: u64, layer: usize) -> Result<Tensor> {
        let rate = self.spec.covariate_dropout;
        let mask = covariate_dropout_mask(
            self.d,
            self.spec.filters,
            rate,
            derive_seed(batch_seed, &[layer as u64]),
        )?;
        Ok(mask.map(|v| v / (1.0 - rate)))
    }

    fn dropout_mask(&self, noise: Option<NoiseSeeds>, shape: Vec<usize>) -> Option<Tensor> {
        let rate = self.spec.dropout;
        let ns = noise.filter(|_| rate > 0.0)?;
        let mut rng = rng_from(ns.sample);
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| {
                if rng.random_bool(1.0 - rate) {
                    1.0 / (1.0 - rate)
                } else {
                    0.0
                }
            })
            .collect();
        Some(Tensor::new(shape, data).expect("mask shape"))
    }

    /// Class probabilities for one series and covariate vector.
    pub fn predict_parts(&self, x: &Tensor, s: &CovariateVector) -> Result<Vec<f64>> {
        let (tape, _, logits) = self.forward_tape(x, s, None)?;
        Ok(softmax_output(tape.value(logits).data()))
    }

    pub fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.predict_parts(&sample.x, &sample.s)
    }

    /// Predicted class; ties go to the lowest index.
    pub fn classify(&self, sample: &Sample) -> Result<usize> {
        Ok(argmax(&self.predict(sample)?))
    }
}

impl Network for Model {
    fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn parameter_names(&self) -> Vec<String> {
        self.info.iter().map(|i| i.name.clone()).collect()
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn dropout(&self) -> f64 {
        self.spec.dropout
    }

    fn loss_tape(&self, sample: &Sample, noise: Option<NoiseSeeds>) -> Result<LossTape> {
        let (mut tape, params, logits) = self.forward_tape(&sample.x, &sample.s, noise)?;
        tape.scope("loss");
        let loss = tape.softmax_cross_entropy(logits, sample.y)?;
        Ok(LossTape { tape, params, loss })
    }

    fn classify(&self, sample: &Sample) -> Result<usize> {
        Model::classify(self, sample)
    }
}
