//! Plain-loop reference layers and small fixtures shared by the integration
//! tests. Nothing here goes through the tape.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use shortfuse::layers::{
    hybrid_conv1d, hybrid_fc, hybrid_lstm_step, Activation, CovariateVector, HybridConvFilter, HybridLSTMCellParams,
};
use shortfuse::numeric::Tensor;
use shortfuse::pipeline::{Dataset, Sample};
use shortfuse::rng::{derived_rng, Rng as ChaCha};

pub fn uniform(rng: &mut ChaCha, shape: Vec<usize>) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn act(v: f64, relu: bool) -> f64 {
    if relu && v <= 0.0 {
        0.0
    } else {
        v
    }
}

/// Textbook valid convolution, kernel indexed `[j][c][k]`.
pub fn plain_conv1d(x: &Tensor, kernel: &Tensor, bias: &[f64], stride: usize, relu: bool) -> Vec<Vec<f64>> {
    let (c_in, t) = x.dims2().unwrap();
    let (out, width) = (kernel.shape()[0], kernel.shape()[2]);
    let k_at = |j: usize, c: usize, k: usize| kernel.data()[(j * c_in + c) * width + k];
    let t_out = (t - width) / stride + 1;
    let mut y = vec![vec![0.0; t_out]; out];
    for j in 0..out {
        for tau in 0..t_out {
            let mut acc = 0.0;
            for k in 0..width {
                let mut inner = 0.0;
                for c in 0..c_in {
                    inner += k_at(j, c, k) * x.at(c, tau * stride + k);
                }
                acc = if k == 0 { inner } else { acc + inner };
            }
            y[j][tau] = act(acc + bias[j], relu);
        }
    }
    y
}

/// Standard LSTM step with gates `f, i, C̃, o` over the stacked `[h; x]`.
pub fn plain_lstm_step(x: &[f64], h: &[f64], c: &[f64], w: &[Tensor; 4], b: &[Tensor; 4]) -> (Vec<f64>, Vec<f64>) {
    let hx: Vec<f64> = h.iter().chain(x).copied().collect();
    let hidden = h.len();
    let gate = |g: usize, r: usize| {
        let mut z = 0.0;
        for (m, v) in hx.iter().enumerate() {
            z += w[g].at(r, m) * v;
        }
        z + b[g].data()[r]
    };
    let mut h_new = vec![0.0; hidden];
    let mut c_new = vec![0.0; hidden];
    for r in 0..hidden {
        let f = logistic(gate(0, r));
        let i = logistic(gate(1, r));
        let cand = gate(2, r).tanh();
        let o = logistic(gate(3, r));
        c_new[r] = f * c[r] + i * cand;
        h_new[r] = o * c_new[r].tanh();
    }
    (h_new, c_new)
}

pub fn plain_fc(input: &[f64], w: &Tensor, b: &[f64], relu: bool) -> Vec<f64> {
    let (out, m) = w.dims2().unwrap();
    (0..out)
        .map(|r| {
            let mut z = 0.0;
            for k in 0..m {
                z += w.at(r, k) * input[k];
            }
            act(z + b[r], relu)
        })
        .collect()
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn activation(relu: bool) -> Activation {
    if relu {
        Activation::Relu
    } else {
        Activation::Identity
    }
}

/// Hybrid layers with `s = 0` against the plain layers, `draws` random
/// parameterisations each. Returns the number of bitwise matches per layer
/// as `[conv, lstm, fc]`.
pub fn zero_covariate_matches(seed: u64, draws: u64) -> [u64; 3] {
    let mut hits = [0; 3];
    for r in 0..draws {
        let mut rng = derived_rng(seed, &[0, r]);
        let (c_in, out, width, d) = (
            rng.random_range(1..=3),
            rng.random_range(1..=5),
            rng.random_range(1..=4),
            rng.random_range(1..=6),
        );
        let stride = rng.random_range(1..=2);
        let t = rng.random_range(width..=width + 12);
        let relu = rng.random_bool(0.5);
        let x = uniform(&mut rng, vec![c_in, t]);
        let kernel = uniform(&mut rng, vec![out, c_in, width]);
        let bias = uniform(&mut rng, vec![out]);
        let filter = HybridConvFilter::new(kernel.clone(), uniform(&mut rng, vec![out, d]), bias.clone()).unwrap();
        let got = hybrid_conv1d(&x, &CovariateVector::zeros(d), &filter, stride, activation(relu)).unwrap();
        let want: Vec<f64> = plain_conv1d(&x, &kernel, bias.data(), stride, relu).concat();
        hits[0] += same_bits(got.data(), &want) as u64;

        let mut rng = derived_rng(seed, &[1, r]);
        let (hidden, n, d) = (
            rng.random_range(1..=5),
            rng.random_range(1..=4),
            rng.random_range(1..=6),
        );
        let p = HybridLSTMCellParams {
            w: std::array::from_fn(|_| uniform(&mut rng, vec![hidden, hidden + n])),
            ws: std::array::from_fn(|_| uniform(&mut rng, vec![hidden, d])),
            b: std::array::from_fn(|_| uniform(&mut rng, vec![hidden, 1])),
        };
        let (x_t, h, c) = (
            uniform(&mut rng, vec![n, 1]),
            uniform(&mut rng, vec![hidden, 1]),
            uniform(&mut rng, vec![hidden, 1]),
        );
        let (gh, gc) = hybrid_lstm_step(&x_t, &h, &c, &CovariateVector::zeros(d), &p).unwrap();
        let (wh, wc) = plain_lstm_step(x_t.data(), h.data(), c.data(), &p.w, &p.b);
        hits[1] += (same_bits(gh.data(), &wh) && same_bits(gc.data(), &wc)) as u64;

        let mut rng = derived_rng(seed, &[2, r]);
        let (m, out, d) = (
            rng.random_range(1..=8),
            rng.random_range(1..=6),
            rng.random_range(1..=6),
        );
        let relu = rng.random_bool(0.5);
        let input = uniform(&mut rng, vec![m]);
        let (w, v, b) = (
            uniform(&mut rng, vec![out, m]),
            uniform(&mut rng, vec![out, d]),
            uniform(&mut rng, vec![out]),
        );
        let got = hybrid_fc(&input, &CovariateVector::zeros(d), &w, &v, &b, activation(relu)).unwrap();
        hits[2] += same_bits(got.data(), &plain_fc(input.data(), &w, b.data(), relu)) as u64;
    }
    hits
}

/// `counts[k]` samples of class `k`, one constant sequence and one covariate.
pub fn labelled_dataset(counts: &[usize]) -> Dataset {
    let mut samples = Vec::new();
    for (k, &c) in counts.iter().enumerate() {
        for i in 0..c {
            samples.push(Sample {
                id: format!("c{k}_{i}"),
                s: CovariateVector::new(vec![i as f64]),
                x: Tensor::filled(vec![1, 4], k as f64),
                y: k,
            });
        }
    }
    Dataset::new(samples, vec!["s0".into()], vec!["x0".into()], counts.len().max(2)).unwrap()
}

/// Samples for the gated fixture: group `g` has covariates one-hot at `g`.
pub fn gated_samples(seed: u64, count: usize, t: usize, group: Option<usize>) -> Vec<Sample> {
    let mut rng = derived_rng(seed, &[]);
    (0..count)
        .map(|i| {
            let g = group.unwrap_or_else(|| rng.random_range(0..2));
            let x = uniform(&mut rng, vec![1, t]);
            let y = (x.data().iter().sum::<f64>() > 0.0) as usize ^ g;
            let mut s = vec![0.0; 2];
            s[g] = 1.0;
            Sample {
                id: format!("g{i}"),
                s: CovariateVector::new(s),
                x,
                y,
            }
        })
        .collect()
}
