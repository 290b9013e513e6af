//! Minibatch Adam on the mean cross-entropy.

use rand::seq::SliceRandom;

use super::dataset::Sample;
use crate::error::{Error, Result};
use crate::models::{Network, NoiseSeeds};
use crate::numeric::Tensor;
use crate::par;
use crate::rng::{derive_seed, derived_rng};

pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: 0.002,
            epochs: 100,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

/// Adam state for a list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, params: &[Tensor]) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                *w -= self.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

/// Mean loss and mean gradient over `batch`, summed in index order.
pub fn batch_gradient<N: Network>(net: &N, batch: &[&Sample], noise_seed: Option<u64>) -> Result<(f64, Vec<Tensor>)> {
    let per_sample = par::try_map_indexed(batch.len(), |j| {
        let noise = noise_seed.map(|b| NoiseSeeds {
            batch: b,
            sample: derive_seed(b, &[j as u64]),
        });
        let lt = net.loss_tape(batch[j], noise)?;
        let loss = lt.tape.value(lt.loss).data()[0];
        if !loss.is_finite() {
            let layer = lt
                .tape
                .first_non_finite()
                .map_or_else(|| "loss".to_string(), |(_, scope)| scope.to_string());
            return Err(Error::Numeric {
                layer,
                detail: format!("loss is {loss} for sample `{}`", batch[j].id),
            });
        }
        let grads = lt.tape.backward(lt.loss)?.into_leaves(&lt.params);
        Ok((loss, grads))
    })?;
    let scale = 1.0 / batch.len() as f64;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut total) = iter.next().ok_or_else(|| Error::Invariant("empty batch".into()))?;
    for (l, g) in iter {
        loss += l;
        for (acc, gk) in total.iter_mut().zip(&g) {
            for (a, b) in acc.data_mut().iter_mut().zip(gk.data()) {
                *a += b;
            }
        }
    }
    for t in &mut total {
        for a in t.data_mut() {
            *a *= scale;
        }
    }
    Ok((loss * scale, total))
}

/// Fit `net` in place; returns the mean training loss of each epoch.
///
/// Sample order is reshuffled every epoch from `seed`, and all training
/// randomness is derived from it, so the result does not depend on whether
/// gradients are computed in parallel.
pub fn train<N: Network>(net: &mut N, samples: &[&Sample], settings: &TrainSettings, seed: u64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if !(settings.learning_rate > 0.0 && settings.learning_rate.is_finite()) {
        return Err(Error::config("learning_rate", "must be positive"));
    }
    if settings.batch_size == 0 {
        return Err(Error::config("batch_size", "must be positive"));
    }
    let names = net.parameter_names();
    let mut adam = Adam::new(settings.learning_rate, net.parameters());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(settings.epochs);
    for epoch in 0..settings.epochs {
        order.shuffle(&mut derived_rng(seed, &[epoch as u64]));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(settings.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| samples[i]).collect();
            let noise = derive_seed(seed, &[epoch as u64, b as u64]);
            let (loss, grads) =
                batch_gradient(net, &batch, Some(noise)).map_err(|e| e.context(&format!("epoch {epoch}")))?;
            if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numeric {
                    layer: names[k].clone(),
                    detail: format!("non-finite gradient at epoch {epoch}"),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.update(net.parameters_mut(), &grads);
        }
        let mean = epoch_loss / samples.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        history.push(mean);
    }
    Ok(history)
}
