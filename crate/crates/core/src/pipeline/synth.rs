//! Synthetic data in which the relevant temporal feature depends on a
//! covariate.
//!
//! Each sample has a binary group covariate (index 0) and `d - 1`
//! independent Gaussian distractors. Every sequence is a baseline level plus
//! small Gaussian noise and three one-step spikes of a shared height, so the
//! series mean is driven by the baseline and the series maximum by the spike
//! height. Under the fusion rule, group 1 is labelled by thresholding the
//! maximum and group 0 by thresholding the mean, each at its group's median.

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::layers::CovariateVector;
use crate::numeric::Tensor;
use crate::rng::derived_rng;

pub const SPIKES_PER_SEQUENCE: usize = 3;
const NOISE_SCALE: f64 = 0.1;
const SPIKE_MIN: f64 = 0.5;
const SPIKE_MAX: f64 = 4.5;

/// How labels are derived from the generated data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelRule {
    /// Group 1 by maximum, group 0 by mean.
    Fusion,
    /// Mean above its median, whatever the covariates.
    SeriesOnly,
    /// The group covariate itself.
    CovariateOnly,
    /// Fair coin flips, unrelated to the data.
    Independent,
}

impl LabelRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelRule::Fusion => "fusion",
            LabelRule::SeriesOnly => "series-only",
            LabelRule::CovariateOnly => "covariate-only",
            LabelRule::Independent => "independent",
        }
    }
}

impl std::str::FromStr for LabelRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(LabelRule::Fusion),
            "series-only" => Ok(LabelRule::SeriesOnly),
            "covariate-only" => Ok(LabelRule::CovariateOnly),
            "independent" => Ok(LabelRule::Independent),
            other => Err(Error::config("rule", format!("unknown label rule `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_samples: usize,
    pub n: usize,
    pub t: usize,
    pub d: usize,
    /// Probability of flipping each label.
    pub noise: f64,
    pub seed: u64,
    pub rule: LabelRule,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_samples: 2000,
            n: 1,
            t: 100,
            d: 6,
            noise: 0.1,
            seed: 1,
            rule: LabelRule::Fusion,
        }
    }
}

/// Ground truth kept alongside a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTruth {
    pub group_index: usize,
    /// Threshold on the maximum for group 1.
    pub max_threshold: f64,
    /// Threshold on the mean for group 0 (or for everyone under `SeriesOnly`).
    pub mean_threshold: f64,
    /// Labels before noise.
    pub clean_labels: Vec<usize>,
    pub rule: LabelRule,
}

impl SynthTruth {
    /// Recompute the noiseless label from a sample's raw data. `None` under
    /// the independent rule, where labels carry no information.
    pub fn oracle_label(&self, sample: &Sample) -> Option<usize> {
        let (max, mean) = series_statistics(&sample.x);
        let group = sample.s.as_slice()[self.group_index];
        match self.rule {
            LabelRule::Fusion if group == 1.0 => Some((max > self.max_threshold) as usize),
            LabelRule::Fusion | LabelRule::SeriesOnly => Some((mean > self.mean_threshold) as usize),
            LabelRule::CovariateOnly => Some(group as usize),
            LabelRule::Independent => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: SynthTruth,
}

/// `(max, mean)` over every entry of the series.
pub fn series_statistics(x: &Tensor) -> (f64, f64) {
    let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = x.data().iter().sum::<f64>() / x.len() as f64;
    (max, mean)
}

/// Midpoint between the two middle order statistics, so no value sits on it.
fn median_split(values: &mut [f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len => {
            values.sort_by(f64::total_cmp);
            let m = len / 2;
            0.5 * (values[m - 1] + values[m])
        }
    }
}

pub fn synth_fusion_dataset(
    num_samples: usize,
    n: usize,
    t: usize,
    d: usize,
    noise: f64,
    seed: u64,
) -> Result<Synthetic> {
    synth_dataset(&SynthSpec {
        num_samples,
        n,
        t,
        d,
        noise,
        seed,
        rule: LabelRule::Fusion,
    })
}

pub fn synth_dataset(spec: &SynthSpec) -> Result<Synthetic> {
    if spec.d < 2 {
        return Err(Error::config("d", "need a group covariate and at least one distractor"));
    }
    if spec.t <= SPIKES_PER_SEQUENCE || spec.n == 0 {
        return Err(Error::config("t", format!("need n >= 1 and t > {SPIKES_PER_SEQUENCE}")));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(Error::config("noise", "flip probability must lie in [0, 1]"));
    }
    if spec.num_samples < 2 {
        return Err(Error::config("samples", "need at least two samples"));
    }
    let mut samples = Vec::with_capacity(spec.num_samples);
    let mut stats = Vec::with_capacity(spec.num_samples);
    for i in 0..spec.num_samples {
        let mut rng = derived_rng(spec.seed, &[0, i as u64]);
        let group = rng.random_bool(0.5);
        let mut cov = vec![if group { 1.0 } else { 0.0 }];
        cov.extend((1..spec.d).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        let baseline: f64 = rng.random_range(0.0..1.0);
        let height: f64 = rng.random_range(SPIKE_MIN..SPIKE_MAX);
        let mut data = Vec::with_capacity(spec.n * spec.t);
        for _ in 0..spec.n {
            let start = data.len();
            data.extend((0..spec.t).map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                baseline + NOISE_SCALE * e
            }));
            for pos in sample_indices(&mut rng, spec.t, SPIKES_PER_SEQUENCE) {
                data[start + pos] += height;
            }
        }
        let x = Tensor::new(vec![spec.n, spec.t], data)?;
        stats.push((group, series_statistics(&x)));
        samples.push(Sample {
            id: format!("s{i:05}"),
            s: CovariateVector::new(cov),
            x,
            y: 0,
        });
    }
    let mut max_g1: Vec<f64> = stats.iter().filter(|s| s.0).map(|s| s.1 .0).collect();
    let mut mean_g0: Vec<f64> = stats.iter().filter(|s| !s.0).map(|s| s.1 .1).collect();
    let mut mean_all: Vec<f64> = stats.iter().map(|s| s.1 .1).collect();
    let max_threshold = median_split(&mut max_g1);
    let mean_threshold = match spec.rule {
        LabelRule::SeriesOnly => median_split(&mut mean_all),
        _ => median_split(&mut mean_g0),
    };
    let clean_labels: Vec<usize> = stats
        .iter()
        .enumerate()
        .map(|(i, &(group, (max, mean)))| match spec.rule {
            LabelRule::Fusion if group => (max > max_threshold) as usize,
            LabelRule::Fusion | LabelRule::SeriesOnly => (mean > mean_threshold) as usize,
            LabelRule::CovariateOnly => group as usize,
            LabelRule::Independent => derived_rng(spec.seed, &[2, i as u64]).random_bool(0.5) as usize,
        })
        .collect();
    for (i, (sample, &clean)) in samples.iter_mut().zip(&clean_labels).enumerate() {
        let mut rng = derived_rng(spec.seed, &[1, i as u64]);
        let flip = spec.noise > 0.0 && rng.random_bool(spec.noise);
        sample.y = if flip { 1 - clean } else { clean };
    }
    let covariate_names = std::iter::once("group".to_string())
        .chain((1..spec.d).map(|j| format!("distractor{j}")))
        .collect();
    let sequence_names = (0..spec.n).map(|r| format!("seq{r}")).collect();
    let dataset = Dataset::new(samples, covariate_names, sequence_names, 2)?;
    Ok(Synthetic {
        dataset,
        truth: SynthTruth {
            group_index: 0,
            max_threshold,
            mean_threshold,
            clean_labels,
            rule: spec.rule,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_oracle_is_exact() {
        let syn = synth_fusion_dataset(400, 2, 30, 3, 0.0, 5).unwrap();
        for s in &syn.dataset.samples {
            assert_eq!(syn.truth.oracle_label(s), Some(s.y));
        }
    }

    #[test]
    fn groups_are_balanced() {
        let syn = synth_fusion_dataset(1000, 1, 50, 2, 0.0, 8).unwrap();
        for g in [0.0, 1.0] {
            let ys: Vec<usize> = syn
                .dataset
                .samples
                .iter()
                .filter(|s| s.s.as_slice()[0] == g)
                .map(|s| s.y)
                .collect();
            let ones = ys.iter().sum::<usize>();
            assert!(ones.abs_diff(ys.len() - ones) <= 1, "group {g}: {ones} of {}", ys.len());
        }
    }

    #[test]
    fn noise_flips_about_the_requested_fraction() {
        let syn = synth_fusion_dataset(4000, 1, 20, 2, 0.1, 3).unwrap();
        let flipped = syn
            .dataset
            .samples
            .iter()
            .zip(&syn.truth.clean_labels)
            .filter(|(s, &c)| s.y != c)
            .count() as f64
            / 4000.0;
        // binomial sd = sqrt(0.09 / 4000) ~ 0.0047
        assert!((flipped - 0.1).abs() < 0.015, "{flipped}");
    }

    #[test]
    fn rejects_too_few_covariates() {
        assert!(synth_fusion_dataset(10, 1, 20, 1, 0.0, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let a = synth_fusion_dataset(50, 1, 20, 3, 0.2, 9).unwrap();
        let b = synth_fusion_dataset(50, 1, 20, 3, 0.2, 9).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }
}
