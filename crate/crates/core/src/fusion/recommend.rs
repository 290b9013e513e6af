//! Whether a dataset warrants fusing covariates with its time series.
//!
//! Fusion is recommended when the label carries information about the
//! covariates beyond the series, `I(Y;S|X) > 0`, and about the series beyond
//! the covariates, `I(Y;X|S) > 0`, each judged by a permutation test.

use nalgebra::{DMatrix, SymmetricEigen};

use super::cmi::{cmi_estimate_with, CmiEstimate, CmiOptions, DEFAULT_K, MIN_PERMUTATIONS};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::pipeline::Dataset;
use crate::rng::derive_seed;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_COMPONENTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct FusionTestOptions {
    pub k: usize,
    pub alpha: f64,
    pub permutations: usize,
    /// Principal components kept from the flattened series.
    pub components: usize,
    pub seed: u64,
}

impl Default for FusionTestOptions {
    fn default() -> Self {
        FusionTestOptions {
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
            permutations: MIN_PERMUTATIONS,
            components: DEFAULT_COMPONENTS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionDecision {
    pub fuse: bool,
    pub alpha: f64,
    /// `I(Y;S|X)`
    pub cmi_ys_x: CmiEstimate,
    /// `I(Y;X|S)`
    pub cmi_yx_s: CmiEstimate,
}

impl FusionDecision {
    pub fn render(&self) -> String {
        let line = |name: &str, e: &CmiEstimate| {
            format!(
                "{name}.value = {}\n{name}.pvalue = {}\n{name}.k = {}\n{name}.samples = {}\n",
                e.value, e.permutation_pvalue, e.k, e.num_samples
            )
        };
        format!(
            "fuse = {}\nalpha = {}\n{}{}",
            self.fuse,
            self.alpha,
            line("cmi_ys_x", &self.cmi_ys_x),
            line("cmi_yx_s", &self.cmi_yx_s)
        )
    }
}

/// Scores of the rows of `x` (samples x features) on the top `components`
/// principal axes, in decreasing order of variance.
pub fn principal_scores(x: &DMatrix<f64>, components: usize) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let means = x.row_mean();
    let centred = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    let cov = centred.transpose() * &centred / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order.truncate(components.min(p));
    let basis = DMatrix::from_fn(p, order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    centred * basis
}

/// Z-score each column; constant columns are only centred.
fn standardized(m: &DMatrix<f64>) -> Tensor {
    let (n, p) = m.shape();
    let mut out = vec![0.0; n * p];
    for j in 0..p {
        let col = m.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        for i in 0..n {
            out[i * p + j] = (col[i] - mean) * scale;
        }
    }
    Tensor::new(vec![n, p], out).expect("non-empty matrix")
}

/// Labels, covariates and series summaries as standardized sample matrices.
pub fn fusion_inputs(dataset: &Dataset, components: usize) -> Result<(Tensor, Tensor, Tensor)> {
    let n = dataset.len();
    let (_, _, d) = dataset.dims();
    if d == 0 {
        return Err(Error::data("dataset has no covariates"));
    }
    if dataset.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::data(
            "labels take a single value; the fusion test needs at least two classes",
        ));
    }
    if components == 0 {
        return Err(Error::config("components", "must be positive"));
    }
    let y = DMatrix::from_fn(n, 1, |i, _| dataset.samples[i].y as f64);
    let s = DMatrix::from_fn(n, d, |i, j| dataset.samples[i].s.as_slice()[j]);
    let width = dataset.samples[0].x.len();
    let flat = DMatrix::from_fn(n, width, |i, j| dataset.samples[i].x.data()[j]);
    let x = principal_scores(&flat, components);
    Ok((standardized(&y), standardized(&s), standardized(&x)))
}

pub fn fusion_recommended(dataset: &Dataset, k: usize, alpha: f64) -> Result<FusionDecision> {
    fusion_recommended_with(
        dataset,
        &FusionTestOptions {
            k,
            alpha,
            ..Default::default()
        },
    )
}

pub fn fusion_recommended_with(dataset: &Dataset, options: &FusionTestOptions) -> Result<FusionDecision> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::config("alpha", "must lie in (0, 1)"));
    }
    let (y, s, x) = fusion_inputs(dataset, options.components)?;
    let opts = |branch: u64| CmiOptions {
        k: options.k,
        permutations: options.permutations,
        seed: derive_seed(options.seed, &[branch]),
        ..Default::default()
    };
    let cmi_ys_x = cmi_estimate_with(&y, &s, &x, &opts(0))?;
    let cmi_yx_s = cmi_estimate_with(&y, &x, &s, &opts(1))?;
    Ok(FusionDecision {
        fuse: cmi_ys_x.permutation_pvalue < options.alpha && cmi_yx_s.permutation_pvalue < options.alpha,
        alpha: options.alpha,
        cmi_ys_x,
        cmi_yx_s,
    })
}
