use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::rng::rng_from;

/// Per-sample structured covariates, constant along the temporal domain.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateVector(Vec<f64>);

impl CovariateVector {
    pub fn new(values: Vec<f64>) -> Self {
        CovariateVector(values)
    }

    pub fn zeros(d: usize) -> Self {
        CovariateVector(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `d x 1` column.
    pub fn column(&self) -> Tensor {
        Tensor::column(&self.0)
    }

    /// `1 x d` row.
    pub fn row(&self) -> Tensor {
        Tensor::row(&self.0)
    }
}

impl From<Vec<f64>> for CovariateVector {
    fn from(v: Vec<f64>) -> Self {
        CovariateVector(v)
    }
}

/// Z-score statistics for covariates, fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl CovariateStats {
    /// Fit means and population standard deviations. Constant columns get unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a CovariateVector>) -> Result<Self> {
        let rows: Vec<&CovariateVector> = rows.into_iter().collect();
        let d = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::data("cannot fit covariate statistics on zero samples"))?;
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::data("covariate vectors of differing length"));
        }
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r.0[j]).sum::<f64>() / n).collect();
        let stds = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r.0[j] - means[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(CovariateStats { means, stds })
    }

    pub fn identity(d: usize) -> Self {
        CovariateStats {
            means: vec![0.0; d],
            stds: vec![1.0; d],
        }
    }

    pub fn apply(&self, s: &CovariateVector) -> CovariateVector {
        CovariateVector(
            s.0.iter()
                .zip(self.means.iter().zip(&self.stds))
                .map(|(v, (m, sd))| (v - m) / sd)
                .collect(),
        )
    }
}

/// Append `d` constant rows to an `n x t` series, row `j` holding `s[j]`.
pub fn interleave_covariates(x: &Tensor, s: &CovariateVector) -> Tensor {
    if s.is_empty() {
        return x.clone();
    }
    let (n, t) = x.dims2().expect("series must be a matrix");
    let mut data = x.data().to_vec();
    for &v in s.as_slice() {
        data.extend(std::iter::repeat_n(v, t));
    }
    Tensor::new(vec![n + s.len(), t], data).expect("interleaved shape")
}

/// Binary `out_channels x d` mask with independent Bernoulli(1 - rate) entries.
pub fn covariate_dropout_mask(d: usize, out_channels: usize, rate: f64, seed: u64) -> Result<Tensor> {
    if !(0.0..=0.5).contains(&rate) {
        return Err(Error::config("covariate_dropout", format!("{rate} outside [0, 0.5]")));
    }
    if d == 0 || out_channels == 0 {
        return Err(Error::config(
            "covariate_dropout",
            "mask needs d >= 1 and out_channels >= 1",
        ));
    }
    if rate == 0.0 {
        return Ok(Tensor::ones(vec![out_channels, d]));
    }
    let mut rng = rng_from(seed);
    let data = (0..out_channels * d)
        .map(|_| if rng.random_bool(1.0 - rate) { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(vec![out_channels, d], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_examples() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(interleave_covariates(&x, &CovariateVector::new(vec![])), x);
        let y = interleave_covariates(&x, &CovariateVector::new(vec![7.0]));
        assert_eq!(
            y,
            Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![7.0, 7.0, 7.0]]).unwrap()
        );
        let x2 = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let y2 = interleave_covariates(&x2, &CovariateVector::new(vec![0.5, -2.0]));
        assert_eq!(y2.shape(), &[4, 2]);
        assert_eq!(y2.row_slice(2), &[0.5, 0.5]);
        assert_eq!(y2.row_slice(3), &[-2.0, -2.0]);
        assert_eq!(y2.row_slice(1), &[3.0, 4.0]);
    }

    #[test]
    fn dropout_mask_properties() {
        let ones = covariate_dropout_mask(4, 3, 0.0, 1).unwrap();
        assert!(ones.data().iter().all(|&v| v == 1.0));
        let m = covariate_dropout_mask(100, 100, 0.5, 11).unwrap();
        let frac = m.data().iter().sum::<f64>() / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(m, covariate_dropout_mask(100, 100, 0.5, 11).unwrap());
        assert!(covariate_dropout_mask(4, 3, 0.6, 1).is_err());
        assert!(covariate_dropout_mask(4, 3, -0.1, 1).is_err());
    }

    #[test]
    fn stats_use_population_std() {
        let rows = [
            CovariateVector::new(vec![1.0, 5.0]),
            CovariateVector::new(vec![3.0, 5.0]),
        ];
        let st = CovariateStats::fit(&rows).unwrap();
        assert_eq!(st.means, vec![2.0, 5.0]);
        assert_eq!(st.stds, vec![1.0, 1.0]);
        assert_eq!(st.apply(&rows[0]).as_slice(), &[-1.0, 0.0]);
    }
}
