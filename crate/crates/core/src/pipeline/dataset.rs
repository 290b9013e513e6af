use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::layers::{CovariateStats, CovariateVector};
use crate::numeric::Tensor;

/// One subject: covariates `s`, an `n x t` series `x` and a class label `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub s: CovariateVector,
    pub x: Tensor,
    pub y: usize,
}

impl Sample {
    pub fn series_dims(&self) -> (usize, usize) {
        self.x.dims2().expect("series is a matrix")
    }
}

/// A labelled collection of samples sharing `n`, `t` and `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub covariate_names: Vec<String>,
    pub sequence_names: Vec<String>,
    pub num_classes: usize,
    /// Statistics applied to the covariates, if they have been standardised.
    pub normalization: Option<CovariateStats>,
}

impl Dataset {
    pub fn new(
        samples: Vec<Sample>,
        covariate_names: Vec<String>,
        sequence_names: Vec<String>,
        num_classes: usize,
    ) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::data("dataset has no samples"))?;
        let (n, t) = first.series_dims();
        let d = first.s.len();
        let mut ids = HashSet::new();
        for s in &samples {
            if s.series_dims() != (n, t) || s.s.len() != d {
                return Err(Error::data(format!("sample `{}` has inconsistent dimensions", s.id)));
            }
            if s.y >= num_classes {
                return Err(Error::data(format!(
                    "sample `{}` label {} outside [0, {num_classes})",
                    s.id, s.y
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::data(format!("duplicate id `{}`", s.id)));
            }
        }
        if covariate_names.len() != d || sequence_names.len() != n {
            return Err(Error::data("name lists do not match data dimensions"));
        }
        Ok(Dataset {
            samples,
            covariate_names,
            sequence_names,
            num_classes,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(n, t, d)`
    pub fn dims(&self) -> (usize, usize, usize) {
        let (n, t) = self.samples[0].series_dims();
        (n, t, self.samples[0].s.len())
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for s in &self.samples {
            c[s.y] += 1;
        }
        c
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Sample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    /// Z-score statistics fitted on the given samples only.
    pub fn fit_normalization(&self, fit_indices: &[usize]) -> Result<CovariateStats> {
        CovariateStats::fit(fit_indices.iter().map(|&i| &self.samples[i].s))
    }

    /// Copy of the dataset with covariates standardised by `stats`.
    pub fn normalized(&self, stats: &CovariateStats) -> Dataset {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                s: stats.apply(&s.s),
                ..s.clone()
            })
            .collect();
        Dataset {
            samples,
            covariate_names: self.covariate_names.clone(),
            sequence_names: self.sequence_names.clone(),
            num_classes: self.num_classes,
            normalization: Some(stats.clone()),
        }
    }
}
