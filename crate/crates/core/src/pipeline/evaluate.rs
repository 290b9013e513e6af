use super::dataset::Sample;
use crate::error::{Error, Result};
use crate::models::Network;
use crate::par;

/// Anything that assigns a class to a sample.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    fn classify(&self, sample: &Sample) -> Result<usize>;
}

impl<N: Network> Classifier for N {
    fn num_classes(&self) -> usize {
        Network::num_classes(self)
    }

    fn classify(&self, sample: &Sample) -> Result<usize> {
        Network::classify(self, sample)
    }
}

/// Predicts the most frequent training class (lowest index on ties).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MajorityClass {
    pub class: usize,
    pub num_classes: usize,
}

impl MajorityClass {
    pub fn fit(samples: &[&Sample], num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::data("cannot fit a majority baseline on no samples"));
        }
        let mut counts = vec![0usize; num_classes];
        for s in samples {
            counts[s.y] += 1;
        }
        let best = counts.iter().copied().max().unwrap_or(0);
        let class = counts.iter().position(|&c| c == best).unwrap_or(0);
        Ok(MajorityClass { class, num_classes })
    }
}

impl Classifier for MajorityClass {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn classify(&self, _: &Sample) -> Result<usize> {
        Ok(self.class)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, test: &[&Sample]) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::data("test set is empty"));
    }
    let k = model.num_classes();
    let predictions = par::try_map_indexed(test.len(), |i| model.classify(test[i]))?;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0;
    for (s, &p) in test.iter().zip(&predictions) {
        if s.y >= k {
            return Err(Error::data(format!("sample `{}` has label {} >= {k}", s.id, s.y)));
        }
        confusion[s.y][p] += 1;
        correct += (s.y == p) as usize;
    }
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::CovariateVector;
    use crate::numeric::Tensor;

    fn sample(id: &str, y: usize) -> Sample {
        Sample {
            id: id.into(),
            s: CovariateVector::new(vec![0.0]),
            x: Tensor::row(&[0.0]),
            y,
        }
    }

    #[test]
    fn majority_and_confusion() {
        let data = [sample("a", 1), sample("b", 1), sample("c", 0)];
        let refs: Vec<&Sample> = data.iter().collect();
        let m = MajorityClass::fit(&refs, 2).unwrap();
        assert_eq!(m.class, 1);
        let e = evaluate(&m, &refs).unwrap();
        assert!((e.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.confusion, vec![vec![0, 1], vec![0, 2]]);
        assert_eq!(e.total(), 3);
    }

    #[test]
    fn empty_test_set() {
        let m = MajorityClass {
            class: 0,
            num_classes: 2,
        };
        assert!(evaluate(&m, &[]).is_err());
    }
}
