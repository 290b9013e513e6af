//! Hyperparameter grid and selection by mean validation accuracy.

use crate::error::{Error, Result};
use crate::models::ArchitectureSpec;
use crate::par;

/// One point of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperPoint {
    pub learning_rate: f64,
    pub dropout: f64,
    /// Dense embedding or LSTM hidden size.
    pub embedding_size: usize,
    pub filters: usize,
    pub layers: usize,
}

impl HyperPoint {
    pub fn apply(&self, base: &ArchitectureSpec) -> ArchitectureSpec {
        ArchitectureSpec {
            dropout: self.dropout,
            hidden_size: self.embedding_size,
            filters: self.filters,
            num_conv_layers: self.layers,
            ..base.clone()
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "lr={} dropout={} embedding={} filters={} layers={}",
            self.learning_rate, self.dropout, self.embedding_size, self.filters, self.layers
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
    pub embedding_sizes: Vec<usize>,
    pub filter_counts: Vec<usize>,
    pub layer_counts: Vec<usize>,
    /// Evaluate at most this many points, in canonical order.
    pub max_points: Option<usize>,
}

impl HyperGrid {
    /// Three learning rates, three dropout rates and three embedding sizes,
    /// with the filter and layer counts of `base`.
    pub fn default_for(base: &ArchitectureSpec) -> Self {
        HyperGrid {
            learning_rates: vec![0.001, 0.002, 0.003],
            dropouts: vec![0.0, 0.25, 0.5],
            embedding_sizes: vec![16, 32, 64],
            filter_counts: vec![base.filters],
            layer_counts: vec![base.num_conv_layers],
            max_points: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check<T: PartialOrd + std::fmt::Display + Copy>(field: &str, v: &[T], lo: T, hi: T) -> Result<()> {
            if v.is_empty() {
                return Err(Error::config(field, "list is empty"));
            }
            if let Some(x) = v.iter().find(|&&x| !(lo <= x && x <= hi)) {
                return Err(Error::config(field, format!("{x} outside [{lo}, {hi}]")));
            }
            Ok(())
        }
        check("learning_rates", &self.learning_rates, 0.001, 0.003)?;
        check("dropouts", &self.dropouts, 0.0, 0.5)?;
        check("embedding_sizes", &self.embedding_sizes, 16, 64)?;
        check("filter_counts", &self.filter_counts, 3, 13)?;
        check("layer_counts", &self.layer_counts, 1, 10)?;
        if self.max_points == Some(0) {
            return Err(Error::config("max_points", "must be positive"));
        }
        Ok(())
    }

    /// Grid points in canonical order: ascending learning rate, then dropout,
    /// embedding size, filters and layers. Earlier points win ties.
    pub fn points(&self) -> Vec<HyperPoint> {
        fn sorted<T: PartialOrd + Copy>(v: &[T]) -> Vec<T> {
            let mut v = v.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite grid values"));
            v.dedup_by(|a, b| a == b);
            v
        }
        let mut out = Vec::new();
        for &learning_rate in &sorted(&self.learning_rates) {
            for &dropout in &sorted(&self.dropouts) {
                for &embedding_size in &sorted(&self.embedding_sizes) {
                    for &filters in &sorted(&self.filter_counts) {
                        for &layers in &sorted(&self.layer_counts) {
                            out.push(HyperPoint {
                                learning_rate,
                                dropout,
                                embedding_size,
                                filters,
                                layers,
                            });
                        }
                    }
                }
            }
        }
        if let Some(cap) = self.max_points {
            out.truncate(cap);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub best: HyperPoint,
    pub best_score: f64,
    /// Every point with its mean score, in canonical order.
    pub scores: Vec<(HyperPoint, f64)>,
}

/// Score every point as the mean of `evaluate(point_index, point, round)`
/// over `rounds` rounds and pick the highest; ties go to the earlier point.
pub fn grid_search_with<F>(points: &[HyperPoint], rounds: usize, evaluate: F) -> Result<GridOutcome>
where
    F: Fn(usize, &HyperPoint, usize) -> Result<f64> + Sync + Send,
{
    if points.is_empty() {
        return Err(Error::config("grid", "no grid points to evaluate"));
    }
    if rounds == 0 {
        return Err(Error::config("inner", "need at least one round"));
    }
    let raw = par::try_map_indexed(points.len() * rounds, |k| {
        let (p, r) = (k / rounds, k % rounds);
        evaluate(p, &points[p], r)
    })?;
    let scores: Vec<(HyperPoint, f64)> = points
        .iter()
        .zip(raw.chunks(rounds))
        .map(|(p, chunk)| (p.clone(), chunk.iter().sum::<f64>() / rounds as f64))
        .collect();
    let mut best = 0;
    for (i, (_, s)) in scores.iter().enumerate() {
        if *s > scores[best].1 {
            best = i;
        }
    }
    Ok(GridOutcome {
        best: scores[best].0.clone(),
        best_score: scores[best].1,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_27_points_in_order() {
        let g = HyperGrid::default_for(&ArchitectureSpec::default());
        g.validate().unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 27);
        assert_eq!(pts[0].learning_rate, 0.001);
        assert_eq!(pts[0].dropout, 0.0);
        assert_eq!(pts[0].embedding_size, 16);
        assert_eq!(pts[1].embedding_size, 32);
        assert_eq!(pts[3].dropout, 0.25);
        assert_eq!(pts[9].learning_rate, 0.002);
    }

    #[test]
    fn ties_prefer_lower_learning_rate_then_dropout_then_size() {
        let mut g = HyperGrid::default_for(&ArchitectureSpec::default());
        g.learning_rates = vec![0.003, 0.001];
        let pts = g.points();
        let out = grid_search_with(&pts, 2, |_, _, _| Ok(0.75)).unwrap();
        assert_eq!(out.best, pts[0]);
        assert_eq!(out.best.learning_rate, 0.001);
        assert_eq!((out.best.dropout, out.best.embedding_size), (0.0, 16));
    }

    #[test]
    fn mean_over_rounds_decides() {
        let g = HyperGrid::default_for(&ArchitectureSpec::default());
        let pts = g.points();
        let out = grid_search_with(&pts, 3, |i, _, r| Ok(if i == 5 && r != 1 { 0.9 } else { 0.5 })).unwrap();
        assert_eq!(out.best, pts[5]);
        assert!((out.best_score - (0.9 + 0.5 + 0.9) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_values_name_the_field() {
        let mut g = HyperGrid::default_for(&ArchitectureSpec::default());
        g.learning_rates.push(0.01);
        assert!(matches!(g.validate(), Err(Error::InvalidConfig { field, .. }) if field == "learning_rates"));
    }
}
