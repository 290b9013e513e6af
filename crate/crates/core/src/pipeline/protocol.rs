//! The nested evaluation protocol: `M` outer test splits, each with a grid
//! search over `N` inner validation splits, then a final fit on the whole
//! training pool and a single evaluation on the held-out test set.

use std::fmt::Write as _;
use std::sync::Mutex;

use super::dataset::{Dataset, Sample};
use super::evaluate::evaluate;
use super::grid::{grid_search_with, HyperGrid, HyperPoint};
use super::split::{nested_split, SplitPlan};
use super::train::{train, TrainSettings, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::layers::CovariateStats;
use crate::models::{ArchitectureSpec, Model};
use crate::par;
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSettings {
    /// Outer iterations `M`.
    pub outer: usize,
    /// Inner rounds `N`.
    pub inner: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        ProtocolSettings {
            outer: 5,
            inner: 3,
            epochs: 100,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Normalization,
    InnerTrain,
    Validation,
    FinalTrain,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessEvent {
    pub outer: usize,
    pub phase: Phase,
    pub indices: Vec<usize>,
}

/// Records which samples every phase of every outer iteration reads.
#[derive(Debug, Default)]
pub struct AccessAudit {
    events: Mutex<Vec<AccessEvent>>,
}

impl AccessAudit {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, outer: usize, phase: Phase, indices: &[usize]) {
        self.events.lock().expect("audit lock").push(AccessEvent {
            outer,
            phase,
            indices: indices.to_vec(),
        });
    }

    pub fn events(&self) -> Vec<AccessEvent> {
        self.events.lock().expect("audit lock").clone()
    }

    /// Number of reads of an outer iteration's test samples by any phase
    /// other than its final test evaluation.
    pub fn test_leaks(&self, plan: &SplitPlan) -> usize {
        self.events()
            .iter()
            .filter(|e| e.phase != Phase::Test)
            .map(|e| {
                let test = &plan.outer[e.outer].test;
                e.indices.iter().filter(|i| test.binary_search(i).is_ok()).count()
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub index: usize,
    pub model_seed: u64,
    pub selected: HyperPoint,
    pub validation_accuracy: f64,
    pub test_size: usize,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub arch: ArchitectureSpec,
    pub settings: ProtocolSettings,
    pub num_samples: usize,
    pub iterations: Vec<IterationReport>,
}

impl ExperimentReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.accuracy).collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        let a = self.accuracies();
        a.iter().sum::<f64>() / a.len() as f64
    }

    /// Sample standard deviation of the test accuracies (0 for one iteration).
    pub fn std_accuracy(&self) -> f64 {
        let a = self.accuracies();
        if a.len() < 2 {
            return 0.0;
        }
        let m = self.mean_accuracy();
        (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (a.len() - 1) as f64).sqrt()
    }

    /// Plain-text report. Identical inputs give byte-identical output.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let a = &self.arch;
        let p = &self.settings;
        let _ = writeln!(s, "family = {}", a.family);
        let _ = writeln!(s, "fusion = {}", a.fusion);
        let _ = writeln!(s, "samples = {}", self.num_samples);
        let _ = writeln!(s, "outer = {}", p.outer);
        let _ = writeln!(s, "inner = {}", p.inner);
        let _ = writeln!(s, "epochs = {}", p.epochs);
        let _ = writeln!(s, "batch_size = {}", p.batch_size);
        let _ = writeln!(s, "seed = {}", p.seed);
        for it in &self.iterations {
            let _ = writeln!(s, "\n[iteration {}]", it.index);
            let _ = writeln!(s, "model_seed = {}", it.model_seed);
            let _ = writeln!(s, "selected = {}", it.selected.describe());
            let _ = writeln!(s, "validation_accuracy = {}", it.validation_accuracy);
            let _ = writeln!(s, "test_size = {}", it.test_size);
            let _ = writeln!(s, "accuracy = {}", it.accuracy);
            let rows: Vec<String> = it
                .confusion
                .iter()
                .map(|r| r.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
                .collect();
            let _ = writeln!(s, "confusion = {}", rows.join("; "));
        }
        let _ = writeln!(s, "\n[summary]");
        let _ = writeln!(s, "mean_accuracy = {}", self.mean_accuracy());
        let _ = writeln!(s, "std_accuracy = {}", self.std_accuracy());
        s
    }
}

/// A fitted model from one outer iteration.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub model: Model,
    pub normalization: CovariateStats,
}

#[derive(Clone, Debug)]
pub struct ProtocolOutcome {
    pub report: ExperimentReport,
    pub plan: SplitPlan,
    pub models: Vec<FittedModel>,
}

struct Context<'a> {
    dataset: &'a Dataset,
    arch: &'a ArchitectureSpec,
    settings: &'a ProtocolSettings,
    audit: Option<&'a AccessAudit>,
}

impl Context<'_> {
    fn touch(&self, outer: usize, phase: Phase, indices: &[usize]) {
        if let Some(a) = self.audit {
            a.record(outer, phase, indices);
        }
    }

    fn normalized(&self, outer: usize, fit_on: &[usize]) -> Result<Dataset> {
        self.touch(outer, Phase::Normalization, fit_on);
        let stats = self.dataset.fit_normalization(fit_on)?;
        Ok(self.dataset.normalized(&stats))
    }

    fn fit(&self, spec: &ArchitectureSpec, lr: f64, samples: &[&Sample], seed: u64) -> Result<Model> {
        let (n, t, d) = self.dataset.dims();
        let mut model = Model::build(spec, n, t, d, seed)?;
        let settings = TrainSettings {
            learning_rate: lr,
            epochs: self.settings.epochs,
            batch_size: self.settings.batch_size,
        };
        train(&mut model, samples, &settings, derive_seed(seed, &[0]))?;
        Ok(model)
    }

    fn outer_iteration(
        &self,
        plan: &SplitPlan,
        grid: &[HyperPoint],
        i: usize,
    ) -> Result<(IterationReport, FittedModel)> {
        let split = &plan.outer[i];
        let master = self.settings.seed;
        let inner_data = split
            .inner
            .iter()
            .map(|r| self.normalized(i, &r.train))
            .collect::<Result<Vec<_>>>()?;
        let search = grid_search_with(grid, split.inner.len(), |p, point, r| {
            let round = &split.inner[r];
            let data = &inner_data[r];
            self.touch(i, Phase::InnerTrain, &round.train);
            let seed = derive_seed(master, &[2, i as u64, p as u64, r as u64]);
            let model = self.fit(
                &point.apply(self.arch),
                point.learning_rate,
                &data.subset(&round.train),
                seed,
            )?;
            self.touch(i, Phase::Validation, &round.validation);
            Ok(evaluate(&model, &data.subset(&round.validation))?.accuracy)
        })?;
        log::info!(
            "outer {i}: selected {} (validation {:.4})",
            search.best.describe(),
            search.best_score
        );
        let final_data = self.normalized(i, &split.train)?;
        self.touch(i, Phase::FinalTrain, &split.train);
        let model_seed = derive_seed(master, &[3, i as u64]);
        let model = self.fit(
            &search.best.apply(self.arch),
            search.best.learning_rate,
            &final_data.subset(&split.train),
            model_seed,
        )?;
        self.touch(i, Phase::Test, &split.test);
        let eval = evaluate(&model, &final_data.subset(&split.test))?;
        log::info!("outer {i}: test accuracy {:.4}", eval.accuracy);
        let report = IterationReport {
            index: i,
            model_seed,
            selected: search.best,
            validation_accuracy: search.best_score,
            test_size: split.test.len(),
            accuracy: eval.accuracy,
            confusion: eval.confusion,
        };
        let normalization = final_data.normalization.expect("normalized dataset");
        Ok((report, FittedModel { model, normalization }))
    }
}

/// Run the full protocol on `dataset`.
///
/// Covariate statistics are fitted on each training set separately, so no
/// statistic ever sees validation or test samples. Outer iterations run in
/// parallel when enabled and are merged by index.
pub fn run_protocol(
    dataset: &Dataset,
    arch: &ArchitectureSpec,
    grid: &HyperGrid,
    settings: &ProtocolSettings,
    audit: Option<&AccessAudit>,
) -> Result<ProtocolOutcome> {
    arch.validate()?;
    grid.validate()?;
    if arch.num_classes != dataset.num_classes {
        return Err(Error::config(
            "num_classes",
            format!(
                "model has {} classes, data has {}",
                arch.num_classes, dataset.num_classes
            ),
        ));
    }
    if settings.epochs == 0 {
        return Err(Error::config("epochs", "must be positive"));
    }
    let points = grid.points();
    for p in &points {
        p.apply(arch).validate()?;
    }
    let plan = nested_split(dataset.len(), settings.outer, settings.inner, settings.seed)?;
    let ctx = Context {
        dataset,
        arch,
        settings,
        audit,
    };
    let results = par::try_map_indexed(settings.outer, |i| {
        ctx.outer_iteration(&plan, &points, i)
            .map_err(|e| e.context(&format!("outer iteration {i}")))
    })?;
    let (iterations, models) = results.into_iter().unzip();
    Ok(ProtocolOutcome {
        report: ExperimentReport {
            arch: arch.clone(),
            settings: settings.clone(),
            num_samples: dataset.len(),
            iterations,
        },
        plan,
        models,
    })
}
