use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use shortfuse::fusion::fusion_recommended_with;
use shortfuse::layers::gradient_audit;
use shortfuse::models::{load_checkpoint, save_checkpoint, Model};
use shortfuse::pipeline::{
    evaluate, load_dataset, nested_split, run_protocol, synth_dataset, train as fit, write_dataset, Dataset,
    LoadOptions, TrainSettings,
};
use shortfuse::rng::derive_seed;
use shortfuse::{par, Error, Result};

use crate::config::{DataSource, ExperimentConfig};
use crate::Common;

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: e,
    })
}

fn configure_threads(jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(Error::InvalidConfig {
            field: "jobs".into(),
            detail: "must be at least 1".into(),
        });
    }
    par::set_parallel(jobs > 1);
    if jobs > 1 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    Ok(())
}

/// Load the configuration, apply command-line overrides, create the output
/// directory and record the resolved configuration in it.
fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                context: format!("reading {}", path.display()),
                source: e,
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    configure_threads(cfg.jobs)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::Io {
        context: format!("creating {}", cfg.out.display()),
        source: e,
    })?;
    write(&cfg.out.join("resolved.cfg"), &cfg.render())?;
    Ok(cfg)
}

fn load(cfg: &ExperimentConfig, require_labels: bool, num_classes: usize) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synth(spec) => Ok(synth_dataset(spec)?.dataset),
        DataSource::Files {
            covariates,
            series,
            labels,
            t,
        } => {
            if require_labels && labels.is_none() {
                return Err(Error::InvalidConfig {
                    field: "data.labels".into(),
                    detail: "this command needs a labels file".into(),
                });
            }
            let options = LoadOptions {
                t: *t,
                num_classes: Some(num_classes),
            };
            load_dataset(covariates, series, labels.as_deref(), &options)
        }
    }
}

fn confusion_text(confusion: &[Vec<usize>]) -> String {
    confusion
        .iter()
        .map(|r| r.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn synth(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    let DataSource::Synth(spec) = &cfg.data else {
        return Err(Error::InvalidConfig {
            field: "data.source".into(),
            detail: "`synth` needs a synthetic data source".into(),
        });
    };
    let syn = synth_dataset(spec)?;
    write_dataset(&syn.dataset, &cfg.out)?;
    let t = &syn.truth;
    let truth = format!(
        "rule = {}\ngroup_index = {}\nmax_threshold = {}\nmean_threshold = {}\n",
        t.rule.as_str(),
        t.group_index,
        t.max_threshold,
        t.mean_threshold
    );
    write(&cfg.out.join("truth.txt"), &truth)?;
    println!("wrote {} samples to {}", syn.dataset.len(), cfg.out.display());
    Ok(())
}

pub fn fusion_test(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    let data = load(&cfg, true, cfg.model.num_classes)?;
    let decision = fusion_recommended_with(&data, &cfg.fusion)?;
    let text = decision.render();
    write(&cfg.out.join("fusion.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn train(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    let data = load(&cfg, true, cfg.model.num_classes)?;
    let seed = cfg.seed();
    let plan = nested_split(data.len(), 1, 1, seed)?;
    let split = &plan.outer[0];
    let stats = data.fit_normalization(&split.train)?;
    let data = data.normalized(&stats);
    let (n, t, d) = data.dims();
    let mut model = Model::build(&cfg.model, n, t, d, derive_seed(seed, &[3, 0]))?;
    let settings = TrainSettings {
        learning_rate: cfg.learning_rate,
        epochs: cfg.protocol.epochs,
        batch_size: cfg.protocol.batch_size,
    };
    let history = fit(
        &mut model,
        &data.subset(&split.train),
        &settings,
        derive_seed(seed, &[4]),
    )?;
    let eval = evaluate(&model, &data.subset(&split.test))?;
    save_checkpoint(&cfg.out.join("model.ckpt"), &model, Some(&stats))?;
    let mut loss = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        let _ = writeln!(loss, "{e},{l}");
    }
    write(&cfg.out.join("loss.csv"), &loss)?;
    let metrics = format!(
        "train_size = {}\ntest_size = {}\naccuracy = {}\nconfusion = {}\n",
        split.train.len(),
        split.test.len(),
        eval.accuracy,
        confusion_text(&eval.confusion)
    );
    write(&cfg.out.join("metrics.txt"), &metrics)?;
    print!("{metrics}");
    Ok(())
}

pub fn protocol(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    let data = load(&cfg, true, cfg.model.num_classes)?;
    let start = Instant::now();
    let outcome = run_protocol(&data, &cfg.model, &cfg.grid, &cfg.protocol, None)?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = &outcome.report;
    write(&cfg.out.join("report.txt"), &report.render())?;
    let mut table = String::from("iteration,validation_accuracy,test_accuracy\n");
    for it in &report.iterations {
        let _ = writeln!(table, "{},{},{}", it.index, it.validation_accuracy, it.accuracy);
    }
    write(&cfg.out.join("iterations.csv"), &table)?;
    write(
        &cfg.out.join("timing.txt"),
        &format!("wall_clock_seconds = {elapsed:.3}\n"),
    )?;
    for (i, fitted) in outcome.models.iter().enumerate() {
        save_checkpoint(
            &cfg.out.join(format!("model_{i}.ckpt")),
            &fitted.model,
            Some(&fitted.normalization),
        )?;
    }
    println!(
        "{} {}: mean test accuracy {:.4} (sd {:.4}) over {} outer iterations",
        cfg.model.family,
        cfg.model.fusion,
        report.mean_accuracy(),
        report.std_accuracy(),
        report.iterations.len()
    );
    Ok(())
}

pub fn gradcheck(common: &Common, runs: usize) -> Result<()> {
    let cfg = resolve(common)?;
    if runs == 0 {
        return Err(Error::InvalidConfig {
            field: "runs".into(),
            detail: "must be at least 1".into(),
        });
    }
    let audit = gradient_audit(cfg.seed(), runs)?;
    let mut text = String::new();
    let mut failed = Vec::new();
    for (kind, reports) in &audit {
        let passed = reports.iter().filter(|r| r.passed).count();
        let worst = reports.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
        let _ = writeln!(
            text,
            "{}: {passed}/{} passed, max relative error {worst:.3e}",
            kind.name(),
            reports.len()
        );
        if passed < reports.len() {
            failed.push(kind.name());
        }
    }
    write(&cfg.out.join("gradcheck.txt"), &text)?;
    print!("{text}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Invariant(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}

pub fn predict(common: &Common, checkpoint: &Path) -> Result<()> {
    let cfg = resolve(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let model = ckpt.model;
    let data = load(&cfg, false, model.spec().num_classes)?;
    if data.dims() != model.dims() {
        return Err(Error::Data {
            file: None,
            line: None,
            detail: format!(
                "data has (n, t, d) = {:?} but the checkpoint expects {:?}",
                data.dims(),
                model.dims()
            ),
        });
    }
    let data = match &ckpt.normalization {
        Some(stats) => data.normalized(stats),
        None => data,
    };
    let mut out = String::from("id,predicted");
    for k in 0..model.spec().num_classes {
        let _ = write!(out, ",p{k}");
    }
    out.push('\n');
    let mut correct = 0;
    for s in &data.samples {
        let p = model.predict(s)?;
        let class = shortfuse::layers::argmax(&p);
        correct += (class == s.y) as usize;
        let _ = write!(out, "{},{class}", s.id);
        for v in &p {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write(&cfg.out.join("predictions.csv"), &out)?;
    let has_labels = match &cfg.data {
        DataSource::Files { labels, .. } => labels.is_some(),
        DataSource::Synth(_) => true,
    };
    println!("scored {} samples", data.len());
    if has_labels {
        println!("accuracy = {}", correct as f64 / data.len() as f64);
    }
    Ok(())
}
