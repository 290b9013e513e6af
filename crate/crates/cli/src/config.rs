//! Experiment configuration: line-oriented `key = value` text with
//! `[section]` headers and `#` comments. Lists are comma separated.
//!
//! ```text
//! [data]
//! source = synth
//! samples = 2000
//!
//! [model]
//! family = cnn
//! fusion = shortfuse
//!
//! [run]
//! seed = 7
//! ```
//!
//! Every key is optional; missing keys take their defaults. Unknown sections
//! and keys are errors. [`ExperimentConfig::render`] writes every key, and
//! parsing the rendered text gives back an identical configuration.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use shortfuse::fusion::FusionTestOptions;
use shortfuse::models::ArchitectureSpec;
use shortfuse::pipeline::{HyperGrid, LabelRule, ProtocolSettings, SynthSpec};
use shortfuse::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synth(SynthSpec),
    Files {
        covariates: PathBuf,
        series: PathBuf,
        labels: Option<PathBuf>,
        t: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub model: ArchitectureSpec,
    pub grid: HyperGrid,
    /// Outer and inner iterations, epochs, batch size and the master seed.
    pub protocol: ProtocolSettings,
    /// Learning rate for the single-split `train` command.
    pub learning_rate: f64,
    /// Fusion-test options; the seed is taken from the master seed.
    pub fusion: FusionTestOptions,
    pub jobs: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ArchitectureSpec::default();
        let mut cfg = ExperimentConfig {
            data: DataSource::Synth(SynthSpec::default()),
            grid: HyperGrid::default_for(&model),
            model,
            protocol: ProtocolSettings::default(),
            learning_rate: 0.002,
            fusion: FusionTestOptions::default(),
            jobs: 1,
            out: PathBuf::from("shortfuse-out"),
        };
        cfg.set_seed(cfg.protocol.seed);
        cfg
    }
}

fn invalid(field: &str, detail: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.to_string(),
        detail: detail.into(),
    }
}

/// Parsed `(section, key) -> (value, line)` pairs, consumed as they are read.
struct Entries(BTreeMap<(String, String), (String, usize)>);

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                section = name
                    .strip_suffix(']')
                    .ok_or_else(|| invalid("config", format!("line {line}: unterminated section header")))?
                    .trim()
                    .to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| invalid("config", format!("line {line}: expected `key = value`")))?;
            let key = key.trim().to_string();
            if section.is_empty() {
                return Err(invalid(&key, format!("line {line}: key outside any section")));
            }
            let field = format!("{section}.{key}");
            if map
                .insert((section.clone(), key), (value.trim().to_string(), line))
                .is_some()
            {
                return Err(invalid(&field, format!("line {line}: duplicate key")));
            }
        }
        Ok(Entries(map))
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.0.remove(&(section.to_string(), key.to_string()))
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        let Some((v, line)) = self.raw(section, key) else {
            return Ok(None);
        };
        v.parse()
            .map(Some)
            .map_err(|_| invalid(&format!("{section}.{key}"), format!("line {line}: cannot parse `{v}`")))
    }

    fn set<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(section, key)? {
            *slot = v;
        }
        Ok(())
    }

    fn set_list<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut Vec<T>) -> Result<()> {
        let Some((v, line)) = self.raw(section, key) else {
            return Ok(());
        };
        *slot = v
            .split(',')
            .map(|item| {
                let item = item.trim();
                item.parse().map_err(|_| {
                    invalid(
                        &format!("{section}.{key}"),
                        format!("line {line}: cannot parse `{item}`"),
                    )
                })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.0.into_iter().next() {
            Some(((section, key), (_, line))) => Err(invalid(
                &format!("{section}.{key}"),
                format!("line {line}: unknown key"),
            )),
            None => Ok(()),
        }
    }
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let mut c = ExperimentConfig::default();

        let source: String = e.get("data", "source")?.unwrap_or_else(|| "synth".into());
        c.data = match source.as_str() {
            "synth" => {
                let mut s = SynthSpec::default();
                e.set("data", "samples", &mut s.num_samples)?;
                e.set("data", "n", &mut s.n)?;
                e.set("data", "t", &mut s.t)?;
                e.set("data", "d", &mut s.d)?;
                e.set("data", "noise", &mut s.noise)?;
                e.set("data", "seed", &mut s.seed)?;
                let rule: Option<String> = e.get("data", "rule")?;
                if let Some(r) = rule {
                    s.rule = r.parse::<LabelRule>()?;
                }
                DataSource::Synth(s)
            }
            "files" => {
                let covariates = e.get::<PathBuf>("data", "covariates")?;
                let series = e.get::<PathBuf>("data", "series")?;
                let (Some(covariates), Some(series)) = (covariates, series) else {
                    return Err(invalid("data", "file sources need `covariates` and `series`"));
                };
                DataSource::Files {
                    covariates,
                    series,
                    labels: e.get("data", "labels")?,
                    t: e.get("data", "t")?,
                }
            }
            other => return Err(invalid("data.source", format!("unknown source `{other}`"))),
        };

        let m = &mut c.model;
        e.set("model", "family", &mut m.family)?;
        e.set("model", "fusion", &mut m.fusion)?;
        e.set("model", "layers", &mut m.num_conv_layers)?;
        e.set("model", "filters", &mut m.filters)?;
        e.set("model", "kernel_width", &mut m.kernel_width)?;
        e.set("model", "pool_window", &mut m.pool_window)?;
        e.set("model", "hidden_size", &mut m.hidden_size)?;
        e.set("model", "dropout", &mut m.dropout)?;
        e.set("model", "covariate_dropout", &mut m.covariate_dropout)?;
        e.set("model", "num_classes", &mut m.num_classes)?;
        e.set("model", "hybrid_all_layers", &mut m.hybrid_all_layers)?;

        c.grid = HyperGrid::default_for(&c.model);
        let g = &mut c.grid;
        e.set_list("grid", "learning_rates", &mut g.learning_rates)?;
        e.set_list("grid", "dropouts", &mut g.dropouts)?;
        e.set_list("grid", "embedding_sizes", &mut g.embedding_sizes)?;
        e.set_list("grid", "filter_counts", &mut g.filter_counts)?;
        e.set_list("grid", "layer_counts", &mut g.layer_counts)?;
        g.max_points = e.get("grid", "max_points")?;

        let p = &mut c.protocol;
        e.set("protocol", "outer", &mut p.outer)?;
        e.set("protocol", "inner", &mut p.inner)?;
        e.set("protocol", "epochs", &mut p.epochs)?;
        e.set("protocol", "batch_size", &mut p.batch_size)?;
        e.set("train", "learning_rate", &mut c.learning_rate)?;

        let f = &mut c.fusion;
        e.set("fusion", "k", &mut f.k)?;
        e.set("fusion", "alpha", &mut f.alpha)?;
        e.set("fusion", "permutations", &mut f.permutations)?;
        e.set("fusion", "components", &mut f.components)?;

        e.set("run", "seed", &mut c.protocol.seed)?;
        e.set("run", "jobs", &mut c.jobs)?;
        e.set("run", "out", &mut c.out)?;
        e.finish()?;
        c.fusion.seed = c.protocol.seed;
        Ok(c)
    }

    pub fn seed(&self) -> u64 {
        self.protocol.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.protocol.seed = seed;
        self.fusion.seed = seed;
    }

    /// Every key, defaults included.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSource::Synth(d) => {
                kv("[data]\nsource", &"synth");
                kv("samples", &d.num_samples);
                kv("n", &d.n);
                kv("t", &d.t);
                kv("d", &d.d);
                kv("noise", &d.noise);
                kv("seed", &d.seed);
                kv("rule", &d.rule.as_str());
            }
            DataSource::Files {
                covariates,
                series,
                labels,
                t,
            } => {
                kv("[data]\nsource", &"files");
                kv("covariates", &covariates.display());
                kv("series", &series.display());
                if let Some(l) = labels {
                    kv("labels", &l.display());
                }
                if let Some(t) = t {
                    kv("t", t);
                }
            }
        }
        let m = &self.model;
        kv("\n[model]\nfamily", &m.family);
        kv("fusion", &m.fusion);
        kv("layers", &m.num_conv_layers);
        kv("filters", &m.filters);
        kv("kernel_width", &m.kernel_width);
        kv("pool_window", &m.pool_window);
        kv("hidden_size", &m.hidden_size);
        kv("dropout", &m.dropout);
        kv("covariate_dropout", &m.covariate_dropout);
        kv("num_classes", &m.num_classes);
        kv("hybrid_all_layers", &m.hybrid_all_layers);
        let g = &self.grid;
        kv("\n[grid]\nlearning_rates", &list(&g.learning_rates));
        kv("dropouts", &list(&g.dropouts));
        kv("embedding_sizes", &list(&g.embedding_sizes));
        kv("filter_counts", &list(&g.filter_counts));
        kv("layer_counts", &list(&g.layer_counts));
        if let Some(cap) = g.max_points {
            kv("max_points", &cap);
        }
        let p = &self.protocol;
        kv("\n[protocol]\nouter", &p.outer);
        kv("inner", &p.inner);
        kv("epochs", &p.epochs);
        kv("batch_size", &p.batch_size);
        kv("\n[train]\nlearning_rate", &self.learning_rate);
        let f = &self.fusion;
        kv("\n[fusion]\nk", &f.k);
        kv("alpha", &f.alpha);
        kv("permutations", &f.permutations);
        kv("components", &f.components);
        kv("\n[run]\nseed", &p.seed);
        kv("jobs", &self.jobs);
        kv("out", &self.out.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use shortfuse::models::{Family, FusionMode};

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = c.render();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::parse(&text).unwrap().render(), text);
    }

    #[test]
    fn custom_values_round_trip() {
        let mut c = ExperimentConfig::parse(
            "[data]\nsource = files\ncovariates = a.csv\nseries = b.csv\nt = 50\n\
             [model]\nfamily = lstm # comment\nfusion = latefuse\ndropout = 0.25\n\
             [grid]\nlearning_rates = 0.003, 0.001\nmax_points = 4\n[run]\nseed = 99\n",
        )
        .unwrap();
        assert_eq!(c.model.family, Family::Lstm);
        assert_eq!(c.model.fusion, FusionMode::LateFuse);
        assert_eq!(c.grid.learning_rates, vec![0.003, 0.001]);
        assert_eq!(c.seed(), 99);
        assert_eq!(c.fusion.seed, 99);
        c.learning_rate = 0.1 + 0.2;
        c.set_seed(u64::MAX);
        assert_eq!(ExperimentConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_key() {
        let err = ExperimentConfig::parse("[model]\nfilters = many\n").unwrap_err();
        assert!(
            matches!(err, Error::InvalidConfig { ref field, .. } if field == "model.filters"),
            "{err}"
        );
        let err = ExperimentConfig::parse("[model]\ncolour = red\n").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref field, .. } if field == "model.colour"));
        let err = ExperimentConfig::parse("[run]\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        assert!(ExperimentConfig::parse("seed = 1\n").is_err());
    }
}
