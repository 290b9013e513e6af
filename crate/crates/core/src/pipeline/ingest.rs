//! CSV ingestion.
//!
//! Three files keyed by `id`:
//!
//! * covariates: `id,<name>,<name>,...` with one row per subject;
//! * series: `id,sequence,v0,v1,...` with one row per subject and sequence;
//! * labels: `id,label` with integer class labels starting at 0.
//!
//! Without a labels file every sample gets label 0, which is enough for
//! scoring with a trained model.
//!
//! Sample order follows the covariates file. Sequences of a different
//! length are linearly resampled to the requested `t`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};

use super::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::layers::CovariateVector;
use crate::numeric::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadOptions {
    /// Target sequence length. `None` keeps the length found in the file.
    pub t: Option<usize>,
    /// Number of classes. `None` infers `max label + 1`.
    pub num_classes: Option<usize>,
}

fn data_err(file: &Path, line: Option<u64>, detail: impl Into<String>) -> Error {
    Error::Data {
        file: Some(file.to_path_buf()),
        line,
        detail: detail.into(),
    }
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, StringRecord)>,
}

fn read_table(path: &Path, required: &[&str]) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| data_err(path, Some(1), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for (k, name) in required.iter().enumerate() {
        if header.get(k).map(String::as_str) != Some(*name) {
            return Err(data_err(path, Some(1), format!("column {} must be `{name}`", k + 1)));
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            let detail = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("ragged row: {len} fields, expected {expected_len}")
                }
                _ => e.to_string(),
            };
            data_err(path, line, detail)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.get(0).is_none_or(str::is_empty) {
            return Err(data_err(path, Some(line), "missing id"));
        }
        rows.push((line, rec));
    }
    Ok(Table {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

fn parse_f64(table: &Table, line: u64, column: &str, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(data_err(
            &table.path,
            Some(line),
            format!("non-numeric value `{field}` in column `{column}`"),
        )),
    }
}

/// Linear interpolation onto `t` equally spaced points; endpoints are kept.
pub fn resample_linear(values: &[f64], t: usize) -> Vec<f64> {
    let len = values.len();
    if len == t || len == 0 {
        return values.to_vec();
    }
    if t == 1 || len == 1 {
        return vec![values[0]; t];
    }
    let step = (len - 1) as f64 / (t - 1) as f64;
    (0..t)
        .map(|i| {
            if i == t - 1 {
                return values[len - 1];
            }
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if frac == 0.0 {
                values[lo]
            } else {
                values[lo] + frac * (values[lo + 1] - values[lo])
            }
        })
        .collect()
}

pub fn load_dataset(covariates: &Path, series: &Path, labels: Option<&Path>, options: &LoadOptions) -> Result<Dataset> {
    let cov = read_table(covariates, &["id"])?;
    let ser = read_table(series, &["id", "sequence"])?;
    let lab = labels.map(|p| read_table(p, &["id", "label"])).transpose()?;
    if ser.header.len() < 3 {
        return Err(data_err(&ser.path, Some(1), "no time-step columns"));
    }
    let covariate_names: Vec<String> = cov.header[1..].to_vec();

    let mut order = Vec::new();
    let mut cov_by_id: HashMap<String, CovariateVector> = HashMap::new();
    for (line, rec) in &cov.rows {
        let id = rec[0].to_string();
        let values = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, f)| parse_f64(&cov, *line, &cov.header[k], f))
            .collect::<Result<Vec<_>>>()?;
        if cov_by_id.insert(id.clone(), CovariateVector::new(values)).is_some() {
            return Err(data_err(&cov.path, Some(*line), format!("duplicate id `{id}`")));
        }
        order.push(id);
    }
    if order.is_empty() {
        return Err(data_err(&cov.path, None, "no rows"));
    }

    let mut sequence_names: Vec<String> = Vec::new();
    let mut series_by_id: HashMap<String, HashMap<String, Vec<f64>>> = HashMap::new();
    for (line, rec) in &ser.rows {
        let id = rec[0].to_string();
        if !cov_by_id.contains_key(&id) {
            return Err(data_err(&ser.path, Some(*line), format!("id `{id}` has no covariates")));
        }
        let name = rec[1].to_string();
        if !sequence_names.contains(&name) {
            sequence_names.push(name.clone());
        }
        let values = rec
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, f)| parse_f64(&ser, *line, &ser.header[k], f))
            .collect::<Result<Vec<_>>>()?;
        if series_by_id
            .entry(id.clone())
            .or_default()
            .insert(name.clone(), values)
            .is_some()
        {
            return Err(data_err(
                &ser.path,
                Some(*line),
                format!("duplicate sequence `{name}` for id `{id}`"),
            ));
        }
    }

    let mut labels_by_id: HashMap<String, usize> = HashMap::new();
    if let Some(table) = &lab {
        for (line, rec) in &table.rows {
            let at = |detail: String| data_err(&table.path, Some(*line), detail);
            let id = rec[0].to_string();
            if !cov_by_id.contains_key(&id) {
                return Err(at(format!("id `{id}` has no covariates")));
            }
            let y: usize = rec[1].parse().map_err(|_| at(format!("unknown label `{}`", &rec[1])))?;
            if let Some(k) = options.num_classes {
                if y >= k {
                    return Err(at(format!("unknown label `{y}` (expected 0..{k})")));
                }
            }
            if labels_by_id.insert(id.clone(), y).is_some() {
                return Err(at(format!("duplicate id `{id}`")));
            }
        }
    }

    let file_t = ser.header.len() - 2;
    let t = options.t.unwrap_or(file_t);
    if t == 0 {
        return Err(Error::config("t", "must be positive"));
    }
    let mut samples = Vec::with_capacity(order.len());
    for id in order {
        let y = match &lab {
            Some(table) => *labels_by_id
                .get(&id)
                .ok_or_else(|| data_err(&table.path, None, format!("missing label for id `{id}`")))?,
            None => 0,
        };
        let seqs = series_by_id
            .get(&id)
            .ok_or_else(|| data_err(&ser.path, None, format!("missing series for id `{id}`")))?;
        let mut data = Vec::with_capacity(sequence_names.len() * t);
        for name in &sequence_names {
            let v = seqs
                .get(name)
                .ok_or_else(|| data_err(&ser.path, None, format!("id `{id}` lacks sequence `{name}`")))?;
            data.extend(resample_linear(v, t));
        }
        let s = cov_by_id.remove(&id).expect("id came from the covariates table");
        samples.push(Sample {
            x: Tensor::new(vec![sequence_names.len(), t], data)?,
            id,
            s,
            y,
        });
    }
    let num_classes = options
        .num_classes
        .unwrap_or_else(|| samples.iter().map(|s| s.y).max().unwrap_or(0) + 1)
        .max(2);
    Dataset::new(samples, covariate_names, sequence_names, num_classes)
}

/// Write `covariates.csv`, `series.csv` and `labels.csv` into `dir`.
/// Values use the shortest representation that parses back exactly.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| Error::io(format!("writing {}", p.display()), e);
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let (_, t, _) = dataset.dims();

    let mut cov = String::from("id");
    for name in &dataset.covariate_names {
        cov.push(',');
        cov.push_str(name);
    }
    cov.push('\n');
    let mut ser = String::from("id,sequence");
    for k in 0..t {
        ser.push_str(&format!(",t{k}"));
    }
    ser.push('\n');
    let mut lab = String::from("id,label\n");
    for s in &dataset.samples {
        cov.push_str(&s.id);
        for v in s.s.as_slice() {
            cov.push_str(&format!(",{v}"));
        }
        cov.push('\n');
        for (r, name) in dataset.sequence_names.iter().enumerate() {
            ser.push_str(&format!("{},{name}", s.id));
            for v in s.x.row_slice(r) {
                ser.push_str(&format!(",{v}"));
            }
            ser.push('\n');
        }
        lab.push_str(&format!("{},{}\n", s.id, s.y));
    }
    for (name, body) in [("covariates.csv", cov), ("series.csv", ser), ("labels.csv", lab)] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| io(&p, e))?;
    }
    Ok(())
}

/// Paths of the three files written by [`write_dataset`].
pub fn dataset_files(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join("covariates.csv"),
        dir.join("series.csv"),
        dir.join("labels.csv"),
    )
}
