//! File formats: delimited feature files on the way in, plain CSV artifacts
//! on the way out. All writers emit deterministic bytes for fixed inputs so
//! runs can be diffed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::dataset::{ClassLabel, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::studies::SeriesPoint;
use crate::osr::{Prediction, Recognition};

fn data_error(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::dataset(format!("{}:{line}: {message}", path.display()))
}

/// Loads a labeled dataset. Two layouts are recognized, chosen by the first
/// data line and then enforced for the whole file:
///
/// - dense: `label, f1, f2, ...` (comma- or whitespace-separated);
/// - sparse: `label index:value ...` with 1-based indices; missing entries
///   are zero and the dimension is the largest index seen.
///
/// Blank lines and lines starting with `#` are skipped.
pub fn load_labeled_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut sparse: Option<bool> = None;
    let mut labels: Vec<ClassLabel> = Vec::new();
    let mut dense_rows: Vec<Vec<f64>> = Vec::new();
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line_is_sparse = line.contains(':');
        match sparse {
            None => sparse = Some(line_is_sparse),
            Some(expected) if expected != line_is_sparse => {
                return Err(data_error(
                    path,
                    line_no,
                    "mixes dense and sparse rows in one file",
                ));
            }
            Some(_) => {}
        }

        if line_is_sparse {
            let mut fields = line.split_whitespace();
            let label_text = fields.next().expect("trimmed line is nonempty");
            let label: ClassLabel = label_text
                .parse()
                .map_err(|_| data_error(path, line_no, format!("bad label {label_text:?}")))?;
            let mut row = Vec::new();
            for field in fields {
                let (idx_text, val_text) = field.split_once(':').ok_or_else(|| {
                    data_error(
                        path,
                        line_no,
                        format!("expected index:value, got {field:?}"),
                    )
                })?;
                let index: usize = idx_text.parse().map_err(|_| {
                    data_error(path, line_no, format!("bad feature index {idx_text:?}"))
                })?;
                if index == 0 {
                    return Err(data_error(path, line_no, "feature indices are 1-based"));
                }
                let value: f64 = val_text.parse().map_err(|_| {
                    data_error(path, line_no, format!("bad feature value {val_text:?}"))
                })?;
                max_index = max_index.max(index);
                row.push((index - 1, value));
            }
            labels.push(label);
            sparse_rows.push(row);
        } else {
            let fields: Vec<&str> = if line.contains(',') {
                line.split(',').map(str::trim).collect()
            } else {
                line.split_whitespace().collect()
            };
            if fields.len() < 2 {
                return Err(data_error(
                    path,
                    line_no,
                    "need a label and at least one feature",
                ));
            }
            let label: ClassLabel = fields[0]
                .parse()
                .map_err(|_| data_error(path, line_no, format!("bad label {:?}", fields[0])))?;
            let mut row = Vec::with_capacity(fields.len() - 1);
            for field in &fields[1..] {
                let value: f64 = field.parse().map_err(|_| {
                    data_error(path, line_no, format!("bad feature value {field:?}"))
                })?;
                row.push(value);
            }
            labels.push(label);
            dense_rows.push(row);
        }
    }

    let instances: Vec<DVector<f64>> = if sparse == Some(true) {
        sparse_rows
            .into_iter()
            .map(|row| {
                let mut x = DVector::zeros(max_index);
                for (idx, value) in row {
                    x[idx] = value;
                }
                x
            })
            .collect()
    } else {
        dense_rows.into_iter().map(DVector::from_vec).collect()
    };
    if instances.is_empty() {
        return Err(Error::dataset(format!(
            "{}: no data rows found",
            path.display()
        )));
    }
    LabeledDataset::new(instances, labels)
}

/// Loads an unlabeled batch: dense rows of features only.
pub fn load_unlabeled_batch(path: impl AsRef<Path>) -> Result<Vec<DVector<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let mut row = Vec::with_capacity(fields.len());
        for field in &fields {
            let value: f64 = field
                .parse()
                .map_err(|_| data_error(path, line_no, format!("bad feature value {field:?}")))?;
            row.push(value);
        }
        rows.push(DVector::from_vec(row));
    }
    if rows.is_empty() {
        return Err(Error::dataset(format!(
            "{}: no data rows found",
            path.display()
        )));
    }
    Ok(rows)
}

/// Writes a study series with the run configuration echoed as `# key = value`
/// comment lines, then a header row naming the varied quantity.
pub fn write_metrics_csv(
    path: impl AsRef<Path>,
    x_name: &str,
    points: &[SeriesPoint],
    config_echo: &[(String, String)],
    root_seed: u64,
) -> Result<()> {
    let mut out = String::new();
    for (key, value) in config_echo {
        writeln!(out, "# {key} = {value}").expect("string write");
    }
    writeln!(
        out,
        "{x_name},mean_f,std_f,mean_precision,mean_recall,repeats,seed"
    )
    .expect("string write");
    for p in points {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            p.x, p.mean_f, p.std_f, p.mean_precision, p.mean_recall, p.repeats, root_seed
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// A parsed metrics series: the varied quantity's name, the echoed
/// configuration pairs, and the data points.
#[derive(Debug, Clone)]
pub struct MetricsCsv {
    pub x_name: String,
    pub echo: Vec<(String, String)>,
    pub points: Vec<SeriesPoint>,
}

/// Reads back a file written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<MetricsCsv> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut echo = Vec::new();
    let mut x_name: Option<String> = None;
    let mut points = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                echo.push((key.trim().to_string(), value.trim().to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(data_error(path, line_no, "expected seven columns"));
        }
        if x_name.is_none() {
            x_name = Some(fields[0].to_string());
            continue;
        }
        let parse = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| data_error(path, line_no, format!("bad number {:?}", fields[i])))
        };
        points.push(SeriesPoint {
            x: parse(0)?,
            mean_f: parse(1)?,
            std_f: parse(2)?,
            mean_precision: parse(3)?,
            mean_recall: parse(4)?,
            repeats: fields[5]
                .parse()
                .map_err(|_| data_error(path, line_no, format!("bad count {:?}", fields[5])))?,
        });
    }
    let x_name =
        x_name.ok_or_else(|| Error::dataset(format!("{}: missing header", path.display())))?;
    Ok(MetricsCsv {
        x_name,
        echo,
        points,
    })
}

/// Writes one recognition run: the component census per group (raw and
/// surviving), then a verdict per batch instance.
pub fn write_recognition_report(path: impl AsRef<Path>, result: &Recognition) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# epsilon = {}", result.report.epsilon).expect("string write");
    writeln!(out, "# unknown_estimate = {}", result.unknown_estimate).expect("string write");
    writeln!(out, "# components = {}", result.num_components).expect("string write");
    for s in &result.shared {
        writeln!(
            out,
            "# shared component {} claimed by {:?}, awarded to {}",
            s.dish, s.classes, s.awarded_to
        )
        .expect("string write");
    }
    writeln!(out, "section,group,class,component,share").expect("string write");
    for group in &result.report.groups {
        let class = group
            .class_label
            .map_or_else(|| "batch".to_string(), |c| c.to_string());
        for &(component, share) in &group.raw {
            writeln!(
                out,
                "raw,{},{},{},{:.6}",
                group.group, class, component, share
            )
            .expect("string write");
        }
        for &component in &group.kept {
            let share = group
                .raw
                .iter()
                .find(|&&(k, _)| k == component)
                .map(|&(_, s)| s)
                .unwrap_or(0.0);
            writeln!(
                out,
                "kept,{},{},{},{:.6}",
                group.group, class, component, share
            )
            .expect("string write");
        }
    }
    writeln!(out, "index,verdict,assignment").expect("string write");
    for (i, p) in result.predictions.iter().enumerate() {
        match p {
            Prediction::Known(c) => writeln!(out, "{i},known,{c}").expect("string write"),
            Prediction::Unknown(k) => writeln!(out, "{i},unknown,{k}").expect("string write"),
        }
    }
    fs::write(path, out)?;
    Ok(())
}
