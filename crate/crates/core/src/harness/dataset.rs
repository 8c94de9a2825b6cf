//! CSV datasets: one sample per row, `label,f_1,…,f_d`, no header.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::MlpModel;

use super::Sample;

pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file)
}

/// Rows are numbered from 0. Every row must have the same width.
pub fn parse_dataset<R: Read>(reader: R) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out: Vec<Sample> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Dataset {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() < 2 {
            return Err(Error::Dataset {
                row,
                msg: "need a label and at least one feature".into(),
            });
        }
        let label: usize = rec[0].parse().map_err(|_| Error::Dataset {
            row,
            msg: format!("label `{}` is not a nonnegative integer", &rec[0]),
        })?;
        let x = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, field)| {
                let v: f64 = field.parse().map_err(|_| Error::Dataset {
                    row,
                    msg: format!("feature {j}: `{field}` is not a number"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Dataset {
                        row,
                        msg: format!("feature {j} = {v} outside [0, 1]"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = out.first() {
            if first.x.len() != x.len() {
                return Err(Error::Dataset {
                    row,
                    msg: format!("expected {} features, found {}", first.x.len(), x.len()),
                });
            }
        }
        out.push(Sample { x, label });
    }
    Ok(out)
}

/// Feature count and label range against a model.
pub fn check_against_model(samples: &[Sample], model: &MlpModel) -> Result<()> {
    for (row, s) in samples.iter().enumerate() {
        if s.x.len() != model.input_dim() {
            return Err(Error::Dataset {
                row,
                msg: format!(
                    "model expects {} features, found {}",
                    model.input_dim(),
                    s.x.len()
                ),
            });
        }
        if s.label >= model.num_classes() {
            return Err(Error::Dataset {
                row,
                msg: format!(
                    "label {} out of range for {} classes",
                    s.label,
                    model.num_classes()
                ),
            });
        }
    }
    Ok(())
}
