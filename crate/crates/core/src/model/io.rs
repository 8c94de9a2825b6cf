//! Versioned plain-text weight files.
//!
//! ```text
//! mlp v1 <d> <T> <L>
//! layer <out> <in> <activation>
//! <out lines of `in` space-separated weights>
//! <one line of `out` biases>
//! ...
//! ```
//!
//! Numbers are written with Rust's shortest round-trip `f64` formatting, so
//! save followed by load is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Activation, Layer, MlpModel};

pub fn write_model(model: &MlpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mlp v1 {} {} {}",
        model.input_dim(),
        model.num_classes(),
        model.layers().len()
    );
    for layer in model.layers() {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            layer.out_dim(),
            layer.in_dim(),
            layer.activation().name()
        );
        for i in 0..layer.out_dim() {
            push_row(&mut out, layer.row(i));
        }
        push_row(&mut out, layer.bias());
    }
    out
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !fields.is_empty() {
                return Ok((i + 1, fields));
            }
        }
        Err(Error::Parse {
            line: self.last + 1,
            field: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse_usize(line: usize, field: usize, s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        line,
        field,
        msg: format!("expected a nonnegative integer, found `{s}`"),
    })
}

fn parse_row(line: usize, fields: &[&str], expected: usize) -> Result<Vec<f64>> {
    if fields.len() != expected {
        return Err(Error::Parse {
            line,
            field: fields.len().min(expected) + 1,
            msg: format!("expected {expected} values, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    field: i + 1,
                    msg: format!("expected a finite number, found `{s}`"),
                })
        })
        .collect()
}

pub fn parse_model(text: &str) -> Result<MlpModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.next("header")?;
    if header.len() != 5 || header[0] != "mlp" || header[1] != "v1" {
        return Err(Error::Parse {
            line: ln,
            field: 1,
            msg: "expected header `mlp v1 d T L`".into(),
        });
    }
    let d = parse_usize(ln, 3, header[2])?;
    let t = parse_usize(ln, 4, header[3])?;
    let n_layers = parse_usize(ln, 5, header[4])?;

    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (ln, head) = lines.next("layer header")?;
        if head.len() != 4 || head[0] != "layer" {
            return Err(Error::Parse {
                line: ln,
                field: 1,
                msg: "expected `layer out in activation`".into(),
            });
        }
        let out = parse_usize(ln, 2, head[1])?;
        let inp = parse_usize(ln, 3, head[2])?;
        let activation = Activation::from_name(head[3]).ok_or_else(|| Error::Parse {
            line: ln,
            field: 4,
            msg: format!("unknown activation `{}`", head[3]),
        })?;
        let mut weights = Vec::with_capacity(out * inp);
        for _ in 0..out {
            let (ln, row) = lines.next("weight row")?;
            weights.extend(parse_row(ln, &row, inp)?);
        }
        let (ln, bias) = lines.next("bias row")?;
        let bias = parse_row(ln, &bias, out)?;
        layers.push(Layer::new(out, inp, weights, bias, activation)?);
    }
    if let Ok((ln, _)) = lines.next("") {
        return Err(Error::Parse {
            line: ln,
            field: 1,
            msg: "trailing content after last layer".into(),
        });
    }

    let model = MlpModel::new(layers)?;
    if model.input_dim() != d {
        return Err(Error::DimensionChain {
            layer: 0,
            expected: d,
            found: model.input_dim(),
        });
    }
    if model.num_classes() != t {
        return Err(Error::DimensionChain {
            layer: n_layers,
            expected: t,
            found: model.num_classes(),
        });
    }
    Ok(model)
}
