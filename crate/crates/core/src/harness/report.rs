//! Report files.
//!
//! `json-lines`: one `summary` line per report followed by its `image` and
//! `cdf` lines. `csv`: three tables next to each other, `<stem>.summary.csv`,
//! `<stem>.csv` (one row per image) and `<stem>.cdf.csv`; rows are keyed by
//! the report's position. Missing values are written as `null` in both.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackConfig, AttackResult, Method};
use crate::error::{Error, Result};

use super::campaign::{CampaignReport, CampaignSummary, CdfPoint, ImageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    JsonLines,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json-lines" => Ok(ReportFormat::JsonLines),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Usage(format!(
                "unsupported report format `{s}` (expected json-lines or csv)"
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Summary(CampaignSummary),
    Image(ImageRecord),
    Cdf(CdfPoint),
}

pub fn emit_report(report: &CampaignReport, path: &Path, format: ReportFormat) -> Result<()> {
    emit_reports(std::slice::from_ref(report), path, format)
}

pub fn emit_reports(reports: &[CampaignReport], path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::JsonLines => write_json_lines(reports, path),
        ReportFormat::Csv => write_csv(reports, path),
    }
}

/// Reads a file holding exactly one report.
pub fn read_report(path: &Path, format: ReportFormat) -> Result<CampaignReport> {
    let mut all = read_reports(path, format)?;
    if all.len() != 1 {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("expected one report, found {}", all.len()),
        });
    }
    Ok(all.remove(0))
}

pub fn read_reports(path: &Path, format: ReportFormat) -> Result<Vec<CampaignReport>> {
    match format {
        ReportFormat::JsonLines => read_json_lines(path),
        ReportFormat::Csv => read_csv(path),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json_lines(reports: &[CampaignReport], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut put = |line: &Line| -> Result<()> {
        let text = serde_json::to_string(line).expect("report types serialize");
        writeln!(out, "{text}").map_err(|e| Error::io(path, e))
    };
    for r in reports {
        put(&Line::Summary(r.summary.clone()))?;
        for rec in &r.records {
            put(&Line::Image(rec.clone()))?;
        }
        for c in &r.query_cdf {
            put(&Line::Cdf(*c))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_json_lines(path: &Path) -> Result<Vec<CampaignReport>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Format {
        path: path.into(),
        msg: format!("line {line}: {msg}"),
    };
    let mut reports: Vec<CampaignReport> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?;
        match parsed {
            Line::Summary(summary) => reports.push(CampaignReport {
                summary,
                records: Vec::new(),
                query_cdf: Vec::new(),
            }),
            Line::Image(rec) => reports
                .last_mut()
                .ok_or_else(|| bad(i + 1, "image line before any summary".into()))?
                .records
                .push(rec),
            Line::Cdf(c) => reports
                .last_mut()
                .ok_or_else(|| bad(i + 1, "cdf line before any summary".into()))?
                .query_cdf
                .push(c),
        }
    }
    Ok(reports)
}

/// `out.csv` → (`out.summary.csv`, `out.csv`, `out.cdf.csv`).
fn csv_paths(path: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let stem = path.with_extension("");
    let sibling = |suffix: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    (
        sibling(".summary.csv"),
        path.to_path_buf(),
        sibling(".cdf.csv"),
    )
}

const SUMMARY_HEADER: [&str; 20] = [
    "report",
    "method",
    "seed",
    "requested",
    "attempted",
    "successes",
    "shortfall",
    "success_rate",
    "avg_queries_successful",
    "median_queries",
    "total_queries",
    "epsilon",
    "mu",
    "gamma",
    "lr",
    "samples",
    "kappa",
    "max_iters",
    "max_queries",
    "direction_mode",
];
const IMAGE_HEADER: [&str; 9] = [
    "report",
    "index",
    "label",
    "success",
    "queries",
    "iterations",
    "final_prediction",
    "delta",
    "loss_trace",
];
const CDF_HEADER: [&str; 3] = ["report", "queries", "fraction"];

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "null".to_string(), |v| v.to_string())
}

fn opt_f(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), num)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.into(),
        msg: e.to_string(),
    }
}

fn write_csv(reports: &[CampaignReport], path: &Path) -> Result<()> {
    let (summary_path, image_path, cdf_path) = csv_paths(path);
    let mut summary = csv::Writer::from_writer(create(&summary_path)?);
    let mut images = csv::Writer::from_writer(create(&image_path)?);
    let mut cdf = csv::Writer::from_writer(create(&cdf_path)?);
    summary
        .write_record(SUMMARY_HEADER.iter().copied().chain(["tuning"]))
        .map_err(|e| csv_err(&summary_path, e))?;
    images
        .write_record(IMAGE_HEADER)
        .map_err(|e| csv_err(&image_path, e))?;
    cdf.write_record(CDF_HEADER)
        .map_err(|e| csv_err(&cdf_path, e))?;

    for (k, r) in reports.iter().enumerate() {
        let s = &r.summary;
        let c = &s.config;
        let tuning = s.tuning.as_ref().map_or_else(
            || "null".to_string(),
            |t| serde_json::to_string(t).expect("tuning serializes"),
        );
        summary
            .write_record([
                k.to_string(),
                s.method.to_string(),
                s.seed.to_string(),
                s.requested.to_string(),
                s.attempted.to_string(),
                s.successes.to_string(),
                s.shortfall.to_string(),
                opt_f(s.success_rate),
                opt_f(s.avg_queries_successful),
                opt_f(s.median_queries),
                s.total_queries.to_string(),
                num(c.epsilon),
                num(c.mu),
                num(c.gamma),
                opt_f(c.lr),
                c.samples.to_string(),
                num(c.kappa),
                c.max_iters.to_string(),
                opt(c.max_queries),
                direction_name(c.direction_mode).to_string(),
                tuning,
            ])
            .map_err(|e| csv_err(&summary_path, e))?;
        for rec in &r.records {
            let res = &rec.result;
            images
                .write_record([
                    k.to_string(),
                    rec.index.to_string(),
                    rec.label.to_string(),
                    res.success.to_string(),
                    res.queries.to_string(),
                    res.iterations.to_string(),
                    res.final_prediction.to_string(),
                    list(&res.delta),
                    list(&res.loss_trace),
                ])
                .map_err(|e| csv_err(&image_path, e))?;
        }
        for p in &r.query_cdf {
            cdf.write_record([k.to_string(), p.queries.to_string(), num(p.fraction)])
                .map_err(|e| csv_err(&cdf_path, e))?;
        }
    }
    for (w, p) in [
        (&mut summary, &summary_path),
        (&mut images, &image_path),
        (&mut cdf, &cdf_path),
    ] {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn direction_name(mode: crate::zograd::DirectionMode) -> &'static str {
    match mode {
        crate::zograd::DirectionMode::Gaussian => "gaussian",
        crate::zograd::DirectionMode::UnitSphere => "unit-sphere",
    }
}

/// Typed access to one CSV row with error context.
struct Row<'a> {
    path: &'a Path,
    line: usize,
    rec: csv::StringRecord,
}

impl Row<'_> {
    fn err(&self, msg: String) -> Error {
        Error::Format {
            path: self.path.into(),
            msg: format!("row {}: {msg}", self.line),
        }
    }

    fn field(&self, i: usize) -> Result<&str> {
        self.rec
            .get(i)
            .ok_or_else(|| self.err(format!("missing column {i}")))
    }

    fn parse<T: FromStr>(&self, i: usize) -> Result<T> {
        let f = self.field(i)?;
        f.parse()
            .map_err(|_| self.err(format!("column {i}: cannot parse `{f}`")))
    }

    fn parse_opt<T: FromStr>(&self, i: usize) -> Result<Option<T>> {
        if self.field(i)? == "null" {
            Ok(None)
        } else {
            self.parse(i).map(Some)
        }
    }

    fn list(&self, i: usize) -> Result<Vec<f64>> {
        self.field(i)?
            .split_whitespace()
            .map(|v| {
                v.parse()
                    .map_err(|_| self.err(format!("column {i}: cannot parse `{v}`")))
            })
            .collect()
    }
}

fn rows(path: &Path) -> Result<Vec<Row<'_>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .records()
        .enumerate()
        .map(|(i, rec)| {
            Ok(Row {
                path,
                line: i + 1,
                rec: rec.map_err(|e| csv_err(path, e))?,
            })
        })
        .collect()
}

fn read_csv(path: &Path) -> Result<Vec<CampaignReport>> {
    let (summary_path, image_path, cdf_path) = csv_paths(path);
    let mut reports = Vec::new();
    for row in rows(&summary_path)? {
        let k: usize = row.parse(0)?;
        if k != reports.len() {
            return Err(row.err(format!("report {k} out of order")));
        }
        let method: Method = row.parse(1).map_err(|_| row.err("unknown method".into()))?;
        let seed: u64 = row.parse(2)?;
        let direction_mode = row
            .field(19)?
            .parse()
            .map_err(|_| row.err("unknown direction mode".into()))?;
        let tuning = match row.field(20)? {
            "null" => None,
            text => Some(serde_json::from_str(text).map_err(|e| row.err(e.to_string()))?),
        };
        let config = AttackConfig {
            method,
            epsilon: row.parse(11)?,
            mu: row.parse(12)?,
            gamma: row.parse(13)?,
            lr: row.parse_opt(14)?,
            samples: row.parse(15)?,
            kappa: row.parse(16)?,
            max_iters: row.parse(17)?,
            max_queries: row.parse_opt(18)?,
            direction_mode,
            seed,
        };
        reports.push(CampaignReport {
            summary: CampaignSummary {
                method,
                seed,
                requested: row.parse(3)?,
                attempted: row.parse(4)?,
                successes: row.parse(5)?,
                shortfall: row.parse(6)?,
                success_rate: row.parse_opt(7)?,
                avg_queries_successful: row.parse_opt(8)?,
                median_queries: row.parse_opt(9)?,
                total_queries: row.parse(10)?,
                config,
                tuning,
            },
            records: Vec::new(),
            query_cdf: Vec::new(),
        });
    }
    let slot = |row: &Row<'_>, reports: &mut Vec<CampaignReport>| -> Result<usize> {
        let k: usize = row.parse(0)?;
        if k >= reports.len() {
            return Err(row.err(format!("unknown report {k}")));
        }
        Ok(k)
    };
    for row in rows(&image_path)? {
        let k = slot(&row, &mut reports)?;
        reports[k].records.push(ImageRecord {
            index: row.parse(1)?,
            label: row.parse(2)?,
            result: AttackResult {
                success: row.parse(3)?,
                queries: row.parse(4)?,
                iterations: row.parse(5)?,
                final_prediction: row.parse(6)?,
                delta: row.list(7)?,
                loss_trace: row.list(8)?,
            },
        });
    }
    for row in rows(&cdf_path)? {
        let k = slot(&row, &mut reports)?;
        reports[k].query_cdf.push(CdfPoint {
            queries: row.parse(1)?,
            fraction: row.parse(2)?,
        });
    }
    Ok(reports)
}
