//! CSV ingestion, option parsing and report emission.
//!
//! Input CSV files carry header-named columns `label`, `prediction`,
//! `confidence` and `stratum`; only `prediction` is required and any other
//! column is ignored. An empty cell means "missing", so a row with an empty
//! label is unlabeled.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, EstimatorConfig, LambdaPolicy, Method};
use crate::report::TrialReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationCsvRow {
    pub label: Option<f64>,
    pub prediction: f64,
    pub confidence: Option<f64>,
    pub stratum: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    /// Labels must be 0/1 and predictions (and confidences) must lie in [0, 1].
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCsv {
    pub rows: Vec<EvaluationCsvRow>,
    pub labeled: usize,
    pub unlabeled: usize,
}

pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_csv(file, options).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses evaluation rows from any reader. Never panics on malformed input.
pub fn parse_csv<R: Read>(reader: R, options: CsvOptions) -> Result<LoadedCsv> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let prediction_col = column("prediction")
        .ok_or_else(|| Error::Data("missing required column 'prediction'".into()))?;
    let label_col = column("label");
    let confidence_col = column("confidence");
    let stratum_col = column("stratum");

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row_no}: {e}")))?;
        let cell = |col: Option<usize>| -> Option<&str> {
            col.and_then(|c| record.get(c)).filter(|s| !s.is_empty())
        };
        let prediction = match cell(Some(prediction_col)) {
            Some(s) => parse_finite(s, row_no, "prediction")?,
            None => {
                return Err(Error::Data(format!("row {row_no}, column 'prediction': empty cell")))
            }
        };
        let label = cell(label_col).map(|s| parse_finite(s, row_no, "label")).transpose()?;
        let confidence = cell(confidence_col)
            .map(|s| parse_finite(s, row_no, "confidence"))
            .transpose()?;
        let stratum = cell(stratum_col)
            .map(|s| {
                s.parse::<usize>().map_err(|_| {
                    Error::Data(format!(
                        "row {row_no}, column 'stratum': '{s}' is not a non-negative integer"
                    ))
                })
            })
            .transpose()?;
        if options.binary {
            if let Some(y) = label {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::Data(format!(
                        "row {row_no}, column 'label': {y} is not 0 or 1 (binary mode)"
                    )));
                }
            }
            if !(0.0..=1.0).contains(&prediction) {
                return Err(Error::Data(format!(
                    "row {row_no}, column 'prediction': {prediction} outside [0, 1] (binary mode)"
                )));
            }
        }
        if let Some(c) = confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Data(format!(
                    "row {row_no}, column 'confidence': {c} outside [0, 1]"
                )));
            }
        }
        rows.push(EvaluationCsvRow {
            label,
            prediction,
            confidence,
            stratum,
        });
    }
    let labeled = rows.iter().filter(|r| r.label.is_some()).count();
    Ok(LoadedCsv {
        unlabeled: rows.len() - labeled,
        labeled,
        rows,
    })
}

fn parse_finite(s: &str, row: usize, column: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Data(format!(
            "row {row}, column '{column}': '{s}' is not a finite number"
        ))),
    }
}

/// Writes rows with the columns they use; `None` cells are left empty.
pub fn write_csv_rows<W: Write>(rows: &[EvaluationCsvRow], writer: W) -> Result<()> {
    let with_conf = rows.iter().any(|r| r.confidence.is_some());
    let with_stratum = rows.iter().any(|r| r.stratum.is_some());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["label", "prediction"];
    if with_conf {
        header.push("confidence");
    }
    if with_stratum {
        header.push("stratum");
    }
    wtr.write_record(&header).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![opt(r.label), r.prediction.to_string()];
        if with_conf {
            rec.push(opt(r.confidence));
        }
        if with_stratum {
            rec.push(r.stratum.map(|s| s.to_string()).unwrap_or_default());
        }
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

/// Parses `tuned` or `fixed=<v>[,<v>...]`.
pub fn parse_lambda_policy(s: &str) -> Result<LambdaPolicy> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("tuned") {
        return Ok(LambdaPolicy::Tuned);
    }
    let values = s
        .strip_prefix("fixed=")
        .ok_or_else(|| Error::Config(format!("lambda: expected 'tuned' or 'fixed=<v>', got '{s}'")))?;
    let values = parse_f64_list(values).map_err(|e| Error::Config(format!("lambda: {e}")))?;
    if values.is_empty() {
        return Err(Error::Config("lambda: fixed policy needs a value".into()));
    }
    Ok(LambdaPolicy::Fixed(values))
}

/// Parses a comma-separated list of finite reals.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Config(format!("'{t}' is not a finite number"))),
        })
        .collect()
}

pub fn parse_allocation(s: &str) -> Result<Allocation> {
    match s.trim().to_ascii_lowercase().as_str() {
        "prop" | "proportional" => Ok(Allocation::Proportional),
        "opt" | "optimal" => Ok(Allocation::OptimalOracle),
        "heur" | "heuristic" => Ok(Allocation::Heuristic),
        other => Err(Error::Config(format!(
            "alloc: unknown allocation '{other}' (expected prop, opt or heur)"
        ))),
    }
}

/// Parses a method name. `stratppi` takes `default_alloc`; the suffixed forms
/// `stratppi-prop`, `stratppi-opt` and `stratppi-heur` fix the allocation.
pub fn parse_method(s: &str, alpha: f64, default_alloc: Allocation) -> Result<EstimatorConfig> {
    let name = s.trim().to_ascii_lowercase();
    let (method, alloc) = match name.as_str() {
        "classical" => (Method::Classical, Allocation::Proportional),
        "ppi_pp" | "ppi++" | "ppipp" => (Method::PpiPlusPlus, Allocation::Proportional),
        "stratppi" => (Method::StratPpi, default_alloc),
        other => match other.strip_prefix("stratppi-") {
            Some(suffix) => (Method::StratPpi, parse_allocation(suffix).map_err(|_| unknown_method(other))?),
            None => return Err(unknown_method(other)),
        },
    };
    Ok(EstimatorConfig::new(method, alpha).with_allocation(alloc))
}

fn unknown_method(name: &str) -> Error {
    Error::Config(format!(
        "method: unknown method '{name}' (expected classical, ppi_pp, stratppi, stratppi-prop, stratppi-opt or stratppi-heur)"
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Jsonl,
    Csv,
}

/// A finite number or the string sentinel `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MaybeInfinite {
    Finite(f64),
    Sentinel(&'static str),
}

impl From<f64> for MaybeInfinite {
    fn from(v: f64) -> Self {
        if v.is_infinite() && v > 0.0 {
            MaybeInfinite::Sentinel("inf")
        } else {
            MaybeInfinite::Finite(v)
        }
    }
}

impl std::fmt::Display for MaybeInfinite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaybeInfinite::Finite(v) => write!(f, "{v}"),
            MaybeInfinite::Sentinel(s) => f.write_str(s),
        }
    }
}

/// One output record; field order is the documented schema order.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRecord<'a> {
    pub method: &'a str,
    pub n: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub width_q16: f64,
    pub width_q84: f64,
    pub percent_reduction: f64,
    pub effective_sample_size: MaybeInfinite,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl<'a> From<&'a TrialReport> for ReportRecord<'a> {
    fn from(r: &'a TrialReport) -> Self {
        Self {
            method: &r.method,
            n: r.n,
            coverage: r.coverage,
            mean_width: r.mean_width,
            width_q16: r.width_q16,
            width_q84: r.width_q84,
            percent_reduction: r.percent_reduction,
            effective_sample_size: r.effective_sample_size.into(),
            trials: r.trials,
            alpha: r.alpha,
            seed: r.seed,
        }
    }
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "method",
    "n",
    "coverage",
    "mean_width",
    "width_q16",
    "width_q84",
    "percent_reduction",
    "effective_sample_size",
    "trials",
    "alpha",
    "seed",
];

pub fn write_reports<W: Write>(reports: &[TrialReport], format: OutputFormat, mut writer: W) -> Result<()> {
    match format {
        OutputFormat::Jsonl => {
            for r in reports {
                let line = serde_json::to_string(&ReportRecord::from(r))
                    .map_err(|e| Error::Data(format!("cannot encode report: {e}")))?;
                writeln!(writer, "{line}")?;
            }
        }
        OutputFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(&mut writer);
            wtr.write_record(REPORT_COLUMNS).map_err(csv_err)?;
            for r in reports {
                let rec = ReportRecord::from(r);
                wtr.write_record([
                    rec.method.to_string(),
                    rec.n.to_string(),
                    rec.coverage.to_string(),
                    rec.mean_width.to_string(),
                    rec.width_q16.to_string(),
                    rec.width_q84.to_string(),
                    rec.percent_reduction.to_string(),
                    rec.effective_sample_size.to_string(),
                    rec.trials.to_string(),
                    rec.alpha.to_string(),
                    rec.seed.to_string(),
                ])
                .map_err(csv_err)?;
            }
            wtr.flush()?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_label_marks_unlabeled_row() {
        let loaded = parse_csv("label,prediction\n1,0.9\n,0.4\n".as_bytes(), CsvOptions::default()).unwrap();
        assert_eq!(loaded.labeled, 1);
        assert_eq!(loaded.unlabeled, 1);
        assert_eq!(loaded.rows[0].label, Some(1.0));
        assert_eq!(loaded.rows[1].label, None);
        assert_eq!(loaded.rows[1].prediction, 0.4);
    }

    #[test]
    fn missing_prediction_column_is_named() {
        let err = parse_csv("label,score\n1,0.9\n".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("prediction")), "{err}");
    }

    #[test]
    fn binary_mode_rejects_fractional_label() {
        let err = parse_csv("label,prediction\n1,0.9\n0.5,0.4\n".as_bytes(), CsvOptions { binary: true }).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("row 2")), "{err}");
    }

    #[test]
    fn unparseable_cells_identify_row_and_column() {
        let err = parse_csv("prediction,label\n0.3,1\nabc,0\n".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("row 2") && m.contains("prediction")), "{err}");
        let err = parse_csv("prediction,stratum\n0.3,-1\n".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("stratum")), "{err}");
        let err = parse_csv("prediction\nNaN\n".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn extra_columns_are_ignored() {
        let loaded = parse_csv(
            "id,prediction,label,stratum,note\n7,0.25,0,3,x\n".as_bytes(),
            CsvOptions::default(),
        )
        .unwrap();
        assert_eq!(
            loaded.rows[0],
            EvaluationCsvRow { label: Some(0.0), prediction: 0.25, confidence: None, stratum: Some(3) }
        );
    }

    #[test]
    fn lambda_policy_parsing() {
        assert_eq!(parse_lambda_policy("tuned").unwrap(), LambdaPolicy::Tuned);
        assert_eq!(parse_lambda_policy("fixed=0").unwrap(), LambdaPolicy::Fixed(vec![0.0]));
        assert_eq!(parse_lambda_policy("fixed=0.5,-1").unwrap(), LambdaPolicy::Fixed(vec![0.5, -1.0]));
        assert!(parse_lambda_policy("fixed=").is_err());
        assert!(parse_lambda_policy("fixed=inf").is_err());
        assert!(parse_lambda_policy("auto").is_err());
    }

    #[test]
    fn method_parsing() {
        let m = parse_method("stratppi-heur", 0.05, Allocation::Proportional).unwrap();
        assert_eq!((m.method, m.allocation), (Method::StratPpi, Allocation::Heuristic));
        let m = parse_method("stratppi", 0.05, Allocation::OptimalOracle).unwrap();
        assert_eq!(m.allocation, Allocation::OptimalOracle);
        assert_eq!(parse_method("ppi++", 0.05, Allocation::Proportional).unwrap().method, Method::PpiPlusPlus);
        assert!(parse_method("bayes", 0.05, Allocation::Proportional).is_err());
        assert!(parse_method("stratppi-x", 0.05, Allocation::Proportional).is_err());
    }

    fn sample_report(ess: f64) -> TrialReport {
        TrialReport {
            method: "stratppi-prop".into(),
            n: 100,
            coverage: 0.9,
            mean_width: 0.25,
            width_q16: 0.2,
            width_q84: 0.3,
            percent_reduction: 12.5,
            effective_sample_size: ess,
            trials: 1000,
            alpha: 0.1,
            seed: 7,
        }
    }

    #[test]
    fn jsonl_schema_and_inf_sentinel() {
        let mut out = Vec::new();
        write_reports(&[sample_report(130.0), sample_report(f64::INFINITY)], OutputFormat::Jsonl, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            r#"{"method":"stratppi-prop","n":100,"coverage":0.9,"mean_width":0.25,"width_q16":0.2,"width_q84":0.3,"percent_reduction":12.5,"effective_sample_size":130.0,"trials":1000,"alpha":0.1,"seed":7}"#
        );
        assert!(lines[1].contains(r#""effective_sample_size":"inf""#));
    }

    #[test]
    fn csv_report_header() {
        let mut out = Vec::new();
        write_reports(&[sample_report(f64::INFINITY)], OutputFormat::Csv, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "stratppi-prop,100,0.9,0.25,0.2,0.3,12.5,inf,1000,0.1,7");
    }
}
