//! Datasets and the delimited-text input format.
//!
//! Header `cluster,left,right,<covariates...>`. `right` empty or `inf` means
//! right-censored at `left`; `left == right` is an exact event time; `left == 0`
//! with finite `right` is left-censored. Covariate columns that do not parse
//! as numbers are expanded into 0/1 indicators, one per sorted level.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::augment::SubjectRecord;
use crate::error::{Error, Result};

/// One model covariate and the input column it comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Covariate {
    Numeric { column: String },
    Indicator { column: String, level: String },
}

impl Covariate {
    pub fn column(&self) -> &str {
        match self {
            Covariate::Numeric { column } | Covariate::Indicator { column, .. } => column,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Covariate::Numeric { column } => column.clone(),
            Covariate::Indicator { column, level } => format!("{column}={level}"),
        }
    }
}

/// Training subjects with contiguous cluster indices `0..N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subjects: Vec<SubjectRecord>,
    pub covariates: Vec<Covariate>,
    /// Original label of each cluster index.
    pub cluster_labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        subjects: Vec<SubjectRecord>,
        covariates: Vec<Covariate>,
        cluster_labels: Vec<String>,
    ) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::Data("dataset has no subjects".into()));
        }
        let p = covariates.len();
        let n_clusters = cluster_labels.len();
        let mut seen = vec![false; n_clusters];
        for (i, s) in subjects.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::Data(format!("subject {i}: {e}")))?;
            if s.x.len() != p {
                return Err(Error::Data(format!(
                    "subject {i} has {} covariates, expected {p}",
                    s.x.len()
                )));
            }
            if s.cluster >= n_clusters {
                return Err(Error::Data(format!(
                    "subject {i} has cluster index {} but only {n_clusters} clusters",
                    s.cluster
                )));
            }
            seen[s.cluster] = true;
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(Error::Data(format!("cluster {c} has no subjects")));
        }
        Ok(Self {
            subjects,
            covariates,
            cluster_labels,
        })
    }

    /// Builds a dataset from records whose cluster indices are already
    /// contiguous; covariates are named `x1..xp`.
    pub fn from_records(subjects: Vec<SubjectRecord>) -> Result<Self> {
        let p = subjects.first().map_or(0, |s| s.x.len());
        let n_clusters = subjects.iter().map(|s| s.cluster + 1).max().unwrap_or(0);
        let covariates = (1..=p)
            .map(|j| Covariate::Numeric {
                column: format!("x{j}"),
            })
            .collect();
        let labels = (0..n_clusters).map(|c| c.to_string()).collect();
        Self::new(subjects, covariates, labels)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn clusters(&self) -> usize {
        self.cluster_labels.len()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariates.len()
    }

    pub fn max_finite_endpoint(&self) -> f64 {
        self.subjects
            .iter()
            .map(SubjectRecord::max_finite_endpoint)
            .fold(0.0, f64::max)
    }

    /// Mean of the finite interval midpoints (censoring times for
    /// right-censored subjects).
    pub fn mean_midpoint(&self) -> f64 {
        self.subjects.iter().map(SubjectRecord::midpoint).sum::<f64>() / self.len() as f64
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.len() < 3 || headers[..3] != ["cluster", "left", "right"] {
            return Err(Error::Data(
                "header must start with cluster,left,right".into(),
            ));
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            if rec.len() != headers.len() {
                return Err(Error::Data(format!(
                    "row {}: expected {} fields, got {}",
                    line + 1,
                    headers.len(),
                    rec.len()
                )));
            }
            rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
        }
        if rows.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }

        let cluster_labels = sorted_labels(rows.iter().map(|r| r[0].as_str()));
        let index: BTreeMap<&str, usize> = cluster_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();

        let covariates = infer_schema(&headers[3..], rows.iter().map(|r| &r[3..]));
        let mut subjects = Vec::with_capacity(rows.len());
        for (line, row) in rows.iter().enumerate() {
            let left = parse_time(&row[1], false)
                .ok_or_else(|| Error::Data(format!("row {}: bad left endpoint {:?}", line + 1, row[1])))?;
            let right = parse_time(&row[2], true)
                .ok_or_else(|| Error::Data(format!("row {}: bad right endpoint {:?}", line + 1, row[2])))?;
            let x = encode_row(&covariates, &headers[3..], &row[3..])
                .map_err(|e| Error::Data(format!("row {}: {e}", line + 1)))?;
            let subject = SubjectRecord::new(index[row[0].as_str()], left, right, x)
                .map_err(|e| Error::Data(format!("row {}: {e}", line + 1)))?;
            subjects.push(subject);
        }
        Self::new(subjects, covariates, cluster_labels)
    }

    /// Writes numeric datasets back in the input format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cluster".to_string(), "left".into(), "right".into()];
        header.extend(self.covariates.iter().map(Covariate::name));
        w.write_record(&header).map_err(csv_error)?;
        for s in &self.subjects {
            let mut row = vec![
                self.cluster_labels[s.cluster].clone(),
                format_f64(s.left),
                if s.right.is_infinite() {
                    "inf".to_string()
                } else {
                    format_f64(s.right)
                },
            ];
            row.extend(s.x.iter().map(|&v| format_f64(v)));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same value.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Reads covariate rows for prediction. The file needs a header containing
/// every source column of `schema`; extra columns are ignored.
pub fn read_covariate_rows<R: Read>(reader: R, schema: &[Covariate]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        let x = encode_row(schema, &headers, &fields)
            .map_err(|e| Error::Data(format!("row {}: {e}", line + 1)))?;
        out.push(x);
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn parse_time(s: &str, allow_inf: bool) -> Option<f64> {
    if allow_inf && (s.is_empty() || s.eq_ignore_ascii_case("inf")) {
        return Some(f64::INFINITY);
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn sorted_labels<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = labels.collect();
    let mut out: Vec<String> = set.into_iter().map(str::to_string).collect();
    if out.iter().all(|l| l.parse::<i64>().is_ok()) {
        out.sort_by_key(|l| l.parse::<i64>().unwrap());
    }
    out
}

fn infer_schema<'a>(
    names: &[String],
    rows: impl Iterator<Item = &'a [String]> + Clone,
) -> Vec<Covariate> {
    let mut schema = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let numeric = rows.clone().all(|r| r[j].parse::<f64>().is_ok_and(f64::is_finite));
        if numeric {
            schema.push(Covariate::Numeric {
                column: name.clone(),
            });
        } else {
            for level in sorted_labels(rows.clone().map(|r| r[j].as_str())) {
                schema.push(Covariate::Indicator {
                    column: name.clone(),
                    level,
                });
            }
        }
    }
    schema
}

fn encode_row(schema: &[Covariate], headers: &[String], fields: &[String]) -> Result<Vec<f64>> {
    schema
        .iter()
        .map(|c| {
            let j = headers
                .iter()
                .position(|h| h == c.column())
                .ok_or_else(|| Error::Data(format!("missing column {:?}", c.column())))?;
            let field = &fields[j];
            match c {
                Covariate::Numeric { column } => field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("column {column:?}: bad number {field:?}"))),
                Covariate::Indicator { level, .. } => Ok(f64::from(u8::from(field == level))),
            }
        })
        .collect()
}
