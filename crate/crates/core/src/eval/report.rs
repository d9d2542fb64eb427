use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CopyReport, EvalError, Metric, Score};
use crate::generator::Setting;
use crate::jsonl::{self, LineError};

/// Means over copies, then over knowledge sets, for one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub setting: Setting,
    pub sets: usize,
    pub copies: usize,
    /// Sessions that failed and are excluded from the means.
    pub failed: usize,
    /// `None` when no set had a question for the metric.
    pub metrics: BTreeMap<Metric, Option<f64>>,
    /// Summed hits and denominators.
    pub counts: BTreeMap<Metric, Score>,
}

impl Aggregate {
    pub fn rate(&self, m: Metric) -> Option<f64> {
        self.metrics.get(&m).copied().flatten()
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates per-copy reports of a single setting.
///
/// The result does not depend on the order of `reports`.
pub fn aggregate(reports: &[CopyReport]) -> Result<Option<Aggregate>, EvalError> {
    let Some(first) = reports.first() else {
        return Ok(None);
    };
    if let Some(other) = reports.iter().find(|r| r.setting != first.setting) {
        return Err(EvalError::MixedSettings(first.setting, other.setting));
    }
    let mut by_set: BTreeMap<&str, Vec<&CopyReport>> = BTreeMap::new();
    for r in reports {
        by_set.entry(r.kset.as_str()).or_default().push(r);
    }
    for copies in by_set.values_mut() {
        copies.sort_by_key(|r| r.copy);
    }
    let mut metrics = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for m in Metric::ALL {
        let per_set = by_set
            .values()
            .map(|copies| mean(copies.iter().map(|r| r.rate(m))));
        metrics.insert(m, mean(per_set));
        let total = by_set
            .values()
            .flatten()
            .fold(Score::default(), |acc, r| acc + r.score(m));
        counts.insert(m, total);
    }
    Ok(Some(Aggregate {
        setting: first.setting,
        sets: by_set.len(),
        copies: reports.len(),
        failed: 0,
        metrics,
        counts,
    }))
}

/// One line of a report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportRecord {
    Copy(CopyReport),
    Aggregate(Aggregate),
}

pub fn write_report<W: Write>(records: &[ReportRecord], mut writer: W) -> std::io::Result<()> {
    for r in records {
        jsonl::write_record(&mut writer, r)?;
    }
    writer.flush()
}

pub fn read_report<R: BufRead>(reader: R) -> Result<Vec<ReportRecord>, LineError> {
    Ok(jsonl::read_records(reader)?.into_iter().map(|(_, r)| r).collect())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Flat table: one row per copy, then one `ALL` row per aggregate.
pub fn write_csv<W: Write>(records: &[ReportRecord], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["setting".to_owned(), "kset".to_owned(), "copy".to_owned()];
    header.extend(Metric::ALL.iter().map(|m| m.as_str().to_owned()));
    w.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row = match r {
            ReportRecord::Copy(c) => vec![c.setting.to_string(), c.kset.clone(), c.copy.to_string()],
            ReportRecord::Aggregate(a) => vec![a.setting.to_string(), "ALL".to_owned(), "mean".to_owned()],
        };
        row.extend(Metric::ALL.iter().map(|&m| match r {
            ReportRecord::Copy(c) => cell(c.rate(m)),
            ReportRecord::Aggregate(a) => cell(a.rate(m)),
        }));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> EvalError {
    EvalError::Io(std::io::Error::other(e))
}
