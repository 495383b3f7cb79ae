//! Text, CSV and JSON renderings of probe results.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Gender, ToneLabel};
use crate::error::{Error, Result};
use crate::probe::metrics::MetricsReport;
use crate::probe::protocol::{CrossValReport, SubgroupMode, SubgroupReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Input(format!("unknown format `{other}` (expected text, csv or json)"))),
        }
    }
}

fn pm(mean: f64, sd: f64) -> String {
    format!("{mean:.4} ± {sd:.4}")
}

fn header(format: Format, hash: &str) -> String {
    match format {
        Format::Text | Format::Csv => format!("# config_hash: {hash}\n"),
        Format::Json => String::new(),
    }
}

/// One row per configuration with fold mean ± SD.
pub fn summary_table(reports: &[CrossValReport], format: Format, hash: &str) -> Result<String> {
    let mut out = header(format, hash);
    match format {
        Format::Text => {
            let w = reports.iter().map(|r| r.name.chars().count()).max().unwrap_or(5).max(5);
            writeln!(out, "{:<w$}  {:<17}  {:<17}", "Model", "Acc", "F1").unwrap();
            for r in reports {
                writeln!(
                    out,
                    "{:<w$}  {:<17}  {:<17}",
                    r.name,
                    pm(r.accuracy_mean, r.accuracy_sd),
                    pm(r.f1_mean, r.f1_sd)
                )
                .unwrap();
            }
        }
        Format::Csv => {
            out.push_str("model,acc_mean,acc_sd,f1_mean,f1_sd,folds,fused\n");
            for r in reports {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.name,
                    r.accuracy_mean,
                    r.accuracy_sd,
                    r.f1_mean,
                    r.f1_sd,
                    r.folds.len(),
                    r.fused
                )
                .unwrap();
            }
        }
        Format::Json => {
            out = serde_json::to_string_pretty(&json!({ "config_hash": hash, "reports": reports }))?;
            out.push('\n');
        }
    }
    Ok(out)
}

/// Per-class precision, recall, F1 and support.
pub fn per_class_table(m: &MetricsReport, format: Format, hash: &str) -> Result<String> {
    let mut out = header(format, hash);
    match format {
        Format::Text => {
            writeln!(out, "{:<6}  {:>9}  {:>6}  {:>8}  {:>7}", "Class", "Precision", "Recall", "F1-score", "Support")
                .unwrap();
            for c in &m.per_class {
                writeln!(
                    out,
                    "{:<6}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
                    c.label, c.precision, c.recall, c.f1, c.support
                )
                .unwrap();
            }
            writeln!(out, "accuracy {:.4}  macro-F1 {:.4} over {} classes", m.accuracy, m.macro_f1, m.macro_classes)
                .unwrap();
        }
        Format::Csv => {
            out.push_str("class,precision,recall,f1,support\n");
            for c in &m.per_class {
                writeln!(out, "{},{},{},{},{}", c.label, c.precision, c.recall, c.f1, c.support).unwrap();
            }
        }
        Format::Json => {
            out = serde_json::to_string_pretty(&json!({ "config_hash": hash, "metrics": m }))?;
            out.push('\n');
        }
    }
    Ok(out)
}

/// Confusion counts, true class by row, predicted class by column.
pub fn confusion_csv(m: &MetricsReport, hash: &str) -> String {
    let names: Vec<String> = if m.confusion.len() == ToneLabel::COUNT {
        ToneLabel::ALL.iter().map(|l| l.to_string()).collect()
    } else {
        (0..m.confusion.len()).map(|k| k.to_string()).collect()
    };
    let mut out = header(Format::Csv, hash);
    writeln!(out, "true\\pred,{}", names.join(",")).unwrap();
    for (name, row) in names.iter().zip(&m.confusion) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(out, "{name},{}", cells.join(",")).unwrap();
    }
    out
}

/// Unified versus gender-specific scores per gender.
pub fn subgroup_table(reports: &[SubgroupReport], format: Format, hash: &str) -> Result<String> {
    let find = |mode: SubgroupMode, g: Gender| reports.iter().find(|r| r.mode == mode && r.gender == g);
    let mut out = header(format, hash);
    match format {
        Format::Text => {
            writeln!(
                out,
                "{:<7}  {:<17}  {:<17}  {:<17}  {:<17}",
                "Gender", "Unified Acc", "Unified F1", "Specific Acc", "Specific F1"
            )
            .unwrap();
            for g in Gender::ALL {
                let cell = |mode| {
                    find(mode, g).map_or(("-".to_string(), "-".to_string()), |r: &SubgroupReport| {
                        (pm(r.report.accuracy_mean, r.report.accuracy_sd), pm(r.report.f1_mean, r.report.f1_sd))
                    })
                };
                let (ua, uf) = cell(SubgroupMode::Unified);
                let (sa, sf) = cell(SubgroupMode::GenderSpecific);
                writeln!(out, "{:<7}  {ua:<17}  {uf:<17}  {sa:<17}  {sf:<17}", g.to_string()).unwrap();
            }
        }
        Format::Csv => {
            out.push_str("mode,gender,acc_mean,acc_sd,f1_mean,f1_sd,macro_classes\n");
            for r in reports {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.mode.display_name(),
                    r.gender,
                    r.report.accuracy_mean,
                    r.report.accuracy_sd,
                    r.report.f1_mean,
                    r.report.f1_sd,
                    r.report.pooled.macro_classes
                )
                .unwrap();
            }
        }
        Format::Json => {
            out = serde_json::to_string_pretty(&json!({ "config_hash": hash, "subgroups": reports }))?;
            out.push('\n');
        }
    }
    Ok(out)
}
