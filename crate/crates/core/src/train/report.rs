//! Human-readable tables plus a machine-readable document for results.

use serde::Serialize;
use serde_json::json;

use super::cv::{ablation_rows, AblationTable};
use super::metrics::{Metrics, MetricsReport};
use super::{Result, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub enum ResultSet {
    /// Single-run metrics per labeled row.
    Metrics(Vec<(String, Metrics)>),
    /// Cross-validated metrics per labeled row, shown as mean ± half-width.
    CrossValidation(Vec<(String, MetricsReport)>),
    Ablation(AblationTable),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderedReport {
    pub text: String,
    pub document: serde_json::Value,
}

const METRIC_HEADER: &str = "| Model | ACC | F1 | P | R |\n|---|---|---|---|---|\n";

/// `| label | ACC | F1 | P | R |` with two decimals.
pub fn metrics_row(label: &str, m: &Metrics) -> String {
    format!(
        "| {label} | {:.2} | {:.2} | {:.2} | {:.2} |",
        m.accuracy, m.f1, m.precision, m.recall
    )
}

fn pm(mean: f64, ci: f64) -> String {
    format!("{mean:.2} ± {ci:.2}")
}

pub fn emit_report(results: &ResultSet) -> Result<RenderedReport> {
    let empty = match results {
        ResultSet::Metrics(r) => r.is_empty(),
        ResultSet::CrossValidation(r) => r.is_empty(),
        ResultSet::Ablation(t) => t.rows.is_empty(),
    };
    if empty {
        return Err(TrainError::EmptyDataset("report"));
    }
    Ok(match results {
        ResultSet::Metrics(rows) => {
            let mut text = METRIC_HEADER.to_string();
            for (label, m) in rows {
                text.push_str(&metrics_row(label, m));
                text.push('\n');
            }
            let document = json!({
                "columns": ["accuracy", "f1", "precision", "recall"],
                "rows": rows.iter().map(|(l, m)| json!({"model": l, "metrics": m})).collect::<Vec<_>>(),
            });
            RenderedReport { text, document }
        }
        ResultSet::CrossValidation(rows) => {
            let mut text = METRIC_HEADER.to_string();
            for (label, r) in rows {
                text.push_str(&format!(
                    "| {label} | {} | {} | {} | {} |\n",
                    pm(r.accuracy.mean, r.accuracy.ci95),
                    pm(r.f1.mean, r.f1.ci95),
                    pm(r.precision.mean, r.precision.ci95),
                    pm(r.recall.mean, r.recall.ci95)
                ));
            }
            let document = json!({
                "columns": ["accuracy", "f1", "precision", "recall"],
                "rows": rows.iter().map(|(l, r)| json!({"model": l, "report": r})).collect::<Vec<_>>(),
            });
            RenderedReport { text, document }
        }
        ResultSet::Ablation(table) => {
            // fixed presentation order regardless of the order rows were run in
            let order: Vec<&str> = ablation_rows().into_iter().map(|(n, _)| n).collect();
            let mut rows: Vec<_> = table.rows.iter().collect();
            rows.sort_by_key(|r| order.iter().position(|n| *n == r.name).unwrap_or(usize::MAX));
            let mut text = String::from("| Model Configuration | F1 |\n|---|---|\n");
            for r in &rows {
                text.push_str(&format!("| {} | {} |\n", r.name, pm(r.report.f1.mean, r.report.f1.ci95)));
            }
            let document = json!({
                "columns": ["configuration", "f1"],
                "rows": rows.iter().map(|r| json!({
                    "configuration": r.name,
                    "ablation": r.ablation,
                    "f1": r.report.f1,
                    "report": r.report,
                })).collect::<Vec<_>>(),
            });
            RenderedReport { text, document }
        }
    })
}
