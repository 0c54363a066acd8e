//! CSV export and import of trilemma reports.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::episode::TrilemmaReport;

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub episodes: usize,
    pub mean_performance: f64,
    pub total_cost_usd: f64,
    pub total_duration_s: f64,
}

impl From<&TrilemmaReport> for SummaryRow {
    fn from(r: &TrilemmaReport) -> Self {
        Self {
            policy: r.policy.clone(),
            episodes: r.episodes,
            mean_performance: r.mean_performance,
            total_cost_usd: r.total_cost,
            total_duration_s: r.total_duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub policy: String,
    pub role: String,
    pub model: String,
    pub count: u64,
    pub share: f64,
}

pub fn write_summary_csv<W: Write>(
    reports: &[TrilemmaReport],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        w.serialize(SummaryRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

/// Per-role selection shares; rows ordered by role, then model.
pub fn share_rows(report: &TrilemmaReport) -> Vec<ShareRow> {
    let mut rows = Vec::new();
    for (role, counts) in &report.selections_by_role {
        let total: u64 = counts.values().sum();
        for (model, &count) in counts {
            rows.push(ShareRow {
                policy: report.policy.clone(),
                role: role.to_string(),
                model: model.to_string(),
                count,
                share: if total == 0 {
                    0.0
                } else {
                    count as f64 / total as f64
                },
            });
        }
    }
    rows
}

pub fn write_share_csv<W: Write>(reports: &[TrilemmaReport], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in reports {
        for row in share_rows(r) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}
