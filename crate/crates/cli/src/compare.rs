//! Paired comparison of two summary tables. Δ is always B − A.

use std::fmt::Write;

use evoroute_core::simulator::SummaryRow;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub a: SummaryRow,
    pub b: SummaryRow,
}

impl CompareRow {
    pub fn delta_performance(&self) -> f64 {
        self.b.mean_performance - self.a.mean_performance
    }

    pub fn delta_cost(&self) -> f64 {
        self.b.total_cost_usd - self.a.total_cost_usd
    }

    pub fn delta_duration(&self) -> f64 {
        self.b.total_duration_s - self.a.total_duration_s
    }
}

/// Pairs rows by position; both tables must list the same episode counts.
pub fn pair(a: &[SummaryRow], b: &[SummaryRow]) -> Result<Vec<CompareRow>, CliError> {
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Data("report has no rows".into()));
    }
    if a.len() != b.len() {
        return Err(CliError::Data(format!(
            "row counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.episodes != y.episodes {
                return Err(CliError::Data(format!(
                    "`{}` ran {} episodes but `{}` ran {}; not a paired comparison",
                    x.policy, x.episodes, y.policy, y.episodes
                )));
            }
            Ok(CompareRow {
                a: x.clone(),
                b: y.clone(),
            })
        })
        .collect()
}

fn percent(delta: f64, base: f64) -> String {
    if base == 0.0 {
        "n/a".into()
    } else {
        format!("{:+.1}%", 100.0 * delta / base)
    }
}

pub fn render(rows: &[CompareRow]) -> String {
    let header = [
        "A",
        "B",
        "episodes",
        "perf_A",
        "perf_B",
        "Δperf_pp",
        "cost_A",
        "cost_B",
        "Δcost",
        "Δcost_%",
        "dur_A",
        "dur_B",
        "Δdur",
        "Δdur_%",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        table.push(vec![
            r.a.policy.clone(),
            r.b.policy.clone(),
            r.a.episodes.to_string(),
            format!("{:.4}", r.a.mean_performance),
            format!("{:.4}", r.b.mean_performance),
            format!("{:+.2}", 100.0 * r.delta_performance()),
            format!("{:.4}", r.a.total_cost_usd),
            format!("{:.4}", r.b.total_cost_usd),
            format!("{:+.4}", r.delta_cost()),
            percent(r.delta_cost(), r.a.total_cost_usd),
            format!("{:.1}", r.a.total_duration_s),
            format!("{:.1}", r.b.total_duration_s),
            format!("{:+.1}", r.delta_duration()),
            percent(r.delta_duration(), r.a.total_duration_s),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            table
                .iter()
                .map(|row| row[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
