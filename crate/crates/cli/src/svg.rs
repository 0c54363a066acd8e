//! Static SVG renderings of report tables.

use std::collections::BTreeSet;
use std::fmt::Write;

use evoroute_core::TrilemmaReport;

use crate::compare::CompareRow;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One stacked 100% bar per (policy, role), segments by model.
pub fn share_chart(reports: &[TrilemmaReport]) -> String {
    let models: Vec<String> = reports
        .iter()
        .flat_map(|r| r.selections_by_role.values())
        .flat_map(|m| m.keys().map(|k| k.to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let models_ref = &models;
    let bars: Vec<(String, Vec<(usize, f64)>)> = reports
        .iter()
        .flat_map(|r| {
            r.selections_by_role.iter().map(move |(role, counts)| {
                let total: u64 = counts.values().sum();
                let segs = counts
                    .iter()
                    .map(|(m, &n)| {
                        let idx = models_ref.iter().position(|x| x == m.as_str()).unwrap_or(0);
                        (
                            idx,
                            if total == 0 {
                                0.0
                            } else {
                                n as f64 / total as f64
                            },
                        )
                    })
                    .collect();
                (format!("{} / {role}", r.policy), segs)
            })
        })
        .collect();

    let (label_w, bar_w, bar_h, gap, top) = (220.0, 480.0, 22.0, 8.0, 30.0);
    let legend_h = 20.0 * models.len() as f64;
    let height = top + bars.len() as f64 * (bar_h + gap) + legend_h + 30.0;
    let width = label_w + bar_w + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="18" font-size="14">Selection share by role</text>"#
    );
    for (i, (label, segs)) in bars.iter().enumerate() {
        let y = top + i as f64 * (bar_h + gap);
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.1}">{}</text>"#,
            y + bar_h * 0.7,
            escape(label)
        );
        let mut x = label_w;
        for &(m, share) in segs {
            let w = share * bar_w;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{bar_h}" fill="{}"><title>{} {:.1}%</title></rect>"#,
                PALETTE[m % PALETTE.len()],
                escape(&models[m]),
                100.0 * share
            );
            x += w;
        }
    }
    let legend_top = top + bars.len() as f64 * (bar_h + gap) + 10.0;
    for (i, m) in models.iter().enumerate() {
        let y = legend_top + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{label_w}" y="{y:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            PALETTE[i % PALETTE.len()],
            label_w + 18.0,
            y + 10.0,
            escape(m)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Three panels (performance, cost, duration) of paired A/B bars.
pub fn trilemma_chart(rows: &[CompareRow]) -> String {
    type Metric = fn(&evoroute_core::simulator::SummaryRow) -> f64;
    let panels: [(&str, Metric); 3] = [
        ("mean performance", |r| r.mean_performance),
        ("total cost (USD)", |r| r.total_cost_usd),
        ("total duration (s)", |r| r.total_duration_s),
    ];
    let (panel_w, panel_h, pad) = (240.0, 220.0, 30.0);
    let width = 3.0 * (panel_w + pad) + pad;
    let height = panel_h + 90.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let slot = panel_w / rows.len().max(1) as f64;
    for (p, (title, metric)) in panels.iter().enumerate() {
        let x0 = pad + p as f64 * (panel_w + pad);
        let max = rows
            .iter()
            .flat_map(|r| [metric(&r.a), metric(&r.b)])
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let base = 30.0 + panel_h;
        let _ = writeln!(s, r#"<text x="{x0}" y="18">{title}</text>"#);
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{base}" x2="{:.1}" y2="{base}" stroke="#333"/>"##,
            x0 + panel_w
        );
        for (i, r) in rows.iter().enumerate() {
            for (k, (row, color)) in [(&r.a, PALETTE[0]), (&r.b, PALETTE[1])]
                .into_iter()
                .enumerate()
            {
                let h = metric(row) / max * panel_h;
                let x = x0 + i as f64 * slot + slot * (0.1 + 0.4 * k as f64);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{color}"><title>{} {:.4}</title></rect>"#,
                    base - h,
                    slot * 0.38,
                    escape(&row.policy),
                    metric(row)
                );
            }
        }
    }
    let legend_y = panel_h + 60.0;
    let names = rows
        .first()
        .map(|r| (r.a.policy.clone(), r.b.policy.clone()))
        .unwrap_or_default();
    for (k, name) in [names.0, names.1].iter().enumerate() {
        let x = pad + 200.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{legend_y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{} {}</text>"#,
            PALETTE[k],
            x + 18.0,
            legend_y + 10.0,
            if k == 0 { "A:" } else { "B:" },
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
