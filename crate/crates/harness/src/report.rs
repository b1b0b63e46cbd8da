//! Comparison tables and bar charts.

use std::fmt::Write as _;

use rosepoint_core::{MetricsReport, PartLabel};

use crate::record::RunRecord;
use crate::ExperimentTag;

/// Real-data experiments paired with their synthetic-pretrained variant, in
/// order of preference for the comparison table.
const PAIRS: [(ExperimentTag, ExperimentTag); 3] = [
    (ExperimentTag::III, ExperimentTag::SIII),
    (ExperimentTag::II, ExperimentTag::SII),
    (ExperimentTag::I, ExperimentTag::SI),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub class: String,
    pub row: String,
    /// One entry per architecture column; `None` for a missing cell.
    pub values: Vec<Option<f64>>,
}

/// Per-class IoU of a real-data experiment, its synthetic-pretrained variant
/// and the gain between them, one column per architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub architectures: Vec<String>,
    pub base: ExperimentTag,
    pub transfer: ExperimentTag,
    pub rows: Vec<ComparisonRow>,
}

fn class_value(report: &MetricsReport, class: Option<PartLabel>) -> f64 {
    match class {
        Some(c) => report.class(c).iou,
        None => report.miou,
    }
}

impl ComparisonTable {
    /// Builds the table from `(architecture, tag, macro report)` cells.
    pub fn from_cells(architectures: &[String], cells: &[(String, ExperimentTag, MetricsReport)]) -> ComparisonTable {
        let has = |tag: ExperimentTag| cells.iter().any(|(_, t, _)| *t == tag);
        let (base, transfer) = PAIRS
            .into_iter()
            .find(|&(b, t)| has(b) && has(t))
            .or_else(|| PAIRS.into_iter().find(|&(b, t)| has(b) || has(t)))
            .unwrap_or(PAIRS[0]);
        let lookup = |arch: &str, tag: ExperimentTag| cells.iter().find(|(a, t, _)| a == arch && *t == tag).map(|(_, _, r)| r);
        let classes: Vec<(String, Option<PartLabel>)> = PartLabel::ALL
            .into_iter()
            .map(|c| (capitalized(c.name()), Some(c)))
            .chain(std::iter::once(("MIoU".to_string(), None)))
            .collect();
        let mut rows = Vec::new();
        for (name, class) in classes {
            let b: Vec<Option<f64>> = architectures.iter().map(|a| lookup(a, base).map(|r| class_value(r, class))).collect();
            let t: Vec<Option<f64>> = architectures.iter().map(|a| lookup(a, transfer).map(|r| class_value(r, class))).collect();
            let gain = b.iter().zip(&t).map(|(b, t)| Some((*t)? - (*b)?)).collect();
            rows.push(ComparisonRow { class: name.clone(), row: base.name().into(), values: b });
            rows.push(ComparisonRow { class: name.clone(), row: transfer.name().into(), values: t });
            rows.push(ComparisonRow { class: name, row: "Gain".into(), values: gain });
        }
        ComparisonTable { architectures: architectures.to_vec(), base, transfer, rows }
    }

    pub fn from_records(architectures: &[String], records: &[RunRecord]) -> ComparisonTable {
        let cells: Vec<_> = records
            .iter()
            .filter_map(|r| Some((r.architecture.clone(), r.tag, r.macro_report.clone()?)))
            .collect();
        ComparisonTable::from_cells(architectures, &cells)
    }

    /// `class,row,<architecture...>` with one line per row; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = format!("class,row,{}\n", self.architectures.join(","));
        for row in &self.rows {
            let values: Vec<String> = row.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
            let _ = writeln!(out, "{},{},{}", row.class, row.row, values.join(","));
        }
        out
    }

    pub fn value(&self, class: &str, row: &str, architecture: &str) -> Option<f64> {
        let col = self.architectures.iter().position(|a| a == architecture)?;
        self.rows.iter().find(|r| r.class == class && r.row == row)?.values[col]
    }
}

/// Grouped bar chart of per-class IoU, one group per entry.
pub fn iou_bar_chart(title: &str, entries: &[(String, [f64; 3])]) -> String {
    const COLORS: [&str; 3] = ["#d9485f", "#4a9d4f", "#8a6a3b"];
    let (bar, gap, left, top, height) = (18.0, 24.0, 50.0, 40.0, 220.0);
    let group = 3.0 * bar + gap;
    let width = left + group * entries.len().max(1) as f64 + 130.0;
    let total_h = top + height + 90.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + height * (1.0 - v);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, width - 130.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, left - 6.0, y + 4.0);
    }
    for (g, (label, ious)) in entries.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group;
        for (c, &v) in ious.iter().enumerate() {
            let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
            let h = height * v;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{bar}" height="{h}" fill="{}"><title>{} {v:.4}</title></rect>"#,
                x0 + c as f64 * bar,
                top + height - h,
                COLORS[c],
                capitalized(PartLabel::ALL[c].name())
            );
        }
        let (lx, ly) = (x0 + 1.5 * bar, top + height + 14.0);
        let _ = writeln!(s, r#"<text x="{lx}" y="{ly}" text-anchor="end" transform="rotate(-35 {lx} {ly})">{}</text>"#, escape(label));
    }
    for (c, color) in COLORS.iter().enumerate() {
        let y = top + 16.0 * c as f64;
        let x = width - 115.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{color}"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 15.0, y + 9.0, capitalized(PartLabel::ALL[c].name()));
    }
    s.push_str("</svg>\n");
    s
}

fn capitalized(name: &str) -> String {
    let mut chars = name.chars();
    chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Chart entries `"<architecture> <tag>"` of records with a macro report.
pub fn chart_entries(records: &[RunRecord]) -> Vec<(String, [f64; 3])> {
    records
        .iter()
        .filter_map(|r| {
            let m = r.macro_report.as_ref()?;
            Some((format!("{} {}", r.architecture, r.tag), std::array::from_fn(|c| m.per_class[c].iou)))
        })
        .collect()
}
