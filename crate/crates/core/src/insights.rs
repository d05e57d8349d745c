//! Presentation artefacts derived from validated reports: Pareto series,
//! causal-chain timelines, Markdown documents, plot-data tables and SVG.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::meta::RunMeta;
use crate::workflows::{
    AuditReport, CausalChainReport, ComparativeReport, Confidence, FailureModeReport, Report, ReportEnvelope,
    REVIEW_NOTICE,
};

pub const OTHER_LABEL: &str = "other";
pub const ANNOTATION_CHARS: usize = 140;
pub const DEFAULT_COVERAGE_PCT: f64 = 80.0;

#[derive(Debug, Error)]
pub enum InsightError {
    #[error("report has no failure modes to rank")]
    EmptyReport,
    #[error("chain {chain_id} references log '{log_id}' which is not in the corpus")]
    UnknownLog { chain_id: String, log_id: String },
    #[error("turbine '{0}' has no logs in the corpus")]
    UnknownTurbine(String),
    #[error("malformed plot-data table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Mode,
    /// Cohort logs no mode claimed.
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub rank: usize,
    pub label: String,
    pub kind: EntryKind,
    pub count: usize,
    pub percentage: f64,
    pub cumulative_percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSeries {
    pub entries: Vec<ParetoEntry>,
}

impl ParetoSeries {
    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    fn from_counts(mut modes: Vec<(String, usize)>, other: usize) -> Result<ParetoSeries, InsightError> {
        if modes.is_empty() {
            return Err(InsightError::EmptyReport);
        }
        modes.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total: usize = modes.iter().map(|m| m.1).sum::<usize>() + other;
        if total == 0 {
            return Err(InsightError::EmptyReport);
        }
        let pct = |n: usize| n as f64 / total as f64 * 100.0;
        let mut rows: Vec<(String, EntryKind, usize)> =
            modes.into_iter().map(|(l, c)| (l, EntryKind::Mode, c)).collect();
        if other > 0 {
            rows.push((OTHER_LABEL.to_owned(), EntryKind::Other, other));
        }
        let mut prefix = 0;
        let entries = rows
            .into_iter()
            .enumerate()
            .map(|(i, (label, kind, count))| {
                prefix += count;
                ParetoEntry {
                    rank: i + 1,
                    label,
                    kind,
                    count,
                    percentage: pct(count),
                    cumulative_percentage: pct(prefix),
                }
            })
            .collect();
        Ok(ParetoSeries { entries })
    }
}

/// Ranks modes by reconciled count (ties alphabetical); unassigned logs form a
/// trailing "other" entry. Cumulative shares come from integer prefix sums, so
/// the last one is exactly 100.
pub fn pareto(report: &FailureModeReport) -> Result<ParetoSeries, InsightError> {
    let modes = report
        .modes
        .iter()
        .map(|m| (m.name.clone(), m.reconciled_count))
        .collect();
    ParetoSeries::from_counts(modes, report.unassigned_count)
}

/// Smallest number of leading entries whose cumulative share reaches `threshold_pct`.
pub fn top_k_for_coverage(series: &ParetoSeries, threshold_pct: f64) -> usize {
    series
        .entries
        .iter()
        .position(|e| e.cumulative_percentage >= threshold_pct)
        .map_or(series.entries.len(), |i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineMarker {
    pub log_id: String,
    pub date: NaiveDate,
    pub subsystem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineLane {
    pub chain_id: String,
    pub confidence: Confidence,
    /// Hypothesis cut to [`ANNOTATION_CHARS`] characters.
    pub annotation: String,
    pub hypothesis: String,
    pub markers: Vec<TimelineMarker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineLayout {
    pub turbine_id: String,
    pub lanes: Vec<TimelineLane>,
    pub axis_range: (NaiveDate, NaiveDate),
}

fn truncate_chars(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_owned();
    }
    let mut out: String = text.chars().take(max - 3).collect();
    out.push_str("...");
    out
}

/// One lane per chain, lanes ordered by first event date (then chain id).
/// With no chains the axis spans the turbine's logs in `corpus`.
pub fn timeline(report: &CausalChainReport, corpus: &Corpus) -> Result<TimelineLayout, InsightError> {
    let index = corpus.index();
    let mut lanes = Vec::with_capacity(report.chains.len());
    for c in &report.chains {
        let mut markers = Vec::with_capacity(c.member_log_ids.len());
        for id in &c.member_log_ids {
            let log = index.get(id.as_str()).ok_or_else(|| InsightError::UnknownLog {
                chain_id: c.chain_id.clone(),
                log_id: id.clone(),
            })?;
            markers.push(TimelineMarker {
                log_id: id.clone(),
                date: log.event_date,
                subsystem: log.subsystem_name.clone(),
            });
        }
        markers.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.log_id.cmp(&b.log_id)));
        lanes.push(TimelineLane {
            chain_id: c.chain_id.clone(),
            confidence: c.confidence,
            annotation: truncate_chars(&c.hypothesis, ANNOTATION_CHARS),
            hypothesis: c.hypothesis.clone(),
            markers,
        });
    }
    lanes.sort_by(|a, b| {
        let fa = a.markers.first().map(|m| m.date);
        let fb = b.markers.first().map(|m| m.date);
        fa.cmp(&fb).then_with(|| a.chain_id.cmp(&b.chain_id))
    });
    let dates: Vec<NaiveDate> = if lanes.iter().any(|l| !l.markers.is_empty()) {
        lanes.iter().flat_map(|l| l.markers.iter().map(|m| m.date)).collect()
    } else {
        corpus
            .records()
            .iter()
            .filter(|r| r.turbine_id == report.turbine_id)
            .map(|r| r.event_date)
            .collect()
    };
    let (Some(min), Some(max)) = (dates.iter().min(), dates.iter().max()) else {
        return Err(InsightError::UnknownTurbine(report.turbine_id.clone()));
    };
    Ok(TimelineLayout {
        turbine_id: report.turbine_id.clone(),
        lanes,
        axis_range: (*min, *max),
    })
}

const PARETO_COLUMNS: [&str; 6] = ["rank", "label", "kind", "count", "percentage", "cumulative_percentage"];
const TIMELINE_COLUMNS: [&str; 7] = [
    "lane",
    "chain_id",
    "confidence",
    "log_id",
    "date",
    "subsystem",
    "annotation",
];

fn csv_string(meta: Option<&RunMeta>, header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    match meta {
        Some(m) => format!("{}\n{body}", m.comment_line()),
        None => body,
    }
}

/// Pareto series as CSV (full-precision percentages), optionally preceded by a
/// `#` metadata comment line.
pub fn export_pareto(series: &ParetoSeries, meta: Option<&RunMeta>) -> String {
    let rows = series
        .entries
        .iter()
        .map(|e| {
            vec![
                e.rank.to_string(),
                e.label.clone(),
                match e.kind {
                    EntryKind::Mode => "mode".into(),
                    EntryKind::Other => "other".into(),
                },
                e.count.to_string(),
                e.percentage.to_string(),
                e.cumulative_percentage.to_string(),
            ]
        })
        .collect();
    csv_string(meta, &PARETO_COLUMNS, rows)
}

pub fn import_pareto(text: &str) -> Result<ParetoSeries, InsightError> {
    let bad = |m: String| InsightError::Table(m);
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != PARETO_COLUMNS {
        return Err(bad(format!("expected columns {}", PARETO_COLUMNS.join(","))));
    }
    let mut entries = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| row.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64, InsightError> {
            field(k)
                .parse()
                .map_err(|_| bad(format!("row {}: column '{}' is not numeric", i + 1, PARETO_COLUMNS[k])))
        };
        let int = |k: usize| -> Result<usize, InsightError> {
            field(k).parse().map_err(|_| {
                bad(format!(
                    "row {}: column '{}' is not an integer",
                    i + 1,
                    PARETO_COLUMNS[k]
                ))
            })
        };
        let kind = match field(2) {
            "mode" => EntryKind::Mode,
            "other" => EntryKind::Other,
            k => return Err(bad(format!("row {}: unknown kind '{k}'", i + 1))),
        };
        entries.push(ParetoEntry {
            rank: int(0)?,
            label: field(1).to_owned(),
            kind,
            count: int(3)?,
            percentage: num(4)?,
            cumulative_percentage: num(5)?,
        });
    }
    Ok(ParetoSeries { entries })
}

/// Timeline as CSV, one row per marker in lane order.
pub fn export_timeline(layout: &TimelineLayout, meta: Option<&RunMeta>) -> String {
    let rows = layout
        .lanes
        .iter()
        .enumerate()
        .flat_map(|(i, lane)| {
            lane.markers.iter().map(move |m| {
                vec![
                    (i + 1).to_string(),
                    lane.chain_id.clone(),
                    lane.confidence.to_string(),
                    m.log_id.clone(),
                    m.date.to_string(),
                    m.subsystem.clone(),
                    lane.annotation.clone(),
                ]
            })
        })
        .collect();
    csv_string(meta, &TIMELINE_COLUMNS, rows)
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace(['\n', '\r'], " ")
}

fn meta_block(out: &mut String, meta: &RunMeta) {
    let _ = writeln!(out, "- Config hash: `{}`", meta.config_hash);
    let _ = writeln!(out, "- Seed: {}", meta.seed);
    let _ = writeln!(out, "- Template version: {}", meta.template_version);
    let _ = writeln!(out, "- Tool version: {}", meta.tool_version);
}

fn provider_block(out: &mut String, pm: &crate::workflows::ProviderMeta) {
    let _ = writeln!(out, "- Provider: {} (model `{}`)", pm.profile, pm.model);
    let _ = write!(out, "- Strategy: {} in {} chunk(s)", pm.strategy, pm.chunk_count);
    if let Some(f) = pm.sample_fraction {
        let _ = write!(out, ", sample fraction {f}");
    }
    out.push('\n');
}

/// Deterministic Markdown document for any report type.
pub fn render_markdown(envelope: &ReportEnvelope) -> String {
    let mut out = String::new();
    match &envelope.report {
        Report::FailureModes(r) => render_failure_modes(&mut out, r, &envelope.meta),
        Report::CausalChains(r) => render_causal(&mut out, r, &envelope.meta),
        Report::SiteComparison(r) => render_comparison(&mut out, r, &envelope.meta),
        Report::QualityAudit(r) => render_audit(&mut out, r, &envelope.meta),
    }
    out
}

fn render_failure_modes(out: &mut String, r: &FailureModeReport, meta: &RunMeta) {
    let _ = writeln!(out, "# Failure Mode Analysis: {}\n", r.cohort_ref.subject);
    let _ = writeln!(out, "- Cohort: {} logs", r.cohort_ref.size);
    provider_block(out, &r.provider_meta);
    meta_block(out, meta);
    out.push_str("\n## Failure Modes\n\n| Rank | Failure Mode | Synthesised Description |\n|---|---|---|\n");
    for m in &r.modes {
        let _ = writeln!(out, "| {} | {} | {} |", m.rank, cell(&m.name), cell(&m.description));
    }
    out.push_str("\n## Pareto\n\n");
    match pareto(r) {
        Ok(series) => {
            out.push_str("| Rank | Failure Mode | Logs | Share (%) | Cumulative (%) |\n|---|---|---|---|---|\n");
            for e in &series.entries {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.1} | {:.1} |",
                    e.rank,
                    cell(&e.label),
                    e.count,
                    e.percentage,
                    e.cumulative_percentage
                );
            }
            let k = top_k_for_coverage(&series, DEFAULT_COVERAGE_PCT);
            let _ = writeln!(
                out,
                "\nThe top {k} entries cover at least {DEFAULT_COVERAGE_PCT:.0}% of the cohort."
            );
        }
        Err(_) => out.push_str("No failure modes were reported.\n"),
    }
    out.push_str("\n## Supporting Evidence\n");
    for m in &r.modes {
        let _ = writeln!(out, "\n### {}. {}\n", m.rank, m.name);
        let _ = writeln!(
            out,
            "Model estimate: {}; reconciled count: {}.\n",
            m.estimated_count, m.reconciled_count
        );
        for q in &m.supporting_quotes {
            let _ = writeln!(out, "- `{}`: \"{}\"", q.log_id, q.quote);
        }
    }
}

fn render_causal(out: &mut String, r: &CausalChainReport, meta: &RunMeta) {
    let _ = writeln!(out, "# Causal Chain Analysis: turbine {}\n", r.turbine_id);
    let _ = writeln!(out, "> {REVIEW_NOTICE}\n");
    let _ = writeln!(out, "- Sequence: {} logs", r.cohort_ref.size);
    let _ = writeln!(out, "- Chains: {}", r.chains.len());
    provider_block(out, &r.provider_meta);
    meta_block(out, meta);
    out.push_str("\n## Timeline\n\n| Chain | Confidence | Start | End | Events |\n|---|---|---|---|---|\n");
    for c in &r.chains {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            c.chain_id,
            c.confidence,
            c.start_date,
            c.end_date,
            c.member_log_ids.len()
        );
    }
    out.push_str("\n## Chains\n");
    for c in &r.chains {
        let _ = writeln!(out, "\n### {} ({} confidence)\n", c.chain_id, c.confidence);
        let _ = writeln!(out, "{}\n", c.hypothesis);
        let ids: Vec<String> = c.member_log_ids.iter().map(|id| format!("`{id}`")).collect();
        let _ = writeln!(out, "Logs: {}", ids.join(", "));
    }
}

fn render_comparison(out: &mut String, r: &ComparativeReport, meta: &RunMeta) {
    let _ = writeln!(out, "# Comparative Site Analysis\n");
    let _ = writeln!(out, "> {REVIEW_NOTICE}\n");
    let _ = writeln!(
        out,
        "- Farms: {}",
        r.farms
            .iter()
            .map(|f| f.farm_id.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(out, "- Cohort: {} logs", r.cohort_ref.size);
    provider_block(out, &r.provider_meta);
    meta_block(out, meta);
    for f in &r.farms {
        let _ = writeln!(
            out,
            "\n## Farm {}\n\n| # | Pattern | Hypothesis |\n|---|---|---|",
            f.farm_id
        );
        for (i, p) in f.patterns.iter().enumerate() {
            let _ = writeln!(out, "| {} | {} | {} |", i + 1, cell(&p.pattern), cell(&p.hypothesis));
        }
    }
}

fn render_audit(out: &mut String, r: &AuditReport, meta: &RunMeta) {
    let _ = writeln!(out, "# Data Quality Audit\n");
    let _ = writeln!(
        out,
        "- Coverage: {} of {} logs ({:.1}%)",
        r.analysed_logs,
        r.corpus_size,
        r.chunk_coverage * 100.0
    );
    provider_block(out, &r.provider_meta);
    meta_block(out, meta);
    out.push_str("\n## Issues\n");
    for i in &r.issues {
        let _ = writeln!(out, "\n### {}\n\n{}", i.title, i.description);
        if !i.example_log_ids.is_empty() {
            let ids: Vec<String> = i.example_log_ids.iter().map(|id| format!("`{id}`")).collect();
            let _ = writeln!(out, "\nExample logs: {}", ids.join(", "));
        }
    }
    out.push_str("\n## Recommendations\n");
    for rec in &r.recommendations {
        let _ = writeln!(out, "\n### {}\n\n{}", rec.title, rec.description);
    }
}

fn xml(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Static SVG bar chart with a cumulative-share polyline.
pub fn pareto_svg(series: &ParetoSeries) -> String {
    let n = series.entries.len().max(1);
    let (w, h, left, bottom, top) = (60 * n + 120, 420usize, 60usize, 160usize, 20usize);
    let plot_h = (h - bottom - top) as f64;
    let max = series.entries.iter().map(|e| e.count).max().unwrap_or(1).max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let base = (h - bottom) as f64;
    let mut points = Vec::new();
    for (i, e) in series.entries.iter().enumerate() {
        let x = left + i * 60 + 10;
        let bh = e.count as f64 / max * plot_h;
        let fill = if e.kind == EntryKind::Other {
            "#bbbbbb"
        } else {
            "#4a78b0"
        };
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{:.1}" width="40" height="{bh:.1}" fill="{fill}"><title>{}: {}</title></rect>"#,
            base - bh,
            xml(&e.label),
            e.count
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" transform="rotate(60 {} {})">{}</text>"#,
            x + 20,
            h - bottom + 12,
            x + 20,
            h - bottom + 12,
            xml(&truncate_chars(&e.label, 28))
        );
        points.push(format!(
            "{},{:.1}",
            x + 20,
            base - e.cumulative_percentage / 100.0 * plot_h
        ));
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
        points.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        w - 20
    );
    s.push_str("</svg>\n");
    s
}

/// Static SVG with one horizontal lane per chain.
pub fn timeline_svg(layout: &TimelineLayout) -> String {
    let (left, width, lane_h) = (80.0, 800.0, 36.0);
    let h = 60.0 + lane_h * layout.lanes.len() as f64;
    let (start, end) = layout.axis_range;
    let span = ((end - start).num_days().max(1)) as f64;
    let x_of = |d: NaiveDate| left + (d - start).num_days() as f64 / span * width;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="11">"#,
        left + width + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="16">{} to {} (turbine {})</text>"#,
        start,
        end,
        xml(&layout.turbine_id)
    );
    for (i, lane) in layout.lanes.iter().enumerate() {
        let y = 40.0 + lane_h * i as f64;
        let colour = match lane.confidence {
            Confidence::High => "#1e8449",
            Confidence::Medium => "#d68910",
            Confidence::Low => "#922b21",
        };
        let _ = writeln!(s, r#"<text x="4" y="{:.1}">{}</text>"#, y + 4.0, xml(&lane.chain_id));
        if let (Some(a), Some(b)) = (lane.markers.first(), lane.markers.last()) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{colour}" stroke-width="2"><title>{}</title></line>"#,
                x_of(a.date),
                x_of(b.date),
                xml(&lane.annotation)
            );
        }
        for m in &lane.markers {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{y:.1}" r="4" fill="{colour}"><title>{} {} {}</title></circle>"#,
                x_of(m.date),
                xml(&m.log_id),
                m.date,
                xml(&m.subsystem)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
