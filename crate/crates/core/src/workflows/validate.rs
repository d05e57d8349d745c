//! Strict parsing of provider output against the four output contracts.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::MaintenanceLog;
use crate::promptkit::payload_text;
use crate::text::fold;

use super::{Confidence, SupportingQuote};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    MissingField,
    UnknownField,
    NotInEnum,
    WrongType,
    EmptyValue,
    NegativeCount,
    Duplicate,
    ChainTooShort,
    QuoteNotInLog,
    TurbineMismatch,
    FarmCoverage,
    PatternCount,
    SectionOrder,
}

impl ViolationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationReason::MissingField => "missing_field",
            ViolationReason::UnknownField => "unknown_field",
            ViolationReason::NotInEnum => "not_in_enum",
            ViolationReason::WrongType => "wrong_type",
            ViolationReason::EmptyValue => "empty_value",
            ViolationReason::NegativeCount => "negative_count",
            ViolationReason::Duplicate => "duplicate",
            ViolationReason::ChainTooShort => "chain_too_short",
            ViolationReason::QuoteNotInLog => "quote_not_in_log",
            ViolationReason::TurbineMismatch => "turbine_mismatch",
            ViolationReason::FarmCoverage => "farm_coverage",
            ViolationReason::PatternCount => "pattern_count",
            ViolationReason::SectionOrder => "section_order",
        }
    }
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("malformed_syntax: {0}")]
    MalformedSyntax(String),
    /// `field` is a JSON path such as `chains[2].confidence`.
    #[error("schema_violation({field}, {reason})")]
    SchemaViolation { field: String, reason: ViolationReason },
    #[error("unknown_log_reference: '{log_id}' at {field} is not in the cohort")]
    UnknownLogReference { field: String, log_id: String },
    #[error("missing_heading: required section '{0}' not found")]
    MissingHeading(String),
}

impl ValidationError {
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::MalformedSyntax(_) => "malformed_syntax",
            ValidationError::SchemaViolation { .. } => "schema_violation",
            ValidationError::UnknownLogReference { .. } => "unknown_log_reference",
            ValidationError::MissingHeading(_) => "missing_heading",
        }
    }

    /// Last path segment of a schema violation's field, without indices.
    pub fn leaf_field(&self) -> Option<&str> {
        match self {
            ValidationError::SchemaViolation { field, .. } | ValidationError::UnknownLogReference { field, .. } => {
                field.rsplit('.').next().map(|s| s.split('[').next().unwrap_or(s))
            }
            _ => None,
        }
    }
}

fn violation(field: impl Into<String>, reason: ViolationReason) -> ValidationError {
    ValidationError::SchemaViolation {
        field: field.into(),
        reason,
    }
}

/// The logs a response may reference, in cohort order.
pub struct Scope<'a> {
    pub subject: String,
    pub farms: Vec<String>,
    logs: Vec<&'a MaintenanceLog>,
    position: HashMap<&'a str, usize>,
}

impl<'a> Scope<'a> {
    pub fn new(subject: impl Into<String>, logs: Vec<&'a MaintenanceLog>) -> Self {
        let position = logs.iter().enumerate().map(|(i, l)| (l.log_id.as_str(), i)).collect();
        Scope {
            subject: subject.into(),
            farms: Vec::new(),
            logs,
            position,
        }
    }

    pub fn with_farms(mut self, farms: Vec<String>) -> Self {
        self.farms = farms;
        self
    }

    pub fn logs(&self) -> &[&'a MaintenanceLog] {
        &self.logs
    }

    pub fn position(&self, log_id: &str) -> Option<usize> {
        self.position.get(log_id).copied()
    }

    pub fn get(&self, log_id: &str) -> Option<&'a MaintenanceLog> {
        self.position(log_id).map(|i| self.logs[i])
    }

    fn require(&self, field: &str, log_id: &str) -> Result<usize, ValidationError> {
        self.position(log_id)
            .ok_or_else(|| ValidationError::UnknownLogReference {
                field: field.into(),
                log_id: log_id.into(),
            })
    }
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
        return body.trim_end().strip_suffix("```").unwrap_or(body).trim();
    }
    t
}

fn parse_json(raw: &str) -> Result<Map<String, Value>, ValidationError> {
    let v: Value =
        serde_json::from_str(strip_fences(raw)).map_err(|e| ValidationError::MalformedSyntax(e.to_string()))?;
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(violation("$", ViolationReason::WrongType)),
    }
}

/// Checks an object has exactly `fields`, returning them in order.
fn fields<'v>(obj: &'v Value, path: &str, names: &[&str]) -> Result<Vec<&'v Value>, ValidationError> {
    let map = obj
        .as_object()
        .ok_or_else(|| violation(path, ViolationReason::WrongType))?;
    let join = |k: &str| {
        if path.is_empty() {
            k.to_owned()
        } else {
            format!("{path}.{k}")
        }
    };
    if let Some(k) = map.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(violation(join(k), ViolationReason::UnknownField));
    }
    names
        .iter()
        .map(|n| {
            map.get(*n)
                .ok_or_else(|| violation(join(n), ViolationReason::MissingField))
        })
        .collect()
}

fn string(v: &Value, path: &str) -> Result<String, ValidationError> {
    let s = v.as_str().ok_or_else(|| violation(path, ViolationReason::WrongType))?;
    let s = s.trim();
    if s.is_empty() {
        return Err(violation(path, ViolationReason::EmptyValue));
    }
    Ok(s.to_owned())
}

fn array<'v>(v: &'v Value, path: &str) -> Result<&'v Vec<Value>, ValidationError> {
    v.as_array().ok_or_else(|| violation(path, ViolationReason::WrongType))
}

fn top(raw: &str, names: &[&str]) -> Result<Vec<Value>, ValidationError> {
    let map = parse_json(raw)?;
    let obj = Value::Object(map);
    Ok(fields(&obj, "", names)?.into_iter().cloned().collect())
}

/// One mode as returned by the model, before merging and reconciliation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMode {
    pub name: String,
    pub description: String,
    pub estimated_count: u64,
    pub supporting_quotes: Vec<SupportingQuote>,
}

pub fn validate_failure_modes(raw: &str, scope: &Scope<'_>) -> Result<Vec<RawMode>, ValidationError> {
    let v = top(raw, &["modes"])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, m) in array(&v[0], "modes")?.iter().enumerate() {
        let p = format!("modes[{i}]");
        let f = fields(m, &p, &["name", "description", "estimated_count", "supporting_quotes"])?;
        let name = string(f[0], &format!("{p}.name"))?;
        if !seen.insert(fold(&name)) {
            return Err(violation(format!("{p}.name"), ViolationReason::Duplicate));
        }
        let description = string(f[1], &format!("{p}.description"))?;
        let count_path = format!("{p}.estimated_count");
        let estimated_count = match f[2].as_u64() {
            Some(c) => c,
            None if f[2].as_i64().is_some() => return Err(violation(count_path, ViolationReason::NegativeCount)),
            None => return Err(violation(count_path, ViolationReason::WrongType)),
        };
        let mut quotes = Vec::new();
        for (j, q) in array(f[3], &format!("{p}.supporting_quotes"))?.iter().enumerate() {
            let qp = format!("{p}.supporting_quotes[{j}]");
            let qf = fields(q, &qp, &["log_id", "quote"])?;
            let log_id = string(qf[0], &format!("{qp}.log_id"))?;
            let quote = string(qf[1], &format!("{qp}.quote"))?;
            scope.require(&format!("{qp}.log_id"), &log_id)?;
            let log = scope.get(&log_id).expect("required above");
            if !log.full_text().contains(&quote) && !payload_text(log).contains(&quote) {
                return Err(violation(format!("{qp}.quote"), ViolationReason::QuoteNotInLog));
            }
            quotes.push(SupportingQuote { log_id, quote });
        }
        out.push(RawMode {
            name,
            description,
            estimated_count,
            supporting_quotes: quotes,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawChain {
    pub chain_id: String,
    /// Members in cohort (chronological) order.
    pub member_log_ids: Vec<String>,
    pub hypothesis: String,
    pub confidence: Confidence,
}

pub fn validate_causal(raw: &str, scope: &Scope<'_>) -> Result<Vec<RawChain>, ValidationError> {
    let v = top(raw, &["turbine_id", "chains"])?;
    let turbine = string(&v[0], "turbine_id")?;
    if turbine != scope.subject {
        return Err(violation("turbine_id", ViolationReason::TurbineMismatch));
    }
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (i, c) in array(&v[1], "chains")?.iter().enumerate() {
        let p = format!("chains[{i}]");
        let f = fields(c, &p, &["chain_id", "member_log_ids", "hypothesis", "confidence"])?;
        let chain_id = string(f[0], &format!("{p}.chain_id"))?;
        if !ids.insert(chain_id.clone()) {
            return Err(violation(format!("{p}.chain_id"), ViolationReason::Duplicate));
        }
        let mut members: Vec<(usize, String)> = Vec::new();
        for (j, m) in array(f[1], &format!("{p}.member_log_ids"))?.iter().enumerate() {
            let mp = format!("{p}.member_log_ids[{j}]");
            let id = string(m, &mp)?;
            let pos = scope.require(&mp, &id)?;
            if members.iter().any(|(q, _)| *q == pos) {
                return Err(violation(mp, ViolationReason::Duplicate));
            }
            members.push((pos, id));
        }
        if members.len() < 2 {
            return Err(violation(format!("{p}.member_log_ids"), ViolationReason::ChainTooShort));
        }
        members.sort_by_key(|(pos, _)| *pos);
        let hypothesis = string(f[2], &format!("{p}.hypothesis"))?;
        let cp = format!("{p}.confidence");
        let confidence =
            Confidence::parse(&string(f[3], &cp)?).ok_or_else(|| violation(cp, ViolationReason::NotInEnum))?;
        out.push(RawChain {
            chain_id,
            member_log_ids: members.into_iter().map(|(_, id)| id).collect(),
            hypothesis,
            confidence,
        });
    }
    Ok(out)
}

pub const MAX_PATTERNS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SitePattern {
    pub pattern: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarmPatterns {
    pub farm_id: String,
    pub patterns: Vec<SitePattern>,
}

/// Returns one entry per scope farm, in scope order.
pub fn validate_comparison(raw: &str, scope: &Scope<'_>) -> Result<Vec<FarmPatterns>, ValidationError> {
    let v = top(raw, &["farms"])?;
    let mut by_farm: HashMap<String, FarmPatterns> = HashMap::new();
    for (i, e) in array(&v[0], "farms")?.iter().enumerate() {
        let p = format!("farms[{i}]");
        let f = fields(e, &p, &["farm_id", "patterns"])?;
        let farm_id = string(f[0], &format!("{p}.farm_id"))?;
        if !scope.farms.contains(&farm_id) {
            return Err(violation(format!("{p}.farm_id"), ViolationReason::NotInEnum));
        }
        if by_farm.contains_key(&farm_id) {
            return Err(violation(format!("{p}.farm_id"), ViolationReason::Duplicate));
        }
        let pats = array(f[1], &format!("{p}.patterns"))?;
        if pats.is_empty() || pats.len() > MAX_PATTERNS {
            return Err(violation(format!("{p}.patterns"), ViolationReason::PatternCount));
        }
        let mut patterns = Vec::new();
        for (j, q) in pats.iter().enumerate() {
            let qp = format!("{p}.patterns[{j}]");
            let qf = fields(q, &qp, &["pattern", "hypothesis"])?;
            patterns.push(SitePattern {
                pattern: string(qf[0], &format!("{qp}.pattern"))?,
                hypothesis: string(qf[1], &format!("{qp}.hypothesis"))?,
            });
        }
        by_farm.insert(farm_id.clone(), FarmPatterns { farm_id, patterns });
    }
    scope
        .farms
        .iter()
        .map(|f| {
            by_farm
                .remove(f)
                .ok_or_else(|| violation(format!("farms.{f}"), ViolationReason::FarmCoverage))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditIssue {
    pub title: String,
    pub description: String,
    pub example_log_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditChunk {
    pub issues: Vec<AuditIssue>,
    pub recommendations: Vec<Recommendation>,
}

pub const ISSUES_HEADING: &str = "Issues";
pub const RECOMMENDATIONS_HEADING: &str = "Recommendations";
const EXAMPLE_PREFIX: &str = "example logs:";

fn heading(line: &str, level: usize) -> Option<&str> {
    let t = line.trim();
    let hashes = t.chars().take_while(|c| *c == '#').count();
    (hashes == level && t[hashes..].starts_with(' ')).then(|| t[hashes..].trim())
}

/// `(title, body lines)` for each `###` entry in a section.
fn entries<'t>(lines: &[&'t str]) -> Vec<(&'t str, Vec<&'t str>)> {
    let mut out: Vec<(&str, Vec<&str>)> = Vec::new();
    for l in lines {
        if let Some(t) = heading(l, 3) {
            out.push((t, Vec::new()));
        } else if let Some(last) = out.last_mut() {
            if !l.trim().is_empty() {
                last.1.push(l.trim());
            }
        }
    }
    out
}

pub fn validate_audit(raw: &str, scope: &Scope<'_>) -> Result<AuditChunk, ValidationError> {
    let text = strip_fences(raw);
    let lines: Vec<&str> = text.lines().collect();
    let find = |name: &str| {
        lines
            .iter()
            .position(|l| heading(l, 2).is_some_and(|h| h.eq_ignore_ascii_case(name)))
    };
    let issues_at = find(ISSUES_HEADING).ok_or_else(|| ValidationError::MissingHeading(ISSUES_HEADING.into()))?;
    let recs_at =
        find(RECOMMENDATIONS_HEADING).ok_or_else(|| ValidationError::MissingHeading(RECOMMENDATIONS_HEADING.into()))?;
    if recs_at < issues_at {
        return Err(violation("recommendations", ViolationReason::SectionOrder));
    }
    let section_end = |from: usize| {
        lines[from + 1..]
            .iter()
            .position(|l| heading(l, 2).is_some() || heading(l, 1).is_some())
            .map(|p| p + from + 1)
            .unwrap_or(lines.len())
    };
    let mut issues = Vec::new();
    for (i, (title, body)) in entries(&lines[issues_at + 1..section_end(issues_at)])
        .into_iter()
        .enumerate()
    {
        let mut description = Vec::new();
        let mut examples = Vec::new();
        for l in body {
            if l.to_ascii_lowercase().starts_with(EXAMPLE_PREFIX) {
                for id in l[EXAMPLE_PREFIX.len()..]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                {
                    scope.require(&format!("issues[{i}].example_log_ids"), id)?;
                    if !examples.iter().any(|e: &String| e == id) {
                        examples.push(id.to_owned());
                    }
                }
            } else {
                description.push(l);
            }
        }
        if title.is_empty() {
            return Err(violation(format!("issues[{i}].title"), ViolationReason::EmptyValue));
        }
        issues.push(AuditIssue {
            title: title.to_owned(),
            description: description.join(" "),
            example_log_ids: examples,
        });
    }
    if issues.is_empty() {
        return Err(violation("issues", ViolationReason::EmptyValue));
    }
    let recommendations: Vec<Recommendation> = entries(&lines[recs_at + 1..section_end(recs_at)])
        .into_iter()
        .map(|(title, body)| Recommendation {
            title: title.to_owned(),
            description: body.join(" "),
        })
        .collect();
    if recommendations.is_empty() {
        return Err(violation("recommendations", ViolationReason::EmptyValue));
    }
    Ok(AuditChunk {
        issues,
        recommendations,
    })
}
