//! Structured prompts for the four workflows: role, context, task list,
//! output contract and a log payload whose lines carry their `log_id`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohorts::{Cohort, CohortError, CohortKind};
use crate::corpus::{Corpus, MaintenanceLog, SiteContext};

pub const TEMPLATE_VERSION: &str = "v1";
const LAYOUT: &str = include_str!("../templates/prompt_v1.txt");

/// Separator between payload fields.
pub const FIELD_SEP: &str = " | ";
/// Prefix of a per-farm payload section heading.
pub const FARM_SECTION: &str = "### FARM ";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("wrong_cohort_kind: expected {expected}, got {got}")]
    WrongCohortKind { expected: &'static str, got: &'static str },
    #[error("empty cohort or chunk")]
    Empty,
    #[error("turbine sequence members are not in chronological order")]
    Unsorted,
    #[error("missing_context: no site context for farm '{0}'")]
    MissingContext(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workflow {
    FailureModes,
    CausalChain,
    SiteComparison,
    QualityAudit,
}

impl Workflow {
    pub fn as_str(self) -> &'static str {
        match self {
            Workflow::FailureModes => "failure_modes",
            Workflow::CausalChain => "causal_chain",
            Workflow::SiteComparison => "site_comparison",
            Workflow::QualityAudit => "quality_audit",
        }
    }

    pub fn parse(s: &str) -> Option<Workflow> {
        [
            Workflow::FailureModes,
            Workflow::CausalChain,
            Workflow::SiteComparison,
            Workflow::QualityAudit,
        ]
        .into_iter()
        .find(|w| w.as_str() == s)
    }
}

impl fmt::Display for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    StructuredObject,
    MarkdownReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputContract {
    pub kind: ContractKind,
    pub schema_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<String>,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub workflow: Workflow,
    pub subject: String,
    pub role: String,
    pub context_block: String,
    pub task_list: Vec<String>,
    pub output_contract: OutputContract,
    pub data_payload: Vec<PayloadSection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub estimated_tokens: usize,
}

/// ceil(chars / 4): a tokenizer-free planning heuristic.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn sanitize(field: &str) -> String {
    field
        .chars()
        .map(|c| match c {
            '\n' | '\r' | '\t' => ' ',
            '|' => '/',
            c => c,
        })
        .collect()
}

/// `log_id | date | subsystem | description | observations`
pub fn payload_line(log: &MaintenanceLog) -> String {
    [
        sanitize(&log.log_id),
        log.event_date.format("%Y-%m-%d").to_string(),
        sanitize(&log.subsystem_name),
        sanitize(&log.description),
        log.observations.as_deref().map(sanitize).unwrap_or_default(),
    ]
    .join(FIELD_SEP)
}

/// Log text as it appears in a payload line (description, then observations).
pub fn payload_text(log: &MaintenanceLog) -> String {
    match &log.observations {
        Some(o) => format!("{} {}", sanitize(&log.description), sanitize(o)),
        None => sanitize(&log.description),
    }
}

const PAYLOAD_LEGEND: &str =
    "Each DATA line is one maintenance log: log_id | date (YYYY-MM-DD) | subsystem | description | observations. \
     Free text may mix Portuguese and English and is reproduced verbatim.";

const FAILURE_MODE_SCHEMA: &str = r#"Return one JSON object and nothing else. Fields, all required, no others:
{
  "modes": [
    {
      "name": "<short failure mode name>",
      "description": "<one or two sentence technical description>",
      "estimated_count": <integer number of logs showing this mode>,
      "supporting_quotes": [
        { "log_id": "<log_id from DATA>", "quote": "<verbatim excerpt of that log's text>" }
      ]
    }
  ]
}
Every quote must be copied verbatim from the log it cites."#;

const CAUSAL_SCHEMA: &str = r#"Return one JSON object and nothing else. Fields, all required, no others:
{
  "turbine_id": "<turbine under analysis>",
  "chains": [
    {
      "chain_id": "<unique id, e.g. C1>",
      "member_log_ids": ["<log_id>", "<log_id>"],
      "hypothesis": "<physical mechanism linking the events>",
      "confidence": "low" | "medium" | "high"
    }
  ]
}
A chain has at least two member logs listed in chronological order. An empty "chains" list is valid."#;

const COMPARISON_SCHEMA: &str = r#"Return one JSON object and nothing else. Fields, all required, no others:
{
  "farms": [
    {
      "farm_id": "<farm id exactly as in DATA>",
      "patterns": [
        { "pattern": "<distinctive failure pattern>", "hypothesis": "<explanation grounded in the site context>" }
      ]
    }
  ]
}
Include every farm exactly once with one to five patterns each."#;

const AUDIT_SCHEMA: &str = r#"Return a Markdown report with exactly these second-level sections, in this order:
## Issues
### <issue title>
<description of the issue>
Example logs: <log_id>, <log_id>
## Recommendations
### <recommendation title>
<actionable recommendation for technicians>
Give at least one issue and one recommendation. "Example logs" lines are optional and may only cite log_ids from DATA."#;

fn check_kind(cohort: &Cohort, expected: CohortKind) -> Result<(), PromptError> {
    if cohort.kind != expected {
        return Err(PromptError::WrongCohortKind {
            expected: expected.as_str(),
            got: cohort.kind.as_str(),
        });
    }
    if cohort.is_empty() {
        return Err(PromptError::Empty);
    }
    Ok(())
}

fn section(lines: Vec<String>) -> Vec<PayloadSection> {
    vec![PayloadSection { heading: None, lines }]
}

/// Failure-mode prompt over an explicit log list (one chunk of a cohort).
pub fn failure_mode_prompt(subject: &str, logs: &[&MaintenanceLog]) -> Result<PromptSpec, PromptError> {
    if logs.is_empty() {
        return Err(PromptError::Empty);
    }
    Ok(PromptSpec {
        workflow: Workflow::FailureModes,
        subject: subject.to_owned(),
        role: "Reliability Engineer".into(),
        context_block: format!(
            "The data are {} maintenance work orders for the '{subject}' subsystem across a fleet of onshore wind turbines. \
             {PAYLOAD_LEGEND}",
            logs.len()
        ),
        task_list: vec![
            "Group semantically similar events into distinct failure modes.".into(),
            "Describe each failure mode in precise technical terms.".into(),
            "Estimate the number of logs belonging to each failure mode.".into(),
            "Extract verbatim supporting quotes for each mode, citing the log_id of every quote.".into(),
        ],
        output_contract: OutputContract {
            kind: ContractKind::StructuredObject,
            schema_text: FAILURE_MODE_SCHEMA.into(),
        },
        data_payload: section(logs.iter().map(|l| payload_line(l)).collect()),
    })
}

pub fn build_failure_mode_prompt(cohort: &Cohort, corpus: &Corpus) -> Result<PromptSpec, PromptError> {
    check_kind(cohort, CohortKind::Subsystem)?;
    let logs = cohort.resolve(corpus)?;
    failure_mode_prompt(&cohort.subject, &logs)
}

pub fn build_causal_prompt(cohort: &Cohort, corpus: &Corpus) -> Result<PromptSpec, PromptError> {
    check_kind(cohort, CohortKind::TurbineSequence)?;
    let logs = cohort.resolve(corpus)?;
    if logs
        .windows(2)
        .any(|w| (w[0].event_date, &w[0].log_id) > (w[1].event_date, &w[1].log_id))
    {
        return Err(PromptError::Unsorted);
    }
    let first = logs.first().map(|l| l.event_date.to_string()).unwrap_or_default();
    let last = logs.last().map(|l| l.event_date.to_string()).unwrap_or_default();
    Ok(PromptSpec {
        workflow: Workflow::CausalChain,
        subject: cohort.subject.clone(),
        role: "Diagnostic Engineer".into(),
        context_block: format!(
            "The data are the complete chronological maintenance history of turbine {} ({} logs, {first} to {last}), \
             covering all subsystems. {PAYLOAD_LEGEND}",
            cohort.subject,
            logs.len()
        ),
        task_list: vec![
            "Review the full chronological sequence of events.".into(),
            "Identify plausible physical relationships between events, within and across subsystems.".into(),
            "Construct a root-cause hypothesis for each chain of related events.".into(),
            "Assess the confidence of each chain as low, medium or high.".into(),
        ],
        output_contract: OutputContract {
            kind: ContractKind::StructuredObject,
            schema_text: CAUSAL_SCHEMA.into(),
        },
        data_payload: section(logs.iter().map(|l| payload_line(l)).collect()),
    })
}

fn describe_site(c: &SiteContext) -> String {
    let mut s = format!(
        "- Farm {}: turbine model {}; {} turbines; rated power {} MW; rotor diameter {} m; hub height {} m",
        c.farm_id, c.turbine_model_label, c.n_turbines, c.rated_power_mw, c.rotor_diameter_m, c.hub_height_m
    );
    if let Some(site) = &c.site_label {
        s.push_str(&format!("; site {site}"));
    }
    if !c.location_notes.is_empty() {
        s.push_str(&format!("; location: {}", c.location_notes));
    }
    s
}

/// Comparison prompt; `logs` restricts the payload (e.g. a sample) while the
/// farm list and contexts come from the cohort.
pub fn comparison_prompt(cohort: &Cohort, logs: &[&MaintenanceLog]) -> Result<PromptSpec, PromptError> {
    check_kind(cohort, CohortKind::FarmGroup)?;
    let contexts = cohort.context.as_deref().unwrap_or(&[]);
    let farms: Vec<String> = cohort.subject.split(',').map(str::to_owned).collect();
    for f in &farms {
        if !contexts.iter().any(|c| &c.farm_id == f) {
            return Err(PromptError::MissingContext(f.clone()));
        }
    }
    let mut context = format!(
        "The data are maintenance work orders from {} wind farms. Site context supplied by the operator:\n",
        farms.len()
    );
    for f in &farms {
        let c = contexts.iter().find(|c| &c.farm_id == f).expect("checked above");
        context.push_str(&describe_site(c));
        context.push('\n');
    }
    context.push_str(PAYLOAD_LEGEND);
    let sections = farms
        .iter()
        .map(|f| PayloadSection {
            heading: Some(format!("{FARM_SECTION}{f}")),
            lines: logs
                .iter()
                .filter(|l| &l.farm_id == f)
                .map(|l| payload_line(l))
                .collect(),
        })
        .collect();
    Ok(PromptSpec {
        workflow: Workflow::SiteComparison,
        subject: cohort.subject.clone(),
        role: "O&M Analyst".into(),
        context_block: context,
        task_list: vec![
            "Identify the prevalent and distinctive failure patterns at each site.".into(),
            "Formulate hypotheses for each pattern based on the provided environmental and operational context.".into(),
        ],
        output_contract: OutputContract {
            kind: ContractKind::StructuredObject,
            schema_text: COMPARISON_SCHEMA.into(),
        },
        data_payload: sections,
    })
}

pub fn build_comparison_prompt(cohort: &Cohort, corpus: &Corpus) -> Result<PromptSpec, PromptError> {
    check_kind(cohort, CohortKind::FarmGroup)?;
    let logs = cohort.resolve(corpus)?;
    comparison_prompt(cohort, &logs)
}

pub fn build_audit_prompt(chunk: &[&MaintenanceLog]) -> Result<PromptSpec, PromptError> {
    if chunk.is_empty() {
        return Err(PromptError::Empty);
    }
    Ok(PromptSpec {
        workflow: Workflow::QualityAudit,
        subject: "maintenance log corpus".into(),
        role: "Data Quality Expert".into(),
        context_block: format!(
            "The data are {} maintenance work orders drawn from the full log corpus. {PAYLOAD_LEGEND}",
            chunk.len()
        ),
        task_list: vec![
            "Assess the clarity of the free-text description and observations fields.".into(),
            "Identify common data quality issues, citing example log_ids.".into(),
            "Provide actionable recommendations for technicians entering future logs.".into(),
        ],
        output_contract: OutputContract {
            kind: ContractKind::MarkdownReport,
            schema_text: AUDIT_SCHEMA.into(),
        },
        data_payload: section(chunk.iter().map(|l| payload_line(l)).collect()),
    })
}

fn render_payload(sections: &[PayloadSection]) -> String {
    let mut lines: Vec<&str> = Vec::new();
    for s in sections {
        if let Some(h) = &s.heading {
            lines.push(h);
        }
        lines.extend(s.lines.iter().map(String::as_str));
    }
    lines.join("\n")
}

/// Deterministic rendering in fixed section order.
pub fn render(spec: &PromptSpec) -> RenderedPrompt {
    let tasks = spec
        .task_list
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let text = LAYOUT
        .replace("{{workflow}}", spec.workflow.as_str())
        .replace("{{template_version}}", TEMPLATE_VERSION)
        .replace("{{subject}}", &sanitize(&spec.subject))
        .replace("{{role}}", &spec.role)
        .replace("{{context}}", &spec.context_block)
        .replace("{{tasks}}", &tasks)
        .replace("{{contract}}", &spec.output_contract.schema_text)
        .replace("{{payload}}", &render_payload(&spec.data_payload));
    let estimated_tokens = estimate_tokens(&text);
    RenderedPrompt { text, estimated_tokens }
}

/// Token estimate of a spec with every payload line removed (headings kept).
pub fn overhead_tokens(spec: &PromptSpec) -> usize {
    let mut empty = spec.clone();
    for s in &mut empty.data_payload {
        s.lines.clear();
    }
    render(&empty).estimated_tokens
}

/// Upper-bound token contribution of one payload line (line plus newline).
pub fn line_tokens(line: &str) -> usize {
    (line.chars().count() + 1).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohorts::{subsystem_cohort, turbine_cohort, AliasTable};
    use crate::corpus::{ActionClass, Provenance, WorkClass};
    use chrono::NaiveDate;

    fn log(id: &str, farm: &str, turbine: &str, subsystem: &str, day: i64) -> MaintenanceLog {
        MaintenanceLog {
            log_id: id.into(),
            farm_id: farm.into(),
            turbine_id: turbine.into(),
            subsystem_name: subsystem.into(),
            event_date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap() + chrono::Duration::days(day),
            age_at_event_days: 100,
            work_class: WorkClass::Corrective,
            action_class: ActionClass::Repair,
            description: format!("Q8 breaker open event {id}"),
            observations: Some("Reset | done".into()),
        }
    }

    fn corpus() -> Corpus {
        let recs = vec![
            log("L1", "AA", "T1", "Power Converter", 3),
            log("L2", "AB", "T1", "Power Converter", 1),
            log("L3", "AB", "T2", "Gearbox", 2),
        ];
        Corpus::new(recs, Provenance::synthetic("t", 3)).unwrap()
    }

    #[test]
    fn failure_mode_prompt_shape() {
        let c = corpus();
        let cohort = subsystem_cohort(&c, "Power Converter", &AliasTable::default()).unwrap();
        let spec = build_failure_mode_prompt(&cohort, &c).unwrap();
        assert_eq!(spec.role, "Reliability Engineer");
        assert_eq!(spec.task_list.len(), 4);
        assert_eq!(spec.output_contract.kind, ContractKind::StructuredObject);
        let text = render(&spec).text;
        for id in &cohort.member_log_ids {
            assert_eq!(text.matches(&format!("\n{id} | ")).count(), 1);
        }
        assert!(text.contains("L2 | 2019-01-02 | Power Converter | Q8 breaker open event L2 | Reset / done"));
    }

    #[test]
    fn wrong_kind_rejected() {
        let c = corpus();
        let cohort = turbine_cohort(&c, "T1", "t").unwrap();
        assert_eq!(
            build_failure_mode_prompt(&cohort, &c),
            Err(PromptError::WrongCohortKind {
                expected: "subsystem",
                got: "turbine_sequence"
            })
        );
    }

    #[test]
    fn causal_payload_is_chronological() {
        let c = corpus();
        let cohort = turbine_cohort(&c, "T1", "t").unwrap();
        let spec = build_causal_prompt(&cohort, &c).unwrap();
        assert_eq!(spec.role, "Diagnostic Engineer");
        let lines = &spec.data_payload[0].lines;
        assert!(lines[0].starts_with("L2 | 2019-01-02"));
        assert!(lines[1].starts_with("L1 | 2019-01-04"));
    }

    #[test]
    fn audit_prompt_contract() {
        let c = corpus();
        let chunk: Vec<&MaintenanceLog> = c.records().iter().take(1).collect();
        let spec = build_audit_prompt(&chunk).unwrap();
        assert_eq!(spec.role, "Data Quality Expert");
        assert_eq!(spec.output_contract.kind, ContractKind::MarkdownReport);
        let text = render(&spec).text;
        assert!(text.contains("## Issues") && text.contains("## Recommendations"));
        assert_eq!(build_audit_prompt(&[]), Err(PromptError::Empty));
    }

    #[test]
    fn render_is_deterministic_and_estimates_tokens() {
        let c = corpus();
        let chunk: Vec<&MaintenanceLog> = c.records().iter().collect();
        let spec = build_audit_prompt(&chunk).unwrap();
        assert_eq!(render(&spec), render(&spec));
        assert_eq!(estimate_tokens(&"x".repeat(400)), 100);
        assert_eq!(estimate_tokens(&"x".repeat(401)), 101);
        assert_eq!(estimate_tokens(""), 0);
    }

    #[test]
    fn overhead_plus_lines_bounds_render() {
        let c = corpus();
        let chunk: Vec<&MaintenanceLog> = c.records().iter().collect();
        let spec = build_audit_prompt(&chunk).unwrap();
        let bound = overhead_tokens(&spec) + spec.data_payload[0].lines.iter().map(|l| line_tokens(l)).sum::<usize>();
        assert!(render(&spec).estimated_tokens <= bound);
    }

    #[test]
    fn reordering_payload_only_changes_payload() {
        let c = corpus();
        let mut chunk: Vec<&MaintenanceLog> = c.records().iter().collect();
        let a = render(&build_audit_prompt(&chunk).unwrap()).text;
        chunk.reverse();
        let b = render(&build_audit_prompt(&chunk).unwrap()).text;
        let head = |t: &str| t.split("## DATA").next().unwrap().to_owned();
        assert_eq!(head(&a), head(&b));
        assert_ne!(a, b);
    }
}
