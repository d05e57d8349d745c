//! Rule-based offline provider. It reads the rendered prompt layout and
//! answers from bracketed marker tokens embedded in the log text:
//! `[FM:<MODE>]` failure modes, `[CC:<nn>:<LEVEL>]` causal chains and
//! `[SK:<TOKEN>]` site-specific patterns.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use super::{Provider, ProviderError, ProviderErrorKind, ProviderResponse};
use crate::promptkit::{Workflow, FARM_SECTION, FIELD_SEP};
use crate::text;

static MODE_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[FM:([A-Z0-9_]+)\]").unwrap());
static CHAIN_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[CC:([0-9]+):(LOW|MEDIUM|HIGH)\]").unwrap());
static PATTERN_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([A-Z]{2}):([A-Z0-9_]+)\]").unwrap());

/// Name given to logs that carry no mode token.
pub const FALLBACK_MODE: &str = "Unclassified events";
const MAX_QUOTES: usize = 5;
const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum MockError {
    #[error("unparseable prompt layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone)]
struct Row<'a> {
    log_id: &'a str,
    date: &'a str,
    subsystem: &'a str,
    description: &'a str,
    observations: &'a str,
}

impl Row<'_> {
    fn text(&self) -> String {
        format!("{} {}", self.description, self.observations)
    }
}

struct Parsed<'a> {
    workflow: Workflow,
    subject: &'a str,
    context: Vec<&'a str>,
    sections: Vec<(Option<&'a str>, Vec<Row<'a>>)>,
}

fn header<'a>(lines: &[&'a str], key: &str) -> Result<&'a str, MockError> {
    lines
        .iter()
        .find_map(|l| l.strip_prefix(key))
        .map(str::trim)
        .ok_or_else(|| MockError::Layout(format!("missing '{key}' header")))
}

fn parse(prompt: &str) -> Result<Parsed<'_>, MockError> {
    let lines: Vec<&str> = prompt.lines().collect();
    let wf = header(&lines, "WORKFLOW:")?;
    let workflow = Workflow::parse(wf).ok_or_else(|| MockError::Layout(format!("unknown workflow '{wf}'")))?;
    let subject = header(&lines, "SUBJECT:")?;
    let pos = |needle: &str, from: usize| lines[from..].iter().position(|l| *l == needle).map(|p| p + from);
    let context = match pos("## CONTEXT", 0) {
        Some(s) => lines[s + 1..pos("## TASKS", s).unwrap_or(s + 1)].to_vec(),
        None => Vec::new(),
    };
    let start = pos("## DATA", 0).ok_or_else(|| MockError::Layout("missing DATA section".into()))?;
    let end = pos("## END DATA", start).ok_or_else(|| MockError::Layout("unterminated DATA section".into()))?;
    let mut sections: Vec<(Option<&str>, Vec<Row>)> = Vec::new();
    for (i, line) in lines[start + 1..end].iter().enumerate() {
        if let Some(farm) = line.strip_prefix(FARM_SECTION) {
            sections.push((Some(farm.trim()), Vec::new()));
            continue;
        }
        let f: Vec<&str> = line.splitn(5, FIELD_SEP).collect();
        if f.len() < 4 || f[0].is_empty() {
            return Err(MockError::Layout(format!("DATA line {} is not a payload line", i + 1)));
        }
        if sections.is_empty() {
            sections.push((None, Vec::new()));
        }
        let observations = f.get(4).copied().unwrap_or("");
        sections.last_mut().expect("pushed").1.push(Row {
            log_id: f[0],
            date: f[1],
            subsystem: f[2],
            description: f[3],
            observations: observations.trim_end(),
        });
    }
    Ok(Parsed {
        workflow,
        subject,
        context,
        sections,
    })
}

#[derive(Serialize)]
struct Quote<'a> {
    log_id: &'a str,
    quote: &'a str,
}

#[derive(Serialize)]
struct Mode<'a> {
    name: String,
    description: String,
    estimated_count: usize,
    supporting_quotes: Vec<Quote<'a>>,
}

#[derive(Serialize)]
struct Modes<'a> {
    modes: Vec<Mode<'a>>,
}

fn mode_name(token: &str) -> String {
    format!("{token} failures")
}

fn failure_modes(rows: &[&Row<'_>]) -> String {
    let mut groups: BTreeMap<String, Vec<&Row>> = BTreeMap::new();
    for row in rows {
        let name = MODE_TOKEN
            .captures(&row.text())
            .map(|c| mode_name(&c[1]))
            .unwrap_or_else(|| FALLBACK_MODE.to_owned());
        groups.entry(name).or_default().push(row);
    }
    let mut modes: Vec<Mode> = groups
        .into_iter()
        .map(|(name, members)| Mode {
            description: if name == FALLBACK_MODE {
                "Events without a recognisable recurring failure signature.".into()
            } else {
                format!(
                    "Recurring events sharing the {} signature in the work-order text.",
                    name.trim_end_matches(" failures")
                )
            },
            estimated_count: members.len(),
            supporting_quotes: members
                .iter()
                .take(MAX_QUOTES)
                .map(|r| Quote {
                    log_id: r.log_id,
                    quote: r.description,
                })
                .collect(),
            name,
        })
        .collect();
    modes.sort_by(|a, b| {
        b.estimated_count
            .cmp(&a.estimated_count)
            .then_with(|| a.name.cmp(&b.name))
    });
    serde_json::to_string_pretty(&Modes { modes }).expect("serializes")
}

#[derive(Serialize)]
struct Chain<'a> {
    chain_id: String,
    member_log_ids: Vec<&'a str>,
    hypothesis: String,
    confidence: String,
}

#[derive(Serialize)]
struct Chains<'a> {
    turbine_id: &'a str,
    chains: Vec<Chain<'a>>,
}

fn causal(subject: &str, rows: &[&Row<'_>]) -> String {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (String, Vec<&Row>)> = HashMap::new();
    for row in rows {
        if let Some(c) = CHAIN_TOKEN.captures(&row.text()) {
            let id = c[1].to_owned();
            if !groups.contains_key(&id) {
                order.push(id.clone());
            }
            groups
                .entry(id)
                .or_insert_with(|| (c[2].to_ascii_lowercase(), Vec::new()))
                .1
                .push(row);
        }
    }
    let chains = order
        .into_iter()
        .filter_map(|id| {
            let (confidence, members) = groups.remove(&id).expect("grouped");
            if members.len() < 2 {
                return None;
            }
            let mut subsystems: Vec<&str> = Vec::new();
            for m in &members {
                if !subsystems.contains(&m.subsystem) {
                    subsystems.push(m.subsystem);
                }
            }
            let first = members.first().expect("non-empty").date;
            let last = members.last().expect("non-empty").date;
            Some(Chain {
                chain_id: format!("C{id}"),
                member_log_ids: members.iter().map(|m| m.log_id).collect(),
                hypothesis: format!(
                    "Events between {first} and {last} on {} share marker CC:{id} and are treated as one progressing degradation.",
                    subsystems.join(", ")
                ),
                confidence,
            })
        })
        .collect();
    serde_json::to_string_pretty(&Chains {
        turbine_id: subject,
        chains,
    })
    .expect("serializes")
}

#[derive(Serialize)]
struct Pattern {
    pattern: String,
    hypothesis: String,
}

#[derive(Serialize)]
struct Farm<'a> {
    farm_id: &'a str,
    patterns: Vec<Pattern>,
}

#[derive(Serialize)]
struct Farms<'a> {
    farms: Vec<Farm<'a>>,
}

fn row_tokens(row: &Row<'_>) -> HashSet<String> {
    PATTERN_TOKEN
        .captures_iter(&row.text())
        .map(|c| format!("{}:{}", &c[1], &c[2]))
        .collect()
}

type FarmTally<'a> = (&'a str, HashMap<String, usize>, usize, &'a Vec<Row<'a>>);

fn comparison(parsed: &Parsed<'_>) -> String {
    let per_farm: Vec<FarmTally> = parsed
        .sections
        .iter()
        .map(|(farm, rows)| {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for r in rows {
                for t in row_tokens(r) {
                    *counts.entry(t).or_default() += 1;
                }
            }
            (farm.unwrap_or(parsed.subject), counts, rows.len(), rows)
        })
        .collect();
    let mut farms = Vec::new();
    for (i, (farm, counts, n, rows)) in per_farm.iter().enumerate() {
        let context = parsed
            .context
            .iter()
            .find(|l| l.starts_with(&format!("- Farm {farm}:")))
            .map(|l| l.trim_start_matches("- ").to_owned())
            .unwrap_or_else(|| format!("Farm {farm}: no context supplied"));
        let rest_n: usize = per_farm
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, f)| f.2)
            .sum();
        let share = |c: usize, d: usize| if d == 0 { 0.0 } else { c as f64 / d as f64 };
        let mut scored: Vec<(f64, usize, &String, f64, f64)> = counts
            .iter()
            .map(|(t, c)| {
                let rest_c: usize = per_farm
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, f)| f.1.get(t).copied().unwrap_or(0))
                    .sum();
                let (a, b) = (share(*c, *n), share(rest_c, rest_n));
                (a - b, *c, t, a, b)
            })
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.cmp(&x.1)).then(x.2.cmp(y.2)));
        let mut chosen: Vec<_> = scored.iter().filter(|s| s.0 > 0.0).take(3).collect();
        if chosen.is_empty() {
            chosen = scored.iter().take(1).collect();
        }
        let mut patterns: Vec<Pattern> = chosen
            .into_iter()
            .map(|(_, c, t, a, b)| Pattern {
                pattern: format!("Recurrent [{t}] events ({c} of {n} logs)"),
                hypothesis: format!(
                    "Rate of {:.1}% against {:.1}% at the other farms; relevant site factors: {context}.",
                    a * 100.0,
                    b * 100.0
                ),
            })
            .collect();
        if patterns.is_empty() {
            let mut subs: BTreeMap<&str, usize> = BTreeMap::new();
            for r in rows.iter() {
                *subs.entry(r.subsystem).or_default() += 1;
            }
            let top = subs.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)));
            patterns.push(match top {
                Some((s, c)) => Pattern {
                    pattern: format!("Frequent {s} interventions ({c} of {n} logs)"),
                    hypothesis: format!(
                        "Most maintenance effort concentrates on {s}; relevant site factors: {context}."
                    ),
                },
                None => Pattern {
                    pattern: "No logs supplied for this farm".into(),
                    hypothesis: format!("Nothing to compare; relevant site factors: {context}."),
                },
            });
        }
        farms.push(Farm {
            farm_id: farm,
            patterns,
        });
    }
    serde_json::to_string_pretty(&Farms { farms }).expect("serializes")
}

const PT_MARKERS: &[&str] = &[
    "falha",
    "avaria",
    "substituicao",
    "substituido",
    "reparacao",
    "inspecao",
    "disjuntor",
    "conversor",
    "verificacao",
    "manutencao",
    "troca",
    "cabo",
    "sem",
];
const EN_MARKERS: &[&str] = &[
    "failure",
    "fault",
    "replacement",
    "replaced",
    "repair",
    "inspection",
    "breaker",
    "converter",
    "check",
    "maintenance",
    "cable",
    "without",
];

fn has_marker(text_folded: &[String], markers: &[&str]) -> bool {
    text_folded.iter().any(|t| markers.contains(&t.as_str()))
}

fn examples(ids: Vec<&str>) -> String {
    if ids.is_empty() {
        String::new()
    } else {
        format!(
            "Example logs: {}\n",
            ids.into_iter().take(MAX_EXAMPLES).collect::<Vec<_>>().join(", ")
        )
    }
}

fn audit(rows: &[&Row<'_>]) -> String {
    let redundant: Vec<&str> = rows
        .iter()
        .filter(|r| !r.observations.is_empty() && r.observations.trim() == r.description.trim())
        .map(|r| r.log_id)
        .collect();
    let vague: Vec<&str> = rows
        .iter()
        .filter(|r| {
            let toks = text::tokens(r.description);
            toks.len() <= 5 && !r.description.chars().any(|c| c.is_ascii_digit())
        })
        .map(|r| r.log_id)
        .collect();
    let folded: Vec<Vec<String>> = rows.iter().map(|r| text::tokens(&text::fold(&r.text()))).collect();
    let any_en = folded.iter().any(|t| has_marker(t, EN_MARKERS));
    let mixed: Vec<&str> = rows
        .iter()
        .zip(&folded)
        .filter(|(_, t)| any_en && has_marker(t, PT_MARKERS))
        .map(|(r, _)| r.log_id)
        .collect();
    let mut md = String::from("# Data Quality Audit\n\n## Issues\n\n");
    md.push_str("### Redundancy between Description and Observations\n");
    md.push_str(&format!(
        "{} of {} logs repeat the description verbatim in the observations field, adding no information.\n",
        redundant.len(),
        rows.len()
    ));
    md.push_str(&examples(redundant));
    md.push_str("\n### Lack of Specificity and Quantification\n");
    md.push_str(&format!(
        "{} of {} descriptions are short and carry no measured values, part numbers or quantities.\n",
        vague.len(),
        rows.len()
    ));
    md.push_str(&examples(vague));
    md.push_str("\n### Inconsistent Terminology and Formatting\n");
    md.push_str(&format!(
        "{} of {} logs use Portuguese terms while others describe the same components in English.\n",
        mixed.len(),
        rows.len()
    ));
    md.push_str(&examples(mixed));
    md.push_str("\n## Recommendations\n\n");
    md.push_str("### Implement Structured Data Entry\nUse mandatory fields for component, symptom, action and measured values instead of one free-text box.\n\n");
    md.push_str("### Develop and Enforce Controlled Vocabularies\nAgree one term per component and failure symptom, in one language, and offer them as pick lists.\n\n");
    md.push_str("### Promote a Culture of Quantitative Reporting\nAsk technicians to record readings, tolerances and part references whenever an intervention is logged.\n");
    md
}

/// Deterministic answer for a rendered prompt.
pub fn mock_complete(prompt: &str) -> Result<String, MockError> {
    let parsed = parse(prompt)?;
    let rows: Vec<&Row> = parsed.sections.iter().flat_map(|s| s.1.iter()).collect();
    Ok(match parsed.workflow {
        Workflow::FailureModes => failure_modes(&rows),
        Workflow::CausalChain => causal(parsed.subject, &rows),
        Workflow::SiteComparison => comparison(&parsed),
        Workflow::QualityAudit => audit(&rows),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

impl Provider for MockProvider {
    fn send(&self, prompt: &str) -> Result<ProviderResponse, ProviderError> {
        mock_complete(prompt)
            .map(ProviderResponse::text)
            .map_err(|e| ProviderError::new(ProviderErrorKind::BadResponse, e.to_string()))
    }
}
