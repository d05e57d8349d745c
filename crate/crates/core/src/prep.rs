//! Secondary cleaning: informativeness filtering, regex noise removal,
//! non-turbine exclusion, duplicate removal and reversible farm anonymization.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, MaintenanceLog, SiteContext};
use crate::text::{fold, is_code_token, tokens};

pub const MAX_FARMS: usize = 26 * 26;

#[derive(Debug, Error, PartialEq)]
pub enum PrepError {
    #[error("{0} distinct farms exceed the {MAX_FARMS} available two-letter codes")]
    TooManyFarms(usize),
    #[error("unknown_code: '{0}' is not in the glossary")]
    UnknownCode(String),
    #[error("policy error: {0}")]
    Policy(String),
    #[error("glossary error: {0}")]
    Glossary(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformativenessPolicy {
    pub min_token_count: usize,
    /// Whole-text placeholders, compared after folding.
    pub placeholders: Vec<String>,
    /// Text made only of error codes (and placeholders) carries no words.
    pub code_only_uninformative: bool,
    /// Subsystems that are not part of the turbine (folded exact match).
    pub non_turbine_subsystems: Vec<String>,
    /// Vendor boilerplate stripped from the start of free text (case-insensitive).
    pub boilerplate_prefixes: Vec<String>,
}

impl Default for InformativenessPolicy {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        InformativenessPolicy {
            min_token_count: 3,
            placeholders: s(&[
                "none",
                "n/a",
                "na",
                "ok",
                "-",
                "teste",
                "test",
                "nada",
                "sem observacoes",
                "null",
                ".",
                "?",
            ]),
            code_only_uninformative: true,
            non_turbine_subsystems: s(&[
                "substation",
                "met mast",
                "roads",
                "buildings",
                "subestacao",
                "torre meteorologica",
                "acessos",
                "edificios",
            ]),
            boilerplate_prefixes: s(&[
                "OT:",
                "O.T.",
                "WO:",
                "Work order:",
                "Ordem de trabalho:",
                "Ordem de serviço:",
            ]),
        }
    }
}

impl InformativenessPolicy {
    /// Parses a `key = value` policy file; list values are comma-separated.
    /// Keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self, PrepError> {
        let mut p = InformativenessPolicy::default();
        let list = |v: &str| {
            v.split(',')
                .map(|x| x.trim().to_owned())
                .filter(|x| !x.is_empty())
                .collect()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PrepError::Policy(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "min_token_count" => {
                    p.min_token_count = v
                        .parse()
                        .map_err(|_| PrepError::Policy(format!("line {}: min_token_count must be an integer", n + 1)))?
                }
                "placeholders" => p.placeholders = list(v),
                "code_only_uninformative" => {
                    p.code_only_uninformative = v
                        .parse()
                        .map_err(|_| PrepError::Policy(format!("line {}: expected true/false", n + 1)))?
                }
                "non_turbine_subsystems" => p.non_turbine_subsystems = list(v),
                "boilerplate_prefixes" => p.boilerplate_prefixes = list(v),
                other => return Err(PrepError::Policy(format!("line {}: unknown key '{other}'", n + 1))),
            }
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, PrepError> {
        let text = std::fs::read_to_string(path).map_err(|e| PrepError::Policy(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn is_placeholder(&self, folded: &str) -> bool {
        self.placeholders.iter().any(|p| fold(p) == folded)
    }

    pub fn is_non_turbine(&self, subsystem: &str) -> bool {
        let s = fold(subsystem.trim());
        self.non_turbine_subsystems.iter().any(|b| fold(b) == s)
    }
}

/// Case- and diacritic-insensitive informativeness predicate.
pub fn is_informative(text: &str, policy: &InformativenessPolicy) -> bool {
    let folded = fold(text);
    let stripped = folded.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    if stripped.is_empty() || policy.is_placeholder(folded.trim()) || policy.is_placeholder(stripped) {
        return false;
    }
    let toks = tokens(&folded);
    if policy.code_only_uninformative && toks.iter().all(|t| is_code_token(t) || policy.is_placeholder(t)) {
        return false;
    }
    toks.len() >= policy.min_token_count
}

/// Compiled cleaning rules.
#[derive(Debug, Clone)]
pub struct TextCleaner {
    prefixes: Option<Regex>,
}

const COLLAPSIBLE: &[char] = &['!', '?', '.', ',', ';', ':', '-', '_', '*', '=', '#', '~'];
const LEADING_NOISE: &[char] = &[
    '.', ',', ';', ':', '!', '?', '-', '_', '*', '=', '#', '~', '|', '/', '\\',
];
const TRAILING_NOISE: &[char] = &[',', ';', ':', '-', '_', '*', '=', '#', '~', '|', '/', '\\'];

static DEFAULT_CLEANER: LazyLock<TextCleaner> =
    LazyLock::new(|| TextCleaner::new(&InformativenessPolicy::default().boilerplate_prefixes));

impl TextCleaner {
    pub fn new(prefixes: &[String]) -> Self {
        let prefixes = if prefixes.is_empty() {
            None
        } else {
            let alt = prefixes.iter().map(|p| regex::escape(p)).collect::<Vec<_>>().join("|");
            Some(Regex::new(&format!(r"(?i)^(?:{alt})\s*")).expect("escaped alternation compiles"))
        };
        TextCleaner { prefixes }
    }

    pub fn from_policy(policy: &InformativenessPolicy) -> Self {
        Self::new(&policy.boilerplate_prefixes)
    }

    /// Runs the cleaning pass to a fixpoint, which makes it idempotent.
    pub fn clean(&self, text: &str) -> String {
        let mut current = self.pass(text);
        loop {
            let next = self.pass(&current);
            if next == current {
                return current;
            }
            current = next;
        }
    }

    fn pass(&self, text: &str) -> String {
        // whitespace to spaces, drop other control characters
        let mut s: String = text
            .chars()
            .filter_map(|c| {
                if c.is_whitespace() {
                    Some(' ')
                } else if c.is_control() {
                    None
                } else {
                    Some(c)
                }
            })
            .collect();

        let trimmed = s.trim_start_matches(|c: char| c == ' ' || LEADING_NOISE.contains(&c));
        if let Some(re) = &self.prefixes {
            s = re.replace(trimmed, "").into_owned();
        } else {
            s = trimmed.to_owned();
        }

        let mut out = String::with_capacity(s.len());
        let mut prev: Option<char> = None;
        for c in s.chars() {
            if c == ' ' && prev == Some(' ') {
                continue;
            }
            if COLLAPSIBLE.contains(&c) && prev == Some(c) {
                continue;
            }
            out.push(c);
            prev = Some(c);
        }
        out.trim_start_matches(|c: char| c == ' ' || LEADING_NOISE.contains(&c))
            .trim_end_matches(|c: char| c == ' ' || TRAILING_NOISE.contains(&c))
            .to_owned()
    }
}

/// Cleans free text with the default boilerplate list.
pub fn clean_text(text: &str) -> String {
    DEFAULT_CLEANER.clean(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Kept,
    UninformativeDescriptor,
    NonTurbineInfrastructure,
    DuplicateRecord,
}

impl FilterReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::Kept => "kept",
            FilterReason::UninformativeDescriptor => "uninformative_descriptor",
            FilterReason::NonTurbineInfrastructure => "non_turbine_infrastructure",
            FilterReason::DuplicateRecord => "duplicate_record",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            FilterReason::Kept,
            FilterReason::UninformativeDescriptor,
            FilterReason::NonTurbineInfrastructure,
            FilterReason::DuplicateRecord,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub log_id: String,
    pub kept: bool,
    pub reason: FilterReason,
}

impl FilterDecision {
    fn new(log_id: &str, reason: FilterReason) -> Self {
        FilterDecision {
            log_id: log_id.to_owned(),
            kept: reason == FilterReason::Kept,
            reason,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Corpus,
    pub decisions: Vec<FilterDecision>,
}

impl FilterOutcome {
    /// Per-reason counts, for reporting each filter's contribution.
    pub fn reason_counts(&self) -> BTreeMap<FilterReason, usize> {
        let mut m = BTreeMap::new();
        for d in &self.decisions {
            *m.entry(d.reason).or_insert(0) += 1;
        }
        m
    }
}

/// Decides membership for every record; record contents are untouched.
///
/// Checks run in order: non-turbine subsystem, informativeness (of the cleaned
/// description, falling back to the observations), then exact
/// `(farm, turbine, date, description)` duplicates of an earlier kept record.
pub fn filter_corpus(corpus: &Corpus, policy: &InformativenessPolicy) -> FilterOutcome {
    let cleaner = TextCleaner::from_policy(policy);
    let mut seen: HashSet<(&str, &str, NaiveDate, &str)> = HashSet::new();
    let mut decisions = Vec::with_capacity(corpus.len());
    let mut kept = Vec::new();
    for r in corpus.records() {
        let reason = if policy.is_non_turbine(&r.subsystem_name) {
            FilterReason::NonTurbineInfrastructure
        } else if !(is_informative(&cleaner.clean(&r.description), policy)
            || r.observations
                .as_deref()
                .is_some_and(|o| is_informative(&cleaner.clean(o), policy)))
        {
            FilterReason::UninformativeDescriptor
        } else if !seen.insert((&r.farm_id, &r.turbine_id, r.event_date, &r.description)) {
            FilterReason::DuplicateRecord
        } else {
            FilterReason::Kept
        };
        if reason == FilterReason::Kept {
            kept.push(r.clone());
        }
        decisions.push(FilterDecision::new(&r.log_id, reason));
    }
    FilterOutcome {
        kept: corpus.derive(kept),
        decisions,
    }
}

/// Applies the cleaner to description and observations of every record.
pub fn clean_corpus(corpus: &Corpus, policy: &InformativenessPolicy) -> Corpus {
    let cleaner = TextCleaner::from_policy(policy);
    let records = corpus
        .records()
        .iter()
        .map(|r| {
            let desc = cleaner.clean(&r.description);
            let obs = r
                .observations
                .as_deref()
                .map(|o| cleaner.clean(o))
                .filter(|o| !o.is_empty());
            let (description, observations) = match (desc.is_empty(), obs) {
                (true, Some(o)) => (o, None),
                (true, None) => (r.description.clone(), None),
                (false, o) => (desc, o),
            };
            MaintenanceLog {
                description,
                observations,
                ..r.clone()
            }
        })
        .collect();
    corpus.derive(records)
}

pub fn decisions_to_csv(decisions: &[FilterDecision]) -> String {
    let mut out = String::from("log_id,reason\n");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for d in decisions {
        w.write_record([d.log_id.as_str(), d.reason.as_str()])
            .expect("in-memory write");
    }
    out.push_str(std::str::from_utf8(&w.into_inner().expect("flush")).expect("utf-8"));
    out
}

/// Bijective farm-id <-> two-letter code map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glossary {
    pub forward: BTreeMap<String, String>,
    pub reverse: BTreeMap<String, String>,
}

/// The `index`-th code in AA, AB, ..., AZ, BA, ... order.
pub fn code_for_index(index: usize) -> Option<String> {
    if index >= MAX_FARMS {
        return None;
    }
    let a = (b'A' + (index / 26) as u8) as char;
    let b = (b'A' + (index % 26) as u8) as char;
    Some(format!("{a}{b}"))
}

impl Glossary {
    /// Assigns codes in lexicographic order of the original farm ids.
    pub fn build<'a>(farms: impl IntoIterator<Item = &'a str>) -> Result<Glossary, PrepError> {
        let distinct: BTreeSet<&str> = farms.into_iter().collect();
        if distinct.len() > MAX_FARMS {
            return Err(PrepError::TooManyFarms(distinct.len()));
        }
        let mut g = Glossary::default();
        for (i, farm) in distinct.into_iter().enumerate() {
            let code = code_for_index(i).expect("bounded above");
            g.forward.insert(farm.to_owned(), code.clone());
            g.reverse.insert(code, farm.to_owned());
        }
        Ok(g)
    }

    pub fn code(&self, farm: &str) -> Option<&str> {
        self.forward.get(farm).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Two-column table `code,farm_id`, ordered by code.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["code", "farm_id"]).expect("in-memory write");
        for (code, farm) in &self.reverse {
            w.write_record([code, farm]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Glossary, PrepError> {
        let filtered: String = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect();
        let mut r = csv::Reader::from_reader(filtered.as_bytes());
        let mut g = Glossary::default();
        for row in r.records() {
            let row = row.map_err(|e| PrepError::Glossary(e.to_string()))?;
            let (code, farm) = (row.get(0).unwrap_or(""), row.get(1).unwrap_or(""));
            if code.len() != 2 || !code.chars().all(|c| c.is_ascii_uppercase()) {
                return Err(PrepError::Glossary(format!("bad code '{code}'")));
            }
            if g.reverse.insert(code.to_owned(), farm.to_owned()).is_some()
                || g.forward.insert(farm.to_owned(), code.to_owned()).is_some()
            {
                return Err(PrepError::Glossary(format!("glossary not bijective at '{code}'")));
            }
        }
        Ok(g)
    }
}

/// Replaces every farm id with its two-letter code.
pub fn anonymize(corpus: &Corpus) -> Result<(Corpus, Glossary), PrepError> {
    let glossary = Glossary::build(corpus.records().iter().map(|r| r.farm_id.as_str()))?;
    let records = corpus
        .records()
        .iter()
        .map(|r| MaintenanceLog {
            farm_id: glossary.forward[&r.farm_id].clone(),
            ..r.clone()
        })
        .collect();
    Ok((corpus.derive(records), glossary))
}

pub fn deanonymize<'g>(code: &str, glossary: &'g Glossary) -> Result<&'g str, PrepError> {
    glossary
        .reverse
        .get(code)
        .map(String::as_str)
        .ok_or_else(|| PrepError::UnknownCode(code.to_owned()))
}

/// Re-keys site contexts by farm code. Contexts for farms absent from the
/// glossary are dropped.
pub fn anonymize_contexts(
    contexts: &BTreeMap<String, SiteContext>,
    glossary: &Glossary,
) -> BTreeMap<String, SiteContext> {
    contexts
        .values()
        .filter_map(|c| {
            let code = glossary.code(&c.farm_id)?;
            Some((
                code.to_owned(),
                SiteContext {
                    farm_id: code.to_owned(),
                    ..c.clone()
                },
            ))
        })
        .collect()
}

/// Result of the full secondary cleaning pipeline.
#[derive(Debug, Clone)]
pub struct PrepOutput {
    pub corpus: Corpus,
    pub decisions: Vec<FilterDecision>,
    pub glossary: Glossary,
}

/// filter -> clean -> anonymize.
pub fn prepare(corpus: &Corpus, policy: &InformativenessPolicy) -> Result<PrepOutput, PrepError> {
    let FilterOutcome { kept, decisions } = filter_corpus(corpus, policy);
    let cleaned = clean_corpus(&kept, policy);
    let (corpus, glossary) = anonymize(&cleaned)?;
    Ok(PrepOutput {
        corpus,
        decisions,
        glossary,
    })
}
