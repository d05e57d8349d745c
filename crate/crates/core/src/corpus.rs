//! Canonical maintenance-log records and the ingest path that produces them.
//!
//! Raw work-order tables arrive as delimiter-separated files whose column names
//! vary by operator, so ingest is driven by a [`ColumnMapping`]. Every accepted
//! row is normalized (trimmed, date parsed, classes mapped through a synonym
//! table); every rejected row is kept in the provenance with a reason code.
//! The resulting [`Corpus`] is always sorted by `(event_date, log_id)`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::meta::RunMeta;
use crate::text::fold;

pub const CORPUS_FORMAT: &str = "maintlog-corpus/1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed table: {0}")]
    Table(#[from] csv::Error),
    #[error("mapping error: {0}")]
    Mapping(String),
    #[error("column '{column}' for field '{field}' not present in header")]
    UnmappableColumn { field: &'static str, column: String },
    #[error("{rejected} of {read} rows rejected (limit {limit:.2}); check the column mapping")]
    TooManyRejects { read: usize, rejected: usize, limit: f64 },
    #[error("duplicate site context for farm '{0}'")]
    DuplicateFarm(String),
    #[error("site context for farm '{farm}': field '{field}' must be positive")]
    NonPositive { farm: String, field: &'static str },
    #[error("site context row {row}: {reason}")]
    BadContextRow { row: usize, reason: String },
    #[error("corpus file line {line}: {reason}")]
    Canonical { line: usize, reason: String },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkClass {
    Corrective,
    Preventive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionClass {
    Repair,
    Replacement,
    Inspection,
    Other,
}

impl fmt::Display for WorkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkClass::Corrective => "corrective",
            WorkClass::Preventive => "preventive",
        })
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionClass::Repair => "repair",
            ActionClass::Replacement => "replacement",
            ActionClass::Inspection => "inspection",
            ActionClass::Other => "other",
        })
    }
}

/// One work-order record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaintenanceLog {
    pub log_id: String,
    pub farm_id: String,
    pub turbine_id: String,
    pub subsystem_name: String,
    pub event_date: NaiveDate,
    /// Days since turbine commissioning.
    pub age_at_event_days: u32,
    pub work_class: WorkClass,
    pub action_class: ActionClass,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<String>,
}

impl MaintenanceLog {
    /// Description and observations joined by a single space.
    pub fn full_text(&self) -> String {
        match &self.observations {
            Some(obs) if !obs.is_empty() => format!("{} {}", self.description, obs),
            _ => self.description.clone(),
        }
    }

    fn sort_key(&self) -> (NaiveDate, &str) {
        (self.event_date, self.log_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MalformedRow,
    MissingField,
    NoFreeText,
    BadDate,
    DateOutOfRange,
    BadAge,
    BadWorkClass,
    BadActionClass,
    DuplicateLogId,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MalformedRow => "malformed_row",
            RejectReason::MissingField => "missing_field",
            RejectReason::NoFreeText => "no_free_text",
            RejectReason::BadDate => "bad_date",
            RejectReason::DateOutOfRange => "date_out_of_range",
            RejectReason::BadAge => "bad_age",
            RejectReason::BadWorkClass => "bad_work_class",
            RejectReason::BadActionClass => "bad_action_class",
            RejectReason::DuplicateLogId => "duplicate_log_id",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row number (header excluded).
    pub row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_id: Option<String>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// File name of the ingested table (directory stripped so the canonical file
    /// does not depend on where the input lived).
    pub source: String,
    pub source_sha256: String,
    pub rows_read: usize,
    pub accepted: usize,
    pub rejected: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejections: Vec<Rejection>,
    /// Wall-clock ingest time. Kept in memory only; the canonical file is a pure
    /// function of its inputs.
    #[serde(skip)]
    pub ingested_at: Option<DateTime<Utc>>,
}

impl Provenance {
    pub fn synthetic(source: &str, rows: usize) -> Self {
        Provenance {
            source: source.to_owned(),
            source_sha256: String::new(),
            rows_read: rows,
            accepted: rows,
            rejected: 0,
            rejections: Vec::new(),
            ingested_at: None,
        }
    }
}

/// Sorted, id-unique collection of maintenance logs.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<MaintenanceLog>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<RunMeta>,
    provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus, sorting records into canonical order. Duplicate ids are an error.
    pub fn new(mut records: Vec<MaintenanceLog>, provenance: Provenance) -> Result<Self, CorpusError> {
        records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.log_id.as_str()) {
                return Err(CorpusError::Canonical {
                    line: 0,
                    reason: format!("duplicate log_id '{}'", r.log_id),
                });
            }
        }
        Ok(Corpus { records, provenance })
    }

    /// Corpus holding a subset of this one's records (same provenance).
    pub fn derive(&self, records: Vec<MaintenanceLog>) -> Corpus {
        let mut records = records;
        records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Corpus {
            records,
            provenance: self.provenance.clone(),
        }
    }

    pub fn records(&self) -> &[MaintenanceLog] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, &MaintenanceLog> {
        self.records.iter().map(|r| (r.log_id.as_str(), r)).collect()
    }

    /// Canonical serialization: a header line then one JSON record per line.
    pub fn write_canonical<W: Write>(&self, mut out: W, meta: Option<&RunMeta>) -> std::io::Result<()> {
        let header = CorpusHeader {
            format: CORPUS_FORMAT.to_owned(),
            meta: meta.cloned(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_canonical_string(&self, meta: Option<&RunMeta>) -> String {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf, meta).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path, meta: Option<&RunMeta>) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_canonical(&mut w, meta)
            .and_then(|_| w.flush())
            .map_err(|e| CorpusError::io(path, e))
    }

    pub fn read_canonical<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
        let mut lines = reader.lines().enumerate();
        let (_, first) = lines.next().ok_or(CorpusError::Canonical {
            line: 1,
            reason: "empty corpus file".into(),
        })?;
        let first = first.map_err(|e| CorpusError::Canonical {
            line: 1,
            reason: e.to_string(),
        })?;
        let header: CorpusHeader = serde_json::from_str(&first).map_err(|e| CorpusError::Canonical {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.format != CORPUS_FORMAT {
            return Err(CorpusError::Canonical {
                line: 1,
                reason: format!("unsupported format '{}'", header.format),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| CorpusError::Canonical {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: MaintenanceLog = serde_json::from_str(&line).map_err(|e| CorpusError::Canonical {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(rec);
        }
        Corpus::new(records, header.provenance)
    }

    pub fn load(path: &Path) -> Result<Corpus, CorpusError> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Corpus::read_canonical(BufReader::new(file))
    }
}

/// Fields a raw table must (or may) provide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    LogId,
    FarmId,
    TurbineId,
    SubsystemName,
    EventDate,
    AgeAtEventDays,
    WorkClass,
    ActionClass,
    Description,
    Observations,
}

impl Field {
    pub const ALL: [Field; 10] = [
        Field::LogId,
        Field::FarmId,
        Field::TurbineId,
        Field::SubsystemName,
        Field::EventDate,
        Field::AgeAtEventDays,
        Field::WorkClass,
        Field::ActionClass,
        Field::Description,
        Field::Observations,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Field::LogId => "log_id",
            Field::FarmId => "farm_id",
            Field::TurbineId => "turbine_id",
            Field::SubsystemName => "subsystem_name",
            Field::EventDate => "event_date",
            Field::AgeAtEventDays => "age_at_event_days",
            Field::WorkClass => "work_class",
            Field::ActionClass => "action_class",
            Field::Description => "description",
            Field::Observations => "observations",
        }
    }

    pub fn is_mandatory(self) -> bool {
        self != Field::Observations
    }
}

impl FromStr for Field {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.key() == s)
            .ok_or_else(|| format!("unknown field '{s}'"))
    }
}

/// Folded synonym -> canonical class tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SynonymTable {
    pub work_class: BTreeMap<String, WorkClass>,
    pub action_class: BTreeMap<String, ActionClass>,
}

impl Default for SynonymTable {
    fn default() -> Self {
        use ActionClass::*;
        use WorkClass::*;
        let work = [
            ("corrective", Corrective),
            ("corretiva", Corrective),
            ("corretivo", Corrective),
            ("correctiva", Corrective),
            ("cm", Corrective),
            ("preventive", Preventive),
            ("preventiva", Preventive),
            ("preventivo", Preventive),
            ("pm", Preventive),
        ];
        let action = [
            ("repair", Repair),
            ("reparacao", Repair),
            ("reparação", Repair),
            ("reparo", Repair),
            ("replacement", Replacement),
            ("substituicao", Replacement),
            ("substituição", Replacement),
            ("troca", Replacement),
            ("inspection", Inspection),
            ("inspecao", Inspection),
            ("inspeção", Inspection),
            ("other", Other),
            ("outro", Other),
            ("outros", Other),
        ];
        SynonymTable {
            work_class: work.into_iter().map(|(k, v)| (fold(k), v)).collect(),
            action_class: action.into_iter().map(|(k, v)| (fold(k), v)).collect(),
        }
    }
}

impl SynonymTable {
    pub fn work_class(&self, raw: &str) -> Option<WorkClass> {
        self.work_class.get(&fold(raw.trim())).copied()
    }

    pub fn action_class(&self, raw: &str) -> Option<ActionClass> {
        self.action_class.get(&fold(raw.trim())).copied()
    }
}

/// Field -> column-name map plus the class synonym table.
///
/// File format is `key = value` lines, `#` comments:
///
/// ```text
/// log_id = id
/// event_date = date
/// synonym.work_class.corr = corrective
/// synonym.action_class.subst = replacement
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMapping {
    pub columns: BTreeMap<Field, String>,
    pub synonyms: SynonymTable,
}

impl Default for ColumnMapping {
    /// Identity mapping: every field read from a column of the same name.
    fn default() -> Self {
        ColumnMapping {
            columns: Field::ALL.iter().map(|f| (*f, f.key().to_owned())).collect(),
            synonyms: SynonymTable::default(),
        }
    }
}

impl ColumnMapping {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut columns = BTreeMap::new();
        let mut synonyms = SynonymTable::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CorpusError::Mapping(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(rest) = key.strip_prefix("synonym.") {
                let (table, word) = rest
                    .split_once('.')
                    .ok_or_else(|| CorpusError::Mapping(format!("line {}: bad synonym key '{key}'", n + 1)))?;
                match table {
                    "work_class" => {
                        let class = match fold(value).as_str() {
                            "corrective" => WorkClass::Corrective,
                            "preventive" => WorkClass::Preventive,
                            other => {
                                return Err(CorpusError::Mapping(format!(
                                    "line {}: unknown work class '{other}'",
                                    n + 1
                                )))
                            }
                        };
                        synonyms.work_class.insert(fold(word), class);
                    }
                    "action_class" => {
                        let class = match fold(value).as_str() {
                            "repair" => ActionClass::Repair,
                            "replacement" => ActionClass::Replacement,
                            "inspection" => ActionClass::Inspection,
                            "other" => ActionClass::Other,
                            other => {
                                return Err(CorpusError::Mapping(format!(
                                    "line {}: unknown action class '{other}'",
                                    n + 1
                                )))
                            }
                        };
                        synonyms.action_class.insert(fold(word), class);
                    }
                    other => {
                        return Err(CorpusError::Mapping(format!(
                            "line {}: unknown synonym table '{other}'",
                            n + 1
                        )))
                    }
                }
                continue;
            }
            let field: Field = key
                .parse()
                .map_err(|e: String| CorpusError::Mapping(format!("line {}: {e}", n + 1)))?;
            columns.insert(field, value.to_owned());
        }
        for f in Field::ALL.iter().filter(|f| f.is_mandatory()) {
            if !columns.contains_key(f) {
                return Err(CorpusError::Mapping(format!(
                    "no column mapped for mandatory field '{}'",
                    f.key()
                )));
            }
        }
        Ok(ColumnMapping { columns, synonyms })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        ColumnMapping::parse(&text)
    }

    /// Renders the column part of the mapping in the file format accepted by [`ColumnMapping::parse`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# field = column name\n");
        for (f, col) in &self.columns {
            out.push_str(&format!("{} = {}\n", f.key(), col));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub max_reject_fraction: f64,
    pub min_date: NaiveDate,
    pub max_date: NaiveDate,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            max_reject_fraction: 0.5,
            min_date: NaiveDate::from_ymd_opt(1990, 1, 1).expect("valid date"),
            max_date: Utc::now().date_naive(),
        }
    }
}

/// Parses ISO-8601 (`2019-03-02`, optionally followed by a time) or day-first
/// `DD/MM/YYYY` / `DD-MM-YYYY` / `DD.MM.YYYY`.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    if s.len() >= 10 && s.as_bytes()[4] == b'-' {
        let head = &s[..10];
        if s.len() == 10 || matches!(s.as_bytes()[10], b'T' | b' ') {
            return NaiveDate::parse_from_str(head, "%Y-%m-%d").ok();
        }
        return None;
    }
    let parts: Vec<&str> = s.split(['/', '-', '.']).collect();
    if parts.len() != 3
        || parts[2].len() != 4
        || parts[0].is_empty()
        || parts[0].len() > 2
        || parts[1].is_empty()
        || parts[1].len() > 2
    {
        return None;
    }
    let nums: Option<Vec<u32>> = parts.iter().map(|p| p.parse::<u32>().ok()).collect();
    let nums = nums?;
    NaiveDate::from_ymd_opt(nums[2] as i32, nums[1], nums[0])
}

fn detect_delimiter(header_line: &str) -> u8 {
    let commas = header_line.matches(',').count();
    let semis = header_line.matches(';').count();
    if semis > commas {
        b';'
    } else {
        b','
    }
}

/// Reads a raw table from disk. See [`ingest_str`].
pub fn ingest(source: &Path, mapping: &ColumnMapping, opts: &IngestOptions) -> Result<Corpus, CorpusError> {
    let mut text = String::new();
    File::open(source)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CorpusError::io(source, e))?;
    let name = source
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.display().to_string());
    ingest_str(&text, &name, mapping, opts)
}

/// Ingests an in-memory table. `source_name` is recorded in the provenance.
pub fn ingest_str(
    text: &str,
    source_name: &str,
    mapping: &ColumnMapping,
    opts: &IngestOptions,
) -> Result<Corpus, CorpusError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = detect_delimiter(header_line);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();

    let mut positions: BTreeMap<Field, usize> = BTreeMap::new();
    for (field, column) in &mapping.columns {
        match headers.iter().position(|h| h == column) {
            Some(i) => {
                positions.insert(*field, i);
            }
            None if field.is_mandatory() => {
                return Err(CorpusError::UnmappableColumn {
                    field: field.key(),
                    column: column.clone(),
                })
            }
            None => {}
        }
    }

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut rows_read = 0usize;

    for (i, row) in reader.records().enumerate() {
        rows_read += 1;
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                rejections.push(Rejection {
                    row: row_no,
                    log_id: None,
                    reason: RejectReason::MalformedRow,
                });
                continue;
            }
        };
        let get = |f: Field| positions.get(&f).and_then(|&i| row.get(i)).map(str::trim);
        let log_id = get(Field::LogId).filter(|s| !s.is_empty()).map(str::to_owned);
        match normalize_row(&get, mapping, opts) {
            Ok(rec) => {
                if !seen_ids.insert(rec.log_id.clone()) {
                    rejections.push(Rejection {
                        row: row_no,
                        log_id,
                        reason: RejectReason::DuplicateLogId,
                    });
                } else {
                    records.push(rec);
                }
            }
            Err(reason) => rejections.push(Rejection {
                row: row_no,
                log_id,
                reason,
            }),
        }
    }

    let rejected = rejections.len();
    if rows_read > 0 && rejected as f64 / rows_read as f64 > opts.max_reject_fraction {
        return Err(CorpusError::TooManyRejects {
            read: rows_read,
            rejected,
            limit: opts.max_reject_fraction,
        });
    }

    let provenance = Provenance {
        source: source_name.to_owned(),
        source_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        rows_read,
        accepted: records.len(),
        rejected,
        rejections,
        ingested_at: Some(Utc::now()),
    };
    Corpus::new(records, provenance)
}

fn normalize_row<'a>(
    get: &dyn Fn(Field) -> Option<&'a str>,
    mapping: &ColumnMapping,
    opts: &IngestOptions,
) -> Result<MaintenanceLog, RejectReason> {
    for f in Field::ALL
        .iter()
        .filter(|f| f.is_mandatory() && **f != Field::Description)
    {
        if get(*f).is_none() {
            return Err(RejectReason::MalformedRow);
        }
    }
    let required = |f: Field| -> Result<String, RejectReason> {
        match get(f) {
            Some(s) if !s.is_empty() => Ok(s.to_owned()),
            _ => Err(RejectReason::MissingField),
        }
    };
    let log_id = required(Field::LogId)?;
    let farm_id = required(Field::FarmId)?;
    let turbine_id = required(Field::TurbineId)?;
    let subsystem_name = required(Field::SubsystemName)?;

    let description = get(Field::Description).unwrap_or("").to_owned();
    let observations = get(Field::Observations).unwrap_or("").to_owned();
    if description.is_empty() && observations.is_empty() {
        return Err(RejectReason::NoFreeText);
    }
    // An empty description is filled from the observations so that every
    // record carries a non-empty description downstream.
    let (description, observations) = if description.is_empty() {
        (observations, None)
    } else if observations.is_empty() {
        (description, None)
    } else {
        (description, Some(observations))
    };

    let event_date = parse_date(get(Field::EventDate).unwrap_or("")).ok_or(RejectReason::BadDate)?;
    if event_date < opts.min_date || event_date > opts.max_date {
        return Err(RejectReason::DateOutOfRange);
    }
    let age_at_event_days: u32 = get(Field::AgeAtEventDays)
        .unwrap_or("")
        .parse()
        .map_err(|_| RejectReason::BadAge)?;
    let work_class = mapping
        .synonyms
        .work_class(get(Field::WorkClass).unwrap_or(""))
        .ok_or(RejectReason::BadWorkClass)?;
    let action_class = mapping
        .synonyms
        .action_class(get(Field::ActionClass).unwrap_or(""))
        .ok_or(RejectReason::BadActionClass)?;

    Ok(MaintenanceLog {
        log_id,
        farm_id,
        turbine_id,
        subsystem_name,
        event_date,
        age_at_event_days,
        work_class,
        action_class,
        description,
        observations,
    })
}

/// Operator-supplied technical and environmental context for one farm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteContext {
    pub farm_id: String,
    pub turbine_model_label: String,
    pub n_turbines: u32,
    pub rated_power_mw: f64,
    pub rotor_diameter_m: f64,
    pub hub_height_m: f64,
    /// Farms sharing a site label are treated as co-located.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_label: Option<String>,
    #[serde(default)]
    pub location_notes: String,
}

const CONTEXT_ALIASES: &[(&str, &[&str])] = &[
    ("farm_id", &["farm_id", "farm"]),
    ("turbine_model_label", &["turbine_model_label", "model"]),
    ("n_turbines", &["n_turbines", "n"]),
    ("rated_power_mw", &["rated_power_mw", "mw"]),
    ("rotor_diameter_m", &["rotor_diameter_m", "rotor"]),
    ("hub_height_m", &["hub_height_m", "hub"]),
    ("site_label", &["site_label", "site"]),
    ("location_notes", &["location_notes", "notes"]),
];

/// Loads a site-context table (one row per farm).
pub fn load_site_contexts(source: &Path) -> Result<BTreeMap<String, SiteContext>, CorpusError> {
    let text = std::fs::read_to_string(source).map_err(|e| CorpusError::io(source, e))?;
    parse_site_contexts(&text)
}

/// Parses a site-context table; lines starting with `#` are ignored.
pub fn parse_site_contexts(text: &str) -> Result<BTreeMap<String, SiteContext>, CorpusError> {
    let filtered: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let text = filtered.as_str();
    let mut out = BTreeMap::new();
    if text.trim().is_empty() {
        return Ok(out);
    }
    let delimiter = detect_delimiter(text.lines().next().unwrap_or(""));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| fold(h.trim())).collect();
    let col = |name: &str| -> Option<usize> {
        let aliases = CONTEXT_ALIASES.iter().find(|(k, _)| *k == name).map(|(_, a)| *a)?;
        headers.iter().position(|h| aliases.contains(&h.as_str()))
    };
    let mandatory = [
        "farm_id",
        "turbine_model_label",
        "n_turbines",
        "rated_power_mw",
        "rotor_diameter_m",
        "hub_height_m",
    ];
    let mut idx = BTreeMap::new();
    for m in mandatory {
        let i = col(m).ok_or_else(|| CorpusError::BadContextRow {
            row: 0,
            reason: format!("missing column '{m}'"),
        })?;
        idx.insert(m, i);
    }
    let site_col = col("site_label");
    let notes_col = col("location_notes");

    for (r, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = r + 1;
        let cell = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let farm_id = cell(idx["farm_id"]).to_owned();
        if farm_id.is_empty() {
            return Err(CorpusError::BadContextRow {
                row: row_no,
                reason: "empty farm id".into(),
            });
        }
        let num = |field: &'static str| -> Result<f64, CorpusError> {
            let v: f64 = cell(idx[field]).parse().map_err(|_| CorpusError::BadContextRow {
                row: row_no,
                reason: format!("field '{field}' is not numeric"),
            })?;
            if v <= 0.0 || !v.is_finite() {
                return Err(CorpusError::NonPositive {
                    farm: farm_id.clone(),
                    field,
                });
            }
            Ok(v)
        };
        let n_turbines = num("n_turbines")?;
        if n_turbines.fract() != 0.0 {
            return Err(CorpusError::BadContextRow {
                row: row_no,
                reason: "n_turbines must be an integer".into(),
            });
        }
        let ctx = SiteContext {
            farm_id: farm_id.clone(),
            turbine_model_label: cell(idx["turbine_model_label"]).to_owned(),
            n_turbines: n_turbines as u32,
            rated_power_mw: num("rated_power_mw")?,
            rotor_diameter_m: num("rotor_diameter_m")?,
            hub_height_m: num("hub_height_m")?,
            site_label: site_col.map(cell).filter(|s| !s.is_empty()).map(str::to_owned),
            location_notes: notes_col.map(cell).unwrap_or("").to_owned(),
        };
        if out.insert(farm_id.clone(), ctx).is_some() {
            return Err(CorpusError::DuplicateFarm(farm_id));
        }
    }
    Ok(out)
}

/// Writes contexts in the column layout read by [`parse_site_contexts`].
pub fn site_contexts_to_csv<'a>(contexts: impl IntoIterator<Item = &'a SiteContext>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "farm_id",
        "turbine_model_label",
        "n_turbines",
        "rated_power_mw",
        "rotor_diameter_m",
        "hub_height_m",
        "site_label",
        "location_notes",
    ])
    .expect("in-memory write");
    for c in contexts {
        w.write_record([
            c.farm_id.clone(),
            c.turbine_model_label.clone(),
            c.n_turbines.to_string(),
            c.rated_power_mw.to_string(),
            c.rotor_diameter_m.to_string(),
            c.hub_height_m.to_string(),
            c.site_label.clone().unwrap_or_default(),
            c.location_notes.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,farm,turbine,subsystem,date,age,class,action,desc,obs";

    fn mapping() -> ColumnMapping {
        ColumnMapping::parse(
            "log_id=id\nfarm_id=farm\nturbine_id=turbine\nsubsystem_name=subsystem\n\
             event_date=date\nage_at_event_days=age\nwork_class=class\naction_class=action\n\
             description=desc\nobservations=obs\n",
        )
        .unwrap()
    }

    fn opts() -> IngestOptions {
        IngestOptions {
            max_date: NaiveDate::from_ymd_opt(2025, 12, 31).unwrap(),
            ..IngestOptions::default()
        }
    }

    #[test]
    fn accepts_rotor_bearing_row() {
        let table = format!(
            "{HEADER}\nL1,X,T1,Rotor Bearings,2019-03-02,1200,preventive,repair,Lubrication of the Main Bearing,\
             It is recommended to replace the lubricating grease for the main bearing\n"
        );
        let c = ingest_str(&table, "t.csv", &mapping(), &opts()).unwrap();
        assert_eq!(c.len(), 1);
        let r = &c.records()[0];
        assert_eq!(r.log_id, "L1");
        assert_eq!(r.farm_id, "X");
        assert_eq!(r.turbine_id, "T1");
        assert_eq!(r.subsystem_name, "Rotor Bearings");
        assert_eq!(r.event_date, NaiveDate::from_ymd_opt(2019, 3, 2).unwrap());
        assert_eq!(r.age_at_event_days, 1200);
        assert_eq!(r.work_class, WorkClass::Preventive);
        assert_eq!(r.action_class, ActionClass::Repair);
        assert_eq!(r.description, "Lubrication of the Main Bearing");
        assert_eq!(
            r.observations.as_deref(),
            Some("It is recommended to replace the lubricating grease for the main bearing")
        );
        assert_eq!(c.provenance.rows_read, 1);
        assert_eq!(c.provenance.accepted, 1);
    }

    #[test]
    fn rejects_row_without_free_text() {
        let table = format!("{HEADER}\nL1,X,T1,Gearbox,2019-03-02,10,corretiva,troca,,\nL2,X,T1,Gearbox,2019-03-03,11,corrective,repair,Oil leak on gearbox,\n");
        let c = ingest_str(&table, "t.csv", &mapping(), &opts()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.provenance.rejections[0].reason, RejectReason::NoFreeText);
        assert_eq!(c.provenance.rejections[0].log_id.as_deref(), Some("L1"));
    }

    #[test]
    fn description_filled_from_observations() {
        let table = format!("{HEADER}\nL1,X,T1,Gearbox,2019-03-02,10,corretiva,troca,,Oil leak found\n");
        let c = ingest_str(&table, "t.csv", &mapping(), &opts()).unwrap();
        assert_eq!(c.records()[0].description, "Oil leak found");
        assert_eq!(c.records()[0].observations, None);
    }

    #[test]
    fn semicolon_tables_and_day_first_dates() {
        let table = "id;farm;turbine;subsystem;date;age;class;action;desc;obs\n\
                     L1;X;T1;Gearbox;02/03/2019;10;Corretiva;Substituição;Troca de filtro de óleo;\n";
        let c = ingest_str(table, "t.csv", &mapping(), &opts()).unwrap();
        let r = &c.records()[0];
        assert_eq!(r.event_date, NaiveDate::from_ymd_opt(2019, 3, 2).unwrap());
        assert_eq!(r.work_class, WorkClass::Corrective);
        assert_eq!(r.action_class, ActionClass::Replacement);
    }

    #[test]
    fn missing_mandatory_column_is_an_error() {
        let table = "id,farm\nL1,X\n";
        let err = ingest_str(table, "t.csv", &mapping(), &opts()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::UnmappableColumn {
                field: "turbine_id",
                ..
            }
        ));
    }

    #[test]
    fn mapping_requires_every_mandatory_field() {
        let err = ColumnMapping::parse("log_id=id\n").unwrap_err();
        assert!(matches!(err, CorpusError::Mapping(_)));
    }

    #[test]
    fn too_many_rejects_fail_hard() {
        let mut table = String::from(HEADER);
        table.push('\n');
        for i in 0..4 {
            table.push_str(&format!(
                "L{i},X,T1,Gearbox,not-a-date,10,corrective,repair,Oil leak here,\n"
            ));
        }
        table.push_str("L9,X,T1,Gearbox,2019-01-01,10,corrective,repair,Oil leak here,\n");
        let err = ingest_str(&table, "t.csv", &mapping(), &opts()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::TooManyRejects {
                read: 5,
                rejected: 4,
                ..
            }
        ));
    }

    #[test]
    fn date_window_and_duplicates() {
        let table = format!(
            "{HEADER}\nL1,X,T1,Gearbox,1989-12-31,10,corrective,repair,Oil leak here,\n\
             L2,X,T1,Gearbox,2019-01-01,10,corrective,repair,Oil leak here,\n\
             L2,X,T1,Gearbox,2019-01-02,10,corrective,repair,Oil leak there,\n\
             L3,X,T1,Gearbox,2019-01-02,-4,corrective,repair,Oil leak there,\n\
             L4,X,T1,Gearbox,2019-01-02,4,sometimes,repair,Oil leak there,\n"
        );
        let lenient = IngestOptions {
            max_reject_fraction: 1.0,
            ..opts()
        };
        let c = ingest_str(&table, "t.csv", &mapping(), &lenient).unwrap();
        let reasons: Vec<_> = c.provenance.rejections.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            vec![
                RejectReason::DateOutOfRange,
                RejectReason::DuplicateLogId,
                RejectReason::BadAge,
                RejectReason::BadWorkClass
            ]
        );
        assert_eq!(c.provenance.rows_read, c.provenance.accepted + c.provenance.rejected);
    }

    #[test]
    fn parse_date_forms() {
        let d = NaiveDate::from_ymd_opt(2019, 3, 2).unwrap();
        assert_eq!(parse_date("2019-03-02"), Some(d));
        assert_eq!(parse_date("2019-03-02T10:00:00"), Some(d));
        assert_eq!(parse_date("2/3/2019"), Some(d));
        assert_eq!(parse_date("02.03.2019"), Some(d));
        assert_eq!(parse_date("2019-13-02"), None);
        assert_eq!(parse_date("31/02/2019"), None);
        assert_eq!(parse_date("March 2"), None);
    }

    #[test]
    fn canonical_round_trip() {
        let table = format!(
            "{HEADER}\nB,X,T1,Gearbox,2019-01-02,10,corrective,repair,Oil leak there,\n\
             A,X,T1,Gearbox,2019-01-02,10,corrective,repair,Oil leak here,noted\n"
        );
        let c = ingest_str(&table, "t.csv", &mapping(), &opts()).unwrap();
        assert_eq!(c.records()[0].log_id, "A");
        let text = c.to_canonical_string(None);
        let back = Corpus::read_canonical(text.as_bytes()).unwrap();
        assert_eq!(back.records(), c.records());
        assert_eq!(back.to_canonical_string(None), text);
    }

    #[test]
    fn site_contexts_table() {
        let text = "farm,model,n,mw,rotor,hub\nWF1,WT Model 1,14,2.5,100,80\nWF3,WT Model 2,24,2.5,90,80\n";
        let m = parse_site_contexts(text).unwrap();
        let wf1 = &m["WF1"];
        assert_eq!(wf1.turbine_model_label, "WT Model 1");
        assert_eq!(wf1.n_turbines, 14);
        assert_eq!(wf1.rated_power_mw, 2.5);
        assert_eq!(wf1.rotor_diameter_m, 100.0);
        assert_eq!(wf1.hub_height_m, 80.0);
        assert_eq!(m["WF3"].n_turbines, 24);
        assert_eq!(m["WF3"].rotor_diameter_m, 90.0);
    }

    #[test]
    fn site_context_errors() {
        assert!(parse_site_contexts("").unwrap().is_empty());
        let dup = "farm,model,n,mw,rotor,hub\nWF1,M,14,2.5,100,80\nWF1,M,14,2.5,100,80\n";
        assert!(matches!(parse_site_contexts(dup), Err(CorpusError::DuplicateFarm(f)) if f == "WF1"));
        let neg = "farm,model,n,mw,rotor,hub\nWF1,M,14,0,100,80\n";
        assert!(matches!(
            parse_site_contexts(neg),
            Err(CorpusError::NonPositive {
                field: "rated_power_mw",
                ..
            })
        ));
    }

    #[test]
    fn site_contexts_csv_round_trip() {
        let text = "farm,model,n,mw,rotor,hub,site,notes\nWF1,WT Model 1,14,2.5,100,80,A,ridge with fog\n";
        let m = parse_site_contexts(text).unwrap();
        let back = parse_site_contexts(&site_contexts_to_csv(m.values())).unwrap();
        assert_eq!(m, back);
    }
}
