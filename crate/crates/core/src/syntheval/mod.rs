//! Seeded synthetic maintenance corpora with planted ground truth, and scorers
//! that compare workflow reports against that truth.

mod score;
pub mod vocab;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, ColumnMapping, Corpus, CorpusError, IngestOptions, SiteContext};
use crate::workflows::Confidence;

pub use score::{score_chains, score_comparison, score_modes, ChainScore, ComparisonScore, ModeScore};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error("unknown preset '{0}' (known: {known})", known = PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", "))]
    UnknownPreset(String),
    #[error("spec parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("truth file error: {0}")]
    Truth(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("report does not match the ground truth: {0}")]
    Mismatch(String),
}

pub const PRESETS: &[(&str, &str)] = &[
    ("paper-shape", include_str!("../../presets/paper-shape.toml")),
    ("minimal", include_str!("../../presets/minimal.toml")),
    ("fuzz", include_str!("../../presets/fuzz.toml")),
];

/// Column names of the raw table the generator writes.
const RAW_COLUMNS: [(&str, &str); 10] = [
    ("log_id", "id_ot"),
    ("farm_id", "parque"),
    ("turbine_id", "aerogerador"),
    ("subsystem_name", "subsistema"),
    ("event_date", "data"),
    ("age_at_event_days", "idade_dias"),
    ("work_class", "tipo_trabalho"),
    ("action_class", "tipo_acao"),
    ("description", "descricao"),
    ("observations", "observacoes"),
];

const FARM_NAMES: &[&str] = &[
    "Serra Alta Norte",
    "Serra Alta Sul",
    "Planalto Costeiro",
    "Monte Redondo",
    "Cabeco Gordo",
    "Alto do Vento",
    "Chaos Velho",
    "Pena Branca",
    "Lameira",
    "Vale Fundo",
    "Cumeada",
    "Tojal",
    "Portela",
    "Outeiro",
    "Carvalhal",
    "Fontelas",
    "Malhada",
    "Picoto",
    "Cabril",
    "Ribeira Seca",
    "Bouca",
    "Castelo Novo",
    "Mourela",
    "Corga",
    "Azinhal",
];

const MODELS: &[&str] = &["WT Model 1", "WT Model 2", "WT Model 3", "WT Model 4"];

fn default_alias_share() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub name: String,
    pub seed: u64,
    pub n_logs: usize,
    pub n_farms: usize,
    pub turbines_per_farm: usize,
    #[serde(default)]
    pub junk_fraction: f64,
    pub date_start: NaiveDate,
    pub date_end: NaiveDate,
    /// Number of rows whose date cell is unparseable.
    #[serde(default)]
    pub malformed_dates: usize,
    pub mode_subsystem: String,
    #[serde(default)]
    pub mode_subsystem_aliases: Vec<String>,
    /// Fraction of planted-mode rows labelled with an alias instead of `mode_subsystem`.
    #[serde(default = "default_alias_share")]
    pub alias_share: f64,
    #[serde(default)]
    pub planted_modes: Vec<PlantedMode>,
    #[serde(default)]
    pub chain_turbine: Option<ChainTurbineSpec>,
    #[serde(default)]
    pub sites: Vec<SiteSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedMode {
    pub token: String,
    pub target_count: usize,
    /// Falls back to the built-in library for `token`.
    #[serde(default)]
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainTurbineSpec {
    /// Chain events plus filler logs on the turbine.
    pub total_logs: usize,
    pub window_days: u32,
    pub chains: Vec<ChainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub confidence: Confidence,
    /// Strictly increasing day offsets from the chain start, one per event.
    pub offsets_days: Vec<u32>,
    /// Falls back to a built-in story.
    #[serde(default)]
    pub events: Vec<EventSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub subsystem: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    /// 1-based farm index.
    pub farm: usize,
    pub model: String,
    #[serde(default)]
    pub site: Option<String>,
    #[serde(default)]
    pub n_turbines: Option<usize>,
    pub rated_power_mw: f64,
    pub rotor_diameter_m: f64,
    pub hub_height_m: f64,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub skew: Option<SkewSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewSpec {
    pub token: String,
    /// Fraction of the farm's background rows carrying the pattern.
    pub share: f64,
    #[serde(default)]
    pub subsystem: Option<String>,
    #[serde(default)]
    pub templates: Vec<String>,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<SynthSpec, SynthError> {
        let spec: SynthSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<SynthSpec, SynthError> {
        SynthSpec::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<SynthSpec, SynthError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SynthError::UnknownPreset(name.to_owned()))?;
        SynthSpec::from_toml(text)
    }

    pub fn with_seed(mut self, seed: u64) -> SynthSpec {
        self.seed = seed;
        self
    }

    pub fn junk_count(&self) -> usize {
        (self.junk_fraction * self.n_logs as f64).round() as usize
    }

    fn farm_turbines(&self, farm: usize) -> usize {
        self.sites
            .iter()
            .find(|s| s.farm == farm)
            .and_then(|s| s.n_turbines)
            .unwrap_or(self.turbines_per_farm)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_farms == 0 || self.turbines_per_farm == 0 {
            return bad("n_farms and turbines_per_farm must be positive".into());
        }
        if self.date_end <= self.date_start {
            return bad("date_end must be after date_start".into());
        }
        if !(0.0..1.0).contains(&self.junk_fraction) {
            return bad("junk_fraction must be in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.alias_share) {
            return bad("alias_share must be in [0, 1]".into());
        }
        if self.mode_subsystem.trim().is_empty() {
            return bad("mode_subsystem is empty".into());
        }
        let mut tokens = HashSet::new();
        for m in &self.planted_modes {
            if m.token.is_empty()
                || !m
                    .token
                    .chars()
                    .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
            {
                return bad(format!(
                    "mode token '{}' must be upper-case letters, digits or '_'",
                    m.token
                ));
            }
            if !tokens.insert(m.token.as_str()) {
                return bad(format!("mode token '{}' repeated", m.token));
            }
        }
        let mut farms = HashSet::new();
        for s in &self.sites {
            if s.farm == 0 || s.farm > self.n_farms {
                return bad(format!("site farm index {} out of range 1..={}", s.farm, self.n_farms));
            }
            if !farms.insert(s.farm) {
                return bad(format!("site farm index {} repeated", s.farm));
            }
            if s.n_turbines == Some(0) {
                return bad(format!("farm {} has zero turbines", s.farm));
            }
            if let Some(k) = &s.skew {
                if !(0.0..=1.0).contains(&k.share) {
                    return bad(format!("skew share for farm {} must be in [0, 1]", s.farm));
                }
                if k.templates.is_empty() && !vocab::SKEW_LIBRARY.iter().any(|(t, _, _)| *t == k.token) {
                    return bad(format!("skew token '{}' has no templates", k.token));
                }
            }
        }
        let span = (self.date_end - self.date_start).num_days();
        let mut chain_logs = 0;
        if let Some(ct) = &self.chain_turbine {
            if ct.window_days as i64 > span {
                return bad("chain window is longer than the date range".into());
            }
            for (i, c) in ct.chains.iter().enumerate() {
                if c.offsets_days.len() < 2 {
                    return bad(format!("chain {} needs at least two events", i + 1));
                }
                if c.offsets_days.windows(2).any(|w| w[1] <= w[0]) {
                    return bad(format!("chain {} offsets must be strictly increasing", i + 1));
                }
                if *c.offsets_days.last().expect("non-empty") > ct.window_days {
                    return bad(format!("chain {} extends past the window", i + 1));
                }
                if !c.events.is_empty() && c.events.len() != c.offsets_days.len() {
                    return bad(format!(
                        "chain {} has {} events for {} offsets",
                        i + 1,
                        c.events.len(),
                        c.offsets_days.len()
                    ));
                }
                if c.events.is_empty()
                    && c.offsets_days.len() > vocab::CHAIN_STORIES[i % vocab::CHAIN_STORIES.len()].len()
                {
                    return bad(format!("chain {} is longer than the built-in story", i + 1));
                }
            }
            chain_logs = ct.chains.iter().map(|c| c.offsets_days.len()).sum::<usize>();
            if ct.total_logs < chain_logs {
                return bad(format!(
                    "chain turbine total_logs {} below its {chain_logs} chain events",
                    ct.total_logs
                ));
            }
            chain_logs = ct.total_logs;
        }
        let planted: usize = self.planted_modes.iter().map(|m| m.target_count).sum();
        let need = planted + chain_logs + self.junk_count();
        if need > self.n_logs {
            return Err(SynthError::Infeasible(format!(
                "{planted} planted + {chain_logs} chain-turbine + {} junk rows exceed n_logs = {}",
                self.junk_count(),
                self.n_logs
            )));
        }
        let background = self.n_logs - need;
        if self.malformed_dates > background {
            return Err(SynthError::Infeasible(format!(
                "{} malformed dates requested but only {background} background rows",
                self.malformed_dates
            )));
        }
        let total_turbines: usize = (1..=self.n_farms).map(|f| self.farm_turbines(f)).sum();
        if self.chain_turbine.is_some() && total_turbines < 2 && planted + background > 0 {
            return Err(SynthError::Infeasible(
                "chain turbine leaves no turbine for other rows".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthChain {
    pub chain_id: String,
    pub confidence: Confidence,
    pub log_ids: Vec<String>,
    pub offsets_days: Vec<u32>,
}

/// Planted ground truth, keyed by generated log ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub spec_name: String,
    pub seed: u64,
    pub n_logs: usize,
    pub mode_subsystem: String,
    /// Planted mode token per log id (`None` for every other row).
    pub mode_assignments: BTreeMap<String, Option<String>>,
    /// Rows per planted mode that survive ingest and preparation.
    pub mode_counts: BTreeMap<String, usize>,
    pub chain_turbine: Option<String>,
    pub chains: Vec<TruthChain>,
    /// Rows the preparation filters are expected to drop.
    pub junk_ids: BTreeSet<String>,
    /// Rows with an unparseable date, rejected at ingest.
    pub malformed_ids: BTreeSet<String>,
    /// Raw farm id to the pattern token planted there.
    pub farm_skews: BTreeMap<String, String>,
}

impl SynthTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn from_json(text: &str) -> Result<SynthTruth, SynthError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<SynthTruth, SynthError> {
        SynthTruth::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn planted_total(&self) -> usize {
        self.mode_counts.values().sum()
    }
}

/// Generator output: the raw table as an operator would export it, plus truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub raw_table: String,
    pub mapping: String,
    pub contexts: BTreeMap<String, SiteContext>,
    pub truth: SynthTruth,
}

pub const RAW_FILE: &str = "raw_logs.csv";
pub const MAPPING_FILE: &str = "mapping.conf";
pub const SITES_FILE: &str = "sites.csv";
pub const TRUTH_FILE: &str = "truth.json";

impl SynthOutput {
    pub fn column_mapping(&self) -> ColumnMapping {
        ColumnMapping::parse(&self.mapping).expect("generator mapping parses")
    }

    /// Ingests the raw table with the generator's own mapping.
    pub fn ingest(&self) -> Result<Corpus, SynthError> {
        let opts = IngestOptions::default();
        Ok(corpus::ingest_str(
            &self.raw_table,
            RAW_FILE,
            &self.column_mapping(),
            &opts,
        )?)
    }

    pub fn sites_csv(&self) -> String {
        corpus::site_contexts_to_csv(self.contexts.values())
    }

    /// Writes raw table, mapping, site contexts and truth into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(RAW_FILE), &self.raw_table)?;
        std::fs::write(dir.join(MAPPING_FILE), &self.mapping)?;
        std::fs::write(dir.join(SITES_FILE), self.sites_csv())?;
        std::fs::write(dir.join(TRUTH_FILE), self.truth.to_json())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Mode(usize),
    Chain(usize),
    Filler,
    Background,
    Junk,
}

#[derive(Debug, Clone)]
struct Row {
    farm: usize,
    turbine: usize,
    subsystem: String,
    date: NaiveDate,
    corrective: bool,
    action: usize,
    description: String,
    observations: Option<String>,
    kind: Kind,
    duplicate: bool,
}

struct Fleet {
    farms: Vec<String>,
    /// (farm index, turbine id, commissioning date)
    turbines: Vec<(usize, String, NaiveDate)>,
    chain_turbine: Option<usize>,
    /// Turbine indices open to planted, background and junk rows.
    open: Vec<usize>,
}

fn farm_name(i: usize) -> String {
    let base = FARM_NAMES[i % FARM_NAMES.len()];
    match i / FARM_NAMES.len() {
        0 => base.to_owned(),
        k => format!("{base} {}", k + 1),
    }
}

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    if template.contains("{n}") {
        template.replace("{n}", &rng.random_range(2..1000).to_string())
    } else {
        template.to_owned()
    }
}

fn random_date(rng: &mut ChaCha8Rng, start: NaiveDate, days: i64) -> NaiveDate {
    start + Duration::days(rng.random_range(0..=days))
}

struct Builder {
    rng: ChaCha8Rng,
    rows: Vec<Row>,
    seen: HashSet<(usize, NaiveDate, String)>,
}

impl Builder {
    /// Pushes `row` unless it collides with an existing (turbine, date, text) triple;
    /// on collision the date is redrawn.
    fn push_unique(&mut self, mut row: Row, start: NaiveDate, days: i64) {
        for _ in 0..1000 {
            if self.seen.insert((row.turbine, row.date, row.description.clone())) {
                self.rows.push(row);
                return;
            }
            row.date = random_date(&mut self.rng, start, days);
        }
        panic!("could not place a unique row; the date range is too narrow for the requested volume");
    }

    fn observation(&mut self) -> Option<String> {
        match self.rng.random_range(0..10) {
            0..=3 => None,
            4..=5 => Some(
                vocab::OBSERVATION_PHRASES
                    .choose(&mut self.rng)
                    .expect("non-empty")
                    .to_string(),
            ),
            6..=7 => Some(
                vocab::EMPTY_OBSERVATIONS
                    .choose(&mut self.rng)
                    .expect("non-empty")
                    .to_string(),
            ),
            _ => Some(String::new()),
        }
    }
}

/// Generates a corpus from `spec`. Identical specs give byte-identical output.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fleet = build_fleet(spec, &mut rng);
    let span = (spec.date_end - spec.date_start).num_days();
    let mut b = Builder {
        rng,
        rows: Vec::with_capacity(spec.n_logs),
        seen: HashSet::new(),
    };

    for (mi, mode) in spec.planted_modes.iter().enumerate() {
        let templates: Vec<String> = if mode.templates.is_empty() {
            vocab::MODE_LIBRARY
                .iter()
                .find(|(t, _)| *t == mode.token)
                .map(|(_, ts)| ts.iter().map(|s| s.to_string()).collect())
                .unwrap_or_else(|| {
                    vocab::GENERIC_MODE_TEMPLATES
                        .iter()
                        .map(|s| format!("{s} {}", mode.token.to_lowercase()))
                        .collect()
                })
        } else {
            mode.templates.clone()
        };
        for _ in 0..mode.target_count {
            let turbine = *fleet.open.choose(&mut b.rng).expect("open turbines");
            let t = templates.choose(&mut b.rng).expect("templates").clone();
            let description = format!("{} [FM:{}]", fill(&t, &mut b.rng), mode.token);
            let subsystem = if !spec.mode_subsystem_aliases.is_empty() && b.rng.random_bool(spec.alias_share) {
                spec.mode_subsystem_aliases.choose(&mut b.rng).expect("aliases").clone()
            } else {
                spec.mode_subsystem.clone()
            };
            let observations = match b.observation() {
                Some(o) if o.is_empty() => Some(description.clone()),
                o => o,
            };
            let row = Row {
                farm: fleet.turbines[turbine].0,
                turbine,
                subsystem,
                date: random_date(&mut b.rng, spec.date_start, span),
                corrective: true,
                action: b.rng.random_range(0..3),
                description,
                observations,
                kind: Kind::Mode(mi),
                duplicate: false,
            };
            b.push_unique(row, spec.date_start, span);
        }
    }

    let mut chain_truth: Vec<(Confidence, Vec<u32>)> = Vec::new();
    if let (Some(ct), Some(turbine)) = (&spec.chain_turbine, fleet.chain_turbine) {
        let window_start = spec.date_start + Duration::days((span - ct.window_days as i64) / 2);
        let farm = fleet.turbines[turbine].0;
        for (ci, chain) in ct.chains.iter().enumerate() {
            let last = *chain.offsets_days.last().expect("validated") as i64;
            let start = random_date(&mut b.rng, window_start, ct.window_days as i64 - last);
            let events: Vec<(String, String)> = if chain.events.is_empty() {
                vocab::CHAIN_STORIES[ci % vocab::CHAIN_STORIES.len()]
                    .iter()
                    .map(|(s, t)| (s.to_string(), t.to_string()))
                    .collect()
            } else {
                chain
                    .events
                    .iter()
                    .map(|e| (e.subsystem.clone(), e.text.clone()))
                    .collect()
            };
            for (k, off) in chain.offsets_days.iter().enumerate() {
                let (subsystem, text) = &events[k];
                let row = Row {
                    farm,
                    turbine,
                    subsystem: subsystem.clone(),
                    date: start + Duration::days(*off as i64),
                    corrective: true,
                    action: b.rng.random_range(0..3),
                    description: format!("{text} [CC:{:02}:{}]", ci + 1, chain.confidence.as_str().to_uppercase()),
                    observations: None,
                    kind: Kind::Chain(ci),
                    duplicate: false,
                };
                if !b.seen.insert((turbine, row.date, row.description.clone())) {
                    return Err(SynthError::InvalidSpec(format!("chain {} repeats an event", ci + 1)));
                }
                b.rows.push(row);
            }
            chain_truth.push((chain.confidence, chain.offsets_days.clone()));
        }
        let fillers = ct.total_logs - ct.chains.iter().map(|c| c.offsets_days.len()).sum::<usize>();
        for _ in 0..fillers {
            let (subsystem, templates) = *vocab::BACKGROUND_LIBRARY.choose(&mut b.rng).expect("non-empty");
            let t = *templates.choose(&mut b.rng).expect("non-empty");
            let row = Row {
                farm,
                turbine,
                subsystem: subsystem.to_owned(),
                date: random_date(&mut b.rng, window_start, ct.window_days as i64),
                corrective: b.rng.random_bool(0.5),
                action: b.rng.random_range(0..4),
                description: fill(t, &mut b.rng),
                observations: b.observation().filter(|o| !o.is_empty()),
                kind: Kind::Filler,
                duplicate: false,
            };
            b.push_unique(row, window_start, ct.window_days as i64);
        }
    }

    let skews: BTreeMap<usize, (String, String, Vec<String>, f64)> = spec
        .sites
        .iter()
        .filter_map(|s| {
            let k = s.skew.as_ref()?;
            let lib = vocab::SKEW_LIBRARY.iter().find(|(t, _, _)| *t == k.token);
            let subsystem = k
                .subsystem
                .clone()
                .or_else(|| lib.map(|l| l.1.to_owned()))
                .unwrap_or_else(|| "Nacelle".to_owned());
            let templates = if k.templates.is_empty() {
                lib.map(|l| l.2.iter().map(|s| s.to_string()).collect())
                    .unwrap_or_default()
            } else {
                k.templates.clone()
            };
            Some((s.farm - 1, (k.token.clone(), subsystem, templates, k.share)))
        })
        .collect();

    let planted: usize = spec.planted_modes.iter().map(|m| m.target_count).sum();
    let chain_rows = spec.chain_turbine.as_ref().map_or(0, |c| c.total_logs);
    let n_junk = spec.junk_count();
    let n_background = spec.n_logs - planted - chain_rows - n_junk;
    for _ in 0..n_background {
        let turbine = *fleet.open.choose(&mut b.rng).expect("open turbines");
        let farm = fleet.turbines[turbine].0;
        let (subsystem, description) = match skews.get(&farm) {
            Some((token, subsystem, templates, share)) if b.rng.random_bool(*share) => {
                let t = templates.choose(&mut b.rng).expect("validated");
                (subsystem.clone(), format!("{} [SK:{token}]", fill(t, &mut b.rng)))
            }
            _ => {
                let (s, templates) = *vocab::BACKGROUND_LIBRARY.choose(&mut b.rng).expect("non-empty");
                let t = *templates.choose(&mut b.rng).expect("non-empty");
                (s.to_owned(), fill(t, &mut b.rng))
            }
        };
        let row = Row {
            farm,
            turbine,
            subsystem,
            date: random_date(&mut b.rng, spec.date_start, span),
            corrective: b.rng.random_bool(0.4),
            action: b.rng.random_range(0..4),
            description,
            observations: b.observation().filter(|o| !o.is_empty()),
            kind: Kind::Background,
            duplicate: false,
        };
        b.push_unique(row, spec.date_start, span);
    }

    let good_count = b.rows.len();
    let duplicable: Vec<usize> = (0..good_count)
        .filter(|&i| matches!(b.rows[i].kind, Kind::Mode(_) | Kind::Background))
        .collect();
    let mut dup_sources: HashSet<usize> = HashSet::new();
    for i in 0..n_junk {
        let kind = if duplicable.is_empty() && i % 4 == 3 { 0 } else { i % 4 };
        let row = if kind == 3 {
            let src = *duplicable.choose(&mut b.rng).expect("checked");
            dup_sources.insert(src);
            let mut r = b.rows[src].clone();
            r.kind = Kind::Junk;
            r.duplicate = true;
            r
        } else {
            let turbine = *fleet.open.choose(&mut b.rng).expect("open turbines");
            let (subsystem, description, observations) = match kind {
                0 => {
                    let p = vocab::JUNK_PLACEHOLDERS
                        .choose(&mut b.rng)
                        .expect("non-empty")
                        .to_string();
                    let s = vocab::BACKGROUND_LIBRARY
                        .choose(&mut b.rng)
                        .expect("non-empty")
                        .0
                        .to_owned();
                    let obs = if b.rng.random_bool(0.5) { Some(p.clone()) } else { None };
                    (s, p, obs)
                }
                1 => {
                    let c = vocab::JUNK_CODES.choose(&mut b.rng).expect("non-empty").to_string();
                    let s = vocab::BACKGROUND_LIBRARY
                        .choose(&mut b.rng)
                        .expect("non-empty")
                        .0
                        .to_owned();
                    (s, c, Some("-".to_owned()))
                }
                _ => {
                    let (s, t) = *vocab::JUNK_NON_TURBINE.choose(&mut b.rng).expect("non-empty");
                    (s.to_owned(), t.to_owned(), None)
                }
            };
            Row {
                farm: fleet.turbines[turbine].0,
                turbine,
                subsystem,
                date: random_date(&mut b.rng, spec.date_start, span),
                corrective: true,
                action: 3,
                description,
                observations,
                kind: Kind::Junk,
                duplicate: false,
            }
        };
        b.rows.push(row);
    }

    let Builder { rows, mut rng, .. } = b;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&i| (rows[i].date, rows[i].duplicate, i));
    let width = rows.len().to_string().len().max(5);
    let mut ids = vec![String::new(); rows.len()];
    for (pos, &i) in order.iter().enumerate() {
        ids[i] = format!("L{:0width$}", pos + 1);
    }

    let background: Vec<usize> = (0..good_count)
        .filter(|&i| rows[i].kind == Kind::Background && !dup_sources.contains(&i))
        .collect();
    let malformed: BTreeSet<usize> = background
        .choose_multiple(&mut rng, spec.malformed_dates)
        .copied()
        .collect();

    let truth = build_truth(spec, &fleet, &rows, &ids, &malformed, &chain_truth, &skews);
    let raw_table = render_raw(&rows, &ids, &fleet, &malformed, &mut rng);
    let mapping = RAW_COLUMNS
        .iter()
        .map(|(f, c)| format!("{f} = {c}\n"))
        .collect::<String>();
    let contexts = build_contexts(spec, &fleet, &mut rng);
    Ok(SynthOutput {
        raw_table,
        mapping,
        contexts,
        truth,
    })
}

fn build_fleet(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Fleet {
    let farms: Vec<String> = (0..spec.n_farms).map(farm_name).collect();
    let mut turbines = Vec::new();
    for f in 0..spec.n_farms {
        for t in 0..spec.farm_turbines(f + 1) {
            let commissioned = spec.date_start - Duration::days(rng.random_range(200..3000));
            turbines.push((f, format!("T{:02}-{:02}", f + 1, t + 1), commissioned));
        }
    }
    let skewed: HashSet<usize> = spec
        .sites
        .iter()
        .filter(|s| s.skew.is_some())
        .map(|s| s.farm - 1)
        .collect();
    let chain_turbine = spec.chain_turbine.as_ref().map(|_| {
        let farm = (0..spec.n_farms)
            .rev()
            .find(|f| !skewed.contains(f))
            .unwrap_or(spec.n_farms - 1);
        turbines
            .iter()
            .position(|t| t.0 == farm)
            .expect("every farm has turbines")
    });
    let open = (0..turbines.len()).filter(|i| Some(*i) != chain_turbine).collect();
    Fleet {
        farms,
        turbines,
        chain_turbine,
        open,
    }
}

fn build_truth(
    spec: &SynthSpec,
    fleet: &Fleet,
    rows: &[Row],
    ids: &[String],
    malformed: &BTreeSet<usize>,
    chain_truth: &[(Confidence, Vec<u32>)],
    skews: &BTreeMap<usize, (String, String, Vec<String>, f64)>,
) -> SynthTruth {
    let mut mode_assignments = BTreeMap::new();
    let mut mode_counts: BTreeMap<String, usize> = spec.planted_modes.iter().map(|m| (m.token.clone(), 0)).collect();
    let mut chain_members: Vec<Vec<(NaiveDate, String)>> = vec![Vec::new(); chain_truth.len()];
    let mut junk_ids = BTreeSet::new();
    for (i, r) in rows.iter().enumerate() {
        let token = match r.kind {
            Kind::Mode(m) => {
                let t = &spec.planted_modes[m].token;
                *mode_counts.get_mut(t).expect("known") += 1;
                Some(t.clone())
            }
            _ => None,
        };
        if let Kind::Chain(c) = r.kind {
            chain_members[c].push((r.date, ids[i].clone()));
        }
        if r.kind == Kind::Junk {
            junk_ids.insert(ids[i].clone());
        }
        mode_assignments.insert(ids[i].clone(), token);
    }
    let chains = chain_truth
        .iter()
        .zip(chain_members)
        .enumerate()
        .map(|(ci, ((confidence, offsets), mut members))| {
            members.sort();
            TruthChain {
                chain_id: format!("C{:02}", ci + 1),
                confidence: *confidence,
                log_ids: members.into_iter().map(|(_, id)| id).collect(),
                offsets_days: offsets.clone(),
            }
        })
        .collect();
    SynthTruth {
        spec_name: spec.name.clone(),
        seed: spec.seed,
        n_logs: spec.n_logs,
        mode_subsystem: spec.mode_subsystem.clone(),
        mode_assignments,
        mode_counts,
        chain_turbine: fleet.chain_turbine.map(|t| fleet.turbines[t].1.clone()),
        chains,
        junk_ids,
        malformed_ids: malformed.iter().map(|&i| ids[i].clone()).collect(),
        farm_skews: skews
            .iter()
            .map(|(f, s)| (fleet.farms[*f].clone(), s.0.clone()))
            .collect(),
    }
}

const BAD_DATES: &[&str] = &["31/02/2019", "2019-13-01", "sem data", "00/00/0000"];
const CORRECTIVE: &[&str] = &["Corretiva", "corrective", "CM", "corretiva"];
const PREVENTIVE: &[&str] = &["Preventiva", "preventive", "PM"];
const ACTIONS: [&[&str]; 4] = [
    &["Reparação", "repair", "reparacao"],
    &["Substituição", "replacement", "troca"],
    &["Inspeção", "inspection"],
    &["Outro", "other"],
];

fn render_raw(
    rows: &[Row],
    ids: &[String],
    fleet: &Fleet,
    malformed: &BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> String {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);
    let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(Vec::new());
    w.write_record(RAW_COLUMNS.iter().map(|c| c.1))
        .expect("in-memory write");
    for i in order {
        let r = &rows[i];
        let (_, turbine, commissioned) = &fleet.turbines[r.turbine];
        let date = if malformed.contains(&i) {
            BAD_DATES.choose(rng).expect("non-empty").to_string()
        } else if rng.random_bool(0.15) {
            format!("{:02}/{:02}/{}", r.date.day(), r.date.month(), r.date.year())
        } else {
            r.date.format("%Y-%m-%d").to_string()
        };
        let work = if r.corrective { CORRECTIVE } else { PREVENTIVE }
            .choose(rng)
            .expect("non-empty");
        let action = ACTIONS[r.action].choose(rng).expect("non-empty");
        let age = (r.date - *commissioned).num_days().max(0).to_string();
        w.write_record([
            ids[i].as_str(),
            fleet.farms[r.farm].as_str(),
            turbine.as_str(),
            r.subsystem.as_str(),
            date.as_str(),
            age.as_str(),
            work,
            action,
            r.description.as_str(),
            r.observations.as_deref().unwrap_or(""),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn build_contexts(spec: &SynthSpec, fleet: &Fleet, rng: &mut ChaCha8Rng) -> BTreeMap<String, SiteContext> {
    let mut out = BTreeMap::new();
    for (f, name) in fleet.farms.iter().enumerate() {
        let n_turbines = spec.farm_turbines(f + 1) as u32;
        let ctx = match spec.sites.iter().find(|s| s.farm == f + 1) {
            Some(s) => SiteContext {
                farm_id: name.clone(),
                turbine_model_label: s.model.clone(),
                n_turbines,
                rated_power_mw: s.rated_power_mw,
                rotor_diameter_m: s.rotor_diameter_m,
                hub_height_m: s.hub_height_m,
                site_label: s.site.clone(),
                location_notes: s.notes.clone(),
            },
            None => {
                let m = rng.random_range(0..MODELS.len());
                SiteContext {
                    farm_id: name.clone(),
                    turbine_model_label: MODELS[m].to_owned(),
                    n_turbines,
                    rated_power_mw: [2.0, 2.3, 3.0, 3.6][m],
                    rotor_diameter_m: [82.0, 90.0, 112.0, 126.0][m],
                    hub_height_m: [78.0, 80.0, 94.0, 100.0][m],
                    site_label: None,
                    location_notes: String::new(),
                }
            }
        };
        out.insert(name.clone(), ctx);
    }
    out
}
