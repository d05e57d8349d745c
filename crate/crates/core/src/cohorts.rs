//! Cohort selection: a critical subsystem, the highest-failure turbine and a
//! comparative farm group.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, MaintenanceLog, SiteContext};
use crate::meta::RunMeta;
use crate::text::fold;

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Error, PartialEq)]
pub enum CohortError {
    #[error("empty_cohort: no logs match '{0}'")]
    EmptyCohort(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no turbine has at least {min_days} days between its first and last log")]
    NoEligibleTurbine { min_days: i64 },
    #[error("no_qualifying_group: {0}")]
    NoQualifyingGroup(String),
    #[error("missing_context: no site context for farm '{0}'")]
    MissingContext(String),
    #[error("member log '{0}' is not in the corpus")]
    UnknownMember(String),
    #[error("invalid cohort: {0}")]
    Invalid(String),
    #[error("cohort manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortKind {
    Subsystem,
    TurbineSequence,
    FarmGroup,
}

impl CohortKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CohortKind::Subsystem => "subsystem",
            CohortKind::TurbineSequence => "turbine_sequence",
            CohortKind::FarmGroup => "farm_group",
        }
    }
}

/// A validated subset of corpus logs framing one analytical question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub kind: CohortKind,
    /// Subsystem name, turbine id, or comma-joined farm ids.
    pub subject: String,
    pub rationale: String,
    pub member_log_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<Vec<SiteContext>>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<RunMeta>,
    cohort: Cohort,
}

impl Cohort {
    /// Validates membership against `corpus` and puts members into canonical order.
    pub fn new(
        kind: CohortKind,
        subject: impl Into<String>,
        rationale: impl Into<String>,
        member_log_ids: Vec<String>,
        context: Option<Vec<SiteContext>>,
        corpus: &Corpus,
    ) -> Result<Cohort, CohortError> {
        let position: HashMap<&str, usize> = corpus
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.log_id.as_str(), i))
            .collect();
        let mut seen = HashSet::new();
        let mut members = Vec::with_capacity(member_log_ids.len());
        for id in member_log_ids {
            let pos = *position
                .get(id.as_str())
                .ok_or_else(|| CohortError::UnknownMember(id.clone()))?;
            if !seen.insert(pos) {
                return Err(CohortError::Invalid(format!("log '{id}' listed twice")));
            }
            members.push((pos, id));
        }
        members.sort_by_key(|(p, _)| *p);
        let cohort = Cohort {
            kind,
            subject: subject.into(),
            rationale: rationale.into(),
            member_log_ids: members.into_iter().map(|(_, id)| id).collect(),
            context,
        };
        cohort.check(corpus)?;
        Ok(cohort)
    }

    /// Re-checks the structural invariants against a corpus.
    pub fn check(&self, corpus: &Corpus) -> Result<(), CohortError> {
        let index = corpus.index();
        let mut prev: Option<(NaiveDate, &str)> = None;
        for id in &self.member_log_ids {
            let r = index
                .get(id.as_str())
                .ok_or_else(|| CohortError::UnknownMember(id.clone()))?;
            if self.kind == CohortKind::TurbineSequence {
                let key = (r.event_date, r.log_id.as_str());
                if prev.is_some_and(|p| p > key) {
                    return Err(CohortError::Invalid("turbine sequence not date-sorted".into()));
                }
                prev = Some(key);
            }
        }
        if self.kind == CohortKind::FarmGroup {
            let farms: HashSet<&str> = self
                .member_log_ids
                .iter()
                .map(|id| index[id.as_str()].farm_id.as_str())
                .collect();
            if farms.len() < 2 {
                return Err(CohortError::Invalid(
                    "farm group needs at least two farms with logs".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.member_log_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_log_ids.is_empty()
    }

    /// Member records in cohort order.
    pub fn resolve<'c>(&self, corpus: &'c Corpus) -> Result<Vec<&'c MaintenanceLog>, CohortError> {
        let index = corpus.index();
        self.member_log_ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| CohortError::UnknownMember(id.clone()))
            })
            .collect()
    }

    pub fn farms(&self) -> Vec<String> {
        match &self.context {
            Some(ctx) => ctx.iter().map(|c| c.farm_id.clone()).collect(),
            None => self.subject.split(',').map(str::to_owned).collect(),
        }
    }

    pub fn to_manifest(&self, meta: Option<&RunMeta>) -> String {
        let m = Manifest {
            meta: meta.cloned(),
            cohort: self.clone(),
        };
        serde_json::to_string_pretty(&m).expect("cohort serializes") + "\n"
    }

    pub fn from_manifest(text: &str) -> Result<Cohort, CohortError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| CohortError::Manifest(e.to_string()))?;
        Ok(m.cohort)
    }

    pub fn load(path: &Path) -> Result<Cohort, CohortError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CohortError::Manifest(format!("{}: {e}", path.display())))?;
        Cohort::from_manifest(&text)
    }
}

/// Folded alias groups; names in the same group denote the same subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    groups: Vec<Vec<String>>,
}

impl Default for AliasTable {
    fn default() -> Self {
        AliasTable::new(&[
            &["Power Converter", "Conversor", "Conversor de Potência", "Converter"],
            &["Gearbox", "Caixa Multiplicadora", "Multiplicadora"],
            &["Generator", "Gerador"],
            &["Pitch System", "Sistema de Pitch", "Pitch"],
            &["Yaw System", "Sistema de Yaw", "Yaw"],
            &["Rotor Bearings", "Rolamentos do Rotor", "Main Bearing"],
            &["MV-Transformer", "Transformador MT", "MV Transformer"],
        ])
    }
}

impl AliasTable {
    pub fn new(groups: &[&[&str]]) -> Self {
        AliasTable {
            groups: groups
                .iter()
                .map(|g| g.iter().map(|n| fold(n.trim())).collect())
                .collect(),
        }
    }

    pub fn empty() -> Self {
        AliasTable { groups: Vec::new() }
    }

    /// Canonical key for a subsystem name: its alias group index, or the folded name.
    fn key(&self, name: &str) -> String {
        let f = fold(name.trim());
        match self.groups.iter().position(|g| g.contains(&f)) {
            Some(i) => format!("\u{0}group{i}"),
            None => f,
        }
    }
}

/// All logs whose subsystem matches `subsystem_name` (case/diacritic-insensitive, via aliases).
pub fn subsystem_cohort(corpus: &Corpus, subsystem_name: &str, aliases: &AliasTable) -> Result<Cohort, CohortError> {
    if subsystem_name.trim().is_empty() {
        return Err(CohortError::Invalid("subsystem name is empty".into()));
    }
    let want = aliases.key(subsystem_name);
    let mut key_cache: HashMap<&str, bool> = HashMap::new();
    let ids: Vec<String> = corpus
        .records()
        .iter()
        .filter(|r| {
            *key_cache
                .entry(&r.subsystem_name)
                .or_insert_with(|| aliases.key(&r.subsystem_name) == want)
        })
        .map(|r| r.log_id.clone())
        .collect();
    if ids.is_empty() {
        return Err(CohortError::EmptyCohort(subsystem_name.to_owned()));
    }
    let n = ids.len();
    Cohort::new(
        CohortKind::Subsystem,
        subsystem_name.trim(),
        format!(
            "{n} logs for subsystem '{}' selected for failure-mode synthesis",
            subsystem_name.trim()
        ),
        ids,
        None,
        corpus,
    )
}

/// Subsystem log counts, descending, ties alphabetical.
pub fn subsystem_frequency_table(corpus: &Corpus) -> Result<Vec<(String, usize)>, CohortError> {
    if corpus.is_empty() {
        return Err(CohortError::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in corpus.records() {
        *counts.entry(&r.subsystem_name).or_insert(0) += 1;
    }
    let mut table: Vec<(String, usize)> = counts.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(table)
}

/// Denominator used for normalized event frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    /// Days between a turbine's first and last log.
    ObservedSpan,
    /// Largest recorded age at event (days since commissioning).
    SinceCommissioning,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyOptions {
    pub min_observation_days: i64,
    pub exposure: Exposure,
}

impl Default for FrequencyOptions {
    fn default() -> Self {
        FrequencyOptions {
            min_observation_days: 180,
            exposure: Exposure::ObservedSpan,
        }
    }
}

/// Events per year for `count` events over `exposure_days`.
pub fn normalized_frequency(count: usize, exposure_days: f64) -> f64 {
    count as f64 / (exposure_days / DAYS_PER_YEAR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurbineFrequency {
    pub turbine_id: String,
    pub events: usize,
    pub exposure_days: i64,
    pub events_per_year: f64,
}

/// Per-turbine exposure and counts for turbines meeting the observation guard,
/// sorted by turbine id.
pub fn turbine_frequencies(corpus: &Corpus, opts: &FrequencyOptions) -> Vec<TurbineFrequency> {
    struct Acc {
        count: usize,
        first: NaiveDate,
        last: NaiveDate,
        max_age: u32,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in corpus.records() {
        let a = acc.entry(&r.turbine_id).or_insert(Acc {
            count: 0,
            first: r.event_date,
            last: r.event_date,
            max_age: 0,
        });
        a.count += 1;
        a.first = a.first.min(r.event_date);
        a.last = a.last.max(r.event_date);
        a.max_age = a.max_age.max(r.age_at_event_days);
    }
    acc.into_iter()
        .filter_map(|(id, a)| {
            let span = (a.last - a.first).num_days();
            if span < opts.min_observation_days {
                return None;
            }
            let exposure = match opts.exposure {
                Exposure::ObservedSpan => span,
                Exposure::SinceCommissioning => i64::from(a.max_age),
            };
            if exposure <= 0 {
                return None;
            }
            Some(TurbineFrequency {
                turbine_id: id.to_owned(),
                events: a.count,
                exposure_days: exposure,
                events_per_year: normalized_frequency(a.count, exposure as f64),
            })
        })
        .collect()
}

/// Turbine with the highest normalized event frequency. Ratios are compared
/// exactly (cross-multiplied); ties go to the higher raw count, then the
/// smaller turbine id.
pub fn high_failure_turbine(corpus: &Corpus, opts: &FrequencyOptions) -> Result<(String, f64), CohortError> {
    if corpus.is_empty() {
        return Err(CohortError::EmptyCorpus);
    }
    let mut best: Option<TurbineFrequency> = None;
    for t in turbine_frequencies(corpus, opts) {
        let better = match &best {
            None => true,
            Some(b) => {
                let lhs = t.events as u128 * b.exposure_days as u128;
                let rhs = b.events as u128 * t.exposure_days as u128;
                lhs > rhs
                    || (lhs == rhs && (t.events > b.events || (t.events == b.events && t.turbine_id < b.turbine_id)))
            }
        };
        if better {
            best = Some(t);
        }
    }
    best.map(|b| (b.turbine_id, b.events_per_year))
        .ok_or(CohortError::NoEligibleTurbine {
            min_days: opts.min_observation_days,
        })
}

/// Every log of one turbine, chronological.
pub fn turbine_cohort(corpus: &Corpus, turbine_id: &str, rationale: &str) -> Result<Cohort, CohortError> {
    let ids: Vec<String> = corpus
        .records()
        .iter()
        .filter(|r| r.turbine_id == turbine_id)
        .map(|r| r.log_id.clone())
        .collect();
    if ids.is_empty() {
        return Err(CohortError::EmptyCohort(turbine_id.to_owned()));
    }
    Cohort::new(CohortKind::TurbineSequence, turbine_id, rationale, ids, None, corpus)
}

/// Turbine sequence cohort for the highest-failure turbine.
pub fn high_failure_cohort(corpus: &Corpus, opts: &FrequencyOptions) -> Result<Cohort, CohortError> {
    let (turbine, rate) = high_failure_turbine(corpus, opts)?;
    let basis = match opts.exposure {
        Exposure::ObservedSpan => "first-to-last log span",
        Exposure::SinceCommissioning => "age since commissioning",
    };
    turbine_cohort(
        corpus,
        &turbine,
        &format!("highest normalised event frequency: {rate:.3} events per turbine-year ({basis}, 365.25-day years)"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupStrategy {
    Explicit(Vec<String>),
    Automatic { k: usize, max_ratio: f64 },
}

impl GroupStrategy {
    pub fn automatic() -> Self {
        GroupStrategy::Automatic { k: 3, max_ratio: 2.0 }
    }
}

/// True when the contexts contain a same-site/different-model pair and a
/// same-model/different-site pair.
pub fn is_natural_experiment(contexts: &[&SiteContext]) -> bool {
    let mut same_site_diff_model = false;
    let mut same_model_diff_site = false;
    for (i, a) in contexts.iter().enumerate() {
        for b in &contexts[i + 1..] {
            let (Some(sa), Some(sb)) = (&a.site_label, &b.site_label) else {
                continue;
            };
            let same_model = fold(&a.turbine_model_label) == fold(&b.turbine_model_label);
            let same_site = fold(sa) == fold(sb);
            same_site_diff_model |= same_site && !same_model;
            same_model_diff_site |= same_model && !same_site;
        }
    }
    same_site_diff_model && same_model_diff_site
}

/// Candidate group ranking: natural experiment first, then larger total log
/// count, then lexicographically smaller id list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupScore {
    pub natural_experiment: bool,
    pub total_logs: usize,
    pub farms: Vec<String>,
}

impl GroupScore {
    pub fn beats(&self, other: &GroupScore) -> bool {
        (self.natural_experiment, self.total_logs, std::cmp::Reverse(&self.farms))
            > (
                other.natural_experiment,
                other.total_logs,
                std::cmp::Reverse(&other.farms),
            )
    }
}

/// Log counts per farm, sorted by count descending then id ascending.
pub fn farm_counts(corpus: &Corpus) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in corpus.records() {
        *counts.entry(&r.farm_id).or_insert(0) += 1;
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().map(|(k, c)| (k.to_owned(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

fn ratio_ok(max: usize, min: usize, max_ratio: f64) -> bool {
    min > 0 && max as f64 <= max_ratio * min as f64
}

/// Best automatic group by depth-first search over farms in descending count
/// order, pruning branches whose best attainable total cannot reach the incumbent.
pub fn select_group(
    counts: &[(String, usize)],
    contexts: &BTreeMap<String, SiteContext>,
    k: usize,
    max_ratio: f64,
) -> Option<GroupScore> {
    struct Search<'a> {
        counts: &'a [(String, usize)],
        contexts: &'a BTreeMap<String, SiteContext>,
        k: usize,
        max_ratio: f64,
        require_ne: bool,
        best: Option<GroupScore>,
        chosen: Vec<usize>,
    }
    impl Search<'_> {
        fn run(&mut self, start: usize, sum: usize) {
            if self.chosen.len() == self.k {
                let mut farms: Vec<String> = self.chosen.iter().map(|&i| self.counts[i].0.clone()).collect();
                farms.sort();
                let ctx: Option<Vec<&SiteContext>> = farms.iter().map(|f| self.contexts.get(f)).collect();
                let ne = ctx.is_some_and(|c| is_natural_experiment(&c));
                if self.require_ne && !ne {
                    return;
                }
                let cand = GroupScore {
                    natural_experiment: ne,
                    total_logs: sum,
                    farms,
                };
                if self.best.as_ref().is_none_or(|b| cand.beats(b)) {
                    self.best = Some(cand);
                }
                return;
            }
            let need = self.k - self.chosen.len();
            for i in start..self.counts.len() {
                if self.counts.len() - i < need {
                    break;
                }
                let upper = sum + self.counts[i..i + need].iter().map(|c| c.1).sum::<usize>();
                if let Some(b) = &self.best {
                    if upper < b.total_logs {
                        break;
                    }
                }
                if let Some(&first) = self.chosen.first() {
                    if !ratio_ok(self.counts[first].1, self.counts[i].1, self.max_ratio) {
                        break;
                    }
                }
                self.chosen.push(i);
                self.run(i + 1, sum + self.counts[i].1);
                self.chosen.pop();
            }
        }
    }
    if k < 2 || counts.len() < k {
        return None;
    }
    for require_ne in [true, false] {
        let mut s = Search {
            counts,
            contexts,
            k,
            max_ratio,
            require_ne,
            best: None,
            chosen: Vec::with_capacity(k),
        };
        s.run(0, 0);
        if s.best.is_some() {
            return s.best;
        }
    }
    None
}

/// Comparative farm group with site contexts attached for every farm.
pub fn comparative_group(
    corpus: &Corpus,
    contexts: &BTreeMap<String, SiteContext>,
    strategy: &GroupStrategy,
) -> Result<Cohort, CohortError> {
    let counts = farm_counts(corpus);
    let (farms, rationale) = match strategy {
        GroupStrategy::Explicit(list) => {
            let mut farms: Vec<String> = Vec::new();
            for f in list {
                if !farms.contains(f) {
                    farms.push(f.clone());
                }
            }
            if farms.len() < 2 {
                return Err(CohortError::NoQualifyingGroup("at least two farms are required".into()));
            }
            for f in &farms {
                if !counts.iter().any(|(id, _)| id == f) {
                    return Err(CohortError::NoQualifyingGroup(format!("farm '{f}' has no logs")));
                }
            }
            (farms, "farms selected explicitly by the analyst".to_owned())
        }
        GroupStrategy::Automatic { k, max_ratio } => {
            let best = select_group(&counts, contexts, *k, *max_ratio).ok_or_else(|| {
                CohortError::NoQualifyingGroup(format!("no {k} farms with pairwise log-count ratio <= {max_ratio}"))
            })?;
            let why = format!(
                "top {k} farms by log count ({} logs) with pairwise count ratio <= {max_ratio}{}",
                best.total_logs,
                if best.natural_experiment {
                    "; includes same-site/different-model and same-model/different-site pairs"
                } else {
                    ""
                }
            );
            let mut farms = best.farms;
            farms.sort_by_key(|f| counts.iter().position(|(id, _)| id == f));
            (farms, why)
        }
    };
    let ctx: Vec<SiteContext> = farms
        .iter()
        .map(|f| {
            contexts
                .get(f)
                .cloned()
                .ok_or_else(|| CohortError::MissingContext(f.clone()))
        })
        .collect::<Result<_, _>>()?;
    let wanted: HashSet<&str> = farms.iter().map(String::as_str).collect();
    let ids = corpus
        .records()
        .iter()
        .filter(|r| wanted.contains(r.farm_id.as_str()))
        .map(|r| r.log_id.clone())
        .collect();
    Cohort::new(
        CohortKind::FarmGroup,
        farms.join(","),
        rationale,
        ids,
        Some(ctx),
        corpus,
    )
}
