//! End-to-end analyses: prompt, complete, validate, repair, merge, reconcile.

pub mod reconcile;
pub mod validate;

use std::collections::HashMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohorts::{Cohort, CohortError, CohortKind};
use crate::corpus::{Corpus, MaintenanceLog};
use crate::gateway::{plan_chunks, token_budget, ChunkPlan, ChunkStrategy, Gateway, GatewayError, PlanError, PlanItem};
use crate::meta::RunMeta;
use crate::promptkit::{
    self, build_audit_prompt, build_causal_prompt, comparison_prompt, failure_mode_prompt, line_tokens,
    overhead_tokens, payload_line, PromptError, PromptSpec, TEMPLATE_VERSION,
};
use crate::text::fold;

use reconcile::{reconcile_counts, ModeEvidence};
pub use validate::{
    validate_audit, validate_causal, validate_comparison, validate_failure_modes, AuditChunk, AuditIssue, FarmPatterns,
    RawChain, RawMode, Recommendation, Scope, SitePattern, ValidationError, ViolationReason,
};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
/// Quotes kept per mode after merging.
pub const MAX_QUOTES: usize = 5;
pub const REVIEW_NOTICE: &str = "Machine-generated hypotheses; pending review by a domain expert.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

impl Confidence {
    pub fn parse(s: &str) -> Option<Confidence> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Some(Confidence::Low),
            "medium" => Some(Confidence::Medium),
            "high" => Some(Confidence::High),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::Low => "low",
            Confidence::Medium => "medium",
            Confidence::High => "high",
        }
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportingQuote {
    pub log_id: String,
    pub quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortRef {
    pub kind: CohortKind,
    pub subject: String,
    pub size: usize,
    /// SHA-256 of the newline-joined member ids.
    pub members_sha256: String,
}

impl CohortRef {
    pub fn of(cohort: &Cohort) -> Self {
        CohortRef {
            kind: cohort.kind,
            subject: cohort.subject.clone(),
            size: cohort.len(),
            members_sha256: hex::encode(Sha256::digest(cohort.member_log_ids.join("\n").as_bytes())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderMeta {
    pub profile: String,
    pub model: String,
    pub strategy: String,
    pub chunk_count: usize,
    pub chunk_sizes: Vec<usize>,
    pub budget_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_fraction: Option<f64>,
    pub seed: u64,
    pub template_version: String,
    /// Completion attempts (repair loop) per chunk.
    pub attempts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl ProviderMeta {
    fn new(gateway: &Gateway, plan: &ChunkPlan, attempts: Vec<u32>) -> Self {
        ProviderMeta {
            profile: gateway.profile.name.clone(),
            model: gateway.profile.model.clone(),
            strategy: plan.strategy.name().into(),
            chunk_count: plan.chunks.len(),
            chunk_sizes: plan.chunks.iter().map(Vec::len).collect(),
            budget_tokens: plan.budget_tokens,
            sample_fraction: plan.sample_fraction,
            seed: plan.seed,
            template_version: TEMPLATE_VERSION.into(),
            attempts,
            temperature: gateway.profile.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureMode {
    pub rank: usize,
    pub name: String,
    pub description: String,
    /// The model's own count (summed across chunks).
    pub estimated_count: u64,
    /// Count after assigning every cohort log to at most one mode.
    pub reconciled_count: usize,
    pub percentage: f64,
    pub supporting_quotes: Vec<SupportingQuote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureModeReport {
    pub cohort_ref: CohortRef,
    pub modes: Vec<FailureMode>,
    pub unassigned_count: usize,
    pub provider_meta: ProviderMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalChain {
    pub chain_id: String,
    pub member_log_ids: Vec<String>,
    pub hypothesis: String,
    pub confidence: Confidence,
    /// All members share one subsystem.
    pub homogeneous: bool,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalChainReport {
    pub cohort_ref: CohortRef,
    pub turbine_id: String,
    pub chains: Vec<CausalChain>,
    pub provider_meta: ProviderMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeReport {
    pub cohort_ref: CohortRef,
    pub farms: Vec<FarmPatterns>,
    pub provider_meta: ProviderMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub issues: Vec<AuditIssue>,
    pub recommendations: Vec<Recommendation>,
    /// Fraction of the corpus sent to the provider.
    pub chunk_coverage: f64,
    pub analysed_logs: usize,
    pub corpus_size: usize,
    pub source_markdown: Vec<String>,
    pub provider_meta: ProviderMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report_type", content = "report", rename_all = "snake_case")]
pub enum Report {
    FailureModes(FailureModeReport),
    CausalChains(CausalChainReport),
    SiteComparison(ComparativeReport),
    QualityAudit(AuditReport),
}

impl Report {
    pub fn type_name(&self) -> &'static str {
        match self {
            Report::FailureModes(_) => "failure_modes",
            Report::CausalChains(_) => "causal_chains",
            Report::SiteComparison(_) => "site_comparison",
            Report::QualityAudit(_) => "quality_audit",
        }
    }
}

/// A report as persisted: run metadata plus the typed body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub meta: RunMeta,
    #[serde(flatten)]
    pub report: Report,
}

impl ReportEnvelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("retries_exhausted_with_last_error: no valid output after {attempts} attempts; last error: {last}")]
    RepairExhausted { attempts: u32, last: ValidationError },
    #[error("sequence_exceeds_context: the {tokens}-token sequence exceeds the {budget}-token budget of profile '{profile}'; choose a profile with a larger context window")]
    SequenceExceedsContext {
        tokens: usize,
        budget: usize,
        profile: String,
    },
    #[error("payload of {tokens} tokens exceeds the {budget}-token budget of profile '{profile}'; use the sampled strategy with a smaller fraction")]
    ContextOverflow {
        tokens: usize,
        budget: usize,
        profile: String,
    },
    #[error("strategy '{0}' is not supported by this workflow")]
    UnsupportedStrategy(&'static str),
    #[error("nothing to analyse: empty corpus")]
    EmptyCorpus,
    #[error("chunk {index}: {source}")]
    Chunk {
        index: usize,
        #[source]
        source: Box<WorkflowError>,
    },
}

impl WorkflowError {
    /// The error with any chunk wrappers removed.
    pub fn root(&self) -> &WorkflowError {
        match self {
            WorkflowError::Chunk { source, .. } => source.root(),
            e => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub strategy: ChunkStrategy,
    pub seed: u64,
    pub max_attempts: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            strategy: ChunkStrategy::Full,
            seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl RunOptions {
    pub fn with_strategy(strategy: ChunkStrategy, seed: u64) -> Self {
        RunOptions {
            strategy,
            seed,
            ..RunOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repaired<T> {
    pub value: T,
    pub attempts: u32,
}

/// Text appended to a prompt after a rejected answer.
pub fn correction_block(err: &ValidationError) -> String {
    format!(
        "\n## CORRECTION\nYour previous answer was rejected by the validator with: {err}\n\
         Answer again, following the OUTPUT FORMAT section exactly.\n"
    )
}

/// Completes `prompt`, re-asking with the validator's error appended until the
/// answer validates or `max_attempts` answers have been rejected. Gateway
/// errors are returned immediately.
pub fn repair_loop<T>(
    gateway: &Gateway,
    prompt: &str,
    max_attempts: u32,
    validate: impl Fn(&str) -> Result<T, ValidationError>,
) -> Result<Repaired<T>, WorkflowError> {
    let mut current = prompt.to_owned();
    let mut attempt = 0;
    loop {
        attempt += 1;
        let completion = gateway.complete(&current)?;
        match validate(&completion.response.text) {
            Ok(value) => {
                return Ok(Repaired {
                    value,
                    attempts: attempt,
                })
            }
            Err(err) if attempt >= max_attempts.max(1) => {
                return Err(WorkflowError::RepairExhausted {
                    attempts: attempt,
                    last: err,
                })
            }
            Err(err) => {
                log::info!("answer rejected on attempt {attempt}: {err}");
                current = format!("{prompt}{}", correction_block(&err));
            }
        }
    }
}

fn plan_items(logs: &[&MaintenanceLog]) -> Vec<PlanItem> {
    logs.iter()
        .map(|l| PlanItem {
            log_id: l.log_id.clone(),
            tokens: line_tokens(&payload_line(l)),
            stratum: Some(l.subsystem_name.clone()),
        })
        .collect()
}

/// Runs one validated request per chunk, concurrently, in chunk order.
fn run_chunks<T: Send>(
    gateway: &Gateway,
    plan: &ChunkPlan,
    scope: &Scope<'_>,
    opts: &RunOptions,
    build: impl Fn(&[&MaintenanceLog]) -> Result<PromptSpec, PromptError> + Sync,
    validate: impl Fn(&str) -> Result<T, ValidationError> + Sync,
) -> Result<Vec<Repaired<T>>, WorkflowError> {
    let results = crate::gateway::run_bounded(plan.chunks.len(), gateway.max_in_flight, |i| {
        let logs: Vec<&MaintenanceLog> = plan.chunks[i]
            .iter()
            .map(|id| scope.get(id).expect("planned ids come from scope"))
            .collect();
        let spec = build(&logs)?;
        let prompt = promptkit::render(&spec);
        repair_loop(gateway, &prompt.text, opts.max_attempts, &validate)
    });
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| WorkflowError::Chunk {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

fn require_kind(cohort: &Cohort, kind: CohortKind) -> Result<(), WorkflowError> {
    if cohort.kind != kind {
        return Err(PromptError::WrongCohortKind {
            expected: kind.as_str(),
            got: cohort.kind.as_str(),
        }
        .into());
    }
    if cohort.is_empty() {
        return Err(PromptError::Empty.into());
    }
    Ok(())
}

struct MergedMode {
    name: String,
    description: String,
    estimated: u64,
    quotes: Vec<SupportingQuote>,
}

/// Merges per-chunk modes by case-insensitive name: estimates are summed and
/// quotes unioned in cohort order (at most [`MAX_QUOTES`]).
fn merge_modes(chunks: Vec<Vec<RawMode>>, scope: &Scope<'_>) -> Vec<MergedMode> {
    let mut merged: Vec<MergedMode> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    for mode in chunks.into_iter().flatten() {
        let key = fold(&mode.name);
        match by_name.get(&key) {
            Some(&i) => {
                merged[i].estimated += mode.estimated_count;
                merged[i].quotes.extend(mode.supporting_quotes);
            }
            None => {
                by_name.insert(key, merged.len());
                merged.push(MergedMode {
                    name: mode.name,
                    description: mode.description,
                    estimated: mode.estimated_count,
                    quotes: mode.supporting_quotes,
                });
            }
        }
    }
    for m in &mut merged {
        m.quotes.sort_by_key(|q| scope.position(&q.log_id));
        let mut seen = std::collections::HashSet::new();
        m.quotes.retain(|q| seen.insert((q.log_id.clone(), q.quote.clone())));
        m.quotes.truncate(MAX_QUOTES);
    }
    merged
}

/// Turns merged modes into ranked, reconciled report entries.
fn reconcile_and_rank(mut modes: Vec<MergedMode>, logs: &[&MaintenanceLog]) -> (Vec<FailureMode>, usize) {
    modes.sort_by(|a, b| b.estimated.cmp(&a.estimated).then_with(|| a.name.cmp(&b.name)));
    let evidence: Vec<ModeEvidence> = modes
        .iter()
        .map(|m| ModeEvidence {
            name: &m.name,
            description: &m.description,
            quotes: m.quotes.iter().map(|q| q.quote.as_str()).collect(),
        })
        .collect();
    let (counts, unassigned) = reconcile_counts(&evidence, logs);
    let size = logs.len();
    let mut out: Vec<FailureMode> = modes
        .into_iter()
        .zip(counts)
        .map(|(m, reconciled_count)| FailureMode {
            rank: 0,
            name: m.name,
            description: m.description,
            estimated_count: m.estimated,
            reconciled_count,
            percentage: if size == 0 {
                0.0
            } else {
                reconciled_count as f64 / size as f64 * 100.0
            },
            supporting_quotes: m.quotes,
        })
        .collect();
    out.sort_by(|a, b| {
        b.reconciled_count
            .cmp(&a.reconciled_count)
            .then_with(|| a.name.cmp(&b.name))
    });
    for (i, m) in out.iter_mut().enumerate() {
        m.rank = i + 1;
    }
    (out, unassigned)
}

pub fn run_failure_mode_analysis(
    cohort: &Cohort,
    corpus: &Corpus,
    gateway: &Gateway,
    opts: &RunOptions,
) -> Result<FailureModeReport, WorkflowError> {
    require_kind(cohort, CohortKind::Subsystem)?;
    let logs = cohort.resolve(corpus)?;
    let scope = Scope::new(cohort.subject.clone(), logs.clone());
    let overhead = overhead_tokens(&failure_mode_prompt(&cohort.subject, &logs)?);
    let plan = plan_chunks(&plan_items(&logs), overhead, &gateway.profile, opts.strategy, opts.seed)?;
    let results = run_chunks(
        gateway,
        &plan,
        &scope,
        opts,
        |chunk| failure_mode_prompt(&cohort.subject, chunk),
        |raw| validate_failure_modes(raw, &scope),
    )?;
    let attempts = results.iter().map(|r| r.attempts).collect();
    let merged = merge_modes(results.into_iter().map(|r| r.value).collect(), &scope);
    let (modes, unassigned_count) = reconcile_and_rank(merged, &logs);
    Ok(FailureModeReport {
        cohort_ref: CohortRef::of(cohort),
        modes,
        unassigned_count,
        provider_meta: ProviderMeta::new(gateway, &plan, attempts),
    })
}

pub fn run_causal_inference(
    cohort: &Cohort,
    corpus: &Corpus,
    gateway: &Gateway,
    opts: &RunOptions,
) -> Result<CausalChainReport, WorkflowError> {
    require_kind(cohort, CohortKind::TurbineSequence)?;
    let logs = cohort.resolve(corpus)?;
    let scope = Scope::new(cohort.subject.clone(), logs.clone());
    let prompt = promptkit::render(&build_causal_prompt(cohort, corpus)?);
    let budget = token_budget(&gateway.profile);
    if prompt.estimated_tokens > budget {
        return Err(WorkflowError::SequenceExceedsContext {
            tokens: prompt.estimated_tokens,
            budget,
            profile: gateway.profile.name.clone(),
        });
    }
    let repaired = repair_loop(gateway, &prompt.text, opts.max_attempts, |raw| {
        validate_causal(raw, &scope)
    })?;
    let mut chains: Vec<CausalChain> = repaired
        .value
        .into_iter()
        .map(|c| {
            let members: Vec<&MaintenanceLog> = c
                .member_log_ids
                .iter()
                .map(|id| scope.get(id).expect("validated"))
                .collect();
            CausalChain {
                homogeneous: members.iter().all(|m| m.subsystem_name == members[0].subsystem_name),
                start_date: members.first().expect("chains have two members").event_date,
                end_date: members.last().expect("chains have two members").event_date,
                chain_id: c.chain_id,
                member_log_ids: c.member_log_ids,
                hypothesis: c.hypothesis,
                confidence: c.confidence,
            }
        })
        .collect();
    chains.sort_by(|a, b| {
        (a.start_date, scope.position(&a.member_log_ids[0]), &a.chain_id).cmp(&(
            b.start_date,
            scope.position(&b.member_log_ids[0]),
            &b.chain_id,
        ))
    });
    let plan = ChunkPlan {
        strategy: ChunkStrategy::Full,
        chunks: vec![cohort.member_log_ids.clone()],
        sample_fraction: None,
        seed: opts.seed,
        budget_tokens: budget,
        chunk_tokens: vec![prompt.estimated_tokens],
        input_size: cohort.len(),
    };
    Ok(CausalChainReport {
        cohort_ref: CohortRef::of(cohort),
        turbine_id: cohort.subject.clone(),
        chains,
        provider_meta: ProviderMeta::new(gateway, &plan, vec![repaired.attempts]),
    })
}

pub fn run_comparison(
    cohort: &Cohort,
    corpus: &Corpus,
    gateway: &Gateway,
    opts: &RunOptions,
) -> Result<ComparativeReport, WorkflowError> {
    require_kind(cohort, CohortKind::FarmGroup)?;
    if matches!(opts.strategy, ChunkStrategy::Packed) {
        return Err(WorkflowError::UnsupportedStrategy("packed"));
    }
    let logs = cohort.resolve(corpus)?;
    let farms: Vec<String> = cohort.subject.split(',').map(str::to_owned).collect();
    let scope = Scope::new(cohort.subject.clone(), logs.clone()).with_farms(farms);
    let overhead = overhead_tokens(&comparison_prompt(cohort, &logs)?);
    let plan = match plan_chunks(&plan_items(&logs), overhead, &gateway.profile, opts.strategy, opts.seed) {
        Err(PlanError::FullExceedsBudget {
            tokens,
            budget,
            profile,
        }) => {
            return Err(WorkflowError::ContextOverflow {
                tokens,
                budget,
                profile,
            })
        }
        other => other?,
    };
    if plan.chunks.len() > 1 {
        return Err(WorkflowError::ContextOverflow {
            tokens: overhead + plan.chunk_tokens.iter().map(|t| t - overhead).sum::<usize>(),
            budget: plan.budget_tokens,
            profile: gateway.profile.name.clone(),
        });
    }
    let selected: Vec<&MaintenanceLog> = plan
        .chunks
        .concat()
        .iter()
        .map(|id| scope.get(id).expect("planned"))
        .collect();
    let prompt = promptkit::render(&comparison_prompt(cohort, &selected)?);
    let repaired = repair_loop(gateway, &prompt.text, opts.max_attempts, |raw| {
        validate_comparison(raw, &scope)
    })?;
    Ok(ComparativeReport {
        cohort_ref: CohortRef::of(cohort),
        farms: repaired.value,
        provider_meta: ProviderMeta::new(gateway, &plan, vec![repaired.attempts]),
    })
}

fn normalize_title(title: &str) -> String {
    fold(title)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .to_owned()
}

/// Merges per-chunk audits: issues by normalized title (first description
/// kept, example ids unioned in corpus order); recommendations deduplicated.
pub fn merge_audits(chunks: Vec<AuditChunk>, scope: &Scope<'_>) -> (Vec<AuditIssue>, Vec<Recommendation>) {
    let mut issues: Vec<AuditIssue> = Vec::new();
    let mut issue_keys: HashMap<String, usize> = HashMap::new();
    let mut recs: Vec<Recommendation> = Vec::new();
    let mut rec_keys = std::collections::HashSet::new();
    for chunk in chunks {
        for issue in chunk.issues {
            match issue_keys.get(&normalize_title(&issue.title)) {
                Some(&i) => issues[i].example_log_ids.extend(issue.example_log_ids),
                None => {
                    issue_keys.insert(normalize_title(&issue.title), issues.len());
                    issues.push(issue);
                }
            }
        }
        for rec in chunk.recommendations {
            if rec_keys.insert(normalize_title(&rec.title)) {
                recs.push(rec);
            }
        }
    }
    for issue in &mut issues {
        issue.example_log_ids.sort_by_key(|id| scope.position(id));
        issue.example_log_ids.dedup();
    }
    (issues, recs)
}

pub fn run_quality_audit(corpus: &Corpus, gateway: &Gateway, opts: &RunOptions) -> Result<AuditReport, WorkflowError> {
    if corpus.is_empty() {
        return Err(WorkflowError::EmptyCorpus);
    }
    let logs: Vec<&MaintenanceLog> = corpus.records().iter().collect();
    let scope = Scope::new("corpus", logs.clone());
    let overhead = overhead_tokens(&build_audit_prompt(&logs)?);
    let plan = plan_chunks(&plan_items(&logs), overhead, &gateway.profile, opts.strategy, opts.seed)?;
    let results = run_chunks(gateway, &plan, &scope, opts, build_audit_prompt, |raw| {
        validate_audit(raw, &scope).map(|c| (c, raw.to_owned()))
    })?;
    let attempts = results.iter().map(|r| r.attempts).collect();
    let (chunks, source_markdown): (Vec<AuditChunk>, Vec<String>) = results.into_iter().map(|r| r.value).unzip();
    let (issues, recommendations) = merge_audits(chunks, &scope);
    Ok(AuditReport {
        issues,
        recommendations,
        chunk_coverage: plan.coverage(),
        analysed_logs: plan.selected(),
        corpus_size: corpus.len(),
        source_markdown,
        provider_meta: ProviderMeta::new(gateway, &plan, attempts),
    })
}
