//! Command-line front end: one subcommand per pipeline stage with file-based
//! handoffs, plus `pipeline` which chains every stage into one output tree.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohorts::{
    comparative_group, high_failure_cohort, subsystem_cohort, turbine_cohort, AliasTable, Cohort, CohortError,
    Exposure, FrequencyOptions, GroupStrategy,
};
use crate::corpus::{self, ColumnMapping, Corpus, CorpusError, IngestOptions};
use crate::gateway::{AuditTrail, ChunkStrategy, Gateway, GatewayError, ProfileError, ProfileRegistry};
use crate::insights::{self, InsightError};
use crate::meta::RunMeta;
use crate::prep::{self, InformativenessPolicy, PrepError};
use crate::promptkit::TEMPLATE_VERSION;
use crate::syntheval::{self, SynthError, SynthSpec, SynthTruth};
use crate::workflows::{self, Report, ReportEnvelope, RunOptions, WorkflowError, DEFAULT_MAX_ATTEMPTS};

pub const DEFAULT_AUDIT_TRAIL: &str = "maintlog-audit.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "maintlog",
    version,
    about = "Semantic reliability analysis of wind-turbine maintenance logs"
)]
pub struct Cli {
    /// Run configuration file (TOML). Command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Error output on stderr.
    #[arg(long, global = true, value_enum, default_value_t = ErrorFormat::Text)]
    pub error_format: ErrorFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted ground truth.
    Synth(SynthArgs),
    /// Read a raw operator table into the canonical corpus format.
    Ingest(IngestArgs),
    /// Filter, clean and anonymize a canonical corpus.
    Prep(PrepArgs),
    /// Select an analytical cohort.
    Cohort(CohortArgs),
    /// Run one analysis workflow through a provider.
    Analyze(AnalyzeArgs),
    /// Render a report as Markdown, plot data or SVG.
    Report(ReportArgs),
    /// Score a report against synthetic ground truth.
    Score(ScoreArgs),
    /// Run synth, ingest, prep, cohort, analyze, report and score into one directory.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "paper-shape", conflicts_with = "spec")]
    pub preset: String,
    /// Generator spec file (TOML) instead of a preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Column mapping file; defaults to identity column names.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long)]
    pub max_reject_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Informativeness policy file; built-in defaults otherwise.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Site-context table to anonymize alongside the corpus.
    #[arg(long)]
    pub sites: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohortKindArg {
    Subsystem,
    Turbine,
    FarmGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExposureArg {
    Observed,
    Commissioning,
}

#[derive(Debug, Clone, Args)]
pub struct CohortArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub kind: CohortKindArg,
    /// Subsystem name (subsystem cohorts).
    #[arg(long)]
    pub name: Option<String>,
    /// Turbine id (turbine cohorts); the highest-frequency turbine otherwise.
    #[arg(long)]
    pub turbine: Option<String>,
    #[arg(long, value_enum, default_value_t = ExposureArg::Observed)]
    pub exposure: ExposureArg,
    #[arg(long, default_value_t = 180)]
    pub min_observation_days: i64,
    /// Site-context table (farm-group cohorts).
    #[arg(long)]
    pub sites: Option<PathBuf>,
    /// Comma-separated farm ids; automatic selection otherwise.
    #[arg(long, value_delimiter = ',')]
    pub farms: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub max_ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FailureModes,
    Causal,
    Compare,
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Full,
    Packed,
    Sampled,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Cohort manifest (all tasks but audit).
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Provider profile name.
    #[arg(long)]
    pub provider: Option<String>,
    /// Extra provider profiles (TOML).
    #[arg(long)]
    pub profiles_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Sample fraction for the sampled strategy.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Allocate the sample proportionally across subsystems.
    #[arg(long)]
    pub stratified: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// JSONL audit trail of provider requests.
    #[arg(long)]
    pub audit_trail: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Markdown,
    PlotData,
    Svg,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Markdown)]
    pub format: Format,
    /// Corpus the report was computed on (timeline views).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output file; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Expected task; inferred from the report otherwise.
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Glossary mapping raw farm ids to codes (comparison reports).
    #[arg(long)]
    pub glossary: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value = "paper-shape", conflicts_with = "spec")]
    pub preset: String,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub profiles_file: Option<PathBuf>,
    /// Sample fraction for the audit workflow; 1 analyses the whole corpus.
    #[arg(long, default_value_t = 0.2)]
    pub audit_fraction: f64,
    #[arg(long)]
    pub audit_trail: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings shared by several subcommands, read from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub provider: Option<String>,
    pub profiles_file: Option<PathBuf>,
    pub strategy: Option<StrategyArg>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub max_attempts: Option<u32>,
    pub max_in_flight: Option<usize>,
    /// Must equal the built-in template version when set.
    pub template_version: Option<String>,
    pub mapping: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub sites: Option<PathBuf>,
    pub audit_trail: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        for p in [
            &mut cfg.profiles_file,
            &mut cfg.mapping,
            &mut cfg.policy,
            &mut cfg.sites,
            &mut cfg.audit_trail,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(v) = &self.template_version {
            if v != TEMPLATE_VERSION {
                return Err(CliError::Config(format!(
                    "config pins template version '{v}' but this build provides '{TEMPLATE_VERSION}'"
                )));
            }
        }
        if let Some(f) = self.fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(CliError::Config(format!("fraction {f} must be in (0, 1]")));
            }
        }
        for p in [&self.profiles_file, &self.mapping, &self.policy, &self.sites]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "config references missing file {}",
                    p.display()
                )));
            }
        }
        if self.max_in_flight == Some(0) || self.max_attempts == Some(0) {
            return Err(CliError::Config(
                "max_in_flight and max_attempts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    RetriesExhausted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Provider(_) => 4,
            CliError::RetriesExhausted(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Validation(_) => "validation_error",
            CliError::Provider(_) => "provider_error",
            CliError::RetriesExhausted(_) => "retries_exhausted",
        }
    }

    pub fn to_json(&self) -> String {
        json!({"error": {"kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string()}}).to_string()
    }
}

fn io_err(path: &Path, e: impl Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } | CorpusError::Mapping(_) | CorpusError::UnmappableColumn { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PrepError> for CliError {
    fn from(e: PrepError) -> Self {
        match e {
            PrepError::Policy(_) => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Truth(_) | SynthError::Corpus(_) | SynthError::Mismatch(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<InsightError> for CliError {
    fn from(e: InsightError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<WorkflowError> for CliError {
    fn from(e: WorkflowError) -> Self {
        let msg = e.to_string();
        match e.root() {
            WorkflowError::Gateway(GatewayError::RetriesExhausted { .. }) | WorkflowError::RepairExhausted { .. } => {
                CliError::RetriesExhausted(msg)
            }
            WorkflowError::Gateway(_) => CliError::Provider(msg),
            WorkflowError::Plan(_)
            | WorkflowError::SequenceExceedsContext { .. }
            | WorkflowError::ContextOverflow { .. }
            | WorkflowError::UnsupportedStrategy(_) => CliError::Config(msg),
            _ => CliError::Validation(msg),
        }
    }
}

/// Content digest used in config hashes, so outputs do not depend on where inputs live.
fn digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes))[..16].to_owned())
}

fn optional_digest(path: Option<&PathBuf>) -> Result<Option<String>, CliError> {
    path.map(|p| digest(p)).transpose()
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| io_err(path, e))
}

fn with_comment(meta: &RunMeta, body: &str) -> String {
    format!("{}\n{body}", meta.comment_line())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let format = cli.error_format;
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            match format {
                ErrorFormat::Text => eprintln!("error: {e}"),
                ErrorFormat::Json => eprintln!("{}", e.to_json()),
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(&a).map(|_| ()),
        Command::Ingest(a) => ingest(&a, &cfg),
        Command::Prep(a) => prep_cmd(&a, &cfg),
        Command::Cohort(a) => cohort(&a, &cfg),
        Command::Analyze(a) => analyze(&a, &cfg),
        Command::Report(a) => report(&a),
        Command::Score(a) => score(&a).map(|_| ()),
        Command::Pipeline(a) => pipeline(&a, &cfg),
    }
}

pub fn synth(a: &SynthArgs) -> Result<SynthSpec, CliError> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::preset(&a.preset)?,
    };
    if let Some(seed) = a.seed {
        spec = spec.with_seed(seed);
    }
    let out = syntheval::generate(&spec)?;
    out.write_dir(&a.out)?;
    let meta = RunMeta::new(&json!({"command": "synth", "spec": spec}), spec.seed);
    let manifest = json!({"meta": meta, "spec": spec});
    write(
        &a.out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"),
    )?;
    println!(
        "synth: {} rows ({} planted) -> {}",
        spec.n_logs,
        out.truth.planted_total(),
        a.out.display()
    );
    Ok(spec)
}

pub fn ingest(a: &IngestArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let mapping_path = a.mapping.as_ref().or(cfg.mapping.as_ref());
    let mapping = match mapping_path {
        Some(p) => ColumnMapping::load(p)?,
        None => ColumnMapping::default(),
    };
    let mut opts = IngestOptions::default();
    if let Some(f) = a.max_reject_fraction {
        opts.max_reject_fraction = f;
    }
    let corpus = corpus::ingest(&a.input, &mapping, &opts)?;
    let view = json!({
        "command": "ingest",
        "input": digest(&a.input)?,
        "mapping": optional_digest(mapping_path)?,
        "max_reject_fraction": opts.max_reject_fraction,
    });
    let meta = RunMeta::new(&view, cfg.seed.unwrap_or(0));
    write(&a.out, &corpus.to_canonical_string(Some(&meta)))?;
    println!(
        "ingest: {} accepted, {} rejected -> {}",
        corpus.provenance.accepted,
        corpus.provenance.rejected,
        a.out.display()
    );
    Ok(())
}

pub const PREP_CORPUS: &str = "corpus.jsonl";
pub const PREP_GLOSSARY: &str = "glossary.csv";
pub const PREP_DECISIONS: &str = "decisions.csv";
pub const PREP_SITES: &str = "sites.csv";

pub fn prep_cmd(a: &PrepArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = Corpus::load(&a.corpus)?;
    let policy_path = a.policy.as_ref().or(cfg.policy.as_ref());
    let policy = match policy_path {
        Some(p) => InformativenessPolicy::load(p)?,
        None => InformativenessPolicy::default(),
    };
    let sites_path = a.sites.as_ref().or(cfg.sites.as_ref());
    let view = json!({
        "command": "prep",
        "corpus": digest(&a.corpus)?,
        "policy": policy,
        "sites": optional_digest(sites_path)?,
    });
    let meta = RunMeta::new(&view, cfg.seed.unwrap_or(0));
    let out = prep::prepare(&corpus, &policy)?;
    write(&a.out.join(PREP_CORPUS), &out.corpus.to_canonical_string(Some(&meta)))?;
    write(&a.out.join(PREP_GLOSSARY), &with_comment(&meta, &out.glossary.to_csv()))?;
    write(
        &a.out.join(PREP_DECISIONS),
        &with_comment(&meta, &prep::decisions_to_csv(&out.decisions)),
    )?;
    if let Some(p) = sites_path {
        let contexts = corpus::load_site_contexts(p)?;
        let anon = prep::anonymize_contexts(&contexts, &out.glossary);
        write(
            &a.out.join(PREP_SITES),
            &with_comment(&meta, &corpus::site_contexts_to_csv(anon.values())),
        )?;
    }
    println!(
        "prep: {} of {} logs kept -> {}",
        out.corpus.len(),
        corpus.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cohort(a: &CohortArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = Corpus::load(&a.corpus)?;
    let sites_path = a.sites.as_ref().or(cfg.sites.as_ref());
    let cohort: Cohort = match a.kind {
        CohortKindArg::Subsystem => {
            let name = a
                .name
                .as_deref()
                .ok_or_else(|| CliError::Config("--name is required for subsystem cohorts".into()))?;
            subsystem_cohort(&corpus, name, &AliasTable::default())?
        }
        CohortKindArg::Turbine => match &a.turbine {
            Some(t) => turbine_cohort(&corpus, t, "turbine selected explicitly by the analyst")?,
            None => high_failure_cohort(
                &corpus,
                &FrequencyOptions {
                    min_observation_days: a.min_observation_days,
                    exposure: match a.exposure {
                        ExposureArg::Observed => Exposure::ObservedSpan,
                        ExposureArg::Commissioning => Exposure::SinceCommissioning,
                    },
                },
            )?,
        },
        CohortKindArg::FarmGroup => {
            let p = sites_path.ok_or_else(|| CliError::Config("--sites is required for farm-group cohorts".into()))?;
            let contexts = corpus::load_site_contexts(p)?;
            let strategy = if a.farms.is_empty() {
                GroupStrategy::Automatic {
                    k: a.k,
                    max_ratio: a.max_ratio,
                }
            } else {
                GroupStrategy::Explicit(a.farms.clone())
            };
            comparative_group(&corpus, &contexts, &strategy)?
        }
    };
    let view = json!({
        "command": "cohort",
        "corpus": digest(&a.corpus)?,
        "kind": a.kind,
        "name": a.name,
        "turbine": a.turbine,
        "exposure": a.exposure,
        "min_observation_days": a.min_observation_days,
        "sites": optional_digest(sites_path)?,
        "farms": a.farms,
        "k": a.k,
        "max_ratio": a.max_ratio,
    });
    let meta = RunMeta::new(&view, cfg.seed.unwrap_or(0));
    write(&a.out, &cohort.to_manifest(Some(&meta)))?;
    println!(
        "cohort: {} '{}' with {} logs -> {}",
        a.kind_name(),
        cohort.subject,
        cohort.len(),
        a.out.display()
    );
    Ok(())
}

impl CohortArgs {
    fn kind_name(&self) -> &'static str {
        match self.kind {
            CohortKindArg::Subsystem => "subsystem",
            CohortKindArg::Turbine => "turbine",
            CohortKindArg::FarmGroup => "farm-group",
        }
    }
}

fn chunk_strategy(strategy: StrategyArg, fraction: Option<f64>, stratified: bool) -> Result<ChunkStrategy, CliError> {
    Ok(match strategy {
        StrategyArg::Full => ChunkStrategy::Full,
        StrategyArg::Packed => ChunkStrategy::Packed,
        StrategyArg::Sampled => {
            let fraction =
                fraction.ok_or_else(|| CliError::Config("--fraction is required with --strategy sampled".into()))?;
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(CliError::Config(format!("fraction {fraction} must be in (0, 1]")));
            }
            ChunkStrategy::SampledFraction { fraction, stratified }
        }
    })
}

fn gateway(
    provider: &str,
    profiles_file: Option<&PathBuf>,
    cfg: &RunConfig,
    trail: &Path,
) -> Result<Gateway, CliError> {
    let registry = match profiles_file {
        Some(p) => ProfileRegistry::with_file(p)?,
        None => ProfileRegistry::default(),
    };
    let profile = registry.get(provider)?;
    let audit = AuditTrail::open(trail).map_err(|e| io_err(trail, e))?;
    let mut gw = Gateway::from_profile(profile)?.with_audit(Arc::new(audit));
    if let Some(n) = cfg.max_in_flight {
        gw.max_in_flight = n;
    }
    Ok(gw)
}

pub fn analyze(a: &AnalyzeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let provider = a
        .provider
        .clone()
        .or_else(|| cfg.provider.clone())
        .unwrap_or_else(|| "mock".to_owned());
    let profiles_file = a.profiles_file.as_ref().or(cfg.profiles_file.as_ref());
    let strategy_arg = a.strategy.or(cfg.strategy).unwrap_or(StrategyArg::Full);
    let strategy = chunk_strategy(strategy_arg, a.fraction.or(cfg.fraction), a.stratified)?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let max_attempts = a.max_attempts.or(cfg.max_attempts).unwrap_or(DEFAULT_MAX_ATTEMPTS);
    if max_attempts == 0 {
        return Err(CliError::Config("--max-attempts must be positive".into()));
    }
    let trail = a
        .audit_trail
        .clone()
        .or_else(|| cfg.audit_trail.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_AUDIT_TRAIL));
    let gw = gateway(&provider, profiles_file, cfg, &trail)?;
    let corpus = Corpus::load(&a.corpus)?;
    let cohort = match (&a.cohort, a.task) {
        (_, Task::Audit) => None,
        (Some(p), _) => {
            let c = Cohort::load(p)?;
            c.check(&corpus)?;
            Some(c)
        }
        (None, _) => return Err(CliError::Config("--cohort is required for this task".into())),
    };
    let opts = RunOptions {
        strategy,
        seed,
        max_attempts,
    };
    let report = match (a.task, &cohort) {
        (Task::FailureModes, Some(c)) => {
            Report::FailureModes(workflows::run_failure_mode_analysis(c, &corpus, &gw, &opts)?)
        }
        (Task::Causal, Some(c)) => Report::CausalChains(workflows::run_causal_inference(c, &corpus, &gw, &opts)?),
        (Task::Compare, Some(c)) => Report::SiteComparison(workflows::run_comparison(c, &corpus, &gw, &opts)?),
        (Task::Audit, _) => Report::QualityAudit(workflows::run_quality_audit(&corpus, &gw, &opts)?),
        (_, None) => unreachable!("cohort checked above"),
    };
    let view = json!({
        "command": "analyze",
        "task": a.task,
        "corpus": digest(&a.corpus)?,
        "cohort": optional_digest(a.cohort.as_ref())?,
        "profile": gw.profile,
        "strategy": strategy,
        "max_attempts": max_attempts,
    });
    let envelope = ReportEnvelope {
        meta: RunMeta::new(&view, seed),
        report,
    };
    write(&a.out, &envelope.to_json())?;
    println!("analyze: {} report -> {}", envelope.report.type_name(), a.out.display());
    Ok(())
}

fn load_envelope(path: &Path) -> Result<ReportEnvelope, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    ReportEnvelope::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Renders one view of a report.
pub fn render(envelope: &ReportEnvelope, format: Format, corpus: Option<&Corpus>) -> Result<String, CliError> {
    let meta = &envelope.meta;
    let svg_header = |svg: String| format!("<!-- {} -->\n{svg}", meta.comment_line().trim_start_matches("# "));
    let timeline = |r: &workflows::CausalChainReport| -> Result<insights::TimelineLayout, CliError> {
        let c = corpus.ok_or_else(|| CliError::Config("--corpus is required for timeline views".into()))?;
        Ok(insights::timeline(r, c)?)
    };
    match (format, &envelope.report) {
        (Format::Markdown, _) => Ok(insights::render_markdown(envelope)),
        (Format::PlotData, Report::FailureModes(r)) => Ok(insights::export_pareto(&insights::pareto(r)?, Some(meta))),
        (Format::PlotData, Report::CausalChains(r)) => Ok(insights::export_timeline(&timeline(r)?, Some(meta))),
        (Format::Svg, Report::FailureModes(r)) => Ok(svg_header(insights::pareto_svg(&insights::pareto(r)?))),
        (Format::Svg, Report::CausalChains(r)) => Ok(svg_header(insights::timeline_svg(&timeline(r)?))),
        (_, other) => Err(CliError::Config(format!(
            "plot data and SVG are available for failure_modes and causal_chains reports, not {}",
            other.type_name()
        ))),
    }
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let envelope = load_envelope(&a.input)?;
    let corpus = a.corpus.as_ref().map(|p| Corpus::load(p)).transpose()?;
    let text = render(&envelope, a.format, corpus.as_ref())?;
    match &a.out {
        Some(p) => {
            write(p, &text)?;
            println!("report: {} -> {}", envelope.report.type_name(), p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn task_of(report: &Report) -> Task {
    match report {
        Report::FailureModes(_) => Task::FailureModes,
        Report::CausalChains(_) => Task::Causal,
        Report::SiteComparison(_) => Task::Compare,
        Report::QualityAudit(_) => Task::Audit,
    }
}

/// Scores a report; returns the metrics document.
pub fn score(a: &ScoreArgs) -> Result<serde_json::Value, CliError> {
    let envelope = load_envelope(&a.report)?;
    let task = task_of(&envelope.report);
    if let Some(t) = a.task {
        if t != task {
            return Err(CliError::Config(format!(
                "--task does not match the {} report",
                envelope.report.type_name()
            )));
        }
    }
    let truth = SynthTruth::load(&a.truth)?;
    let metrics = match &envelope.report {
        Report::FailureModes(r) => serde_json::to_value(syntheval::score_modes(r, &truth)?),
        Report::CausalChains(r) => serde_json::to_value(syntheval::score_chains(r, &truth)?),
        Report::SiteComparison(r) => {
            let glossary = match &a.glossary {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                    Some(prep::Glossary::from_csv(&text)?)
                }
                None => None,
            };
            serde_json::to_value(syntheval::score_comparison(r, &truth, glossary.as_ref())?)
        }
        Report::QualityAudit(_) => return Err(CliError::Config("audit reports have no planted ground truth".into())),
    }
    .expect("metrics serialize");
    let doc = json!({"meta": envelope.meta, "task": task, "metrics": metrics});
    let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(doc)
}

/// Paths of a pipeline output tree.
pub struct PipelineLayout {
    pub root: PathBuf,
}

impl PipelineLayout {
    pub fn synth(&self) -> PathBuf {
        self.root.join("synth")
    }
    pub fn ingested(&self) -> PathBuf {
        self.root.join("ingest").join("corpus.jsonl")
    }
    pub fn prep(&self) -> PathBuf {
        self.root.join("prep")
    }
    pub fn cohort(&self, name: &str) -> PathBuf {
        self.root.join("cohorts").join(format!("{name}.json"))
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(format!("{name}.json"))
    }
    pub fn view(&self, file: &str) -> PathBuf {
        self.root.join("views").join(file)
    }
    pub fn score(&self, name: &str) -> PathBuf {
        self.root.join("scores").join(format!("{name}.json"))
    }
}

pub fn pipeline(a: &PipelineArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let layout = PipelineLayout { root: a.out.clone() };
    let spec = synth(&SynthArgs {
        preset: a.preset.clone(),
        spec: a.spec.clone(),
        seed: a.seed,
        out: layout.synth(),
    })?;
    let seed = spec.seed;
    let cfg = RunConfig {
        seed: Some(seed),
        ..cfg.clone()
    };
    ingest(
        &IngestArgs {
            input: layout.synth().join(syntheval::RAW_FILE),
            mapping: Some(layout.synth().join(syntheval::MAPPING_FILE)),
            max_reject_fraction: None,
            out: layout.ingested(),
        },
        &cfg,
    )?;
    prep_cmd(
        &PrepArgs {
            corpus: layout.ingested(),
            policy: None,
            sites: Some(layout.synth().join(syntheval::SITES_FILE)),
            out: layout.prep(),
        },
        &cfg,
    )?;
    let prepared = layout.prep().join(PREP_CORPUS);
    let cohort_args = |kind, name: Option<String>, file: &str| CohortArgs {
        corpus: prepared.clone(),
        kind,
        name,
        turbine: None,
        exposure: ExposureArg::Observed,
        min_observation_days: FrequencyOptions::default().min_observation_days,
        sites: Some(layout.prep().join(PREP_SITES)),
        farms: Vec::new(),
        k: 3,
        max_ratio: 2.0,
        out: layout.cohort(file),
    };
    let mut tasks: Vec<(Task, &str)> = Vec::new();
    if !spec.planted_modes.is_empty() {
        cohort(
            &cohort_args(CohortKindArg::Subsystem, Some(spec.mode_subsystem.clone()), "subsystem"),
            &cfg,
        )?;
        tasks.push((Task::FailureModes, "failure-modes"));
    }
    if spec.chain_turbine.is_some() {
        cohort(&cohort_args(CohortKindArg::Turbine, None, "turbine"), &cfg)?;
        tasks.push((Task::Causal, "causal"));
    }
    if spec.sites.iter().filter(|s| s.skew.is_some()).count() >= 2 {
        cohort(&cohort_args(CohortKindArg::FarmGroup, None, "farm-group"), &cfg)?;
        tasks.push((Task::Compare, "compare"));
    }
    tasks.push((Task::Audit, "audit"));
    let trail = a
        .audit_trail
        .clone()
        .or_else(|| cfg.audit_trail.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_AUDIT_TRAIL));
    let cohort_file: BTreeMap<&str, &str> = [
        ("failure-modes", "subsystem"),
        ("causal", "turbine"),
        ("compare", "farm-group"),
    ]
    .into_iter()
    .collect();
    let corpus = Corpus::load(&prepared)?;
    for (task, name) in tasks {
        let (strategy, fraction) = match task {
            Task::Audit if a.audit_fraction < 1.0 => (StrategyArg::Sampled, Some(a.audit_fraction)),
            _ => (StrategyArg::Full, None),
        };
        analyze(
            &AnalyzeArgs {
                task,
                corpus: prepared.clone(),
                cohort: cohort_file.get(name).map(|f| layout.cohort(f)),
                provider: a.provider.clone(),
                profiles_file: a.profiles_file.clone(),
                strategy: Some(strategy),
                fraction,
                stratified: false,
                seed: Some(seed),
                max_attempts: None,
                audit_trail: Some(trail.clone()),
                out: layout.report(name),
            },
            &cfg,
        )?;
        let envelope = load_envelope(&layout.report(name))?;
        write(
            &layout.view(&format!("{name}.md")),
            &render(&envelope, Format::Markdown, Some(&corpus))?,
        )?;
        if matches!(task, Task::FailureModes | Task::Causal) {
            write(
                &layout.view(&format!("{name}.csv")),
                &render(&envelope, Format::PlotData, Some(&corpus))?,
            )?;
            write(
                &layout.view(&format!("{name}.svg")),
                &render(&envelope, Format::Svg, Some(&corpus))?,
            )?;
        }
        if task != Task::Audit {
            score(&ScoreArgs {
                task: Some(task),
                report: layout.report(name),
                truth: layout.synth().join(syntheval::TRUTH_FILE),
                glossary: Some(layout.prep().join(PREP_GLOSSARY)),
                out: Some(layout.score(name)),
            })?;
        }
    }
    println!("pipeline: outputs in {}", a.out.display());
    Ok(())
}
