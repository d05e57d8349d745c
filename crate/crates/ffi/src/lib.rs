//! C ABI over the maintlog library.
//!
//! Objects cross the boundary as opaque handles released with their `*_free`
//! function. Every fallible call returns an [`MlStatus`]; on failure the
//! message is available from [`ml_last_error`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and released with
//! [`ml_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use maintlog::cli::CliError;
use maintlog::cohorts::{high_failure_cohort, subsystem_cohort, turbine_cohort, AliasTable, FrequencyOptions};
use maintlog::corpus::{self, ColumnMapping, Corpus, IngestOptions};
use maintlog::gateway::{ChunkStrategy, Gateway, ProfileRegistry};
use maintlog::insights;
use maintlog::meta::RunMeta;
use maintlog::prep::{self, Glossary, InformativenessPolicy};
use maintlog::workflows::{self, Report, ReportEnvelope, RunOptions};

/// Result of every fallible call. Values 2 to 5 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8 or an out-of-range value.
    InvalidArgument = 1,
    Config = 2,
    Validation = 3,
    Provider = 4,
    RetriesExhausted = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlTask {
    FailureModes = 0,
    Causal = 1,
    Audit = 2,
}

/// Opaque canonical corpus.
pub struct MlCorpus(Corpus);

/// Opaque farm-id glossary.
pub struct MlGlossary(Glossary);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MlStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Config(_) => MlStatus::Config,
            CliError::Validation(_) => MlStatus::Validation,
            CliError::Provider(_) => MlStatus::Provider,
            CliError::RetriesExhausted(_) => MlStatus::RetriesExhausted,
        };
        Failure(status, e.to_string())
    }
}

fn fail<E: Into<CliError>>(e: E) -> Failure {
    Failure::from(e.into())
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MlStatus::InvalidArgument, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error: panic caught at the C boundary");
            MlStatus::Internal
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

/// # Safety
/// As [`str_arg`]; null maps to `None`.
unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

/// # Safety
/// `h` is null or a live handle of type `T`.
unsafe fn handle<'a, T>(h: *const T, name: &str) -> Result<&'a T, Failure> {
    h.as_ref().ok_or_else(|| invalid(format!("{name} is null")))
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn put<T>(out: *mut *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = CString::new(s)
        .map_err(|_| invalid("result contains a NUL byte"))?
        .into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn ml_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn ml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a raw operator table. `mapping_path` may be null for identity column names.
///
/// # Safety
/// String arguments are null or NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_corpus_ingest(
    table_path: *const c_char,
    mapping_path: *const c_char,
    out: *mut *mut MlCorpus,
) -> MlStatus {
    guard(|| {
        let table = PathBuf::from(str_arg(table_path, "table_path")?);
        let mapping = match opt_str_arg(mapping_path, "mapping_path")? {
            Some(p) => ColumnMapping::load(p.as_ref()).map_err(fail)?,
            None => ColumnMapping::default(),
        };
        let c = corpus::ingest(&table, &mapping, &IngestOptions::default()).map_err(fail)?;
        put(out, MlCorpus(c), "out")
    })
}

/// Loads a canonical corpus file.
///
/// # Safety
/// `path` is NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_corpus_load(path: *const c_char, out: *mut *mut MlCorpus) -> MlStatus {
    guard(|| {
        let c = Corpus::load(str_arg(path, "path")?.as_ref()).map_err(fail)?;
        put(out, MlCorpus(c), "out")
    })
}

/// # Safety
/// `corpus` is a live handle; `path` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ml_corpus_save(corpus: *const MlCorpus, path: *const c_char) -> MlStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        c.0.save(str_arg(path, "path")?.as_ref(), None).map_err(fail)
    })
}

/// Number of logs; 0 for a null handle.
///
/// # Safety
/// `corpus` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_corpus_len(corpus: *const MlCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_corpus_free(corpus: *mut MlCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Filters, cleans and anonymizes with the default policy. Produces a new
/// corpus and its glossary; the input handle is left untouched.
///
/// # Safety
/// `corpus` is a live handle; both outputs are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_prepare(
    corpus: *const MlCorpus,
    out_corpus: *mut *mut MlCorpus,
    out_glossary: *mut *mut MlGlossary,
) -> MlStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        if out_corpus.is_null() || out_glossary.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let out = prep::prepare(&c.0, &InformativenessPolicy::default()).map_err(fail)?;
        put(out_corpus, MlCorpus(out.corpus), "out_corpus")?;
        put(out_glossary, MlGlossary(out.glossary), "out_glossary")
    })
}

/// Two-letter code of a raw farm id.
///
/// # Safety
/// `glossary` is a live handle; `farm_id` is NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_glossary_code(
    glossary: *const MlGlossary,
    farm_id: *const c_char,
    out: *mut *mut c_char,
) -> MlStatus {
    guard(|| {
        let g = handle(glossary, "glossary")?;
        let farm = str_arg(farm_id, "farm_id")?;
        let code =
            g.0.code(farm)
                .ok_or_else(|| fail(CliError::Validation(format!("farm '{farm}' is not in the glossary"))))?;
        put_string(out, code.to_owned())
    })
}

/// Raw farm id behind a two-letter code.
///
/// # Safety
/// `glossary` is a live handle; `code` is NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_glossary_farm(
    glossary: *const MlGlossary,
    code: *const c_char,
    out: *mut *mut c_char,
) -> MlStatus {
    guard(|| {
        let g = handle(glossary, "glossary")?;
        let farm = prep::deanonymize(str_arg(code, "code")?, &g.0).map_err(fail)?;
        put_string(out, farm.to_owned())
    })
}

/// The glossary as a `code,farm_id` CSV table.
///
/// # Safety
/// `glossary` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_glossary_to_csv(glossary: *const MlGlossary, out: *mut *mut c_char) -> MlStatus {
    guard(|| put_string(out, handle(glossary, "glossary")?.0.to_csv()))
}

/// # Safety
/// `glossary` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_glossary_free(glossary: *mut MlGlossary) {
    if !glossary.is_null() {
        drop(Box::from_raw(glossary));
    }
}

/// Runs one analysis and writes the report envelope as JSON to `out_json`.
///
/// `subject` is the subsystem name for failure modes, an optional turbine id
/// for causal analysis (null selects the highest-frequency turbine) and
/// ignored for audits. `profile` names a provider profile (null means the
/// offline mock). `sample_fraction` in (0, 1) samples the corpus for audits;
/// 0 or 1 analyses everything.
///
/// # Safety
/// `corpus` is a live handle; string arguments are null or NUL-terminated;
/// `out_json` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_analyze(
    corpus: *const MlCorpus,
    task: MlTask,
    subject: *const c_char,
    profile: *const c_char,
    sample_fraction: f64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> MlStatus {
    guard(|| {
        let c = &handle(corpus, "corpus")?.0;
        let subject = opt_str_arg(subject, "subject")?;
        let registry = ProfileRegistry::default();
        let profile = registry
            .get(opt_str_arg(profile, "profile")?.unwrap_or("mock"))
            .map_err(fail)?;
        let gateway = Gateway::from_profile(profile).map_err(fail)?;
        let strategy = match task {
            MlTask::Audit if sample_fraction > 0.0 && sample_fraction < 1.0 => ChunkStrategy::sampled(sample_fraction),
            _ if !(0.0..=1.0).contains(&sample_fraction) => {
                return Err(invalid(format!("sample_fraction {sample_fraction} is outside [0, 1]")))
            }
            _ => ChunkStrategy::Full,
        };
        let opts = RunOptions::with_strategy(strategy, seed);
        let report = match task {
            MlTask::FailureModes => {
                let name = subject.ok_or_else(|| invalid("failure-mode analysis needs a subsystem name"))?;
                let cohort = subsystem_cohort(c, name, &AliasTable::default()).map_err(fail)?;
                Report::FailureModes(workflows::run_failure_mode_analysis(&cohort, c, &gateway, &opts).map_err(fail)?)
            }
            MlTask::Causal => {
                let cohort = match subject {
                    Some(t) => turbine_cohort(c, t, "turbine selected by the caller"),
                    None => high_failure_cohort(c, &FrequencyOptions::default()),
                }
                .map_err(fail)?;
                Report::CausalChains(workflows::run_causal_inference(&cohort, c, &gateway, &opts).map_err(fail)?)
            }
            MlTask::Audit => Report::QualityAudit(workflows::run_quality_audit(c, &gateway, &opts).map_err(fail)?),
        };
        let envelope = ReportEnvelope {
            meta: RunMeta::new(
                &serde_json::json!({"task": task as u32, "profile": profile, "strategy": strategy}),
                seed,
            ),
            report,
        };
        put_string(out_json, envelope.to_json())
    })
}

/// Renders a report envelope (as produced by [`ml_analyze`]) to Markdown.
///
/// # Safety
/// `report_json` is NUL-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ml_report_markdown(report_json: *const c_char, out: *mut *mut c_char) -> MlStatus {
    guard(|| {
        let envelope = ReportEnvelope::from_json(str_arg(report_json, "report_json")?)
            .map_err(|e| fail(CliError::Validation(format!("report JSON: {e}"))))?;
        put_string(out, insights::render_markdown(&envelope))
    })
}

#[cfg(test)]
mod tests;
