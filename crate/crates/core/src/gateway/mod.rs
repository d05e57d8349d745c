//! Provider abstraction: profiles, chunk planning, retry with backoff, an
//! append-only audit trail and bounded concurrent dispatch.

mod http;
pub mod mock;
mod plan;

use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{GeminiProvider, OpenAiProvider};
pub use mock::{mock_complete, MockError, MockProvider};
pub use plan::{plan_chunks, sample_size, token_budget, ChunkPlan, ChunkStrategy, PlanError, PlanItem};

/// Default number of requests in flight at once.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    /// OpenAI-compatible chat completions.
    Openai,
    Gemini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderProfile {
    pub name: String,
    pub kind: ProviderKind,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: String,
    pub context_window_tokens: usize,
    pub max_output_tokens: usize,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Sampling temperature sent to the provider; `None` omits the field
    /// (some reasoning models accept only their default).
    #[serde(default)]
    pub temperature: Option<f64>,
}

fn default_timeout() -> u64 {
    600
}

fn default_retries() -> u32 {
    3
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("unknown provider profile '{0}'")]
    Unknown(String),
    #[error("profile '{name}': {reason}")]
    Invalid { name: String, reason: String },
    #[error("cannot read profile file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("profile file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {0} with the API key is not set")]
    MissingCredentials(String),
}

impl ProviderProfile {
    pub fn mock() -> Self {
        ProviderProfile {
            name: "mock".into(),
            kind: ProviderKind::Mock,
            model: "rule-based".into(),
            endpoint: String::new(),
            api_key_env: String::new(),
            context_window_tokens: 2_000_000,
            max_output_tokens: 65_536,
            request_timeout_s: 1,
            max_retries: 3,
            temperature: None,
        }
    }

    pub fn builtin() -> Vec<ProviderProfile> {
        vec![
            ProviderProfile::mock(),
            ProviderProfile {
                name: "gpt-5".into(),
                kind: ProviderKind::Openai,
                model: "gpt-5".into(),
                endpoint: "https://api.openai.com/v1".into(),
                api_key_env: "OPENAI_API_KEY".into(),
                context_window_tokens: 400_000,
                max_output_tokens: 128_000,
                request_timeout_s: 900,
                max_retries: 3,
                temperature: None,
            },
            ProviderProfile {
                name: "gemini-2.5-pro".into(),
                kind: ProviderKind::Gemini,
                model: "gemini-2.5-pro".into(),
                endpoint: "https://generativelanguage.googleapis.com/v1beta".into(),
                api_key_env: "GEMINI_API_KEY".into(),
                context_window_tokens: 1_048_576,
                max_output_tokens: 65_536,
                request_timeout_s: 900,
                max_retries: 3,
                temperature: Some(0.0),
            },
        ]
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |reason: &str| {
            Err(ProfileError::Invalid {
                name: self.name.clone(),
                reason: reason.into(),
            })
        };
        if self.name.is_empty() {
            return bad("empty name");
        }
        if self.max_output_tokens == 0 || self.context_window_tokens <= self.max_output_tokens {
            return bad("need context_window_tokens > max_output_tokens > 0");
        }
        if self.kind != ProviderKind::Mock && (self.endpoint.is_empty() || self.api_key_env.is_empty()) {
            return bad("live profiles need endpoint and api_key_env");
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    #[serde(default)]
    profile: Vec<ProviderProfile>,
}

/// Named profiles: the built-ins, optionally overridden or extended by a TOML
/// file of `[[profile]]` tables.
#[derive(Debug, Clone)]
pub struct ProfileRegistry {
    profiles: BTreeMap<String, ProviderProfile>,
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        ProfileRegistry {
            profiles: ProviderProfile::builtin()
                .into_iter()
                .map(|p| (p.name.clone(), p))
                .collect(),
        }
    }
}

impl ProfileRegistry {
    pub fn with_file(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reg = ProfileRegistry::default();
        reg.merge_toml(&text)?;
        Ok(reg)
    }

    pub fn merge_toml(&mut self, text: &str) -> Result<(), ProfileError> {
        let file: ProfileFile = toml::from_str(text)?;
        for p in file.profile {
            p.validate()?;
            self.profiles.insert(p.name.clone(), p);
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ProviderProfile, ProfileError> {
        self.profiles
            .get(name)
            .ok_or_else(|| ProfileError::Unknown(name.into()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.profiles.keys().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    AuthFailure,
    RateLimited,
    Timeout,
    ContextOverflow,
    /// 5xx or connection-level failure.
    Transport,
    /// Response arrived but could not be read as the provider's envelope.
    BadResponse,
}

impl ProviderErrorKind {
    pub fn retryable(self) -> bool {
        matches!(
            self,
            ProviderErrorKind::RateLimited | ProviderErrorKind::Timeout | ProviderErrorKind::Transport
        )
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{kind:?}: {message}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        ProviderError {
            kind,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("auth_failure: {0}")]
    AuthFailure(String),
    #[error("context_overflow: {0}")]
    ContextOverflow(String),
    #[error("provider error: {0}")]
    Provider(ProviderError),
    #[error("retries_exhausted after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: u32, last: ProviderError },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProviderResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl ProviderResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ProviderResponse {
            text: text.into(),
            ..Default::default()
        }
    }
}

pub trait Provider: Send + Sync {
    fn send(&self, prompt: &str) -> Result<ProviderResponse, ProviderError>;
}

/// Builds the provider a profile describes, reading credentials from the
/// environment for live kinds.
pub fn provider_for(profile: &ProviderProfile) -> Result<Arc<dyn Provider>, ProfileError> {
    profile.validate()?;
    match profile.kind {
        ProviderKind::Mock => Ok(Arc::new(MockProvider)),
        ProviderKind::Openai | ProviderKind::Gemini => {
            let key = std::env::var(&profile.api_key_env)
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| ProfileError::MissingCredentials(profile.api_key_env.clone()))?;
            Ok(match profile.kind {
                ProviderKind::Openai => Arc::new(OpenAiProvider::new(profile.clone(), key)),
                _ => Arc::new(GeminiProvider::new(profile.clone(), key)),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub enum Fault {
    /// Return this text instead of calling the inner provider.
    Respond(String),
    Fail(ProviderErrorKind),
}

/// Fault-injection wrapper: consumes queued faults first, then delegates.
pub struct ScriptedProvider {
    inner: Arc<dyn Provider>,
    faults: Mutex<VecDeque<Fault>>,
    calls: AtomicUsize,
    /// When set, every call after the queue is drained returns this text.
    always: Option<String>,
}

impl ScriptedProvider {
    pub fn new(inner: Arc<dyn Provider>, faults: impl IntoIterator<Item = Fault>) -> Self {
        ScriptedProvider {
            inner,
            faults: Mutex::new(faults.into_iter().collect()),
            calls: AtomicUsize::new(0),
            always: None,
        }
    }

    pub fn always(text: impl Into<String>) -> Self {
        ScriptedProvider {
            inner: Arc::new(MockProvider),
            faults: Mutex::new(VecDeque::new()),
            calls: AtomicUsize::new(0),
            always: Some(text.into()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn send(&self, prompt: &str) -> Result<ProviderResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fault = self.faults.lock().expect("fault queue poisoned").pop_front();
        match fault {
            Some(Fault::Respond(text)) => Ok(ProviderResponse::text(text)),
            Some(Fault::Fail(kind)) => Err(ProviderError::new(kind, "injected fault")),
            None => match &self.always {
                Some(text) => Ok(ProviderResponse::text(text.clone())),
                None => self.inner.send(prompt),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    /// Relative jitter: each delay is scaled by a factor in [1 - j, 1 + j].
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(2),
            factor: 2.0,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based), jittered by `rng`.
    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let nominal = self.base.as_secs_f64() * self.factor.powi(retry as i32);
        let scale = if self.jitter > 0.0 {
            1.0 + rng.random_range(-self.jitter..=self.jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64(nominal * scale)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

#[derive(Debug, Serialize)]
struct AuditRecord<'a> {
    ts: String,
    event: &'a str,
    profile: &'a str,
    model: &'a str,
    attempt: u32,
    prompt_sha256: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt_chars: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt_tokens_estimate: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response_chars: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt_tokens: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    completion_tokens: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retry_in_ms: Option<u128>,
}

/// Append-only JSON-lines log of every request, response and failure.
pub struct AuditTrail {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl AuditTrail {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file: File = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditTrail::from_writer(Box::new(file)))
    }

    pub fn from_writer(sink: Box<dyn Write + Send>) -> Self {
        AuditTrail { sink: Mutex::new(sink) }
    }

    fn write(&self, record: &AuditRecord<'_>) {
        let line = serde_json::to_string(record).expect("audit record serializes");
        let mut sink = self.sink.lock().expect("audit trail poisoned");
        if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
            log::warn!("audit trail write failed: {e}");
        }
    }
}

/// In-memory sink for inspecting an audit trail in tests.
#[derive(Clone, Default)]
pub struct SharedBuffer(pub Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn contents(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().expect("buffer poisoned")).into_owned()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().expect("buffer poisoned").extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Completion outcome plus the number of attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub response: ProviderResponse,
    pub attempts: u32,
}

/// Dispatches prompts to one provider under a profile's retry policy.
#[derive(Clone)]
pub struct Gateway {
    pub profile: ProviderProfile,
    provider: Arc<dyn Provider>,
    audit: Option<Arc<AuditTrail>>,
    retry: RetryPolicy,
    sleeper: Sleeper,
    pub max_in_flight: usize,
}

impl Gateway {
    pub fn new(profile: ProviderProfile, provider: Arc<dyn Provider>) -> Self {
        Gateway {
            profile,
            provider,
            audit: None,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(std::thread::sleep),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn mock() -> Self {
        Gateway::new(ProviderProfile::mock(), Arc::new(MockProvider))
    }

    pub fn from_profile(profile: &ProviderProfile) -> Result<Self, ProfileError> {
        Ok(Gateway::new(profile.clone(), provider_for(profile)?))
    }

    pub fn with_audit(mut self, audit: Arc<AuditTrail>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    /// Sends `prompt`, retrying transient failures with exponential backoff.
    pub fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        let digest = hex::encode(Sha256::digest(prompt.as_bytes()));
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(
            Sha256::digest(prompt.as_bytes())[..8].try_into().expect("8 bytes"),
        ));
        let p = &self.profile;
        let base = |event, attempt| AuditRecord {
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            event,
            profile: &p.name,
            model: &p.model,
            attempt,
            prompt_sha256: &digest,
            prompt_chars: None,
            prompt_tokens_estimate: None,
            temperature: None,
            response_chars: None,
            prompt_tokens: None,
            completion_tokens: None,
            error: None,
            retry_in_ms: None,
        };
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if let Some(a) = &self.audit {
                a.write(&AuditRecord {
                    prompt_chars: Some(prompt.chars().count()),
                    prompt_tokens_estimate: Some(crate::promptkit::estimate_tokens(prompt)),
                    temperature: p.temperature,
                    ..base("request", attempt)
                });
            }
            match self.provider.send(prompt) {
                Ok(response) => {
                    if let Some(a) = &self.audit {
                        a.write(&AuditRecord {
                            response_chars: Some(response.text.chars().count()),
                            prompt_tokens: response.prompt_tokens,
                            completion_tokens: response.completion_tokens,
                            ..base("response", attempt)
                        });
                    }
                    return Ok(Completion {
                        response,
                        attempts: attempt,
                    });
                }
                Err(err) => {
                    let retry = err.kind.retryable() && attempt <= p.max_retries;
                    let delay = retry.then(|| self.retry.delay(attempt - 1, &mut rng));
                    if let Some(a) = &self.audit {
                        a.write(&AuditRecord {
                            error: Some(err.to_string()),
                            retry_in_ms: delay.map(|d| d.as_millis()),
                            ..base("error", attempt)
                        });
                    }
                    match (err.kind, delay) {
                        (ProviderErrorKind::AuthFailure, _) => return Err(GatewayError::AuthFailure(err.message)),
                        (ProviderErrorKind::ContextOverflow, _) => {
                            return Err(GatewayError::ContextOverflow(err.message))
                        }
                        (_, Some(d)) => {
                            log::info!("{} attempt {attempt} failed ({err}); retrying in {d:?}", p.name);
                            (self.sleeper)(d);
                        }
                        (k, None) if k.retryable() => {
                            return Err(GatewayError::RetriesExhausted {
                                attempts: attempt,
                                last: err,
                            })
                        }
                        _ => return Err(GatewayError::Provider(err)),
                    }
                }
            }
        }
    }
}

/// Runs `f(0..n)` on at most `limit` threads and returns results in index
/// order, independent of completion timing.
pub fn run_bounded<T, F>(n: usize, limit: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = limit.max(1).min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().expect("result slots poisoned")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|o| o.expect("every index ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording_sleeper() -> (Sleeper, Arc<Mutex<Vec<Duration>>>) {
        let log = Arc::new(Mutex::new(Vec::new()));
        let l2 = log.clone();
        (Arc::new(move |d| l2.lock().unwrap().push(d)), log)
    }

    fn scripted(faults: Vec<Fault>) -> (Gateway, Arc<ScriptedProvider>, Arc<Mutex<Vec<Duration>>>) {
        let sp = Arc::new(ScriptedProvider::new(Arc::new(MockProvider), faults));
        let (sleeper, slept) = recording_sleeper();
        let gw = Gateway::new(ProviderProfile::mock(), sp.clone()).with_sleeper(sleeper);
        (gw, sp, slept)
    }

    const PROMPT: &str = "WORKFLOW: failure_modes\nTEMPLATE: v1\nSUBJECT: X\n\n## DATA\nL1 | 2020-01-01 | X | a [FM:A] | \n## END DATA\n";

    #[test]
    fn two_rate_limits_then_success() {
        let (gw, sp, slept) = scripted(vec![
            Fault::Fail(ProviderErrorKind::RateLimited),
            Fault::Fail(ProviderErrorKind::RateLimited),
        ]);
        let c = gw.complete(PROMPT).unwrap();
        assert_eq!(c.attempts, 3);
        assert_eq!(sp.calls(), 3);
        let slept = slept.lock().unwrap();
        assert_eq!(slept.len(), 2);
        assert!(slept[0] >= Duration::from_secs_f64(1.5) && slept[0] <= Duration::from_secs_f64(2.5));
        assert!(slept[1] >= Duration::from_secs_f64(3.0) && slept[1] <= Duration::from_secs_f64(5.0));
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (gw, sp, slept) = scripted(vec![Fault::Fail(ProviderErrorKind::AuthFailure)]);
        assert!(matches!(gw.complete(PROMPT), Err(GatewayError::AuthFailure(_))));
        assert_eq!(sp.calls(), 1);
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn context_overflow_is_not_retried() {
        let (gw, sp, _) = scripted(vec![Fault::Fail(ProviderErrorKind::ContextOverflow)]);
        assert!(matches!(gw.complete(PROMPT), Err(GatewayError::ContextOverflow(_))));
        assert_eq!(sp.calls(), 1);
    }

    #[test]
    fn retries_exhaust() {
        let (gw, sp, slept) = scripted(vec![Fault::Fail(ProviderErrorKind::Timeout); 10]);
        match gw.complete(PROMPT) {
            Err(GatewayError::RetriesExhausted { attempts, last }) => {
                assert_eq!(attempts, 4);
                assert_eq!(last.kind, ProviderErrorKind::Timeout);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(sp.calls(), 4);
        assert_eq!(slept.lock().unwrap().len(), 3);
    }

    #[test]
    fn audit_trail_records_each_attempt() {
        let buf = SharedBuffer::default();
        let (gw, _, _) = scripted(vec![Fault::Fail(ProviderErrorKind::Transport)]);
        let gw = gw.with_audit(Arc::new(AuditTrail::from_writer(Box::new(buf.clone()))));
        gw.complete(PROMPT).unwrap();
        let lines: Vec<serde_json::Value> = buf
            .contents()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let events: Vec<&str> = lines.iter().map(|v| v["event"].as_str().unwrap()).collect();
        assert_eq!(events, ["request", "error", "request", "response"]);
        assert!(lines.iter().all(|v| v["ts"].is_string()));
    }

    #[test]
    fn mock_is_deterministic() {
        let gw = Gateway::mock();
        assert_eq!(gw.complete(PROMPT).unwrap(), gw.complete(PROMPT).unwrap());
    }

    #[test]
    fn run_bounded_preserves_order() {
        let out = run_bounded(50, 4, |i| {
            std::thread::sleep(Duration::from_micros(((50 - i) * 20) as u64));
            i * i
        });
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn registry_merges_file_profiles() {
        let mut reg = ProfileRegistry::default();
        reg.merge_toml(
            r#"
[[profile]]
name = "local"
kind = "openai"
model = "llama"
endpoint = "http://localhost:8080/v1"
api_key_env = "LOCAL_KEY"
context_window_tokens = 32000
max_output_tokens = 4000
"#,
        )
        .unwrap();
        assert_eq!(reg.get("local").unwrap().max_retries, 3);
        assert!(reg.get("gpt-5").is_ok());
        assert!(matches!(reg.get("nope"), Err(ProfileError::Unknown(_))));
        assert!(reg
            .merge_toml("[[profile]]\nname='x'\nkind='mock'\ncontext_window_tokens=10\nmax_output_tokens=10\n")
            .is_err());
    }

    #[test]
    fn missing_credentials() {
        let mut p = ProviderProfile::builtin().remove(1);
        p.api_key_env = "MAINTLOG_TEST_SURELY_UNSET_KEY".into();
        assert!(matches!(provider_for(&p), Err(ProfileError::MissingCredentials(_))));
    }
}
