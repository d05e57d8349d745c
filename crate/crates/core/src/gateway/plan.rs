//! Token-budget chunk planning.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ProviderProfile;

/// Fraction of the usable window a chunk may fill; absorbs estimator error.
pub const SAFETY_FACTOR_NUM: usize = 9;
pub const SAFETY_FACTOR_DEN: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("payload of {tokens} estimated tokens exceeds the {budget}-token budget of profile '{profile}'; use a packed or sampled strategy or a larger-window profile")]
    FullExceedsBudget {
        tokens: usize,
        budget: usize,
        profile: String,
    },
    #[error("log '{log_id}' alone needs {tokens} tokens, over the {budget}-token budget")]
    ItemExceedsBudget {
        log_id: String,
        tokens: usize,
        budget: usize,
    },
    #[error("sample fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("per-log token estimates must be positive (log '{0}')")]
    NonPositiveEstimate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum ChunkStrategy {
    Full,
    Packed,
    SampledFraction { fraction: f64, stratified: bool },
}

impl ChunkStrategy {
    pub fn sampled(fraction: f64) -> Self {
        ChunkStrategy::SampledFraction {
            fraction,
            stratified: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChunkStrategy::Full => "full",
            ChunkStrategy::Packed => "packed",
            ChunkStrategy::SampledFraction { .. } => "sampled_fraction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanItem {
    pub log_id: String,
    pub tokens: usize,
    /// Stratum label for stratified sampling (e.g. the subsystem).
    pub stratum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub strategy: ChunkStrategy,
    pub chunks: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_fraction: Option<f64>,
    pub seed: u64,
    pub budget_tokens: usize,
    /// Estimated prompt tokens per chunk (overhead included).
    pub chunk_tokens: Vec<usize>,
    pub input_size: usize,
}

impl ChunkPlan {
    pub fn selected(&self) -> usize {
        self.chunks.iter().map(Vec::len).sum()
    }

    /// Fraction of the input covered by the plan.
    pub fn coverage(&self) -> f64 {
        if self.input_size == 0 {
            0.0
        } else {
            self.selected() as f64 / self.input_size as f64
        }
    }
}

/// floor(0.9 * (context window - max output)).
pub fn token_budget(profile: &ProviderProfile) -> usize {
    profile.context_window_tokens.saturating_sub(profile.max_output_tokens) * SAFETY_FACTOR_NUM / SAFETY_FACTOR_DEN
}

/// Number of items a sampled plan selects.
pub fn sample_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Seeded uniform sample of `n` ids; keyed on the sorted id list so the chosen
/// set does not depend on input order.
fn sample_ids(items: &[PlanItem], n: usize, seed: u64, stratified: bool) -> HashSet<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !stratified {
        let mut ids: Vec<&str> = items.iter().map(|i| i.log_id.as_str()).collect();
        ids.sort_unstable();
        return rand::seq::index::sample(&mut rng, ids.len(), n)
            .into_iter()
            .map(|i| ids[i].to_owned())
            .collect();
    }
    let mut strata: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for it in items {
        strata
            .entry(it.stratum.as_deref().unwrap_or(""))
            .or_default()
            .push(&it.log_id);
    }
    for ids in strata.values_mut() {
        ids.sort_unstable();
    }
    // largest-remainder apportionment of n across strata
    let total = items.len() as f64;
    let mut alloc: Vec<(&str, usize, f64)> = strata
        .iter()
        .map(|(k, ids)| {
            let exact = n as f64 * ids.len() as f64 / total;
            (*k, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut remaining = n - alloc.iter().map(|a| a.1).sum::<usize>();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| {
        alloc[b]
            .2
            .total_cmp(&alloc[a].2)
            .then_with(|| alloc[a].0.cmp(alloc[b].0))
    });
    for i in order {
        if remaining == 0 {
            break;
        }
        if alloc[i].1 < strata[alloc[i].0].len() {
            alloc[i].1 += 1;
            remaining -= 1;
        }
    }
    let mut out = HashSet::with_capacity(n);
    for (k, take, _) in alloc {
        let ids = &strata[k];
        for i in rand::seq::index::sample(&mut rng, ids.len(), take) {
            out.insert(ids[i].to_owned());
        }
    }
    out
}

fn pack(items: &[&PlanItem], overhead: usize, budget: usize) -> Result<(Vec<Vec<String>>, Vec<usize>), PlanError> {
    let mut chunks = Vec::new();
    let mut tokens = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_tokens = overhead;
    for it in items {
        if overhead + it.tokens > budget {
            return Err(PlanError::ItemExceedsBudget {
                log_id: it.log_id.clone(),
                tokens: overhead + it.tokens,
                budget,
            });
        }
        if current_tokens + it.tokens > budget {
            chunks.push(std::mem::take(&mut current));
            tokens.push(current_tokens);
            current_tokens = overhead;
        }
        current.push(it.log_id.clone());
        current_tokens += it.tokens;
    }
    if !current.is_empty() {
        chunks.push(current);
        tokens.push(current_tokens);
    }
    Ok((chunks, tokens))
}

/// Splits `items` into budget-respecting chunks.
///
/// `full` yields one chunk or fails; `packed` fills chunks greedily in input
/// order (contiguous, so the chunk count is minimal for that order);
/// `sampled_fraction` draws a seeded sample and packs it.
pub fn plan_chunks(
    items: &[PlanItem],
    overhead_tokens: usize,
    profile: &ProviderProfile,
    strategy: ChunkStrategy,
    seed: u64,
) -> Result<ChunkPlan, PlanError> {
    if let Some(bad) = items.iter().find(|i| i.tokens == 0) {
        return Err(PlanError::NonPositiveEstimate(bad.log_id.clone()));
    }
    let budget = token_budget(profile);
    let mut plan = ChunkPlan {
        strategy,
        chunks: Vec::new(),
        sample_fraction: None,
        seed,
        budget_tokens: budget,
        chunk_tokens: Vec::new(),
        input_size: items.len(),
    };
    match strategy {
        ChunkStrategy::Full => {
            let total = overhead_tokens + items.iter().map(|i| i.tokens).sum::<usize>();
            if total > budget {
                return Err(PlanError::FullExceedsBudget {
                    tokens: total,
                    budget,
                    profile: profile.name.clone(),
                });
            }
            if !items.is_empty() {
                plan.chunks.push(items.iter().map(|i| i.log_id.clone()).collect());
                plan.chunk_tokens.push(total);
            }
        }
        ChunkStrategy::Packed => {
            let refs: Vec<&PlanItem> = items.iter().collect();
            (plan.chunks, plan.chunk_tokens) = pack(&refs, overhead_tokens, budget)?;
        }
        ChunkStrategy::SampledFraction { fraction, stratified } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(PlanError::BadFraction(fraction));
            }
            let chosen = sample_ids(items, sample_size(fraction, items.len()), seed, stratified);
            let refs: Vec<&PlanItem> = items.iter().filter(|i| chosen.contains(&i.log_id)).collect();
            (plan.chunks, plan.chunk_tokens) = pack(&refs, overhead_tokens, budget)?;
            plan.sample_fraction = Some(fraction);
        }
    }
    Ok(plan)
}
