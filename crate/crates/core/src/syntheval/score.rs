use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{SynthError, SynthTruth};
use crate::prep::Glossary;
use crate::workflows::{CausalChainReport, ComparativeReport, FailureModeReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeScore {
    /// Planted tokens recovered by at least one mode.
    pub mode_recall: f64,
    /// Reported modes that recover at least one planted token.
    pub mode_precision: f64,
    /// Recovered tokens whose first matching mode has the exact planted count.
    pub count_exactness: f64,
    /// Planted token to the name of the first (highest-ranked) matching mode.
    pub matched: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainScore {
    /// Planted chains whose best Jaccard overlap reaches [`CHAIN_MATCH_JACCARD`].
    pub chain_recall: f64,
    /// Mean over planted chains of the best Jaccard overlap with any reported chain.
    pub membership_jaccard_mean: f64,
    pub best_jaccard: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonScore {
    /// Skewed farms whose top reported pattern names the planted token.
    pub top_pattern_recall: f64,
    pub hits: BTreeMap<String, bool>,
}

pub const CHAIN_MATCH_JACCARD: f64 = 0.8;

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Scores a failure-mode report. A mode recovers a token when its name contains
/// the token or one of its quotes carries the `[FM:TOKEN]` marker.
///
/// An empty report scores zero recall and zero precision.
pub fn score_modes(report: &FailureModeReport, truth: &SynthTruth) -> Result<ModeScore, SynthError> {
    for m in &report.modes {
        for q in &m.supporting_quotes {
            if !truth.mode_assignments.contains_key(&q.log_id) {
                return Err(SynthError::Mismatch(format!(
                    "quoted log '{}' is not part of this corpus",
                    q.log_id
                )));
            }
        }
    }
    let planted: Vec<&String> = truth
        .mode_counts
        .iter()
        .filter(|(_, c)| **c > 0)
        .map(|(t, _)| t)
        .collect();
    let mut matched = BTreeMap::new();
    let mut useful_modes = 0;
    let mut exact = 0;
    for m in &report.modes {
        let mut any = false;
        for token in &planted {
            let marker = format!("[FM:{token}]");
            let hit = m.name.contains(token.as_str()) || m.supporting_quotes.iter().any(|q| q.quote.contains(&marker));
            if !hit {
                continue;
            }
            any = true;
            if !matched.contains_key(*token) {
                matched.insert((*token).clone(), m.name.clone());
                if m.reconciled_count == truth.mode_counts[*token] {
                    exact += 1;
                }
            }
        }
        if any {
            useful_modes += 1;
        }
    }
    Ok(ModeScore {
        mode_recall: ratio(matched.len(), planted.len(), 1.0),
        mode_precision: ratio(useful_modes, report.modes.len(), 0.0),
        count_exactness: ratio(exact, matched.len(), 0.0),
        matched,
    })
}

fn jaccard(a: &HashSet<&str>, b: &HashSet<&str>) -> f64 {
    let union = a.union(b).count();
    ratio(a.intersection(b).count(), union, 0.0)
}

pub fn score_chains(report: &CausalChainReport, truth: &SynthTruth) -> Result<ChainScore, SynthError> {
    match &truth.chain_turbine {
        Some(t) if *t == report.turbine_id => {}
        Some(t) => {
            return Err(SynthError::Mismatch(format!(
                "report covers turbine '{}' but chains were planted on '{t}'",
                report.turbine_id
            )))
        }
        None => return Err(SynthError::Mismatch("no chains were planted in this corpus".into())),
    }
    let predicted: Vec<HashSet<&str>> = report
        .chains
        .iter()
        .map(|c| c.member_log_ids.iter().map(String::as_str).collect())
        .collect();
    let mut best_jaccard = BTreeMap::new();
    for t in &truth.chains {
        let set: HashSet<&str> = t.log_ids.iter().map(String::as_str).collect();
        let best = predicted.iter().map(|p| jaccard(&set, p)).fold(0.0, f64::max);
        best_jaccard.insert(t.chain_id.clone(), best);
    }
    let recovered = best_jaccard.values().filter(|j| **j >= CHAIN_MATCH_JACCARD).count();
    let n = truth.chains.len();
    Ok(ChainScore {
        chain_recall: ratio(recovered, n, 1.0),
        membership_jaccard_mean: if n == 0 {
            1.0
        } else {
            best_jaccard.values().sum::<f64>() / n as f64
        },
        best_jaccard,
    })
}

/// Scores a comparison over the skewed farms present in the report. Farm ids in
/// the report may be raw or glossary codes.
pub fn score_comparison(
    report: &ComparativeReport,
    truth: &SynthTruth,
    glossary: Option<&Glossary>,
) -> Result<ComparisonScore, SynthError> {
    let mut hits = BTreeMap::new();
    let reported: BTreeSet<&str> = report.farms.iter().map(|f| f.farm_id.as_str()).collect();
    for (farm, token) in &truth.farm_skews {
        let id = glossary.and_then(|g| g.code(farm)).unwrap_or(farm);
        if !reported.contains(id) {
            continue;
        }
        let entry = report.farms.iter().find(|f| f.farm_id == id).expect("present");
        let marker = format!("[SK:{token}]");
        let hit = entry
            .patterns
            .first()
            .is_some_and(|p| p.pattern.contains(&marker) || p.pattern.contains(token.as_str()));
        hits.insert(farm.clone(), hit);
    }
    if hits.is_empty() {
        return Err(SynthError::Mismatch(
            "the report covers none of the skewed farms".into(),
        ));
    }
    let n = hits.values().filter(|h| **h).count();
    Ok(ComparisonScore {
        top_pattern_recall: ratio(n, hits.len(), 0.0),
        hits,
    })
}
