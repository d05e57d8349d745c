//! Assigns cohort logs to synthesised modes by weighted token overlap.

use std::collections::{HashMap, HashSet};

use crate::corpus::MaintenanceLog;
use crate::text::{fold, tokens};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "in", "is", "it", "of", "on", "or", "that",
    "the", "this", "to", "was", "were", "with", "without", "after", "before", "de", "da", "do", "das", "dos", "e",
    "em", "na", "no", "nas", "nos", "o", "os", "as", "um", "uma", "com", "sem", "por", "para", "ao", "se", "foi",
    "not", "nao", "during", "durante", "under", "up", "out", "apos",
];

/// Lowercased, accent-folded content tokens (stopwords, 1-char and all-digit tokens dropped).
pub fn content_tokens(text: &str) -> HashSet<String> {
    tokens(&fold(text))
        .into_iter()
        .filter(|t| t.chars().count() > 1 && !t.chars().all(|c| c.is_ascii_digit()) && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Text a mode is matched on: name, description and quotes.
pub struct ModeEvidence<'a> {
    pub name: &'a str,
    pub description: &'a str,
    pub quotes: Vec<&'a str>,
}

/// Assignment of each log to a mode index (`None` = unassigned).
///
/// A log scores `sum(1 / df(t))` against a mode over shared tokens `t`, where
/// `df(t)` is the number of modes whose evidence contains `t`; this keeps
/// boilerplate shared by every mode from outvoting distinctive vocabulary.
/// Modes are given in rank order; ties go to the lower index.
pub fn assign(modes: &[ModeEvidence<'_>], logs: &[&MaintenanceLog]) -> Vec<Option<usize>> {
    let mode_tokens: Vec<HashSet<String>> = modes
        .iter()
        .map(|m| {
            let mut t = content_tokens(m.name);
            t.extend(content_tokens(m.description));
            for q in &m.quotes {
                t.extend(content_tokens(q));
            }
            t
        })
        .collect();
    let mut postings: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, toks) in mode_tokens.iter().enumerate() {
        for t in toks {
            postings.entry(t.as_str()).or_default().push(i);
        }
    }
    logs.iter()
        .map(|log| {
            let mut score = vec![0.0f64; modes.len()];
            for t in content_tokens(&log.full_text()) {
                if let Some(ms) = postings.get(t.as_str()) {
                    let w = 1.0 / ms.len() as f64;
                    for &m in ms {
                        score[m] += w;
                    }
                }
            }
            let mut best: Option<usize> = None;
            for (i, s) in score.iter().enumerate() {
                if *s > 0.0 && best.is_none_or(|b| *s > score[b]) {
                    best = Some(i);
                }
            }
            best
        })
        .collect()
}

/// Per-mode counts and the unassigned remainder.
pub fn reconcile_counts(modes: &[ModeEvidence<'_>], logs: &[&MaintenanceLog]) -> (Vec<usize>, usize) {
    let mut counts = vec![0usize; modes.len()];
    let mut unassigned = 0;
    for a in assign(modes, logs) {
        match a {
            Some(i) => counts[i] += 1,
            None => unassigned += 1,
        }
    }
    (counts, unassigned)
}
