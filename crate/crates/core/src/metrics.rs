//! Subset scoring: failure-based APFD and word-level redundancy.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty ordering")]
    EmptyOrder,
    #[error("no failing test in the ordering; APFD is undefined")]
    NoFailures,
    #[error("documents contain no words")]
    NoWords,
    #[error("test `{0}` appears twice in the ordering")]
    DuplicateTest(String),
}

/// Which tests reveal a failure. Tests without a flag count as passing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureProfile {
    pub flags: BTreeMap<String, bool>,
}

impl FailureProfile {
    pub fn from_failing<I, S>(failing: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FailureProfile {
            flags: failing.into_iter().map(|id| (id.into(), true)).collect(),
        }
    }

    pub fn fails(&self, id: &str) -> bool {
        self.flags.get(id).copied().unwrap_or(false)
    }

    pub fn failure_count<S: AsRef<str>>(&self, order: &[S]) -> usize {
        order.iter().filter(|id| self.fails(id.as_ref())).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    /// `None` when no test of the subset fails.
    pub apfd: Option<f64>,
    pub redundancy: f64,
    pub subset_size: usize,
}

/// `1 - Σ tf_i / (|T|·|F|) + 1 / (2|T|)`, where each failing test reveals
/// one failure and `tf_i` is its 1-based position in `order`.
pub fn apfd<S: AsRef<str>>(order: &[S], failures: &FailureProfile) -> Result<f64, MetricsError> {
    if order.is_empty() {
        return Err(MetricsError::EmptyOrder);
    }
    let mut seen = HashSet::new();
    let mut position_sum = 0u64;
    let mut failing = 0u64;
    for (pos, id) in order.iter().enumerate() {
        let id = id.as_ref();
        if !seen.insert(id) {
            return Err(MetricsError::DuplicateTest(id.to_string()));
        }
        if failures.fails(id) {
            position_sum += pos as u64 + 1;
            failing += 1;
        }
    }
    if failing == 0 {
        return Err(MetricsError::NoFailures);
    }
    let n = order.len() as f64;
    Ok(1.0 - position_sum as f64 / (n * failing as f64) + 1.0 / (2.0 * n))
}

fn is_edge_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201f}' | '\u{2010}'..='\u{2015}' | '\u{2026}' | '\u{00ab}' | '\u{00bb}' | '\u{00bf}' | '\u{00a1}'
        )
}

/// Whitespace-separated words with punctuation stripped from both ends.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(is_edge_punctuation))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// `1 - unique words / total words` over all documents together.
pub fn redundancy<S: AsRef<str>>(texts: &[S]) -> Result<f64, MetricsError> {
    let mut unique = HashSet::new();
    let mut total = 0usize;
    for text in texts {
        for word in tokenize(text.as_ref()) {
            total += 1;
            unique.insert(word);
        }
    }
    if total == 0 {
        return Err(MetricsError::NoWords);
    }
    Ok(1.0 - unique.len() as f64 / total as f64)
}
