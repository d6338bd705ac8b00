//! Subset construction: diversity-based prioritization (DBP), seeded random
//! selection (RDM) and packaging of the manually executed suite.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{DiversitySource, VersionSnapshot};
use crate::rng::SeededRng;
use crate::similarity::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrioritizeError {
    #[error("subset size {size} outside 1..={available}")]
    SizeOutOfRange { size: usize, available: usize },
    #[error("manual suite is empty")]
    EmptyManualSuite,
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("duplicate test id `{0}` in pool")]
    DuplicateId(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionTechnique {
    Manual,
    Dbp,
    Rdm,
}

impl SelectionTechnique {
    pub const ALL: [SelectionTechnique; 3] = [
        SelectionTechnique::Manual,
        SelectionTechnique::Dbp,
        SelectionTechnique::Rdm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionTechnique::Manual => "manual",
            SelectionTechnique::Dbp => "dbp",
            SelectionTechnique::Rdm => "rdm",
        }
    }
}

impl fmt::Display for SelectionTechnique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionTechnique {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "manual" => Ok(SelectionTechnique::Manual),
            "dbp" => Ok(SelectionTechnique::Dbp),
            "rdm" | "random" => Ok(SelectionTechnique::Rdm),
            other => Err(format!("unknown technique `{other}` (expected manual|dbp|rdm)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrioritizedSubset {
    pub technique: SelectionTechnique,
    /// Only DBP subsets depend on a diversity source.
    pub source: Option<DiversitySource>,
    pub order: Vec<String>,
    /// Only RDM subsets carry a seed.
    pub seed: Option<u64>,
    pub snapshot_date: Option<NaiveDate>,
}

impl PrioritizedSubset {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

fn check_size(size: usize, available: usize) -> Result<(), PrioritizeError> {
    if size == 0 || size > available {
        return Err(PrioritizeError::SizeOutOfRange { size, available });
    }
    Ok(())
}

/// Greedy max-min ordering of the matrix indices, truncated to `size`.
///
/// The order starts with the most distant pair, the member with the larger
/// mean distance to all other tests first. Each following test is the one
/// whose nearest already-selected test is farthest away. Every tie goes to
/// the lexicographically smaller test id (for pairs: the smaller
/// `(lower id, higher id)` tuple).
pub fn dbp_order(m: &DistanceMatrix, size: usize) -> Result<Vec<usize>, PrioritizeError> {
    let n = m.len();
    check_size(size, n)?;
    let ids = m.ids();

    let pair_key = |i: usize, j: usize| {
        if ids[i] <= ids[j] {
            (&ids[i], &ids[j])
        } else {
            (&ids[j], &ids[i])
        }
    };
    let mut best = (0, 1);
    for i in 0..n {
        for j in (i + 1)..n {
            let ord = m
                .get(i, j)
                .total_cmp(&m.get(best.0, best.1))
                .then_with(|| pair_key(best.0, best.1).cmp(&pair_key(i, j)));
            if ord == Ordering::Greater {
                best = (i, j);
            }
        }
    }

    // same denominator for every row, so comparing sums compares means
    let row_sum = |i: usize| m.row(i).iter().sum::<f64>();
    let (a, b) = best;
    let a_first = row_sum(a)
        .total_cmp(&row_sum(b))
        .then_with(|| ids[b].cmp(&ids[a]))
        == Ordering::Greater;
    let mut order = if a_first { vec![a, b] } else { vec![b, a] };
    order.truncate(size);
    if order.len() == size {
        return Ok(order);
    }

    let mut selected = vec![false; n];
    selected[a] = true;
    selected[b] = true;
    let mut nearest: Vec<f64> = (0..n).map(|v| m.get(v, a).min(m.get(v, b))).collect();
    while order.len() < size {
        let mut pick: Option<usize> = None;
        for v in (0..n).filter(|&v| !selected[v]) {
            pick = match pick {
                None => Some(v),
                Some(p) => {
                    let ord = nearest[v]
                        .total_cmp(&nearest[p])
                        .then_with(|| ids[p].cmp(&ids[v]));
                    Some(if ord == Ordering::Greater { v } else { p })
                }
            };
        }
        let pick = pick.expect("size <= n leaves a candidate");
        selected[pick] = true;
        order.push(pick);
        for v in 0..n {
            nearest[v] = nearest[v].min(m.get(v, pick));
        }
    }
    Ok(order)
}

pub fn dbp_prioritize(m: &DistanceMatrix, size: usize) -> Result<PrioritizedSubset, PrioritizeError> {
    let order = dbp_order(m, size)?;
    Ok(PrioritizedSubset {
        technique: SelectionTechnique::Dbp,
        source: Some(m.source()),
        order: order.into_iter().map(|i| m.ids()[i].clone()).collect(),
        seed: None,
        snapshot_date: None,
    })
}

/// Uniform sample of `size` ids without replacement, in random order.
///
/// A partial Fisher-Yates shuffle over a copy of `pool`: for each position
/// `i` in `0..size`, swap it with position `i + below(len - i)` drawn from
/// [`SeededRng`].
pub fn random_select(
    pool: &[String],
    size: usize,
    seed: u64,
) -> Result<PrioritizedSubset, PrioritizeError> {
    check_size(size, pool.len())?;
    if let Some(dup) = crate::corpus::duplicates(pool).first() {
        return Err(PrioritizeError::DuplicateId(dup.to_string()));
    }
    let mut rng = SeededRng::new(seed);
    let mut items = pool.to_vec();
    for i in 0..size {
        let j = i + rng.below((items.len() - i) as u32) as usize;
        items.swap(i, j);
    }
    items.truncate(size);
    Ok(PrioritizedSubset {
        technique: SelectionTechnique::Rdm,
        source: None,
        order: items,
        seed: Some(seed),
        snapshot_date: None,
    })
}

pub fn manual_subset(snapshot: &VersionSnapshot) -> Result<PrioritizedSubset, PrioritizeError> {
    if snapshot.manual_suite.is_empty() {
        return Err(PrioritizeError::EmptyManualSuite);
    }
    let mut seen = HashSet::new();
    for id in &snapshot.manual_suite {
        if !snapshot.pool.contains(id) {
            return Err(PrioritizeError::CorruptSnapshot(format!(
                "manual test `{id}` is not in the pool of {}",
                snapshot.date
            )));
        }
        if !seen.insert(id) {
            return Err(PrioritizeError::CorruptSnapshot(format!(
                "manual test `{id}` listed twice on {}",
                snapshot.date
            )));
        }
    }
    Ok(PrioritizedSubset {
        technique: SelectionTechnique::Manual,
        source: None,
        order: snapshot.manual_suite.clone(),
        seed: None,
        snapshot_date: Some(snapshot.date),
    })
}
