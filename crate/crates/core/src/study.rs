//! End-to-end comparison of manual, diversity-based and random selection
//! over every version snapshot of a repository.
//!
//! For each snapshot whose manual suite is larger than
//! `min_suite_size`, the three techniques select subsets of the manual
//! suite's size from the snapshot pool. Each subset is scored per diversity
//! source (word redundancy of the source documents, APFD from the failure
//! flags of that date). Random selection runs `rdm_repetitions` times and
//! reports means; its last repetition feeds the maps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_version_snapshots_with, extract_document, CorpusError, DiversitySource, Outcome,
    OutcomeHistory, PoolMode, TestRepository, VersionSnapshot,
};
use crate::mds::{classical_mds, Embedding, MdsError};
use crate::metrics::{apfd, redundancy, FailureProfile, MetricsError};
use crate::prioritize::{
    dbp_prioritize, manual_subset, random_select, PrioritizeError, PrioritizedSubset,
    SelectionTechnique,
};
use crate::rng::derive_seed;
use crate::similarity::{build_distance_matrix_with, DistanceMatrix, ShingleConfig, SimilarityError};

pub const REPORT_SCHEMA: u32 = 1;

/// Rule used to flag failures of tests that were not run on a snapshot date.
pub const FAILURE_ATTRIBUTION_NOTE: &str = "failure flags: a test fails in a snapshot if its most recent recorded outcome on or before the snapshot date is fail; tests without history count as passing";

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Prioritize(#[from] PrioritizeError),
    #[error(transparent)]
    Mds(#[from] MdsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode output: {0}")]
    Encode(String),
}

/// How per-subset maps are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMaps {
    /// Embed each subset's own distance matrix.
    #[default]
    Fresh,
    /// Reuse the subset's points from the full-repository map.
    Overlay,
    /// No subset maps.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub k: usize,
    /// Snapshots need strictly more manual tests than this.
    pub min_suite_size: usize,
    pub rdm_repetitions: u32,
    pub seed: u64,
    pub sources: Vec<DiversitySource>,
    pub pool: PoolMode,
    pub subset_maps: SubsetMaps,
    pub full_maps: bool,
    /// Matrix-construction threads; `None` uses the global pool.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            k: 5,
            min_suite_size: 10,
            rdm_repetitions: 10,
            seed: 42,
            sources: DiversitySource::ALL.to_vec(),
            pool: PoolMode::Dated,
            subset_maps: SubsetMaps::Fresh,
            full_maps: true,
            workers: None,
        }
    }
}

impl StudyConfig {
    fn validate(&self) -> Result<(), StudyError> {
        if self.k == 0 {
            return Err(StudyError::Config("k must be at least 1".into()));
        }
        if self.rdm_repetitions == 0 {
            return Err(StudyError::Config("rdm_repetitions must be at least 1".into()));
        }
        if self.sources.is_empty() {
            return Err(StudyError::Config("no diversity source selected".into()));
        }
        let unique: BTreeSet<_> = self.sources.iter().collect();
        if unique.len() != self.sources.len() {
            return Err(StudyError::Config("diversity source listed twice".into()));
        }
        Ok(())
    }

    fn sorted_sources(&self) -> Vec<DiversitySource> {
        let mut s = self.sources.clone();
        s.sort();
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub seed: u64,
    pub redundancy: Option<f64>,
    pub apfd: Option<f64>,
}

/// Scores of one technique on one snapshot and diversity source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub date: NaiveDate,
    pub source: DiversitySource,
    pub technique: SelectionTechnique,
    pub subset_size: usize,
    /// Mean over repetitions for RDM.
    pub redundancy: Option<f64>,
    /// Mean over repetitions with a defined value for RDM; `None` when no
    /// selected test fails.
    pub apfd: Option<f64>,
    /// The selected tests; for RDM the final repetition.
    pub order: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repetitions: Vec<Repetition>,
    pub map: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Skip {
    pub date: Option<NaiveDate>,
    pub source: Option<DiversitySource>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MapScope {
    Full,
    Subset {
        date: NaiveDate,
        technique: SelectionTechnique,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRef {
    pub id: String,
    pub source: DiversitySource,
    pub scope: MapScope,
    pub points: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub source: DiversitySource,
    pub tests: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema: u32,
    pub repo_digest: String,
    pub config: StudyConfig,
    pub notes: Vec<String>,
    pub cells: Vec<Cell>,
    pub skipped: Vec<Skip>,
    /// Cells whose APFD is undefined because no selected test fails.
    pub apfd_undefined: usize,
    pub maps: Vec<MapRef>,
    /// Wall-clock matrix construction; kept out of `report.json`.
    #[serde(skip)]
    pub timings: Vec<Timing>,
    #[serde(skip)]
    pub embeddings: BTreeMap<String, Embedding>,
}

impl StudyReport {
    pub fn cell(
        &self,
        date: NaiveDate,
        source: DiversitySource,
        technique: SelectionTechnique,
    ) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.date == date && c.source == source && c.technique == technique)
    }
}

pub fn map_id_full(source: DiversitySource) -> String {
    format!("full-{source}")
}

pub fn map_id_subset(date: NaiveDate, source: DiversitySource, technique: SelectionTechnique) -> String {
    format!("{date}-{source}-{technique}")
}

struct SourceData {
    source: DiversitySource,
    docs: BTreeMap<String, String>,
    missing: Vec<String>,
    matrix: Option<DistanceMatrix>,
    full_map: Option<Embedding>,
}

fn describe_missing(missing: &[String]) -> String {
    let shown: Vec<&str> = missing.iter().take(5).map(String::as_str).collect();
    let more = missing.len().saturating_sub(shown.len());
    let mut s = format!("{} test(s) without a document: {}", missing.len(), shown.join(", "));
    if more > 0 {
        let _ = write!(s, " and {more} more");
    }
    s
}

fn prepare_source(
    repo: &TestRepository,
    source: DiversitySource,
    cfg: &StudyConfig,
    skipped: &mut Vec<Skip>,
    timings: &mut Vec<Timing>,
) -> Result<SourceData, StudyError> {
    let mut docs = BTreeMap::new();
    let mut missing = Vec::new();
    for test in repo.tests() {
        match extract_document(test, source, repo) {
            Ok(doc) => {
                docs.insert(test.id.clone(), doc);
            }
            Err(CorpusError::EmptyDocument { id, .. }) => missing.push(id),
            Err(e) => return Err(e.into()),
        }
    }

    let matrix = if docs.len() >= 2 {
        let pairs: Vec<(String, String)> =
            docs.iter().map(|(id, d)| (id.clone(), d.clone())).collect();
        let start = Instant::now();
        let m = build_distance_matrix_with(&pairs, ShingleConfig::new(cfg.k)?, source, cfg.workers)?;
        timings.push(Timing {
            source,
            tests: pairs.len(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Some(m)
    } else {
        None
    };

    let full_map = match (&matrix, cfg.full_maps) {
        (Some(m), true) if missing.is_empty() => Some(classical_mds(m)?),
        (_, true) => {
            let reason = if missing.is_empty() {
                "fewer than 2 tests".to_string()
            } else {
                describe_missing(&missing)
            };
            skipped.push(Skip {
                date: None,
                source: Some(source),
                reason: format!("no full map: {reason}"),
            });
            None
        }
        _ => None,
    };

    Ok(SourceData {
        source,
        docs,
        missing,
        matrix,
        full_map,
    })
}

#[derive(Default)]
struct SnapshotResult {
    cells: Vec<Cell>,
    skipped: Vec<Skip>,
    maps: Vec<(MapRef, Embedding)>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

fn score(
    order: &[String],
    docs: &BTreeMap<String, String>,
    failures: &FailureProfile,
) -> (Option<f64>, Option<f64>) {
    let texts: Vec<&str> = order.iter().map(|id| docs[id].as_str()).collect();
    let red = match redundancy(&texts) {
        Ok(v) => Some(v),
        Err(MetricsError::NoWords) => None,
        Err(e) => unreachable!("redundancy only fails on missing words: {e}"),
    };
    (red, apfd(order, failures).ok())
}

fn subset_map(
    data: &SourceData,
    matrix: &DistanceMatrix,
    subset: &PrioritizedSubset,
    mode: SubsetMaps,
) -> Result<Option<Embedding>, StudyError> {
    Ok(match mode {
        SubsetMaps::None => None,
        SubsetMaps::Fresh if subset.len() >= 2 => {
            Some(classical_mds(&matrix.submatrix(&subset.order)?)?)
        }
        SubsetMaps::Fresh => None,
        SubsetMaps::Overlay => data.full_map.as_ref().and_then(|e| e.restrict(&subset.order)),
    })
}

fn run_snapshot(
    snapshot: &VersionSnapshot,
    sources: &[SourceData],
    history: &OutcomeHistory,
    cfg: &StudyConfig,
) -> Result<SnapshotResult, StudyError> {
    let mut out = SnapshotResult::default();
    let date = snapshot.date;
    let size = snapshot.manual_suite.len();
    if size <= cfg.min_suite_size {
        out.skipped.push(Skip {
            date: Some(date),
            source: None,
            reason: format!(
                "manual suite has {size} test(s); need more than {}",
                cfg.min_suite_size
            ),
        });
        return Ok(out);
    }
    let manual = match manual_subset(snapshot) {
        Ok(m) => m,
        Err(e) => {
            out.skipped.push(Skip {
                date: Some(date),
                source: None,
                reason: e.to_string(),
            });
            return Ok(out);
        }
    };

    let pool: Vec<String> = snapshot.pool.iter().cloned().collect();
    let randoms = (0..cfg.rdm_repetitions)
        .map(|rep| {
            let mut s = random_select(&pool, size, derive_seed(cfg.seed, date, rep))?;
            s.snapshot_date = Some(date);
            Ok(s)
        })
        .collect::<Result<Vec<_>, PrioritizeError>>()?;
    let last_random = randoms.last().expect("at least one repetition");

    let failures = FailureProfile {
        flags: pool
            .iter()
            .map(|id| (id.clone(), history.as_of(id, date) == Some(Outcome::Fail)))
            .collect(),
    };

    for data in sources {
        let source = data.source;
        let absent: Vec<String> = data
            .missing
            .iter()
            .filter(|id| snapshot.pool.contains(*id))
            .cloned()
            .collect();
        let matrix = match &data.matrix {
            Some(m) if absent.is_empty() => m.submatrix(&pool)?,
            _ => {
                let reason = if absent.is_empty() {
                    "fewer than 2 tests with a document".to_string()
                } else {
                    describe_missing(&absent)
                };
                out.skipped.push(Skip {
                    date: Some(date),
                    source: Some(source),
                    reason,
                });
                continue;
            }
        };
        let mut dbp = dbp_prioritize(&matrix, size)?;
        dbp.snapshot_date = Some(date);

        for (technique, subset) in [
            (SelectionTechnique::Manual, &manual),
            (SelectionTechnique::Dbp, &dbp),
            (SelectionTechnique::Rdm, last_random),
        ] {
            let (red, fault_rate, repetitions) = if technique == SelectionTechnique::Rdm {
                let reps: Vec<Repetition> = randoms
                    .iter()
                    .map(|r| {
                        let (redundancy, apfd) = score(&r.order, &data.docs, &failures);
                        Repetition {
                            seed: r.seed.expect("random subsets carry their seed"),
                            redundancy,
                            apfd,
                        }
                    })
                    .collect();
                let reds: Vec<f64> = reps.iter().filter_map(|r| r.redundancy).collect();
                let apfds: Vec<f64> = reps.iter().filter_map(|r| r.apfd).collect();
                (mean(&reds), mean(&apfds), reps)
            } else {
                let (r, a) = score(&subset.order, &data.docs, &failures);
                (r, a, Vec::new())
            };

            let map = match subset_map(data, &matrix, subset, cfg.subset_maps)? {
                Some(embedding) => {
                    let id = map_id_subset(date, source, technique);
                    out.maps.push((
                        MapRef {
                            id: id.clone(),
                            source,
                            scope: MapScope::Subset { date, technique },
                            points: embedding.len(),
                            file: format!("maps/{id}.json"),
                        },
                        embedding,
                    ));
                    Some(id)
                }
                None => None,
            };

            out.cells.push(Cell {
                date,
                source,
                technique,
                subset_size: subset.len(),
                redundancy: red,
                apfd: fault_rate,
                order: subset.order.clone(),
                repetitions,
                map,
            });
        }
    }
    Ok(out)
}

pub fn run_study(repo: &TestRepository, cfg: &StudyConfig) -> Result<StudyReport, StudyError> {
    cfg.validate()?;
    let mut skipped = Vec::new();
    let mut timings = Vec::new();
    let mut maps = Vec::new();
    let mut embeddings = BTreeMap::new();

    let mut sources = Vec::new();
    for source in cfg.sorted_sources() {
        let data = prepare_source(repo, source, cfg, &mut skipped, &mut timings)?;
        if let Some(e) = &data.full_map {
            let id = map_id_full(source);
            maps.push(MapRef {
                id: id.clone(),
                source,
                scope: MapScope::Full,
                points: e.len(),
                file: format!("maps/{id}.json"),
            });
            embeddings.insert(id, e.clone());
        }
        sources.push(data);
    }

    let snapshots = build_version_snapshots_with(repo, cfg.pool);
    let history = repo.outcome_history();
    let results = snapshots
        .par_iter()
        .map(|s| run_snapshot(s, &sources, &history, cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cells = Vec::new();
    for r in results {
        cells.extend(r.cells);
        skipped.extend(r.skipped);
        for (map_ref, embedding) in r.maps {
            embeddings.insert(map_ref.id.clone(), embedding);
            maps.push(map_ref);
        }
    }
    cells.sort_by(|a, b| (a.date, a.source, a.technique).cmp(&(b.date, b.source, b.technique)));
    skipped.sort();
    maps.sort_by(|a, b| (&a.scope, a.source).cmp(&(&b.scope, b.source)));
    let apfd_undefined = cells.iter().filter(|c| c.apfd.is_none()).count();

    Ok(StudyReport {
        schema: REPORT_SCHEMA,
        repo_digest: repo.digest(),
        config: cfg.clone(),
        notes: vec![FAILURE_ATTRIBUTION_NOTE.to_string()],
        cells,
        skipped,
        apfd_undefined,
        maps,
        timings,
        embeddings,
    })
}

fn format_duration(seconds: f64) -> String {
    if seconds < 60.0 {
        format!("{seconds:.2}s")
    } else {
        format!("{:.2} minutes", seconds / 60.0)
    }
}

/// Matrix-construction wall time per source plus a total row.
pub fn emit_timings(report: &StudyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>8} {:>14}", "Source", "Tests", "Time");
    for t in &report.timings {
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>14}",
            t.source.as_str(),
            t.tests,
            format_duration(t.seconds)
        );
    }
    let total: f64 = report.timings.iter().map(|t| t.seconds).sum();
    let _ = writeln!(out, "{:<14} {:>8} {:>14}", "Total time:", "", format_duration(total));
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StudyError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, StudyError> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| StudyError::Encode(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// The per-cell table: one row per (date, source, technique).
pub fn cells_csv(report: &StudyReport) -> Result<Vec<u8>, StudyError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| StudyError::Encode(e.to_string());
    w.write_record([
        "date",
        "source",
        "technique",
        "subset_size",
        "redundancy",
        "apfd",
        "repetitions",
    ])
    .map_err(encode)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &report.cells {
        w.write_record([
            c.date.to_string(),
            c.source.to_string(),
            c.technique.to_string(),
            c.subset_size.to_string(),
            opt(c.redundancy),
            opt(c.apfd),
            c.repetitions.len().max(1).to_string(),
        ])
        .map_err(encode)?;
    }
    w.into_inner().map_err(|e| StudyError::Encode(e.to_string()))
}

/// Writes `report.json`, `cells.csv`, `maps/<id>.json` and (separately,
/// since it is not reproducible) `timings.txt` into `dir`.
pub fn write_outputs(report: &StudyReport, dir: &Path) -> Result<(), StudyError> {
    let maps_dir = dir.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(io_err(&maps_dir))?;
    write_file(&dir.join("report.json"), &to_json(report)?)?;
    write_file(&dir.join("cells.csv"), &cells_csv(report)?)?;
    for map in &report.maps {
        let embedding = &report.embeddings[&map.id];
        write_file(&dir.join(&map.file), &to_json(embedding)?)?;
    }
    write_file(&dir.join("timings.txt"), emit_timings(report).as_bytes())?;
    Ok(())
}
