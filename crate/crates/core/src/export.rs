//! Map bundles: the on-disk contract between a study run and the map
//! explorer service.
//!
//! A bundle directory holds
//!
//! * `bundle.json`: schema version, repository digest, one descriptor per
//!   map and an index of every test (name, 200-character excerpt per
//!   source, requirement links, last outcome);
//! * `maps/<id>.json`: one [`Embedding`] per descriptor;
//! * `cells.json`: the study cells.
//!
//! Action lists recorded by the explorer are separate files following
//! [`ActionList`]; they are never applied to the repository.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_document, DiversitySource, Outcome, TestRepository};
use crate::mds::Embedding;
use crate::study::{Cell, MapRef, StudyReport};

pub const BUNDLE_SCHEMA: u32 = 1;
pub const EXCERPT_CHARS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report was built from repository {report}, not {repo}")]
    DigestMismatch { report: String, repo: String },
    #[error("inconsistent bundle: {0}")]
    Inconsistent(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LastOutcome {
    pub date: NaiveDate,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub name: String,
    /// First characters of each non-empty source document.
    pub excerpts: BTreeMap<DiversitySource, String>,
    pub requirement_ids: Vec<String>,
    pub last_outcome: Option<LastOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapBundle {
    pub schema: u32,
    pub repo_digest: String,
    pub maps: Vec<MapRef>,
    pub test_index: BTreeMap<String, TestEntry>,
}

/// Explorer-side record of suggested maintenance actions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionList {
    pub schema: u32,
    pub map_id: String,
    pub test_ids: Vec<String>,
    pub annotation: String,
    /// RFC 3339 timestamp of the export.
    pub timestamp: String,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExportError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| ExportError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, Vec<u8>), ExportError> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| ExportError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((value, bytes))
}

pub fn test_index(repo: &TestRepository) -> BTreeMap<String, TestEntry> {
    let history = repo.outcome_history();
    repo.tests()
        .map(|t| {
            let excerpts = DiversitySource::ALL
                .iter()
                .filter_map(|&s| {
                    extract_document(t, s, repo)
                        .ok()
                        .map(|d| (s, d.chars().take(EXCERPT_CHARS).collect()))
                })
                .collect();
            let entry = TestEntry {
                name: t.name.clone(),
                excerpts,
                requirement_ids: t.requirement_ids.iter().cloned().collect(),
                last_outcome: history
                    .last(&t.id)
                    .map(|(date, outcome)| LastOutcome { date, outcome }),
            };
            (t.id.clone(), entry)
        })
        .collect()
}

/// Writes `bundle.json`, `cells.json` and every map of `report` into `out`.
pub fn export_bundle(
    report: &StudyReport,
    repo: &TestRepository,
    out: &Path,
) -> Result<MapBundle, ExportError> {
    let digest = repo.digest();
    if report.repo_digest != digest {
        return Err(ExportError::DigestMismatch {
            report: report.repo_digest.clone(),
            repo: digest,
        });
    }
    let index = test_index(repo);
    for map in &report.maps {
        let embedding = report.embeddings.get(&map.id).ok_or_else(|| {
            ExportError::Inconsistent(format!("map `{}` has no embedding", map.id))
        })?;
        if embedding.len() != map.points {
            return Err(ExportError::Inconsistent(format!(
                "map `{}` lists {} points but embeds {}",
                map.id,
                map.points,
                embedding.len()
            )));
        }
        if let Some(id) = embedding.ids.iter().find(|id| !index.contains_key(*id)) {
            return Err(ExportError::Inconsistent(format!(
                "map `{}` contains unknown test `{id}`",
                map.id
            )));
        }
    }

    let maps_dir = out.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(io(&maps_dir))?;
    for map in &report.maps {
        write_json(&out.join(&map.file), &report.embeddings[&map.id])?;
    }
    write_json(&out.join("cells.json"), &report.cells)?;
    let bundle = MapBundle {
        schema: BUNDLE_SCHEMA,
        repo_digest: digest,
        maps: report.maps.clone(),
        test_index: index,
    };
    write_json(&out.join("bundle.json"), &bundle)?;
    Ok(bundle)
}

/// A bundle read back from disk, with the raw bytes of each file so that
/// they can be served unchanged.
#[derive(Clone, Debug)]
pub struct LoadedBundle {
    pub bundle: MapBundle,
    pub maps: BTreeMap<String, Vec<u8>>,
    pub cells: Vec<Cell>,
    pub cells_json: Vec<u8>,
}

pub fn load_bundle(dir: &Path) -> Result<LoadedBundle, ExportError> {
    let (bundle, _): (MapBundle, _) = read_json(&dir.join("bundle.json"))?;
    if bundle.schema != BUNDLE_SCHEMA {
        return Err(ExportError::Inconsistent(format!(
            "unsupported bundle schema {}",
            bundle.schema
        )));
    }
    let mut maps = BTreeMap::new();
    for map in &bundle.maps {
        let path = dir.join(&map.file);
        let (embedding, bytes): (Embedding, _) = read_json(&path)?;
        if embedding.len() != map.points || embedding.coords.len() != map.points {
            return Err(ExportError::Inconsistent(format!(
                "map `{}` lists {} points but the file has {}",
                map.id,
                map.points,
                embedding.len()
            )));
        }
        if let Some(id) = embedding.ids.iter().find(|id| !bundle.test_index.contains_key(*id)) {
            return Err(ExportError::Inconsistent(format!(
                "map `{}` contains unindexed test `{id}`",
                map.id
            )));
        }
        if maps.insert(map.id.clone(), bytes).is_some() {
            return Err(ExportError::Inconsistent(format!("map id `{}` repeated", map.id)));
        }
    }
    let (cells, cells_json) = read_json(&dir.join("cells.json"))?;
    Ok(LoadedBundle {
        bundle,
        maps,
        cells,
        cells_json,
    })
}
