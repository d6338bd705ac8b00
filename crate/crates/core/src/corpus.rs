//! Repository data model, the JSON file format, version snapshots and
//! per-source document extraction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed repository file: {0}")]
    Parse(String),
    #[error("{from} references unknown {kind} `{missing}`")]
    DanglingReference {
        from: String,
        kind: &'static str,
        missing: String,
    },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("invalid test `{id}`: {reason}")]
    InvalidTest { id: String, reason: String },
    #[error("test `{id}` yields an empty {diversity} document")]
    EmptyDocument { id: String, diversity: DiversitySource },
    #[error("unknown test `{0}`")]
    UnknownTest(String),
}

/// Which textual artefact of a test feeds the distance computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiversitySource {
    Requirements,
    Name,
    Steps,
}

impl DiversitySource {
    pub const ALL: [DiversitySource; 3] = [
        DiversitySource::Requirements,
        DiversitySource::Name,
        DiversitySource::Steps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiversitySource::Requirements => "requirements",
            DiversitySource::Name => "name",
            DiversitySource::Steps => "steps",
        }
    }
}

impl fmt::Display for DiversitySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiversitySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "requirements" | "requirement" | "req" => Ok(DiversitySource::Requirements),
            "name" | "names" => Ok(DiversitySource::Name),
            "steps" | "step" => Ok(DiversitySource::Steps),
            other => Err(format!("unknown diversity source `{other}`")),
        }
    }
}

/// A user action and its expected result.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    #[serde(default)]
    pub action: String,
    #[serde(default)]
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestCase {
    pub id: String,
    pub name: String,
    pub steps: Vec<Step>,
    pub requirement_ids: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub text: String,
}

/// Verdict of one test run. `Fail` orders above `Pass`, so `max` picks the
/// worse of two outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionRecord {
    pub test_id: String,
    pub date: NaiveDate,
    pub outcome: Outcome,
}

/// A validated test repository. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestRepository {
    tests: BTreeMap<String, TestCase>,
    requirements: BTreeMap<String, Requirement>,
    executions: Vec<ExecutionRecord>,
}

// On-disk representation. Unknown-field handling is done on the raw JSON
// value so that strictness can be chosen at runtime.

#[derive(Serialize, Deserialize)]
struct RepoFile {
    #[serde(default)]
    tests: Vec<TestFile>,
    #[serde(default)]
    requirements: Vec<Requirement>,
    #[serde(default)]
    executions: Vec<ExecutionFile>,
}

#[derive(Serialize, Deserialize)]
struct TestFile {
    id: String,
    name: String,
    #[serde(default)]
    steps: Vec<Step>,
    #[serde(default)]
    requirements: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ExecutionFile {
    test: String,
    date: NaiveDate,
    outcome: Outcome,
}

const ROOT_KEYS: &[&str] = &["tests", "requirements", "executions"];
const TEST_KEYS: &[&str] = &["id", "name", "steps", "requirements"];
const STEP_KEYS: &[&str] = &["action", "expected"];
const REQUIREMENT_KEYS: &[&str] = &["id", "text"];
const EXECUTION_KEYS: &[&str] = &["test", "date", "outcome"];

fn check_keys(value: &Value, allowed: &[&str], at: &str) -> Result<(), CorpusError> {
    if let Value::Object(map) = value {
        if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(CorpusError::Parse(format!("unknown field `{key}` in {at}")));
        }
    }
    Ok(())
}

fn check_array(value: &Value, key: &str, allowed: &[&str]) -> Result<(), CorpusError> {
    if let Some(Value::Array(items)) = value.get(key) {
        for (i, item) in items.iter().enumerate() {
            check_keys(item, allowed, &format!("{key}[{i}]"))?;
        }
    }
    Ok(())
}

fn check_strict(value: &Value) -> Result<(), CorpusError> {
    check_keys(value, ROOT_KEYS, "repository")?;
    check_array(value, "requirements", REQUIREMENT_KEYS)?;
    check_array(value, "executions", EXECUTION_KEYS)?;
    check_array(value, "tests", TEST_KEYS)?;
    if let Some(Value::Array(tests)) = value.get("tests") {
        for (i, test) in tests.iter().enumerate() {
            if let Some(Value::Array(steps)) = test.get("steps") {
                for (j, step) in steps.iter().enumerate() {
                    check_keys(step, STEP_KEYS, &format!("tests[{i}].steps[{j}]"))?;
                }
            }
        }
    }
    Ok(())
}

/// Reads and validates a repository file in strict mode.
pub fn load_repository(path: impl AsRef<Path>) -> Result<TestRepository, CorpusError> {
    load_repository_with(path, false)
}

/// Reads a repository file; with `lenient`, unknown fields are ignored
/// instead of rejected.
pub fn load_repository_with(
    path: impl AsRef<Path>,
    lenient: bool,
) -> Result<TestRepository, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    TestRepository::from_json_str(&text, lenient)
}

impl TestRepository {
    /// Builds a repository, enforcing every invariant the file loader does.
    pub fn new(
        tests: Vec<TestCase>,
        requirements: Vec<Requirement>,
        executions: Vec<ExecutionRecord>,
    ) -> Result<Self, CorpusError> {
        let mut req_map = BTreeMap::new();
        for req in requirements {
            if req.id.is_empty() {
                return Err(CorpusError::Parse("requirement with empty id".into()));
            }
            if req_map.contains_key(&req.id) {
                return Err(CorpusError::DuplicateId {
                    kind: "requirement",
                    id: req.id,
                });
            }
            req_map.insert(req.id.clone(), req);
        }

        let mut test_map = BTreeMap::new();
        for test in tests {
            validate_test(&test)?;
            if test_map.contains_key(&test.id) {
                return Err(CorpusError::DuplicateId {
                    kind: "test",
                    id: test.id,
                });
            }
            if let Some(missing) = test.requirement_ids.iter().find(|r| !req_map.contains_key(*r)) {
                return Err(CorpusError::DanglingReference {
                    from: format!("test `{}`", test.id),
                    kind: "requirement",
                    missing: missing.clone(),
                });
            }
            test_map.insert(test.id.clone(), test);
        }

        if let Some(exec) = executions.iter().find(|e| !test_map.contains_key(&e.test_id)) {
            return Err(CorpusError::DanglingReference {
                from: format!("execution on {}", exec.date),
                kind: "test",
                missing: exec.test_id.clone(),
            });
        }

        Ok(TestRepository {
            tests: test_map,
            requirements: req_map,
            executions,
        })
    }

    pub fn from_json_str(text: &str, lenient: bool) -> Result<Self, CorpusError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| CorpusError::Parse(e.to_string()))?;
        if !lenient {
            check_strict(&value)?;
        }
        let file: RepoFile =
            serde_json::from_value(value).map_err(|e| CorpusError::Parse(e.to_string()))?;

        let mut tests = Vec::with_capacity(file.tests.len());
        for t in file.tests {
            let mut requirement_ids = BTreeSet::new();
            for r in t.requirements {
                // a repeated link is harmless, but keep the file honest
                if !requirement_ids.insert(r.clone()) {
                    return Err(CorpusError::InvalidTest {
                        id: t.id,
                        reason: format!("requirement `{r}` linked twice"),
                    });
                }
            }
            tests.push(TestCase {
                id: t.id,
                name: t.name,
                steps: t.steps,
                requirement_ids,
            });
        }
        let executions = file
            .executions
            .into_iter()
            .map(|e| ExecutionRecord {
                test_id: e.test,
                date: e.date,
                outcome: e.outcome,
            })
            .collect();
        TestRepository::new(tests, file.requirements, executions)
    }

    /// Serializes to the repository file format. Tests and requirements are
    /// written in id order, executions in recorded order.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("repository serializes")
    }

    fn to_file(&self) -> RepoFile {
        RepoFile {
            tests: self
                .tests
                .values()
                .map(|t| TestFile {
                    id: t.id.clone(),
                    name: t.name.clone(),
                    steps: t.steps.clone(),
                    requirements: t.requirement_ids.iter().cloned().collect(),
                })
                .collect(),
            requirements: self.requirements.values().cloned().collect(),
            executions: self
                .executions
                .iter()
                .map(|e| ExecutionFile {
                    test: e.test_id.clone(),
                    date: e.date,
                    outcome: e.outcome,
                })
                .collect(),
        }
    }

    /// SHA-256 over the canonical (compact, id-ordered) serialization, hex
    /// encoded. Insensitive to formatting and ordering of the source file.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(&self.to_file()).expect("repository serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn test(&self, id: &str) -> Option<&TestCase> {
        self.tests.get(id)
    }

    /// Tests in ascending id order.
    pub fn tests(&self) -> impl Iterator<Item = &TestCase> {
        self.tests.values()
    }

    pub fn test_ids(&self) -> impl Iterator<Item = &str> {
        self.tests.keys().map(String::as_str)
    }

    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.requirements.get(id)
    }

    pub fn requirements(&self) -> impl Iterator<Item = &Requirement> {
        self.requirements.values()
    }

    pub fn executions(&self) -> &[ExecutionRecord] {
        &self.executions
    }

    /// Per-test outcome history with same-date runs merged.
    pub fn outcome_history(&self) -> OutcomeHistory {
        let mut by_test: BTreeMap<String, BTreeMap<NaiveDate, Outcome>> = BTreeMap::new();
        for e in &self.executions {
            let slot = by_test
                .entry(e.test_id.clone())
                .or_default()
                .entry(e.date)
                .or_insert(e.outcome);
            *slot = (*slot).max(e.outcome);
        }
        OutcomeHistory { by_test }
    }
}

fn validate_test(test: &TestCase) -> Result<(), CorpusError> {
    let invalid = |reason: &str| CorpusError::InvalidTest {
        id: test.id.clone(),
        reason: reason.to_string(),
    };
    if test.id.is_empty() {
        return Err(CorpusError::Parse("test with empty id".into()));
    }
    if test.steps.is_empty() && test.name.trim().is_empty() {
        return Err(invalid("no name and no steps"));
    }
    if test
        .steps
        .iter()
        .any(|s| s.action.trim().is_empty() && s.expected.trim().is_empty())
    {
        return Err(invalid("step with neither action nor expected result"));
    }
    if test.requirement_ids.iter().any(String::is_empty) {
        return Err(invalid("empty requirement reference"));
    }
    Ok(())
}

/// Merged (Fail-dominates) outcome per test and execution date.
#[derive(Clone, Debug, Default)]
pub struct OutcomeHistory {
    by_test: BTreeMap<String, BTreeMap<NaiveDate, Outcome>>,
}

impl OutcomeHistory {
    /// The outcome recorded on the latest execution date not after `date`.
    pub fn as_of(&self, test_id: &str, date: NaiveDate) -> Option<Outcome> {
        self.by_test
            .get(test_id)?
            .range(..=date)
            .next_back()
            .map(|(_, o)| *o)
    }

    pub fn last(&self, test_id: &str) -> Option<(NaiveDate, Outcome)> {
        self.by_test
            .get(test_id)?
            .iter()
            .next_back()
            .map(|(d, o)| (*d, *o))
    }
}

/// Which tests count as existing at a snapshot date.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    /// Tests first executed on or before the date, plus never-executed tests.
    #[default]
    Dated,
    /// Every test in the repository.
    All,
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dated" => Ok(PoolMode::Dated),
            "all" => Ok(PoolMode::All),
            other => Err(format!("unknown pool mode `{other}` (expected dated|all)")),
        }
    }
}

/// Repository state on one execution date.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionSnapshot {
    pub date: NaiveDate,
    pub pool: BTreeSet<String>,
    /// Tests executed on `date`, in first-recorded order.
    pub manual_suite: Vec<String>,
    pub outcomes: BTreeMap<String, Outcome>,
}

pub fn build_version_snapshots(repo: &TestRepository) -> Vec<VersionSnapshot> {
    build_version_snapshots_with(repo, PoolMode::Dated)
}

/// One snapshot per distinct execution date, ascending. Executions sharing a
/// date form a single suite; a test run twice that day keeps its worse
/// outcome.
pub fn build_version_snapshots_with(repo: &TestRepository, mode: PoolMode) -> Vec<VersionSnapshot> {
    let mut first_run: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    let mut by_date: BTreeMap<NaiveDate, (Vec<String>, BTreeMap<String, Outcome>)> =
        BTreeMap::new();

    for e in &repo.executions {
        first_run
            .entry(e.test_id.as_str())
            .and_modify(|d| *d = (*d).min(e.date))
            .or_insert(e.date);
        let (suite, outcomes) = by_date.entry(e.date).or_default();
        match outcomes.get_mut(&e.test_id) {
            Some(o) => *o = (*o).max(e.outcome),
            None => {
                suite.push(e.test_id.clone());
                outcomes.insert(e.test_id.clone(), e.outcome);
            }
        }
    }

    by_date
        .into_iter()
        .map(|(date, (manual_suite, outcomes))| {
            let pool = repo
                .tests
                .keys()
                .filter(|id| match mode {
                    PoolMode::All => true,
                    PoolMode::Dated => first_run.get(id.as_str()).is_none_or(|d| *d <= date),
                })
                .cloned()
                .collect();
            VersionSnapshot {
                date,
                pool,
                manual_suite,
                outcomes,
            }
        })
        .collect()
}

/// Lowercases and collapses whitespace runs into single spaces.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds the normalized text document of `test` for one diversity source.
///
/// Multi-part documents (steps, linked requirements) normalize each part on
/// its own and join the non-empty parts with `\n`.
pub fn extract_document(
    test: &TestCase,
    source: DiversitySource,
    repo: &TestRepository,
) -> Result<String, CorpusError> {
    if repo.test(&test.id) != Some(test) {
        return Err(CorpusError::UnknownTest(test.id.clone()));
    }
    let doc = match source {
        DiversitySource::Name => normalize(&test.name),
        DiversitySource::Steps => join_parts(
            test.steps
                .iter()
                .flat_map(|s| [s.action.as_str(), s.expected.as_str()]),
        ),
        // requirement_ids is a BTreeSet, so texts come out in id order
        DiversitySource::Requirements => join_parts(test.requirement_ids.iter().map(|id| {
            repo.requirements
                .get(id)
                .map(|r| r.text.as_str())
                .unwrap_or_default()
        })),
    };
    if doc.is_empty() {
        return Err(CorpusError::EmptyDocument {
            id: test.id.clone(),
            diversity: source,
        });
    }
    Ok(doc)
}

fn join_parts<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    parts
        .map(normalize)
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Ids that are not unique within `ids`, in first-seen order.
pub(crate) fn duplicates<'a>(ids: impl IntoIterator<Item = &'a String>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    ids.into_iter()
        .filter(|id| !seen.insert(id.as_str()))
        .map(String::as_str)
        .collect()
}
