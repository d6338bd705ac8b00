use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use testmap_core::corpus::{
    build_version_snapshots_with, extract_document, load_repository_with, DiversitySource,
    Outcome, PoolMode, TestRepository, VersionSnapshot,
};
use testmap_core::export::export_bundle;
use testmap_core::mds::classical_mds;
use testmap_core::metrics::{apfd, redundancy, FailureProfile, MetricResult, MetricsError};
use testmap_core::prioritize::{
    dbp_prioritize, manual_subset, random_select, PrioritizedSubset, SelectionTechnique,
};
use testmap_core::similarity::{build_distance_matrix, DistanceMatrix, ShingleConfig};
use testmap_core::study::{emit_timings, run_study, write_outputs, StudyConfig, SubsetMaps};

#[derive(Parser)]
#[command(name = "testmap", version, about = "Diversity analysis and similarity maps for manual test repositories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RepoArgs {
    /// Repository JSON file.
    #[arg(long)]
    repo: PathBuf,
    /// Ignore unknown fields instead of rejecting them.
    #[arg(long)]
    lenient: bool,
}

impl RepoArgs {
    fn load(&self) -> Result<TestRepository> {
        load_repository_with(&self.repo, self.lenient)
            .with_context(|| format!("loading {}", self.repo.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise Jaccard distance matrix for one diversity source.
    Matrix {
        #[command(flatten)]
        repo: RepoArgs,
        #[arg(long, default_value = "steps")]
        source: DiversitySource,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Restrict to the pool of the snapshot on this date.
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Similarity map (classical MDS) of a matrix file.
    Map {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select or order a subset of tests.
    Prioritize {
        #[command(flatten)]
        repo: RepoArgs,
        #[arg(long)]
        technique: SelectionTechnique,
        #[arg(long, default_value = "steps")]
        source: DiversitySource,
        /// Subset size; defaults to the manual suite size when --date is given.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Select from the pool of the snapshot on this date instead of the
        /// whole repository.
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long, default_value = "dated")]
        pool: PoolMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// APFD and redundancy of a subset on a given date.
    Score {
        #[command(flatten)]
        repo: RepoArgs,
        #[arg(long)]
        subset: PathBuf,
        #[arg(long)]
        date: NaiveDate,
        /// Documents used for redundancy; defaults to the subset's own source.
        #[arg(long)]
        source: Option<DiversitySource>,
    },
    /// Manual vs DBP vs RDM over every snapshot, with maps and a bundle.
    Study {
        #[command(flatten)]
        repo: RepoArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        reps: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Snapshots need more manual tests than this.
        #[arg(long = "min-size", default_value_t = 10)]
        min_size: usize,
        #[arg(long, value_delimiter = ',', default_value = "requirements,name,steps")]
        sources: Vec<DiversitySource>,
        #[arg(long, default_value = "dated")]
        pool: PoolMode,
        /// fresh | overlay | none
        #[arg(long = "subset-maps", default_value = "fresh", value_parser = parse_subset_maps)]
        subset_maps: SubsetMaps,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Serve a bundle directory to the map explorer.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 7878)]
        port: u16,
    },
}

fn parse_subset_maps(s: &str) -> Result<SubsetMaps, String> {
    match s {
        "fresh" => Ok(SubsetMaps::Fresh),
        "overlay" => Ok(SubsetMaps::Overlay),
        "none" => Ok(SubsetMaps::None),
        other => Err(format!("unknown subset map mode `{other}`")),
    }
}

fn emit(json: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn snapshot_on(repo: &TestRepository, date: NaiveDate, pool: PoolMode) -> Result<VersionSnapshot> {
    build_version_snapshots_with(repo, pool)
        .into_iter()
        .find(|s| s.date == date)
        .ok_or_else(|| anyhow!("no executions recorded on {date}"))
}

fn source_matrix(
    repo: &TestRepository,
    ids: &[String],
    source: DiversitySource,
    k: usize,
) -> Result<DistanceMatrix> {
    let docs = ids
        .iter()
        .map(|id| {
            let test = repo.test(id).ok_or_else(|| anyhow!("unknown test `{id}`"))?;
            Ok((id.clone(), extract_document(test, source, repo)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_distance_matrix(&docs, ShingleConfig::new(k)?, source)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Matrix { repo, source, k, date, out } => {
            let r = repo.load()?;
            let ids: Vec<String> = match date {
                Some(d) => snapshot_on(&r, d, PoolMode::Dated)?.pool.into_iter().collect(),
                None => r.test_ids().map(str::to_owned).collect(),
            };
            let m = source_matrix(&r, &ids, source, k)?;
            emit(&serde_json::to_string(&m)?, out.as_deref())
        }
        Command::Map { matrix, out } => {
            let text = std::fs::read_to_string(&matrix)
                .with_context(|| format!("reading {}", matrix.display()))?;
            let m: DistanceMatrix = serde_json::from_str(&text)?;
            emit(&serde_json::to_string_pretty(&classical_mds(&m)?)?, out.as_deref())
        }
        Command::Prioritize {
            repo,
            technique,
            source,
            size,
            seed,
            k,
            date,
            pool,
            out,
        } => {
            let r = repo.load()?;
            let snapshot = date.map(|d| snapshot_on(&r, d, pool)).transpose()?;
            let pool_ids: Vec<String> = match &snapshot {
                Some(s) => s.pool.iter().cloned().collect(),
                None => r.test_ids().map(str::to_owned).collect(),
            };
            let size = match (size, &snapshot) {
                (Some(n), _) => n,
                (None, Some(s)) => s.manual_suite.len(),
                (None, None) => bail!("--size is required without --date"),
            };
            let mut subset: PrioritizedSubset = match technique {
                SelectionTechnique::Dbp => {
                    dbp_prioritize(&source_matrix(&r, &pool_ids, source, k)?, size)?
                }
                SelectionTechnique::Rdm => random_select(&pool_ids, size, seed)?,
                SelectionTechnique::Manual => match &snapshot {
                    Some(s) => manual_subset(s)?,
                    None => bail!("the manual technique needs --date"),
                },
            };
            subset.snapshot_date = date;
            emit(&serde_json::to_string_pretty(&subset)?, out.as_deref())
        }
        Command::Score {
            repo,
            subset,
            date,
            source,
        } => {
            let r = repo.load()?;
            let text = std::fs::read_to_string(&subset)
                .with_context(|| format!("reading {}", subset.display()))?;
            let subset: PrioritizedSubset = serde_json::from_str(&text)?;
            let source = source
                .or(subset.source)
                .ok_or_else(|| anyhow!("subset has no source; pass --source"))?;
            let docs = subset
                .order
                .iter()
                .map(|id| {
                    let test = r.test(id).ok_or_else(|| anyhow!("unknown test `{id}`"))?;
                    Ok(extract_document(test, source, &r)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let history = r.outcome_history();
            let failures = FailureProfile {
                flags: subset
                    .order
                    .iter()
                    .map(|id| (id.clone(), history.as_of(id, date) == Some(Outcome::Fail)))
                    .collect(),
            };
            let apfd = match apfd(&subset.order, &failures) {
                Ok(v) => Some(v),
                Err(MetricsError::NoFailures) => None,
                Err(e) => return Err(e.into()),
            };
            let result = MetricResult {
                apfd,
                redundancy: redundancy(&docs)?,
                subset_size: subset.order.len(),
            };
            emit(&serde_json::to_string_pretty(&result)?, None)
        }
        Command::Study {
            repo,
            out,
            k,
            reps,
            seed,
            min_size,
            sources,
            pool,
            subset_maps,
            workers,
        } => {
            let r = repo.load()?;
            let cfg = StudyConfig {
                k,
                min_suite_size: min_size,
                rdm_repetitions: reps,
                seed,
                sources,
                pool,
                subset_maps,
                full_maps: true,
                workers,
            };
            let report = run_study(&r, &cfg)?;
            write_outputs(&report, &out)?;
            export_bundle(&report, &r, &out)?;
            eprint!("{}", emit_timings(&report));
            eprintln!(
                "{} cells, {} skipped, {} maps written to {}",
                report.cells.len(),
                report.skipped.len(),
                report.maps.len(),
                out.display()
            );
            Ok(())
        }
        Command::Serve { bundle, port } => {
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("serving {} on http://127.0.0.1:{port}/api/maps", bundle.display());
            runtime.block_on(testmap_serve::serve(&bundle, port))?;
            Ok(())
        }
    }
}
