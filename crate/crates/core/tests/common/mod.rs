//! Synthetic repositories shared by the integration suites.
#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use testmap_core::corpus::{ExecutionRecord, Outcome, Requirement, Step, TestCase, TestRepository};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn word(rng: &mut StdRng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

pub fn vocabulary(rng: &mut StdRng, size: usize) -> Vec<String> {
    let mut words: Vec<String> = (0..size).map(|_| word(rng, 3, 10)).collect();
    words.sort();
    words.dedup();
    words
}

pub fn sentence(rng: &mut StdRng, vocab: &[String], words: usize) -> Vec<String> {
    (0..words).map(|_| vocab.choose(rng).unwrap().clone()).collect()
}

/// Text of roughly `bytes` characters drawn from `vocab`.
pub fn text_of_len(rng: &mut StdRng, vocab: &[String], bytes: usize) -> String {
    let mut out = String::new();
    while out.len() < bytes {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(vocab.choose(rng).unwrap());
    }
    out
}

pub fn day(offset: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + Days::new(offset)
}

fn test_case(id: String, name: String, words: &[String], reqs: &[String]) -> TestCase {
    let half = words.len() / 2;
    TestCase {
        id,
        name,
        steps: vec![Step {
            action: words[..half].join(" "),
            expected: words[half..].join(" "),
        }],
        requirement_ids: reqs.iter().cloned().collect(),
    }
}

/// `snapshots` execution dates, each running `suite` random tests of the
/// repository; roughly a fifth of the runs fail.
fn executions(rng: &mut StdRng, ids: &[String], snapshots: usize, suite: usize) -> Vec<ExecutionRecord> {
    let mut out = Vec::new();
    for s in 0..snapshots {
        let mut picked = ids.to_vec();
        picked.shuffle(rng);
        for id in picked.into_iter().take(suite) {
            out.push(ExecutionRecord {
                test_id: id,
                date: day(s as u64),
                outcome: if rng.random_bool(0.2) { Outcome::Fail } else { Outcome::Pass },
            });
        }
    }
    out
}

fn requirements(vocab: &[String], rng: &mut StdRng) -> Vec<Requirement> {
    (0..8)
        .map(|r| Requirement {
            id: format!("REQ-{r}"),
            text: sentence(rng, vocab, 6).join(" "),
        })
        .collect()
}

/// Near-duplicate clusters of very unequal size: one template accounts for
/// `big` tests, each of `small_clusters` further templates for `small` tests.
/// Every test is its template with one word substituted.
pub fn low_diversity_repo(
    seed: u64,
    big: usize,
    small_clusters: usize,
    small: usize,
    snapshots: usize,
    suite: usize,
) -> TestRepository {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 300);
    let reqs = requirements(&vocab, &mut rng);
    let mut tests = Vec::new();
    for cluster in 0..=small_clusters {
        let template = sentence(&mut rng, &vocab, 16);
        let members = if cluster == 0 { big } else { small };
        for m in 0..members {
            let mut words = template.clone();
            let pos = rng.random_range(0..words.len());
            words[pos] = vocab.choose(&mut rng).unwrap().clone();
            let id = format!("C{cluster:02}-{m:03}");
            let req = [format!("REQ-{}", cluster % 8)];
            tests.push(test_case(id.clone(), format!("cluster {cluster} case {m}"), &words, &req));
        }
    }
    let ids: Vec<String> = tests.iter().map(|t| t.id.clone()).collect();
    let execs = executions(&mut rng, &ids, snapshots, suite);
    TestRepository::new(tests, reqs, execs).unwrap()
}

/// Independent random documents over a large vocabulary.
pub fn high_diversity_repo(seed: u64, tests: usize, snapshots: usize, suite: usize) -> TestRepository {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 5000);
    let reqs = requirements(&vocab, &mut rng);
    let cases: Vec<TestCase> = (0..tests)
        .map(|i| {
            let words = sentence(&mut rng, &vocab, 16);
            let name = sentence(&mut rng, &vocab, 4).join(" ");
            test_case(format!("H{i:04}"), name, &words, &[format!("REQ-{}", i % 8)])
        })
        .collect();
    let ids: Vec<String> = cases.iter().map(|t| t.id.clone()).collect();
    let execs = executions(&mut rng, &ids, snapshots, suite);
    TestRepository::new(cases, reqs, execs).unwrap()
}

/// `(id, text)` step documents of about `bytes` characters each.
pub fn step_documents(seed: u64, n: usize, bytes: usize) -> Vec<(String, String)> {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 2000);
    (0..n)
        .map(|i| (format!("S{i:05}"), text_of_len(&mut rng, &vocab, bytes)))
        .collect()
}

/// Two templates with 30 mutants each: 18 verbatim copies and 12 that
/// replace 3 to 5 random words. The single snapshot runs 12 tests of the first cluster, so the
/// manual suite is made of planted near-duplicates.
pub fn two_cluster_repo(seed: u64) -> TestRepository {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 400);
    let reqs = requirements(&vocab, &mut rng);
    let mut tests = Vec::new();
    for cluster in 0..2 {
        let template = sentence(&mut rng, &vocab, 16);
        for m in 0..30 {
            let mut words = template.clone();
            let edits = if m < 18 { 0 } else { rng.random_range(3..=5) };
            for _ in 0..edits {
                let pos = rng.random_range(0..words.len());
                words[pos] = vocab.choose(&mut rng).unwrap().clone();
            }
            let id = format!("K{cluster}-{m:02}");
            tests.push(test_case(id, format!("cluster {cluster} case {m}"), &words, &[format!("REQ-{cluster}")]));
        }
    }
    let mut manual: Vec<String> = (0..30).map(|m| format!("K0-{m:02}")).collect();
    manual.shuffle(&mut rng);
    let execs = manual
        .into_iter()
        .take(12)
        .enumerate()
        .map(|(i, test_id)| ExecutionRecord {
            test_id,
            date: day(0),
            outcome: if i % 4 == 1 { Outcome::Fail } else { Outcome::Pass },
        })
        .collect();
    TestRepository::new(tests, reqs, execs).unwrap()
}

/// Tests with short names and steps of about `bytes` characters, one
/// snapshot of `suite` tests.
pub fn long_steps_repo(seed: u64, n: usize, bytes: usize, suite: usize) -> TestRepository {
    let mut rng = rng(seed);
    let vocab = vocabulary(&mut rng, 2000);
    let reqs = requirements(&vocab, &mut rng);
    let cases: Vec<TestCase> = (0..n)
        .map(|i| TestCase {
            id: format!("L{i:04}"),
            name: sentence(&mut rng, &vocab, 2).join(" "),
            steps: vec![Step {
                action: text_of_len(&mut rng, &vocab, bytes / 2),
                expected: text_of_len(&mut rng, &vocab, bytes / 2),
            }],
            requirement_ids: [format!("REQ-{}", i % 8)].into(),
        })
        .collect();
    let ids: Vec<String> = cases.iter().map(|t| t.id.clone()).collect();
    let execs = executions(&mut rng, &ids, 1, suite);
    TestRepository::new(cases, reqs, execs).unwrap()
}
