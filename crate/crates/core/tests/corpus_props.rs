use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use testmap_core::corpus::{
    build_version_snapshots, build_version_snapshots_with, extract_document, DiversitySource,
    ExecutionRecord, Outcome, PoolMode, Requirement, Step, TestCase, TestRepository,
};

fn base() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 3, 1).unwrap()
}

prop_compose! {
    fn repository()(
        tests in prop::collection::vec(
            ("[A-Za-z][A-Za-z ]{0,19}", prop::collection::vec(("[a-z][a-z ,.]{0,14}", "[a-z ]{0,15}"), 0..4), prop::collection::btree_set(0usize..5, 0..3)),
            1..12,
        ),
        reqs in prop::collection::vec("[a-z ]{1,20}", 5),
        execs in prop::collection::vec((0usize..64, 0u64..6, any::<bool>()), 0..40),
    ) -> TestRepository {
        let n = tests.len();
        let cases = tests
            .into_iter()
            .enumerate()
            .map(|(i, (name, steps, links))| TestCase {
                id: format!("T{i:02}"),
                name,
                steps: steps.into_iter().map(|(action, expected)| Step { action, expected }).collect(),
                requirement_ids: links.into_iter().map(|r| format!("R{r}")).collect(),
            })
            .collect();
        let requirements = reqs
            .into_iter()
            .enumerate()
            .map(|(i, text)| Requirement { id: format!("R{i}"), text })
            .collect();
        let executions = execs
            .into_iter()
            .map(|(t, day, fail)| ExecutionRecord {
                test_id: format!("T{:02}", t % n),
                date: base() + Days::new(day),
                outcome: if fail { Outcome::Fail } else { Outcome::Pass },
            })
            .collect();
        TestRepository::new(cases, requirements, executions).unwrap()
    }
}

proptest! {
    #[test]
    fn json_round_trip(repo in repository()) {
        let back = TestRepository::from_json_str(&repo.to_json_string(), false).unwrap();
        prop_assert_eq!(&back, &repo);
        prop_assert_eq!(back.digest(), repo.digest());
    }

    #[test]
    fn one_snapshot_per_execution_date(repo in repository()) {
        let dates: BTreeSet<NaiveDate> = repo.executions().iter().map(|e| e.date).collect();
        let snaps = build_version_snapshots(&repo);
        prop_assert_eq!(snaps.len(), dates.len());
        prop_assert!(snaps.windows(2).all(|w| w[0].date < w[1].date));
    }

    #[test]
    fn manual_suite_within_pool(repo in repository()) {
        for mode in [PoolMode::Dated, PoolMode::All] {
            for s in build_version_snapshots_with(&repo, mode) {
                prop_assert!(s.manual_suite.iter().all(|id| s.pool.contains(id)));
                prop_assert_eq!(s.outcomes.len(), s.manual_suite.len());
                let unique: BTreeSet<_> = s.manual_suite.iter().collect();
                prop_assert_eq!(unique.len(), s.manual_suite.len());
            }
        }
    }

    #[test]
    fn documents_ignore_link_order(repo in repository()) {
        let mut value: serde_json::Value = serde_json::from_str(&repo.to_json_string()).unwrap();
        for t in value["tests"].as_array_mut().unwrap() {
            if let Some(links) = t["requirements"].as_array_mut() {
                links.reverse();
            }
        }
        let reversed = TestRepository::from_json_str(&value.to_string(), false).unwrap();
        for test in repo.tests() {
            for source in DiversitySource::ALL {
                let a = extract_document(test, source, &repo);
                let b = extract_document(reversed.test(&test.id).unwrap(), source, &reversed);
                prop_assert_eq!(a.is_ok(), b.is_ok());
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}
