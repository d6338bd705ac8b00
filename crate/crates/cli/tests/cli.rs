use std::path::Path;
use std::process::Command;

fn testmap(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_testmap"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "testmap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_repo(dir: &Path) -> String {
    let features = ["login", "checkout", "invoice", "search", "settings", "upload", "report"];
    let tests: Vec<_> = (0..24)
        .map(|i| {
            serde_json::json!({
                "id": format!("MT-{i:03}"),
                "name": format!("Verify {} flow variant {}", features[i % 7], i / 7),
                "steps": [
                    {"action": format!("Navigate to {}", features[i % 7]), "expected": "Page loads"},
                    {"action": format!("Submit form with case {}", i % 4), "expected": format!("{} is saved", features[(i + 1) % 7])}
                ],
                "requirements": [format!("RQ{}", i % 5)]
            })
        })
        .collect();
    let reqs: Vec<_> = (0..5)
        .map(|r| serde_json::json!({"id": format!("RQ{r}"), "text": format!("System shall support {}", features[r])}))
        .collect();
    let mut execs = Vec::new();
    for (day, range) in [("2024-01-08", 0..12), ("2024-02-12", 6..20), ("2024-03-04", 0..5)] {
        for i in range {
            execs.push(serde_json::json!({
                "test": format!("MT-{i:03}"),
                "date": day,
                "outcome": if (i + day.len()) % 3 == 0 { "fail" } else { "pass" }
            }));
        }
    }
    let repo = serde_json::json!({"tests": tests, "requirements": reqs, "executions": execs});
    let path = dir.join("repo.json");
    std::fs::write(&path, serde_json::to_string_pretty(&repo).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timings.txt" {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn study_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = write_repo(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        testmap(&["study", "--repo", &repo, "--out", out.to_str().unwrap(), "--reps", "4", "--seed", "7"]);
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta, tb);
    let names: Vec<&str> = ta.iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["report.json", "cells.csv", "bundle.json", "cells.json", "maps/full-steps.json"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    assert!(a.join("timings.txt").exists());

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    // only the 2024-01-08 (12 tests) and 2024-02-12 (14 tests) snapshots qualify
    assert_eq!(report["cells"].as_array().unwrap().len(), 18);
    assert_eq!(report["skipped"].as_array().unwrap().len(), 1);
}

#[test]
fn matrix_prioritize_and_score() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = write_repo(tmp.path());
    let matrix = tmp.path().join("m.json");
    testmap(&["matrix", "--source", "steps", "--k", "5", "--repo", &repo, "--out", matrix.to_str().unwrap()]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&matrix).unwrap()).unwrap();
    assert_eq!(m["ids"].as_array().unwrap().len(), 24);
    assert_eq!(m["d"][3][3], 0.0);

    let map = testmap(&["map", "--matrix", matrix.to_str().unwrap()]);
    let map: serde_json::Value = serde_json::from_slice(&map.stdout).unwrap();
    assert_eq!(map["coords"].as_array().unwrap().len(), 24);

    let subset = tmp.path().join("subset.json");
    testmap(&[
        "prioritize", "--technique", "dbp", "--source", "name", "--size", "5", "--repo", &repo,
        "--out", subset.to_str().unwrap(),
    ]);
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(&subset).unwrap()).unwrap();
    assert_eq!(s["technique"], "dbp");
    assert_eq!(s["order"].as_array().unwrap().len(), 5);

    let score = testmap(&["score", "--subset", subset.to_str().unwrap(), "--repo", &repo, "--date", "2024-02-12"]);
    let score: serde_json::Value = serde_json::from_slice(&score.stdout).unwrap();
    assert_eq!(score["subset_size"], 5);
    let red = score["redundancy"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&red));

    let rdm = testmap(&["prioritize", "--technique", "rdm", "--seed", "3", "--date", "2024-01-08", "--repo", &repo]);
    let rdm: serde_json::Value = serde_json::from_slice(&rdm.stdout).unwrap();
    assert_eq!(rdm["order"].as_array().unwrap().len(), 12);
    assert_eq!(rdm["seed"], 3);
    assert_eq!(rdm["snapshot_date"], "2024-01-08");
}

#[test]
fn bad_repository_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"tests":[{"id":"T1","name":"a","requirements":["R9"]}]}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_testmap"))
        .args(["matrix", "--repo", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("R9"));
}
