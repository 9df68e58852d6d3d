use std::path::Path;
use std::process::{Command, Output};

fn oei(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oei")).args(args).env_remove("OEI_BO_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,iteration,evaluations,incumbent,regret,wall_time_s,solver_iters"
    );
    lines.map(str::to_string).collect()
}

fn quick_run(dir: &Path, acquisition: &str, seed: &str) -> Output {
    oei(&[
        "run", "--function", "six-hump-camel", "--acquisition", acquisition, "--batch-size", "2", "--iterations", "3",
        "--runs", "2", "--seed", seed, "--restarts", "3", "--out-dir", dir.to_str().unwrap(),
    ])
}

#[test]
fn run_writes_one_row_per_run_and_iteration() {
    let dir = tempfile::tempdir().unwrap();
    for acq in ["oei", "random"] {
        let out_dir = dir.path().join(acq);
        let out = oei(&[
            "run", "--function", "eggholder", "--acquisition", acq, "--batch-size", "5", "--iterations", "10", "--runs",
            "5", "--seed", "1", "--out-dir", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let rows = data_rows(&out_dir.join("runs.csv"));
        assert_eq!(rows.len(), 50);
        for (i, row) in rows.iter().enumerate() {
            let f: Vec<&str> = row.split(',').collect();
            assert_eq!(f.len(), 7);
            assert_eq!((f[0], f[1]), ((i / 10).to_string().as_str(), (i % 10 + 1).to_string().as_str()));
            assert!(f[4].parse::<f64>().unwrap() >= 0.0);
            assert_eq!(f[5], "");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["metric"], "regret");
        assert_eq!(summary["iterations"].as_array().unwrap().len(), 10);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["runs"], 5);
        assert_eq!(manifest["seed"], 1);
        assert_eq!(manifest["run_seeds"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn reruns_are_byte_identical_and_seeds_matter() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (d, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        assert_eq!(code(&quick_run(d, "oei", seed)), 0);
    }
    let read = |d: &Path| std::fs::read(d.join("runs.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let out = Command::new(env!("CARGO_BIN_EXE_oei"))
        .args(["run", "--function", "six-hump-camel", "--acquisition", "random", "--batch-size", "2", "--iterations", "3"])
        .args(["--runs", "3", "--seed", "2", "--restarts", "2", "--out-dir", one.to_str().unwrap()])
        .env("OEI_BO_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let many = dir.path().join("many");
    let out = Command::new(env!("CARGO_BIN_EXE_oei"))
        .args(["run", "--function", "six-hump-camel", "--acquisition", "random", "--batch-size", "2", "--iterations", "3"])
        .args(["--runs", "3", "--seed", "2", "--restarts", "2", "--out-dir", many.to_str().unwrap()])
        .env("OEI_BO_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(one.join("runs.csv")).unwrap(), std::fs::read(many.join("runs.csv")).unwrap());
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("from-config");
    let cfg = dir.path().join("run.json");
    let body = serde_json::json!({
        "function": "cosine-mixture",
        "runs": 2,
        "out_dir": out_dir,
        "acquisition": "random",
        "batch_size": 3,
        "iterations": 5,
        "hyper_restarts": 2,
        "seed": 3
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let out = oei(&["run", "--config", cfg.to_str().unwrap(), "--iterations", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&out_dir.join("runs.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0,2,16,"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = dir.path().join("bad.json");
    std::fs::write(&bad_key, r#"{"function": "eggholder", "batchsize": 3}"#).unwrap();
    let bad_json = dir.path().join("broken.json");
    std::fs::write(&bad_json, "{ not json").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--function", "rosenbrock"],
        vec!["run", "--acquisition", "oei"],
        vec!["run", "--function", "eggholder", "--acquisition", "greedy"],
        vec!["run", "--function", "eggholder", "--batch-size", "0"],
        vec!["run", "--config", bad_key.to_str().unwrap()],
        vec!["run", "--config", bad_json.to_str().unwrap()],
        vec!["run", "--config", "/nonexistent/run.json"],
        vec!["validate", "--suite", "nonsense"],
        vec!["plot", "--input", "/nonexistent", "--kind", "regret"],
        vec!["plot", "--input", "/tmp", "--kind", "bars"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = oei(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = Command::new(env!("CARGO_BIN_EXE_oei"))
        .args(["validate", "--suite", "duality", "--cases", "2"])
        .env("OEI_BO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    let out = quick_run(&file, "random", "1");
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_reports_counts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = || oei(&["validate", "--suite", "gradients", "--seed", "7", "--cases", "4", "--out-dir", dir.path().to_str().unwrap()]);
    let (a, b) = (run(), run());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("suite gradients seed 7: 74 cases,"), "{text}");
    assert!(text.contains(" 0 failed"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validate-gradients.json")).unwrap()).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);
}

/// Element name and attributes of every start tag, after checking that tags
/// nest, attribute values are quoted and text holds no raw markup.
fn parse_svg(path: &Path) -> Vec<(String, Vec<(String, String)>)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut rest = text.trim_start();
    if let Some(decl) = rest.strip_prefix("<?xml") {
        rest = &decl[decl.find("?>").unwrap() + 2..];
    }
    let (mut stack, mut elements) = (Vec::<String>::new(), Vec::new());
    while let Some(open) = rest.find('<') {
        let body = &rest[..open];
        assert!(!body.contains('>'), "stray `>` in {body:?}");
        for (i, _) in body.match_indices('&') {
            let entity = &body[i..body[i..].find(';').map_or(body.len(), |e| i + e + 1)];
            assert!(["&amp;", "&lt;", "&gt;", "&quot;", "&apos;"].contains(&entity), "bad entity {entity:?}");
        }
        let close = open + rest[open..].find('>').expect("unterminated tag");
        let tag = &rest[open + 1..close];
        rest = &rest[close + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            assert_eq!(stack.pop().as_deref(), Some(name.trim()), "mismatched close tag");
            continue;
        }
        let (tag, empty) = tag.strip_suffix('/').map_or((tag, false), |t| (t, true));
        let name_end = tag.find(char::is_whitespace).unwrap_or(tag.len());
        let name = tag[..name_end].to_string();
        let mut attrs = Vec::new();
        let mut a = tag[name_end..].trim();
        while !a.is_empty() {
            let eq = a.find("=\"").expect("unquoted attribute");
            let end = eq + 2 + a[eq + 2..].find('"').expect("unterminated attribute");
            assert!(!a[eq + 2..end].contains('<'));
            attrs.push((a[..eq].trim().to_string(), a[eq + 2..end].to_string()));
            a = a[end + 1..].trim_start();
        }
        if !empty {
            stack.push(name.clone());
        }
        elements.push((name, attrs));
    }
    assert!(rest.trim().is_empty() && stack.is_empty(), "unclosed {stack:?}");
    assert_eq!(elements.first().map(|e| e.0.as_str()), Some("svg"));
    elements
}

fn series_labels(path: &Path) -> Vec<String> {
    let attr = |attrs: &[(String, String)], key: &str| attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    parse_svg(path)
        .into_iter()
        .filter_map(|(_, attrs)| {
            let class = attr(&attrs, "class").filter(|c| c.starts_with("series"))?;
            Some(format!("{class} {}", attr(&attrs, "data-label").unwrap()))
        })
        .collect()
}

#[test]
fn plots_are_well_formed_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (oei_dir, rnd_dir) = (dir.path().join("oei"), dir.path().join("random"));
    assert_eq!(code(&quick_run(&oei_dir, "oei", "1")), 0);
    assert_eq!(code(&quick_run(&rnd_dir, "random", "1")), 0);
    let (o, r) = (oei_dir.to_str().unwrap(), rnd_dir.to_str().unwrap());

    let first = dir.path().join("first.svg");
    let out = oei(&["plot", "--input", o, r, "--kind", "regret", "--output", first.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let labels = series_labels(&first);
    assert_eq!(labels.len(), 4);
    assert!(labels.contains(&"series line oei / six-hump-camel median".to_string()), "{labels:?}");
    assert!(labels.contains(&"series scatter random / six-hump-camel runs".to_string()), "{labels:?}");

    assert_eq!(code(&oei(&["plot", "--input", o, r, "--kind", "regret"])), 0);
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(oei_dir.join("regret.svg")).unwrap());

    let scan = dir.path().join("scan");
    let out = oei(&["linescan", "--samples", "41", "--mc-samples", "20000", "--out-dir", scan.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let header = std::fs::read_to_string(scan.join("linescan.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "t,oei,oei_slope,mc,mc_stderr");
    assert_eq!(header.lines().count(), 42);
    assert_eq!(code(&oei(&["plot", "--input", scan.to_str().unwrap(), "--kind", "linescan"])), 0);
    let labels = series_labels(&scan.join("linescan.svg"));
    assert_eq!(labels, vec!["series line OEI", "series band MC-EI +- 3 s.e.", "series line MC-EI"]);
}

#[test]
fn timing_bench_writes_rows_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = oei(&["bench-timing", "--batch-sizes", "2,3", "--repeats", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "batch_size,mean_value_grad_seconds,mean_hessian_seconds,warm_vs_cold_iteration_ratio");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,") && lines[2].starts_with("3,"));
    assert_eq!(code(&oei(&["plot", "--input", dir.path().to_str().unwrap(), "--kind", "timing"])), 0);
    parse_svg(&dir.path().join("timing.svg"));
}

#[test]
fn malformed_csv_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("timing.csv"), "batch_size,mean_value_grad_seconds\n2,abc\n").unwrap();
    assert_eq!(code(&oei(&["plot", "--input", dir.path().to_str().unwrap(), "--kind", "timing"])), 2);
    std::fs::write(dir.path().join("linescan.csv"), "t,oei,oei_slope,mc,mc_stderr\n").unwrap();
    assert_eq!(code(&oei(&["plot", "--input", dir.path().to_str().unwrap(), "--kind", "linescan"])), 2);
}
