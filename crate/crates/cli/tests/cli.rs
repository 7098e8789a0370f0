use std::path::{Path, PathBuf};
use std::process::Command;

use infofilter_cli::config::{validate_file, validate_text, OUTPUT_DIR_ENV};
use infofilter_cli::experiments;
use infofilter_cli::suite::{compare_two_runs, SHIPPED};
use infofilter_cli::table::strip_metadata;
use infofilter_cli::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infofilter"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> String {
    SHIPPED.iter().find(|(n, _)| *n == name).unwrap().1.to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn shipped_configs_validate() {
    for (name, text) in SHIPPED {
        assert_eq!(validate_text(text), Vec::<String>::new(), "{name}");
        // the embedded copy is the file on disk
        assert_eq!(std::fs::read_to_string(configs_dir().join(name)).unwrap(), text, "{name}");
    }
}

#[test]
fn empty_file_gives_an_error_list() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "empty.json", "");
    assert!(!validate_file(&p).is_empty());
    let out = bin().args(["validate", p.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn negative_dt_is_a_range_error() {
    let text = shipped("wonham.json").replace("\"dt\": 0.001", "\"dt\": -0.001");
    let errors = validate_text(&text);
    assert!(errors.iter().any(|e| e.contains("numerics.dt must be positive")), "{errors:?}");
}

#[test]
fn unknown_keys_are_rejected() {
    let text = shipped("wonham.json").replace("\"seed\": 2", "\"seed\": 2, \"sead\": 3");
    let errors = validate_text(&text);
    assert!(errors.iter().any(|e| e.contains("sead")), "{errors:?}");
}

#[test]
fn missing_key_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = shipped("decomposition.json").replace("\"rng\": { \"seed\": 7 },", "");
    let p = write(dir.path(), "no_rng.json", &text);
    let out = bin().args(["run", p.to_str().unwrap()]).env(OUTPUT_DIR_ENV, dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rng"), "{}", String::from_utf8_lossy(&out.stderr));

    let text = shipped("wonham.json").replace("\"t_end\": 1.0, ", "");
    let p = write(dir.path(), "no_t.json", &text);
    let out = bin().args(["run", p.to_str().unwrap()]).env(OUTPUT_DIR_ENV, dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerics.t_end"));
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "x");
    let p = write(dir.path(), "cfg.json", &shipped("decomposition.json"));
    let out = bin()
        .args(["run", p.to_str().unwrap()])
        .env(OUTPUT_DIR_ENV, blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = configs_dir().join("qv-info.json");
    let mut bodies = Vec::new();
    for pass in 0..2 {
        let out_dir = dir.path().join(format!("pass{pass}"));
        let out = bin().args(["run", p.to_str().unwrap()]).env(OUTPUT_DIR_ENV, &out_dir).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut names: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        bodies.push(names.iter().map(|n| std::fs::read(n).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(bodies[0].len(), 4);
    assert_eq!(bodies[0], bodies[1]);

    let cfg = ExperimentConfig::parse(&shipped("exp-filter.json")).unwrap();
    assert_eq!(compare_two_runs(&cfg, dir.path()).unwrap(), None);
}

#[test]
fn every_table_carries_its_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&shipped("kalman-bucy.json")).unwrap();
    let files = experiments::run_into(&cfg, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["summary.csv", "trajectory.csv", "qv.csv"]);
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        for key in ["experiment=kalman-bucy", &format!("config_sha256={}", cfg.hash()), "seed=4", "dt=0.001", "t_end=1.0", "n_replicates=200", "infofilter_version="] {
            assert!(text.contains(key), "{} lacks {key}", f.display());
        }
    }
}

#[test]
fn seed_changes_the_output() {
    let a = ExperimentConfig::parse(&shipped("wonham.json")).unwrap();
    let mut b = a.clone();
    b.rng.seed += 1;
    assert_ne!(a.hash(), b.hash());
    let body = |c: &ExperimentConfig| experiments::compute(c).unwrap()[0].body();
    assert_ne!(body(&a), body(&b));
    assert_eq!(strip_metadata(&body(&a)), body(&a));
}

#[test]
fn qv_info_estimators_agree_within_three_sigma() {
    let cfg = ExperimentConfig::parse(&shipped("qv-info.json")).unwrap();
    let tables = experiments::compute(&cfg).unwrap();
    let mi = tables.iter().find(|t| t.name == "mi.csv").unwrap();
    assert_eq!(mi.rows.len(), 3);
    let summary = tables.iter().find(|t| t.name == "summary.csv").unwrap();
    let z_col = summary.columns.iter().position(|c| c == "z").unwrap();
    for row in &summary.rows {
        match row[z_col] {
            infofilter_cli::table::Cell::Real(z) => assert!(z <= 3.0, "{row:?}"),
            _ => panic!("z is not real"),
        }
    }
}

#[test]
fn suite_rejects_an_unknown_scale() {
    let out = bin().args(["suite", "medium"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn fast_suite_passes_within_two_minutes() {
    let start = std::time::Instant::now();
    let out = bin().args(["suite", "fast"]).output().unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{report}");
    assert_eq!(report.lines().filter(|l| l.starts_with("[PASS]")).count(), 10, "{report}");
    assert!(elapsed < 120.0, "fast suite took {elapsed:.1} s");
}
