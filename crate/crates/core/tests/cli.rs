//! End-to-end runs of the `casework` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use casework::data::Intervention;
use casework::synthgen::{DiscretionConfig, GeneratorConfig, PlantedRule, RuleCondition};
use casework::tree::DecisionTree;
use serde_json::{json, Value};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casework"))
        .args(args)
        .output()
        .expect("spawn casework")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "casework {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Writes a generator config of `n` households plus a run config pointing
/// at it, and returns the run config path.
fn small_run(dir: &Path, gen: GeneratorConfig, pipeline: Value) -> PathBuf {
    write_json(&dir.join("gen.json"), &gen);
    let run = dir.join("run.json");
    write_json(&run, &json!({ "generator": "gen.json", "pipeline": pipeline }));
    run
}

fn bench_gen(n: usize) -> GeneratorConfig {
    let mut gen = GeneratorConfig::load(configs().join("bench_gen.json")).unwrap();
    gen.n = n;
    gen
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    let rows: Vec<Vec<String>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    // tolerate a header row and a leading label column
    let numeric = |s: &str| s.parse::<f64>().ok();
    rows.iter()
        .filter(|r| r.iter().skip(1).all(|c| numeric(c).is_some()))
        .map(|r| {
            let start = usize::from(numeric(&r[0]).is_none());
            r[start..].iter().map(|c| numeric(c).unwrap()).collect()
        })
        .collect()
}

fn assert_svg(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let t = text.trim();
    assert!(t.starts_with("<svg") && t.ends_with("</svg>"), "{}", path.display());
}

#[test]
fn gen_writes_data_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("gen.json");
    write_json(&cfg, &bench_gen(400));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = ok(&["gen", "--config", path(&cfg), "--out", path(&a)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("generated 400 households"));
    ok(&["gen", "--config", path(&cfg), "--out", path(&b)]);
    for f in ["households.csv", "ground_truth.csv"] {
        assert!(a.join(f).is_file());
    }
    let households = fs::read_to_string(a.join("households.csv")).unwrap();
    assert_eq!(households.lines().count(), 401);
    assert_eq!(manifest(&a), manifest(&b));
    assert_eq!(manifest(&a)["files"].as_array().unwrap().len(), 2);

    let c = tmp.path().join("c");
    ok(&["gen", "--config", path(&cfg), "--seed", "7", "--out", path(&c)]);
    assert_eq!(manifest(&c)["seed"], 7);
    assert_ne!(manifest(&a)["files"], manifest(&c)["files"]);
}

#[test]
fn missing_config_exits_with_config_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    for cmd in ["gen", "train", "consistency", "discretion"] {
        let out = run(&[cmd, "--config", path(&missing), "--out", path(tmp.path())]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"), "{cmd}");
    }
}

#[test]
fn invalid_generator_config_exits_with_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut gen = bench_gen(100);
    gen.discretion.rate = 1.5;
    let cfg = tmp.path().join("gen.json");
    write_json(&cfg, &gen);
    let out = run(&["gen", "--config", path(&cfg), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));

    let run_cfg = tmp.path().join("run.json");
    write_json(&run_cfg, &json!({ "generator": "gen.json", "data": "x.csv" }));
    let out = run(&["train", "--config", path(&run_cfg), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));

    write_json(&run_cfg, &json!({ "generator": "gen.json", "unknown": 1 }));
    let out = run(&["train", "--config", path(&run_cfg), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_data_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("gen.json");
    write_json(&cfg, &bench_gen(200));
    let data = tmp.path().join("data");
    ok(&["gen", "--config", path(&cfg), "--out", path(&data)]);
    let csv_path = data.join("households.csv");
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[5] = lines[5].replacen(',', ",not-a-number,", 1);
    fs::write(&csv_path, lines.join("\n")).unwrap();

    let run_cfg = tmp.path().join("run.json");
    write_json(&run_cfg, &json!({ "data": "data/households.csv" }));
    let out = run(&["train", "--config", path(&run_cfg), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_reports_twelve_aucs_and_respects_depth() {
    let tmp = TempDir::new().unwrap();
    let run_cfg = small_run(
        tmp.path(),
        bench_gen(2000),
        json!({ "seed": 5, "n_replicates": 3 }),
    );
    let out_dir = tmp.path().join("out");
    let stdout = ok(&["train", "--config", path(&run_cfg), "--depth", "3", "--out", path(&out_dir)]).stdout;
    assert!(!stdout.is_empty());

    let mut rdr = csv::Reader::from_path(out_dir.join("auc_table.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 12);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("{name}"));
    let (model, target, auc) = (col("model"), col("intervention"), col("mean_auc"));
    let boosted = |code: &str| -> f64 {
        rows.iter()
            .find(|r| r[target] == *code && r[model].to_lowercase().contains("boost"))
            .unwrap()[auc]
            .parse()
            .unwrap()
    };
    let prev = boosted("Prev");
    for k in [Intervention::Es, Intervention::Th, Intervention::Rrh] {
        assert!(prev > boosted(k.code()), "Prev {prev} vs {k}");
    }

    for k in Intervention::ALL {
        for r in 0..3 {
            let json = fs::read_to_string(out_dir.join(format!("models/short_{}_{r}.json", k.code()))).unwrap();
            let tree = DecisionTree::from_json(&json).unwrap();
            assert!(tree.depth() <= 3, "{k} replicate {r} depth {}", tree.depth());
        }
        assert!(out_dir.join(format!("models/cart_{}.json", k.code())).is_file());
        assert!(out_dir.join(format!("models/boosted_{}.json", k.code())).is_file());
        assert!(out_dir.join(format!("rules_{}.txt", k.code())).is_file());
        assert!(out_dir.join(format!("grid_{}.json", k.code())).is_file());
        assert_svg(&out_dir.join(format!("roc_{}.svg", k.code())));
    }
    let files = manifest(&out_dir)["files"].as_array().unwrap().len();
    assert_eq!(files, 2 + 4 * (3 + 5));
}

#[test]
fn consistency_matrix_is_symmetric_with_unit_diagonal() {
    let tmp = TempDir::new().unwrap();
    let run_cfg = small_run(tmp.path(), bench_gen(1500), json!({ "n_replicates": 10 }));
    let out_dir = tmp.path().join("out");
    ok(&["consistency", "--config", path(&run_cfg), "--out", path(&out_dir)]);
    for k in Intervention::ALL {
        let m = read_matrix(&out_dir.join(format!("consistency_{}.csv", k.code())));
        assert_eq!(m.len(), 10, "{k}");
        for i in 0..10 {
            assert_eq!(m[i].len(), 10);
            assert!((m[i][i] - 1.0).abs() < 1e-12);
            for j in 0..10 {
                assert!((m[i][j] - m[j][i]).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(&m[i][j]));
            }
        }
    }
    assert!(out_dir.join("consistency.txt").is_file());
    assert!(out_dir.join("consistency.json").is_file());
}

#[test]
fn single_replicate_consistency_warns() {
    let tmp = TempDir::new().unwrap();
    let run_cfg = small_run(tmp.path(), bench_gen(800), json!({ "n_replicates": 1 }));
    let out_dir = tmp.path().join("out");
    let out = ok(&["consistency", "--config", path(&run_cfg), "--out", path(&out_dir)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let m = read_matrix(&out_dir.join("consistency_ES.csv"));
    assert_eq!(m, vec![vec![1.0]]);
}

#[test]
fn discretion_writes_report_and_null_histograms() {
    let tmp = TempDir::new().unwrap();
    let run_cfg = small_run(tmp.path(), bench_gen(3000), json!({ "n_resamples": 200 }));
    let out_dir = tmp.path().join("out");
    ok(&["discretion", "--config", path(&run_cfg), "--full-data", "--out", path(&out_dir)]);
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("discretion.json")).unwrap()).unwrap();
    assert!(!report["tests"].is_null());
    let mut histograms = 0;
    for entry in fs::read_dir(&out_dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        if name.starts_with("null_") {
            assert!(name.ends_with(".svg"));
            assert_svg(&p);
            let text = fs::read_to_string(&p).unwrap();
            assert!(text.contains("class=\"observed\"") && text.contains("class=\"bar\""), "{name}");
            histograms += 1;
        }
    }
    assert_eq!(histograms, 4);
    assert!(fs::read_to_string(out_dir.join("discretion.txt")).unwrap().contains("EStoTH"));
}

#[test]
fn test_split_crosstab_covers_only_held_out_rows() {
    let tmp = TempDir::new().unwrap();
    let n = 2000;
    let run_cfg = small_run(
        tmp.path(),
        bench_gen(n),
        json!({ "n_resamples": 100, "split_ratio": 0.7 }),
    );
    let out_dir = tmp.path().join("out");
    ok(&["discretion", "--config", path(&run_cfg), "--test-split", "--out", path(&out_dir)]);
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("discretion.json")).unwrap()).unwrap();
    let total: u64 = report["crosstab"]["counts"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap())
        .map(|c| c.as_u64().unwrap())
        .sum();
    assert_eq!(total as usize, n - (n as f64 * 0.7).round() as usize);
}

fn is(feature: &str, level: &str) -> RuleCondition {
    RuleCondition::Is {
        feature: feature.into(),
        level: level.into(),
    }
}

fn rule(name: &str, conditions: Vec<RuleCondition>, intervention: Intervention) -> PlantedRule {
    PlantedRule {
        name: name.into(),
        conditions,
        intervention,
        probability: 1.0,
    }
}

#[test]
fn no_discretion_reports_empty_subgroups() {
    let tmp = TempDir::new().unwrap();
    let mut gen = bench_gen(1500);
    gen.label_shares = None;
    gen.coefficients.clear();
    gen.discretion = DiscretionConfig {
        rate: 0.0,
        ..DiscretionConfig::default()
    };
    gen.planted_rules = vec![
        rule(
            "prev_owner",
            vec![is("PriorResidence", "Owned by client, no ongoing housing subsidy")],
            Intervention::Prev,
        ),
        rule("rrh_dv", vec![is("DomesticViolenceSurvivor", "Yes")], Intervention::Rrh),
        rule("th_male", vec![is("Gender", "Male")], Intervention::Th),
        rule("es_female", vec![is("Gender", "Female")], Intervention::Es),
    ];
    let run_cfg = small_run(tmp.path(), gen, json!({ "n_resamples": 100 }));
    let out_dir = tmp.path().join("out");
    let out = ok(&["discretion", "--config", path(&run_cfg), "--out", path(&out_dir)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("no discretionary records"), "{stdout}");
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("discretion.json")).unwrap()).unwrap();
    assert!(report["tests"].is_null());
}
