use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[mobility]
count = 400

[analysis]
r_v = [50.0, 100.0, 150.0]
t_v_min = [30.0, 60.0]
l_max = [3.0]
square_sides = [50.0, 100.0]
min_sample = 50
"#;

fn vloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vloc")).args(args).output().expect("run vloc")
}

fn run_in(out: &Path, config: Option<&Path>, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--out", out.to_str().unwrap()];
    if let Some(c) = config {
        args.extend(["--config", c.to_str().unwrap()]);
    }
    args.extend(extra);
    vloc(&args)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

fn write_config(dir: &TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned())).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(k).unwrap_or("").to_string()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(vloc(&["--help"]).status.code(), Some(0));
    assert_eq!(vloc(&["--version"]).status.code(), Some(0));
    assert_eq!(vloc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vloc(&[]).status.code(), Some(1));
    assert_eq!(vloc(&["ingest", "--threads", "many"]).status.code(), Some(1));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(&dir, "[mobility]\nepsilon = 2.0\n");
    let o = run_in(&out, Some(&cfg), "ingest", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));
    let cfg = write_config(&dir, "[mobility]\nno_such_key = 1\n");
    assert_eq!(run_in(&out, Some(&cfg), "ingest", &[]).status.code(), Some(1));
    let missing = dir.path().join("absent.toml");
    assert_eq!(run_in(&out, Some(&missing), "ingest", &[]).status.code(), Some(1));
    assert!(entries(&out).is_empty());
}

#[test]
fn missing_import_file_exits_2_without_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(&dir, &format!("[dataset]\nsource = \"import\"\npath = \"{}\"\n", dir.path().join("nope.csv").display()));
    let o = run_in(&out, Some(&cfg), "ingest", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(entries(&out).is_empty(), "left behind {:?}", entries(&out));
}

#[test]
fn later_stages_need_earlier_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_in(&out, None, "simulate", &[]).status.code(), Some(3));
    assert_eq!(run_in(&out, None, "analyze", &[]).status.code(), Some(4));
    assert!(entries(&out).iter().all(|e| !e.starts_with(".staging")));
}

#[test]
fn galway_shaped_import_reports_virtual_ratio() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("galway.csv");
    let counts = [("home", 1177), ("work", 644), ("food", 776), ("entertainment", 440), ("others", 655)];
    let mut text = String::from("id,name,lat,lon,category,checkins,website\n");
    let mut k = 0usize;
    for (cat, n) in counts {
        for _ in 0..n {
            let lat = 53.26 + (k % 61) as f64 * 0.0005;
            let lon = -9.07 + (k / 61) as f64 * 0.0005;
            let web = if k < 1455 { format!("https://site{k}.example.ie/") } else { String::new() };
            text.push_str(&format!("g{k},Place {k},{lat:.6},{lon:.6},{cat},{},{web}\n", k % 17));
            k += 1;
        }
    }
    assert_eq!(k, 3692);
    fs::write(&src, text).unwrap();
    let cfg = write_config(&dir, &format!("[dataset]\nname = \"galway\"\nsource = \"import\"\npath = \"{}\"\n", src.display()));
    let out = dir.path().join("out");
    let o = run_in(&out, Some(&cfg), "ingest", &[]);
    ok(&o);
    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    assert_eq!(column(&stats, "place_count"), ["3692"]);
    assert_eq!(column(&stats, "virtual_count"), ["1455"]);
    let ratio: f64 = column(&stats, "virtual_ratio")[0].parse().unwrap();
    assert!((ratio - 0.394).abs() < 5e-4, "{ratio}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("39.4"));
}

#[test]
fn full_pipeline_is_deterministic_and_consistent() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, SMALL);
    let run = |name: &str| {
        let out = dir.path().join(name);
        for cmd in ["ingest", "simulate", "analyze", "report"] {
            ok(&run_in(&out, Some(&cfg), cmd, &["--seed", "7"]));
        }
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["places.csv", "stats.csv", "movements.csv", "paths.jsonl", "path_cdf.csv", "coverage.csv", "occupancy.csv", "powerlaw_fit.csv", "overlap.csv"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(x == y, "{f} differs between runs");
    }
    assert!(entries(&a).iter().all(|e| !e.starts_with(".staging")));

    // Movement counts and CDF totals.
    let movements = fs::read_to_string(a.join("movements.csv")).unwrap();
    let kinds = column(&movements, "kind");
    assert_eq!(kinds.iter().filter(|k| *k == "recurring").count(), 400);
    assert_eq!(kinds.iter().filter(|k| *k == "nonrecurring").count(), 400);
    let paths: Vec<serde_json::Value> = fs::read_to_string(a.join("paths.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let cdf = fs::read_to_string(a.join("path_cdf.csv")).unwrap();
    let mut lengths = std::collections::BTreeMap::<String, Vec<f64>>::new();
    for p in &paths {
        lengths.entry(p["kind"].as_str().unwrap().to_string()).or_default().push(p["length_m"].as_f64().unwrap());
    }
    for (kind, ls) in &lengths {
        let last = cdf.lines().rfind(|l| l.starts_with(&format!("{kind},"))).unwrap();
        assert_eq!(last.rsplit(',').next().unwrap().parse::<usize>().unwrap(), ls.len(), "{kind}");
    }
    assert!(median(lengths["recurring"].clone()) > median(lengths["nonrecurring"].clone()));

    // One overlap row per combination; med_visited non-decreasing in r_v.
    let overlap = fs::read_to_string(a.join("overlap.csv")).unwrap();
    assert_eq!(overlap.lines().count() - 1, 2 * 3 * 2);
    let rows: Vec<Vec<String>> = overlap.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    for kind in ["recurring", "nonrecurring"] {
        for t in ["30", "60"] {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r[1] == kind && r[3] == t)
                .map(|r| r[6].parse().unwrap())
                .collect();
            assert_eq!(vals.len(), 3);
            assert!(vals.windows(2).all(|w| w[1] >= w[0]), "{kind} t {t}: {vals:?}");
        }
    }

    // Manifests carry what is needed to rerun.
    for m in ["ingest_manifest.json", "simulate_manifest.json", "analyze_manifest.json"] {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join(m)).unwrap()).unwrap();
        assert_eq!(v["seed"], 7, "{m}");
        assert_eq!(v["config"]["mobility"]["count"], 400, "{m}");
        assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64, "{m}");
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
        for o in v["outputs"].as_array().unwrap() {
            assert!(a.join(o["file"].as_str().unwrap()).exists(), "{m}: {o}");
        }
    }
    let report = fs::read_to_string(a.join("report.md")).unwrap();
    assert!(report.contains("overlap.csv"));
}

#[test]
fn seed_flag_overrides_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "seed = 3\n");
    let out = dir.path().join("out");
    ok(&run_in(&out, Some(&cfg), "ingest", &[]));
    let first = fs::read(out.join("places.csv")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ingest_manifest.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 3);
    ok(&run_in(&out, Some(&cfg), "ingest", &["--seed", "4"]));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ingest_manifest.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 4);
    assert_ne!(first, fs::read(out.join("places.csv")).unwrap());
}
