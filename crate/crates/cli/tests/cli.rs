use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgscatter_cli::{parse_config, parse_config_str, Manifest};
use kgscatter_core::ChargeProfile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kgscatter"))
}

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[col].parse().unwrap()).collect()
}

const SMALL_SCATTER: &str = r#"
command = "scatter"
[model]
n = 32
l = 12.0
[model.profile]
kind = "double-lens"
amplitude = 1.0
radius = 2.0
[run]
t_end = 1.0
[scatter]
window = [0.2, 1.0]
remainder = true
cauchy_threshold = 1.0
[perturbation]
relative_size = 0.01
spread = 1.5
"#;

#[test]
fn every_criterion_has_a_valid_preset() {
    let mut found = BTreeSet::new();
    for entry in fs::read_dir(presets()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let spec = parse_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        let id: usize = name.trim_start_matches("criterion-").split('-').next().unwrap().parse().unwrap();
        found.insert(id);
        if [5, 6, 7, 9].contains(&id) {
            assert_eq!(spec.model.profile, ChargeProfile::double_lens(1.0, 2.0), "{name}");
        }
    }
    assert_eq!(found, (1..=9).collect());
}

#[test]
fn soliton_preset_conserves_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = presets().join("criterion-1-soliton-fidelity.toml");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = out.join("trajectory.csv");
    let t = csv_column(&csv, "t");
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!((t.last().unwrap() - 5.0).abs() < 1e-12);
    let drift = csv_column(&csv, "energy_drift");
    assert!(drift.iter().all(|d| *d < 1e-6), "{drift:?}");
    let x = csv_column(&csv, "q_x");
    assert!((x.last().unwrap() - (-0.75 + 0.3 * 5.0)).abs() < 1e-4);
}

#[test]
fn manifest_lists_exactly_the_written_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL_SCATTER);
    let out = tmp.path().join("a");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let listed: BTreeSet<String> = m.files.iter().map(|f| f.name.clone()).collect();
    let on_disk: BTreeSet<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .collect();
    assert_eq!(listed, on_disk);
    for want in ["record.json", "decomposition.csv", "outgoing.csv", "summary.json", "config.toml"] {
        assert!(listed.contains(want), "{want}");
    }
    assert_eq!(m.command, "scatter");
    assert_eq!(m.core_version, kgscatter_core::VERSION);
    assert!(m.wraparound.is_some());
    assert_eq!(parse_config_str(&m.config).unwrap(), parse_config(&out.join("config.toml")).unwrap());
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let n = p.file_name().unwrap().to_string_lossy();
            n != "manifest.json" && n != "config.toml"
        })
        .map(|p| (p.file_name().unwrap().to_string_lossy().to_string(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL_SCATTER);
    let cfg = cfg.to_str().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (d, seed) in dirs.iter().zip(["5", "5", "6"]) {
        let o = run(&["scatter", "--config", cfg, "--out", d.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(outputs(&dirs[0]), outputs(&dirs[1]));
    let a = fs::read(dirs[0].join("decomposition.csv")).unwrap();
    let c = fs::read(dirs[2].join("decomposition.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "sim.toml",
        "command = \"simulate\"\nseed = 3\n[model]\nn = 32\nl = 12.0\n[run]\nt_end = 1.0\nsnapshots = [0.5]\n[perturbation]\nrelative_size = 0.01\nspread = 1.5\n",
    );
    let first = tmp.path().join("first");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = first.join(manifest(&first).config_file);
    let second = tmp.path().join("second");
    let o = run(&["run", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = outputs(&first);
    assert!(a.iter().any(|(n, _)| n.ends_with(".bin")));
    assert_eq!(a, outputs(&second));
}

#[test]
fn wiener_check_reports_minimum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("w");
    let o = run(&["wiener-check", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let report: kgscatter_core::WienerReport =
        serde_json::from_str(&fs::read_to_string(out.join("wiener.json")).unwrap()).unwrap();
    let direct = ChargeProfile::default().wiener_check(20.0, 4001, 1e-6).unwrap();
    assert_eq!(report, direct);
    assert!(!report.pass);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    let fast = write(tmp.path(), "v.toml", "command = \"soliton\"\n[soliton]\nv = [1.2, 0.0, 0.0]\n");
    let o = run(&["soliton", "--config", fast.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("superluminal"));

    let bad = write(tmp.path(), "p.toml", "command = \"simulate\"\n[run]\ndt = \"small\"\n");
    let o = run(&["run", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = run(&["run", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));

    let strict = write(tmp.path(), "c.toml", &SMALL_SCATTER.replace("cauchy_threshold = 1.0", "cauchy_threshold = 1e-30"));
    let o = run(&["scatter", "--config", strict.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
}
