use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn regdist(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regdist"));
    cmd.args(args).env_remove("REGDIST_OUT");
    if let Some(p) = env_out {
        cmd.env("REGDIST_OUT", p);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_ok(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = regdist(&args, None);
    assert!(o.status.success(), "{sub} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

/// Every file under `dir` except the wall-clock record, with contents.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.json" {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const CANTOR: &str = "seed = 7\n[measure]\nkind = \"cantor\"\ngeneration = 6\n[gen]\naudit_centers = 4\n";

#[test]
fn gen_writes_measure_audit_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cantor.toml", CANTOR);
    let out = tmp.path().join("out");
    run_ok("gen", &cfg, &out, &[]);
    let m = regdist::measure::read_measure(std::io::BufReader::new(fs::File::open(out.join("measure.txt")).unwrap())).unwrap();
    assert_eq!(m.len(), 4096);
    assert!((m.total_mass() - 1.0).abs() < 1e-12);
    let audit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["points"], 4096);
    assert!(audit["audit"]["c_low"].as_f64().unwrap() > 0.0);
    let man = manifest(&out);
    let hash = man["config_hash"].as_str().unwrap();
    let files: Vec<&str> = man["artifacts"].as_array().unwrap().iter().map(|a| a["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["measure.txt", "audit.json"]);
    for a in man["artifacts"].as_array().unwrap() {
        assert_eq!(a["config_hash"].as_str().unwrap(), hash);
        let bytes = fs::read(out.join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), regdist_cli::artifacts::sha256_hex(&bytes));
    }
    assert!(out.join("timing.json").exists());
    assert!(!out.join(".partial").exists());
}

#[test]
fn magic_runs_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "line4d.toml",
        r#"
seed = 5
[measure]
kind = "flat"
n = 4
d = 1.0
extent = 1e9
spacing = 0.02
core = 20.0
[magic]
ladder_points = [[0.0, 0.3, 0.2, 0.1]]
points = [[0.0, 0.0, 0.0, 0.0]]
radii = [0.5, 0.25]
"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok("magic", &cfg, &a, &["--threads", "1"]);
    run_ok("magic", &cfg, &b, &["--threads", "4"]);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.iter().any(|(f, _)| f == "magic.csv"));
    assert_eq!(sa, sb);
}

#[test]
fn flat_ripple_has_vanishing_carleson_sup() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ripple.toml",
        r#"
seed = 11
[measure]
kind = "graph"
n = 2
profile = "sine"
amplitude = 0.0
wavelength = 4.0
extent = 1e9
spacing = 0.01
core = 20.0
[kernel]
expo = 1.0
summation = "tree"
[carleson]
points = [[0.0, 0.0]]
radii = [2.0]
"#,
    );
    let out = tmp.path().join("out");
    run_ok("carleson", &cfg, &out, &[]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("carleson.json")).unwrap()).unwrap();
    let sup = report["sup"].as_f64().unwrap();
    assert!(sup <= 1e-10, "{sup}");
}

#[test]
fn config_errors_list_every_field_and_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        r#"
[measure]
kind = "flat"
n = 2
spacing = -1.0
[kernel]
expo = 1.0
kappa = 0.5
[ntlimit]
count = 3
eta = 1.5
r_max = 1.0
per_scale = 1
"#,
    );
    let out = tmp.path().join("out");
    let o = regdist(&["ntlimit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["seed", "measure.d", "measure.extent", "measure.spacing", "kernel.kappa", "ntlimit.eta", "ntlimit.per_scale"] {
        assert!(err.contains(field), "{field} not reported in:\n{err}");
    }
    assert!(!out.exists());
}

#[test]
fn budget_overrun_exits_3_and_leaves_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cantor.toml", &format!("max_points = 1000\n{CANTOR}"));
    let out = tmp.path().join("out");
    let o = regdist(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn unresolved_flow_start_exits_3_and_keeps_existing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "flow.toml",
        r#"
seed = 2
max_unresolved = 0.0
[measure]
kind = "sphere"
n = 2
radius = 1.0
spacing = 0.01
[kernel]
expo = 1.0
[flow]
starts = [[0.0, 0.0], [1.0, 0.0001]]
"#,
    );
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let o = regdist(&["flow", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, ["keep.txt"]);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cantor.toml", CANTOR);
    let out = tmp.path().join("env-out");
    let o = regdist(&["gen", "--config", cfg.to_str().unwrap()], Some(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("measure.txt").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cantor.toml", CANTOR);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok("gen", &cfg, &a, &[]);
    run_ok("gen", &cfg, &b, &["--seed", "8"]);
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["seed"], 7);
    assert_eq!(mb["seed"], 8);
    assert_ne!(ma["config_hash"], mb["config_hash"]);
}
