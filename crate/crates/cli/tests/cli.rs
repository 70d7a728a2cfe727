use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn otflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = otflow(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "\
[data]
n = 128
[model]
hidden = 8
blocks = 1
time_features = 4
[train]
steps = 20
batch_size = 32
[sample]
n = 4
";

/// Data rows (after the preamble and header).
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# otflow "));
    lines.next().unwrap();
    lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn config_errors_exit_2_with_line_number() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.ini", "[train]\nsteps = 3\nstepz = 4\n");
    let out = otflow(&[
        "train",
        "--config",
        p(&cfg),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let cfg = write_config(tmp.path(), "bad2.ini", "[model]\nhidden = many\n");
    let out = otflow(&["train", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = otflow(&["train", "--config", p(&tmp.path().join("missing.ini"))]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn single_step_writes_one_trace_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.ini", SMALL);
    let out = tmp.path().join("run");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--steps",
        "1",
        "--out",
        p(&out),
    ]);
    let r = rows(&out.join("loss.csv"));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][0], "0");
    assert!(r[0][1].parse::<f64>().unwrap().is_finite());
    assert!(out.join("checkpoint.json").exists());
    assert!(out.join("config.ini").exists());
}

#[test]
fn loom_cost_column_never_increases() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.ini", SMALL);
    let out = tmp.path().join("loom");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--coupling",
        "loom",
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(out.join("loss.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with("coupling_cost"));
    let costs: Vec<f64> = rows(&out.join("loss.csv"))
        .iter()
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(costs.len(), 20);
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn resume_with_zero_steps_keeps_model() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.ini", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--coupling",
        "loom",
        "--out",
        p(&a),
    ]);
    let ck = a.join("checkpoint.json");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--coupling",
        "loom",
        "--resume",
        p(&ck),
        "--steps",
        "0",
        "--out",
        p(&b),
    ]);
    let load = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join("checkpoint.json")).unwrap()).unwrap()
    };
    let (ja, jb) = (load(&a), load(&b));
    for key in ["params", "power", "coupling", "arch"] {
        assert_eq!(ja[key], jb[key], "{key}");
    }
    assert!(rows(&b.join("loss.csv")).is_empty());
}

#[test]
fn checkpoint_rewrite_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.ini", SMALL);
    let a = tmp.path().join("a");
    let read = |f: &str| fs::read(a.join(f)).unwrap();
    ok(&["train", "--config", p(&cfg), "--out", p(&a)]);
    let (ck, loss) = (read("checkpoint.json"), read("loss.csv"));
    ok(&["train", "--config", p(&cfg), "--out", p(&a)]);
    assert_eq!(ck, read("checkpoint.json"));
    assert_eq!(loss, read("loss.csv"));
}

#[test]
fn sampling_reports_function_evaluations() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.ini", SMALL);
    let nfm = tmp.path().join("nfm");
    ok(&["train", "--config", p(&cfg), "--out", p(&nfm)]);
    let ck = nfm.join("checkpoint.json");

    let s0 = tmp.path().join("s0");
    ok(&[
        "sample",
        "--checkpoint",
        p(&ck),
        "--n",
        "0",
        "--out",
        p(&s0),
    ]);
    let text = fs::read_to_string(s0.join("samples.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().next().unwrap().contains("nfe=1"));

    let s1 = tmp.path().join("s1");
    ok(&[
        "sample",
        "--checkpoint",
        p(&ck),
        "--n",
        "7",
        "--nfe",
        "50",
        "--out",
        p(&s1),
    ]);
    let text = fs::read_to_string(s1.join("samples.csv")).unwrap();
    assert!(text.lines().next().unwrap().contains("nfe=1"));
    assert_eq!(rows(&s1.join("samples.csv")).len(), 7);

    let cfm_cfg = write_config(
        tmp.path(),
        "cfm.ini",
        &format!("{SMALL}[model]\nmethod = cfm\n[train]\ncoupling = perbatch\n"),
    );
    let cfm = tmp.path().join("cfm");
    ok(&["train", "--config", p(&cfm_cfg), "--out", p(&cfm)]);
    let s2 = tmp.path().join("s2");
    ok(&[
        "sample",
        "--checkpoint",
        p(&cfm.join("checkpoint.json")),
        "--n",
        "5",
        "--nfe",
        "100",
        "--out",
        p(&s2),
    ]);
    let text = fs::read_to_string(s2.join("samples.csv")).unwrap();
    assert!(text.lines().next().unwrap().contains("nfe=100"));
    assert_eq!(rows(&s2.join("samples.csv")).len(), 5);
}

#[test]
fn trajectories_start_at_the_source() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.ini", SMALL);
    let run = tmp.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&run)]);
    let ck = run.join("checkpoint.json");
    let t = tmp.path().join("t");
    ok(&[
        "trajectories",
        "--checkpoint",
        p(&ck),
        "--n",
        "6",
        "--out",
        p(&t),
    ]);
    let r = rows(&t.join("trajectories.csv"));
    assert_eq!(r.len(), 6 * 11);
    let s = tmp.path().join("s");
    ok(&["sample", "--checkpoint", p(&ck), "--n", "6", "--out", p(&s)]);
    let src = rows(&s.join("samples.csv"));
    for (i, chunk) in r.chunks(11).enumerate() {
        assert!(chunk.iter().all(|row| row[0] == i.to_string()));
        assert_eq!(chunk[0][1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(chunk[10][1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(chunk[0][2], src[i][0]);
        assert_eq!(chunk[0][3], src[i][1]);
        let (x, y): (f64, f64) = (chunk[10][2].parse().unwrap(), chunk[10][3].parse().unwrap());
        let (gx, gy): (f64, f64) = (src[i][2].parse().unwrap(), src[i][3].parse().unwrap());
        assert!((x - gx).abs() < 1e-12 && (y - gy).abs() < 1e-12);
    }
}

#[test]
fn velocity_trajectories_need_euler_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cfm.ini",
        &format!("{SMALL}[model]\nmethod = cfm\n"),
    );
    let run = tmp.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&run)]);
    let ck = run.join("checkpoint.json");
    let out = otflow(&[
        "trajectories",
        "--checkpoint",
        p(&ck),
        "--out",
        p(&tmp.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let t = tmp.path().join("t2");
    ok(&[
        "trajectories",
        "--checkpoint",
        p(&ck),
        "--n",
        "3",
        "--euler",
        "--out",
        p(&t),
    ]);
    assert_eq!(rows(&t.join("trajectories.csv")).len(), 33);
}

#[test]
fn benchmark_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "b.ini",
        &format!("{SMALL}[benchmark]\nmethods = otnfm\nseeds = 3\nn_eval = 64\n"),
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["benchmark", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["benchmark", "--config", p(&cfg), "--out", p(&b)]);
    let ca = fs::read(a.join("benchmark.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("benchmark.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("benchmark.json")).unwrap(),
        fs::read(b.join("benchmark.json")).unwrap()
    );
    let r = rows(&a.join("benchmark.csv"));
    assert_eq!(r.len(), 2);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("benchmark.json")).unwrap()).unwrap();
    assert!(json[0].get("wallclock_s").is_none());
    assert!(json[0]["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn trajectory_ablation_writes_every_variant() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.ini",
        &format!("{SMALL}[benchmark]\nn_eval = 64\n"),
    );
    let out = tmp.path().join("abl");
    ok(&[
        "ablate",
        "trajectory",
        "--config",
        p(&cfg),
        "--out",
        p(&out),
    ]);
    for v in ["linear", "cosine", "poly-2", "stoch-0.5"] {
        assert!(out.join(v).join("checkpoint.json").exists(), "{v}");
    }
    let r = rows(&out.join("summary.csv"));
    for v in ["linear", "cosine", "poly-2", "stoch-0.5"] {
        assert!(r.iter().any(|row| row[0] == v && row[1] == "w2sq"));
        assert!(r
            .iter()
            .any(|row| row[0] == v && row[1] == "time_variation"));
    }
    assert!(r.iter().all(|row| row[1] != "error"));
}

#[test]
fn selftest_passes() {
    let out = ok(&["selftest"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5);
    assert!(!out.contains("FAIL"));
}
