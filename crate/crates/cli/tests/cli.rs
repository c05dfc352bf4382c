use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

fn troika() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_troika"));
    cmd.env_remove("TROIKA_JOBS");
    cmd
}

fn scratch(name: &str) -> PathBuf {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!(
        "troika-cli-{}-{}-{name}",
        std::process::id(),
        NEXT.fetch_add(1, Ordering::Relaxed)
    ));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, stem: &str, hr: &str, seed: u64) {
    ok(troika()
        .args(["synth", "--duration-s", "30", "--hr", hr, "--snr-db", "10", "--truth"])
        .args(["--seed", &seed.to_string()])
        .arg("--output")
        .arg(dir.join(format!("{stem}.csv")))
        .output()
        .unwrap());
}

fn run(input: &Path, output: &Path, extra: &[&str]) -> Output {
    troika()
        .arg("run")
        .arg("--input")
        .arg(input)
        .arg("--output")
        .arg(output)
        .args(extra)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constant_rate_run_writes_traces_and_metrics() {
    let dir = scratch("constant");
    let (input, output) = (dir.join("in"), dir.join("out"));
    fs::create_dir_all(&input).unwrap();
    synth(&input, "s1", "75", 1);
    ok(run(&input, &output, &[]));

    let trace = fs::read_to_string(output.join("s1.trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "window_index,t_start_s,bpm_est,bpm_true,abs_err,case,rule1_fired,rule2_fired"
    );
    // 30 s, 8 s windows every 2 s
    assert_eq!(lines.count(), 12);

    let m = json(&output.join("s1.metrics.json"));
    let e1 = m["error1_bpm"].as_f64().unwrap();
    assert!(e1 <= 2.0, "error1 {e1}");
    assert_eq!(m["n_windows"].as_u64(), Some(12));
    assert!(output.join("aggregate.metrics.json").is_file());

    // metrics recomputed from the trace agree with the run
    let out = ok(troika().arg("metrics").arg(output.join("s1.trace.csv")).output().unwrap());
    let again: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((again["error1_bpm"].as_f64().unwrap() - e1).abs() < 1e-3);
}

#[test]
fn output_is_deterministic_across_job_counts() {
    let dir = scratch("determinism");
    let input = dir.join("in");
    fs::create_dir_all(&input).unwrap();
    synth(&input, "a", "70", 1);
    synth(&input, "b", "0:90,30:100", 2);

    ok(run(&input, &dir.join("o1"), &["--jobs", "1"]));
    ok(run(&input, &dir.join("o2"), &["--jobs", "2"]));
    let out = troika()
        .env("TROIKA_JOBS", "2")
        .args(["run", "--jobs", "1", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(dir.join("o3"))
        .output()
        .unwrap();
    ok(out);
    for f in ["a.trace.csv", "b.trace.csv", "a.metrics.json", "aggregate.metrics.json"] {
        let first = fs::read(dir.join("o1").join(f)).unwrap();
        assert_eq!(first, fs::read(dir.join("o2").join(f)).unwrap(), "{f}");
        assert_eq!(first, fs::read(dir.join("o3").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_jobs_env_is_rejected() {
    let dir = scratch("jobs-env");
    synth(&dir, "a", "70", 1);
    let out = troika()
        .env("TROIKA_JOBS", "many")
        .args(["run", "--input"])
        .arg(&dir)
        .arg("--output")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("TROIKA_JOBS"));
}

#[test]
fn empty_input_directory_fails() {
    let dir = scratch("empty");
    let out = run(&dir, &dir.join("out"), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no recording"));
}

#[test]
fn malformed_recording_is_reported_and_others_continue() {
    let dir = scratch("partial");
    let input = dir.join("in");
    fs::create_dir_all(&input).unwrap();
    synth(&input, "good", "80", 3);
    fs::write(input.join("bad.csv"), "ppg,acc_x,acc_y\n1,2,3\n").unwrap();
    let out = run(&input, &dir.join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad"));
    assert!(dir.join("out/good.trace.csv").is_file());
    assert!(!dir.join("out/bad.trace.csv").exists());
}

#[test]
fn sweep_single_value_matches_plain_run() {
    let dir = scratch("sweep");
    let input = dir.join("in");
    fs::create_dir_all(&input).unwrap();
    synth(&input, "s", "0:70,30:85", 4);
    ok(run(&input, &dir.join("out"), &["--delta", "5"]));
    let sweep = dir.join("sweep.csv");
    ok(troika()
        .args(["sweep", "--param", "delta", "--values", "5", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&sweep)
        .output()
        .unwrap());
    let table = fs::read_to_string(&sweep).unwrap();
    let mut rows = table.lines();
    assert_eq!(rows.next(), Some("value,error1_bpm,error2_pct"));
    let row: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(row[0], "5");
    let agg = json(&dir.join("out/aggregate.metrics.json"));
    let plain = agg["error1_bpm"].as_f64().unwrap();
    assert_eq!(row[1], format!("{plain:.4}"));
    assert!(rows.next().is_none());
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let dir = scratch("sweep-bad");
    synth(&dir, "s", "70", 1);
    let out = troika()
        .args(["sweep", "--param", "gamma", "--values", "1,2", "--input"])
        .arg(&dir)
        .arg("--output")
        .arg(dir.join("sweep.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown sweep parameter"));
}

#[test]
fn spectrum_dump_has_one_row_per_physical_bin() {
    let dir = scratch("spectrum");
    synth(&dir, "s", "90", 5);
    let out = ok(troika()
        .args(["spectrum", "--window", "0", "--input"])
        .arg(dir.join("s.csv"))
        .output()
        .unwrap());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin,hz,s"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 4096 / 2 + 1);
    let (peak_hz, _) = rows.iter().cloned().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    assert!((peak_hz * 60.0 - 90.0).abs() < 3.0, "peak at {} BPM", peak_hz * 60.0);
}
