use std::process::Command;

fn brwcap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brwcap"))
}

#[test]
fn selftest_passes() {
    let out = brwcap().arg("selftest").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn run_fit_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    std::fs::write(
        &conf,
        "# small run\nmode = vertices\ndim = 3\ntrials = 4\nn-min = 32\nn-max = 256\n",
    )
    .unwrap();
    let csv = dir.path().join("r.csv");
    let out = brwcap()
        .args(["run", "--config"])
        .arg(&conf)
        .args([
            "--trials",
            "2",
            "--seed",
            "5",
            "--set",
            "mc-walkers=32",
            "--out",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    // Flag beats file: 2 trials × 4 grid points.
    assert_eq!(text.lines().count(), 1 + 8);

    let fits = dir.path().join("fits.json");
    let out = brwcap()
        .args(["fit", "--in"])
        .arg(&csv)
        .args(["--stat", "all", "--out"])
        .arg(&fits)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fits).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 9);

    let rep = dir.path().join("rep");
    let out = brwcap()
        .args(["report", "--in"])
        .arg(&csv)
        .arg("--fits")
        .arg(&fits)
        .arg("--out-dir")
        .arg(&rep)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(rep.join("summary.md").exists());
    assert!(rep.join("cap_vertices_d3.svg").exists());
}

#[test]
fn fit_needs_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = brwcap()
        .args([
            "run",
            "--n-min",
            "64",
            "--n-max",
            "128",
            "--trials",
            "1",
            "--no-capacity",
            "--out",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = brwcap()
        .args(["fit", "--in"])
        .arg(&csv)
        .args(["--stat", "range_size", "--out"])
        .arg(dir.path().join("f.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3"));
}

#[test]
fn capacity_of_a_point_file() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("p.csv");
    std::fs::write(&pts, "x1,x2,x3\n0,0,0\n").unwrap();
    let out = brwcap()
        .args(["cap", "--points"])
        .arg(&pts)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["method"], "exact-solve");
    // 1 / G(0) for the lazy walk, G(0) = 2 · 1.516386...
    assert!((v["value"].as_f64().unwrap() - 1.0 / (2.0 * 1.516_386_059_151_978)).abs() < 1e-9);
}

#[test]
fn bad_input_is_reported() {
    let out = brwcap()
        .args(["run", "--mode", "sideways"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));
}
