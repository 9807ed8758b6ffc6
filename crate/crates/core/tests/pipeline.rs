use brwcap::harness::{
    fit_exponent, read_records, run_experiment, write_report, ExperimentConfig, Mode, Statistic,
    CSV_HEADER,
};

fn cfg(dir: &std::path::Path, name: &str) -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::Vertices,
        dim: 4,
        n_min: 32,
        n_max: 512,
        trials: 3,
        seed: 99,
        out: dir.join(name),
        ..Default::default()
    }
}

/// Drops the wall-clock column.
fn statistic_columns(text: &str) -> Vec<String> {
    let elapsed = CSV_HEADER
        .split(',')
        .position(|c| c == "elapsed_ms")
        .unwrap();
    text.lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| *i != elapsed)
                .map(|(_, c)| c)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = cfg(dir.path(), "a.csv");
    let b = ExperimentConfig {
        threads: 1,
        ..cfg(dir.path(), "b.csv")
    };
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    let ta = std::fs::read_to_string(&a.out).unwrap();
    let tb = std::fs::read_to_string(&b.out).unwrap();
    assert_eq!(statistic_columns(&ta), statistic_columns(&tb));
    assert_eq!(ta.lines().count(), 1 + 5 * 3);
}

#[test]
fn appending_keeps_one_header() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(dir.path(), "r.csv");
    run_experiment(&c).unwrap();
    run_experiment(&ExperimentConfig {
        seed: 100,
        ..c.clone()
    })
    .unwrap();
    let text = std::fs::read_to_string(&c.out).unwrap();
    assert_eq!(text.matches("config_hash").count(), 1);
    assert_eq!(read_records(&c.out).unwrap().len(), 30);
}

#[test]
fn run_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(dir.path(), "r.csv");
    let recs = run_experiment(&c).unwrap();
    assert!(
        recs.iter().all(|r| r.ok() && r.sandwich_holds()),
        "{recs:?}"
    );
    let back = read_records(&c.out).unwrap();
    assert_eq!(back.len(), recs.len());
    for (x, y) in back.iter().zip(&recs) {
        assert_eq!(x.statistics_only(), y.statistics_only());
    }
    let fits: Vec<_> = Statistic::ALL
        .into_iter()
        .filter_map(|s| fit_exponent(&back, s, None, None).ok())
        .collect();
    assert_eq!(fits.len(), Statistic::ALL.len());
    let nv = fits
        .iter()
        .find(|f| f.statistic == Statistic::NumVertices)
        .unwrap();
    assert!((nv.slope - 1.0).abs() < 0.02);
    let out = dir.path().join("report");
    let written = write_report(&back, &fits, &out).unwrap();
    assert_eq!(written.len(), fits.len() + 1);
    let md = std::fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(md.contains("| cap | vertices | 4 |"));
}

#[test]
fn conditioned_records_have_requested_size() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        mode: Mode::Conditioned,
        n_min: 20,
        n_max: 160,
        ..cfg(dir.path(), "c.csv")
    };
    let recs = run_experiment(&c).unwrap();
    assert_eq!(recs.len(), 4 * 3);
    for r in &recs {
        assert_eq!(r.num_vertices, Some(r.n));
        assert_eq!(r.num_subtrees, Some(1));
    }
    // Independent seeds per (n, trial).
    let mut seeds: Vec<u64> = recs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), recs.len());
}
