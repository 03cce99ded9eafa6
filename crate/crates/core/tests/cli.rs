use std::path::Path;

use ftmkit::cli::{run, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_DATA, EXIT_IO, MANIFEST};

fn cli(args: &[&str]) -> i32 {
    let argv = std::iter::once("ftmkit").chain(args.iter().copied()).map(String::from).collect();
    run(argv)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn summary_median(dir: &Path, estimator: &str) -> f64 {
    let text = std::fs::read_to_string(dir.join("summary.tsv")).unwrap();
    let line = text
        .lines()
        .find(|l| l.split('\t').next() == Some(estimator))
        .unwrap_or_else(|| panic!("no {estimator} row in\n{text}"));
    line.split('\t').nth(3).unwrap().parse().unwrap()
}

#[test]
fn tree_beats_raw_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("train");
    let e = tmp.path().join("eval");
    assert_eq!(
        cli(&["train", "--preset", "indoor-40", "--seed", "3", "--variant", "tree", "--out", p(&t)]),
        0
    );
    let test_file = t.join("test_0_indoor-40.ftm");
    let before = std::fs::read(&test_file).unwrap();
    assert_eq!(
        cli(&["evaluate", "--input", p(&test_file), "--model", p(&t.join("model_tree.ftmm")), "--out", p(&e)]),
        0
    );
    assert_eq!(std::fs::read(&test_file).unwrap(), before, "input mutated");
    assert!(summary_median(&e, "tree") < summary_median(&e, "raw"));
    for f in ["summary.tsv", "ecdf_raw.tsv", "ecdf_tree.tsv", "ecdf_vendor.tsv", "rssi_profile.tsv", MANIFEST] {
        assert!(e.join(f).exists(), "{f} missing");
    }
}

#[test]
fn manifest_lists_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    assert_eq!(cli(&["energy", "--out", p(&out)]), 0);
    let text = std::fs::read_to_string(out.join(MANIFEST)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("#config_sha256\t"));
    assert_eq!(lines[0].len(), "#config_sha256\t".len() + 64);
    assert_eq!(lines[1], "path\tbytes\tsha256");
    assert_eq!(lines.len(), 4);
    let row: Vec<&str> = lines[2].split('\t').collect();
    assert_eq!(row[0], "energy.tsv");
    assert_eq!(row[1].parse::<u64>().unwrap(), std::fs::metadata(out.join("energy.tsv")).unwrap().len());

    // a different argument list gives a different configuration hash
    let other = tmp.path().join("f");
    assert_eq!(cli(&["energy", "--periods", "1h", "--out", p(&other)]), 0);
    let first = |d: &Path| std::fs::read_to_string(d.join(MANIFEST)).unwrap().lines().next().unwrap().to_string();
    assert_ne!(first(&out), first(&other));
}

#[test]
fn failure_classes_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = p(&out);

    assert_eq!(cli(&["simulate", "--preset", "nowhere", "--seed", "1", "--out", o]), EXIT_CONFIG);
    assert_eq!(cli(&["train", "--preset", "indoor-40", "--out", o]), EXIT_CONFIG, "seed is mandatory");
    assert_eq!(cli(&["energy", "--periods", "0.5s", "--out", o]), EXIT_CONFIG);

    let missing = tmp.path().join("missing.ftm");
    assert_eq!(cli(&["ingest", "--input", p(&missing), "--out", o]), EXIT_IO);

    let bad = tmp.path().join("bad.ftm");
    std::fs::write(&bad, "#ftm-dataset,v9\n").unwrap();
    assert_eq!(cli(&["ingest", "--input", p(&bad), "--out", o]), EXIT_DATA);

    let cfg = tmp.path().join("diverge.toml");
    std::fs::write(
        &cfg,
        "seed = 1\n[[sources]]\npreset = \"outdoor-20\"\n\
         [[estimators]]\nvariant = \"nn\"\nparams = { lr = 1e6 }\nspace = {}\n",
    )
    .unwrap();
    assert_eq!(cli(&["train", "--config", p(&cfg), "--out", o]), EXIT_CONVERGENCE);
}

#[test]
fn fit_correction_recovers_preset_map() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    assert_eq!(cli(&["simulate", "--preset", "outdoor-40", "--seed", "2", "--out", p(&sim)]), 0);
    assert_eq!(cli(&["fit-correction", "--input", p(&sim.join("outdoor-40.ftm")), "--out", p(&fit)]), 0);
    let map: ftmkit::correction::PiecewiseLinearMap =
        toml::from_str(&std::fs::read_to_string(fit.join("correction.toml")).unwrap()).unwrap();
    let bps = map.breakpoints();
    assert!((bps[0] - 10.0).abs() < 1.0 && (bps[1] - 124.0).abs() < 1.0, "{bps:?}");
    let slopes: Vec<f64> = map.segments().iter().map(|s| s.slope).collect();
    for (s, t) in slopes.iter().zip([1.0, 0.8, 0.9]) {
        assert!((s - t).abs() < 0.01, "{slopes:?}");
    }
}

#[test]
fn json_export_matches_binary_model() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("t");
    let x = tmp.path().join("x");
    assert_eq!(
        cli(&["train", "--preset", "outdoor-20", "--seed", "4", "--variant", "tree", "--budget", "3", "--out", p(&t)]),
        0
    );
    let model_path = t.join("model_tree.ftmm");
    assert_eq!(cli(&["export-model", "--model", p(&model_path), "--format", "json", "--out", p(&x)]), 0);
    let json: ftmkit::ml::TrainedModel =
        serde_json::from_str(&std::fs::read_to_string(x.join("model_tree.json")).unwrap()).unwrap();
    let bin = ftmkit::ml::read_compact(&model_path).unwrap();
    for (r, s) in [(40.0, -50.0), (80.0, -62.0), (120.0, -70.0)] {
        assert_eq!(json.predict(r, s), bin.predict(r, s));
    }
}
