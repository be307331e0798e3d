use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depthsight"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn depthsight")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_flag() {
    let o = run(&["--version"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn bundled_pipeline_writes_stamped_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("pipeline.json");
    let o = run(&[
        "--threads",
        "2",
        "run",
        "--config",
        path(&cfg),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = std::fs::read_to_string(out.join("report/sequences.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with(&format!("# depthsight {}", env!("CARGO_PKG_VERSION"))));
    assert!(header.contains("config_hash=") && header.contains("seed=7"));
    let report = std::fs::read_to_string(out.join("report/report.json")).unwrap();
    assert!(report.contains("\"config_hash\""));
    assert!(out.join("dataset/frames/0000.pfm").exists());
}

#[test]
fn stages_compose_and_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = configs().join("approach.json");
    let reports: Vec<Vec<u8>> = ["1", "4"]
        .iter()
        .map(|threads| {
            let ds = d.join(format!("ds{threads}"));
            let dets = d.join(format!("det{threads}.jsonl"));
            let loc = d.join(format!("loc{threads}.jsonl"));
            let rep = d.join(format!("rep{threads}"));
            let gt = ds.join("annotations.jsonl");
            let steps: [Vec<&str>; 4] = [
                vec!["synth", "--spec", path(&spec), "--out", path(&ds)],
                vec!["detect", "--in", path(&ds), "--out", path(&dets)],
                vec![
                    "localize",
                    "--in",
                    path(&ds),
                    "--detections",
                    path(&dets),
                    "--method",
                    "medianq1",
                    "--out",
                    path(&loc),
                ],
                vec![
                    "eval",
                    "--gt",
                    path(&gt),
                    "--detections",
                    path(&loc),
                    "--out",
                    path(&rep),
                ],
            ];
            for args in steps {
                let mut full = vec!["--threads", threads];
                full.extend(args);
                let o = run(&full);
                assert!(o.status.success(), "{full:?}: {}", stderr(&o));
            }
            std::fs::read(rep.join("sequences.csv")).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn missing_rig_is_a_config_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let spec = configs().join("approach.json");
    assert!(run(&["synth", "--spec", path(&spec), "--out", path(&ds)])
        .status
        .success());
    let missing = tmp.path().join("nowhere/rig.json");
    let dets = tmp.path().join("d.jsonl");
    std::fs::write(&dets, "").unwrap();
    let o = run(&[
        "localize",
        "--in",
        path(&ds),
        "--detections",
        path(&dets),
        "--rig",
        path(&missing),
        "--out",
        path(&tmp.path().join("l.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(path(&missing)), "{}", stderr(&o));
}

#[test]
fn malformed_detections_are_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let spec = configs().join("approach.json");
    assert!(run(&["synth", "--spec", path(&spec), "--out", path(&ds)])
        .status
        .success());
    let dets = tmp.path().join("d.jsonl");
    std::fs::write(
        &dets,
        "{\"frame_id\":0,\"boxes\":[{\"x\":1,\"y\":1,\"w\":-3,\"h\":2,\"conf\":0.9}]}\n",
    )
    .unwrap();
    let o = run(&[
        "localize",
        "--in",
        path(&ds),
        "--detections",
        path(&dets),
        "--out",
        path(&tmp.path().join("l.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn convert_round_trip_and_unknown_format() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let spec = configs().join("approach.json");
    assert!(run(&["synth", "--spec", path(&spec), "--out", path(&ds)])
        .status
        .success());
    let pfm = ds.join("frames/0003.pfm");
    for ext in ["pgm", "png"] {
        let img = tmp.path().join(format!("q.{ext}"));
        let back = tmp.path().join(format!("back_{ext}.pfm"));
        assert!(run(&["convert", "--in", path(&pfm), "--out", path(&img)])
            .status
            .success());
        assert!(tmp.path().join(format!("q.{ext}.json")).exists());
        let o = run(&["convert", "--in", path(&img), "--out", path(&back)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let a = depthsight::io::read_pfm(&pfm).unwrap();
        let b = depthsight::io::read_pfm(&back).unwrap();
        let step = depthsight::QuantizationSpec::default().step();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.is_nan(), y.is_nan());
            if !x.is_nan() {
                assert!((x.clamp(0.5, 20.0) - y).abs() <= step + 1e-6);
            }
        }
    }
    let o = run(&[
        "convert",
        "--in",
        path(&pfm),
        "--out",
        path(&tmp.path().join("x.tiff")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("x.tiff"), "{}", stderr(&o));
}
