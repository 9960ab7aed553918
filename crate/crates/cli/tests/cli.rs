//! End-to-end runs of the `relprop` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use relprop::eval::{derive_seed, split_labels, streams, LabelledSize};
use relprop::sbm::{build_block_spec, sample_network};
use relprop::{Classifier, Method, MethodParams, StructureTemplate};
use tempfile::TempDir;

fn relprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = relprop(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn generate(dir: &TempDir, prefix: &str, structure: &str, seed: &str) -> String {
    let p = path(dir, prefix);
    ok(&[
        "generate",
        "--structure",
        structure,
        "--n",
        "300",
        "--ratio",
        "0.1",
        "--seed",
        seed,
        "--out",
        &p,
    ]);
    p
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn generate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = generate(&dir, "a", "cyclic", "4");
    let b = generate(&dir, "b", "cyclic", "4");
    for ext in ["edges", "labels"] {
        assert_eq!(read(format!("{a}.{ext}")), read(format!("{b}.{ext}")));
    }
    let meta: serde_json::Value = serde_json::from_slice(&read(format!("{a}.json"))).unwrap();
    assert_eq!(meta["structure"], "cyclic");
    assert_eq!(meta["directed"], true);
    assert_eq!(meta["groups"].as_array().unwrap().len(), 300);
    let c = generate(&dir, "c", "cyclic", "5");
    assert_ne!(read(format!("{a}.edges")), read(format!("{c}.edges")));
}

#[test]
fn classify_matches_library_run() {
    let dir = TempDir::new().unwrap();
    let p = generate(&dir, "g", "disassortative", "3");
    let pred = path(&dir, "pred.txt");
    let metrics = path(&dir, "metrics.csv");
    let stdout = ok(&[
        "classify",
        "--edges",
        &format!("{p}.edges"),
        "--labels",
        &format!("{p}.labels"),
        "--n",
        "300",
        "--method",
        "lp2",
        "--alpha",
        "0.5",
        "--labelled",
        "0.1",
        "--seed",
        "3",
        "--out",
        &pred,
        "--metrics",
        &metrics,
    ]);
    assert!(stdout.starts_with("accuracy "), "{stdout}");

    let spec = build_block_spec(StructureTemplate::Disassortative, 300, 15.0, 0.1).unwrap();
    let net = sample_network(&spec, derive_seed(3, streams::NETWORK)).unwrap();
    let train = split_labels(
        &net.labels,
        LabelledSize::Fraction(0.1),
        derive_seed(3, streams::SPLIT),
    )
    .unwrap();
    let params = MethodParams {
        alpha: 0.5,
        ..MethodParams::default()
    };
    let f = Classifier::new(&net.graph)
        .run(Method::Lp2, &params, &train)
        .unwrap();
    let (want, conf) = (f.predictions(), f.confidence());

    let text = fs::read_to_string(&pred).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 300);
    for (i, line) in lines.iter().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(parts[0].parse::<usize>().unwrap(), i);
        assert_eq!(parts[1].parse::<usize>().unwrap(), want[i]);
        assert!((parts[2].parse::<f64>().unwrap() - conf[i]).abs() < 1e-12);
    }
    let csv = fs::read_to_string(&metrics).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("NA,NA,lp2,NA,0.5,1,3,30,"));
}

#[test]
fn fully_labelled_input_reports_undefined_accuracy() {
    let dir = TempDir::new().unwrap();
    let p = generate(&dir, "g", "assortative", "1");
    let stdout = ok(&[
        "classify",
        "--edges",
        &format!("{p}.edges"),
        "--labels",
        &format!("{p}.labels"),
        "--n",
        "300",
        "--method",
        "lp1",
        "--labelled",
        "1.0",
        "--seed",
        "1",
        "--out",
        &path(&dir, "pred.txt"),
    ]);
    assert!(
        stdout.contains("no test nodes: accuracy undefined"),
        "{stdout}"
    );
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let p = generate(&dir, "g", "assortative", "1");
    let (edges, labels) = (format!("{p}.edges"), format!("{p}.labels"));
    let out = path(&dir, "o.txt");
    let code = |args: &[&str]| relprop(args).status.code();

    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["--version"]), Some(0));
    assert_eq!(code(&["frobnicate"]), Some(1));
    // a parameter the method does not use
    assert_eq!(
        code(&[
            "classify", "--edges", &edges, "--labels", &labels, "--method", "lp1", "--beta", "2",
            "--out", &out
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "classify",
            "--edges",
            "/nonexistent/edges",
            "--labels",
            &labels,
            "--method",
            "lp1",
            "--out",
            &out
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "classify", "--edges", &edges, "--labels", &labels, "--method", "lp1", "--alpha",
            "1.5", "--out", &out
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "classify",
            "--edges",
            &edges,
            "--labels",
            &labels,
            "--method",
            "lp1",
            "--labelled",
            "0.1",
            "--out",
            &out
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "generate",
            "--structure",
            "assortative",
            "--ratio",
            "1.5",
            "--seed",
            "1",
            "--out",
            &out
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "classify",
            "--edges",
            &edges,
            "--labels",
            &labels,
            "--method",
            "lp1",
            "--out",
            "/nonexistent/dir/p.txt"
        ]),
        Some(2)
    );
}

#[test]
fn crossval_writes_the_chosen_parameters() {
    let dir = TempDir::new().unwrap();
    let p = generate(&dir, "g", "assortative", "2");
    let out = path(&dir, "cv.json");
    ok(&[
        "crossval",
        "--edges",
        &format!("{p}.edges"),
        "--labels",
        &format!("{p}.labels"),
        "--n",
        "300",
        "--method",
        "lp2",
        "--labelled",
        "0.2",
        "--seed",
        "2",
        "--alphas",
        "0.1,0.5",
        "--betas",
        "1,2",
        "--out",
        &out,
    ]);
    let v: serde_json::Value = serde_json::from_slice(&read(&out)).unwrap();
    assert_eq!(v["method"], "lp2");
    assert_eq!(v["labelled"], 60);
    assert_eq!(v["grid"].as_array().unwrap().len(), 4);
    assert!(v["best"]["k"].is_null());
    let best = v["mean_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&best));
    let max = v["grid"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["mean_accuracy"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert_eq!(best, max);
}

#[test]
fn sweep_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = path(&dir, name);
        let stdout = ok(&[
            "sweep",
            "--structures",
            "mixed,heterogeneous",
            "--ratios",
            "0:0.5:0.5",
            "--methods",
            "lp1,cosine-both,linbp",
            "--seeds",
            "2",
            "--n",
            "200",
            "--ks",
            "5,10",
            "--alphas",
            "0.1,0.5",
            "--out",
            &out,
        ]);
        (stdout, read(&out))
    };
    let (summary, a) = run("a.csv");
    let (_, b) = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    // 2 structures x 2 ratios x 3 methods x 2 seeds, 10 precision points each
    assert_eq!(text.lines().count(), 1 + 24 * 10);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(11) == Some("NA")));
    assert_eq!(summary.lines().count(), 1 + 12);
}

#[test]
fn bench_writes_one_row_per_method_and_fraction() {
    let dir = TempDir::new().unwrap();
    let p = generate(&dir, "g", "assortative", "6");
    let out = path(&dir, "t.csv");
    ok(&[
        "bench",
        "--edges",
        &format!("{p}.edges"),
        "--labels",
        &format!("{p}.labels"),
        "--n",
        "300",
        "--methods",
        "lp1,ghost",
        "--labelled",
        "0.05,0.1",
        "--seed",
        "6",
        "--repetitions",
        "3",
        "--out",
        &out,
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("lp1,NA,0.1,NA,15,3,"));
    assert!(lines[2].starts_with("ghost,NA,NA,NA,15,3,"));
    assert!(lines[4].starts_with("ghost,NA,NA,NA,30,3,"));
}
