use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shortfuse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shortfuse"))
        .args(args)
        .current_dir(dir)
        .env("SHORTFUSE_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "\
[data]
source = synth
samples = 120
t = 40
d = 3
seed = 5

[model]
kernel_width = 3
hidden_size = 16

[grid]
learning_rates = 0.002
dropouts = 0, 0.25
embedding_sizes = 16

[protocol]
outer = 2
inner = 1
epochs = 2
";

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = shortfuse(&["gradcheck", "--seed", "7", "--out", "gc"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|l| l.contains("10/10 passed")), "{text}");
    assert!(dir.path().join("gc/gradcheck.txt").exists());
}

#[test]
fn protocol_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = shortfuse(&["protocol", "--config", "c.cfg", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a/report.txt")).unwrap();
    let b = fs::read(dir.path().join("b/report.txt")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    for f in ["resolved.cfg", "iterations.csv", "model_0.ckpt", "model_1.ckpt"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), SMALL).unwrap();
    let o = shortfuse(
        &["protocol", "--config", "c.cfg", "--seed", "9", "--out", "first"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let resolved = fs::read_to_string(dir.path().join("first/resolved.cfg")).unwrap();
    assert!(resolved.contains("seed = 9"), "{resolved}");
    let o = shortfuse(
        &["protocol", "--config", "first/resolved.cfg", "--out", "second"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(dir.path().join("first/report.txt")).unwrap(),
        fs::read(dir.path().join("second/report.txt")).unwrap()
    );
    let second = fs::read_to_string(dir.path().join("second/resolved.cfg")).unwrap();
    let without_out = |s: &str| {
        s.lines()
            .filter(|l| !l.starts_with("out ="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(without_out(&resolved), without_out(&second));
}

#[test]
fn independent_labels_are_not_fused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.cfg"),
        "[data]\nsource = synth\nsamples = 400\nrule = independent\nnoise = 0\n",
    )
    .unwrap();
    let o = shortfuse(&["fusion-test", "--config", "c.cfg", "--out", "f"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("fuse = false"), "{}", stdout(&o));
}

#[test]
fn synth_train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), SMALL).unwrap();
    let o = shortfuse(&["synth", "--config", "c.cfg", "--out", "data"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let files = "[data]\nsource = files\ncovariates = data/covariates.csv\nseries = data/series.csv\n";
    fs::write(dir.path().join("train.cfg"), format!("{files}labels = data/labels.csv\n\n[model]\nkernel_width = 3\nhidden_size = 16\n\n[protocol]\nepochs = 2\n")).unwrap();
    fs::write(dir.path().join("score.cfg"), files).unwrap();
    let before = fs::read(dir.path().join("data/series.csv")).unwrap();

    let o = shortfuse(&["train", "--config", "train.cfg", "--out", "model"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("accuracy = "));

    let o = shortfuse(
        &[
            "predict",
            "--config",
            "score.cfg",
            "--checkpoint",
            "model/model.ckpt",
            "--out",
            "scored",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("accuracy"));
    let predictions = fs::read_to_string(dir.path().join("scored/predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 121);
    assert!(predictions.starts_with("id,predicted,p0,p1\n"));
    assert_eq!(before, fs::read(dir.path().join("data/series.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| shortfuse(args, dir.path()).status.code();
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["gradcheck", "--bogus"]), Some(2));
    assert_eq!(code(&["train", "--config", "missing.cfg"]), Some(3));
    fs::write(dir.path().join("bad.cfg"), "[model]\nfilters = 99\n").unwrap();
    assert_eq!(code(&["train", "--config", "bad.cfg"]), Some(2));
    fs::write(dir.path().join("typo.cfg"), "[model]\nfiltres = 4\n").unwrap();
    assert_eq!(code(&["train", "--config", "typo.cfg"]), Some(2));
    assert_eq!(code(&["gradcheck", "--jobs", "0"]), Some(2));

    fs::write(dir.path().join("cov.csv"), "id,age\na,1\nb,x\n").unwrap();
    fs::write(dir.path().join("ser.csv"), "id,sequence,t0\na,s,1\nb,s,2\n").unwrap();
    fs::write(dir.path().join("lab.csv"), "id,label\na,0\nb,1\n").unwrap();
    fs::write(
        dir.path().join("files.cfg"),
        "[data]\nsource = files\ncovariates = cov.csv\nseries = ser.csv\nlabels = lab.csv\n",
    )
    .unwrap();
    let o = shortfuse(&["train", "--config", "files.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cov.csv"));

    let o = Command::new(env!("CARGO_BIN_EXE_shortfuse"))
        .args(["gradcheck", "--runs", "1"])
        .current_dir(dir.path())
        .env("SHORTFUSE_LOG", "loud")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
