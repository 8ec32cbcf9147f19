use std::path::Path;
use std::process::{Command, Output};

fn gaitlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn out_arg(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn generate_and_preprocess_clip() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    let o = gaitlab(&["--out", &out_arg(&gen), "generate-clip", "--cycles", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let clip = gen.join("clip.csv");
    assert!(clip.exists());

    let pre = tmp.path().join("pre");
    let o = gaitlab(&["--out", &out_arg(&pre), "preprocess", "--input", &out_arg(&clip), "--mirror"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = gaitlab_core::refmotion::io::read_clip(&clip).unwrap();
    let b = gaitlab_core::refmotion::io::read_clip(&pre.join("clip.csv")).unwrap();
    assert_eq!(b.len(), 2 * a.len());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(tmp.path());
    let o = gaitlab(&["--out", &out, "train", "--phase", "exo-finetune"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gaitlab(&["--out", &out, "train", "--phase", "sprint"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[env]\ncontrol_rate = -1.0\n").unwrap();
    let o = gaitlab(&["--config", &out_arg(&cfg), "--out", &out, "train", "--steps", "10"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&cfg, "[trainer]\nbogus = 1\n").unwrap();
    let o = gaitlab(&["--config", &out_arg(&cfg), "--out", &out, "train", "--steps", "10"]);
    assert_eq!(o.status.code(), Some(2));

    let o = gaitlab(&["--preset", "huge", "report", "--traces", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(&tmp.path().join("r"));
    let missing = out_arg(&tmp.path().join("missing.json"));
    let o = gaitlab(&["--out", &out, "report", "--traces", &missing]);
    assert_eq!(o.status.code(), Some(3));

    let empty = tmp.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let o = gaitlab(&["--out", &out, "report", "--traces", &out_arg(&empty)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!tmp.path().join("r").join("report.json").exists());
}
