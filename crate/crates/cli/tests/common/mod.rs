//! Helpers for driving the `hierbelief` binary from integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierbelief"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs and requires a zero exit status.
pub fn ok(out: &Path, args: &[&str]) -> Output {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} exited with {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

pub fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// Dataset and focal families produced by `synth` and `budget` in `dir`.
pub struct Prepared {
    pub dir: PathBuf,
}

impl Prepared {
    pub fn new(dir: &Path, synth: &[&str]) -> Self {
        let mut args = vec!["synth"];
        args.extend_from_slice(synth);
        ok(dir, &args);
        ok(
            dir,
            &[
                "budget",
                "--embeddings",
                &path(dir, "train_embeddings.txt"),
                "--hierarchy",
                &path(dir, "hierarchy.txt"),
            ],
        );
        Self { dir: dir.to_path_buf() }
    }

    pub fn p(&self, name: &str) -> String {
        path(&self.dir, name)
    }

    pub fn family_args(&self) -> Vec<String> {
        vec![
            "--hierarchy".into(),
            self.p("hierarchy.txt"),
            "--fine-family".into(),
            self.p("fine_family.txt"),
            "--coarse-family".into(),
            self.p("coarse_family.txt"),
        ]
    }

    /// `train --predict` into `out`, with extra arguments appended.
    pub fn train(&self, out: &Path, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec!["train".into(), "--embeddings".into(), self.p("train_embeddings.txt")];
        args.extend(self.family_args());
        args.extend(["--predict".into(), self.p("test_embeddings.txt")]);
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(out, &refs)
    }

    /// `eval` of `out/predictions.txt`, writing into `out`.
    pub fn eval(&self, out: &Path, extra: &[&str]) -> serde_json::Value {
        let mut args: Vec<String> = vec!["eval".into(), "--predictions".into(), path(out, "predictions.txt")];
        args.extend(self.family_args());
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(out, &refs);
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
    }
}

/// Every regular file in `dir`, sorted by name, with its contents.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}
