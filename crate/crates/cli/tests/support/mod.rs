//! Runs the built binary inside a scratch directory holding copies of the
//! example files.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

pub struct Run {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

pub struct Scratch {
    dir: TempDir,
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus")
}

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

impl Scratch {
    /// A directory with `alldiff.pl`, the corpus files and the manifest.
    pub fn new() -> Scratch {
        let dir = tempfile::tempdir().expect("temporary directory");
        for entry in std::fs::read_dir(corpus()).expect("corpus") {
            let p = entry.expect("entry").path();
            std::fs::copy(&p, dir.path().join(p.file_name().expect("file name"))).expect("copy");
        }
        let s = Scratch { dir };
        s.write("alldiff.pl", &std::fs::read_to_string(corpus().join("alldiff_spec.pl")).expect("spec file"));
        s.write("alldifferent.manifest", &golden("alldifferent.manifest"));
        s
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, text: &str) {
        std::fs::write(self.path(name), text).expect("write");
    }

    pub fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).expect("read")
    }

    pub fn run(&self, args: &[&str]) -> Run {
        let out = Command::new(env!("CARGO_BIN_EXE_exemplar"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .expect("the binary runs");
        Run {
            stdout: String::from_utf8(out.stdout).expect("utf-8 output"),
            stderr: String::from_utf8(out.stderr).expect("utf-8 errors"),
            code: out.status.code().expect("exit code"),
        }
    }
}
