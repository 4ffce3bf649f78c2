#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

pub const TINY_CONFIG: &str = "\
model.d_model = 16
model.n_layers = 1
model.n_heads = 2
model.ff_dim = 32
model.max_len = 16
pretrain.epochs = 2
pretrain.lr = 1e-3
pretrain.batch_size = 16
detect.epochs = 2
detect.lr = 1e-3
detect.batch_size = 16
eval.lime.n_samples = 64
";

/// A scratch run directory with a config file pointing into it.
pub struct Run {
    pub tmp: TempDir,
    pub conf: PathBuf,
}

impl Run {
    pub fn new(extra: &str) -> Run {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        let conf = tmp.path().join("run.conf");
        let text = format!(
            "# test run\noutput_dir = {}\ndata.dataset = {}\ndata.split = {}\n{TINY_CONFIG}{extra}",
            out.display(),
            tmp.path().join("dataset.json").display(),
            tmp.path().join("split.json").display(),
        );
        std::fs::write(&conf, text).unwrap();
        Run { tmp, conf }
    }

    /// Same, with a synthetic corpus already written and ingested.
    pub fn ingested(kind: &str, posts: usize) -> Run {
        let run = Run::new("");
        let data = run.tmp.path().display().to_string();
        run.ok(&["synth", "--kind", kind, "--posts", &posts.to_string(), "--output-dir", &data]);
        run.ok(&["ingest"]);
        run
    }

    pub fn out(&self) -> PathBuf {
        self.tmp.path().join("out")
    }

    pub fn mrp(&self, args: &[&str]) -> Output {
        mrp_in(&self.conf, args)
    }

    pub fn ok(&self, args: &[&str]) -> String {
        let o = self.mrp(args);
        assert!(
            o.status.success(),
            "mrp {args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }
}

pub fn mrp_in(conf: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrp"))
        .arg("--config")
        .arg(conf)
        .args(args)
        .env_remove("MRP_OUTPUT_DIR")
        .output()
        .unwrap()
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every file under `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), read(&p)));
            }
        }
    }
    out.sort();
    out
}
