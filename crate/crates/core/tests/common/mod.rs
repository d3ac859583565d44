#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_pet-router");

pub fn bundle_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bundle")
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// A private copy of the replay bundle.
pub fn bundle_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&bundle_dir(), dir.path());
    dir
}

pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

/// Runs `args` with the bundle manifest and panics with stderr on failure.
pub fn run_ok(dir: &Path, args: &[&str]) -> String {
    let mut full = vec!["--config", "config.toml"];
    full.extend_from_slice(args);
    let out = run_cli(dir, &full);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every regular file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}

/// One hand-analysed snippet: LOC, cyclomatic, cognitive and the Halstead
/// counts (distinct operators, distinct operands, total operators, total operands).
pub struct Golden {
    pub source: &'static str,
    pub loc: usize,
    pub cyclomatic: usize,
    pub cognitive: usize,
    pub halstead: (usize, usize, usize, usize),
}

impl Golden {
    pub fn volume(&self) -> f64 {
        let (h1, h2, n1, n2) = self.halstead;
        (n1 + n2) as f64 * ((h1 + h2) as f64).log2()
    }

    pub fn maintainability(&self) -> f64 {
        let raw = 171.0 - 5.2 * self.volume().ln() - 0.23 * self.cyclomatic as f64 - 16.2 * (self.loc as f64).ln();
        (raw * 100.0 / 171.0).clamp(0.0, 100.0)
    }
}

pub const GOLDEN: &[Golden] = &[
    Golden { source: "a = b + c\n", loc: 1, cyclomatic: 1, cognitive: 0, halstead: (2, 3, 2, 3) },
    Golden { source: "def f(x):\n    return x + 1\n", loc: 2, cyclomatic: 1, cognitive: 0, halstead: (5, 3, 5, 4) },
    Golden {
        source: "if x > 0:\n    y = 1\nelse:\n    y = 2\n",
        loc: 4,
        cyclomatic: 2,
        cognitive: 2,
        halstead: (5, 5, 7, 6),
    },
    Golden {
        source: "for i in range(10):\n    if i % 2 == 0:\n        print(i)\n",
        loc: 3,
        cyclomatic: 3,
        cognitive: 3,
        halstead: (7, 6, 9, 8),
    },
    Golden {
        source: "def g(a, b):\n    if a and b:\n        return 1\n    elif a or b:\n        return 2\n    return 0\n",
        loc: 6,
        cyclomatic: 5,
        cognitive: 4,
        halstead: (9, 6, 13, 10),
    },
    Golden { source: "while n > 1:\n    n = n // 2\n", loc: 2, cyclomatic: 2, cognitive: 1, halstead: (5, 3, 5, 5) },
    Golden {
        source: "try:\n    x = int(s)\nexcept ValueError:\n    x = 0\n",
        loc: 4,
        cyclomatic: 2,
        cognitive: 1,
        halstead: (5, 5, 7, 6),
    },
    Golden { source: "y = a if c else b\n", loc: 1, cyclomatic: 2, cognitive: 1, halstead: (3, 4, 3, 4) },
    Golden {
        source: "squares = [x * x for x in xs if x > 0]\n",
        loc: 1,
        cyclomatic: 2,
        cognitive: 0,
        halstead: (7, 4, 7, 7),
    },
    Golden {
        source: "def h(m):\n    for row in m:\n        for v in row:\n            if v:\n                return v\n    return None\n",
        loc: 6,
        cyclomatic: 4,
        cognitive: 6,
        halstead: (7, 5, 13, 9),
    },
    Golden {
        source: "# header\n\nname = 'a b'  # trailing\nprint(name)\n",
        loc: 2,
        cyclomatic: 1,
        cognitive: 0,
        halstead: (2, 3, 2, 4),
    },
    Golden {
        source: "with open(p) as fh:\n    data = fh.read()\n",
        loc: 2,
        cyclomatic: 1,
        cognitive: 0,
        halstead: (6, 5, 7, 6),
    },
    Golden { source: "if a and b or c:\n    pass\n", loc: 2, cyclomatic: 4, cognitive: 3, halstead: (5, 3, 5, 3) },
];
