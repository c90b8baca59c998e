#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

static BUILD_LOCK: Mutex<()> = Mutex::new(());

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn fixture_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("plugins");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn compile(src: &Path, lib: &Path) {
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-O2", "-shared", "-fPIC", "-o"])
        .arg(lib)
        .arg(src)
        .arg("-lm")
        .status()
        .expect("C compiler");
    assert!(status.success(), "compiling {}", src.display());
}

/// Builds `plugins/<name>.c` and copies its manifest beside the library.
/// Returns the manifest path.
pub fn example_plugin(name: &str) -> PathBuf {
    let _guard = BUILD_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let src_dir = repo_root().join("plugins");
    let dir = fixture_dir();
    let lib = dir.join(format!("lib{name}.so"));
    let manifest = dir.join(format!("{name}.manifest"));
    if !lib.exists() {
        let tmp = dir.join(format!("lib{name}.so.{}", std::process::id()));
        compile(&src_dir.join(format!("{name}.c")), &tmp);
        std::fs::rename(&tmp, &lib).unwrap();
    }
    std::fs::copy(src_dir.join(format!("{name}.manifest")), &manifest).unwrap();
    manifest
}

/// Compiles inline C source into a library named `lib<name>.so` and writes
/// `manifest` beside it. Returns the manifest path.
pub fn inline_plugin(name: &str, source: &str, manifest: &str) -> PathBuf {
    let _guard = BUILD_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let dir = fixture_dir();
    let src = dir.join(format!("{name}.c"));
    let lib = dir.join(format!("lib{name}.so"));
    if !lib.exists() {
        std::fs::write(&src, source).unwrap();
        let tmp = dir.join(format!("lib{name}.so.{}", std::process::id()));
        compile(&src, &tmp);
        std::fs::rename(&tmp, &lib).unwrap();
    }
    let path = dir.join(format!("{name}.manifest"));
    std::fs::write(&path, format!("library = lib{name}.so\n{manifest}")).unwrap();
    path
}
