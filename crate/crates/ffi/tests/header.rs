//! Compiles a small C client against the generated header and, when the
//! static library is present, links and runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const CLIENT: &str = r#"
#include <stdio.h>
#include "pvqueue.h"

int main(void) {
    PvqEstimate e;
    if (pvq_np_est1(4, 2, 20, 45, &e) != PVQ_STATUS_OK) return 1;
    if (e.mean < 7.5714 || e.mean > 7.5715 || !e.has_variance) return 2;
    if (pvq_np_est1(2, 3, 5, 10, &e) != PVQ_STATUS_INVALID_ARGUMENT) return 3;
    if (pvq_last_error() == NULL) return 4;
    PvqHistory *h = pvq_history_new();
    if (pvq_param_est1(0, 0, 0, 45, h, &e) != PVQ_STATUS_HISTORY_REQUIRED) return 5;
    pvq_history_free(h);
    printf("%.4f\n", 4.0 + 75.0 / 21.0);
    return 0;
}
"#;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn cc() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .map(String::from)
}

fn static_lib() -> Option<PathBuf> {
    // tests/header-<hash> lives in <target>/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libpvqueue_ffi.a");
    lib.exists().then_some(lib)
}

fn write_client(dir: &Path) -> PathBuf {
    let src = dir.join("client.c");
    std::fs::write(&src, CLIENT).unwrap();
    src
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = write_client(dir.path());
    let include = manifest_dir().join("include");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn c_client_links_and_runs() {
    let (Some(cc), Some(lib)) = (cc(), static_lib()) else {
        eprintln!("no C compiler or static library; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = write_client(dir.path());
    let exe = dir.path().join("client");
    let out = Command::new(&cc)
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "7.5714");
}
