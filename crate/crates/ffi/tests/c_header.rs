//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "aqnet.h"

int main(void) {
    uint8_t cls = 99;
    if (aqnet_classify(55.4, NULL, &cls) != AQNET_STATUS_OK || cls != 2) return 1;
    if (aqnet_classify(55.5, NULL, &cls) != AQNET_STATUS_OK || cls != 3) return 2;

    double v = 0.0;
    if (aqnet_apply_correction(20.0, 40.0, &v) != AQNET_STATUS_OK) return 3;
    if (v < 12.7819999 || v > 12.7820001) return 4;

    uint64_t ids[2] = {5, 6};
    double xs[2] = {0.0, 10.0};
    double ys[2] = {0.0, 0.0};
    AqnetIndex *idx = NULL;
    if (aqnet_index_new(ids, xs, ys, 2, false, &idx) != AQNET_STATUS_OK) return 5;
    uint64_t id = 0;
    double d = 0.0;
    if (aqnet_index_nearest(idx, 7.0, 0.0, &id, &d) != AQNET_STATUS_OK || id != 6 || d != 3.0) return 6;
    aqnet_index_free(idx);

    if (aqnet_index_nearest(NULL, 0.0, 0.0, &id, &d) != AQNET_STATUS_NULL_POINTER) return 7;
    if (aqnet_last_error_message() == NULL) return 8;
    printf("%s\n", aqnet_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/c_header-<hash>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib_dir = target_dir();
    let staticlib = lib_dir.join("libaqnet_ffi.a");
    assert!(staticlib.exists(), "missing {}", staticlib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("aqnet.h").exists());

    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    let bin = work.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("run cc");
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
