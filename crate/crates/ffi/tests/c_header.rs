use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "oslo.h"

int main(void) {
    uint64_t n = 0;
    if (oslo_npix(10, &n) != OSLO_STATUS_OK || n != 12582912ULL) return 1;
    if (oslo_npix(20, &n) != OSLO_STATUS_INVALID_ARGUMENT) return 2;
    if (oslo_last_error()[0] == '\0') return 3;
    OsloSphereMap *m = NULL;
    if (oslo_map_new(1, 1, NULL, 0, &m) != OSLO_STATUS_OK) return 4;
    double db = 0.0;
    if (oslo_wspsnr(m, m, 1.0, &db) != OSLO_STATUS_OK) return 5;
    oslo_map_free(m);
    int64_t nb[8];
    if (oslo_neighbors(2, 0, nb) != OSLO_STATUS_OK) return 6;
    printf("ok %lld\n", (long long)nb[0]);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("liboslo_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
