//! Compiles and runs a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/apnet2.h")).unwrap();
    for sym in [
        "typedef struct Apnet2Vocoder Apnet2Vocoder;",
        "APNET2_STATUS_BUFFER_TOO_SMALL = 3",
        "const char *apnet2_last_error(void);",
        "Apnet2Status apnet2_vocoder_generate(",
        "void apnet2_vocoder_free(Apnet2Vocoder *v);",
        "double apnet2_phi(double re, double im);",
    ] {
        assert!(h.contains(sym), "header lacks `{sym}`");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libapnet2_ffi.a");
    assert!(lib.is_file(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("c_smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-O1"])
        .arg(format!("-I{manifest}/include"))
        .arg(format!("{manifest}/tests/c_smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler named `cc` is required");
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "exit {:?}: {stdout} {}", out.status, String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout.trim(), "frames=32 samples=8192 phi=3.141593");
}
