//! Compiles and runs a small C program against the generated header and the
//! static library, proving the ABI is consumable from plain C.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // tests run from the crate dir; the workspace target sits two levels up.
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    manifest.join("../../target")
}

fn find_static_lib() -> Option<PathBuf> {
    for profile in ["debug", "release"] {
        for dir in [
            target_dir().join(profile),
            target_dir().join(profile).join("deps"),
        ] {
            let exact = dir.join("libfedrco_ffi.a");
            if exact.exists() {
                return Some(exact);
            }
            // Hashed artifact names from dependency builds.
            if let Ok(entries) = std::fs::read_dir(&dir) {
                for entry in entries.flatten() {
                    let name = entry.file_name();
                    let name = name.to_string_lossy();
                    if name.starts_with("libfedrco_ffi") && name.ends_with(".a") {
                        return Some(entry.path());
                    }
                }
            }
        }
    }
    None
}

const C_PROGRAM: &str = r#"
#include "fedrco.h"
#include <stdio.h>
#include <math.h>

int main(void) {
    if (fedrco_abi_version() != 1) return 10;

    FedrcoConfig *cfg = NULL;
    const char *json =
        "{\"method\":\"fedavg\",\"clients\":3,\"rounds\":2,\"local_epochs\":2,"
        "\"dataset\":{\"kind\":\"synthetic\",\"features\":6,\"classes\":3,"
        "\"samples\":240,\"separation\":4.0},"
        "\"model\":{\"kind\":\"dense\",\"hidden\":[8]},\"seed\":3}";
    if (fedrco_config_parse(json, &cfg) != FEDRCO_STATUS_OK) return 11;

    FedrcoRun *run = NULL;
    if (fedrco_run_experiment(cfg, NULL, &run) != FEDRCO_STATUS_OK) {
        printf("run error: %s\n", fedrco_last_error());
        return 12;
    }
    if (fedrco_run_rounds(run) != 2) return 13;
    double acc = 0.0;
    if (fedrco_run_metric(run, 1, FEDRCO_METRIC_TEST_ACCURACY, &acc) != FEDRCO_STATUS_OK) return 14;
    if (!(acc >= 0.0 && acc <= 1.0)) return 15;
    if (fabs(fedrco_run_final_accuracy(run) - acc) > 1e-12) return 16;

    fedrco_run_free(run);
    fedrco_config_free(cfg);
    printf("c-abi ok, accuracy %.4f\n", acc);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|cc| Command::new(cc).arg("--version").output().is_ok())
        .copied();
    let Some(cc) = cc else {
        eprintln!("no C compiler available; skipping linkage test");
        return;
    };
    let Some(lib) = find_static_lib() else {
        panic!("libfedrco_ffi.a not built; run cargo build first");
    };
    let include_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(
        include_dir.join("fedrco.h").exists(),
        "generated header missing"
    );

    let scratch = tempfile::tempdir().expect("tempdir");
    let c_file = scratch.path().join("probe.c");
    std::fs::write(&c_file, C_PROGRAM).unwrap();
    let binary = scratch.path().join("probe");

    let compile = Command::new(cc)
        .arg(&c_file)
        .arg("-I")
        .arg(&include_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&binary)
        .output()
        .expect("compiler invocation");
    assert!(
        compile.status.success(),
        "compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&binary).output().expect("probe run");
    assert!(
        run.status.success(),
        "probe exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
}
