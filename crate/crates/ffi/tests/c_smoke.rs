use std::path::{Path, PathBuf};
use std::process::Command;

use maintlog::syntheval::{generate, SynthSpec, MAPPING_FILE, RAW_FILE};

fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    profile_dir.join("libmaintlog_ffi.a")
}

#[test]
fn c_program_links_and_runs() {
    let lib = static_lib();
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let build = Command::new(&compiler)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap_or_else(|e| panic!("cannot run C compiler '{compiler}': {e}"));
    assert!(
        build.status.success(),
        "C build failed: {}",
        String::from_utf8_lossy(&build.stderr)
    );

    generate(&SynthSpec::preset("fuzz").unwrap())
        .unwrap()
        .write_dir(dir.path())
        .unwrap();
    let run = Command::new(&exe)
        .arg(dir.path().join(RAW_FILE))
        .arg(dir.path().join(MAPPING_FILE))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(
        run.status.success(),
        "smoke failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout.contains("# Failure Mode Analysis"), "{stdout}");
}
