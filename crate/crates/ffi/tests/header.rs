use std::path::PathBuf;
use std::process::Command;

fn header_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("cmppi.h")
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(header_path()).expect("build script writes the header");
    for name in [
        "cmppi_last_error",
        "cmppi_compute_weights",
        "cmppi_dbscan",
        "cmppi_dubins_step",
        "cmppi_run_episode",
        "cmppi_planner_new",
        "cmppi_planner_free",
        "cmppi_planner_set_obstacles",
        "cmppi_planner_horizon",
        "cmppi_planner_step",
        "cmppi_planner_warm_start",
        "typedef struct CmppiPlanner CmppiPlanner",
        "CMPPI_STATUS_OK = 0",
        "CMPPI_STATUS_PANIC",
        "CmppiEpisodeSummary",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// The header must be valid C on its own; skipped when no compiler exists.
#[test]
fn header_compiles_as_c() {
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(header_path())
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
