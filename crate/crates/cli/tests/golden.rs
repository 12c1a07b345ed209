use std::fs;
use std::path::Path;

use overdamp::{load_config, Mode};
use overdamp_core::harness::{FluidRecord, KineticRecord, Record, RescaledRecord};
use overdamp_core::functionals::DiagnosticsRecord;

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    fs::read_to_string(path).unwrap().trim_end().to_string()
}

#[test]
fn csv_headers_match_golden_files() {
    assert_eq!(DiagnosticsRecord::<f64>::columns().join(","), golden("pair.header"));
    assert_eq!(KineticRecord::columns().join(","), golden("kinetic.header"));
    assert_eq!(FluidRecord::columns().join(","), golden("fluid.header"));
    assert_eq!(RescaledRecord::columns().join(","), golden("rescaled.header"));
}

#[test]
fn pair_header_starts_with_the_documented_columns() {
    let documented = "t,mass,momentum,F_eps,D_eps,p_rel,H_eps,elec_diff,L1,vel_gap,K_int,E_int,boundary_mass";
    assert!(golden("pair.header").starts_with(documented));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            if cfg.mode == Mode::Sweep {
                assert!(cfg.plan().is_some());
            }
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
