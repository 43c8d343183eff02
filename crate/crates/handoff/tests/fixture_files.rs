//! The files under `fixtures/` must stay in lockstep with the builders
//! in `handoff::fixtures`; these tests pin the equivalence in both
//! directions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use handoff::dsl::{parse_scenario_bytes, serialize_machine, DirSource};
use handoff::fixtures::{case_a_scenario, case_b_scenario, deployer_machine, stinger_machine};
use handoff::scenario::Scenario;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn load(name: &str) -> Scenario {
    let bytes = std::fs::read(fixtures_dir().join(name)).unwrap();
    let (sc, warnings) = parse_scenario_bytes(
        &bytes,
        &DirSource {
            root: fixtures_dir(),
        },
    )
    .unwrap_or_else(|e| panic!("{name}: {e:?}"));
    assert!(warnings.is_empty(), "{name}: {warnings:?}");
    sc
}

#[test]
fn machine_files_are_canonical_serializations() {
    for (name, def) in [
        ("deployer.machine", deployer_machine()),
        ("stinger.machine", stinger_machine()),
    ] {
        let on_disk = std::fs::read_to_string(fixtures_dir().join(name)).unwrap();
        assert_eq!(on_disk, serialize_machine(&def), "{name} drifted");
    }
}

#[test]
fn scenario_files_match_builders() {
    assert_eq!(load("caseA.scenario"), case_a_scenario());
    assert_eq!(load("caseB.scenario"), case_b_scenario());
}

#[test]
fn scenario_params_survive_the_file_format() {
    let sc = load("caseA.scenario");
    let stinger = sc.robot("stinger").unwrap();
    assert_eq!(
        stinger.params,
        BTreeMap::from([(
            "strike_target".to_string(),
            handoff::hfsm::ContextValue::Int(200)
        )])
    );
}
