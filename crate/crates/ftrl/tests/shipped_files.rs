use std::path::PathBuf;

use ftrl::config::{ExperimentConfig, Scenario};
use ftrl::track_io::load_track;
use ftrl::tracks::BuiltinTrack;

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn example_configs_load() {
    for (name, scenario) in [
        ("solo", Scenario::Solo),
        ("ftrl", Scenario::Ftrl),
        ("ftrl_sim", Scenario::FtrlSim),
    ] {
        let cfg = ExperimentConfig::load(&repo().join(format!("configs/{name}.ini"))).unwrap();
        assert_eq!(cfg.scenario, scenario);
        assert!(cfg.pretrain.is_some());
    }
}

#[test]
fn exported_tracks_match_the_builtins() {
    let cases = [
        ("loop_std", BuiltinTrack::Loop, 1.0, "std"),
        ("loop_car", BuiltinTrack::Loop, 6.67, "car"),
        ("test_car", BuiltinTrack::Test, 6.67, "car"),
    ];
    for (file, builtin, beta, label) in cases {
        let track = load_track(&repo().join(format!("tracks/{file}.track"))).unwrap();
        assert_eq!(track, builtin.build(beta, label).unwrap(), "{file}");
    }
}
