use ftrl::track_io::{format_track, load_track, parse_track, save_track};
use ftrl::tracks::BuiltinTrack;
use ftrl::Error;

#[test]
fn builtins_round_trip_exactly() {
    for b in [BuiltinTrack::Loop, BuiltinTrack::Test] {
        for (beta, label) in [(1.0, "std"), (6.67, "car"), (3.3, "mini")] {
            let track = b.build(beta, label).unwrap();
            let back = parse_track(&format_track(&track), "mem").unwrap();
            assert_eq!(back, track, "{b} at beta {beta}");
        }
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.track");
    let track = BuiltinTrack::Test.build(6.67, "car").unwrap();
    save_track(&track, &path).unwrap();
    assert_eq!(load_track(&path).unwrap(), track);
}

#[test]
fn parses_the_documented_format() {
    let text = "\
# small box course
scale: car

boundary: 0,0 9,0 9,6 0,6
obstacle: 3,2 6,2 6,4 3,4
spawn: 1.5,3,1.5708
lap: 0,3 3,3
";
    let t = parse_track(text, "doc").unwrap();
    assert_eq!(t.scale_label(), "car");
    assert_eq!(t.obstacles().len(), 1);
    assert_eq!(t.spawns().len(), 1);
    assert!(t.lap_line().is_some());
}

#[test]
fn scale_defaults_to_std() {
    let t = parse_track("boundary: 0,0 9,0 9,6 0,6\nspawn: 1,1,0\n", "m").unwrap();
    assert_eq!(t.scale_label(), "std");
    assert!(t.lap_line().is_none());
}

fn line_of(text: &str) -> usize {
    match parse_track(text, "bad.track").unwrap_err() {
        Error::Parse { line, path, .. } => {
            assert_eq!(path, "bad.track");
            line
        }
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn errors_carry_line_numbers() {
    let good = "boundary: 0,0 9,0 9,6 0,6\nspawn: 1,1,0\n";
    assert_eq!(line_of(&format!("{good}wall: 1,1\n")), 3);
    assert_eq!(line_of(&format!("{good}spawn: 1,1\n")), 3);
    assert_eq!(line_of(&format!("{good}obstacle: 1,1 2,x 3,3\n")), 3);
    assert_eq!(line_of(&format!("{good}lap: 1,1\n")), 3);
    assert_eq!(line_of(&format!("{good}boundary: 0,0 1,0 1,1\n")), 3);
    assert_eq!(line_of(&format!("# c\n{good}scale: a\nscale: b\n")), 5);
    assert_eq!(line_of("no colon here\n"), 1);
    assert_eq!(line_of("spawn: 1,1,inf\n"), 1);
    // Whole-file problems are reported at line 0.
    assert_eq!(line_of("spawn: 1,1,0\n"), 0);
    assert_eq!(line_of("boundary: 0,0 9,0 9,6 0,6\nspawn: 20,20,0\n"), 0);
}

#[test]
fn missing_file_is_an_io_error() {
    let e = load_track(std::path::Path::new("/nonexistent/x.track")).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
}
