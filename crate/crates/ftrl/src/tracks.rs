//! Built-in courses, laid out in standard meters.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use ftrl_core::env::{LapLine, Polygon, Pose, Track, Vec2};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinTrack {
    /// Rectangular ring with a 10 m corridor and no obstacles.
    Loop,
    /// The same ring narrowed to 9 m with staggered boxes that leave
    /// passages of about 5.4 m.
    Test,
}

impl FromStr for BuiltinTrack {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "loop" => Ok(Self::Loop),
            "test" => Ok(Self::Test),
            other => Err(format!(
                "unknown built-in track `{other}` (expected loop or test)"
            )),
        }
    }
}

impl fmt::Display for BuiltinTrack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Loop => "loop",
            Self::Test => "test",
        })
    }
}

impl BuiltinTrack {
    /// The course in standard meters, labelled `std`.
    pub fn standard(self) -> Track {
        match self {
            Self::Loop => loop_track(),
            Self::Test => test_track(),
        }
    }

    /// The course shrunk for an environment where one native unit is
    /// `beta` standard meters.
    pub fn build(self, beta: f64, scale_label: &str) -> Result<Track> {
        Ok(self.standard().scaled(1.0 / beta, scale_label)?)
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::rectangle(Vec2::new(x0, y0), Vec2::new(x1, y1)).expect("valid rectangle")
}

/// Counter-clockwise travel; the lap line crosses the bottom straight.
fn loop_track() -> Track {
    let mut spawns = Vec::new();
    for x in [15.0, 25.0, 35.0, 45.0] {
        spawns.push(Pose::new(x, 5.0, 0.0));
        spawns.push(Pose::new(60.0 - x, 35.0, PI));
    }
    for y in [15.0, 25.0] {
        spawns.push(Pose::new(55.0, y, FRAC_PI_2));
        spawns.push(Pose::new(5.0, 40.0 - y, -FRAC_PI_2));
    }
    let lap = LapLine {
        start: Vec2::new(30.0, 0.0),
        end: Vec2::new(30.0, 10.0),
    };
    Track::new(
        rect(0.0, 0.0, 60.0, 40.0),
        vec![rect(10.0, 10.0, 50.0, 30.0)],
        spawns,
        "std",
        Some(lap),
    )
    .expect("loop track is valid")
}

fn test_track() -> Track {
    let obstacles = vec![
        rect(9.0, 9.0, 51.0, 31.0),
        rect(18.0, 0.6, 21.0, 3.6),
        rect(38.0, 5.4, 41.0, 8.4),
        rect(56.4, 14.0, 59.4, 17.0),
        rect(51.6, 24.0, 54.6, 27.0),
        rect(39.0, 36.4, 42.0, 39.4),
        rect(19.0, 31.6, 22.0, 34.6),
        rect(0.6, 24.0, 3.6, 27.0),
        rect(5.4, 13.0, 8.4, 16.0),
    ];
    let spawns = vec![
        Pose::new(12.0, 4.5, 0.0),
        Pose::new(29.0, 4.5, 0.0),
        Pose::new(46.0, 4.5, 0.0),
        Pose::new(55.5, 20.5, FRAC_PI_2),
        Pose::new(48.0, 35.5, PI),
        Pose::new(30.0, 35.5, PI),
        Pose::new(14.0, 35.5, PI),
        Pose::new(4.5, 20.0, -FRAC_PI_2),
    ];
    let lap = LapLine {
        start: Vec2::new(30.0, 0.0),
        end: Vec2::new(30.0, 9.0),
    };
    Track::new(
        rect(0.0, 0.0, 60.0, 40.0),
        obstacles,
        spawns,
        "std",
        Some(lap),
    )
    .expect("test track is valid")
}
