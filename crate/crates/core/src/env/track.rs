use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::geometry::{normalize_angle, segments_intersect, Polygon, Vec2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading: normalize_angle(heading),
        }
    }
}

/// Directed segment used to count laps. Crossing it from the left side to
/// the right side (looking from `start` towards `end`) is one forward lap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LapLine {
    pub start: Vec2,
    pub end: Vec2,
}

impl LapLine {
    fn side(&self, p: Vec2) -> bool {
        (self.end - self.start).cross(p - self.start) >= 0.0
    }

    /// +1 for a forward crossing along `from -> to`, -1 for a backward one.
    pub fn crossing(&self, from: Vec2, to: Vec2) -> i64 {
        let (s0, s1) = (self.side(from), self.side(to));
        if s0 == s1 || !segments_intersect(from, to, self.start, self.end) {
            return 0;
        }
        if s0 {
            1
        } else {
            -1
        }
    }
}

/// A closed course: outer fence, obstacles, spawn poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    boundary: Polygon,
    obstacles: Vec<Polygon>,
    spawns: Vec<Pose>,
    scale_label: String,
    lap_line: Option<LapLine>,
}

impl Track {
    pub fn new(
        boundary: Polygon,
        obstacles: Vec<Polygon>,
        spawns: Vec<Pose>,
        scale_label: impl Into<String>,
        lap_line: Option<LapLine>,
    ) -> Result<Self> {
        if !boundary.is_simple() {
            return Err(Error::InvalidTrack(
                "boundary polygon self-intersects".into(),
            ));
        }
        for (i, obstacle) in obstacles.iter().enumerate() {
            if !obstacle.is_simple() {
                return Err(Error::InvalidTrack(format!("obstacle {i} self-intersects")));
            }
            if obstacle.vertices().iter().any(|&v| !boundary.contains(v)) {
                return Err(Error::InvalidTrack(format!(
                    "obstacle {i} is not inside the boundary"
                )));
            }
            let crosses = obstacle.edges().any(|(a, b)| {
                boundary
                    .edges()
                    .any(|(c, d)| segments_intersect(a, b, c, d))
            });
            if crosses {
                return Err(Error::InvalidTrack(format!(
                    "obstacle {i} crosses the boundary"
                )));
            }
        }
        if spawns.is_empty() {
            return Err(Error::InvalidTrack("track has no spawn poses".into()));
        }
        let track = Self {
            boundary,
            obstacles,
            spawns,
            scale_label: scale_label.into(),
            lap_line,
        };
        for (i, spawn) in track.spawns.iter().enumerate() {
            if !track.in_free_space(spawn.position) {
                return Err(Error::InvalidTrack(format!(
                    "spawn pose {i} at ({}, {}) is not in free space",
                    spawn.position.x, spawn.position.y
                )));
            }
        }
        Ok(track)
    }

    pub fn boundary(&self) -> &Polygon {
        &self.boundary
    }

    pub fn obstacles(&self) -> &[Polygon] {
        &self.obstacles
    }

    pub fn spawns(&self) -> &[Pose] {
        &self.spawns
    }

    pub fn scale_label(&self) -> &str {
        &self.scale_label
    }

    pub fn lap_line(&self) -> Option<&LapLine> {
        self.lap_line.as_ref()
    }

    /// Inside the fence and outside every obstacle.
    pub fn in_free_space(&self, p: Vec2) -> bool {
        self.boundary.contains(p) && !self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Every wall segment of the course.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        self.boundary
            .edges()
            .chain(self.obstacles.iter().flat_map(|o| o.edges()))
    }

    /// True when moving straight from `from` to `to` touches no wall.
    pub fn segment_is_clear(&self, from: Vec2, to: Vec2) -> bool {
        !self
            .edges()
            .any(|(a, b)| segments_intersect(from, to, a, b))
    }

    pub fn nearest_spawn(&self, p: Vec2) -> Pose {
        let mut best = self.spawns[0];
        let mut best_d = f64::INFINITY;
        for s in &self.spawns {
            let d = s.position.distance(p);
            if d < best_d {
                best_d = d;
                best = *s;
            }
        }
        best
    }

    /// Uniformly scaled copy, relabelled. Headings are unchanged.
    pub fn scaled(&self, factor: f64, scale_label: impl Into<String>) -> Result<Track> {
        Track::new(
            self.boundary.scaled(factor),
            self.obstacles.iter().map(|o| o.scaled(factor)).collect(),
            self.spawns
                .iter()
                .map(|s| Pose {
                    position: s.position * factor,
                    heading: s.heading,
                })
                .collect(),
            scale_label,
            self.lap_line.map(|l| LapLine {
                start: l.start * factor,
                end: l.end * factor,
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn room() -> Polygon {
        Polygon::rectangle(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0)).unwrap()
    }

    #[test]
    fn spawn_inside_obstacle_is_rejected() {
        let obstacle = Polygon::rectangle(Vec2::new(4.0, 4.0), Vec2::new(6.0, 6.0)).unwrap();
        let err = Track::new(
            room(),
            vec![obstacle],
            vec![Pose::new(5.0, 5.0, 0.0)],
            "std",
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidTrack(_)));
    }

    #[test]
    fn obstacle_outside_boundary_is_rejected() {
        let obstacle = Polygon::rectangle(Vec2::new(8.0, 8.0), Vec2::new(12.0, 9.0)).unwrap();
        assert!(Track::new(
            room(),
            vec![obstacle],
            vec![Pose::new(1.0, 1.0, 0.0)],
            "std",
            None
        )
        .is_err());
    }

    #[test]
    fn empty_spawn_list_is_rejected() {
        assert!(Track::new(room(), vec![], vec![], "std", None).is_err());
    }

    #[test]
    fn nearest_spawn_picks_closest() {
        let t = Track::new(
            room(),
            vec![],
            vec![Pose::new(1.0, 1.0, 0.0), Pose::new(9.0, 9.0, 1.0)],
            "std",
            None,
        )
        .unwrap();
        assert_eq!(t.nearest_spawn(Vec2::new(8.0, 7.0)).heading, 1.0);
    }

    #[test]
    fn lap_line_direction() {
        let line = LapLine {
            start: Vec2::new(0.0, 0.0),
            end: Vec2::new(0.0, 2.0),
        };
        // Left of an upward line is negative x.
        assert_eq!(line.crossing(Vec2::new(-1.0, 1.0), Vec2::new(1.0, 1.0)), 1);
        assert_eq!(line.crossing(Vec2::new(1.0, 1.0), Vec2::new(-1.0, 1.0)), -1);
        assert_eq!(line.crossing(Vec2::new(-1.0, 5.0), Vec2::new(1.0, 5.0)), 0);
        assert_eq!(line.crossing(Vec2::new(-1.0, 1.0), Vec2::new(-0.5, 1.0)), 0);
    }
}
