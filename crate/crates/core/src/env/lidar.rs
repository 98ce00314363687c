use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::geometry::{ray_segment_distance, Vec2};
use super::track::Track;
use super::CarState;
use crate::error::{Error, Result};

/// Number of front-view LIDAR beams.
pub const BEAMS: usize = 60;

/// Beam offset from the heading, measured clockwise: beam 0 looks at -90°
/// (left), beam 59 at +90° (right).
pub fn beam_offset(k: usize) -> f64 {
    -PI / 2.0 + k as f64 * (PI / (BEAMS - 1) as f64)
}

/// World-frame direction of beam `k` for a car facing `heading`.
pub fn beam_direction(heading: f64, k: usize) -> f64 {
    heading - beam_offset(k)
}

/// Front-view LIDAR scan, left to right. Entries are strictly positive and
/// finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(distances: Vec<f64>) -> Result<Self> {
        if distances.len() != BEAMS {
            return Err(Error::Validation(format!(
                "observation must have {BEAMS} beams, got {}",
                distances.len()
            )));
        }
        if let Some((i, d)) = distances
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d > 0.0))
        {
            return Err(Error::Validation(format!(
                "beam {i} has invalid distance {d}"
            )));
        }
        Ok(Self(distances))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Observation {
        Observation(self.0.iter().map(|d| d * factor).collect())
    }
}

/// Nearest wall hit along one ray, capped at `max_range`.
pub fn cast_ray(track: &Track, origin: Vec2, direction: f64, max_range: f64) -> f64 {
    let dir = Vec2::from_angle(direction);
    track
        .edges()
        .filter_map(|(a, b)| ray_segment_distance(origin, dir, a, b))
        .fold(max_range, f64::min)
}

pub fn cast_lidar(state: &CarState, track: &Track, max_range: f64) -> Result<Observation> {
    if !track.in_free_space(state.position) {
        return Err(Error::InvalidPose(format!(
            "({}, {}) is outside the free space of the track",
            state.position.x, state.position.y
        )));
    }
    let distances = (0..BEAMS)
        .map(|k| {
            cast_ray(
                track,
                state.position,
                beam_direction(state.heading, k),
                max_range,
            )
        })
        .collect::<Vec<_>>();
    if let Some(k) = distances.iter().position(|&d| d <= 0.0) {
        return Err(Error::InvalidPose(format!("beam {k} starts on a wall")));
    }
    Ok(Observation(distances))
}
