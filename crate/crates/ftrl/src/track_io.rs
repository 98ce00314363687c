//! Plain-text track files.
//!
//! ```text
//! # comment
//! scale: car
//! boundary: 0,0 9,0 9,6 0,6
//! obstacle: 3,2 6,2 6,4 3,4
//! spawn: 1.5,3,1.5708
//! lap: 0,3 3,3
//! ```
//!
//! Points are `x,y` pairs separated by whitespace, spawns are `x,y,heading`
//! (radians). `boundary` is required once, `obstacle` and `spawn` may
//! repeat, `scale` defaults to `std`, `lap` is optional.

use std::fmt::Write as _;
use std::path::Path;

use ftrl_core::env::{LapLine, Polygon, Pose, Track, Vec2};

use crate::error::{Error, Result};

pub fn load_track(path: &Path) -> Result<Track> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_track(&text, &path.display().to_string())
}

pub fn save_track(track: &Track, path: &Path) -> Result<()> {
    std::fs::write(path, format_track(track)).map_err(|e| Error::io(path, e))
}

/// Parses a track; `origin` names the source in error messages.
pub fn parse_track(text: &str, origin: &str) -> Result<Track> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut boundary = None;
    let mut obstacles = Vec::new();
    let mut spawns = Vec::new();
    let mut scale = None;
    let mut lap = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| err(line_no, format!("expected `key: value`, got `{line}`")))?;
        let value = value.trim();
        match key.trim() {
            "boundary" => {
                if boundary.is_some() {
                    return Err(err(line_no, "duplicate boundary".into()));
                }
                boundary = Some(parse_polygon(value).map_err(|m| err(line_no, m))?);
            }
            "obstacle" => obstacles.push(parse_polygon(value).map_err(|m| err(line_no, m))?),
            "spawn" => {
                let v = parse_numbers(value, ',').map_err(|m| err(line_no, m))?;
                let [x, y, heading] = v[..] else {
                    return Err(err(
                        line_no,
                        format!("spawn needs x,y,heading, got `{value}`"),
                    ));
                };
                spawns.push(Pose::new(x, y, heading));
            }
            "scale" => {
                if scale.is_some() {
                    return Err(err(line_no, "duplicate scale".into()));
                }
                if value.is_empty() || value.contains(char::is_whitespace) {
                    return Err(err(
                        line_no,
                        format!("scale label must be one word, got `{value}`"),
                    ));
                }
                scale = Some(value.to_string());
            }
            "lap" => {
                if lap.is_some() {
                    return Err(err(line_no, "duplicate lap line".into()));
                }
                let points = parse_points(value).map_err(|m| err(line_no, m))?;
                let [start, end] = points[..] else {
                    return Err(err(
                        line_no,
                        format!("lap needs two points, got {}", points.len()),
                    ));
                };
                lap = Some(LapLine { start, end });
            }
            other => return Err(err(line_no, format!("unknown key `{other}`"))),
        }
    }
    let boundary = boundary.ok_or_else(|| err(0, "missing boundary".into()))?;
    Track::new(
        boundary,
        obstacles,
        spawns,
        scale.unwrap_or_else(|| "std".to_string()),
        lap,
    )
    .map_err(|e| err(0, e.to_string()))
}

fn parse_numbers(s: &str, sep: char) -> std::result::Result<Vec<f64>, String> {
    s.split(sep)
        .map(|t| {
            let t = t.trim();
            let v: f64 = t.parse().map_err(|_| format!("bad number `{t}`"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite number `{t}`"))
            }
        })
        .collect()
}

fn parse_points(s: &str) -> std::result::Result<Vec<Vec2>, String> {
    s.split_whitespace()
        .map(|tok| match parse_numbers(tok, ',')?[..] {
            [x, y] => Ok(Vec2::new(x, y)),
            _ => Err(format!("expected `x,y`, got `{tok}`")),
        })
        .collect()
}

fn parse_polygon(s: &str) -> std::result::Result<Polygon, String> {
    Polygon::new(parse_points(s)?).map_err(|e| e.to_string())
}

/// Serializes a track so that [`parse_track`] restores it exactly.
pub fn format_track(track: &Track) -> String {
    let points = |p: &Polygon| {
        p.vertices()
            .iter()
            .map(|v| format!("{},{}", v.x, v.y))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    let _ = writeln!(out, "scale: {}", track.scale_label());
    let _ = writeln!(out, "boundary: {}", points(track.boundary()));
    for o in track.obstacles() {
        let _ = writeln!(out, "obstacle: {}", points(o));
    }
    for s in track.spawns() {
        let _ = writeln!(
            out,
            "spawn: {},{},{}",
            s.position.x, s.position.y, s.heading
        );
    }
    if let Some(l) = track.lap_line() {
        let _ = writeln!(
            out,
            "lap: {},{} {},{}",
            l.start.x, l.start.y, l.end.x, l.end.y
        );
    }
    out
}
