//! Experiment harness around `ftrl-core`: INI configuration, track files,
//! TCP federation, scenario orchestration, artifact output and the
//! verification suite behind `ftrl verify`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod ini;
pub mod net;
pub mod output;
pub mod track_io;
pub mod tracks;
pub mod verify;

pub use error::{Error, Result};
