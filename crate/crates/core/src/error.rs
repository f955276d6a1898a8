use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("frame index {frame} out of range (robot has {n_frames} frames)")]
    InvalidFrame { frame: usize, n_frames: usize },
    #[error("invalid robot: {0}")]
    InvalidRobot(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("world {0} too cluttered to sample a collision-free configuration")]
    WorldTooCluttered(usize),
    #[error("no initial guesses supplied")]
    NoGuesses,
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("metadata mismatch: {0}")]
    Mismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
