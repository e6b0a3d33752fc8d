// SPDX-License-Identifier: Apache-2.0

use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty frame")]
    EmptyFrame,
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("undefined angle for a point at the origin")]
    UndefinedAngle,
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("projection undefined at zero depth")]
    DivisionUndefined,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed container: {0}")]
    Container(String),
    #[error("format mismatch: {0}")]
    FormatMismatch(String),
    #[error("state error: {0}")]
    State(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
