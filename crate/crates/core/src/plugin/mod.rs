//! Host for shared libraries exposing numeric functions with declared
//! array shapes.
//!
//! Each function takes one pointer per argument, outputs first, then inputs,
//! and returns nothing. Lengths and element types come from a sidecar
//! manifest; lengths of `overridable` functions can be changed at run time.

mod host;
mod manifest;

pub use host::{load_plugin, load_with_manifest_file, LoadedPlugin, NumericArray};
pub use manifest::{Direction, FunctionShape, ManifestError, PluginManifest, ScalarType, MAX_ARGS};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("`{function}` takes {expected} inputs, got {got}")]
    Arity {
        function: String,
        expected: usize,
        got: usize,
    },
    #[error("`{function}` input {index} must be {expected}, got {got}")]
    Type {
        function: String,
        index: usize,
        expected: ScalarType,
        got: ScalarType,
    },
    #[error("`{function}` input {index} must have {expected} elements, got {got}")]
    Length {
        function: String,
        index: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PluginError {
    #[error("cannot load {}: {message}", path.display())]
    Load { path: PathBuf, message: String },
    #[error("{}: symbol `{symbol}` not found", path.display())]
    MissingSymbol { path: PathBuf, symbol: String },
    #[error("cannot read {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("no function `{0}` in plugin")]
    UnknownFunction(String),
    #[error("`{0}` is not overridable")]
    NotOverridable(String),
    #[error(
        "override for `{function}` changes arity (inputs {}→{}, outputs {}→{})",
        inputs.0, inputs.1, outputs.0, outputs.1
    )]
    OverrideArity {
        function: String,
        inputs: (usize, usize),
        outputs: (usize, usize),
    },
    #[error("override for `{0}` contains a zero length")]
    OverrideLength(String),
    #[error("`{function}` wrote past the end of output {output}")]
    Overrun { function: String, output: usize },
    #[error("`{function}` cannot back a potential: {reason}")]
    Adapter { function: String, reason: String },
}
