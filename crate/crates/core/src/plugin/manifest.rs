use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::keyfile;

/// Largest number of arguments (outputs plus inputs) a plugin function may take.
pub const MAX_ARGS: usize = 16;

/// Element type of a plugin argument array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarType {
    Int32,
    Float32,
    Float64,
}

impl ScalarType {
    pub const ALL: [ScalarType; 3] = [ScalarType::Int32, ScalarType::Float32, ScalarType::Float64];

    pub fn width(self) -> usize {
        match self {
            ScalarType::Int32 | ScalarType::Float32 => 4,
            ScalarType::Float64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarType::Int32 => "INT32",
            ScalarType::Float32 => "FLOAT32",
            ScalarType::Float64 => "FLOAT64",
        }
    }
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "INT32" => Ok(ScalarType::Int32),
            "FLOAT32" => Ok(ScalarType::Float32),
            "FLOAT64" => Ok(ScalarType::Float64),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Input,
    Output,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
        })
    }
}

/// Declared lengths and element types of one plugin function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionShape {
    pub name: String,
    pub out_lengths: Vec<usize>,
    pub out_types: Vec<ScalarType>,
    pub in_lengths: Vec<usize>,
    pub in_types: Vec<ScalarType>,
    pub overridable: bool,
    pub reentrant: bool,
}

impl FunctionShape {
    pub fn arity(&self) -> usize {
        self.out_types.len() + self.in_types.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PluginManifest {
    /// Library named by a top-level `library = ...` key, if any.
    pub library: Option<PathBuf>,
    pub functions: Vec<FunctionShape>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: section `{header}` is not `[function <name>]`")]
    BadSection { line: usize, header: String },
    #[error("line {line}: function `{name}` declared twice")]
    DuplicateFunction { line: usize, name: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: function `{function}` is missing `{key}`")]
    MissingKey {
        line: usize,
        function: String,
        key: &'static str,
    },
    #[error(
        "line {line}: function `{function}` declares {lengths} {direction} lengths but {types} {direction} types"
    )]
    ArityMismatch {
        line: usize,
        function: String,
        direction: Direction,
        lengths: usize,
        types: usize,
    },
    #[error("line {line}: function `{function}` has unknown scalar type `{token}`")]
    UnknownType {
        line: usize,
        function: String,
        token: String,
    },
    #[error("line {line}: function `{function}` has invalid length `{token}` (need an integer >= 1)")]
    InvalidLength {
        line: usize,
        function: String,
        token: String,
    },
    #[error("line {line}: `{key}` must be true or false, got `{value}`")]
    InvalidFlag {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: function `{function}` takes {arity} arguments, at most {MAX_ARGS} supported")]
    TooManyArguments {
        line: usize,
        function: String,
        arity: usize,
    },
}

impl ManifestError {
    pub fn line(&self) -> usize {
        match self {
            ManifestError::Syntax { line, .. }
            | ManifestError::BadSection { line, .. }
            | ManifestError::DuplicateFunction { line, .. }
            | ManifestError::UnknownKey { line, .. }
            | ManifestError::MissingKey { line, .. }
            | ManifestError::ArityMismatch { line, .. }
            | ManifestError::UnknownType { line, .. }
            | ManifestError::InvalidLength { line, .. }
            | ManifestError::InvalidFlag { line, .. }
            | ManifestError::TooManyArguments { line, .. } => *line,
        }
    }
}

impl From<keyfile::KeyfileError> for ManifestError {
    fn from(e: keyfile::KeyfileError) -> Self {
        ManifestError::Syntax {
            line: e.line,
            message: e.message,
        }
    }
}

fn items(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim)
}

fn parse_lengths(function: &str, entry: &keyfile::Entry) -> Result<Vec<usize>, ManifestError> {
    items(&entry.value)
        .map(|tok| match tok.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ManifestError::InvalidLength {
                line: entry.line,
                function: function.to_string(),
                token: tok.to_string(),
            }),
        })
        .collect()
}

fn parse_types(function: &str, entry: &keyfile::Entry) -> Result<Vec<ScalarType>, ManifestError> {
    items(&entry.value)
        .map(|tok| {
            tok.parse().map_err(|_| ManifestError::UnknownType {
                line: entry.line,
                function: function.to_string(),
                token: tok.to_string(),
            })
        })
        .collect()
}

fn parse_flag(entry: &keyfile::Entry) -> Result<bool, ManifestError> {
    match entry.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ManifestError::InvalidFlag {
            line: entry.line,
            key: entry.key.clone(),
            value: other.to_string(),
        }),
    }
}

fn parse_function(section: &keyfile::Section, name: &str) -> Result<FunctionShape, ManifestError> {
    for entry in &section.entries {
        if !matches!(
            entry.key.as_str(),
            "out_lengths" | "out_types" | "in_lengths" | "in_types" | "overridable" | "reentrant"
        ) {
            return Err(ManifestError::UnknownKey {
                line: entry.line,
                key: entry.key.clone(),
            });
        }
    }
    let require = |key: &'static str| {
        section.get(key).ok_or_else(|| ManifestError::MissingKey {
            line: section.line,
            function: name.to_string(),
            key,
        })
    };

    let out_len_entry = require("out_lengths")?;
    let out_type_entry = require("out_types")?;
    let in_len_entry = require("in_lengths")?;
    let in_type_entry = require("in_types")?;

    let out_lengths = parse_lengths(name, out_len_entry)?;
    let out_types = parse_types(name, out_type_entry)?;
    let in_lengths = parse_lengths(name, in_len_entry)?;
    let in_types = parse_types(name, in_type_entry)?;

    if out_lengths.len() != out_types.len() {
        return Err(ManifestError::ArityMismatch {
            line: out_type_entry.line.max(out_len_entry.line),
            function: name.to_string(),
            direction: Direction::Output,
            lengths: out_lengths.len(),
            types: out_types.len(),
        });
    }
    if in_lengths.len() != in_types.len() {
        return Err(ManifestError::ArityMismatch {
            line: in_type_entry.line.max(in_len_entry.line),
            function: name.to_string(),
            direction: Direction::Input,
            lengths: in_lengths.len(),
            types: in_types.len(),
        });
    }
    let arity = out_types.len() + in_types.len();
    if arity > MAX_ARGS {
        return Err(ManifestError::TooManyArguments {
            line: section.line,
            function: name.to_string(),
            arity,
        });
    }

    let overridable = section.get("overridable").map(parse_flag).transpose()?.unwrap_or(false);
    let reentrant = section.get("reentrant").map(parse_flag).transpose()?.unwrap_or(false);

    Ok(FunctionShape {
        name: name.to_string(),
        out_lengths,
        out_types,
        in_lengths,
        in_types,
        overridable,
        reentrant,
    })
}

fn valid_symbol(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

impl PluginManifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let doc = keyfile::parse(text)?;
        let mut library = None;
        for entry in &doc.preamble.entries {
            match entry.key.as_str() {
                "library" => library = Some(PathBuf::from(&entry.value)),
                _ => {
                    return Err(ManifestError::UnknownKey {
                        line: entry.line,
                        key: entry.key.clone(),
                    })
                }
            }
        }

        let mut seen = HashSet::new();
        let mut functions = Vec::with_capacity(doc.sections.len());
        for section in &doc.sections {
            let name = section
                .header
                .strip_prefix("function")
                .filter(|rest| rest.starts_with(char::is_whitespace))
                .map(str::trim)
                .filter(|n| valid_symbol(n))
                .ok_or_else(|| ManifestError::BadSection {
                    line: section.line,
                    header: section.header.clone(),
                })?;
            if !seen.insert(name.to_string()) {
                return Err(ManifestError::DuplicateFunction {
                    line: section.line,
                    name: name.to_string(),
                });
            }
            functions.push(parse_function(section, name)?);
        }
        Ok(Self { library, functions })
    }

    pub fn function(&self, name: &str) -> Option<&FunctionShape> {
        self.functions.iter().find(|f| f.name == name)
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for PluginManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(lib) = &self.library {
            writeln!(f, "library = {}", lib.display())?;
        }
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 || self.library.is_some() {
                writeln!(f)?;
            }
            writeln!(f, "[function {}]", func.name)?;
            writeln!(f, "out_lengths = {}", join(&func.out_lengths))?;
            writeln!(f, "out_types = {}", join(&func.out_types))?;
            writeln!(f, "in_lengths = {}", join(&func.in_lengths))?;
            writeln!(f, "in_types = {}", join(&func.in_types))?;
            writeln!(f, "overridable = {}", func.overridable)?;
            writeln!(f, "reentrant = {}", func.reentrant)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FUN: &str = "\
# the answer
[function fun]
out_lengths = 1
out_types = INT32
in_lengths = 1
in_types = INT32
overridable = true
";

    #[test]
    fn parses_single_function() {
        let m = PluginManifest::parse(FUN).unwrap();
        let f = m.function("fun").unwrap();
        assert_eq!(f.out_lengths, vec![1]);
        assert_eq!(f.in_types, vec![ScalarType::Int32]);
        assert!(f.overridable);
        assert!(!f.reentrant);
    }

    #[test]
    fn arity_mismatch_names_direction_and_line() {
        let text = FUN.replace("in_types = INT32", "in_types = INT32, FLOAT32");
        match PluginManifest::parse(&text).unwrap_err() {
            ManifestError::ArityMismatch {
                line,
                direction,
                lengths,
                types,
                ..
            } => {
                assert_eq!(line, 6);
                assert_eq!(direction, Direction::Input);
                assert_eq!((lengths, types), (1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_and_length_errors_are_distinct() {
        let bad_type = FUN.replace("out_types = INT32", "out_types = INT");
        assert!(matches!(
            PluginManifest::parse(&bad_type),
            Err(ManifestError::UnknownType { line: 4, .. })
        ));
        let bad_len = FUN.replace("in_lengths = 1", "in_lengths = 0");
        assert!(matches!(
            PluginManifest::parse(&bad_len),
            Err(ManifestError::InvalidLength { line: 5, .. })
        ));
    }

    #[test]
    fn structural_errors() {
        let dup = format!("{FUN}{FUN}");
        assert!(matches!(
            PluginManifest::parse(&dup),
            Err(ManifestError::DuplicateFunction { .. })
        ));
        let missing = FUN.replace("in_types = INT32\n", "");
        assert!(matches!(
            PluginManifest::parse(&missing),
            Err(ManifestError::MissingKey { key: "in_types", .. })
        ));
        let unknown = FUN.replace("overridable", "overrideable");
        assert!(matches!(
            PluginManifest::parse(&unknown),
            Err(ManifestError::UnknownKey { .. })
        ));
        let flag = FUN.replace("= true", "= yes");
        assert!(matches!(
            PluginManifest::parse(&flag),
            Err(ManifestError::InvalidFlag { .. })
        ));
        assert!(matches!(
            PluginManifest::parse("[fun]\n"),
            Err(ManifestError::BadSection { .. })
        ));
        assert!(matches!(
            PluginManifest::parse("[function 9x]\n"),
            Err(ManifestError::BadSection { .. })
        ));
        assert!(matches!(
            PluginManifest::parse("[function f\n"),
            Err(ManifestError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn too_many_arguments_rejected() {
        let text = "[function f]\nout_lengths = 1,1,1,1,1,1,1,1,1\nout_types = INT32,INT32,INT32,INT32,INT32,INT32,INT32,INT32,INT32\nin_lengths = 1,1,1,1,1,1,1,1\nin_types = INT32,INT32,INT32,INT32,INT32,INT32,INT32,INT32\n";
        assert!(matches!(
            PluginManifest::parse(text),
            Err(ManifestError::TooManyArguments { arity: 17, .. })
        ));
    }

    fn shape_strategy() -> impl Strategy<Value = FunctionShape> {
        let ty = prop::sample::select(ScalarType::ALL.to_vec());
        (
            "[a-z_][a-z0-9_]{0,8}",
            prop::collection::vec((1usize..50, ty.clone()), 1..4),
            prop::collection::vec((1usize..50, ty), 1..4),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(name, outs, ins, overridable, reentrant)| FunctionShape {
                name,
                out_lengths: outs.iter().map(|o| o.0).collect(),
                out_types: outs.iter().map(|o| o.1).collect(),
                in_lengths: ins.iter().map(|i| i.0).collect(),
                in_types: ins.iter().map(|i| i.1).collect(),
                overridable,
                reentrant,
            })
    }

    proptest! {
        #[test]
        fn display_round_trips(shapes in prop::collection::vec(shape_strategy(), 0..4), lib in any::<bool>()) {
            let mut seen = HashSet::new();
            let functions: Vec<_> = shapes.into_iter().filter(|s| seen.insert(s.name.clone())).collect();
            let manifest = PluginManifest {
                library: lib.then(|| PathBuf::from("libfixture.so")),
                functions,
            };
            let text = manifest.to_string();
            prop_assert_eq!(PluginManifest::parse(&text).unwrap(), manifest);
        }
    }
}
