//! Line-oriented `[section]` / `key = value` grammar shared by run configs
//! and plugin manifests. `#` starts a comment when it opens a line or follows
//! whitespace.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyfileError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for KeyfileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for KeyfileError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Section {
    /// Text between the brackets, trimmed. Empty for the preamble.
    pub header: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    /// Keys appearing before the first section header.
    pub preamble: Section,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn section(&self, header: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.header == header)
    }
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

pub fn parse(text: &str) -> Result<Document, KeyfileError> {
    let mut doc = Document::default();
    let mut current: Option<Section> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let header = rest.strip_suffix(']').ok_or_else(|| KeyfileError {
                line: line_no,
                message: format!("unterminated section header `{line}`"),
            })?;
            let header = header.trim();
            if header.is_empty() {
                return Err(KeyfileError {
                    line: line_no,
                    message: "empty section header".into(),
                });
            }
            if let Some(done) = current.take() {
                doc.sections.push(done);
            }
            current = Some(Section {
                header: header.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| KeyfileError {
            line: line_no,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(KeyfileError {
                line: line_no,
                message: format!("invalid key `{key}`"),
            });
        }
        let target = current.as_mut().unwrap_or(&mut doc.preamble);
        if target.get(key).is_some() {
            return Err(KeyfileError {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
        target.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: line_no,
        });
    }
    if let Some(done) = current {
        doc.sections.push(done);
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_keys_and_comments() {
        let doc = parse(
            "# leading comment\nlibrary = ./libx.so\n\n[function fun]\nout_lengths = 1 # trailing\nin_types=INT32\n",
        )
        .unwrap();
        assert_eq!(doc.preamble.value("library"), Some("./libx.so"));
        let s = doc.section("function fun").unwrap();
        assert_eq!(s.line, 4);
        assert_eq!(s.value("out_lengths"), Some("1"));
        assert_eq!(s.get("in_types").unwrap().line, 6);
    }

    #[test]
    fn hash_inside_value_kept() {
        let doc = parse("[a]\npath = dir#1/file\n").unwrap();
        assert_eq!(doc.section("a").unwrap().value("path"), Some("dir#1/file"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(parse("[a]\nnot a pair\n").unwrap_err().line, 2);
        assert_eq!(parse("\n\n[broken\n").unwrap_err().line, 3);
        assert_eq!(parse("[a]\nx = 1\nx = 2\n").unwrap_err().line, 3);
        assert_eq!(parse("[]\n").unwrap_err().line, 1);
        assert_eq!(parse("[a]\nbad key = 1\n").unwrap_err().line, 2);
    }
}
