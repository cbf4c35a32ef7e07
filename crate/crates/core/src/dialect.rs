//! Tokenizing an input stream into records.
//!
//! Fields are split at the separator outside `{...}` groups. A brace
//! group masks separators and may itself contain nested groups. Brace
//! groups never span lines.

use std::io::BufRead;

use thiserror::Error;

/// Field separator of a dialect. Exactly one code point per variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Separator {
    Comma,
    Semicolon,
    Pipe,
    Tab,
}

impl Separator {
    pub fn as_char(self) -> char {
        match self {
            Separator::Comma => ',',
            Separator::Semicolon => ';',
            Separator::Pipe => '|',
            Separator::Tab => '\t',
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "comma" => Some(Separator::Comma),
            "semicolon" => Some(Separator::Semicolon),
            "pipe" => Some(Separator::Pipe),
            "tab" => Some(Separator::Tab),
            _ => None,
        }
    }
}

/// Tokenization rules for one input stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialect {
    pub separator: Separator,
    /// Strip leading/trailing ASCII whitespace outside brace groups.
    pub trim_fields: bool,
    /// Remove one outermost `{...}` pair from a fully braced field.
    pub strip_outer_braces: bool,
}

impl Default for Dialect {
    fn default() -> Self {
        Dialect {
            separator: Separator::Comma,
            trim_fields: true,
            strip_outer_braces: true,
        }
    }
}

/// One physical input line with its parsed fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    /// 1-based over all lines, header included.
    pub input_line_no: u64,
    /// The line exactly as read, terminator stripped.
    pub raw_line: String,
    pub fields: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("unbalanced braces at byte {0}")]
    UnbalancedBraces(usize),
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid UTF-8 on line {0}")]
    Utf8(u64),
    #[error("line {line}: {source}")]
    Tokenize {
        line: u64,
        source: TokenizeError,
    },
}

/// Split `line` into fields. Separators inside `{...}` do not split.
pub fn tokenize_line(line: &str, dialect: &Dialect) -> Result<Vec<String>, TokenizeError> {
    let sep = dialect.separator.as_char();
    let mut fields = Vec::new();
    let mut depth: i32 = 0;
    let mut start = 0usize;
    for (pos, ch) in line.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(TokenizeError::UnbalancedBraces(pos));
                }
            }
            c if c == sep && depth == 0 => {
                fields.push(finish_field(&line[start..pos], dialect));
                start = pos + c.len_utf8();
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(TokenizeError::UnbalancedBraces(line.len()));
    }
    fields.push(finish_field(&line[start..], dialect));
    Ok(fields)
}

fn finish_field(raw: &str, dialect: &Dialect) -> String {
    let mut field = raw;
    if dialect.trim_fields {
        // With a tab separator, tabs are data; only spaces are padding.
        let pad: &[char] = if dialect.separator == Separator::Tab {
            &[' ']
        } else {
            &[' ', '\t']
        };
        field = field.trim_matches(pad);
    }
    if dialect.strip_outer_braces && is_fully_braced(field) {
        field = &field[1..field.len() - 1];
    }
    field.to_string()
}

/// True if the field is exactly one balanced `{...}` group.
fn is_fully_braced(field: &str) -> bool {
    if !field.starts_with('{') || !field.ends_with('}') || field.len() < 2 {
        return false;
    }
    let mut depth = 0i32;
    for (pos, ch) in field.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 && pos != field.len() - 1 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

/// Join fields back into a line, wrapping any field that contains the
/// separator in a brace group so it tokenizes to the same field list.
pub fn join_fields(fields: &[String], dialect: &Dialect) -> String {
    let sep = dialect.separator.as_char();
    fields
        .iter()
        .map(|f| {
            if f.contains(sep) {
                format!("{{{f}}}")
            } else {
                f.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(&sep.to_string())
}

/// Iterator over the records of a UTF-8 text stream.
///
/// Yields one record per physical line in order, `input_line_no`
/// assigned 1,2,3,... Blank lines yield a record with a single empty
/// field so the consistency check can reject them downstream.
pub struct RecordReader<R: BufRead> {
    reader: R,
    dialect: Dialect,
    line_no: u64,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, dialect: Dialect) -> Self {
        RecordReader {
            reader,
            dialect,
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<RawRecord, ReadError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = Vec::new();
        match self.reader.read_until(b'\n', &mut buf) {
            Ok(0) => return None,
            Ok(_) => {}
            Err(e) => return Some(Err(ReadError::Io(e))),
        }
        self.line_no += 1;
        if buf.ends_with(b"\n") {
            buf.pop();
        }
        if buf.ends_with(b"\r") {
            buf.pop();
        }
        let line = match String::from_utf8(buf) {
            Ok(s) => s,
            Err(_) => return Some(Err(ReadError::Utf8(self.line_no))),
        };
        let fields = match tokenize_line(&line, &self.dialect) {
            Ok(f) => f,
            Err(source) => {
                return Some(Err(ReadError::Tokenize {
                    line: self.line_no,
                    source,
                }))
            }
        };
        Some(Ok(RawRecord {
            input_line_no: self.line_no,
            raw_line: line,
            fields,
        }))
    }
}

/// Read every record of `reader` into memory.
pub fn read_records<R: BufRead>(reader: R, dialect: &Dialect) -> Result<Vec<RawRecord>, ReadError> {
    RecordReader::new(reader, dialect.clone()).collect()
}
