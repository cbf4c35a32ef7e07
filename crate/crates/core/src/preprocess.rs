//! Input preparation before the record loop: built-in stable sorting,
//! quote-to-brace rewriting of foreign CSV, and external commands.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::dialect::{RawRecord, Separator};
use crate::filters::parse_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortKeyType {
    String,
    Number,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    /// 1-based column position.
    Index(usize),
    /// Header entry, resolved when sorting a headed file.
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortKey {
    pub column: ColumnRef,
    pub key_type: SortKeyType,
    pub order: SortOrder,
}

/// Ordered list of sort keys, e.g. parsed from
/// `group,amount:number:desc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortSpec {
    pub keys: Vec<SortKey>,
}

impl SortSpec {
    /// Parse `col[:type][:order]` items separated by commas. `col` is a
    /// 1-based position or a header entry; type is `string` (default)
    /// or `number`; order is `asc` (default) or `desc`.
    pub fn parse(src: &str) -> Result<Self, PreprocessError> {
        let mut keys = Vec::new();
        for item in src.split(',') {
            let item = item.trim();
            if item.is_empty() {
                return Err(PreprocessError::EmptySortSpec);
            }
            let mut parts = item.split(':');
            let column = parts.next().expect("split yields at least one part").trim();
            let column = match column.parse::<usize>() {
                Ok(0) => return Err(PreprocessError::BadSortToken(column.to_string())),
                Ok(index) => ColumnRef::Index(index),
                Err(_) => ColumnRef::Name(column.to_string()),
            };
            let mut key = SortKey {
                column,
                key_type: SortKeyType::String,
                order: SortOrder::Ascending,
            };
            for part in parts {
                match part.trim() {
                    "string" => key.key_type = SortKeyType::String,
                    "number" => key.key_type = SortKeyType::Number,
                    "asc" => key.order = SortOrder::Ascending,
                    "desc" => key.order = SortOrder::Descending,
                    other => return Err(PreprocessError::BadSortToken(other.to_string())),
                }
            }
            keys.push(key);
        }
        if keys.is_empty() {
            return Err(PreprocessError::EmptySortSpec);
        }
        Ok(SortSpec { keys })
    }
}

/// What to do with the input before the loop sees it.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum PreprocessSpec {
    #[default]
    None,
    BuiltinSort(SortSpec),
    /// Rewrite doublequote-quoted fields as brace groups.
    QuoteTransform {
        source_separator: Separator,
    },
    External {
        command: String,
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("empty sort specification")]
    EmptySortSpec,
    #[error("unknown token `{0}` in sort specification")]
    BadSortToken(String),
    #[error("sort column `{0}` not found in header")]
    UnknownSortColumn(String),
    #[error("unterminated quote on line {0}")]
    UnterminatedQuote(u64),
    #[error("preprocessor command is empty")]
    EmptyCommand,
    #[error("preprocessor exited with {status}: {diagnostics}")]
    PreprocessorFailed {
        status: String,
        diagnostics: String,
    },
    #[error("preprocessor produced no output at {0}")]
    MissingOutput(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One comparison key, ordered so that numbers come before values that
/// fail to parse as numbers.
enum Rank<'a> {
    Num(f64),
    Text(&'a str),
}

impl Rank<'_> {
    fn compare(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Rank::Num(a), Rank::Num(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            (Rank::Num(_), Rank::Text(_)) => Ordering::Less,
            (Rank::Text(_), Rank::Num(_)) => Ordering::Greater,
            (Rank::Text(a), Rank::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
        }
    }
}

fn field<'a>(record: &'a RawRecord, index: usize) -> &'a str {
    record.fields.get(index - 1).map(String::as_str).unwrap_or("")
}

/// Stable multi-key sort of data records. `header` resolves name
/// columns; records keep their original relative order on ties.
pub fn sort_records(
    records: &mut [RawRecord],
    spec: &SortSpec,
    header: Option<&[String]>,
) -> Result<(), PreprocessError> {
    let mut resolved: Vec<(usize, SortKeyType, SortOrder)> = Vec::with_capacity(spec.keys.len());
    for key in &spec.keys {
        let index = match &key.column {
            ColumnRef::Index(i) => *i,
            ColumnRef::Name(name) => header
                .and_then(|h| h.iter().position(|entry| entry == name))
                .map(|i| i + 1)
                .ok_or_else(|| PreprocessError::UnknownSortColumn(name.clone()))?,
        };
        resolved.push((index, key.key_type, key.order));
    }
    records.sort_by(|a, b| {
        for &(index, key_type, order) in &resolved {
            let (va, vb) = (field(a, index), field(b, index));
            let ordering = match key_type {
                SortKeyType::String => va.as_bytes().cmp(vb.as_bytes()),
                SortKeyType::Number => {
                    fn rank(v: &str) -> Rank<'_> {
                        match parse_number(v) {
                            Some(n) => Rank::Num(n),
                            None => Rank::Text(v),
                        }
                    }
                    rank(va).compare(&rank(vb))
                }
            };
            let ordering = match order {
                SortOrder::Ascending => ordering,
                SortOrder::Descending => ordering.reverse(),
            };
            if ordering != Ordering::Equal {
                return ordering;
            }
        }
        Ordering::Equal
    });
    Ok(())
}

/// Rewrite one doublequote-quoted line into the brace-group dialect:
/// every quoted field becomes `{...}` with doubled quotes collapsed,
/// and separators switch from `source` to `target`.
pub fn quote_transform(
    line: &str,
    line_no: u64,
    source: Separator,
    target: Separator,
) -> Result<String, PreprocessError> {
    let sep = source.as_char();
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    while let Some(ch) = chars.next() {
        if in_quotes {
            if ch == '"' {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    out.push('"');
                } else {
                    in_quotes = false;
                    out.push('}');
                }
            } else {
                out.push(ch);
            }
        } else if ch == '"' {
            in_quotes = true;
            out.push('{');
        } else if ch == sep {
            out.push(target.as_char());
        } else {
            out.push(ch);
        }
    }
    if in_quotes {
        return Err(PreprocessError::UnterminatedQuote(line_no));
    }
    Ok(out)
}

/// Default output path of an external preprocessor:
/// `<stem>_sorted.csv` next to the input.
pub fn default_output_path(input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    input.with_file_name(format!("{stem}_sorted.csv"))
}

/// Run an external preprocessor as `command... input output` and
/// return the output path on success. Success requires a zero exit
/// status and a non-empty output file.
pub fn run_external(
    command: &str,
    input: &Path,
    output: Option<&Path>,
) -> Result<PathBuf, PreprocessError> {
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or(PreprocessError::EmptyCommand)?;
    let out_path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_output_path(input));
    let result = Command::new(program)
        .args(parts)
        .arg(input)
        .arg(&out_path)
        .output()?;
    if !result.status.success() {
        return Err(PreprocessError::PreprocessorFailed {
            status: result.status.to_string(),
            diagnostics: String::from_utf8_lossy(&result.stderr).trim_end().to_string(),
        });
    }
    match std::fs::metadata(&out_path) {
        Ok(meta) if meta.len() > 0 => Ok(out_path),
        _ => Err(PreprocessError::MissingOutput(out_path)),
    }
}
