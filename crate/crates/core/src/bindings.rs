//! Column-to-name bindings and the per-record environment.

use std::collections::HashMap;

use thiserror::Error;

use crate::emitters::{escape_field, EscapeSet};
use crate::pipeline::Counters;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BindingError {
    #[error("unknown header key `{0}`")]
    UnknownHeaderKey(String),
    #[error("`{0}` is not a valid binding name")]
    InvalidName(String),
    #[error("header entry `{entry}` (column {index}) is not usable as a name")]
    HeaderNameUnusable { entry: String, index: usize },
    #[error("binding `{0}` collides with a reserved name")]
    NameCollision(String),
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_reserved(name: &str) -> bool {
    if matches!(name, "row" | "inputline" | "line" | "linetorow") {
        return true;
    }
    name.strip_prefix("col")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Mapping from binding names to 1-based column indices.
///
/// Integer keys bind positionally right away; header-entry keys stay
/// pending until [`BindingTable::derive_from_header`] sees the header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BindingTable {
    resolved: HashMap<String, usize>,
    pending: Vec<(String, String)>,
    pub auto_from_header: bool,
    pub prefix: String,
}

impl BindingTable {
    /// Add assignments `(key, name)`. Keys are header entries or
    /// positive integer literals. Existing assignments are kept; a
    /// repeated name is overridden by the later assignment.
    pub fn add_assignments<I>(&mut self, assignments: I) -> Result<(), BindingError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (key, name) in assignments {
            if !is_identifier(&name) {
                return Err(BindingError::InvalidName(name));
            }
            if is_reserved(&name) {
                return Err(BindingError::NameCollision(name));
            }
            if let Ok(index) = key.parse::<usize>() {
                if index == 0 {
                    return Err(BindingError::UnknownHeaderKey(key));
                }
                self.resolved.insert(name, index);
            } else {
                self.pending.push((key, name));
            }
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.resolved.clear();
        self.pending.clear();
    }

    /// Resolve pending header-entry keys and, with `auto_from_header`,
    /// bind every header entry (with prefix) to its column. Returns
    /// warnings for duplicate header entries (last occurrence wins).
    pub fn derive_from_header(&mut self, header: &[String]) -> Result<Vec<String>, BindingError> {
        let mut warnings = Vec::new();
        let mut by_entry: HashMap<&str, usize> = HashMap::new();
        for (i, entry) in header.iter().enumerate() {
            if by_entry.insert(entry.as_str(), i + 1).is_some() {
                warnings.push(format!("duplicate header entry `{entry}`; binding the last occurrence"));
            }
        }
        for (key, name) in std::mem::take(&mut self.pending) {
            match by_entry.get(key.as_str()) {
                Some(&index) => {
                    self.resolved.insert(name, index);
                }
                None => return Err(BindingError::UnknownHeaderKey(key)),
            }
        }
        if self.auto_from_header {
            for (i, entry) in header.iter().enumerate() {
                if !is_identifier(entry) {
                    return Err(BindingError::HeaderNameUnusable {
                        entry: entry.clone(),
                        index: i + 1,
                    });
                }
                let name = format!("{}{}", self.prefix, entry);
                if is_reserved(&name) {
                    return Err(BindingError::NameCollision(name));
                }
                // Last duplicate wins; forward iteration does that.
                self.resolved.insert(name, i + 1);
            }
        }
        Ok(warnings)
    }

    /// True if no header-entry keys are still waiting for a header.
    pub fn fully_resolved(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn pending_keys(&self) -> impl Iterator<Item = &str> {
        self.pending.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.resolved.iter().map(|(name, &idx)| (name.as_str(), idx))
    }

    /// Build the environment for one consistent record.
    pub fn resolve(&self, fields: &[String], counters: &Counters, raw_line: &str) -> Environment {
        Environment {
            fields: fields.to_vec(),
            named: self.resolved.clone(),
            row: counters.row,
            input_line: counters.input_line,
            raw_line: raw_line.to_string(),
        }
    }
}

/// Name-to-value map for one record: bound names, positional
/// `col1..colN`, `row`, `inputline`, `line`, and `linetorow`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Environment {
    fields: Vec<String>,
    named: HashMap<String, usize>,
    row: u64,
    input_line: u64,
    raw_line: String,
}

impl Environment {
    /// Environment with no fields, for hooks outside any record.
    pub fn empty(row: u64, input_line: u64) -> Self {
        Environment {
            fields: Vec::new(),
            named: HashMap::new(),
            row,
            input_line,
            raw_line: String::new(),
        }
    }

    pub fn row(&self) -> u64 {
        self.row
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    /// Resolve a placeholder name. Field-derived values (`colN`, bound
    /// names, `linetorow`) are escaped with `esc`; counters and the raw
    /// `line` pass through untouched.
    pub fn lookup(&self, name: &str, esc: &EscapeSet) -> Option<String> {
        match name {
            "row" => return Some(self.row.to_string()),
            "inputline" => return Some(self.input_line.to_string()),
            "line" => return Some(self.raw_line.clone()),
            "linetorow" => {
                return Some(
                    self.fields
                        .iter()
                        .map(|f| escape_field(f, esc))
                        .collect::<Vec<_>>()
                        .join(" & "),
                )
            }
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("col") {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().ok()?;
                return self
                    .fields
                    .get(index.checked_sub(1)?)
                    .map(|f| escape_field(f, esc));
            }
        }
        let &index = self.named.get(name)?;
        self.fields
            .get(index - 1)
            .map(|f| escape_field(f, esc))
    }
}
