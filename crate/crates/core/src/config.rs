//! Option keys, config files, styles, and layered resolution.
//!
//! All behavior is driven by a flat key space (see [`KEYS`]). Keys come
//! from three layers applied in order — built-in defaults, the config
//! file's global section, then styles and explicit flags — with the
//! last writer winning.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bindings::{BindingError, BindingTable};
use crate::dialect::{Dialect, Separator};
use crate::emitters::{EscapeSet, TableKind, TableSpec};
use crate::filters::{self, FilterExpr, NumOp, SyntaxError, Term};
use crate::pipeline::{ConsistencyPolicy, HookSet, OnError};
use crate::preprocess::{PreprocessError, PreprocessSpec, SortSpec};
use crate::templates::{Template, TemplateParseError};

/// Everything the record loop needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionSet {
    pub dialect: Dialect,
    pub head: bool,
    pub bindings: BindingTable,
    pub consistency: ConsistencyPolicy,
    pub hooks: HookSet,
    pub filter: Option<FilterExpr>,
    pub table: TableSpec,
    pub escape: EscapeSet,
    pub preprocess: PreprocessSpec,
    pub file: Option<PathBuf>,
    pub verbose: bool,
}

impl Default for OptionSet {
    fn default() -> Self {
        OptionSet {
            dialect: Dialect::default(),
            head: true,
            bindings: BindingTable::default(),
            consistency: ConsistencyPolicy::default(),
            hooks: HookSet::default(),
            filter: None,
            table: TableSpec::default(),
            escape: EscapeSet::none(),
            preprocess: PreprocessSpec::default(),
            file: None,
            verbose: false,
        }
    }
}

/// How a key consumes its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyValue {
    /// `key = value` required.
    Required,
    /// Boolean; bare key means `true`.
    Bool,
    /// Bare key only.
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct KeyDef {
    pub name: &'static str,
    pub value: KeyValue,
    pub help: &'static str,
}

macro_rules! keys {
    ($(($name:literal, $value:ident, $help:literal),)*) => {
        &[$(KeyDef { name: $name, value: KeyValue::$value, help: $help },)*]
    };
}

/// Every option key, shared by config files and the command line.
pub const KEYS: &[KeyDef] = keys![
    ("separator", Required, "field separator: comma, semicolon, pipe, or tab"),
    ("head", Bool, "treat the first line as a header"),
    ("no-head", None, "treat every line as data"),
    ("column-names", Required, "bindings `key=name,...`; keys are header entries or positions"),
    ("clear-column-names", None, "drop all column name bindings"),
    ("auto-column-names", Bool, "bind every header entry as a name"),
    ("column-name-prefix", Required, "prefix for automatic header names"),
    ("column-count", Required, "expected number of columns"),
    ("check-column-count", Bool, "skip lines with a deviating column count"),
    ("no-check-column-count", None, "accept lines regardless of column count"),
    ("on-column-count-error", Required, "inconsistent-line policy: ignore, warn, or abort"),
    ("on-column-count-error-command", Required, "template rendered for inconsistent lines"),
    ("filter", Required, "filter expression; rows failing it are not processed"),
    ("filter-strcmp", Required, "accept rows where {A}{B} compare equal as strings"),
    ("filter-not-strcmp", Required, "accept rows where {A}{B} differ as strings"),
    ("filter-equal", Required, "accept rows where {A}{B} compare equal as numbers"),
    ("filter-not-equal", Required, "accept rows where {A}{B} differ as numbers"),
    ("filter-accept-all", None, "remove any filter"),
    ("filter-reject-all", None, "reject every row"),
    ("command", Required, "template rendered once per accepted row"),
    ("before-reading", Required, "template fired before any line is read"),
    ("after-head", Required, "template fired after the header line"),
    ("before-filter", Required, "template fired for every consistent line"),
    ("late-after-head", Required, "template fired at the first accepted row"),
    ("late-after-line", Required, "template fired between accepted rows"),
    ("late-after-first-line", Required, "late hook override for the first row"),
    ("late-after-last-line", Required, "late hook fired after the last accepted row"),
    ("before-line", Required, "template fired before each accepted row"),
    ("before-first-line", Required, "before-line override for the first row"),
    ("after-line", Required, "template fired after each accepted row"),
    ("after-first-line", Required, "after-line override for the first row"),
    ("after-reading", Required, "template fired after the whole input"),
    ("table", Required, "table scaffold kind (tabular, autobooktabular, markdown, ...)"),
    ("table-format", Required, "column format for the explicit table kinds"),
    ("before-table", Required, "template emitted before the table scaffold"),
    ("table-head", Required, "template replacing the generated table head"),
    ("table-foot", Required, "template replacing the generated table foot"),
    ("after-table", Required, "template emitted after the table scaffold"),
    ("respect-tab", Bool, "escape tab characters"),
    ("respect-percent", Bool, "escape %"),
    ("respect-sharp", Bool, "escape #"),
    ("respect-dollar", Bool, "escape $"),
    ("respect-and", Bool, "escape &"),
    ("respect-backslash", Bool, "escape backslashes"),
    ("respect-underscore", Bool, "escape _"),
    ("respect-tilde", Bool, "escape ~"),
    ("respect-circumflex", Bool, "escape ^"),
    ("respect-leftbrace", Bool, "escape {"),
    ("respect-rightbrace", Bool, "escape }"),
    ("respect-all", None, "escape every special character"),
    ("respect-none", None, "pass every character through"),
    ("sort-by", Required, "sort input by `col[:type][:order],...` before processing"),
    ("new-sorting-rule", Required, "define a named rule `NAME=spec`"),
    ("sort-by-rule", Required, "sort input by a named rule"),
    ("quote-transform", Required, "rewrite doublequote CSV with the given source separator"),
    ("preprocessor", Required, "external command run as `command input output`"),
    ("preprocessor-output", Required, "output path for the external preprocessor"),
    ("no-preprocess", None, "process the input file as-is"),
    ("style", Required, "apply a named style, optionally `NAME(arg|arg)`"),
    ("verbose", Bool, "report counters on standard error"),
];

pub fn key_def(name: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|def| def.name == name)
}

/// One `key = value` (or bare `key`) occurrence.
pub type KeyAssignment = (String, Option<String>);

/// A named, reusable bundle of key assignments. Values may use `$1`
/// through `$9` as parameters; `$$` is a literal dollar sign.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleDef {
    pub name: String,
    pub entries: Vec<KeyAssignment>,
    pub parameter_slots: usize,
}

impl StyleDef {
    pub fn new(name: impl Into<String>, entries: Vec<KeyAssignment>) -> Self {
        let parameter_slots = entries
            .iter()
            .filter_map(|(_, v)| v.as_deref())
            .flat_map(max_parameter)
            .max()
            .unwrap_or(0);
        StyleDef {
            name: name.into(),
            entries,
            parameter_slots,
        }
    }
}

fn max_parameter(value: &str) -> Option<usize> {
    let mut max = None;
    let mut chars = value.chars().peekable();
    while let Some(ch) = chars.next() {
        if ch == '$' {
            match chars.peek() {
                Some('$') => {
                    chars.next();
                }
                Some(d @ '1'..='9') => {
                    let slot = d.to_digit(10).unwrap() as usize;
                    max = Some(max.map_or(slot, |m: usize| m.max(slot)));
                    chars.next();
                }
                _ => {}
            }
        }
    }
    max
}

fn substitute_parameters(value: &str, args: &[String]) -> String {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars().peekable();
    while let Some(ch) = chars.next() {
        if ch == '$' {
            match chars.peek() {
                Some('$') => {
                    chars.next();
                    out.push('$');
                }
                Some(d @ '1'..='9') => {
                    let slot = d.to_digit(10).unwrap() as usize;
                    out.push_str(&args[slot - 1]);
                    chars.next();
                }
                _ => out.push('$'),
            }
        } else {
            out.push(ch);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StyleRegistry {
    styles: HashMap<String, StyleDef>,
}

impl StyleRegistry {
    pub fn define(&mut self, style: StyleDef) {
        self.styles.insert(style.name.clone(), style);
    }

    pub fn get(&self, name: &str) -> Option<&StyleDef> {
        self.styles.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.styles.keys().map(String::as_str)
    }

    pub fn merge(&mut self, other: StyleRegistry) {
        self.styles.extend(other.styles);
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Parsed config file: global assignments plus style definitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub globals: Vec<KeyAssignment>,
    pub styles: StyleRegistry,
}

/// Parse config text: `key = value` lines, `#` comments, and
/// `[style NAME]` sections. Values may be wrapped in double quotes to
/// keep leading or trailing spaces.
pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let mut file = ConfigFile::default();
    let mut section: Option<(String, Vec<KeyAssignment>)> = None;
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or(ConfigError::Syntax {
                line: line_no,
                message: "unterminated section header".to_string(),
            })?;
            let name = inner
                .strip_prefix("style")
                .map(str::trim)
                .filter(|n| !n.is_empty() && !n.contains(char::is_whitespace))
                .ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: format!("expected `[style NAME]`, got `[{inner}]`"),
                })?;
            if let Some((name, entries)) = section.take() {
                file.styles.define(StyleDef::new(name, entries));
            }
            section = Some((name.to_string(), Vec::new()));
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((key, value)) => {
                let value = value.trim();
                let value = value
                    .strip_prefix('"')
                    .and_then(|v| v.strip_suffix('"'))
                    .unwrap_or(value);
                (key.trim(), Some(value.to_string()))
            }
            None => (line, None),
        };
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("`{line}` is not a key assignment"),
            });
        }
        let assignment = (key.to_string(), value);
        match &mut section {
            Some((_, entries)) => entries.push(assignment),
            None => file.globals.push(assignment),
        }
    }
    if let Some((name, entries)) = section {
        file.styles.define(StyleDef::new(name, entries));
    }
    Ok(file)
}

pub fn load_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Locate the config file: an explicit path wins, otherwise
/// `csvforge.conf` in the working directory if present.
pub fn find_config(explicit: Option<&Path>) -> Option<PathBuf> {
    if let Some(path) = explicit {
        return Some(path.to_path_buf());
    }
    let default = Path::new("csvforge.conf");
    default.exists().then(|| default.to_path_buf())
}

const MAX_STYLE_DEPTH: usize = 32;

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("unknown option key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` requires a value")]
    MissingValue(String),
    #[error("key `{0}` takes no value")]
    UnexpectedValue(String),
    #[error("bad value `{value}` for key `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("in template for `{key}`: {source}")]
    Template {
        key: String,
        source: TemplateParseError,
    },
    #[error(transparent)]
    Filter(#[from] SyntaxError),
    #[error(transparent)]
    Binding(#[from] BindingError),
    #[error(transparent)]
    Sort(#[from] PreprocessError),
    #[error("unknown style `{0}`")]
    UnknownStyle(String),
    #[error("style `{0}` is applied recursively")]
    StyleCycle(String),
    #[error("style nesting deeper than {MAX_STYLE_DEPTH} at `{0}`")]
    StyleDepth(String),
    #[error("style `{style}` needs {expected} arguments, got {given}")]
    StyleArity {
        style: String,
        expected: usize,
        given: usize,
    },
    #[error("cannot read template file {path}: {source}")]
    TemplateFile {
        path: PathBuf,
        source: std::io::Error,
    },
}

struct Resolver<'a> {
    options: OptionSet,
    registry: &'a StyleRegistry,
    rules: HashMap<String, SortSpec>,
    active_styles: Vec<String>,
    preprocessor_output: Option<PathBuf>,
}

/// Apply `layers` of key assignments over the defaults, in order.
pub fn resolve(
    layers: &[Vec<KeyAssignment>],
    registry: &StyleRegistry,
) -> Result<OptionSet, ResolveError> {
    let mut resolver = Resolver {
        options: OptionSet::default(),
        registry,
        rules: HashMap::new(),
        active_styles: Vec::new(),
        preprocessor_output: None,
    };
    for layer in layers {
        for (key, value) in layer {
            resolver.apply(key, value.as_deref())?;
        }
    }
    if let Some(path) = resolver.preprocessor_output {
        if let PreprocessSpec::External { output, .. } = &mut resolver.options.preprocess {
            *output = Some(path);
        }
    }
    Ok(resolver.options)
}

impl Resolver<'_> {
    fn bad(&self, key: &str, value: &str, reason: impl Into<String>) -> ResolveError {
        ResolveError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    fn template(&self, key: &str, value: &str) -> Result<Template, ResolveError> {
        let source;
        let text = if let Some(path) = value.strip_prefix('@') {
            source = std::fs::read_to_string(path).map_err(|source| {
                ResolveError::TemplateFile {
                    path: PathBuf::from(path),
                    source,
                }
            })?;
            source.strip_suffix('\n').unwrap_or(&source)
        } else {
            value
        };
        Template::parse(text).map_err(|source| ResolveError::Template {
            key: key.to_string(),
            source,
        })
    }

    fn boolean(&self, key: &str, value: Option<&str>) -> Result<bool, ResolveError> {
        match value {
            None | Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(self.bad(key, other, "expected `true` or `false`")),
        }
    }

    /// Split a `{A}{B}` value into its two brace groups.
    fn brace_pair(&self, key: &str, value: &str) -> Result<(String, String), ResolveError> {
        let mut groups = Vec::new();
        let mut depth = 0usize;
        let mut current = String::new();
        for ch in value.trim().chars() {
            match ch {
                '{' => {
                    if depth > 0 {
                        current.push(ch);
                    }
                    depth += 1;
                }
                '}' => {
                    depth = depth
                        .checked_sub(1)
                        .ok_or_else(|| self.bad(key, value, "unbalanced braces"))?;
                    if depth == 0 {
                        groups.push(std::mem::take(&mut current));
                    } else {
                        current.push(ch);
                    }
                }
                _ if depth > 0 => current.push(ch),
                c if c.is_whitespace() => {}
                _ => return Err(self.bad(key, value, "expected two brace groups `{A}{B}`")),
            }
        }
        if depth != 0 || groups.len() != 2 {
            return Err(self.bad(key, value, "expected two brace groups `{A}{B}`"));
        }
        let mut groups = groups.into_iter();
        Ok((groups.next().unwrap(), groups.next().unwrap()))
    }

    /// Brace-pair filter forms desugar onto the expression primitives.
    fn pair_filter(
        &mut self,
        key: &str,
        value: &str,
        build: impl FnOnce(Term, Term) -> FilterExpr,
    ) -> Result<(), ResolveError> {
        let (a, b) = self.brace_pair(key, value)?;
        let term = |s: String| match filters::parse_number(&s) {
            Some(n) => Term::Num(n),
            None => Term::Interp(s),
        };
        self.options.filter = Some(build(term(a), term(b)));
        Ok(())
    }

    fn set_table_kind(&mut self, kind: TableKind) {
        self.options.table.kind = kind;
        let row_break = match kind {
            TableKind::None => None,
            TableKind::Markdown => Some("\n"),
            _ => Some("\\\\\n"),
        };
        if let Some(source) = row_break {
            self.options.hooks.late_after_line =
                Some(Template::parse(source).expect("row break template parses"));
            self.options.hooks.late_after_first_line = None;
            self.options.hooks.late_after_last_line = None;
        }
    }

    fn apply_style(&mut self, key: &str, value: &str) -> Result<(), ResolveError> {
        let (name, args) = match value.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| self.bad(key, value, "unterminated argument list"))?;
                let args: Vec<String> = if inner.is_empty() {
                    Vec::new()
                } else {
                    inner.split('|').map(|a| a.to_string()).collect()
                };
                (name.trim(), args)
            }
            None => (value.trim(), Vec::new()),
        };
        if self.active_styles.iter().any(|n| n == name) {
            return Err(ResolveError::StyleCycle(name.to_string()));
        }
        if self.active_styles.len() >= MAX_STYLE_DEPTH {
            return Err(ResolveError::StyleDepth(name.to_string()));
        }
        let style = self
            .registry
            .get(name)
            .ok_or_else(|| ResolveError::UnknownStyle(name.to_string()))?
            .clone();
        if args.len() != style.parameter_slots {
            return Err(ResolveError::StyleArity {
                style: name.to_string(),
                expected: style.parameter_slots,
                given: args.len(),
            });
        }
        self.active_styles.push(name.to_string());
        let result = style.entries.iter().try_for_each(|(entry_key, entry_value)| {
            let substituted = entry_value
                .as_deref()
                .map(|v| substitute_parameters(v, &args));
            self.apply(entry_key, substituted.as_deref())
        });
        self.active_styles.pop();
        result
    }

    fn apply(&mut self, key: &str, value: Option<&str>) -> Result<(), ResolveError> {
        let def = key_def(key).ok_or_else(|| ResolveError::UnknownKey(key.to_string()))?;
        let required = || value.ok_or_else(|| ResolveError::MissingValue(key.to_string()));
        if def.value == KeyValue::None && value.is_some() {
            return Err(ResolveError::UnexpectedValue(key.to_string()));
        }
        match key {
            "separator" => {
                let value = required()?;
                let separator = Separator::from_name(value)
                    .ok_or_else(|| self.bad(key, value, "expected comma, semicolon, pipe, or tab"))?;
                self.options.dialect.separator = separator;
                if separator == Separator::Tab {
                    self.options.escape.tab = true;
                }
            }
            "head" => self.options.head = self.boolean(key, value)?,
            "no-head" => self.options.head = false,
            "column-names" => {
                let value = required()?;
                let mut assignments = Vec::new();
                for item in value.split(',') {
                    let (k, name) = item
                        .split_once('=')
                        .ok_or_else(|| self.bad(key, value, "expected `key=name` items"))?;
                    assignments.push((k.trim().to_string(), name.trim().to_string()));
                }
                self.options.bindings.add_assignments(assignments)?;
            }
            "clear-column-names" => self.options.bindings.clear(),
            "auto-column-names" => {
                self.options.bindings.auto_from_header = self.boolean(key, value)?
            }
            "column-name-prefix" => self.options.bindings.prefix = required()?.to_string(),
            "column-count" => {
                let value = required()?;
                let count: usize = value
                    .parse()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| self.bad(key, value, "expected a positive integer"))?;
                self.options.consistency.expected_columns = Some(count);
            }
            "check-column-count" => {
                self.options.consistency.check = self.boolean(key, value)?
            }
            "no-check-column-count" => self.options.consistency.check = false,
            "on-column-count-error" => {
                let value = required()?;
                self.options.consistency.on_error = match value {
                    "ignore" => OnError::SilentSkip,
                    "warn" => OnError::WarnSkip,
                    "abort" => OnError::Abort,
                    _ => return Err(self.bad(key, value, "expected ignore, warn, or abort")),
                };
            }
            "on-column-count-error-command" => {
                let tpl = self.template(key, required()?)?;
                self.options.consistency.on_error = OnError::CustomEmit(tpl);
            }
            "filter" => self.options.filter = Some(filters::parse_filter(required()?)?),
            "filter-strcmp" => self.pair_filter(key, required()?, FilterExpr::StrEq)?,
            "filter-not-strcmp" => self.pair_filter(key, required()?, FilterExpr::StrNe)?,
            "filter-equal" => self.pair_filter(key, required()?, |a, b| {
                FilterExpr::NumCmp(NumOp::Eq, a, b)
            })?,
            "filter-not-equal" => self.pair_filter(key, required()?, |a, b| {
                FilterExpr::NumCmp(NumOp::Ne, a, b)
            })?,
            "filter-accept-all" => self.options.filter = None,
            "filter-reject-all" => self.options.filter = Some(FilterExpr::ConstFalse),
            "command" => self.options.hooks.command = Some(self.template(key, required()?)?),
            "before-reading" => {
                self.options.hooks.before_reading = Some(self.template(key, required()?)?)
            }
            "after-head" => self.options.hooks.after_head = Some(self.template(key, required()?)?),
            "before-filter" => {
                self.options.hooks.before_filter = Some(self.template(key, required()?)?)
            }
            "late-after-head" => {
                self.options.hooks.late_after_head = Some(self.template(key, required()?)?)
            }
            "late-after-line" => {
                // a plain late-after-line supersedes earlier first/last
                // specials, matching resolution-order semantics
                self.options.hooks.late_after_line = Some(self.template(key, required()?)?);
                self.options.hooks.late_after_first_line = None;
                self.options.hooks.late_after_last_line = None;
            }
            "late-after-first-line" => {
                self.options.hooks.late_after_first_line = Some(self.template(key, required()?)?)
            }
            "late-after-last-line" => {
                self.options.hooks.late_after_last_line = Some(self.template(key, required()?)?)
            }
            "before-line" => {
                self.options.hooks.before_line = Some(self.template(key, required()?)?);
                self.options.hooks.before_first_line = None;
            }
            "before-first-line" => {
                self.options.hooks.before_first_line = Some(self.template(key, required()?)?)
            }
            "after-line" => {
                self.options.hooks.after_line = Some(self.template(key, required()?)?);
                self.options.hooks.after_first_line = None;
            }
            "after-first-line" => {
                self.options.hooks.after_first_line = Some(self.template(key, required()?)?)
            }
            "after-reading" => {
                self.options.hooks.after_reading = Some(self.template(key, required()?)?)
            }
            "table" => {
                let value = required()?;
                let kind = match value {
                    "none" => TableKind::None,
                    "tabular" => TableKind::Tabular,
                    "centered-tabular" => TableKind::CenteredTabular,
                    "longtable" => TableKind::Longtable,
                    "tabbing" => TableKind::Tabbing,
                    "autotabular" => TableKind::AutoTabular,
                    "autolongtable" => TableKind::AutoLongtable,
                    "autobooktabular" => TableKind::AutoBookTabular,
                    "autobooklongtable" => TableKind::AutoBookLongtable,
                    "markdown" => TableKind::Markdown,
                    _ => return Err(self.bad(key, value, "unknown table kind")),
                };
                self.set_table_kind(kind);
            }
            "table-format" => self.options.table.format = Some(required()?.to_string()),
            "before-table" => {
                self.options.table.before_table = Some(self.template(key, required()?)?)
            }
            "table-head" => self.options.table.table_head = Some(self.template(key, required()?)?),
            "table-foot" => self.options.table.table_foot = Some(self.template(key, required()?)?),
            "after-table" => {
                self.options.table.after_table = Some(self.template(key, required()?)?)
            }
            "respect-tab" => self.options.escape.tab = self.boolean(key, value)?,
            "respect-percent" => self.options.escape.percent = self.boolean(key, value)?,
            "respect-sharp" => self.options.escape.sharp = self.boolean(key, value)?,
            "respect-dollar" => self.options.escape.dollar = self.boolean(key, value)?,
            "respect-and" => self.options.escape.and_sign = self.boolean(key, value)?,
            "respect-backslash" => self.options.escape.backslash = self.boolean(key, value)?,
            "respect-underscore" => self.options.escape.underscore = self.boolean(key, value)?,
            "respect-tilde" => self.options.escape.tilde = self.boolean(key, value)?,
            "respect-circumflex" => self.options.escape.circumflex = self.boolean(key, value)?,
            "respect-leftbrace" => self.options.escape.leftbrace = self.boolean(key, value)?,
            "respect-rightbrace" => self.options.escape.rightbrace = self.boolean(key, value)?,
            "respect-all" => self.options.escape = EscapeSet::all(),
            "respect-none" => self.options.escape = EscapeSet::none(),
            "sort-by" => {
                self.options.preprocess = PreprocessSpec::BuiltinSort(SortSpec::parse(required()?)?)
            }
            "new-sorting-rule" => {
                let value = required()?;
                let (name, spec) = value
                    .split_once('=')
                    .ok_or_else(|| self.bad(key, value, "expected `NAME=spec`"))?;
                self.rules
                    .insert(name.trim().to_string(), SortSpec::parse(spec)?);
            }
            "sort-by-rule" => {
                let value = required()?;
                let spec = self
                    .rules
                    .get(value.trim())
                    .ok_or_else(|| self.bad(key, value, "no such sorting rule"))?
                    .clone();
                self.options.preprocess = PreprocessSpec::BuiltinSort(spec);
            }
            "quote-transform" => {
                let value = required()?;
                let separator = Separator::from_name(value)
                    .ok_or_else(|| self.bad(key, value, "expected comma, semicolon, pipe, or tab"))?;
                self.options.preprocess = PreprocessSpec::QuoteTransform {
                    source_separator: separator,
                };
            }
            "preprocessor" => {
                self.options.preprocess = PreprocessSpec::External {
                    command: required()?.to_string(),
                    output: self.preprocessor_output.clone(),
                };
            }
            "preprocessor-output" => {
                self.preprocessor_output = Some(PathBuf::from(required()?));
            }
            "no-preprocess" => self.options.preprocess = PreprocessSpec::None,
            "style" => self.apply_style(key, required()?)?,
            "verbose" => self.options.verbose = self.boolean(key, value)?,
            _ => unreachable!("key `{key}` is in KEYS but not handled"),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignments(items: &[(&str, Option<&str>)]) -> Vec<KeyAssignment> {
        items
            .iter()
            .map(|(k, v)| (k.to_string(), v.map(|v| v.to_string())))
            .collect()
    }

    #[test]
    fn defaults() {
        let options = OptionSet::default();
        assert!(options.head);
        assert!(options.consistency.check);
        assert_eq!(options.dialect.separator, Separator::Comma);
        assert_eq!(options.escape, EscapeSet::none());
        assert_eq!(options.table.kind, TableKind::None);
    }

    #[test]
    fn every_key_name_is_unique_and_hyphenated() {
        let mut seen = std::collections::HashSet::new();
        for def in KEYS {
            assert!(seen.insert(def.name), "duplicate key {}", def.name);
            assert!(def.name.chars().all(|c| c.is_ascii_lowercase() || c == '-'));
        }
    }

    #[test]
    fn last_layer_wins() {
        let layers = vec![
            assignments(&[("separator", Some("semicolon")), ("no-head", None)]),
            assignments(&[("separator", Some("pipe"))]),
        ];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        assert_eq!(options.dialect.separator, Separator::Pipe);
        assert!(!options.head);
    }

    #[test]
    fn tab_separator_implies_respect_tab() {
        let layers = vec![assignments(&[("separator", Some("tab"))])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        assert!(options.escape.tab);
    }

    #[test]
    fn table_kind_installs_row_break() {
        let layers = vec![assignments(&[
            ("late-after-last-line", Some("X")),
            ("table", Some("autotabular")),
        ])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        assert_eq!(options.table.kind, TableKind::AutoTabular);
        let lal = options.hooks.late_after_line.unwrap();
        assert_eq!(lal.source(), "\\\\\n");
        assert!(options.hooks.late_after_last_line.is_none());
    }

    #[test]
    fn late_after_line_clears_specials() {
        let layers = vec![assignments(&[
            ("late-after-first-line", Some("F")),
            ("late-after-line", Some("L")),
        ])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        assert!(options.hooks.late_after_first_line.is_none());
        assert_eq!(options.hooks.late_after_line.unwrap().source(), "L");
    }

    #[test]
    fn strcmp_pair_desugars_to_string_equality() {
        let layers = vec![assignments(&[(
            "filter-strcmp",
            Some("{{{gender}}}{f}"),
        )])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        assert_eq!(
            options.filter.unwrap(),
            FilterExpr::StrEq(
                Term::Interp("{{gender}}".to_string()),
                Term::Interp("f".to_string())
            )
        );
    }

    #[test]
    fn equal_pair_desugars_to_numeric_equality() {
        let layers = vec![assignments(&[("filter-not-equal", Some("{{{grade}}}{5.0}"))])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        assert_eq!(
            options.filter.unwrap(),
            FilterExpr::NumCmp(
                NumOp::Ne,
                Term::Interp("{{grade}}".to_string()),
                Term::Num(5.0)
            )
        );
    }

    #[test]
    fn style_expansion_with_parameters() {
        let mut registry = StyleRegistry::default();
        registry.define(StyleDef::new(
            "sepchar",
            assignments(&[("separator", Some("$1")), ("respect-all", None)]),
        ));
        let layers = vec![assignments(&[("style", Some("sepchar(semicolon)"))])];
        let options = resolve(&layers, &registry).unwrap();
        assert_eq!(options.dialect.separator, Separator::Semicolon);
        assert!(options.escape.percent);
    }

    #[test]
    fn style_arity_mismatch() {
        let mut registry = StyleRegistry::default();
        registry.define(StyleDef::new(
            "two",
            assignments(&[("command", Some("$1 $2"))]),
        ));
        let layers = vec![assignments(&[("style", Some("two(a)"))])];
        let err = resolve(&layers, &registry).unwrap_err();
        assert!(matches!(
            err,
            ResolveError::StyleArity {
                expected: 2,
                given: 1,
                ..
            }
        ));
    }

    #[test]
    fn style_cycle_detected() {
        let mut registry = StyleRegistry::default();
        registry.define(StyleDef::new("a", assignments(&[("style", Some("b"))])));
        registry.define(StyleDef::new("b", assignments(&[("style", Some("a"))])));
        let layers = vec![assignments(&[("style", Some("a"))])];
        let err = resolve(&layers, &registry).unwrap_err();
        assert!(matches!(err, ResolveError::StyleCycle(name) if name == "a"));
    }

    #[test]
    fn dollar_escape_in_style_values() {
        let mut registry = StyleRegistry::default();
        registry.define(StyleDef::new(
            "money",
            assignments(&[("command", Some("$$ $1"))]),
        ));
        let layers = vec![assignments(&[("style", Some("money(x)"))])];
        let options = resolve(&layers, &registry).unwrap();
        assert_eq!(options.hooks.command.unwrap().source(), "$ x");
    }

    #[test]
    fn unknown_key_and_missing_value() {
        let registry = StyleRegistry::default();
        let err = resolve(&[assignments(&[("bogus", None)])], &registry).unwrap_err();
        assert!(matches!(err, ResolveError::UnknownKey(_)));
        let err = resolve(&[assignments(&[("filter", None)])], &registry).unwrap_err();
        assert!(matches!(err, ResolveError::MissingValue(_)));
        let err = resolve(&[assignments(&[("respect-all", Some("x"))])], &registry).unwrap_err();
        assert!(matches!(err, ResolveError::UnexpectedValue(_)));
    }

    #[test]
    fn sorting_rules_registered_and_used() {
        let layers = vec![assignments(&[
            ("new-sorting-rule", Some("bygroup=group,amount:number:desc")),
            ("sort-by-rule", Some("bygroup")),
        ])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        match options.preprocess {
            PreprocessSpec::BuiltinSort(spec) => assert_eq!(spec.keys.len(), 2),
            other => panic!("expected builtin sort, got {other:?}"),
        }
    }

    #[test]
    fn preprocessor_output_merges_regardless_of_order() {
        let layers = vec![assignments(&[
            ("preprocessor-output", Some("/tmp/out.csv")),
            ("preprocessor", Some("sort -t, -k2")),
        ])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        match options.preprocess {
            PreprocessSpec::External { command, output } => {
                assert_eq!(command, "sort -t, -k2");
                assert_eq!(output.unwrap(), PathBuf::from("/tmp/out.csv"));
            }
            other => panic!("expected external preprocessor, got {other:?}"),
        }
        let layers = vec![assignments(&[
            ("preprocessor", Some("sort")),
            ("preprocessor-output", Some("/tmp/out.csv")),
        ])];
        let options = resolve(&layers, &StyleRegistry::default()).unwrap();
        match options.preprocess {
            PreprocessSpec::External { output, .. } => {
                assert_eq!(output.unwrap(), PathBuf::from("/tmp/out.csv"));
            }
            other => panic!("expected external preprocessor, got {other:?}"),
        }
    }

    #[test]
    fn config_text_round_trip() {
        let text = r#"
# defaults for the project
separator = semicolon
respect-underscore = true

[style passed]
column-names = name=name, givenname=firstname
filter = {{grade}} != "5.0"

[style sep]
separator = $1
"#;
        let file = parse_config(text).unwrap();
        assert_eq!(
            file.globals,
            assignments(&[
                ("separator", Some("semicolon")),
                ("respect-underscore", Some("true")),
            ])
        );
        let passed = file.styles.get("passed").unwrap();
        assert_eq!(passed.entries.len(), 2);
        assert_eq!(passed.parameter_slots, 0);
        assert_eq!(file.styles.get("sep").unwrap().parameter_slots, 1);
    }

    #[test]
    fn quoted_config_values_keep_spacing() {
        let file = parse_config("command = \" {{name}}; \"\n").unwrap();
        assert_eq!(file.globals[0].1.as_deref(), Some(" {{name}}; "));
    }

    #[test]
    fn config_syntax_errors() {
        assert!(matches!(
            parse_config("[style oops\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("two words\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("[table x]\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn global_section_resolves_against_styles() {
        let text = "[style small]\ncolumn-count = 2\n";
        let file = parse_config(text).unwrap();
        let layers = vec![
            file.globals.clone(),
            assignments(&[("style", Some("small"))]),
        ];
        let options = resolve(&layers, &file.styles).unwrap();
        assert_eq!(options.consistency.expected_columns, Some(2));
    }
}
