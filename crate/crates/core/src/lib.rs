//! A streaming CSV processing engine.
//!
//! Input files are tokenized line by line with TeX-style brace groups
//! masking separators. Records run through a lifecycle pipeline with
//! ordered hooks, consistency checking, a filter expression language,
//! per-row template rendering, and optional table scaffolding (LaTeX
//! tabular/longtable/booktabs or Markdown).

pub mod bindings;
pub mod config;
pub mod dialect;
pub mod emitters;
pub mod filters;
pub mod pipeline;
pub mod preprocess;
pub mod templates;

pub use bindings::{BindingError, BindingTable, Environment};
pub use config::{
    find_config, key_def, load_config, parse_config, resolve, ConfigError, ConfigFile,
    KeyAssignment, KeyDef, KeyValue, OptionSet, ResolveError, StyleDef, StyleRegistry, KEYS,
};
pub use dialect::{Dialect, RawRecord, ReadError, RecordReader, Separator, TokenizeError};
pub use emitters::{EscapeSet, TableKind, TableSpec};
pub use filters::{FilterDecision, FilterError, FilterExpr};
pub use pipeline::{ConsistencyPolicy, Counters, HookSet, OnError, RunError, RunReport};
pub use preprocess::{
    quote_transform, run_external, sort_records, ColumnRef, PreprocessError, PreprocessSpec,
    SortKey, SortKeyType, SortOrder, SortSpec,
};
pub use templates::{RenderError, Template, TemplateParseError};
