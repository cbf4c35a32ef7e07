//! Output escaping and table scaffolding around the record loop.

use std::io::Write;

use thiserror::Error;

use crate::bindings::Environment;
use crate::templates::{self, Template};

/// Characters that must appear literally in the typeset result, i.e.
/// be escaped on emission. Defaults to none so markup in the data
/// passes through untouched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EscapeSet {
    pub tab: bool,
    pub percent: bool,
    pub sharp: bool,
    pub dollar: bool,
    pub and_sign: bool,
    pub backslash: bool,
    pub underscore: bool,
    pub tilde: bool,
    pub circumflex: bool,
    pub leftbrace: bool,
    pub rightbrace: bool,
}

impl EscapeSet {
    pub fn none() -> Self {
        EscapeSet::default()
    }

    pub fn all() -> Self {
        EscapeSet {
            tab: true,
            percent: true,
            sharp: true,
            dollar: true,
            and_sign: true,
            backslash: true,
            underscore: true,
            tilde: true,
            circumflex: true,
            leftbrace: true,
            rightbrace: true,
        }
    }
}

/// Replace enabled special characters by their LaTeX-safe form.
pub fn escape_field(value: &str, set: &EscapeSet) -> String {
    let mut out = String::with_capacity(value.len());
    for ch in value.chars() {
        match ch {
            '\t' if set.tab => out.push_str("\\space"),
            '%' if set.percent => out.push_str("\\%"),
            '#' if set.sharp => out.push_str("\\#"),
            '$' if set.dollar => out.push_str("\\$"),
            '&' if set.and_sign => out.push_str("\\&"),
            '\\' if set.backslash => out.push_str("\\textbackslash{}"),
            '_' if set.underscore => out.push_str("\\_"),
            '~' if set.tilde => out.push_str("\\textasciitilde{}"),
            '^' if set.circumflex => out.push_str("\\textasciicircum{}"),
            '{' if set.leftbrace => out.push_str("\\{"),
            '}' if set.rightbrace => out.push_str("\\}"),
            _ => out.push(ch),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    None,
    Tabular,
    CenteredTabular,
    Longtable,
    Tabbing,
    AutoTabular,
    AutoLongtable,
    AutoBookTabular,
    AutoBookLongtable,
    Markdown,
}

impl TableKind {
    pub fn is_auto(self) -> bool {
        matches!(
            self,
            TableKind::AutoTabular
                | TableKind::AutoLongtable
                | TableKind::AutoBookTabular
                | TableKind::AutoBookLongtable
        )
    }

    fn is_book(self) -> bool {
        matches!(self, TableKind::AutoBookTabular | TableKind::AutoBookLongtable)
    }

    fn environment(self) -> Option<&'static str> {
        match self {
            TableKind::Tabular | TableKind::CenteredTabular | TableKind::AutoTabular
            | TableKind::AutoBookTabular => Some("tabular"),
            TableKind::Longtable | TableKind::AutoLongtable | TableKind::AutoBookLongtable => {
                Some("longtable")
            }
            TableKind::Tabbing => Some("tabbing"),
            TableKind::None | TableKind::Markdown => None,
        }
    }
}

/// Table scaffolding around the record loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub kind: TableKind,
    /// Column format string; required for the explicit LaTeX kinds,
    /// derived for auto kinds, ignored by markdown/tabbing.
    pub format: Option<String>,
    pub before_table: Option<Template>,
    pub table_head: Option<Template>,
    pub table_foot: Option<Template>,
    pub after_table: Option<Template>,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec {
            kind: TableKind::None,
            format: None,
            before_table: None,
            table_head: None,
            table_foot: None,
            after_table: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("in table scaffold: {0}")]
    Template(#[from] templates::RenderError),
}

/// Derived column format for an auto kind.
pub fn auto_format(kind: TableKind, columns: usize) -> String {
    if kind.is_book() {
        "l".repeat(columns)
    } else {
        let mut format = String::from("|");
        for _ in 0..columns {
            format.push_str("l|");
        }
        format
    }
}

/// Per-row command for kinds that generate their own body rows.
pub(crate) fn generated_command(kind: TableKind, columns: usize) -> Option<Template> {
    let join = match kind {
        k if k.is_auto() => "&",
        TableKind::Markdown => "|",
        _ => return None,
    };
    let src = (1..=columns)
        .map(|i| format!("{{{{col{i}}}}}"))
        .collect::<Vec<_>>()
        .join(join);
    Some(Template::parse(&src).expect("generated command is well-formed"))
}

/// Emit before_table, the environment opener, and the head row.
///
/// For auto kinds the header row (escaped, `&`-joined) is the default
/// head; a `table_head` template overrides it and is rendered against
/// the header environment so `{{linetorow}}` reproduces the first line.
pub(crate) fn emit_prologue(
    sink: &mut dyn Write,
    spec: &TableSpec,
    columns: usize,
    header: Option<&[String]>,
    env: &Environment,
    esc: &EscapeSet,
) -> Result<(), EmitError> {
    if spec.kind == TableKind::None {
        return Ok(());
    }
    if let Some(tpl) = &spec.before_table {
        writeln!(sink, "{}", templates::render(tpl, env, esc)?)?;
    }
    if spec.kind == TableKind::CenteredTabular {
        writeln!(sink, "\\begin{{center}}")?;
    }
    if spec.kind == TableKind::Markdown {
        if let Some(tpl) = &spec.table_head {
            writeln!(sink, "{}", templates::render(tpl, env, esc)?)?;
        } else if let Some(header) = header {
            let cells: Vec<String> = header.iter().map(|f| escape_field(f, esc)).collect();
            writeln!(sink, "{}", cells.join("|"))?;
            writeln!(sink, "{}", vec!["---"; columns].join("|"))?;
        }
        return Ok(());
    }
    if let Some(environment) = spec.kind.environment() {
        if spec.kind == TableKind::Tabbing {
            writeln!(sink, "\\begin{{tabbing}}")?;
        } else {
            let format = if spec.kind.is_auto() {
                auto_format(spec.kind, columns)
            } else {
                spec.format.clone().unwrap_or_default()
            };
            writeln!(sink, "\\begin{{{environment}}}{{{format}}}")?;
        }
    }
    if let Some(tpl) = &spec.table_head {
        writeln!(sink, "{}", templates::render(tpl, env, esc)?)?;
    } else if spec.kind.is_auto() {
        if let Some(header) = header {
            let row = header
                .iter()
                .map(|f| escape_field(f, esc))
                .collect::<Vec<_>>()
                .join("&");
            if spec.kind.is_book() {
                writeln!(sink, "\\toprule")?;
                writeln!(sink, "{row}\\\\")?;
                writeln!(sink, "\\midrule")?;
            } else {
                writeln!(sink, "{row}\\\\\\hline")?;
            }
        }
    }
    Ok(())
}

/// Emit the foot row, the environment closer, and after_table.
pub(crate) fn emit_epilogue(
    sink: &mut dyn Write,
    spec: &TableSpec,
    env: &Environment,
    esc: &EscapeSet,
) -> Result<(), EmitError> {
    if matches!(spec.kind, TableKind::None | TableKind::Markdown) {
        return Ok(());
    }
    if let Some(tpl) = &spec.table_foot {
        writeln!(sink, "{}", templates::render(tpl, env, esc)?)?;
    } else if spec.kind.is_book() {
        writeln!(sink, "\\bottomrule")?;
    }
    if let Some(environment) = spec.kind.environment() {
        writeln!(sink, "\\end{{{environment}}}")?;
    }
    if spec.kind == TableKind::CenteredTabular {
        writeln!(sink, "\\end{{center}}")?;
    }
    if let Some(tpl) = &spec.after_table {
        writeln!(sink, "{}", templates::render(tpl, env, esc)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn respect_none_is_identity() {
        let math = r"$\displaystyle \int\frac{1}{x}$";
        assert_eq!(escape_field(math, &EscapeSet::none()), math);
    }

    #[test]
    fn percent_substitution() {
        let set = EscapeSet {
            percent: true,
            ..EscapeSet::none()
        };
        assert_eq!(escape_field("50%", &set), "50\\%");
    }

    #[test]
    fn respect_all_substitution_table() {
        assert_eq!(escape_field("a_b&c", &EscapeSet::all()), "a\\_b\\&c");
        assert_eq!(
            escape_field("% # $ & \\ _ ~ ^ { }", &EscapeSet::all()),
            "\\% \\# \\$ \\& \\textbackslash{} \\_ \\textasciitilde{} \\textasciicircum{} \\{ \\}"
        );
    }

    #[test]
    fn stripping_escapes_recovers_original() {
        // single-character substitutions only
        let set = EscapeSet {
            percent: true,
            sharp: true,
            dollar: true,
            and_sign: true,
            underscore: true,
            leftbrace: true,
            rightbrace: true,
            ..EscapeSet::none()
        };
        let original = "a%b#c$d&e_f{g}h";
        let escaped = escape_field(original, &set);
        assert_eq!(escaped.replace('\\', ""), original);
    }

    #[test]
    fn auto_formats() {
        assert_eq!(auto_format(TableKind::AutoTabular, 5), "|l|l|l|l|l|");
        assert_eq!(auto_format(TableKind::AutoBookTabular, 3), "lll");
    }
}
