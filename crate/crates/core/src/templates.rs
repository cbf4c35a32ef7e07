//! Hook and command templates.
//!
//! `{{name}}` interpolates a value from the record environment.
//! `{{#first}}...{{:else}}...{{/first}}` picks its branch on the first
//! accepted row, `{{#odd}}...{{/odd}}` on odd row numbers. `\{{`
//! escapes a literal `{{`.

use std::fmt;

use thiserror::Error;

use crate::bindings::Environment;
use crate::emitters::EscapeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Segment {
    Literal(String),
    Placeholder(String),
    FirstRowBlock(Vec<Segment>, Vec<Segment>),
    OddRowBlock(Vec<Segment>, Vec<Segment>),
}

/// A parsed template, immutable after parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(src: &str) -> Result<Self, TemplateParseError> {
        parse_template(src)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateParseError {
    #[error("unclosed {kind} block starting at byte {position}")]
    UnclosedBlock { kind: &'static str, position: usize },
    #[error("unclosed placeholder at byte {0}")]
    UnclosedPlaceholder(usize),
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("invalid placeholder name `{0}`")]
    InvalidPlaceholder(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("unbound placeholder `{name}` at row {row}")]
    UnboundPlaceholder { name: String, row: u64 },
}

pub fn parse_template(src: &str) -> Result<Template, TemplateParseError> {
    let mut pos = 0;
    let segments = parse_segments(src, &mut pos, None)?;
    Ok(Template {
        source: src.to_string(),
        segments,
    })
}

/// Parse until end of input or until the closing tag of `within`
/// (`first` or `odd`). Leaves `pos` after the consumed closer.
fn parse_segments(
    src: &str,
    pos: &mut usize,
    within: Option<&'static str>,
) -> Result<Vec<Segment>, TemplateParseError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    loop {
        let rest = &src[*pos..];
        if rest.is_empty() {
            if let Some(kind) = within {
                return Err(TemplateParseError::UnclosedBlock {
                    kind,
                    position: *pos,
                });
            }
            break;
        }
        if let Some(stripped) = rest.strip_prefix("\\{{") {
            let _ = stripped;
            literal.push_str("{{");
            *pos += 3;
            continue;
        }
        if !rest.starts_with("{{") {
            let mut chars = rest.char_indices();
            let (_, ch) = chars.next().unwrap();
            literal.push(ch);
            *pos += ch.len_utf8();
            continue;
        }
        let open = *pos;
        let inner_start = open + 2;
        let close = src[inner_start..]
            .find("}}")
            .ok_or(TemplateParseError::UnclosedPlaceholder(open))?;
        let inner = &src[inner_start..inner_start + close];
        *pos = inner_start + close + 2;

        // block directives
        if let Some(kind) = inner.strip_prefix('#') {
            let kind: &'static str = match kind {
                "first" => "first",
                "odd" => "odd",
                _ => return Err(TemplateParseError::UnknownDirective(inner.to_string())),
            };
            if !literal.is_empty() {
                segments.push(Segment::Literal(std::mem::take(&mut literal)));
            }
            let (then_branch, else_branch) = parse_block(src, pos, kind, open)?;
            segments.push(if kind == "first" {
                Segment::FirstRowBlock(then_branch, else_branch)
            } else {
                Segment::OddRowBlock(then_branch, else_branch)
            });
            continue;
        }
        if inner.starts_with(':') || inner.starts_with('/') {
            match (within, inner) {
                (Some(kind), _) if inner == format!("/{kind}") || inner == ":else" => {
                    // hand control back to parse_block
                    *pos = open;
                    break;
                }
                _ => return Err(TemplateParseError::UnknownDirective(inner.to_string())),
            }
        }
        if !crate::bindings::is_identifier(inner) {
            return Err(TemplateParseError::InvalidPlaceholder(inner.to_string()));
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(std::mem::take(&mut literal)));
        }
        segments.push(Segment::Placeholder(inner.to_string()));
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

fn parse_block(
    src: &str,
    pos: &mut usize,
    kind: &'static str,
    open: usize,
) -> Result<(Vec<Segment>, Vec<Segment>), TemplateParseError> {
    let then_branch = parse_segments(src, pos, Some(kind))?;
    let closer = format!("{{{{/{kind}}}}}");
    let else_tag = "{{:else}}";
    let rest = &src[*pos..];
    if rest.starts_with(else_tag) {
        *pos += else_tag.len();
        let else_branch = parse_segments(src, pos, Some(kind))?;
        let rest = &src[*pos..];
        if rest.starts_with(&closer) {
            *pos += closer.len();
            Ok((then_branch, else_branch))
        } else {
            Err(TemplateParseError::UnclosedBlock {
                kind,
                position: open,
            })
        }
    } else if rest.starts_with(&closer) {
        *pos += closer.len();
        Ok((then_branch, Vec::new()))
    } else {
        Err(TemplateParseError::UnclosedBlock {
            kind,
            position: open,
        })
    }
}

/// Render `tpl` against `env`, escaping field content with `esc`.
pub fn render(tpl: &Template, env: &Environment, esc: &EscapeSet) -> Result<String, RenderError> {
    let mut out = String::new();
    render_segments(&tpl.segments, env, esc, &mut out)?;
    Ok(out)
}

fn render_segments(
    segments: &[Segment],
    env: &Environment,
    esc: &EscapeSet,
    out: &mut String,
) -> Result<(), RenderError> {
    for segment in segments {
        match segment {
            Segment::Literal(text) => out.push_str(text),
            Segment::Placeholder(name) => match env.lookup(name, esc) {
                Some(value) => out.push_str(&value),
                None => {
                    return Err(RenderError::UnboundPlaceholder {
                        name: name.clone(),
                        row: env.row(),
                    })
                }
            },
            Segment::FirstRowBlock(then_branch, else_branch) => {
                let branch = if env.row() == 1 { then_branch } else { else_branch };
                render_segments(branch, env, esc, out)?;
            }
            Segment::OddRowBlock(then_branch, else_branch) => {
                let branch = if env.row() % 2 == 1 { then_branch } else { else_branch };
                render_segments(branch, env, esc, out)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bindings::BindingTable;
    use crate::pipeline::Counters;

    fn grade_env(row: u64) -> Environment {
        let mut table = BindingTable::default();
        table
            .add_assignments(vec![
                ("2".to_string(), "firstname".to_string()),
                ("1".to_string(), "name".to_string()),
                ("3".to_string(), "matnumber".to_string()),
                ("2".to_string(), "givenname".to_string()),
            ])
            .unwrap();
        let rows = [
            "Maier,Hans,12345,m,1.0",
            "Huber,Anna,23456,f,2.3",
            "Weißbäck,Werner,34567,m,5.0",
            "Bauer,Maria,19202,f,3.3",
        ];
        let raw = rows[(row - 1) as usize];
        let fields: Vec<String> = raw.split(',').map(|s| s.to_string()).collect();
        table.resolve(
            &fields,
            &Counters {
                row,
                input_line: row + 1,
            },
            raw,
        )
    }

    #[test]
    fn two_placeholders() {
        let tpl = parse_template("{{givenname}} {{name}}").unwrap();
        assert_eq!(tpl.segments.len(), 3);
        let out = render(&tpl, &grade_env(1), &EscapeSet::none()).unwrap();
        assert_eq!(out, "Hans Maier");
    }

    #[test]
    fn first_row_block() {
        let tpl =
            parse_template("({{#first}}first entry!!{{:else}}following entry{{/first}})").unwrap();
        assert_eq!(
            render(&tpl, &grade_env(1), &EscapeSet::none()).unwrap(),
            "(first entry!!)"
        );
        assert_eq!(
            render(&tpl, &grade_env(2), &EscapeSet::none()).unwrap(),
            "(following entry)"
        );
    }

    #[test]
    fn row_and_linetorow() {
        let tpl = parse_template("{{row}} & {{linetorow}}").unwrap();
        let out = render(&tpl, &grade_env(3), &EscapeSet::none()).unwrap();
        assert_eq!(out, "3 & Weißbäck & Werner & 34567 & m & 5.0");
    }

    #[test]
    fn tabular_body_line() {
        let tpl = parse_template("{{row}} & {{firstname}}~{{name}} & {{matnumber}}").unwrap();
        let out = render(&tpl, &grade_env(1), &EscapeSet::none()).unwrap();
        assert_eq!(out, "1 & Hans~Maier & 12345");
    }

    #[test]
    fn odd_row_parity() {
        let tpl = parse_template("{{#odd}}A{{:else}}B{{/odd}}").unwrap();
        let out: Vec<String> = (1..=4)
            .map(|r| render(&tpl, &grade_env(r), &EscapeSet::none()).unwrap())
            .collect();
        assert_eq!(out, vec!["A", "B", "A", "B"]);
    }

    #[test]
    fn escaped_literal_braces() {
        let tpl = parse_template(r"\{{name}}").unwrap();
        assert_eq!(
            render(&tpl, &grade_env(1), &EscapeSet::none()).unwrap(),
            "{{name}}"
        );
    }

    #[test]
    fn unbound_placeholder_is_fatal() {
        let tpl = parse_template("{{missing}}").unwrap();
        let err = render(&tpl, &grade_env(2), &EscapeSet::none()).unwrap_err();
        assert_eq!(
            err,
            RenderError::UnboundPlaceholder {
                name: "missing".to_string(),
                row: 2
            }
        );
    }

    #[test]
    fn unclosed_block_error() {
        let err = parse_template("{{#first}}x").unwrap_err();
        assert!(matches!(err, TemplateParseError::UnclosedBlock { kind: "first", .. }));
    }

    #[test]
    fn unknown_directive_error() {
        let err = parse_template("{{#loop}}x{{/loop}}").unwrap_err();
        assert_eq!(err, TemplateParseError::UnknownDirective("#loop".to_string()));
    }

    #[test]
    fn newlines_preserved() {
        let tpl = parse_template("a\\\\\\hline\nb").unwrap();
        assert_eq!(
            render(&tpl, &grade_env(1), &EscapeSet::none()).unwrap(),
            "a\\\\\\hline\nb"
        );
    }
}
