//! The record loop: header handling, consistency checking, filtering,
//! hook firing, and counter maintenance.
//!
//! Hook-order trace for any input matches
//! `BR (AH)? (BF (LAH|LAFL|LAL)? (BFL|BL) CMD (AFL|AL))* LALL? AR`:
//! `late after head` fires exactly at the first acceptance,
//! `late after first line` exactly at the second, and
//! `late after last line` after the final accepted record.

use std::io::Write;

use thiserror::Error;

use crate::bindings::{BindingError, BindingTable, Environment};
use crate::config::OptionSet;
use crate::dialect::{RawRecord, ReadError};
use crate::emitters::{self, EmitError, TableKind};
use crate::filters::{self, FilterDecision, FilterError};
use crate::templates::{self, RenderError, Template};

/// Templates fired at fixed points of the processing loop.
///
/// `late_after_first_line` and `late_after_last_line` fall back to
/// `late_after_line` when unset; `before_first_line` falls back to
/// `before_line` and `after_first_line` to `after_line`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HookSet {
    pub before_reading: Option<Template>,
    pub after_head: Option<Template>,
    pub before_filter: Option<Template>,
    pub late_after_head: Option<Template>,
    pub late_after_line: Option<Template>,
    pub late_after_first_line: Option<Template>,
    pub late_after_last_line: Option<Template>,
    pub before_line: Option<Template>,
    pub before_first_line: Option<Template>,
    pub command: Option<Template>,
    pub after_line: Option<Template>,
    pub after_first_line: Option<Template>,
    pub after_reading: Option<Template>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OnError {
    SilentSkip,
    WarnSkip,
    Abort,
    CustomEmit(Template),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyPolicy {
    pub check: bool,
    pub expected_columns: Option<usize>,
    pub on_error: OnError,
}

impl Default for ConsistencyPolicy {
    fn default() -> Self {
        ConsistencyPolicy {
            check: true,
            expected_columns: None,
            on_error: OnError::SilentSkip,
        }
    }
}

/// Loop counters. `row` counts accepted data lines (header excluded)
/// and is 1 when the first accepted record's command runs;
/// `input_line` counts all lines, header included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub row: u64,
    pub input_line: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunReport {
    pub accepted: u64,
    pub skipped_inconsistent: u64,
    pub rejected_by_filter: u64,
}

impl std::fmt::Display for RunReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "accepted={} skipped={} rejected={}",
            self.accepted, self.skipped_inconsistent, self.rejected_by_filter
        )
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("input is empty but a header line is required")]
    MissingHeader,
    #[error("inconsistent column count on line {0}")]
    AbortOnInconsistent(u64),
    #[error("filter error on line {line}: {source}")]
    Filter {
        line: u64,
        source: FilterError,
    },
    #[error("in `{hook}` template: {source}")]
    Template {
        hook: &'static str,
        source: RenderError,
    },
    #[error(transparent)]
    Binding(#[from] BindingError),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckOutcome {
    Ok,
    Skip,
    Abort,
}

/// Arity check of one record against the expected column count.
pub fn check_consistency(record: &RawRecord, policy: &ConsistencyPolicy) -> CheckOutcome {
    if !policy.check {
        return CheckOutcome::Ok;
    }
    let expected = policy
        .expected_columns
        .expect("expected_columns known when check=true");
    if record.fields.len() == expected {
        CheckOutcome::Ok
    } else if matches!(policy.on_error, OnError::Abort) {
        CheckOutcome::Abort
    } else {
        CheckOutcome::Skip
    }
}

fn fire(
    sink: &mut dyn Write,
    hook: Option<&Template>,
    name: &'static str,
    env: &Environment,
    esc: &crate::emitters::EscapeSet,
) -> Result<(), RunError> {
    if let Some(tpl) = hook {
        let text = templates::render(tpl, env, esc)
            .map_err(|source| RunError::Template { hook: name, source })?;
        sink.write_all(text.as_bytes())?;
    }
    Ok(())
}

/// Drive the full record loop over `records` and write rendered output
/// to `sink`. Warnings and the verbose summary go to `diag` only.
pub fn run<I>(
    records: I,
    options: &OptionSet,
    sink: &mut dyn Write,
    diag: &mut dyn Write,
) -> Result<RunReport, RunError>
where
    I: IntoIterator<Item = Result<RawRecord, ReadError>>,
{
    let mut records = records.into_iter();
    let mut bindings = options.bindings.clone();
    let mut counters = Counters::default();
    let mut report = RunReport::default();
    let esc = &options.escape;
    let hooks = &options.hooks;
    let kind = options.table.kind;

    let default_command = Template::parse("{{line}}").expect("default command parses");
    let mut command = hooks.command.clone();
    let mut expected = options.consistency.expected_columns;
    let mut scaffold_done = false;

    fire(sink, hooks.before_reading.as_ref(), "before reading", &Environment::empty(0, 0), esc)?;

    if options.head {
        let header = match records.next() {
            Some(rec) => rec?,
            None => return Err(RunError::MissingHeader),
        };
        counters.input_line = header.input_line_no;
        // Header arity wins over any configured column count.
        expected = Some(header.fields.len());
        for warning in bindings.derive_from_header(&header.fields)? {
            writeln!(diag, "warning: {warning}")?;
        }
        let header_env = bindings.resolve(&header.fields, &counters, &header.raw_line);
        fire(sink, hooks.after_head.as_ref(), "after head", &header_env, esc)?;
        let columns = header.fields.len();
        emitters::emit_prologue(sink, &options.table, columns, Some(&header.fields), &header_env, esc)?;
        if let Some(generated) = emitters::generated_command(kind, columns) {
            command = Some(generated);
        }
        scaffold_done = true;
    }

    let mut last_env: Option<Environment> = None;
    for item in records {
        let record = item?;
        counters.input_line = record.input_line_no;
        // Headless without an explicit column count: the first data
        // line determines the accepted arity.
        let expected_columns = *expected.get_or_insert(record.fields.len());
        if !scaffold_done {
            let env = Environment::empty(0, counters.input_line);
            emitters::emit_prologue(sink, &options.table, expected_columns, None, &env, esc)?;
            if let Some(generated) = emitters::generated_command(kind, expected_columns) {
                command = Some(generated);
            }
            scaffold_done = true;
        }
        let policy = ConsistencyPolicy {
            check: options.consistency.check,
            expected_columns: Some(expected_columns),
            on_error: options.consistency.on_error.clone(),
        };
        match check_consistency(&record, &policy) {
            CheckOutcome::Ok => {}
            CheckOutcome::Abort => {
                return Err(RunError::AbortOnInconsistent(record.input_line_no))
            }
            CheckOutcome::Skip => {
                report.skipped_inconsistent += 1;
                match &policy.on_error {
                    OnError::WarnSkip => writeln!(
                        diag,
                        "warning: line {} has {} entries, expected {}",
                        record.input_line_no,
                        record.fields.len(),
                        expected_columns
                    )?,
                    OnError::CustomEmit(tpl) => {
                        // positional bindings only for the bad record
                        let env = BindingTable::default().resolve(
                            &record.fields,
                            &counters,
                            &record.raw_line,
                        );
                        fire(sink, Some(tpl), "on column count error", &env, esc)?;
                    }
                    _ => {}
                }
                continue;
            }
        }

        let pre_env = bindings.resolve(&record.fields, &counters, &record.raw_line);
        fire(sink, hooks.before_filter.as_ref(), "before filter", &pre_env, esc)?;
        if let Some(filter) = &options.filter {
            match filters::evaluate(filter, &pre_env).map_err(|source| RunError::Filter {
                line: record.input_line_no,
                source,
            })? {
                FilterDecision::Accept => {}
                FilterDecision::Reject => {
                    report.rejected_by_filter += 1;
                    continue;
                }
            }
        }

        counters.row += 1;
        report.accepted += 1;
        let env = bindings.resolve(&record.fields, &counters, &record.raw_line);
        match counters.row {
            1 => fire(sink, hooks.late_after_head.as_ref(), "late after head", &env, esc)?,
            2 => fire(
                sink,
                hooks
                    .late_after_first_line
                    .as_ref()
                    .or(hooks.late_after_line.as_ref()),
                "late after first line",
                &env,
                esc,
            )?,
            _ => fire(sink, hooks.late_after_line.as_ref(), "late after line", &env, esc)?,
        }
        if counters.row == 1 {
            fire(
                sink,
                hooks.before_first_line.as_ref().or(hooks.before_line.as_ref()),
                "before first line",
                &env,
                esc,
            )?;
        } else {
            fire(sink, hooks.before_line.as_ref(), "before line", &env, esc)?;
        }
        fire(
            sink,
            Some(command.as_ref().unwrap_or(&default_command)),
            "command",
            &env,
            esc,
        )?;
        if counters.row == 1 {
            fire(
                sink,
                hooks.after_first_line.as_ref().or(hooks.after_line.as_ref()),
                "after first line",
                &env,
                esc,
            )?;
        } else {
            fire(sink, hooks.after_line.as_ref(), "after line", &env, esc)?;
        }
        last_env = Some(env);
    }

    if let Some(env) = &last_env {
        fire(
            sink,
            hooks
                .late_after_last_line
                .as_ref()
                .or(hooks.late_after_line.as_ref()),
            "late after last line",
            env,
            esc,
        )?;
    }
    if kind != TableKind::None {
        if !scaffold_done {
            // nothing but a missing header's worth of data; keep the
            // scaffold balanced anyway
            let env = Environment::empty(0, counters.input_line);
            emitters::emit_prologue(sink, &options.table, expected.unwrap_or(0), None, &env, esc)?;
        }
        let env = last_env.unwrap_or_else(|| Environment::empty(counters.row, counters.input_line));
        emitters::emit_epilogue(sink, &options.table, &env, esc)?;
    }
    fire(
        sink,
        hooks.after_reading.as_ref(),
        "after reading",
        &Environment::empty(counters.row, counters.input_line),
        esc,
    )?;
    if options.verbose {
        writeln!(diag, "{report}")?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::read_records;

    const GRADE: &str = "name,givenname,matriculation,gender,grade\n\
                         Maier,Hans,12345,m,1.0\n\
                         Huber,Anna,23456,f,2.3\n\
                         Weißbäck,Werner,34567,m,5.0\n\
                         Bauer,Maria,19202,f,3.3\n";

    fn run_str(input: &str, options: &OptionSet) -> (String, RunReport) {
        let records = read_records(input.as_bytes(), &options.dialect).unwrap();
        let mut sink = Vec::new();
        let mut diag = Vec::new();
        let report = run(records.into_iter().map(Ok), options, &mut sink, &mut diag).unwrap();
        (String::from_utf8(sink).unwrap(), report)
    }

    #[test]
    fn grade_command_per_data_line() {
        let mut options = OptionSet::default();
        options.bindings.auto_from_header = true;
        options.hooks.command = Some(Template::parse("{{givenname}} {{name}};").unwrap());
        let (out, report) = run_str(GRADE, &options);
        assert_eq!(out, "Hans Maier;Anna Huber;Werner Weißbäck;Maria Bauer;");
        assert_eq!(report.accepted, 4);
        assert_eq!(report.skipped_inconsistent, 0);
        assert_eq!(report.rejected_by_filter, 0);
    }

    #[test]
    fn header_only_file() {
        let mut options = OptionSet::default();
        options.hooks.before_reading = Some(Template::parse("BR,").unwrap());
        options.hooks.after_head = Some(Template::parse("AH,").unwrap());
        options.hooks.after_reading = Some(Template::parse("AR").unwrap());
        options.hooks.late_after_last_line = Some(Template::parse("LALL,").unwrap());
        let (out, report) = run_str("name,grade\n", &options);
        assert_eq!(out, "BR,AH,AR");
        assert_eq!(report, RunReport::default());
    }

    #[test]
    fn empty_input_with_head_is_missing_header() {
        let options = OptionSet::default();
        let mut sink = Vec::new();
        let mut diag = Vec::new();
        let err = run(std::iter::empty(), &options, &mut sink, &mut diag).unwrap_err();
        assert!(matches!(err, RunError::MissingHeader));
    }

    #[test]
    fn inconsistent_lines_skipped_silently() {
        let input = "a,b\n1,2\nonly-one\n3,4\n";
        let mut options = OptionSet::default();
        options.hooks.command = Some(Template::parse("[{{col1}}]").unwrap());
        let (out, report) = run_str(input, &options);
        assert_eq!(out, "[1][3]");
        assert_eq!(report.skipped_inconsistent, 1);
        assert_eq!(report.accepted, 2);
    }

    #[test]
    fn abort_policy_raises() {
        let input = "a,b\nonly-one\n";
        let mut options = OptionSet::default();
        options.consistency.on_error = OnError::Abort;
        let records = read_records(input.as_bytes(), &options.dialect).unwrap();
        let mut sink = Vec::new();
        let mut diag = Vec::new();
        let err = run(records.into_iter().map(Ok), &options, &mut sink, &mut diag).unwrap_err();
        assert!(matches!(err, RunError::AbortOnInconsistent(2)));
    }

    #[test]
    fn warn_policy_writes_diagnostic() {
        let input = "a,b\n1,2,3\n";
        let mut options = OptionSet::default();
        options.consistency.on_error = OnError::WarnSkip;
        let records = read_records(input.as_bytes(), &options.dialect).unwrap();
        let mut sink = Vec::new();
        let mut diag = Vec::new();
        run(records.into_iter().map(Ok), &options, &mut sink, &mut diag).unwrap();
        let diag = String::from_utf8(diag).unwrap();
        assert!(diag.contains("line 2 has 3 entries, expected 2"));
        assert!(sink.is_empty());
    }

    #[test]
    fn custom_emit_renders_positional_bindings() {
        let input = "a,b\nx\n1,2\n";
        let mut options = OptionSet::default();
        options.consistency.on_error =
            OnError::CustomEmit(Template::parse("bad:{{col1}};").unwrap());
        options.hooks.command = Some(Template::parse("ok:{{col1}};").unwrap());
        let (out, report) = run_str(input, &options);
        assert_eq!(out, "bad:x;ok:1;");
        assert_eq!(report.skipped_inconsistent, 1);
    }

    #[test]
    fn check_disabled_accepts_everything() {
        let input = "a,b\nx\n1,2\n";
        let mut options = OptionSet::default();
        options.consistency.check = false;
        let (_, report) = run_str(input, &options);
        assert_eq!(report.skipped_inconsistent, 0);
        assert_eq!(report.accepted, 2);
    }

    #[test]
    fn headless_arity_from_first_line() {
        let input = "1,2\n3,4\nbad\n5,6\n";
        let mut options = OptionSet::default();
        options.head = false;
        options.hooks.command = Some(Template::parse("{{col2}};").unwrap());
        let (out, report) = run_str(input, &options);
        assert_eq!(out, "2;4;6;");
        assert_eq!(report.accepted, 3);
        assert_eq!(report.skipped_inconsistent, 1);
    }

    #[test]
    fn filter_counts_rejections() {
        let mut options = OptionSet::default();
        options.filter = Some(crate::filters::parse_filter(r#"{{col4}} == "f""#).unwrap());
        options.hooks.command = Some(Template::parse("{{col1}};").unwrap());
        let (out, report) = run_str(GRADE, &options);
        assert_eq!(out, "Huber;Bauer;");
        assert_eq!(report.accepted, 2);
        assert_eq!(report.rejected_by_filter, 2);
        assert_eq!(
            report.accepted + report.rejected_by_filter + report.skipped_inconsistent,
            4
        );
    }

    #[test]
    fn row_and_inputline_counters() {
        let mut options = OptionSet::default();
        options.filter = Some(crate::filters::parse_filter("{{inputline}} >= 4").unwrap());
        options.hooks.command = Some(Template::parse("r{{row}}i{{inputline}};").unwrap());
        let (out, _) = run_str(GRADE, &options);
        assert_eq!(out, "r1i4;r2i5;");
    }
}
