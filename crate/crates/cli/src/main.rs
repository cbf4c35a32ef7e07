//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data
//! error, 3 external preprocessor failure. Rendered output goes to
//! stdout (or `--output`), diagnostics to stderr.

use std::io::{Read, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use csvforge_core::config::{
    find_config, load_config, resolve, ConfigError, ConfigFile, KeyAssignment, KeyValue,
    ResolveError, KEYS,
};
use csvforge_core::dialect::{read_records, RawRecord, ReadError, Separator};
use csvforge_core::pipeline::{run, RunError};
use csvforge_core::preprocess::{
    quote_transform, run_external, sort_records, PreprocessError, PreprocessSpec, SortSpec,
};
use csvforge_core::{OptionSet, TableKind};
use thiserror::Error;

/// Marker for bare occurrences of no-value keys.
const NO_VALUE: &str = "\u{0}";

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Binding(#[from] csvforge_core::BindingError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Resolve(_) => 1,
            CliError::Preprocess(source) => match source {
                PreprocessError::EmptySortSpec
                | PreprocessError::BadSortToken(_)
                | PreprocessError::EmptyCommand => 1,
                PreprocessError::UnterminatedQuote(_)
                | PreprocessError::UnknownSortColumn(_) => 2,
                PreprocessError::PreprocessorFailed { .. }
                | PreprocessError::MissingOutput(_)
                | PreprocessError::Io(_) => 3,
            },
            _ => 2,
        }
    }
}

fn key_args() -> Vec<Arg> {
    KEYS.iter()
        .map(|def| {
            let arg = Arg::new(def.name)
                .long(def.name)
                .help(def.help)
                .action(ArgAction::Append);
            match def.value {
                KeyValue::Required => arg.num_args(1).value_name("VALUE"),
                KeyValue::Bool => arg
                    .num_args(0..=1)
                    .value_name("BOOL")
                    .require_equals(true)
                    .default_missing_value("true"),
                KeyValue::None => arg.num_args(0).default_missing_value(NO_VALUE),
            }
        })
        .collect()
}

fn base_command(name: &'static str, about: &'static str) -> Command {
    Command::new(name)
        .about(about)
        .args(key_args())
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help("config file (default: ./csvforge.conf if present)"),
        )
        .arg(
            Arg::new("output")
                .long("output")
                .short('o')
                .value_name("PATH")
                .help("write output to PATH instead of stdout"),
        )
        .arg(
            Arg::new("FILE")
                .default_value("-")
                .help("input CSV file, `-` for stdin"),
        )
}

fn cli() -> Command {
    Command::new("csvforge")
        .about("process CSV files with hooks, filters, templates, and table emission")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(base_command(
            "render",
            "render a template once per accepted record",
        ))
        .subcommand(
            base_command("autotable", "emit a table with derived format and header").arg(
                Arg::new("kind")
                    .long("kind")
                    .value_name("KIND")
                    .value_parser(["tabular", "longtable", "booktabs", "booklongtable", "markdown"])
                    .default_value("tabular")
                    .help("table flavor"),
            ),
        )
        .subcommand(
            base_command("sort", "sort the input and print the raw records").arg(
                Arg::new("by")
                    .long("by")
                    .value_name("SPEC")
                    .help("sort keys `col[:type][:order],...`"),
            ),
        )
        .subcommand(
            base_command("transform", "rewrite doublequote CSV as brace groups").arg(
                Arg::new("from-separator")
                    .long("from-separator")
                    .value_name("SEP")
                    .default_value("comma")
                    .help("separator of the source file"),
            ),
        )
        .subcommand(base_command(
            "inspect",
            "report record counts, columns, and bindings without rendering",
        ))
}

/// Key assignments of one invocation, in command-line order.
fn flag_layer(matches: &ArgMatches) -> Vec<KeyAssignment> {
    let mut items: Vec<(usize, KeyAssignment)> = Vec::new();
    for def in KEYS {
        let Some(indices) = matches.indices_of(def.name) else {
            continue;
        };
        let values: Vec<String> = matches
            .get_many::<String>(def.name)
            .map(|v| v.cloned().collect())
            .unwrap_or_default();
        for (index, value) in indices.zip(values) {
            let value = (value != NO_VALUE).then_some(value);
            items.push((index, (def.name.to_string(), value)));
        }
    }
    items.sort_by_key(|(index, _)| *index);
    items.into_iter().map(|(_, assignment)| assignment).collect()
}

fn load_layers(matches: &ArgMatches) -> Result<(ConfigFile, Vec<Vec<KeyAssignment>>), CliError> {
    let explicit = matches.get_one::<String>("config").map(Path::new);
    let config = match find_config(explicit) {
        Some(path) => load_config(&path)?,
        None => ConfigFile::default(),
    };
    let layers = vec![config.globals.clone(), flag_layer(matches)];
    Ok((config, layers))
}

fn read_input(path: &str) -> Result<String, CliError> {
    if path == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        Ok(text)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

/// Apply the resolved preprocess step and parse the input into records.
fn gather_records(path: &str, options: &OptionSet) -> Result<Vec<RawRecord>, CliError> {
    match &options.preprocess {
        PreprocessSpec::None => {
            let text = read_input(path)?;
            Ok(read_records(text.as_bytes(), &options.dialect)?)
        }
        PreprocessSpec::QuoteTransform { source_separator } => {
            let text = read_input(path)?;
            let transformed = transform_text(&text, *source_separator, options.dialect.separator)?;
            Ok(read_records(transformed.as_bytes(), &options.dialect)?)
        }
        PreprocessSpec::BuiltinSort(spec) => {
            let text = read_input(path)?;
            let mut records = read_records(text.as_bytes(), &options.dialect)?;
            Ok(sorted(records.drain(..).collect(), spec, options)?)
        }
        PreprocessSpec::External { command, output } => {
            if path == "-" {
                return Err(CliError::Usage(
                    "an external preprocessor needs a real input file, not stdin".to_string(),
                ));
            }
            let produced = run_external(command, Path::new(path), output.as_deref())?;
            let text = std::fs::read_to_string(&produced)?;
            Ok(read_records(text.as_bytes(), &options.dialect)?)
        }
    }
}

fn sorted(
    mut records: Vec<RawRecord>,
    spec: &SortSpec,
    options: &OptionSet,
) -> Result<Vec<RawRecord>, PreprocessError> {
    if options.head && !records.is_empty() {
        let header = records.remove(0);
        let names = header.fields.clone();
        sort_records(&mut records, spec, Some(&names))?;
        records.insert(0, header);
    } else {
        sort_records(&mut records, spec, None)?;
    }
    Ok(records)
}

fn transform_text(
    text: &str,
    source: Separator,
    target: Separator,
) -> Result<String, PreprocessError> {
    let mut out = String::with_capacity(text.len());
    for (line_no, line) in text.lines().enumerate() {
        out.push_str(&quote_transform(line, line_no as u64 + 1, source, target)?);
        out.push('\n');
    }
    Ok(out)
}

fn write_output(matches: &ArgMatches, bytes: &[u8]) -> Result<(), CliError> {
    match matches.get_one::<String>("output").map(String::as_str) {
        None | Some("-") => std::io::stdout().write_all(bytes)?,
        Some(path) => std::fs::write(path, bytes)?,
    }
    Ok(())
}

fn render_like(matches: &ArgMatches, options: &OptionSet) -> Result<(), CliError> {
    let path = matches.get_one::<String>("FILE").unwrap();
    let records = gather_records(path, options)?;
    let mut sink = Vec::new();
    let mut diag = std::io::stderr();
    run(records.into_iter().map(Ok), options, &mut sink, &mut diag)?;
    write_output(matches, &sink)
}

fn cmd_render(matches: &ArgMatches) -> Result<(), CliError> {
    let (config, layers) = load_layers(matches)?;
    let options = resolve(&layers, &config.styles)?;
    if options.hooks.command.is_none() && options.table.kind == TableKind::None {
        return Err(CliError::Usage(
            "render needs a --command template or a table kind".to_string(),
        ));
    }
    render_like(matches, &options)
}

fn cmd_autotable(matches: &ArgMatches) -> Result<(), CliError> {
    let kind = match matches.get_one::<String>("kind").unwrap().as_str() {
        "tabular" => "autotabular",
        "longtable" => "autolongtable",
        "booktabs" => "autobooktabular",
        "booklongtable" => "autobooklongtable",
        "markdown" => "markdown",
        other => unreachable!("kind {other} rejected by clap"),
    };
    let (config, mut layers) = load_layers(matches)?;
    // the kind is a baseline; explicit keys may still override it
    layers.insert(1, vec![("table".to_string(), Some(kind.to_string()))]);
    let options = resolve(&layers, &config.styles)?;
    render_like(matches, &options)
}

fn cmd_sort(matches: &ArgMatches) -> Result<(), CliError> {
    let (config, mut layers) = load_layers(matches)?;
    if let Some(spec) = matches.get_one::<String>("by") {
        layers.push(vec![("sort-by".to_string(), Some(spec.clone()))]);
    }
    let options = resolve(&layers, &config.styles)?;
    let spec = match &options.preprocess {
        PreprocessSpec::BuiltinSort(spec) => spec.clone(),
        _ => {
            return Err(CliError::Usage(
                "sort needs --by, sort-by, or sort-by-rule".to_string(),
            ))
        }
    };
    let path = matches.get_one::<String>("FILE").unwrap();
    let text = read_input(path)?;
    let records = read_records(text.as_bytes(), &options.dialect)?;
    let records = sorted(records, &spec, &options)?;
    let mut out = String::new();
    for record in &records {
        out.push_str(&record.raw_line);
        out.push('\n');
    }
    write_output(matches, out.as_bytes())
}

fn cmd_transform(matches: &ArgMatches) -> Result<(), CliError> {
    let source = matches.get_one::<String>("from-separator").unwrap();
    let source = Separator::from_name(source).ok_or_else(|| {
        CliError::Usage(format!("unknown separator `{source}`"))
    })?;
    let (config, layers) = load_layers(matches)?;
    let options = resolve(&layers, &config.styles)?;
    let path = matches.get_one::<String>("FILE").unwrap();
    let text = read_input(path)?;
    let transformed = transform_text(&text, source, options.dialect.separator)?;
    write_output(matches, transformed.as_bytes())
}

fn cmd_inspect(matches: &ArgMatches) -> Result<(), CliError> {
    let (config, layers) = load_layers(matches)?;
    let options = resolve(&layers, &config.styles)?;
    let path = matches.get_one::<String>("FILE").unwrap();
    let records = gather_records(path, &options)?;
    let total = records.len();

    let mut bindings = options.bindings.clone();
    let mut header_names: Option<Vec<String>> = None;
    if options.head {
        if let Some(header) = records.first() {
            bindings.derive_from_header(&header.fields)?;
            header_names = Some(header.fields.clone());
        }
    }

    // dry run: count acceptance without emitting anything
    let mut counting = options.clone();
    counting.hooks = Default::default();
    counting.hooks.command = Some(csvforge_core::Template::parse("").expect("empty template"));
    counting.table = Default::default();
    counting.verbose = false;
    let mut sink = Vec::new();
    let mut diag = std::io::stderr();
    let report = run(
        records.iter().cloned().map(Ok),
        &counting,
        &mut sink,
        &mut diag,
    )?;

    let mut out = String::new();
    out.push_str(&format!("file: {path}\n"));
    out.push_str(&format!("records: {total}\n"));
    if let Some(names) = &header_names {
        out.push_str(&format!("columns: {}\n", names.len()));
        out.push_str(&format!("header: {}\n", names.join(", ")));
    }
    let mut named: Vec<(String, usize)> = bindings
        .iter()
        .map(|(name, index)| (name.to_string(), index))
        .collect();
    named.sort();
    if !named.is_empty() {
        let list: Vec<String> = named
            .iter()
            .map(|(name, index)| format!("{name}->{index}"))
            .collect();
        out.push_str(&format!("bindings: {}\n", list.join(" ")));
    }
    out.push_str(&format!("accepted: {}\n", report.accepted));
    out.push_str(&format!("skipped: {}\n", report.skipped_inconsistent));
    out.push_str(&format!("rejected: {}\n", report.rejected_by_filter));
    write_output(matches, out.as_bytes())
}

fn dispatch() -> Result<(), CliError> {
    let matches = match cli().try_get_matches() {
        Ok(matches) => matches,
        Err(err) => {
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    match matches.subcommand() {
        Some(("render", m)) => cmd_render(m),
        Some(("autotable", m)) => cmd_autotable(m),
        Some(("sort", m)) => cmd_sort(m),
        Some(("transform", m)) => cmd_transform(m),
        Some(("inspect", m)) => cmd_inspect(m),
        _ => unreachable!("subcommand required"),
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("csvforge: {err}");
            ExitCode::from(err.code())
        }
    }
}
