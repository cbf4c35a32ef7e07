//! Black-box checks of the binary: exit codes, option layering,
//! config files, and the plumbing subcommands.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_csvforge");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run_in(dir: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(BIN);
    if let Some(dir) = dir {
        cmd.current_dir(dir);
    }
    cmd.args(args).output().expect("binary runs")
}

fn run(args: &[&str]) -> Output {
    run_in(None, args)
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn render_without_command_is_a_usage_error() {
    let out = run(&["render", fixture("grade.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["render", "--bogus", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unbound_placeholder_is_a_data_error() {
    let out = run(&[
        "render",
        "--command",
        "{{missing}}",
        fixture("grade.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing"), "stderr names the placeholder: {stderr}");
}

#[test]
fn malformed_filter_is_a_usage_error() {
    let out = run(&[
        "render",
        "--command",
        "x",
        "--filter",
        "{{a}} >",
        fixture("grade.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn later_flags_override_earlier_ones() {
    let grade = fixture("grade.csv");
    let base = [
        "render",
        "--auto-column-names",
        "--command",
        "{{name}};",
        grade.to_str().unwrap(),
    ];
    let on_then_off = run(&[&base[..], &["--respect-all", "--respect-underscore=false"]].concat());
    let off_then_on = run(&[&base[..], &["--respect-underscore=false", "--respect-all"]].concat());
    // the file has no underscores; exercise the ordering on a synthetic one
    assert!(on_then_off.status.success() && off_then_on.status.success());

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("u.csv");
    std::fs::write(&input, "h\na_b\n").unwrap();
    let base = ["render", "--command", "{{col1}};", input.to_str().unwrap()];
    let out = run(&[&base[..], &["--respect-all", "--respect-underscore=false"]].concat());
    assert_eq!(stdout(&out), "a_b;");
    let out = run(&[&base[..], &["--respect-underscore=false", "--respect-all"]].concat());
    assert_eq!(stdout(&out), "a\\_b;");
}

#[test]
fn config_file_styles_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("csvforge.conf"),
        "separator = semicolon\n\
         \n\
         [style passed]\n\
         auto-column-names\n\
         filter = {{grade}} != \"5.0\"\n",
    )
    .unwrap();
    std::fs::copy(fixture("testsemi.csv"), dir.path().join("in.csv")).unwrap();

    // global separator applies without flags
    let out = run_in(
        Some(dir.path()),
        &["render", "--auto-column-names", "--command", "{{name}};", "in.csv"],
    );
    assert_eq!(stdout(&out), "Maier;Huber;Weißbäck;");

    // styles come from the same file
    let out = run_in(
        Some(dir.path()),
        &[
            "render",
            "--style",
            "passed",
            "--command",
            "{{givenname}} {{name}} ({{grade}}); ",
            "in.csv",
        ],
    );
    assert_eq!(stdout(&out), "Hans Maier (1.0); Anna Huber (2.3); ");

    // explicit flags beat config globals
    std::fs::copy(fixture("grade.csv"), dir.path().join("comma.csv")).unwrap();
    let out = run_in(
        Some(dir.path()),
        &[
            "render",
            "--separator",
            "comma",
            "--auto-column-names",
            "--command",
            "{{name}};",
            "comma.csv",
        ],
    );
    assert_eq!(stdout(&out), "Maier;Huber;Weißbäck;Bauer;");
}

#[test]
fn sort_subcommand_prints_raw_records() {
    let out = run(&[
        "sort",
        "--by",
        "amount:number:desc",
        fixture("data.csv").to_str().unwrap(),
    ]);
    assert_eq!(
        stdout(&out),
        "land,group,amount\n\
         Baden-Württemberg,A,2300\n\
         Hessen,B,2100\n\
         Thüringen,A,1900\n\
         Bayern,A,1700\n\
         Sachsen,B,1520\n"
    );
}

#[test]
fn sort_without_keys_is_a_usage_error() {
    let out = run(&["sort", fixture("data.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn transform_braces_quoted_fields() {
    let out = run(&[
        "transform",
        "--from-separator",
        "semicolon",
        fixture("imported.csv").to_str().unwrap(),
    ]);
    let text = stdout(&out);
    assert!(text.starts_with("{name},{address},{email}\n"));
    assert!(text.contains("{Yellow Road 123, Brimblsby}"));
    // the transformed stream parses with 3 fields per record
    let parse = run(&["inspect", "--quote-transform", "semicolon", fixture("imported.csv").to_str().unwrap()]);
    let report = stdout(&parse);
    assert!(report.contains("records: 4"), "{report}");
    assert!(report.contains("columns: 3"), "{report}");
}

#[test]
fn inspect_reports_counts_and_bindings() {
    let out = run(&[
        "inspect",
        "--column-names",
        "givenname=firstname",
        "--filter",
        "{{firstname}} == \"Hans\"",
        fixture("grade.csv").to_str().unwrap(),
    ]);
    let report = stdout(&out);
    assert!(report.contains("records: 5"), "{report}");
    assert!(report.contains("header: name, givenname, matriculation, gender, grade"));
    assert!(report.contains("bindings: firstname->2"));
    assert!(report.contains("accepted: 1"));
    assert!(report.contains("rejected: 3"));
}

#[test]
fn output_flag_writes_file_and_keeps_stdout_empty() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.tex");
    let out = run(&[
        "autotable",
        "--kind",
        "markdown",
        "-o",
        target.to_str().unwrap(),
        fixture("data.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&target).unwrap();
    assert!(written.starts_with("land|group|amount\n---|---|---\n"));
}

#[test]
fn stdin_and_stdout_dashes() {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(BIN)
        .args(["render", "--no-head", "--command", "[{{col2}}]", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"a,b\nc,d\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), "[b][d]");
}

#[test]
fn abort_policy_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "a,b\n1\n").unwrap();
    let out = run(&[
        "render",
        "--command",
        "x",
        "--on-column-count-error",
        "abort",
        input.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
