//! Shared input generators for the benchmarks.

use csvforge_core::dialect::{tokenize_line, Dialect, RawRecord};

/// Deterministic synthetic table: `rows` records of `cols` fields with
/// a mix of text, numbers, and brace-masked separators.
pub fn synthetic_table(rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| match (r + c) % 4 {
                    0 => format!("cell{r}x{c}"),
                    1 => format!("{}.{}", r % 97, c),
                    2 => format!("{{masked, {r}}}"),
                    _ => String::from("plain text"),
                })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

/// The same table parsed into records, for sort benchmarks.
pub fn synthetic_records(rows: usize, cols: usize) -> Vec<RawRecord> {
    let dialect = Dialect::default();
    synthetic_table(rows, cols)
        .into_iter()
        .enumerate()
        .map(|(i, raw_line)| RawRecord {
            input_line_no: i as u64 + 1,
            fields: tokenize_line(&raw_line, &dialect).expect("synthetic line is well-formed"),
            raw_line,
        })
        .collect()
}
