//! CSV metric emission.
//!
//! One file per run: `#`-prefixed provenance header carrying the fully
//! resolved configuration, one RFC-4180-style header row, one row per
//! training step, and a trailing summary block. All values are plain
//! numbers, so files from the threads backend are byte-identical across
//! runs of the same seed.

use crate::trainer::{RunSummary, WorkerStepRow};
use std::io::{self, Write};

/// Writes the provenance comment block and the column header row.
pub fn write_train_header(
    out: &mut dyn Write,
    pairs: &[(String, String)],
    world_size: usize,
) -> io::Result<()> {
    for (k, v) in pairs {
        writeln!(out, "# {k} = {v}")?;
    }
    let mut header = String::from("step");
    for rank in 0..world_size {
        header.push_str(&format!(",loss_{rank}"));
    }
    header.push_str(",accuracy,union_ratio,bytes_sent");
    writeln!(out, "{header}")
}

/// One per-step row as seen by any single rank.
pub fn write_train_row(out: &mut dyn Write, row: &WorkerStepRow) -> io::Result<()> {
    let mut line = row.step.to_string();
    for loss in &row.all_losses {
        line.push_str(&format!(",{loss}"));
    }
    line.push_str(&format!(
        ",{},{},{}",
        row.mean_accuracy,
        row.union_ratio(),
        row.bytes_sent
    ));
    writeln!(out, "{line}")
}

/// Trailing summary comments (final accuracy/loss, bytes, union ratio).
pub fn write_train_summary(out: &mut dyn Write, summary: &RunSummary) -> io::Result<()> {
    writeln!(out, "# final_accuracy = {}", summary.final_accuracy)?;
    writeln!(out, "# final_loss = {}", summary.final_loss)?;
    writeln!(out, "# total_bytes_rank0 = {}", summary.total_bytes_rank0)?;
    writeln!(out, "# mean_union_ratio = {}", summary.mean_union_ratio())
}

/// Whole-run convenience writer (header, every row, summary).
pub fn write_train_csv(
    out: &mut dyn Write,
    pairs: &[(String, String)],
    summary: &RunSummary,
) -> io::Result<()> {
    write_train_header(out, pairs, summary.world_size)?;
    for row in &summary.workers[0].rows {
        write_train_row(out, row)?;
    }
    write_train_summary(out, summary)
}
