use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use super::{ProbingTask, Subset, TaskEntry, TaskError};

/// Writes `subset TAB label TAB text` lines; returns the number of lines.
pub fn write_senteval<W: Write>(task: &ProbingTask, mut sink: W) -> std::io::Result<usize> {
    for entry in &task.entries {
        writeln!(sink, "{}\t{}\t{}", entry.subset, entry.label, entry.text)?;
    }
    sink.flush()?;
    Ok(task.entries.len())
}

/// Reads a SentEval file back. The class set is the set of labels seen.
pub fn read_senteval<R: BufRead>(
    reader: R,
    language_code: &str,
    category: &str,
) -> Result<ProbingTask, TaskError> {
    let mut entries = Vec::new();
    let mut class_set = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let format_err = |reason: String| TaskError::Format { line: i + 1, reason };
        let mut parts = line.splitn(3, '\t');
        let (Some(subset), Some(label), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format_err("expected subset, label and text separated by tabs".into()));
        };
        let subset: Subset = subset.parse().map_err(format_err)?;
        class_set.insert(label.to_string());
        entries.push(TaskEntry {
            subset,
            label: label.to_string(),
            text: text.to_string(),
        });
    }
    Ok(ProbingTask {
        language_code: language_code.to_string(),
        category: category.to_string(),
        entries,
        class_set,
    })
}
