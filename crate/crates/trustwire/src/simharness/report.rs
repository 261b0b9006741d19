//! Text renderings of a scenario run: an aligned five-column table and a
//! machine-readable tab-separated form.

use super::ExchangeOutcome;

const HEADERS: [&str; 5] = ["SOURCE", "TARGET", "CODE", "AVAILABLE", "SHARED"];

fn shared_cell(outcome: &ExchangeOutcome) -> String {
    match (&outcome.error, &outcome.shared) {
        (Some(error), _) => format!("failed: {error}"),
        (None, Some(shared)) => {
            if shared.items.is_empty() {
                format!("0 (trust {:.1})", shared.trust_level_used)
            } else {
                format!(
                    "{} (trust {:.1}): {}",
                    shared.items.len(),
                    shared.trust_level_used,
                    shared.items.join(",")
                )
            }
        }
        (None, None) => "0".to_string(),
    }
}

/// Aligned table mirroring the canonical disclosure table's five columns.
pub fn render_table(outcomes: &[ExchangeOutcome]) -> String {
    let rows: Vec<[String; 5]> = outcomes
        .iter()
        .map(|outcome| {
            [
                outcome.source.to_string(),
                outcome.target.to_string(),
                outcome.code.clone(),
                outcome.available.to_string(),
                shared_cell(outcome),
            ]
        })
        .collect();

    let mut widths = HEADERS.map(str::len);
    for row in &rows {
        for (width, cell) in widths.iter_mut().zip(row) {
            *width = (*width).max(cell.len());
        }
    }

    let render_row = |cells: &[String; 5]| -> String {
        let mut line = String::new();
        for (i, (cell, width)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if i + 1 < cells.len() {
                line.push_str(&" ".repeat(width - cell.len()));
            }
        }
        line.push('\n');
        line
    };

    let header = HEADERS.map(String::from);
    let mut out = render_row(&header);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (HEADERS.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&render_row(row));
    }
    out
}

/// One outcome per line, tab-separated:
/// index, source, target, code, available, shared count, items (comma-joined,
/// `-` when empty), and error class (`ok` on success).
pub fn render_lines(outcomes: &[ExchangeOutcome]) -> String {
    let mut out = String::new();
    for outcome in outcomes {
        let items = outcome
            .shared
            .as_ref()
            .filter(|shared| !shared.items.is_empty())
            .map_or("-".to_string(), |shared| shared.items.join(","));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            outcome.index,
            outcome.source,
            outcome.target,
            outcome.code,
            outcome.available,
            outcome.shared_count(),
            items,
            outcome.error.as_deref().unwrap_or("ok"),
        ));
    }
    out
}
