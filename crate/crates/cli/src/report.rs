//! Helpers for comparing reports across runs.

/// Drops every line whose first cell starts with `wall-clock` and every
/// column whose header cell does. A header is the first line of each
/// blank-line separated block that is not a `#` comment.
pub fn strip_wall_clock(report: &str) -> String {
    let mut out = Vec::new();
    let mut drop: Vec<bool> = Vec::new();
    let mut need_header = true;
    for line in report.lines() {
        if line.trim().is_empty() {
            need_header = true;
            out.push(String::new());
            continue;
        }
        if line.starts_with('#') {
            out.push(line.to_string());
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if need_header {
            drop = cells.iter().map(|c| c.starts_with("wall-clock")).collect();
            need_header = false;
        }
        if cells[0].starts_with("wall-clock") {
            continue;
        }
        let kept: Vec<&str> = cells
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.get(*i).copied().unwrap_or(false))
            .map(|(_, c)| *c)
            .collect();
        out.push(kept.join("\t"));
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_lines_and_columns() {
        let r = "# t\na\twall-clock_s\tb\n1\t0.3\t2\n\nx\t1\nwall-clock mean\t4\n";
        assert_eq!(strip_wall_clock(r), "# t\na\tb\n1\t2\n\nx\t1");
        let other = "# t\na\twall-clock_s\tb\n1\t0.9\t2\n\nx\t1\nwall-clock mean\t5\n";
        assert_eq!(strip_wall_clock(r), strip_wall_clock(other));
        assert_ne!(strip_wall_clock(r), strip_wall_clock(&r.replace("1\t0.3", "7\t0.3")));
    }
}
