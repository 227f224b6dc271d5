use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use mirrorfuzz_core::executor::{CrashReport, Outcome};

const COLUMNS: [&str; 6] = ["Framework", "Total", "Segv", "FPE", "Abort", "Other"];

#[derive(Default)]
struct Row {
    segv: BTreeSet<String>,
    fpe: BTreeSet<String>,
    abort: BTreeSet<String>,
    other: BTreeSet<String>,
}

impl Row {
    fn counts(&self) -> [usize; 5] {
        let (s, f, a, o) = (self.segv.len(), self.fpe.len(), self.abort.len(), self.other.len());
        [s + f + a + o, s, f, a, o]
    }
}

/// Unique bugs (by dedup key) per framework and crash type. Timeouts and
/// plain errors are not bugs and only appear in the footer.
pub fn render_table(reports: &[CrashReport]) -> String {
    let mut rows: BTreeMap<&str, Row> = BTreeMap::new();
    let mut timeouts = 0;
    let mut errors = 0;
    for r in reports {
        let row = rows.entry(r.target.framework.as_str()).or_default();
        let key = r.dedup_key.clone();
        match r.outcome {
            Outcome::Segv => row.segv.insert(key),
            Outcome::Fpe => row.fpe.insert(key),
            Outcome::Abort => row.abort.insert(key),
            Outcome::InternalFailure | Outcome::CompileFailure => row.other.insert(key),
            Outcome::Timeout => {
                timeouts += 1;
                false
            }
            Outcome::Pass | Outcome::Error => {
                errors += 1;
                false
            }
        };
    }
    rows.retain(|_, row| row.counts()[0] > 0);

    let mut table: Vec<[String; 6]> = Vec::new();
    let mut total = [0usize; 5];
    for (fw, row) in &rows {
        let c = row.counts();
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
        table.push(line(fw, c));
    }
    table.push(line("Total", total));

    let mut widths = COLUMNS.map(str::len);
    for r in &table {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |out: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        writeln!(out, "{}", parts.join(" | ").trim_end()).unwrap();
    };
    fmt_row(&mut out, &COLUMNS);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    writeln!(out, "{}", rule.join("-|-")).unwrap();
    for r in &table {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        fmt_row(&mut out, &cells);
    }
    if timeouts + errors > 0 {
        writeln!(out, "({timeouts} timeouts and {errors} other failures not counted)").unwrap();
    }
    out
}

fn line(label: &str, c: [usize; 5]) -> [String; 6] {
    [
        label.to_string(),
        c[0].to_string(),
        c[1].to_string(),
        c[2].to_string(),
        c[3].to_string(),
        c[4].to_string(),
    ]
}
