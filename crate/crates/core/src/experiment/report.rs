use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    aggregate_cells, categorize_perturbation_effects, delta_table, CaseCategories, CellResult, CellTemplate,
    DeltaCell, ExperimentError, MatrixResult, ResultsTable, Setting, TaskRecord,
};
use crate::lang::Language;

fn fixed(v: f64) -> String {
    // Avoid printing "-0.00".
    let v = if v.abs() < 0.005 { 0.0 } else { v };
    format!("{v:.2}")
}

fn signed(v: f64) -> String {
    let v = if v.abs() < 0.005 { 0.0 } else { v };
    format!("{v:+.2}")
}

fn relative(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |r| format!("{}%", signed(r)))
}

fn csv_error(e: csv::Error) -> ExperimentError {
    ExperimentError::InvalidConfig(format!("csv: {e}"))
}

fn cells_in(result: &MatrixResult) -> Vec<(&str, &CellResult)> {
    let mut out: Vec<(&str, &CellResult)> = result.baseline.values().map(|c| ("baseline", c)).collect();
    for (name, table) in &result.tables {
        out.extend(table.cells.values().map(|c| (name.as_str(), c)));
    }
    out
}

/// One row per cell with fixed two-decimal rates.
pub fn cells_csv(result: &MatrixResult) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "table", "setting", "retriever", "mutation", "source", "target", "k", "seed", "n_tasks", "n_pass",
        "pass_rate", "baseline_pass_rate", "delta_pp", "relative_pct",
    ])
    .map_err(csv_error)?;
    for (table, cell) in cells_in(result) {
        let c = &cell.config;
        let base = match c.setting {
            Setting::Baseline => None,
            _ => result.baseline.get(&c.target_language).map(|b| b.pass_rate),
        };
        w.write_record([
            table.to_string(),
            c.setting.id().to_string(),
            c.retriever.map(|r| r.id().to_string()).unwrap_or_default(),
            c.mutation.map(|m| m.id().to_string()).unwrap_or_default(),
            c.source_language.map(|l| l.id().to_string()).unwrap_or_default(),
            c.target_language.id().to_string(),
            c.k.to_string(),
            c.seed.to_string(),
            cell.n_tasks.to_string(),
            cell.n_pass().to_string(),
            fixed(cell.pass_rate),
            base.map(fixed).unwrap_or_default(),
            base.map(|b| signed(cell.pass_rate - b)).unwrap_or_default(),
            base.map(|b| match super::relative_delta(cell.pass_rate, b) {
                Some(r) => signed(r),
                None => "n/a".into(),
            })
            .unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_error(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn clean_table_name(attack: &CellResult) -> Option<String> {
    let clean = attack.config.clean_counterpart()?;
    Some(
        CellTemplate {
            setting: clean.setting,
            retriever: clean.retriever,
            mutation: None,
        }
        .table_name(),
    )
}

/// Perturbation case categories for every attack cell whose clean and
/// baseline cells are present.
pub fn category_tables(result: &MatrixResult) -> Result<Vec<(String, CaseCategories)>, ExperimentError> {
    let mut out = Vec::new();
    for (name, table) in &result.tables {
        for (pair, attack) in &table.cells {
            if attack.config.setting != Setting::Attack {
                continue;
            }
            let clean = clean_table_name(attack)
                .and_then(|n| result.tables.get(&n))
                .and_then(|t| t.cells.get(pair));
            let baseline = result.baseline.get(&pair.1);
            if let (Some(clean), Some(baseline)) = (clean, baseline) {
                out.push((name.clone(), categorize_perturbation_effects(attack, clean, baseline)?));
            }
        }
    }
    Ok(out)
}

pub fn categories_csv(result: &MatrixResult) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["table", "mutation", "source", "target", "category", "count"])
        .map_err(csv_error)?;
    for (table, cats) in category_tables(result)? {
        for (label, count) in &cats.counts {
            w.write_record([
                table.clone(),
                cats.mutation.map(|m| m.id().to_string()).unwrap_or_default(),
                cats.source.map(|l| l.id().to_string()).unwrap_or_default(),
                cats.target.id().to_string(),
                label.clone(),
                count.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| csv_error(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct AuditLine<'a> {
    table: &'a str,
    cell: String,
    #[serde(flatten)]
    task: &'a TaskRecord,
}

/// One JSON line per task of every cell.
pub fn audit_jsonl(result: &MatrixResult) -> String {
    let mut out = String::new();
    for (table, cell) in cells_in(result) {
        for task in &cell.per_task {
            let line = AuditLine {
                table,
                cell: cell.config.label(),
                task,
            };
            out.push_str(&serde_json::to_string(&line).expect("audit line serializes"));
            out.push('\n');
        }
    }
    out
}

fn format_cell(c: &DeltaCell) -> String {
    format!("{} ({} pp, {})", fixed(c.pass_rate), signed(c.delta_pp), relative(super::relative_delta(c.pass_rate, c.baseline)))
}

fn table_markdown(out: &mut String, name: &str, table: &ResultsTable, result: &MatrixResult) -> Result<(), ExperimentError> {
    let deltas = delta_table(table)?;
    let sources: BTreeSet<Language> = table.cells.keys().map(|k| k.0).collect();
    let targets: BTreeSet<Language> = table.cells.keys().map(|k| k.1).collect();

    writeln!(out, "## {name}\n").unwrap();
    let mut header = "| Source \\ Target |".to_string();
    let mut rule = "|---|".to_string();
    for t in &targets {
        write!(header, " {} |", t.display_name()).unwrap();
        rule.push_str("---:|");
    }
    header.push_str(" Mean |");
    rule.push_str("---:|");
    writeln!(out, "{header}\n{rule}").unwrap();

    let mut row = "| Baseline |".to_string();
    let mut base_vals = Vec::new();
    for t in &targets {
        match table.baseline.get(t) {
            Some(b) => {
                base_vals.push(b.pass_rate);
                write!(row, " {} |", fixed(b.pass_rate)).unwrap();
            }
            None => row.push_str(" - |"),
        }
    }
    let base_mean = if base_vals.is_empty() {
        0.0
    } else {
        base_vals.iter().sum::<f64>() / base_vals.len() as f64
    };
    write!(row, " {} |", fixed(base_mean)).unwrap();
    writeln!(out, "{row}").unwrap();

    for s in &sources {
        let mut row = format!("| {} |", s.display_name());
        for t in &targets {
            match deltas.cells.get(&(*s, *t)) {
                Some(c) => write!(row, " {} |", format_cell(c)).unwrap(),
                None => row.push_str(" - |"),
            }
        }
        let m = deltas.row_means[s];
        write!(row, " {} ({} pp) |", fixed(m.pass_rate), signed(m.delta_pp)).unwrap();
        writeln!(out, "{row}").unwrap();
    }
    let mut row = "| Mean |".to_string();
    for t in &targets {
        let m = deltas.col_means[t];
        write!(row, " {} ({} pp) |", fixed(m.pass_rate), signed(m.delta_pp)).unwrap();
    }
    let g = deltas.grand_mean;
    write!(row, " {} ({} pp) |", fixed(g.pass_rate), signed(g.delta_pp)).unwrap();
    writeln!(out, "{row}").unwrap();

    let clean = table
        .cells
        .values()
        .next()
        .filter(|c| c.config.setting == Setting::Attack)
        .and_then(clean_table_name)
        .and_then(|n| result.tables.get(&n).map(|t| (n, t)));
    if let Some((clean_name, clean_table)) = clean {
        let mut row = format!("| Drop vs {clean_name} |");
        for t in &targets {
            let pairs: Vec<(f64, f64)> = table
                .cells
                .iter()
                .filter(|(k, _)| k.1 == *t)
                .filter_map(|(k, a)| clean_table.cells.get(k).map(|c| (c.pass_rate, a.pass_rate)))
                .collect();
            if pairs.is_empty() {
                row.push_str(" - |");
                continue;
            }
            let n = pairs.len() as f64;
            let clean_mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
            let attack_mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
            write!(
                row,
                " {} pp ({}) |",
                signed(attack_mean - clean_mean),
                relative(super::relative_delta(attack_mean, clean_mean))
            )
            .unwrap();
        }
        row.push_str(" |");
        writeln!(out, "{row}").unwrap();
    }
    out.push('\n');
    Ok(())
}

/// Pass@1 tables: source languages as rows, targets as columns, each cell
/// with its change over the target's baseline.
pub fn markdown_report(result: &MatrixResult) -> Result<String, ExperimentError> {
    let mut out = String::from("# Results\n\n");
    out.push_str(
        "Pass@1 in percent. Cells read `rate (change over baseline in pp, relative change)`; \
         rows are the language of the retrieved documents, columns the generation language.\n\n",
    );
    if !result.baseline.is_empty() {
        let cells: Vec<&CellResult> = result.baseline.values().collect();
        let s = aggregate_cells(&cells)?;
        writeln!(out, "## baseline\n\n| Language | Pass@1 | Tasks |\n|---|---:|---:|").unwrap();
        for (lang, c) in &result.baseline {
            writeln!(out, "| {} | {} | {} |", lang.display_name(), fixed(c.pass_rate), c.n_tasks).unwrap();
        }
        writeln!(
            out,
            "\nMean {}, sample std {}, population std {}.\n",
            fixed(s.mean),
            fixed(s.std),
            fixed(s.std_population)
        )
        .unwrap();
    }
    for (name, table) in &result.tables {
        table_markdown(&mut out, name, table, result)?;
    }
    let cats = category_tables(result)?;
    if !cats.is_empty() {
        writeln!(out, "## positive noise\n\nTasks failing without retrieval and with clean documents that pass with perturbed documents.\n").unwrap();
        writeln!(out, "| Table | Source | Target | Count |\n|---|---|---|---:|").unwrap();
        for (table, c) in &cats {
            writeln!(
                out,
                "| {table} | {} | {} | {} |",
                c.source.map(|l| l.display_name()).unwrap_or("-"),
                c.target.display_name(),
                c.positive_noise
            )
            .unwrap();
        }
        out.push('\n');
    }
    if !result.failures.is_empty() {
        writeln!(out, "## failed cells\n").unwrap();
        for (label, err) in &result.failures {
            writeln!(out, "- `{label}`: {err}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub cells_csv: PathBuf,
    pub markdown: PathBuf,
    pub audit_jsonl: PathBuf,
    pub categories_csv: PathBuf,
}

pub fn write_reports(result: &MatrixResult, dir: &Path) -> Result<ReportFiles, ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let files = ReportFiles {
        cells_csv: dir.join("cells.csv"),
        markdown: dir.join("report.md"),
        audit_jsonl: dir.join("audit.jsonl"),
        categories_csv: dir.join("categories.csv"),
    };
    let write = |p: &Path, s: String| fs::write(p, s).map_err(|e| ExperimentError::io(p, e));
    write(&files.cells_csv, cells_csv(result)?)?;
    write(&files.markdown, markdown_report(result)?)?;
    write(&files.audit_jsonl, audit_jsonl(result))?;
    write(&files.categories_csv, categories_csv(result)?)?;
    Ok(files)
}
