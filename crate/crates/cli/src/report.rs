//! Run reports: result tables, pass/fail checks, and their on-disk form
//! (one CSV per table, `report.json`, gnuplot data and scripts).

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub const SCHEMA: &str = "soficlab.report/1";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: String,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StageReport {
    pub pipeline: String,
    pub size: Option<usize>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Set when the stage aborted; tables keep whatever was produced before.
    pub error: Option<String>,
}

impl StageReport {
    pub fn new(pipeline: &str, size: Option<usize>) -> Self {
        Self {
            pipeline: pipeline.into(),
            size,
            pass: true,
            ..Self::default()
        }
    }

    pub fn check(
        &mut self,
        name: impl Into<String>,
        value: impl ToString,
        tolerance: impl ToString,
        pass: bool,
    ) {
        self.checks.push(Check {
            name: name.into(),
            value: value.to_string(),
            tolerance: tolerance.to_string(),
            pass,
        });
        self.pass &= pass;
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn fail(&mut self, error: impl ToString) {
        self.error = Some(error.to_string());
        self.pass = false;
    }
}

/// Gnuplot figure over a table: `x` against each of `ys`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plot {
    pub name: String,
    pub table: String,
    pub x: String,
    pub ys: Vec<String>,
    pub logscale: bool,
    /// Column whose distinct values become separate data blocks.
    pub group_by: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub stages: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: String,
    pub config: serde_json::Value,
    pub pass: bool,
    pub stages: Vec<StageReport>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Wall-clock data; the only part of the report that varies between reruns.
    pub timing: Timing,
}

impl RunReport {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            schema: SCHEMA.into(),
            config,
            pass: true,
            stages: Vec::new(),
            tables: Vec::new(),
            plots: Vec::new(),
            timing: Timing::default(),
        }
    }

    /// Table `name`, created with `columns` on first use.
    pub fn table(&mut self, name: &str, columns: &[&str]) -> &mut Table {
        let i = match self.tables.iter().position(|t| t.name == name) {
            Some(i) => i,
            None => {
                self.tables.push(Table::new(name, columns));
                self.tables.len() - 1
            }
        };
        &mut self.tables[i]
    }

    pub fn get_table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn push_stage(&mut self, stage: StageReport, seconds: f64) {
        self.timing.stages.push((
            format!(
                "{}{}",
                stage.pipeline,
                stage.size.map(|n| format!("@{n}")).unwrap_or_default()
            ),
            seconds,
        ));
        self.pass &= stage.pass;
        self.stages.push(stage);
    }

    pub fn plot(&mut self, plot: Plot) {
        if !self.plots.iter().any(|p| p.name == plot.name) {
            self.plots.push(plot);
        }
    }

    pub fn failed_checks(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.stages {
            let at = s.size.map(|n| format!(" (size {n})")).unwrap_or_default();
            if let Some(e) = &s.error {
                out.push(format!("{}{at}: error: {e}", s.pipeline));
            }
            for c in s.checks.iter().filter(|c| !c.pass) {
                out.push(format!(
                    "{}{at}: {} = {} (tolerance {})",
                    s.pipeline, c.name, c.value, c.tolerance
                ));
            }
        }
        out
    }

    /// Writes CSV tables, `report.json`, and gnuplot `.dat`/`.gp` pairs.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
            w.write_record(&t.columns)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        let mut checks = csv::Writer::from_path(dir.join("checks.csv"))?;
        checks.write_record(["pipeline", "size", "check", "value", "tolerance", "pass"])?;
        for s in &self.stages {
            let size = s.size.map(|n| n.to_string()).unwrap_or_default();
            for c in &s.checks {
                checks.write_record([
                    &s.pipeline,
                    &size,
                    &c.name,
                    &c.value,
                    &c.tolerance,
                    &c.pass.to_string(),
                ])?;
            }
            if let Some(e) = &s.error {
                checks.write_record([&s.pipeline, &size, "error", e, "", "false"])?;
            }
        }
        checks.flush()?;
        for p in &self.plots {
            if let Some(t) = self.get_table(&p.table) {
                let (dat, gp) = gnuplot(p, t);
                std::fs::write(dir.join(format!("{}.dat", p.name)), dat)?;
                std::fs::write(dir.join(format!("{}.gp", p.name)), gp)?;
            }
        }
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }
}

fn gnuplot(p: &Plot, t: &Table) -> (String, String) {
    let cols: Vec<usize> = std::iter::once(&p.x)
        .chain(&p.ys)
        .filter_map(|c| t.column(c))
        .collect();
    let group = p.group_by.as_ref().and_then(|g| t.column(g));
    let mut keys: Vec<String> = Vec::new();
    if let Some(g) = group {
        for r in &t.rows {
            if !keys.contains(&r[g]) {
                keys.push(r[g].clone());
            }
        }
    } else {
        keys.push(String::new());
    }
    let mut dat = format!(
        "# {}\n",
        cols.iter()
            .map(|&c| t.columns[c].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    );
    for (bi, k) in keys.iter().enumerate() {
        if bi > 0 {
            dat.push_str("\n\n");
        }
        let _ = writeln!(dat, "# block {bi}: {k}");
        for r in t.rows.iter().filter(|r| group.is_none_or(|g| r[g] == *k)) {
            let vals: Vec<String> = cols.iter().map(|&c| numeric(&r[c])).collect();
            dat.push_str(&vals.join(" "));
            dat.push('\n');
        }
    }
    let mut gp = String::new();
    let _ = writeln!(gp, "set terminal pngcairo size 900,600");
    let _ = writeln!(gp, "set output '{}.png'", p.name);
    let _ = writeln!(gp, "set xlabel '{}'", p.x);
    if p.logscale {
        let _ = writeln!(gp, "set logscale xy");
    }
    let mut series = Vec::new();
    for (bi, k) in keys.iter().enumerate() {
        for (yi, y) in p.ys.iter().enumerate() {
            let title = if k.is_empty() {
                y.clone()
            } else {
                format!("{y} {k}")
            };
            series.push(format!(
                "'{}.dat' index {bi} using 1:{} with linespoints title '{}'",
                p.name,
                yi + 2,
                title
            ));
        }
    }
    let _ = writeln!(gp, "plot {}", series.join(", \\\n     "));
    (dat, gp)
}

/// Gnuplot cannot read `a/b`; rationals are written as decimals.
fn numeric(s: &str) -> String {
    match s.split_once('/') {
        Some((a, b)) => match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(a), Ok(b)) => (a / b).to_string(),
            _ => s.to_string(),
        },
        None => s.to_string(),
    }
}
