//! `report.json` and CSV table writers.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use amc_core::field::fmt17;
use amc_core::ScalarField;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, RunConfig};

/// Accumulates one `report.json`. Wall times go under `"timing"` and
/// nowhere else, so the rest of the file is reproducible.
pub struct Report {
    command: &'static str,
    config: Value,
    results: Map<String, Value>,
    timing: Map<String, Value>,
    started: Instant,
}

impl Report {
    pub fn new(command: &'static str, config: &RunConfig) -> Self {
        let mut echo = serde_json::to_value(config).expect("config serializes");
        // where the files land does not change what is in them
        if let Value::Object(m) = &mut echo {
            m.remove("out");
        }
        Self {
            command,
            config: echo,
            results: Map::new(),
            timing: Map::new(),
            started: Instant::now(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.results.insert(key.to_string(), v);
    }

    /// Like [`Report::set`], moving any nested `"timing"` entry to the timing block.
    pub fn set_timed(&mut self, key: &str, value: impl Serialize) {
        let mut v = serde_json::to_value(value).expect("report values serialize");
        if let Value::Object(m) = &mut v {
            if let Some(t) = m.remove("timing") {
                self.timing.insert(key.to_string(), t);
            }
        }
        self.results.insert(key.to_string(), v);
    }

    pub fn time(&mut self, key: &str, seconds: impl Serialize) {
        let v = serde_json::to_value(seconds).expect("timings serialize");
        self.timing.insert(key.to_string(), v);
    }

    pub fn write(mut self, dir: &Path, status: &str) -> Result<(), CliError> {
        self.time("total_wall_seconds", self.started.elapsed().as_secs_f64());
        let mut doc = Map::new();
        doc.insert("command".into(), Value::from(self.command));
        doc.insert("status".into(), Value::from(status));
        doc.insert("config".into(), self.config);
        doc.insert("results".into(), Value::Object(self.results));
        doc.insert("timing".into(), Value::Object(self.timing));
        write_json(&dir.join("report.json"), &Value::Object(doc))
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_field(dir: &Path, name: &str, field: &ScalarField) -> Result<(), CliError> {
    let file = std::fs::File::create(dir.join(name))?;
    field.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

/// A header plus numeric rows, written with 17 significant digits.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
