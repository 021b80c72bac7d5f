use std::io::Write;
use std::path::Path;

use ordpat::dataio;
use ordpat::PairedSeries;
use serde_json::Value;

use crate::args::Format;
use crate::{CliResult, Resolved};

/// A command result in all output formats.
pub struct Rendered {
    json: Value,
    /// Row-oriented CSV for reports with many rows; a flattened record otherwise.
    csv: Option<String>,
}

impl Rendered {
    pub fn record(json: Value) -> Self {
        Rendered { json, csv: None }
    }

    pub fn tabular(json: Value, csv: String) -> Self {
        Rendered { json, csv: Some(csv) }
    }

    fn text(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.json).expect("serializable") + "\n",
            Format::Csv => match &self.csv {
                Some(c) => c.clone(),
                None => record_csv(&self.json["results"]),
            },
            Format::Table => match &self.csv {
                Some(c) => align_csv(c),
                None => key_values(&self.json["results"]),
            },
        }
    }
}

pub fn ensure_parent(path: &Path) -> std::io::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p),
        _ => Ok(()),
    }
}

/// Prints in the chosen format and, with `--out`, saves `<command>.<ext>` there.
pub fn emit(r: &Resolved, command: &str, out: &Rendered) -> CliResult<()> {
    let text = out.text(r.format);
    std::io::stdout().write_all(text.as_bytes())?;
    if let Some(dir) = &r.out {
        std::fs::create_dir_all(dir)?;
        let ext = match r.format {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Table => "txt",
        };
        std::fs::write(dir.join(format!("{command}.{ext}")), text)?;
        if r.format != Format::Json {
            // the reproducibility record is always kept
            std::fs::write(dir.join(format!("{command}.json")), out.text(Format::Json))?;
        }
    }
    Ok(())
}

pub fn emit_pair(r: &Resolved, s: &PairedSeries) -> CliResult<()> {
    let mut buf = Vec::new();
    match r.format {
        Format::Json => dataio::write_pair_json(s, &mut buf)?,
        _ => dataio::write_pair_csv(s, &mut buf)?,
    }
    match &r.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let name = if r.format == Format::Json { "pair.json" } else { "pair.csv" };
            std::fs::write(dir.join(name), &buf)?;
        }
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

const MAX_INLINE: usize = 8;

fn flatten(v: &Value, prefix: &str, out: &mut Vec<(String, String)>, inline_arrays: bool) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(v, &key, out, inline_arrays);
            }
        }
        Value::Array(a) => {
            if inline_arrays {
                let shown = if a.len() <= MAX_INLINE {
                    let parts: Vec<String> = a.iter().map(scalar).collect();
                    format!("[{}]", parts.join(", "))
                } else {
                    format!("[{} values]", a.len())
                };
                out.push((prefix.to_string(), shown));
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn key_values(v: &Value) -> String {
    let mut rows = Vec::new();
    flatten(v, "", &mut rows, true);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}

fn record_csv(v: &Value) -> String {
    let mut rows = Vec::new();
    flatten(v, "", &mut rows, false);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(rows.iter().map(|r| &r.0)).expect("in-memory write");
    w.write_record(rows.iter().map(|r| &r.1)).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn align_csv(text: &str) -> String {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let rows: Vec<Vec<String>> =
        rdr.records().filter_map(|r| r.ok()).map(|r| r.iter().map(str::to_string).collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r.iter().enumerate().map(|(i, f)| format!("{f:<w$}", w = widths[i])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
