//! CSV and JSON rendering. Both embed the resolved config, the seed and the library version.

use serde_json::{json, Map, Value};

use polya::format::{format_exact, format_float, Mode};
use polya::ExactRational;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(text: &str) -> Result<Format, CliError> {
        match text {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Usage(format!("unknown format {other:?}; expected csv or json"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub struct Report {
    pub command: &'static str,
    pub config: Map<String, Value>,
    pub seed: u64,
    pub table: Option<Table>,
    pub result: Value,
}

impl Report {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => {
                let mut doc = json!({
                    "polya_version": polya::VERSION,
                    "command": self.command,
                    "seed": self.seed,
                    "config": self.config,
                    "result": self.result,
                });
                if let Some(table) = &self.table {
                    doc["columns"] = json!(table.columns);
                    doc["rows"] = json!(table.rows);
                }
                Ok(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n")
            }
            Format::Csv => {
                let mut out = format!(
                    "# polya {}\n# command: {}\n# seed: {}\n# config: {}\n",
                    polya::VERSION,
                    self.command,
                    self.seed,
                    Value::Object(self.config.clone())
                );
                let table = match &self.table {
                    Some(t) => t.clone(),
                    None => scalar_table(&self.result),
                };
                let mut writer = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| CliError::Io(e.to_string());
                writer.write_record(&table.columns).map_err(io)?;
                for row in &table.rows {
                    writer.write_record(row).map_err(io)?;
                }
                let bytes = writer.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
                out.push_str(&String::from_utf8(bytes).expect("utf-8 csv"));
                Ok(out)
            }
        }
    }
}

/// key,value rows for the scalar leaves of a JSON result, with dotted paths.
fn scalar_table(result: &Value) -> Table {
    fn walk(prefix: &str, v: &Value, table: &mut Table) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, table);
                }
            }
            Value::Array(_) => {}
            Value::String(s) => table.push(vec![prefix.into(), s.clone()]),
            Value::Number(n) => {
                let text = n.as_f64().filter(|_| n.is_f64()).map(format_float).unwrap_or_else(|| n.to_string());
                table.push(vec![prefix.into(), text])
            }
            other => table.push(vec![prefix.into(), other.to_string()]),
        }
    }
    let mut table = Table::new(&["key", "value"]);
    walk("", result, &mut table);
    table
}

pub fn fmt_float(x: f64) -> String {
    format_float(x)
}

pub fn fmt_rational(q: &ExactRational, mode: Mode) -> String {
    match mode {
        Mode::Exact => format_exact(q),
        Mode::Float => format_float(polya::special::rational_to_f64(q)),
    }
}

/// x rounded to 15 significant digits, as a JSON number.
pub fn num15(x: f64) -> Value {
    format_float(x).parse::<f64>().ok().and_then(|v| serde_json::Number::from_f64(v).map(Value::Number)).unwrap_or(Value::Null)
}
