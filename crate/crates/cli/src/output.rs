use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Format;

/// A header (echoed seed, unit, inputs) followed by typed records.
#[derive(Debug, Default)]
pub struct Document {
    pub header: Map<String, Value>,
    pub records: Vec<(String, Value)>,
}

impl Document {
    pub fn new(command: &str, seed: Option<u64>, unit: &str) -> Self {
        let mut header = Map::new();
        header.insert("command".into(), command.into());
        header.insert("seed".into(), seed.map_or(Value::Null, Value::from));
        header.insert("unit".into(), unit.into());
        Self { header, records: Vec::new() }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.header.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn push(&mut self, kind: &str, value: impl Serialize) -> Result<()> {
        self.records.push((kind.into(), serde_json::to_value(value)?));
        Ok(())
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Jsonl => self.jsonl(),
            Format::Csv => Ok(self.csv()),
        }
    }

    fn jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut head = Map::new();
        head.insert("record".into(), "header".into());
        head.extend(self.header.clone());
        out += &serde_json::to_string(&head)?;
        out.push('\n');
        for (kind, v) in &self.records {
            let line = match v {
                Value::Object(m) => {
                    let mut o = Map::new();
                    o.insert("record".into(), kind.as_str().into());
                    o.extend(m.clone());
                    Value::Object(o)
                }
                other => serde_json::json!({ "record": kind, "value": other }),
            };
            out += &serde_json::to_string(&line)?;
            out.push('\n');
        }
        Ok(out)
    }

    // Long form: one `record,index,field,value` row per scalar.
    fn csv(&self) -> String {
        let mut out = self.comment_header();
        out += "record,index,field,value\n";
        for (idx, (kind, v)) in self.records.iter().enumerate() {
            let mut rows = Vec::new();
            flatten("", v, &mut rows);
            for (field, value) in rows {
                out += &format!("{kind},{idx},{field},{value}\n");
            }
        }
        out
    }

    pub fn comment_header(&self) -> String {
        self.header.iter().map(|(k, v)| format!("# {k}: {}\n", scalar(v))).collect()
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| flatten(&key(k), x, rows)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| flatten(&key(&i.to_string()), x, rows)),
        other => rows.push((prefix.to_string(), scalar(other))),
    }
}

/// Writes to `out`, or stdout when absent.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            Ok(so.flush()?)
        }
    }
}
