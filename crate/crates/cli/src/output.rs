use std::io::Write;

use comfy_table::Table;
use serde::Serialize;
use serde_json::Value;

/// Record sink: one JSON line per record, or a key/value table with
/// `--pretty`.
pub struct Out {
    pretty: bool,
}

impl Out {
    pub fn new(pretty: bool) -> Self {
        Self { pretty }
    }

    pub fn pretty(&self) -> bool {
        self.pretty
    }

    pub fn record<T: Serialize>(&self, r: &T) -> anyhow::Result<()> {
        let mut stdout = std::io::stdout().lock();
        if self.pretty {
            writeln!(stdout, "{}", table(&serde_json::to_value(r)?))?;
        } else {
            writeln!(stdout, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    /// Pre-serialized JSON lines, passed through untouched.
    pub fn raw_lines(&self, s: &str) -> anyhow::Result<()> {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn table(v: &Value) -> Table {
    let mut rows = Vec::new();
    flatten("", v, &mut rows);
    let mut t = Table::new();
    t.set_header(["field", "value"]);
    for (k, v) in rows {
        t.add_row([k, v]);
    }
    t
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.6}"),
            _ => n.to_string(),
        }),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, rows)),
        Value::Array(a) => match a.iter().map(scalar).collect::<Option<Vec<_>>>() {
            Some(items) => rows.push((prefix.to_string(), format!("[{}]", items.join(", ")))),
            None => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, rows)),
        },
        _ => rows.push((prefix.to_string(), scalar(v).unwrap_or_default())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattens_nested_records() {
        let mut rows = Vec::new();
        flatten("", &serde_json::json!({"a": {"b": 1, "c": [1.5, 2.0]}, "d": [{"e": null}]}), &mut rows);
        assert_eq!(
            rows,
            [
                ("a.b".to_string(), "1".to_string()),
                ("a.c".into(), "[1.500000, 2.000000]".into()),
                ("d.0.e".into(), "-".into()),
            ]
        );
    }
}
