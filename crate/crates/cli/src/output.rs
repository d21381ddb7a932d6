use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// Scalar leaves of `v` keyed by dotted path, in document order.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&join(k), x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), x, out);
            }
        }
        Value::Number(n) => {
            let s = match n.as_i64().or_else(|| n.as_u64().map(|u| u as i64)) {
                Some(i) if !n.is_f64() => i.to_string(),
                _ => format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)),
            };
            out.push((prefix.to_string(), s));
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Null => out.push((prefix.to_string(), "null".into())),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render(v: &Value, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(v).expect("json value");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", v, &mut rows);
            let mut s = String::from("key,value\n");
            for (k, x) in rows {
                s.push_str(&format!("{},{}\n", csv_field(&k), csv_field(&x)));
            }
            s
        }
        Format::Table => {
            let mut rows = Vec::new();
            flatten("", v, &mut rows);
            let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            rows.iter().map(|(k, x)| format!("{k:<w$}  {x}\n")).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flattened_csv() {
        let v = json!({"a": 0.5, "b": {"c": [1, 2]}, "d": "x,y"});
        assert_eq!(
            render(&v, Format::Csv),
            "key,value\na,5.0000000000000000e-1\nb.c.0,1\nb.c.1,2\nd,\"x,y\"\n"
        );
    }

    #[test]
    fn table_is_aligned() {
        let v = json!({"long_key": true, "k": null});
        assert_eq!(render(&v, Format::Table), "k         null\nlong_key  true\n");
    }
}
