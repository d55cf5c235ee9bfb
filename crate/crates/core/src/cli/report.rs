use serde_json::{json, Value};

pub const REPORT_VERSION: u32 = 1;

/// Versioned report: the command, every configuration parameter and the
/// command result.
pub fn envelope(command: &str, config: Value, result: Value) -> Value {
    json!({
        "report_version": REPORT_VERSION,
        "command": command,
        "config": config,
        "result": result,
    })
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, rows);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, rows);
            }
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        // numbers, booleans and null keep their JSON spelling
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

/// Two-column `key,value` CSV of a JSON report; keys are dotted paths and
/// numbers are spelled exactly as in the JSON encoding.
pub fn to_csv(report: &Value) -> Result<String, csv::Error> {
    let mut rows = Vec::new();
    flatten("", report, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_keeps_json_number_spelling() {
        let r = envelope("norms", json!({"p": 1.5}), json!({"x": [0.1, 2e-300], "s": "a,b"}));
        let csv = to_csv(&r).unwrap();
        assert!(csv.contains("result.x.0,0.1\n"));
        assert!(csv.contains(&format!("result.x.1,{}\n", json!(2e-300))));
        assert!(csv.contains("result.s,\"a,b\"\n"));
        assert!(csv.contains("report_version,1\n"));
    }
}
