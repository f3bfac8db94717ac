//! Deterministic JSON text.

use serde_json::Value;

/// Formats a float in fixed notation with the shortest digits that read back
/// to the same value. Integral values keep a trailing `.0`.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        // folds -0.0 into 0.0
        return "0.0".into();
    }
    let s = format!("{v}");
    if s.contains('.') || !v.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn to_canonical_pretty(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, Some(0), &mut out);
    out
}

pub fn to_canonical_compact(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, None, &mut out);
    out
}

fn write_value(v: &Value, indent: Option<usize>, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) if !n.is_f64() => out.push_str(&u.to_string()),
            (_, Some(i), _) if !n.is_f64() => out.push_str(&i.to_string()),
            (_, _, Some(f)) => out.push_str(&format_float(f)),
            _ => out.push_str(&n.to_string()),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent.map(|d| d + 1), out);
                write_value(item, indent.map(|d| d + 1), out);
            }
            newline(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent.map(|d| d + 1), out);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_value(&map[key], indent.map(|d| d + 1), out);
            }
            newline(indent, out);
            out.push('}');
        }
    }
}

fn newline(indent: Option<usize>, out: &mut String) {
    if let Some(depth) = indent {
        out.push('\n');
        out.extend(std::iter::repeat_n("  ", depth));
    }
}
