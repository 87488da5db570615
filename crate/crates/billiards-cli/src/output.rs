//! CSV and JSON writers. Floats in CSV carry 17 significant digits; JSON
//! numbers use the shortest representation that reads back to the same double.

use std::fs;
use std::path::Path;

use billiards::polygon::CircularPolygon;
use billiards::realization::Orbit;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

/// `println!` that ignores a closed stdout (e.g. when piped into `head`).
#[macro_export]
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// `v` in scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `value` as a JSON object with `"schema": 1` in front.
pub fn versioned<T: Serialize>(value: &T) -> Result<Value, CliError> {
    let mut out = serde_json::Map::new();
    out.insert("schema".into(), json!(1));
    match serde_json::to_value(value)? {
        Value::Object(map) => {
            for (k, v) in map {
                if k != "schema" {
                    out.insert(k, v);
                }
            }
        }
        other => {
            out.insert("data".into(), other);
        }
    }
    Ok(Value::Object(out))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&versioned(value)?)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const ORBIT_HEADER: [&str; 7] = ["n", "phi", "theta", "x", "y", "arc_index", "link_length"];

/// One row per impact of the orbit (the closing point of a periodic orbit is omitted).
pub fn orbit_rows(poly: &CircularPolygon, orbit: &Orbit) -> Vec<Vec<String>> {
    (0..orbit.steps())
        .map(|n| {
            let p = orbit.points[n];
            let [x, y] = orbit.impacts[n];
            vec![
                n.to_string(),
                fmt17(p.phi),
                fmt17(p.theta),
                fmt17(x),
                fmt17(y),
                poly.arc_index(p.phi).to_string(),
                fmt17(orbit.lengths[n]),
            ]
        })
        .collect()
}

pub fn write_orbit_csv(path: &Path, poly: &CircularPolygon, orbit: &Orbit) -> Result<(), CliError> {
    write_csv(path, &ORBIT_HEADER, orbit_rows(poly, orbit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [std::f64::consts::PI, 1e-300, -2.5, 0.1 + 0.2] {
            let s = fmt17(v);
            assert_eq!(s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count(), 17);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn schema_goes_first() {
        let v = versioned(&json!({"a": 1, "schema": 7})).unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"schema":1,"a":1}"#);
        let v = versioned(&vec![1, 2]).unwrap();
        assert_eq!(v["data"], json!([1, 2]));
    }
}
