use serde_json::{json, Map, Value};

use super::Certificate;
use crate::error::{Error, Result};
use crate::matrix::Mat;

pub(crate) fn mat_to_json(m: &Mat) -> Value {
    Value::Array(m.to_rows().into_iter().map(|r| json!(r)).collect())
}

impl Certificate {
    pub fn to_json(&self) -> Value {
        let mut vars = Map::new();
        for (name, m) in &self.values {
            vars.insert(name.clone(), json!({ "shape": [m.rows(), m.cols()], "data": mat_to_json(m) }));
        }
        json!({ "vars": vars, "margin": self.margin, "backend": self.backend_name })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(v: &Value) -> Result<Certificate> {
        let err = |m: &str| Error::Certificate(m.to_string());
        let obj = v.as_object().ok_or_else(|| err("document is not an object"))?;
        for k in obj.keys() {
            if !matches!(k.as_str(), "vars" | "margin" | "backend") {
                return Err(err(&format!("unknown field `{k}`")));
            }
        }
        let vars = obj.get("vars").and_then(Value::as_object).ok_or_else(|| err("missing `vars` object"))?;
        let margin = obj.get("margin").and_then(Value::as_f64).ok_or_else(|| err("missing numeric `margin`"))?;
        let backend = obj.get("backend").and_then(Value::as_str).ok_or_else(|| err("missing string `backend`"))?;
        let mut values = Vec::new();
        for (name, entry) in vars {
            let shape = entry
                .get("shape")
                .and_then(Value::as_array)
                .filter(|s| s.len() == 2)
                .and_then(|s| Some((s[0].as_u64()? as usize, s[1].as_u64()? as usize)))
                .ok_or_else(|| err(&format!("`vars.{name}.shape` must be [rows, cols]")))?;
            let data = entry
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| err(&format!("`vars.{name}.data` must be an array of rows")))?;
            let mut flat = Vec::new();
            for (i, row) in data.iter().enumerate() {
                let row = row.as_array().ok_or_else(|| err(&format!("`vars.{name}.data[{i}]` is not an array")))?;
                if row.len() != shape.1 {
                    return Err(err(&format!("`vars.{name}.data[{i}]` has {} entries, expected {}", row.len(), shape.1)));
                }
                for (j, x) in row.iter().enumerate() {
                    flat.push(x.as_f64().ok_or_else(|| err(&format!("`vars.{name}.data[{i}][{j}]` is not a number")))?);
                }
            }
            if data.len() != shape.0 {
                return Err(err(&format!("`vars.{name}.data` has {} rows, expected {}", data.len(), shape.0)));
            }
            values.push((name.clone(), Mat::from_vec(shape.0, shape.1, flat)?));
        }
        Ok(Certificate { values, margin, backend_name: backend.to_string(), iterations: 0 })
    }

    pub fn from_json_str(s: &str) -> Result<Certificate> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::Certificate(e.to_string()))?;
        Certificate::from_json(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_order() {
        let c = Certificate {
            values: vec![("Z".into(), Mat::identity(2)), ("A".into(), Mat::from_rows(&[[1.5, -2.0]]))],
            margin: 1e-6,
            backend_name: "embedded-ipm".into(),
            iterations: 3,
        };
        let s = c.to_json_string();
        assert!(s.find("\"Z\"").unwrap() < s.find("\"A\"").unwrap());
        let back = Certificate::from_json_str(&s).unwrap();
        assert_eq!(back.values, c.values);
        assert_eq!(back.margin, c.margin);
    }

    #[test]
    fn rejects_bad_shape() {
        let s = r#"{"vars": {"P": {"shape": [2, 2], "data": [[1, 0]]}}, "margin": 0, "backend": "x"}"#;
        assert!(Certificate::from_json_str(s).is_err());
    }
}
