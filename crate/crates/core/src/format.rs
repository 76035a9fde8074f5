//! Locale-free numeric text formatting shared by every file writer.

use serde::ser::{Serialize, SerializeSeq, Serializer};
use serde_json::value::RawValue;

use crate::linalg::DenseMatrix;

/// 17 significant digits in scientific notation; `NaN`/`inf` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// JSON number with 17 significant digits; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(fmt_f64(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

/// Row-major nested JSON array of [`Num`].
pub struct MatrixJson<'a>(pub &'a DenseMatrix);

impl Serialize for MatrixJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m = self.0;
        let mut seq = s.serialize_seq(Some(m.nrows()))?;
        for i in 0..m.nrows() {
            let row: Vec<Num> = (0..m.ncols()).map(|j| Num(m[(i, j)])).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

pub struct VecJson<'a>(pub &'a [f64]);

impl Serialize for VecJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for v in self.0 {
            seq.serialize_element(&Num(*v))?;
        }
        seq.end()
    }
}

/// Whitespace-delimited text, one matrix row per line.
pub fn matrix_to_text(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn matrix_from_text(text: &str) -> crate::Result<DenseMatrix> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| crate::Error::Config(format!("line {}: bad number {tok:?}", ln + 1)))
            })
            .collect::<crate::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    crate::linalg::from_rows(&rows)
}

/// Parses a JSON number array where `null` stands for a non-finite value.
pub fn parse_json_matrix(v: &serde_json::Value) -> crate::Result<DenseMatrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| crate::Error::Config("matrix must be an array of rows".into()))?;
    let parsed = rows
        .iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| crate::Error::Config("matrix row must be an array".into()))?
                .iter()
                .map(|x| match x {
                    serde_json::Value::Null => Ok(f64::NAN),
                    other => other
                        .as_f64()
                        .ok_or_else(|| crate::Error::Config("matrix entry must be a number".into())),
                })
                .collect::<crate::Result<Vec<f64>>>()
        })
        .collect::<crate::Result<Vec<_>>>()?;
    crate::linalg::from_rows(&parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn json_number_is_plain() {
        let s = serde_json::to_string(&VecJson(&[0.5, f64::NAN])).unwrap();
        assert_eq!(s, "[5.0000000000000000e-1,null]");
    }

    #[test]
    fn text_matrix_round_trip() {
        let m = DenseMatrix::from_row_slice(2, 2, &[0.1, 0.9, 1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(matrix_from_text(&matrix_to_text(&m)).unwrap(), m);
    }
}
