//! Serializes `Array2<f64>` as a JSON array of row arrays.

use ndarray::Array2;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(m.rows().into_iter().map(|r| r.to_vec()))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
    let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
    from_rows(rows).map_err(D::Error::custom)
}

pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Array2<f64>, String> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != n) {
        return Err(format!("row {i} has {} entries, expected {n}", rows[i].len()));
    }
    Array2::from_shape_vec((m, n), rows.into_iter().flatten().collect())
        .map_err(|e| e.to_string())
}
