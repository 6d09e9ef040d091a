//! Matrix containers, file formats, image ingestion and row-wise preprocessing.
//!
//! A [`DataMatrix`] stores features in rows and observations in columns. Text files use
//! one matrix row per line; an optional header line carries observation labels and an
//! optional leading column carries feature labels. Both are detected by the presence of
//! a non-numeric cell. Locations in parse errors are 1-based data coordinates.
//!
//! The binary "DEAM" layout is: the 4 magic bytes, a version byte, `M` and `N` as
//! little-endian `u64`, then `M * N` little-endian `f64` values in row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DeaError, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"DEAM";
pub const BINARY_VERSION: u8 = 1;

/// Dense real matrix with features in rows and observations in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    pub feature_labels: Option<Vec<String>>,
    pub observation_labels: Option<Vec<String>>,
    pub class_labels: Option<Vec<String>>,
}

impl DataMatrix {
    /// Wraps `values`, rejecting non-finite entries and matrices smaller than 2x2.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (m, n) = values.dim();
        if m < 2 || n < 2 {
            return Err(DeaError::Dimension(format!(
                "data matrix must be at least 2x2, got {m}x{n}"
            )));
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DeaError::NonFinite { row: r + 1, col: c + 1 });
        }
        Ok(DataMatrix {
            values,
            feature_labels: None,
            observation_labels: None,
            class_labels: None,
        })
    }

    pub fn with_feature_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len("feature labels", labels.len(), self.n_features())?;
        self.feature_labels = Some(labels);
        Ok(self)
    }

    pub fn with_observation_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len("observation labels", labels.len(), self.n_observations())?;
        self.observation_labels = Some(labels);
        Ok(self)
    }

    pub fn with_class_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len("class labels", labels.len(), self.n_observations())?;
        self.class_labels = Some(labels);
        Ok(self)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Number of rows (M).
    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    /// Number of columns (N).
    pub fn n_observations(&self) -> usize {
        self.values.ncols()
    }

    /// Keeps the given rows, in the order given. Labels follow their rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_features()) {
            return Err(DeaError::invalid(format!(
                "row index {bad} out of range for {} features",
                self.n_features()
            )));
        }
        let values = self.values.select(Axis(0), rows);
        Ok(DataMatrix {
            values,
            feature_labels: self
                .feature_labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r].clone()).collect()),
            observation_labels: self.observation_labels.clone(),
            class_labels: self.class_labels.clone(),
        })
    }

    /// Keeps the given observation columns, in the order given.
    pub fn select_columns(&self, cols: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n_observations()) {
            return Err(DeaError::invalid(format!(
                "column index {bad} out of range for {} observations",
                self.n_observations()
            )));
        }
        let pick = |l: &Vec<String>| cols.iter().map(|&c| l[c].clone()).collect();
        Ok(DataMatrix {
            values: self.values.select(Axis(1), cols),
            feature_labels: self.feature_labels.clone(),
            observation_labels: self.observation_labels.as_ref().map(pick),
            class_labels: self.class_labels.as_ref().map(pick),
        })
    }

    /// Same labels, new values of identical shape.
    fn with_values(&self, values: Array2<f64>) -> DataMatrix {
        debug_assert_eq!(values.dim(), self.values.dim());
        DataMatrix {
            values,
            feature_labels: self.feature_labels.clone(),
            observation_labels: self.observation_labels.clone(),
            class_labels: self.class_labels.clone(),
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(DeaError::Dimension(format!(
            "{what}: expected {want} entries, got {got}"
        )));
    }
    Ok(())
}

/// Image geometry used to reshape feature-space columns back into pictures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageSpec {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(DeaError::invalid("image height and width must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(DeaError::invalid(format!(
                "image channels must be 1 or 3, got {channels}"
            )));
        }
        Ok(ImageSpec {
            height,
            width,
            channels,
        })
    }

    /// Parses `HxWxC` or `HxW` (one channel).
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        let nums: std::result::Result<Vec<usize>, _> =
            parts.iter().map(|p| p.trim().parse::<usize>()).collect();
        match nums.as_deref() {
            Ok([h, w]) => ImageSpec::new(*h, *w, 1),
            Ok([h, w, c]) => ImageSpec::new(*h, *w, *c),
            _ => Err(DeaError::invalid(format!(
                "image spec `{s}` is not of the form HxW or HxWxC"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column-major position of pixel (`y`, `x`) in channel `c`.
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        y + self.height * x + self.height * self.width * c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Tsv,
    Binary,
}

impl MatrixFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> MatrixFormat {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("tsv") | Some("tab") | Some("txt") => MatrixFormat::Tsv,
            Some("deam") | Some("bin") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }

    fn delimiter(self) -> char {
        match self {
            MatrixFormat::Tsv => '\t',
            _ => ',',
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = DeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "tsv" => Ok(MatrixFormat::Tsv),
            "binary" | "bin" | "deam" => Ok(MatrixFormat::Binary),
            other => Err(DeaError::invalid(format!("unknown matrix format `{other}`"))),
        }
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DataMatrix> {
    match format {
        MatrixFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| DeaError::io(path, e))?;
            decode_binary(&bytes)
        }
        MatrixFormat::Csv | MatrixFormat::Tsv => {
            let text = fs::read_to_string(path).map_err(|e| DeaError::io(path, e))?;
            parse_delimited(&text, format.delimiter())
        }
    }
}

pub fn write_matrix(data: &DataMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Binary => encode_binary(data.values()),
        MatrixFormat::Csv | MatrixFormat::Tsv => {
            format_delimited(data, format.delimiter()).into_bytes()
        }
    };
    fs::write(path, bytes).map_err(|e| DeaError::io(path, e))
}

pub fn encode_binary(values: &Array2<f64>) -> Vec<u8> {
    let (m, n) = values.dim();
    let mut out = Vec::with_capacity(21 + 8 * m * n);
    out.extend_from_slice(BINARY_MAGIC);
    out.push(BINARY_VERSION);
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<DataMatrix> {
    let header_err = |msg: &str| DeaError::Parse {
        row: 0,
        col: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < 21 || &bytes[..4] != BINARY_MAGIC {
        return Err(header_err("missing DEAM magic header"));
    }
    if bytes[4] != BINARY_VERSION {
        return Err(header_err(&format!(
            "unsupported DEAM version {}",
            bytes[4]
        )));
    }
    let m = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(bytes[13..21].try_into().unwrap()) as usize;
    let body = &bytes[21..];
    let expected = m
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| header_err("header dimensions overflow"))?;
    if body.len() != expected {
        return Err(DeaError::Dimension(format!(
            "header declares {m}x{n} ({expected} bytes of data) but file holds {} bytes",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((m, n), values)
        .map_err(|e| DeaError::Dimension(e.to_string()))?;
    DataMatrix::new(values)
}

const HEADER_CORNER: &str = "feature";

fn is_numeric(cell: &str) -> bool {
    cell.trim().parse::<f64>().is_ok()
}

/// Parses delimited text. Blank lines are ignored.
pub fn parse_delimited(text: &str, delim: char) -> Result<DataMatrix> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(delim).collect()))
        .collect();
    if lines.is_empty() {
        return Err(DeaError::Parse {
            row: 0,
            col: 0,
            msg: "empty file".into(),
        });
    }

    let first = &lines[0].1;
    let has_header = first[1..].iter().any(|c| !is_numeric(c)) || first[0].trim() == HEADER_CORNER;
    let body = if has_header { &lines[1..] } else { &lines[..] };
    if body.is_empty() {
        return Err(DeaError::Parse {
            row: 0,
            col: 0,
            msg: "no data rows after header".into(),
        });
    }
    let has_row_labels = !is_numeric(body[0].1[0]);
    let skip = usize::from(has_row_labels);

    let n = body[0].1.len() - skip;
    if has_header {
        let header_n = lines[0].1.len() - skip;
        // a header may omit the corner cell above the label column
        if header_n != n && !(has_row_labels && lines[0].1.len() == n) {
            return Err(DeaError::Dimension(format!(
                "header (line {}) declares {header_n} columns but data has {n}",
                lines[0].0
            )));
        }
    }

    let mut values = Vec::with_capacity(body.len() * n);
    let mut feature_labels = Vec::new();
    for (r, (line_no, cells)) in body.iter().enumerate() {
        if cells.len() != n + skip {
            return Err(DeaError::Dimension(format!(
                "line {line_no} (data row {}) has {} columns, expected {}",
                r + 1,
                cells.len() - skip.min(cells.len()),
                n
            )));
        }
        if has_row_labels {
            feature_labels.push(cells[0].trim().to_string());
        }
        for (c, cell) in cells[skip..].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DeaError::Parse {
                row: r + 1,
                col: c + 1,
                msg: format!("`{}` is not a number", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(DeaError::NonFinite {
                    row: r + 1,
                    col: c + 1,
                });
            }
            values.push(v);
        }
    }

    let values = Array2::from_shape_vec((body.len(), n), values)
        .map_err(|e| DeaError::Dimension(e.to_string()))?;
    let mut data = DataMatrix::new(values)?;
    if has_row_labels {
        data = data.with_feature_labels(feature_labels)?;
    }
    if has_header {
        let header = &lines[0].1;
        let start = header.len() - n;
        let labels = header[start..].iter().map(|s| s.trim().to_string()).collect();
        data = data.with_observation_labels(labels)?;
    }
    Ok(data)
}

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_delimited(data: &DataMatrix, delim: char) -> String {
    let d = delim.to_string();
    let mut out = String::new();
    if let Some(obs) = &data.observation_labels {
        if data.feature_labels.is_some() {
            out.push_str(HEADER_CORNER);
            out.push(delim);
        }
        out.push_str(&obs.join(&d));
        out.push('\n');
    }
    for (i, row) in data.values().rows().into_iter().enumerate() {
        if let Some(f) = &data.feature_labels {
            out.push_str(&f[i]);
            out.push(delim);
        }
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        out.push_str(&cells.join(&d));
        out.push('\n');
    }
    out
}

/// Reads class labels: one per line, or a single delimited line.
pub fn load_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| DeaError::io(path, e))?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let labels: Vec<String> = if lines.len() == 1 {
        lines[0]
            .split([',', '\t'])
            .map(|s| s.trim().to_string())
            .collect()
    } else {
        lines.iter().map(|s| s.to_string()).collect()
    };
    if labels.is_empty() {
        return Err(DeaError::Parse {
            row: 0,
            col: 0,
            msg: format!("no labels in {}", path.display()),
        });
    }
    Ok(labels)
}

pub fn write_labels(labels: &[String], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| DeaError::io(path, e))?);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| DeaError::io(path, e))?;
    }
    w.flush().map_err(|e| DeaError::io(path, e))
}

/// Result of reading an image folder.
#[derive(Debug, Clone)]
pub struct ImageFolder {
    pub data: DataMatrix,
    /// Files that could not be decoded.
    pub skipped: Vec<PathBuf>,
}

/// Loads every decodable image under `dir` as one observation column.
///
/// Images sitting directly in `dir` are unlabeled; images inside first-level
/// subdirectories get the subdirectory name as class label. Entries are visited in
/// name order so the column order is reproducible.
pub fn load_image_folder(dir: &Path, target: ImageSpec) -> Result<ImageFolder> {
    let mut entries = sorted_entries(dir)?;
    let mut files: Vec<(PathBuf, Option<String>)> = Vec::new();
    for path in entries.drain(..) {
        if path.is_dir() {
            let class = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            for inner in sorted_entries(&path)? {
                if inner.is_file() {
                    files.push((inner, Some(class.clone())));
                }
            }
        } else if path.is_file() {
            files.push((path, None));
        }
    }
    if files.is_empty() {
        return Err(DeaError::invalid(format!(
            "no image files found in {}",
            dir.display()
        )));
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<String>> = Vec::new();
    let mut skipped = Vec::new();
    for (path, class) in files {
        match image::open(&path) {
            Ok(img) => {
                columns.push(image_to_column(&img, target));
                labels.push(class);
            }
            Err(err) => {
                log::warn!("skipping undecodable image {}: {err}", path.display());
                skipped.push(path);
            }
        }
    }
    if columns.is_empty() {
        return Err(DeaError::Image(format!(
            "none of the files in {} could be decoded",
            dir.display()
        )));
    }

    let m = target.len();
    let n = columns.len();
    let mut values = Array2::zeros((m, n));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    let mut data = DataMatrix::new(values)?;
    if labels.iter().any(Option::is_some) {
        let labels = labels
            .into_iter()
            .map(|l| l.unwrap_or_else(|| "unlabeled".into()))
            .collect();
        data = data.with_class_labels(labels)?;
    }
    Ok(ImageFolder { data, skipped })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| DeaError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

/// Resizes (bilinear) and flattens one image column-major into `[0, 1]` values.
pub fn image_to_column(img: &DynamicImage, target: ImageSpec) -> Vec<f64> {
    let same_size = img.height() as usize == target.height && img.width() as usize == target.width;
    let (h, w) = (target.height as u32, target.width as u32);
    let is_gray = !img.color().has_color();
    let mut out = vec![0.0; target.len()];

    if target.channels == 1 && is_gray {
        let plane: ImageBuffer<Luma<f32>, Vec<f32>> = if same_size {
            // exact path: no resampling, samples mapped straight from 16-bit range
            let g = img.to_luma16();
            for (x, y, p) in g.enumerate_pixels() {
                out[target.index(y as usize, x as usize, 0)] = p.0[0] as f64 / 65535.0;
            }
            return out;
        } else {
            image::imageops::resize(&img.to_luma32f(), w, h, FilterType::Triangle)
        };
        for (x, y, p) in plane.enumerate_pixels() {
            out[target.index(y as usize, x as usize, 0)] = p.0[0] as f64;
        }
        return out;
    }

    let rgb: Vec<[f64; 3]> = if same_size {
        let g = img.to_rgb16();
        g.pixels()
            .map(|p| p.0.map(|c| c as f64 / 65535.0))
            .collect()
    } else {
        let r: ImageBuffer<Rgb<f32>, Vec<f32>> =
            image::imageops::resize(&img.to_rgb32f(), w, h, FilterType::Triangle);
        r.pixels().map(|p| p.0.map(|c| c as f64)).collect()
    };
    for (k, px) in rgb.iter().enumerate() {
        let (x, y) = (k % target.width, k / target.width);
        if target.channels == 1 {
            out[target.index(y, x, 0)] = (px[0] + px[1] + px[2]) / 3.0;
        } else {
            for (c, &v) in px.iter().enumerate() {
                out[target.index(y, x, c)] = v;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    ZscoreRows,
    MinmaxRows,
    None,
}

impl std::str::FromStr for NormalizeMode {
    type Err = DeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" | "zscore_rows" => Ok(NormalizeMode::ZscoreRows),
            "minmax" | "minmax_rows" => Ok(NormalizeMode::MinmaxRows),
            "none" => Ok(NormalizeMode::None),
            other => Err(DeaError::invalid(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Row-wise normalization. Z-scores use the population (1/N) deviation; constant rows
/// become zeros (z-score) or 0.5 (min-max).
pub fn normalize(data: &DataMatrix, mode: NormalizeMode) -> DataMatrix {
    let mut values = data.values().clone();
    match mode {
        NormalizeMode::None => {}
        NormalizeMode::ZscoreRows => {
            for mut row in values.rows_mut() {
                let n = row.len() as f64;
                let mean = row.sum() / n;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 && (sd / mean.abs().max(1.0)) > 1e-14 {
                    row.mapv_inplace(|v| (v - mean) / sd);
                } else {
                    row.fill(0.0);
                }
            }
        }
        NormalizeMode::MinmaxRows => {
            for mut row in values.rows_mut() {
                let lo = row.fold(f64::INFINITY, |a, &b| a.min(b));
                let hi = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                if hi > lo {
                    row.mapv_inplace(|v| (v - lo) / (hi - lo));
                } else {
                    row.fill(0.5);
                }
            }
        }
    }
    data.with_values(values)
}

/// Sample (n-1) variance of every row.
pub fn row_variances(values: &Array2<f64>) -> Vec<f64> {
    let n = values.ncols() as f64;
    values
        .rows()
        .into_iter()
        .map(|row| {
            let mean = row.sum() / n;
            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// Keeps the `count` rows of largest sample variance, in their original order.
/// Ties go to the lower row index.
pub fn select_variable_features(data: &DataMatrix, count: usize) -> Result<DataMatrix> {
    let m = data.n_features();
    if count == 0 || count > m {
        return Err(DeaError::invalid(format!(
            "cannot keep {count} of {m} features"
        )));
    }
    let var = row_variances(data.values());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let mut keep = order[..count].to_vec();
    keep.sort_unstable();
    data.select_rows(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parses_plain_csv() {
        let d = parse_delimited("1,2\n3,4", ',').unwrap();
        assert_eq!(d.values(), &array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(d.feature_labels.is_none());
        assert!(d.observation_labels.is_none());
    }

    #[test]
    fn nan_cell_is_reported_with_location() {
        let err = parse_delimited("NaN,2\n3,4", ',').unwrap_err();
        assert!(matches!(err, DeaError::NonFinite { row: 1, col: 1 }), "{err}");
        let err = parse_delimited("1,2\n3,inf", ',').unwrap_err();
        assert!(matches!(err, DeaError::NonFinite { row: 2, col: 2 }), "{err}");
    }

    #[test]
    fn bad_cell_and_ragged_rows() {
        let err = parse_delimited("1,2\n3,x4", ',');
        // `x4` in the second row is not a header candidate: the first row is numeric
        assert!(matches!(err, Err(DeaError::Parse { row: 2, col: 2, .. })));
        let err = parse_delimited("1,2,3\n4,5", ',');
        assert!(matches!(err, Err(DeaError::Dimension(_))));
        let err = parse_delimited("a,b,c\n1,2\n3,4", ',');
        assert!(matches!(err, Err(DeaError::Dimension(_))));
    }

    #[test]
    fn header_and_row_labels() {
        let text = "gene,c1,c2,c3\ng1,1,2,3\ng2,4,5,6\n";
        let d = parse_delimited(text, ',').unwrap();
        assert_eq!(d.values().dim(), (2, 3));
        assert_eq!(d.feature_labels.as_deref().unwrap(), ["g1", "g2"]);
        assert_eq!(d.observation_labels.as_deref().unwrap(), ["c1", "c2", "c3"]);

        let tsv = "c1\tc2\ng1\t1\t2\ng2\t3\t4\n";
        let d = parse_delimited(tsv, '\t').unwrap();
        assert_eq!(d.observation_labels.as_deref().unwrap(), ["c1", "c2"]);
    }

    #[test]
    fn csv_round_trip_with_labels() {
        let values = array![[0.1, 1.0 / 3.0, -2.5e-300], [1e300, 7.0, std::f64::consts::PI]];
        let d = DataMatrix::new(values)
            .unwrap()
            .with_feature_labels(vec!["a".into(), "b".into()])
            .unwrap()
            .with_observation_labels(vec!["x".into(), "y".into(), "z".into()])
            .unwrap();
        let back = parse_delimited(&format_delimited(&d, ','), ',').unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let values = array![[0.1, -0.0, 1e-310], [f64::MAX, f64::MIN_POSITIVE, 3.0]];
        let d = DataMatrix::new(values).unwrap();
        let back = decode_binary(&encode_binary(d.values())).unwrap();
        for (a, b) in d.values().iter().zip(back.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_rejects_truncation_and_bad_magic() {
        let mut bytes = encode_binary(&array![[1.0, 2.0], [3.0, 4.0]]);
        bytes.pop();
        assert!(matches!(decode_binary(&bytes), Err(DeaError::Dimension(_))));
        assert!(matches!(decode_binary(b"NOPE"), Err(DeaError::Parse { .. })));
    }

    #[test]
    fn zscore_rows() {
        let d = DataMatrix::new(array![[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]).unwrap();
        let z = normalize(&d, NormalizeMode::ZscoreRows);
        // population sd of [1,2,3] is sqrt(2/3)
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z.values()[[0, 0]] + expect).abs() < 1e-12);
        assert!(z.values()[[0, 1]].abs() < 1e-15);
        assert!((z.values()[[0, 2]] - 1.224744871391589).abs() < 1e-12);
        assert_eq!(z.values().row(1).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn minmax_rows() {
        let d = DataMatrix::new(array![[0.0, 10.0], [3.0, 3.0]]).unwrap();
        let z = normalize(&d, NormalizeMode::MinmaxRows);
        assert_eq!(z.values(), &array![[0.0, 1.0], [0.5, 0.5]]);
    }

    #[test]
    fn variable_feature_selection() {
        // variances 0, 4, 1
        let d = DataMatrix::new(array![[1.0, 1.0, 1.0], [0.0, 2.0, 4.0], [0.0, 1.0, 2.0]])
            .unwrap()
            .with_feature_labels(vec!["r1".into(), "r2".into(), "r3".into()])
            .unwrap();
        let s = select_variable_features(&d, 2).unwrap();
        assert_eq!(s.feature_labels.as_deref().unwrap(), ["r2", "r3"]);
        assert_eq!(select_variable_features(&d, 3).unwrap(), d);
        assert!(select_variable_features(&d, 4).is_err());

        let tied = DataMatrix::new(array![[0.0, 1.0], [5.0, 4.0], [2.0, 2.0]]).unwrap();
        let s = select_variable_features(&tied, 1).unwrap();
        assert_eq!(s.values(), &array![[0.0, 1.0]]);
    }

    #[test]
    fn label_length_must_match() {
        let d = DataMatrix::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(d.clone().with_class_labels(vec!["a".into()]).is_err());
        assert!(d.with_feature_labels(vec!["a".into(), "b".into()]).is_ok());
    }

    #[test]
    fn too_small_matrix_rejected() {
        assert!(DataMatrix::new(array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn image_spec_parsing() {
        assert_eq!(ImageSpec::parse("20x20x1").unwrap().len(), 400);
        assert_eq!(ImageSpec::parse("4x3").unwrap().channels, 1);
        assert!(ImageSpec::parse("4x3x2").is_err());
        assert!(ImageSpec::parse("abc").is_err());
        let s = ImageSpec::new(2, 3, 1).unwrap();
        assert_eq!(s.index(1, 0, 0), 1);
        assert_eq!(s.index(0, 1, 0), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn zscore_rows_are_standardized(rows in prop::collection::vec(
                prop::collection::vec(-1e3f64..1e3, 6), 2..6)) {
                let m = rows.len();
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                let d = DataMatrix::new(Array2::from_shape_vec((m, 6), flat).unwrap()).unwrap();
                let z = normalize(&d, NormalizeMode::ZscoreRows);
                for (orig, row) in d.values().rows().into_iter().zip(z.values().rows()) {
                    let spread = orig.fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                        - orig.fold(f64::INFINITY, |a, &b| a.min(b));
                    if spread < 1e-6 { continue; }
                    let mean = row.sum() / 6.0;
                    let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0).sqrt();
                    prop_assert!(mean.abs() < 1e-12);
                    prop_assert!((sd - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn selected_rows_dominate_discarded(rows in prop::collection::vec(
                prop::collection::vec(-10f64..10.0, 4), 2..10), frac in 0.1f64..1.0) {
                let m = rows.len();
                let count = ((m as f64 * frac).ceil() as usize).clamp(1, m);
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                let labels: Vec<String> = (0..m).map(|i| i.to_string()).collect();
                let d = DataMatrix::new(Array2::from_shape_vec((m, 4), flat).unwrap())
                    .unwrap().with_feature_labels(labels).unwrap();
                let s = select_variable_features(&d, count).unwrap();
                let var = row_variances(d.values());
                let kept: Vec<usize> = s.feature_labels.unwrap().iter()
                    .map(|l| l.parse().unwrap()).collect();
                prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
                let min_kept = kept.iter().map(|&i| var[i]).fold(f64::INFINITY, f64::min);
                for i in (0..m).filter(|i| !kept.contains(i)) {
                    prop_assert!(var[i] <= min_kept);
                }
            }
        }
    }
}
