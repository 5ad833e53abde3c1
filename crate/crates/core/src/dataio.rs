//! Matrix files, synthetic datasets and target ingestion.
//!
//! Two on-disk formats are supported:
//!
//! * **CSV**: comma-separated rows of decimal floats. A single leading header
//!   line is detected automatically (any field that does not parse as a
//!   number) and kept as column labels.
//! * **MAT64**: `b"KSSL"`, `u32` rows (LE), `u32` cols (LE), then
//!   `rows * cols` little-endian `f64` values in row-major order. The byte
//!   length must match the header exactly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixkit::{self, RANK_TOL};

pub const MAT64_MAGIC: &[u8; 4] = b"KSSL";
const MAT64_HEADER_LEN: usize = 12;

/// `m × n` matrix of input points, column `j` is `x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("data matrix has non-finite entries".into()));
        }
        Ok(Self {
            values,
            labels: None,
        })
    }

    /// Builds a data matrix from a table holding one point per row.
    pub fn from_rows(rows: &DMatrix<f64>) -> Result<Self> {
        Self::new(rows.transpose())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(Error::dims(format!(
                "{} feature labels for {} features",
                labels.len(),
                self.dim()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Input dimension `m`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of points `n`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let m = self.dim();
        &self.values.as_slice()[j * m..(j + 1) * m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Mat64,
}

impl MatrixFormat {
    /// `.mat64` selects MAT64, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("mat64") => MatrixFormat::Mat64,
            _ => MatrixFormat::Csv,
        }
    }
}

pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DMatrix<f64>> {
    read_matrix_labeled(path, format).map(|(m, _)| m)
}

/// Reads a matrix together with the CSV header, if one was present.
pub fn read_matrix_labeled(
    path: impl AsRef<Path>,
    format: MatrixFormat,
) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MatrixFormat::Mat64 => decode_mat64(&bytes).map(|m| (m, None)),
        MatrixFormat::Csv => decode_csv(&bytes),
    }
    .map_err(|msg| Error::parse(path, msg))
}

pub fn write_matrix(matrix: &DMatrix<f64>, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        MatrixFormat::Mat64 => encode_mat64(matrix).map_err(|msg| Error::parse(path, msg))?,
        MatrixFormat::Csv => encode_csv(matrix, None),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a CSV with a header line.
pub fn write_csv_with_header(matrix: &DMatrix<f64>, header: &[&str], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_csv(matrix, Some(header))).map_err(|e| Error::io(path, e))
}

pub fn encode_mat64(matrix: &DMatrix<f64>) -> std::result::Result<Vec<u8>, String> {
    let (rows, cols) = matrix.shape();
    let r = u32::try_from(rows).map_err(|_| format!("{rows} rows exceed the MAT64 limit"))?;
    let c = u32::try_from(cols).map_err(|_| format!("{cols} cols exceed the MAT64 limit"))?;
    let mut out = Vec::with_capacity(MAT64_HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(MAT64_MAGIC);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            out.extend_from_slice(&matrix[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_mat64(bytes: &[u8]) -> std::result::Result<DMatrix<f64>, String> {
    if bytes.len() < MAT64_HEADER_LEN {
        return Err(format!("MAT64 file too short ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != MAT64_MAGIC {
        return Err("bad MAT64 magic".into());
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(MAT64_HEADER_LEN))
        .ok_or_else(|| format!("MAT64 header {rows}x{cols} overflows"))?;
    if bytes.len() != expected {
        return Err(format!(
            "MAT64 header declares {rows}x{cols} ({expected} bytes), file has {} bytes",
            bytes.len()
        ));
    }
    let values: Vec<f64> = bytes[MAT64_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

fn encode_csv(matrix: &DMatrix<f64>, header: Option<&[&str]>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h).expect("writing to memory");
    }
    for row in matrix.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

type Labeled = (DMatrix<f64>, Option<Vec<String>>);

fn decode_csv(bytes: &[u8]) -> std::result::Result<Labeled, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut header = None;
    let mut data: Vec<f64> = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => {
                header = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
                continue;
            }
            Err(e) => return Err(format!("line {}: {e}", line + 1)),
        };
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(format!("line {}: expected {c} fields, found {}", line + 1, values.len()))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| "no numeric rows".to_string())?;
    if let Some(h) = &header {
        if h.len() != cols {
            return Err(format!("header has {} fields, rows have {cols}", h.len()));
        }
    }
    Ok((DMatrix::from_row_slice(rows, cols, &data), header))
}

/// Reads a point set stored one point per row and returns it column-wise.
pub fn read_points(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let (rows, labels) = read_matrix_labeled(path, MatrixFormat::from_path(path))?;
    let data = DataMatrix::from_rows(&rows)?;
    match labels {
        Some(l) => data.with_labels(l),
        None => Ok(data),
    }
}

/// Writes a column-wise point set as one point per row.
pub fn write_points(points: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_matrix(&points.transpose(), path, MatrixFormat::from_path(path))
}

/// Spiked covariance model `N(0, ν θθᵀ + I_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedCovarianceSpec {
    pub m: usize,
    pub nu: f64,
    pub theta: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl SpikedCovarianceSpec {
    /// Spike along the first coordinate axis.
    pub fn axis_aligned(m: usize, nu: f64, n: usize, seed: u64) -> Self {
        let mut theta = vec![0.0; m];
        if m > 0 {
            theta[0] = 1.0;
        }
        Self { m, nu, theta, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidConfig("spiked model needs m, n >= 1".into()));
        }
        if self.theta.len() != self.m {
            return Err(Error::dims(format!("theta has {} entries, m = {}", self.theta.len(), self.m)));
        }
        let norm = self.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidConfig(format!("theta must be a unit vector (norm {norm})")));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("spike strength must be >= 0, got {}", self.nu)));
        }
        Ok(())
    }
}

/// Draws `n` samples `x = ε + sqrt(ν) g θ` with `ε ~ N(0, I)`, `g ~ N(0, 1)`.
pub fn gen_spiked(spec: &SpikedCovarianceSpec) -> Result<DataMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let amp = spec.nu.sqrt();
    let mut x = DMatrix::zeros(spec.m, spec.n);
    for mut col in x.column_iter_mut() {
        for v in col.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let g: f64 = rng.sample(StandardNormal);
        for (v, t) in col.iter_mut().zip(&spec.theta) {
            *v += amp * g * t;
        }
    }
    DataMatrix::new(x)
}

/// i.i.d. `N(0, scale² I_m)` points.
pub fn gen_gaussian(m: usize, n: usize, scale: f64, seed: u64) -> Result<DataMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DataMatrix::new(DMatrix::from_fn(m, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// `F = G X` with `G ∈ R^{d×m}` entries i.i.d. `N(0, 1/m)`.
    RandomLinear { d: usize, seed: u64 },
    /// `F = θᵀ X` (d = 1).
    SpikeProjection { theta: Vec<f64> },
}

pub fn gen_target(kind: &TargetKind, x: &DataMatrix) -> Result<DMatrix<f64>> {
    let f = match kind {
        TargetKind::RandomLinear { d, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let std = 1.0 / (x.dim() as f64).sqrt();
            let g = DMatrix::from_fn(*d, x.dim(), |_, _| std * rng.sample::<f64, _>(StandardNormal));
            g * x.values()
        }
        TargetKind::SpikeProjection { theta } => {
            if theta.len() != x.dim() {
                return Err(Error::dims(format!(
                    "theta has {} entries, data dimension is {}",
                    theta.len(),
                    x.dim()
                )));
            }
            DMatrix::from_row_slice(1, theta.len(), theta) * x.values()
        }
    };
    check_target_rank(&f)?;
    Ok(f)
}

/// Fails with `RankDeficientTarget` unless `cov(F)` has full rank `d`.
pub fn check_target_rank(f: &DMatrix<f64>) -> Result<()> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(Error::RankDeficientTarget("empty target".into()));
    }
    let eig = matrixkit::sym_eig(&matrixkit::sample_covariance(f))?;
    if !eig.is_positive_definite(RANK_TOL) {
        return Err(Error::RankDeficientTarget(format!(
            "target covariance eigenvalues span [{:.3e}, {:.3e}]",
            eig.min_eigenvalue(),
            eig.max_eigenvalue()
        )));
    }
    Ok(())
}

/// Projects a `d0 × n` target onto its top `d` principal components.
pub fn pca_reduce(f: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 || d > f.nrows() {
        return Err(Error::InvalidConfig(format!(
            "PCA dimension {d} must be in 1..={}",
            f.nrows()
        )));
    }
    let eig = matrixkit::sym_eig(&matrixkit::sample_covariance(f))?;
    let top = eig.eigenvectors.columns(0, d).into_owned();
    Ok(top.transpose() * matrixkit::center_rows(f))
}
