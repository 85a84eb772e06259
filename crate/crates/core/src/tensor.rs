//! Binary tensor files, P5 mask images and dataset manifests.
//!
//! Tensor file layout (little-endian):
//!
//! | offset | size      | field                               |
//! |--------|-----------|-------------------------------------|
//! | 0      | 4         | magic `TTTA`                        |
//! | 4      | 2         | version, always 1                   |
//! | 6      | 1         | dtype code, 0 = f32                 |
//! | 7      | 1         | rank, 1..=4                         |
//! | 8      | 4 * rank  | dims, u32 each                      |
//! | ...    | 4 * prod  | payload, row-major, last dim inner  |
//!
//! The header is 12 bytes for a rank-1 tensor, 16 for rank 2, and so on.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::maps::{FeatureMap, MaskImage, PointMap, ScoreMap, ShapeError};

pub const MAGIC: &[u8; 4] = b"TTTA";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const MAX_RANK: usize = 4;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic {found:?}, expected \"TTTA\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("rank {0} outside 1..=4")]
    BadRank(usize),
    #[error("dimension {axis} is zero")]
    ZeroDim { axis: usize },
    #[error("dimension {axis} = {value} does not fit in 32 bits")]
    DimOverflow { axis: usize, value: usize },
    #[error("header truncated: need {expected} bytes, got {actual}")]
    TruncatedHeader { expected: usize, actual: usize },
    #[error("payload truncated: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{actual} payload bytes present, expected {expected}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f32 },
    #[error("payload holds {actual} values but dims multiply to {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("expected a rank-{expected} tensor, got dims {dims:?}")]
    Rank { expected: usize, dims: Vec<usize> },
    #[error("point maps need 3 channels, got {0}")]
    PointChannels(usize),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TensorError + '_ {
    move |source| TensorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An n-dimensional f32 array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(TensorError::BadRank(dims.len()));
        }
        for (axis, &value) in dims.iter().enumerate() {
            if value == 0 {
                return Err(TensorError::ZeroDim { axis });
            }
            if value > u32::MAX as usize {
                return Err(TensorError::DimOverflow { axis, value });
            }
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(TensorError::PayloadLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.dims, self.data)
    }

    fn header_len(rank: usize) -> usize {
        8 + 4 * rank
    }

    /// Serializes header and payload. Fails on the first non-finite value.
    pub fn to_bytes(&self) -> Result<Vec<u8>, TensorError> {
        if let Some((index, &value)) = self.data.iter().enumerate().find(|(_, v)| !v.is_finite())
        {
            return Err(TensorError::NonFinite { index, value });
        }
        let mut out = Vec::with_capacity(Self::header_len(self.dims.len()) + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < 8 {
            return Err(TensorError::TruncatedHeader {
                expected: 8,
                actual: bytes.len(),
            });
        }
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[..4]);
        if &magic != MAGIC {
            return Err(TensorError::BadMagic { found: magic });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(TensorError::UnsupportedVersion(version));
        }
        if bytes[6] != DTYPE_F32 {
            return Err(TensorError::UnsupportedDtype(bytes[6]));
        }
        let rank = bytes[7] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(TensorError::BadRank(rank));
        }
        let header = Self::header_len(rank);
        if bytes.len() < header {
            return Err(TensorError::TruncatedHeader {
                expected: header,
                actual: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[8..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(TensorError::ZeroDim { axis });
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(TensorError::DimOverflow {
                axis: 0,
                value: usize::MAX,
            })?;
        let expected = count * 4;
        let payload = &bytes[header..];
        if payload.len() < expected {
            return Err(TensorError::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(TensorError::TrailingBytes {
                expected,
                actual: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    let bytes = tensor.to_bytes()?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    Tensor::from_bytes(&bytes)
}

impl From<&ScoreMap> for Tensor {
    fn from(s: &ScoreMap) -> Self {
        Tensor {
            dims: vec![s.height(), s.width()],
            data: s.values().to_vec(),
        }
    }
}

impl From<&FeatureMap> for Tensor {
    fn from(f: &FeatureMap) -> Self {
        Tensor {
            dims: vec![f.height(), f.width(), f.channels()],
            data: f.values().to_vec(),
        }
    }
}

impl From<&PointMap> for Tensor {
    fn from(p: &PointMap) -> Self {
        Tensor {
            dims: vec![p.height(), p.width(), 3],
            data: p.values().to_vec(),
        }
    }
}

impl TryFrom<Tensor> for ScoreMap {
    type Error = TensorError;

    /// Accepts `H x W` or `H x W x 1`.
    fn try_from(t: Tensor) -> Result<Self, Self::Error> {
        match *t.dims.as_slice() {
            [h, w] | [h, w, 1] => Ok(ScoreMap::new(h, w, t.data)?),
            _ => Err(TensorError::Rank {
                expected: 2,
                dims: t.dims,
            }),
        }
    }
}

impl TryFrom<Tensor> for FeatureMap {
    type Error = TensorError;

    /// Accepts `H x W x D`; a rank-2 tensor is read as a single channel.
    fn try_from(t: Tensor) -> Result<Self, Self::Error> {
        match *t.dims.as_slice() {
            [h, w, d] => Ok(FeatureMap::new(h, w, d, t.data)?),
            [h, w] => Ok(FeatureMap::new(h, w, 1, t.data)?),
            _ => Err(TensorError::Rank {
                expected: 3,
                dims: t.dims,
            }),
        }
    }
}

impl TryFrom<Tensor> for PointMap {
    type Error = TensorError;

    fn try_from(t: Tensor) -> Result<Self, Self::Error> {
        match *t.dims.as_slice() {
            [h, w, 3] => Ok(PointMap::new(h, w, t.data)?),
            [_, _, c] => Err(TensorError::PointChannels(c)),
            _ => Err(TensorError::Rank {
                expected: 3,
                dims: t.dims,
            }),
        }
    }
}

pub fn read_score_map(path: impl AsRef<Path>) -> Result<ScoreMap, TensorError> {
    read_tensor(path)?.try_into()
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap, TensorError> {
    read_tensor(path)?.try_into()
}

pub fn read_point_map(path: impl AsRef<Path>) -> Result<PointMap, TensorError> {
    read_tensor(path)?.try_into()
}

pub fn write_score_map(s: &ScoreMap, path: impl AsRef<Path>) -> Result<(), TensorError> {
    write_tensor(&Tensor::from(s), path)
}

pub fn write_feature_map(f: &FeatureMap, path: impl AsRef<Path>) -> Result<(), TensorError> {
    write_tensor(&Tensor::from(f), path)
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed P5 header: {0}")]
    Header(String),
    #[error("maxval {0} unsupported, expected 255")]
    MaxVal(u32),
    #[error("payload truncated: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Encodes a mask as a binary P5 graymap with maxval 255.
pub fn encode_mask(mask: &MaskImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend_from_slice(mask.pixels());
    out
}

/// Decodes a P5 graymap. Any non-zero pixel is read as on, so ground truth
/// masks stored as 0/1 load the same as 0/255.
pub fn decode_mask(bytes: &[u8]) -> Result<MaskImage, MaskError> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(MaskError::Header("unexpected end of header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(MaskError::Header(format!("magic {:?}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| MaskError::Header(format!("bad number {s:?}")))
    };
    let width = parse(&fields[1])? as usize;
    let height = parse(&fields[2])? as usize;
    let maxval = parse(&fields[3])?;
    if maxval != 255 {
        return Err(MaskError::MaxVal(maxval));
    }
    // exactly one whitespace byte separates maxval from the raster
    pos += 1;
    let expected = width * height;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < expected {
        return Err(MaskError::Truncated {
            expected,
            actual: raster.len(),
        });
    }
    let pixels = raster[..expected]
        .iter()
        .map(|&p| if p == 0 { 0 } else { 255 })
        .collect();
    Ok(MaskImage::new(height, width, pixels)?)
}

pub fn write_mask(mask: &MaskImage, path: impl AsRef<Path>) -> Result<(), MaskError> {
    let path = path.as_ref();
    fs::write(path, encode_mask(mask)).map_err(|source| MaskError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskImage, MaskError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_mask(&bytes)
}

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub score_path: Option<String>,
    /// Concatenated channel-wise, in order, after upsampling.
    pub feature_paths: Vec<String>,
    pub point_map_path: Option<String>,
    pub ground_truth_mask_path: Option<String>,
}

impl SampleRecord {
    /// Class name: the part of the sample id before the first `/`, or `all`.
    pub fn class_name(&self) -> &str {
        match self.sample_id.split_once('/') {
            Some((class, _)) if !class.is_empty() => class,
            _ => "all",
        }
    }
}

impl fmt::Display for SampleRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |o: &Option<String>| o.clone().unwrap_or_default();
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.sample_id,
            opt(&self.score_path),
            self.feature_paths.join(","),
            opt(&self.point_map_path),
            opt(&self.ground_truth_mask_path)
        )
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: expected 5 tab-separated fields, got {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: empty sample id")]
    EmptyId { line: usize },
    #[error("line {line}: sample id {id:?} must be a relative path without '..'")]
    UnsafeId { line: usize, id: String },
    #[error("line {line}: duplicate sample id {id:?}")]
    Duplicate { line: usize, id: String },
}

/// Parses manifest text: one record per line, five tab-separated fields
/// (`sample_id`, `score_path`, comma-separated `feature_paths`,
/// `point_map_path`, `gt_mask_path`), empty string for absent fields. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<SampleRecord>, ManifestError> {
    let mut out: Vec<SampleRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(ManifestError::FieldCount {
                line,
                found: fields.len(),
            });
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(ManifestError::EmptyId { line });
        }
        if id.starts_with('/') || id.split('/').any(|part| part == ".." || part.is_empty()) {
            return Err(ManifestError::UnsafeId { line, id });
        }
        if !seen.insert(id.clone()) {
            return Err(ManifestError::Duplicate { line, id });
        }
        let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
        out.push(SampleRecord {
            sample_id: id,
            score_path: opt(fields[1]),
            feature_paths: fields[2]
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
            point_map_path: opt(fields[3]),
            ground_truth_mask_path: opt(fields[4]),
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>, ManifestError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut text = String::new();
    for line in io::BufReader::new(file).lines() {
        let line = line.map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.push_str(&line);
        text.push('\n');
    }
    parse_manifest(&text)
}

pub fn write_manifest(
    records: &[SampleRecord],
    path: impl AsRef<Path>,
) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let map = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(map)?);
    for r in records {
        writeln!(file, "{r}").map_err(map)?;
    }
    file.flush().map_err(map)
}
