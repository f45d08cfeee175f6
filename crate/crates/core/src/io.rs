//! On-disk formats: `.fbm` matrices, `.fbk` masks, the session catalog and
//! CSV tables.
//!
//! `.fbm` layout (all integers little-endian):
//!
//! ```text
//! "FBM1" | rows: u32 | cols: u32 | dtype: u8 (0 = f32, 1 = f64) | 3 zero bytes | row-major payload
//! ```
//!
//! `.fbk` layout:
//!
//! ```text
//! "FBK1" | height: u32 | width: u32 | height·width bytes, each 0 or 1
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BrainMask, DataMatrix};

pub const MATRIX_MAGIC: &[u8; 4] = b"FBM1";
pub const MASK_MAGIC: &[u8; 4] = b"FBK1";
const MATRIX_HEADER_LEN: usize = 16;
const MASK_HEADER_LEN: usize = 12;

/// Storage precision of a `.fbm` payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn byte(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Error::io(format!("creating temp file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Serializes a matrix in `.fbm` format.
pub fn encode_matrix(values: ArrayView2<'_, f64>, dtype: Dtype) -> Result<Vec<u8>> {
    let (rows, cols) = values.dim();
    let rows32 = u32::try_from(rows)
        .map_err(|_| Error::InvalidInput(format!("{rows} rows exceed the u32 header field")))?;
    let cols32 = u32::try_from(cols)
        .map_err(|_| Error::InvalidInput(format!("{cols} columns exceed the u32 header field")))?;
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + rows * cols * dtype.width());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    out.push(dtype.byte());
    out.extend_from_slice(&[0, 0, 0]);
    for v in values.iter() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

/// Parses `.fbm` bytes; `path` is used for error messages only.
pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<(Array2<f64>, Dtype)> {
    if bytes.len() < 4 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: String::from_utf8_lossy(MATRIX_MAGIC).into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into(),
        });
    }
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: MATRIX_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let rows = u32_at(bytes, 4) as u64;
    let cols = u32_at(bytes, 8) as u64;
    let dtype = match bytes[12] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => {
            return Err(Error::BadDtype {
                path: path.into(),
                dtype: other,
            })
        }
    };
    let payload_len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width() as u64))
        .filter(|&n| usize::try_from(n).is_ok())
        .ok_or(Error::DimensionOverflow {
            path: path.into(),
            rows,
            cols,
        })?;
    let actual = (bytes.len() - MATRIX_HEADER_LEN) as u64;
    if actual < payload_len {
        return Err(Error::Truncated {
            path: path.into(),
            expected: payload_len,
            actual,
        });
    }
    if actual > payload_len {
        return Err(Error::InvalidInput(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            actual - payload_len
        )));
    }
    let payload = &bytes[MATRIX_HEADER_LEN..];
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    let m = Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok((m, dtype))
}

pub fn save_matrix(values: ArrayView2<'_, f64>, path: &Path, dtype: Dtype) -> Result<()> {
    write_atomic(path, &encode_matrix(values, dtype)?)
}

pub fn load_matrix(path: &Path) -> Result<(Array2<f64>, Dtype)> {
    decode_matrix(&read_file(path)?, path)
}

pub fn save_data_matrix(m: &DataMatrix, path: &Path, dtype: Dtype) -> Result<()> {
    save_matrix(m.values(), path, dtype)
}

pub fn load_data_matrix(path: &Path, fps: f64) -> Result<DataMatrix> {
    let (values, _) = load_matrix(path)?;
    DataMatrix::new(values, fps)
}

pub fn encode_mask(mask: &BrainMask) -> Result<Vec<u8>> {
    let h = u32::try_from(mask.height())
        .map_err(|_| Error::InvalidInput("mask height exceeds u32".into()))?;
    let w = u32::try_from(mask.width())
        .map_err(|_| Error::InvalidInput("mask width exceeds u32".into()))?;
    let mut out = Vec::with_capacity(MASK_HEADER_LEN + mask.bits().len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend(mask.bits().iter().map(|&b| u8::from(b)));
    Ok(out)
}

pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<BrainMask> {
    if bytes.len() < 4 || &bytes[..4] != MASK_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: String::from_utf8_lossy(MASK_MAGIC).into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into(),
        });
    }
    if bytes.len() < MASK_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: MASK_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let h = u32_at(bytes, 4) as u64;
    let w = u32_at(bytes, 8) as u64;
    let expected = h
        .checked_mul(w)
        .filter(|&n| usize::try_from(n).is_ok())
        .ok_or(Error::DimensionOverflow {
            path: path.into(),
            rows: h,
            cols: w,
        })?;
    let actual = (bytes.len() - MASK_HEADER_LEN) as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::InvalidInput(format!(
            "{}: {} trailing bytes after mask payload",
            path.display(),
            actual - expected
        )));
    }
    let payload = &bytes[MASK_HEADER_LEN..];
    if let Some((offset, &value)) = payload.iter().enumerate().find(|(_, &b)| b > 1) {
        return Err(Error::BadMaskByte {
            path: path.into(),
            offset,
            value,
        });
    }
    BrainMask::new(h as usize, w as usize, payload.iter().map(|&b| b == 1).collect())
}

pub fn save_mask(mask: &BrainMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask(mask)?)
}

pub fn load_mask(path: &Path) -> Result<BrainMask> {
    decode_mask(&read_file(path)?, path)
}

/// Dataset split a session belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub const ALLOWED: &'static [&'static str] = &["train", "val", "test"];

    pub fn parse(s: &str) -> Result<Role> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(Error::UnknownRole {
                role: other.into(),
                allowed: Role::ALLOWED,
            }),
        }
    }
}

/// One row of the session catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub subject_id: String,
    pub session_id: String,
    pub role: Role,
    pub fps: f64,
    pub matrix_path: PathBuf,
    pub mask_path: PathBuf,
    /// Reference-channel frame stack; when present, `matrix_path` holds the
    /// emission-channel stack and preprocessing applies ratiometric correction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_path: Option<PathBuf>,
}

impl SessionRecord {
    pub fn key(&self) -> String {
        format!("{}_{}", self.subject_id, self.session_id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    subject_id: String,
    session_id: String,
    role: String,
    fps: f64,
    matrix_path: PathBuf,
    mask_path: PathBuf,
    #[serde(default)]
    reference_path: Option<PathBuf>,
}

/// Parses and validates catalog JSON. Relative paths are resolved against
/// `base_dir`; existence of the files is checked when `check_paths` is set.
pub fn parse_catalog(text: &str, base_dir: &Path, check_paths: bool) -> Result<Vec<SessionRecord>> {
    let raw: Vec<RawRecord> =
        serde_json::from_str(text).map_err(|e| Error::Catalog(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let role = Role::parse(&r.role)?;
        if !(r.fps.is_finite() && r.fps > 0.0) {
            return Err(Error::Catalog(format!(
                "session {}/{}: fps must be positive, got {}",
                r.subject_id, r.session_id, r.fps
            )));
        }
        if !seen.insert((r.subject_id.clone(), r.session_id.clone())) {
            return Err(Error::DuplicateSession {
                subject: r.subject_id,
                session: r.session_id,
            });
        }
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let rec = SessionRecord {
            subject_id: r.subject_id,
            session_id: r.session_id,
            role,
            fps: r.fps,
            matrix_path: resolve(r.matrix_path),
            mask_path: resolve(r.mask_path),
            reference_path: r.reference_path.map(resolve),
        };
        if check_paths {
            let paths = [Some(&rec.matrix_path), Some(&rec.mask_path), rec.reference_path.as_ref()];
            for p in paths.into_iter().flatten() {
                if !p.exists() {
                    return Err(Error::Catalog(format!(
                        "session {}/{}: file {} does not exist",
                        rec.subject_id,
                        rec.session_id,
                        p.display()
                    )));
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_catalog(path: &Path) -> Result<Vec<SessionRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_catalog(&text, base, true)
}

/// Writes a catalog with paths relative to the catalog's directory when
/// possible.
pub fn save_catalog(records: &[SessionRecord], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let rel: Vec<SessionRecord> = records
        .iter()
        .map(|r| {
            let strip = |p: &PathBuf| p.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| p.clone());
            SessionRecord {
                matrix_path: strip(&r.matrix_path),
                mask_path: strip(&r.mask_path),
                reference_path: r.reference_path.as_ref().map(strip),
                ..r.clone()
            }
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&rel)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// A cell of a CSV table.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // Shortest representation that parses back to the same f64
            // (never more than 17 significant digits).
            Cell::Real(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(s) => s.parse().ok(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A rectangular table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(Error::Shape(format!(
                    "table row {i} has {} cells, header has {}",
                    row.len(),
                    self.columns.len()
                )));
            }
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner()
            .map_err(|e| Error::io("flushing CSV", e.into_error()))
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn export_csv(table: &Table, path: &Path) -> Result<()> {
    write_atomic(path, &table.to_csv()?)
}

/// Reads a CSV written by [`export_csv`]; numeric-looking cells become reals.
pub fn read_csv(path: &Path) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let columns = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|s| match s.parse::<f64>() {
                    Ok(v) => Cell::Real(v),
                    Err(_) => Cell::Text(s.into()),
                })
                .collect(),
        );
    }
    Ok(Table { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn matrix_roundtrip_and_resave_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.fbm");
        let m = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.1 - 0.55);
        save_matrix(m.view(), &p, Dtype::F64).unwrap();
        let (back, dtype) = load_matrix(&p).unwrap();
        assert_eq!(dtype, Dtype::F64);
        assert_eq!(back, m);
        let p2 = dir.path().join("b.fbm");
        save_matrix(back.view(), &p2, Dtype::F64).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn f32_roundtrip_at_stored_precision() {
        let m = array![[0.1f32 as f64, 1.5], [-2.25, 1e-3f32 as f64]];
        let bytes = encode_matrix(m.view(), Dtype::F32).unwrap();
        let (back, dtype) = decode_matrix(&bytes, Path::new("x")).unwrap();
        assert_eq!(dtype, Dtype::F32);
        assert_eq!(back, m);
    }

    #[test]
    fn matrix_header_errors() {
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        let good = encode_matrix(m.view(), Dtype::F64).unwrap();

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_matrix(&bad, Path::new("x")), Err(Error::BadMagic { .. })));

        let short = &good[..good.len() - 8];
        match decode_matrix(short, Path::new("x")) {
            Err(Error::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, 32);
                assert_eq!(actual, 24);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
        let msg = decode_matrix(short, Path::new("x")).unwrap_err().to_string();
        assert!(msg.contains("32") && msg.contains("24"), "{msg}");

        let mut dt = good.clone();
        dt[12] = 7;
        assert!(matches!(decode_matrix(&dt, Path::new("x")), Err(Error::BadDtype { dtype: 7, .. })));

        let mut huge = good.clone();
        huge[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = decode_matrix(&huge, Path::new("x")).unwrap_err();
        assert!(
            matches!(err, Error::DimensionOverflow { .. } | Error::Truncated { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn mask_roundtrip_and_errors() {
        let mask = BrainMask::new(2, 3, vec![true, false, true, true, true, false]).unwrap();
        let bytes = encode_mask(&mask).unwrap();
        assert_eq!(decode_mask(&bytes, Path::new("m")).unwrap(), mask);

        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(decode_mask(&bad, Path::new("m")), Err(Error::BadMagic { .. })));
        let mut byte2 = bytes.clone();
        byte2[13] = 2;
        assert!(matches!(
            decode_mask(&byte2, Path::new("m")),
            Err(Error::BadMaskByte { offset: 1, value: 2, .. })
        ));
        assert!(matches!(
            decode_mask(&bytes[..bytes.len() - 1], Path::new("m")),
            Err(Error::Truncated { .. })
        ));
    }

    fn record(subject: &str, session: &str, role: &str) -> String {
        format!(
            r#"{{"subject_id":"{subject}","session_id":"{session}","role":"{role}","fps":16.8,"matrix_path":"m.fbm","mask_path":"k.fbk"}}"#
        )
    }

    #[test]
    fn catalog_examples() {
        let base = Path::new("/data");
        assert!(parse_catalog("[]", base, false).unwrap().is_empty());

        let dup = format!("[{},{}]", record("m1", "s1", "train"), record("m1", "s1", "val"));
        assert!(matches!(
            parse_catalog(&dup, base, false),
            Err(Error::DuplicateSession { .. })
        ));

        let eval = format!("[{}]", record("m1", "s1", "eval"));
        let err = parse_catalog(&eval, base, false).unwrap_err();
        assert!(matches!(err, Error::UnknownRole { .. }));
        let msg = err.to_string();
        assert!(msg.contains("train") && msg.contains("val") && msg.contains("test"), "{msg}");

        let missing = r#"[{"subject_id":"a","session_id":"b","role":"train","fps":10,"mask_path":"k"}]"#;
        let msg = parse_catalog(missing, base, false).unwrap_err().to_string();
        assert!(msg.contains("matrix_path"), "{msg}");
    }

    #[test]
    fn catalog_preserves_order_and_resolves_paths() {
        let text = format!(
            "[{},{},{}]",
            record("m2", "s1", "test"),
            record("m1", "s2", "train"),
            record("m1", "s1", "val")
        );
        let recs = parse_catalog(&text, Path::new("/data"), false).unwrap();
        let keys: Vec<String> = recs.iter().map(SessionRecord::key).collect();
        assert_eq!(keys, ["m2_s1", "m1_s2", "m1_s1"]);
        assert_eq!(recs[0].matrix_path, Path::new("/data/m.fbm"));
        assert_eq!(recs[2].role, Role::Val);
    }

    #[test]
    fn catalog_checks_file_existence() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("[{}]", record("m1", "s1", "train"));
        assert!(parse_catalog(&text, dir.path(), true).is_err());
        fs::write(dir.path().join("m.fbm"), b"").unwrap();
        fs::write(dir.path().join("k.fbk"), b"").unwrap();
        assert!(parse_catalog(&text, dir.path(), true).is_ok());
    }

    #[test]
    fn csv_examples() {
        let mut t = Table::new(["r"]);
        t.push(vec![Cell::Real(0.5)]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "r\n0.5\n");

        let mut ragged = Table::new(["a", "b"]);
        ragged.push(vec![Cell::Real(1.0)]);
        assert!(ragged.to_csv().is_err());

        let mut quoted = Table::new(["label", "r"]);
        quoted.push(vec![Cell::from("a,b"), Cell::Real(-1.25)]);
        assert_eq!(
            String::from_utf8(quoted.to_csv().unwrap()).unwrap(),
            "label,r\n\"a,b\",-1.25\n"
        );
    }

    proptest! {
        #[test]
        fn csv_reload_reproduces_reals(values in prop::collection::vec(-1e6f64..1e6, 1..20)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.csv");
            let mut t = Table::new(["i", "v"]);
            for (i, v) in values.iter().enumerate() {
                t.push(vec![Cell::from(i), Cell::Real(*v)]);
            }
            export_csv(&t, &p).unwrap();
            let back = read_csv(&p).unwrap();
            for (row, v) in back.rows.iter().zip(&values) {
                prop_assert!((row[1].as_real().unwrap() - v).abs() <= 1e-15 * v.abs().max(1.0));
            }
        }

        #[test]
        fn matrix_bytes_roundtrip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let m = Array2::from_shape_fn((rows, cols), |(i, j)| {
                f64::from_bits(seed.rotate_left((i * cols + j) as u32) & 0x3fef_ffff_ffff_ffff)
            });
            let bytes = encode_matrix(m.view(), Dtype::F64).unwrap();
            let (back, _) = decode_matrix(&bytes, Path::new("p")).unwrap();
            prop_assert_eq!(back.mapv(f64::to_bits), m.mapv(f64::to_bits));
        }
    }
}
