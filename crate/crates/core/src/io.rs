//! File formats: β grid files, CSV tables, 16-bit PNG with sidecar JSON,
//! SHA-256 checksums.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, RealField};
use crate::nearfield::InteractionField;

pub const BETA_MAGIC: &[u8; 4] = b"BETA";
pub const BETA_VERSION: u32 = 1;
pub const BETA_HEADER_LEN: usize = 64;

/// Serialises `β` as a 64-byte header followed by row-major little-endian
/// `(re, im)` pairs.
pub fn encode_beta(field: &InteractionField) -> Vec<u8> {
    let g = field.grid;
    let mut out = Vec::with_capacity(BETA_HEADER_LEN + 16 * g.nx() * g.ny());
    out.extend_from_slice(BETA_MAGIC);
    out.extend_from_slice(&BETA_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    out.extend_from_slice(&g.extent_x().to_le_bytes());
    out.extend_from_slice(&g.extent_y().to_le_bytes());
    out.resize(BETA_HEADER_LEN, 0);
    for v in field.values.iter() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_beta(bytes: &[u8]) -> Result<InteractionField> {
    if bytes.len() < BETA_HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != BETA_MAGIC {
        return Err(Error::Format("bad magic, expected \"BETA\"".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != BETA_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (nx, ny) = (u32_at(8) as usize, u32_at(12) as usize);
    let (ex, ey) = (f64_at(16), f64_at(24));
    let grid = Grid2D::new(nx, ny, ex, ey).map_err(|e| Error::Format(format!("header describes an invalid grid: {e}")))?;
    let expected = BETA_HEADER_LEN + 16 * nx * ny;
    if bytes.len() != expected {
        return Err(Error::Format(format!("{} bytes, header implies {expected}", bytes.len())));
    }
    let data: Vec<Complex64> = bytes[BETA_HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    let values = Array2::from_shape_vec((ny, nx), data).map_err(|e| Error::Format(e.to_string()))?;
    InteractionField::from_values(grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_beta_file(path: &Path, field: &InteractionField) -> Result<()> {
    fs::write(path, encode_beta(field))?;
    Ok(())
}

pub fn read_beta_file(path: &Path) -> Result<InteractionField> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_beta(&bytes)
}

/// `# key: value` lines.
pub type Metadata = Vec<(String, String)>;

fn header(meta: &Metadata) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

/// Rust's shortest round-trip formatting, so identical values give identical bytes.
fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Row-major field; row `iy` holds `y = grid.y(iy)`.
pub fn real_field_csv(field: &RealField, grid: &Grid2D, meta: &Metadata) -> String {
    let mut s = header(meta);
    let _ = writeln!(
        s,
        "# grid: nx={} ny={} extent_x_m={} extent_y_m={} dx_m={} dy_m={} origin_pixel=({}, {})",
        grid.nx(),
        grid.ny(),
        num(grid.extent_x()),
        num(grid.extent_y()),
        num(grid.dx()),
        num(grid.dy()),
        grid.nx() / 2,
        grid.ny() / 2
    );
    for row in field.rows() {
        let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn table_csv(columns: &[&str], rows: &[Vec<f64>], meta: &Metadata) -> String {
    let mut s = header(meta);
    s.push_str(&columns.join(","));
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .map(|&v| if v.is_nan() { String::new() } else { num(v) })
            .collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PngScale {
    pub min: f64,
    pub max: f64,
    pub width: usize,
    pub height: usize,
}

/// Linear 16-bit grayscale, `min → 0`, `max → 65535`; the top image row is the
/// largest `y`.
pub fn encode_png16(field: &RealField) -> Result<(Vec<u8>, PngScale)> {
    let (h, w) = field.dim();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in field.iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
    }
    let span = hi - lo;
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let v = field[[h - 1 - y as usize, x as usize]];
        let t = if span > 0.0 && v.is_finite() { (v - lo) / span } else { 0.0 };
        Luma([(t.clamp(0.0, 1.0) * 65535.0).round() as u16])
    });
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok((
        bytes,
        PngScale {
            min: lo,
            max: hi,
            width: w,
            height: h,
        },
    ))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Output directory that checksums everything written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    records: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            records: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        let mut f = BufWriter::new(fs::File::create(&path)?);
        f.write_all(bytes)?;
        f.flush()?;
        self.records.push(OutputRecord {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        self.write_text(name, &s)
    }

    /// `<stem>.csv`, plus `<stem>.png` and `<stem>.png.json` when `png` is set.
    pub fn write_map(&mut self, stem: &str, field: &RealField, grid: &Grid2D, meta: &Metadata, png: bool) -> Result<()> {
        self.write_text(&format!("{stem}.csv"), &real_field_csv(field, grid, meta))?;
        if png {
            self.write_png(stem, field, meta)?;
        }
        Ok(())
    }

    pub fn write_png(&mut self, stem: &str, field: &RealField, meta: &Metadata) -> Result<()> {
        let (bytes, scale) = encode_png16(field)?;
        self.write(&format!("{stem}.png"), &bytes)?;
        let sidecar = serde_json::json!({
            "min": scale.min,
            "max": scale.max,
            "width": scale.width,
            "height": scale.height,
            "mapping": "linear 16-bit grayscale, min -> 0, max -> 65535, top row = largest y",
            "metadata": meta.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
        });
        self.write_json(&format!("{stem}.png.json"), &sidecar)?;
        Ok(())
    }

    pub fn records(&self) -> &[OutputRecord] {
        &self.records
    }
}
