//! File formats: binary signals, CSV tables, PGM images, JSON reports.
//!
//! The native signal format is three ASCII header lines followed by raw
//! little-endian doubles in row-major order:
//!
//! ```text
//! SBD1
//! dims <rank> <n1> [<n2>]
//! dtype f64
//! <n1 * n2 doubles, little endian>
//! ```
//!
//! Bit-exact by construction; every number round-trips. CSV carries the
//! same values in text for spreadsheet use and is exact too (17
//! significant digits). Images use binary 8-bit grayscale PGM (P5) with
//! samples mapped linearly between 0 <-> 0.0 and 255 <-> 1.0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SbdError};
use crate::signal::{Dims, Signal};

const MAGIC: &str = "SBD1";

fn bad(path: &Path, what: impl std::fmt::Display) -> SbdError {
    SbdError::Io(format!("{}: {what}", path.display()))
}

/// Writes a signal in the native binary format.
pub fn write_signal(path: impl AsRef<Path>, sig: &Signal) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| bad(path, e))?);
    let dims_line = match sig.dims() {
        Dims::One(n) => format!("dims 1 {n}"),
        Dims::Two(n1, n2) => format!("dims 2 {n1} {n2}"),
    };
    write!(w, "{MAGIC}\n{dims_line}\ndtype f64\n").map_err(|e| bad(path, e))?;
    for v in sig.as_slice() {
        w.write_all(&v.to_le_bytes()).map_err(|e| bad(path, e))?;
    }
    w.flush().map_err(|e| bad(path, e))
}

fn read_header_line(r: &mut impl Read, path: &Path) -> Result<String> {
    let mut line = Vec::new();
    loop {
        let mut b = [0u8; 1];
        let n = r.read(&mut b).map_err(|e| bad(path, e))?;
        if n == 0 {
            return Err(bad(path, "truncated header"));
        }
        if b[0] == b'\n' {
            break;
        }
        if line.len() > 128 {
            return Err(bad(path, "header line too long"));
        }
        line.push(b[0]);
    }
    String::from_utf8(line).map_err(|_| bad(path, "header is not ASCII"))
}

/// Reads a signal written by [`write_signal`].
pub fn read_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| bad(path, e))?);

    let magic = read_header_line(&mut r, path)?;
    if magic != MAGIC {
        return Err(bad(path, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let dims_line = read_header_line(&mut r, path)?;
    let parts: Vec<&str> = dims_line.split_whitespace().collect();
    let dims = match parts.as_slice() {
        ["dims", "1", n] => Dims::One(n.parse().map_err(|_| bad(path, "bad dims"))?),
        ["dims", "2", n1, n2] => Dims::Two(
            n1.parse().map_err(|_| bad(path, "bad dims"))?,
            n2.parse().map_err(|_| bad(path, "bad dims"))?,
        ),
        _ => return Err(bad(path, format!("unrecognized dims line {dims_line:?}"))),
    };
    let dtype = read_header_line(&mut r, path)?;
    if dtype != "dtype f64" {
        return Err(bad(path, format!("unsupported dtype line {dtype:?}")));
    }

    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| bad(path, e))?;
    if raw.len() != dims.len() * 8 {
        return Err(bad(
            path,
            format!("payload holds {} bytes, dims {:?} need {}", raw.len(), dims, dims.len() * 8),
        ));
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Signal::new(data, dims)
}

/// Writes a signal as CSV: 1D one value per row; 2D one row per grid row.
/// Exact: 17 significant digits round-trip every double.
pub fn write_signal_csv(path: impl AsRef<Path>, sig: &Signal) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| bad(path, e))?);
    let (rows, cols) = match sig.dims() {
        Dims::One(n) => (n, 1),
        Dims::Two(n1, n2) => (n1, n2),
    };
    let v = sig.as_slice();
    for r in 0..rows {
        let row: Vec<String> = (0..cols).map(|c| format!("{:.17e}", v[r * cols + c])).collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| bad(path, e))?;
    }
    w.flush().map_err(|e| bad(path, e))
}

/// Reads a headerless CSV of numbers. One column gives a 1D signal; a
/// rectangular table gives a 2D signal with one grid row per line.
pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .map_err(|e| bad(path, e))?
        .read_to_string(&mut text)
        .map_err(|e| bad(path, e))?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = 0usize;
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| bad(path, format!("line {}: bad number {cell:?}", lineno + 1)))?;
            data.push(v);
            cols += 1;
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(bad(path, format!("line {}: ragged row", lineno + 1)))
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| bad(path, "no data rows"))?;
    let dims = if width == 1 { Dims::One(rows) } else { Dims::Two(rows, width) };
    Signal::new(data, dims)
}

/// Writes a 2D signal as binary 8-bit PGM (P5). Values are clamped to
/// [0, 1] and quantized to 255 levels.
pub fn write_pgm(path: impl AsRef<Path>, img: &Signal) -> Result<()> {
    let path = path.as_ref();
    let Dims::Two(n1, n2) = img.dims() else {
        return Err(SbdError::DimMismatch("PGM output needs a two-dimensional signal".into()));
    };
    let mut w = BufWriter::new(File::create(path).map_err(|e| bad(path, e))?);
    write!(w, "P5\n{n2} {n1}\n255\n").map_err(|e| bad(path, e))?;
    for &v in img.as_slice() {
        let q = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        w.write_all(&[q]).map_err(|e| bad(path, e))?;
    }
    w.flush().map_err(|e| bad(path, e))
}

/// Reads a binary 8-bit PGM (P5) image into reals in [0, 1].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let mut raw = Vec::new();
    File::open(path)
        .map_err(|e| bad(path, e))?
        .read_to_end(&mut raw)
        .map_err(|e| bad(path, e))?;

    // Header: "P5", width, height, maxval as ASCII tokens separated by
    // whitespace or #-comments, then a single whitespace byte, then samples.
    let mut pos = 0usize;
    let mut token = |raw: &[u8]| -> Result<String> {
        while pos < raw.len() {
            match raw[pos] {
                b'#' => {
                    while pos < raw.len() && raw[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad(path, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };

    if token(&raw)? != "P5" {
        return Err(bad(path, "not a binary PGM (P5) file"));
    }
    let width: usize = token(&raw)?.parse().map_err(|_| bad(path, "bad width"))?;
    let height: usize = token(&raw)?.parse().map_err(|_| bad(path, "bad height"))?;
    let maxval: usize = token(&raw)?.parse().map_err(|_| bad(path, "bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(path, format!("unsupported maxval {maxval}")));
    }
    pos += 1;
    let need = width * height;
    if raw.len() < pos + need {
        return Err(bad(path, format!("payload holds {} samples, need {need}", raw.len() - pos)));
    }
    let data: Vec<f64> = raw[pos..pos + need].iter().map(|&b| b as f64 / maxval as f64).collect();
    Signal::new(data, Dims::Two(height, width))
}

/// Writes any serializable report as pretty-printed JSON.
pub fn write_json(path: impl AsRef<Path>, report: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| SbdError::Io(format!("{}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| bad(path, e))
}

/// Writes a string (already-formatted CSV, usually) to a file.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| bad(path, e))
}
