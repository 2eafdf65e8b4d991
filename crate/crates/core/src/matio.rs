//! Matrix persistence.
//!
//! Binary layout (little endian): the 8-byte magic `QPTMAT01`, `u64` rows,
//! `u64` cols, `u8` basis tag (0 zeeman, 1 product operator, 255 none), `u8`
//! layout tag (0 row-major), then rows·cols `(re, im)` pairs of `f64`.
//!
//! Text layout: a `qptsim-matrix 1` line, `rows`, `cols`, `basis` and
//! `layout` lines, then one line per matrix row holding `re im` pairs written
//! with 17 significant digits, which round-trips every `f64` exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::superop::{Basis, Supermatrix};

const MAGIC: &[u8; 8] = b"QPTMAT01";
const TEXT_HEADER: &str = "qptsim-matrix 1";
const NO_BASIS: u8 = 255;
const ROW_MAJOR: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Text,
}

impl Format {
    /// `.txt` selects text; everything else is binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => Format::Text,
            _ => Format::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredMatrix {
    pub matrix: CMat,
    pub basis: Option<Basis>,
}

impl StoredMatrix {
    pub fn into_supermatrix(self) -> Result<Supermatrix> {
        let basis = self
            .basis
            .ok_or_else(|| Error::Format("matrix carries no supermatrix basis".into()))?;
        Supermatrix::new(self.matrix, basis)
    }
}

pub fn encode_binary(matrix: &CMat, basis: Option<Basis>) -> Vec<u8> {
    let mut out = Vec::with_capacity(26 + 16 * matrix.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    out.push(basis.map_or(NO_BASIS, Basis::code));
    out.push(ROW_MAJOR);
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            let z = matrix[(i, j)];
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("unexpected end of binary matrix data".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn decode_basis(tag: u8) -> Result<Option<Basis>> {
    if tag == NO_BASIS {
        return Ok(None);
    }
    Basis::from_code(tag)
        .map(Some)
        .ok_or_else(|| Error::Format(format!("unknown basis tag {tag}")))
}

pub fn decode_binary(mut bytes: &[u8]) -> Result<StoredMatrix> {
    let magic = take(&mut bytes, 8)?;
    if magic != MAGIC {
        return Err(Error::Format("bad magic number".into()));
    }
    let rows = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    let basis = decode_basis(take(&mut bytes, 1)?[0])?;
    let layout = take(&mut bytes, 1)?[0];
    if layout != ROW_MAJOR {
        return Err(Error::Format(format!("unsupported layout tag {layout}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} data bytes for {rows}x{cols}, found {}",
            bytes.len()
        )));
    }
    let mut matrix = CMat::zeros(rows, cols);
    for (k, chunk) in bytes.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        matrix[(k / cols, k % cols)] = c(re, im);
    }
    Ok(StoredMatrix { matrix, basis })
}

pub fn encode_text(matrix: &CMat, basis: Option<Basis>) -> String {
    let mut out = String::new();
    out.push_str(TEXT_HEADER);
    out.push('\n');
    out.push_str(&format!("rows {}\ncols {}\n", matrix.nrows(), matrix.ncols()));
    out.push_str(&format!(
        "basis {}\nlayout row_major\n",
        basis.map_or("none", Basis::name)
    ));
    for i in 0..matrix.nrows() {
        let line: Vec<String> = (0..matrix.ncols())
            .map(|j| {
                let z = matrix[(i, j)];
                format!("{:.16e} {:.16e}", z.re, z.im)
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn header_value<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::Format(format!("missing `{key}` line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::Format(format!("expected `{key}` line, found `{line}`")))
}

pub fn decode_text(text: &str) -> Result<StoredMatrix> {
    let mut lines = text.lines();
    if lines.next() != Some(TEXT_HEADER) {
        return Err(Error::Format("missing text matrix header".into()));
    }
    let parse_dim = |value: &str, key: &str| -> Result<usize> {
        value
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("invalid `{key}` value `{value}`")))
    };
    let rows = parse_dim(header_value(lines.next(), "rows")?, "rows")?;
    let cols = parse_dim(header_value(lines.next(), "cols")?, "cols")?;
    let basis_name = header_value(lines.next(), "basis")?.trim();
    let basis = match basis_name {
        "none" => None,
        name => Some(
            Basis::from_name(name)
                .ok_or_else(|| Error::Format(format!("unknown basis `{name}`")))?,
        ),
    };
    let layout = header_value(lines.next(), "layout")?.trim();
    if layout != "row_major" {
        return Err(Error::Format(format!("unsupported layout `{layout}`")));
    }
    let mut matrix = CMat::zeros(rows, cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("missing data row {}", i + 1)))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: invalid number `{t}`", i + 1)))
            })
            .collect::<Result<_>>()?;
        if values.len() != 2 * cols {
            return Err(Error::Format(format!(
                "row {} holds {} numbers, expected {}",
                i + 1,
                values.len(),
                2 * cols
            )));
        }
        for j in 0..cols {
            matrix[(i, j)] = c(values[2 * j], values[2 * j + 1]);
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::Format("trailing data after last row".into()));
    }
    Ok(StoredMatrix { matrix, basis })
}

/// Detects the format from the leading bytes.
pub fn decode(bytes: &[u8]) -> Result<StoredMatrix> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Format("neither binary nor UTF-8 text".into()))?;
        decode_text(text)
    }
}

pub fn encode(matrix: &CMat, basis: Option<Basis>, format: Format) -> Vec<u8> {
    match format {
        Format::Binary => encode_binary(matrix, basis),
        Format::Text => encode_text(matrix, basis).into_bytes(),
    }
}

pub fn save(path: &Path, matrix: &CMat, basis: Option<Basis>) -> Result<()> {
    let bytes = encode(matrix, basis, Format::from_path(path));
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn save_supermatrix(path: &Path, s: &Supermatrix) -> Result<()> {
    save(path, s.matrix(), Some(s.basis()))
}

pub fn load(path: &Path) -> Result<StoredMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn load_supermatrix(path: &Path) -> Result<Supermatrix> {
    load(path)?.into_supermatrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_header_layout() {
        let m = CMat::from_row_slice(1, 2, &[c(1.0, 2.0), c(3.0, 4.0)]);
        let bytes = encode_binary(&m, Some(Basis::ProductOperator));
        assert_eq!(&bytes[..8], b"QPTMAT01");
        assert_eq!(bytes.len(), 8 + 16 + 2 + 32);
        assert_eq!(bytes[24], 1);
        assert_eq!(f64::from_le_bytes(bytes[42..50].try_into().unwrap()), 3.0);
    }

    #[test]
    fn truncated_and_garbage_inputs_fail() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0); 4]);
        let bytes = encode_binary(&m, None);
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode(b"hello"), Err(Error::Format(_))));
        let text = encode_text(&m, None);
        let broken = text.replace("layout row_major", "layout column_major");
        assert!(matches!(decode(broken.as_bytes()), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trips_are_exact(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6, text in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random::ginibre(rows, cols, &mut rng) * c(1e-7, 0.0);
            let format = if text { Format::Text } else { Format::Binary };
            let stored = decode(&encode(&m, Some(Basis::Zeeman), format)).unwrap();
            prop_assert_eq!(stored.basis, Some(Basis::Zeeman));
            prop_assert_eq!(stored.matrix, m);
        }
    }
}
