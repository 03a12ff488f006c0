//! Little-endian binary helpers and the section-tagged model container.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Magic of the model container.
pub const MODEL_MAGIC: &[u8; 8] = b"ROMMODL1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Default, Clone)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.buf.reserve(8 * v.len());
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
        self
    }

    pub fn len_u32(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("dimension fits in u32"))
    }

    /// `rows`, `cols`, then column-major entries.
    pub fn matrix(&mut self, m: &Matrix) -> &mut Self {
        self.len_u32(m.rows()).len_u32(m.cols()).f64s(m.as_slice())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over a byte slice whose errors report absolute file offsets.
#[derive(Debug, Clone)]
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self::with_base(data, 0)
    }

    /// Reader whose reported offsets start at `base`.
    pub fn with_base(data: &'a [u8], base: u64) -> Self {
        Self { data, pos: 0, base }
    }

    pub fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset(),
            message: message.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!(
                "truncated: need {n} bytes, {} remain",
                self.remaining()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| self.error("array length overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn len_u32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn matrix(&mut self) -> Result<Matrix> {
        let at = self.offset();
        let rows = self.len_u32()?;
        let cols = self.len_u32()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| self.error("matrix size overflows"))?;
        let data = self.f64s(n)?;
        Matrix::from_col_major(rows, cols, data).map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Ordered list of `(tag, payload)` sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    sections: Vec<([u8; 8], Vec<u8>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tag: &[u8; 8], payload: Vec<u8>) {
        self.sections.push((*tag, payload));
    }

    pub fn get(&self, tag: &[u8; 8]) -> Option<&[u8]> {
        self.sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, p)| p.as_slice())
    }

    /// Payload of `tag` plus its absolute offset in the encoded container.
    pub fn section(&self, tag: &[u8; 8]) -> Result<ByteReader<'_>> {
        let mut offset = 16u64;
        for (t, p) in &self.sections {
            offset += 16;
            if t == tag {
                return Ok(ByteReader::with_base(p, offset));
            }
            offset += p.len() as u64;
        }
        Err(Error::CorruptModel(format!(
            "missing section {}",
            String::from_utf8_lossy(tag)
        )))
    }

    pub fn tags(&self) -> Vec<[u8; 8]> {
        self.sections.iter().map(|(t, _)| *t).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MODEL_MAGIC).u32(MODEL_VERSION).len_u32(self.sections.len());
        for (tag, payload) in &self.sections {
            w.bytes(tag).u64(payload.len() as u64).bytes(payload);
        }
        w.finish()
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data);
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected ROMMODL1".into(),
            });
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format {
                offset: 8,
                message: format!("unsupported version {version}"),
            });
        }
        let count = r.len_u32()?;
        let mut sections = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let tag: [u8; 8] = r.take(8)?.try_into().expect("8 bytes");
            let len = r.u64()?;
            let len = usize::try_from(len).map_err(|_| r.error("section too large"))?;
            sections.push((tag, r.take(len)?.to_vec()));
        }
        r.expect_end()?;
        Ok(Self { sections })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&data)
    }
}

/// Float with 17 significant digits, enough to round-trip any f64.
pub fn csv_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let mut c = Container::new();
        let mut w = ByteWriter::new();
        w.u32(7).f64s(&[1.5, -2.0]).matrix(&Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        c.push(b"SECTIONA", w.finish());
        c.push(b"SECTIONB", vec![]);
        let bytes = c.encode();
        let back = Container::decode(&bytes).unwrap();
        assert_eq!(back, c);
        let mut r = back.section(b"SECTIONA").unwrap();
        assert_eq!(r.offset(), 32);
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.f64s(2).unwrap(), vec![1.5, -2.0]);
        assert_eq!(r.matrix().unwrap()[(1, 0)], 3.0);
        r.expect_end().unwrap();
        assert!(matches!(back.section(b"MISSING!"), Err(Error::CorruptModel(_))));
    }

    #[test]
    fn csv_floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02e23, 5e-324, 0.0] {
            assert_eq!(csv_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(csv_float(f64::INFINITY), "inf");
    }

    #[test]
    fn truncation_reports_offset() {
        let mut c = Container::new();
        c.push(b"SECTIONA", vec![0; 10]);
        let bytes = c.encode();
        match Container::decode(&bytes[..bytes.len() - 3]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 32),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Container::decode(&bad), Err(Error::Format { offset: 0, .. })));
    }
}
