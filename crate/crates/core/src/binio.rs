// Little-endian helpers shared by the EMB1 and TEM1 formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct Reader<R> {
    inner: R,
    what: &'static str,
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R, what: &'static str) -> Self {
        Reader { inner, what }
    }

    pub fn bytes<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| self.eof(e, field))?;
        Ok(buf)
    }

    pub fn vec(&mut self, len: usize, field: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(|e| self.eof(e, field))?;
        Ok(buf)
    }

    pub fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.bytes::<1>(field)?[0])
    }

    pub fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(field)?))
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(field)?))
    }

    pub fn i32(&mut self, field: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.bytes(field)?))
    }

    pub fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(field)?))
    }

    pub fn f32(&mut self, field: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(field)?))
    }

    pub fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(field)?))
    }

    pub fn string(&mut self, field: &str) -> Result<String> {
        let len = self.u16(field)? as usize;
        let raw = self.vec(len, field)?;
        String::from_utf8(raw).map_err(|_| Error::Malformed(format!("{}: {field} is not UTF-8", self.what)))
    }

    pub fn rest(&mut self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.inner
            .read_to_end(&mut buf)
            .map_err(|e| Error::Malformed(format!("{}: {e}", self.what)))?;
        Ok(buf)
    }

    /// Succeeds only if the stream is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Malformed(format!("{}: trailing bytes", self.what))),
            Err(e) => Err(Error::Malformed(format!("{}: {e}", self.what))),
        }
    }

    fn eof(&self, e: std::io::Error, field: &str) -> Error {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(format!("{} ended while reading {field}", self.what))
        } else {
            Error::Malformed(format!("{}: {e}", self.what))
        }
    }
}

pub(crate) fn put_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "string longer than 65535 bytes"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}
