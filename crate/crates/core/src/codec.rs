//! Little-endian byte packing for the dataset and model file formats.

use crate::error::{Error, Result};

pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        ByteWriter { buf: Vec::new() }
    }

    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize_as_u32(&mut self, v: usize) -> Result<()> {
        u32::try_from(v)
            .map(|v| self.u32(v))
            .map_err(|_| Error::Validation(format!("value {v} exceeds the u32 format field")))
    }

    /// Append a CRC32 of everything written so far and return the
    /// finished buffer.
    pub fn finish_with_crc(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    /// Verify the trailing CRC32 and expose everything before it.
    pub fn with_crc(buf: &'a [u8], what: &'static str) -> Result<Self> {
        if buf.len() < 4 {
            return Err(format_err(what, "truncated file"));
        }
        let (body, tail) = buf.split_at(buf.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(format_err(what, "checksum failure"));
        }
        Ok(ByteReader {
            buf: body,
            pos: 0,
            what,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(format_err(self.what, "truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len())? != magic {
            return Err(format_err(self.what, "bad magic bytes"));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn len_u32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err(self.what, "trailing bytes after payload"));
        }
        Ok(())
    }
}

fn format_err(what: &'static str, msg: &str) -> Error {
    match what {
        "model" => Error::ModelFormat(msg.into()),
        _ => Error::DatasetFormat(msg.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_crc() {
        let mut w = ByteWriter::new();
        w.raw(b"TEST");
        w.u8(7);
        w.u32(123456);
        w.u64(u64::MAX - 1);
        w.f32(1.5);
        w.f64(-0.25);
        let bytes = w.finish_with_crc();

        let mut r = ByteReader::with_crc(&bytes, "dataset").unwrap();
        r.expect_magic(b"TEST").unwrap();
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u32().unwrap(), 123456);
        assert_eq!(r.u64().unwrap(), u64::MAX - 1);
        assert_eq!(r.f32().unwrap(), 1.5);
        assert_eq!(r.f64().unwrap(), -0.25);
        r.done().unwrap();
    }

    #[test]
    fn corruption_is_detected() {
        let mut w = ByteWriter::new();
        w.u64(42);
        let mut bytes = w.finish_with_crc();
        bytes[3] ^= 0x01;
        assert!(ByteReader::with_crc(&bytes, "dataset").is_err());
    }
}
