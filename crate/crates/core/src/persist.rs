//! Binary artifact container shared by every saved model.
//!
//! Layout: 8-byte magic, little-endian u32 format version, length-prefixed
//! kind string, kind-specific payload, then a SHA-256 digest of everything
//! before it. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub(crate) const MAGIC: &[u8; 8] = b"VERSEMDL";
pub(crate) const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(kind: &str) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.put_u32(VERSION);
        w.put_str(kind);
        w
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_str(&mut self, s: &str) {
        self.put_u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn put_f64s(&mut self, values: &[f64]) {
        self.put_u64(values.len() as u64);
        for &v in values {
            self.put_f64(v);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn open(bytes: &'a [u8], kind: &str) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::format("artifact truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if &body[..MAGIC.len()] != MAGIC {
            return Err(Error::format("bad magic"));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format("checksum mismatch (truncated or corrupted)"));
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.get_u32()?;
        if version != VERSION {
            return Err(Error::format(format!(
                "unsupported format version {version} (expected {VERSION})"
            )));
        }
        let found = r.get_str()?;
        if found != kind {
            return Err(Error::format(format!(
                "artifact kind is {found:?}, expected {kind:?}"
            )));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format("unexpected end of artifact"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn get_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn get_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn get_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn get_len(&mut self) -> Result<usize> {
        let n = self.get_u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(Error::format("length prefix exceeds artifact size"));
        }
        Ok(n as usize)
    }

    pub fn get_str(&mut self) -> Result<String> {
        let n = self.get_len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("invalid utf-8"))
    }

    pub fn get_f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.get_len()?;
        (0..n).map(|_| self.get_f64()).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format("trailing bytes in artifact"));
        }
        Ok(())
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::format(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Short content hash used as a model identifier in provenance records.
pub(crate) fn content_id(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let mut w = Writer::new("demo");
        w.put_u32(7);
        w.put_f64s(&[1.5, -2.0]);
        w.put_str("héllo");
        let bytes = w.finish();

        let mut r = Reader::open(&bytes, "demo").unwrap();
        assert_eq!(r.get_u32().unwrap(), 7);
        assert_eq!(r.get_f64s().unwrap(), vec![1.5, -2.0]);
        assert_eq!(r.get_str().unwrap(), "héllo");
        r.finish().unwrap();

        assert!(Reader::open(&bytes, "other").is_err());
        assert!(Reader::open(&bytes[..bytes.len() - 3], "demo").is_err());
        let mut flipped = bytes.clone();
        flipped[14] ^= 1;
        assert!(Reader::open(&flipped, "demo").is_err());
    }
}
