//! Binary sidecar format shared by every persisted artifact.
//!
//! Layout: magic `DCOK`, version `u32`, dimension `u32`, kind `u8`, then a
//! kind-specific payload. All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DCOK";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum SidecarKind {
    Pca = 1,
    Ortho = 2,
    Pq = 3,
    Hnsw = 4,
    Ivf = 5,
    Models = 6,
}

impl SidecarKind {
    fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::Pca,
            2 => Self::Ortho,
            3 => Self::Pq,
            4 => Self::Hnsw,
            5 => Self::Ivf,
            6 => Self::Models,
            other => return Err(Error::Format(format!("unknown sidecar kind {other}"))),
        })
    }
}

pub struct SidecarWriter<W: Write> {
    inner: W,
}

impl<W: Write> SidecarWriter<W> {
    pub fn new(mut inner: W, kind: SidecarKind, dim: usize) -> Result<Self> {
        inner.write_all(MAGIC)?;
        inner.write_all(&VERSION.to_le_bytes())?;
        inner.write_all(&u32::try_from(dim).map_err(|_| Error::Format("dimension exceeds u32".into()))?.to_le_bytes())?;
        inner.write_all(&[kind as u8])?;
        Ok(Self { inner })
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.inner.write_all(&[v])?)
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }

    pub fn usize32(&mut self, v: usize) -> Result<()> {
        self.u32(u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?)
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }

    pub fn f32(&mut self, v: f32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }

    pub fn f32s(&mut self, vs: &[f32]) -> Result<()> {
        let mut buf = Vec::with_capacity(vs.len() * 4);
        for v in vs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(self.inner.write_all(&buf)?)
    }

    pub fn u32s(&mut self, vs: &[u32]) -> Result<()> {
        let mut buf = Vec::with_capacity(vs.len() * 4);
        for v in vs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(self.inner.write_all(&buf)?)
    }

    pub fn bytes(&mut self, vs: &[u8]) -> Result<()> {
        Ok(self.inner.write_all(vs)?)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct SidecarReader<R: Read> {
    inner: R,
    pub dim: usize,
    pub kind: SidecarKind,
}

impl<R: Read> SidecarReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut inner, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, not a DCOK sidecar".into()));
        }
        let mut word = [0u8; 4];
        read_exact(&mut inner, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported sidecar version {version}")));
        }
        read_exact(&mut inner, &mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        let mut kind = [0u8; 1];
        read_exact(&mut inner, &mut kind)?;
        Ok(Self { inner, dim, kind: SidecarKind::from_u8(kind[0])? })
    }

    pub fn expect(self, kind: SidecarKind) -> Result<Self> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected {kind:?} sidecar, found {:?}", self.kind)));
        }
        Ok(self)
    }

    pub fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        read_exact(&mut self.inner, &mut b)?;
        Ok(b[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        read_exact(&mut self.inner, &mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        read_exact(&mut self.inner, &mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f32(&mut self) -> Result<f32> {
        let mut b = [0u8; 4];
        read_exact(&mut self.inner, &mut b)?;
        Ok(f32::from_le_bytes(b))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut buf = vec![0u8; n * 4];
        read_exact(&mut self.inner, &mut buf)?;
        Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    pub fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let mut buf = vec![0u8; n * 4];
        read_exact(&mut self.inner, &mut buf)?;
        Ok(buf.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        read_exact(&mut self.inner, &mut buf)?;
        Ok(buf)
    }

    /// Errors unless the payload has been consumed completely.
    pub fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after sidecar payload".into())),
        }
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated sidecar".into()),
        _ => Error::Io(e),
    })
}

/// Objects that persist through a sidecar file.
pub trait Sidecar: Sized {
    fn write_to<W: Write>(&self, w: W) -> Result<()>;
    fn read_from<R: Read>(r: R) -> Result<Self>;

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Self::read_from(BufReader::new(f))
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let w = SidecarWriter::new(Vec::new(), SidecarKind::Ivf, 7).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(&bytes[..4], b"DCOK");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &7u32.to_le_bytes());
        assert_eq!(bytes[12], 5);
        assert_eq!(bytes.len(), 13);
        let r = SidecarReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.kind, SidecarKind::Ivf);
        assert_eq!(r.dim, 7);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(SidecarReader::new(&b"NOPE\x01\0\0\0"[..]).is_err());
        assert!(matches!(SidecarReader::new(&b"DCOK\x01\0"[..]), Err(Error::Format(_))));
    }
}
