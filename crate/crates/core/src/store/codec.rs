//! Little-endian cursor shared by the snapshot and mask formats.

use crate::error::{Error, Result};

pub(crate) const VERSION: u16 = 1;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated {what}: need {n} bytes, {} remain (file length {})",
                    self.remaining(),
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn header(&mut self, magic: &[u8; 4]) -> Result<u32> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(Error::format(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(m),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let at = self.pos;
        let version = self.u16("version")?;
        if version != VERSION {
            return Err(Error::format(
                at as u64,
                format!("unsupported format version {version}"),
            ));
        }
        self.u32("layer count")
    }

    /// Layer name, rank and dims; returns the element count with overflow checked.
    pub fn layer_head(&mut self) -> Result<(String, Vec<usize>, usize)> {
        let name_len = self.u16("name length")? as usize;
        let at = self.pos;
        let name = std::str::from_utf8(self.take(name_len, "layer name")?)
            .map_err(|_| Error::format(at as u64, "layer name is not UTF-8"))?
            .to_string();
        let rank = self.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32("dimension")? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(self.pos as u64, format!("dims {dims:?} overflow")))?;
        Ok((name, dims, count))
    }

    pub fn metadata<M: serde::de::DeserializeOwned>(&mut self) -> Result<M> {
        let len = self.u32("metadata length")? as usize;
        let at = self.pos;
        let raw = self.take(len, "metadata")?;
        let meta = serde_json::from_slice(raw)
            .map_err(|e| Error::format(at as u64, format!("metadata JSON: {e}")))?;
        if self.remaining() != 0 {
            return Err(Error::format(
                self.pos as u64,
                format!("{} trailing bytes after metadata", self.remaining()),
            ));
        }
        Ok(meta)
    }
}

pub(crate) fn put_header(out: &mut Vec<u8>, magic: &[u8; 4], layers: usize) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers as u32).to_le_bytes());
}

pub(crate) fn put_layer_head(out: &mut Vec<u8>, name: &str, dims: &[usize]) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::arg(format!("layer name too long: {name}")))?;
    let rank = u8::try_from(dims.len()).map_err(|_| Error::arg("rank exceeds 255"))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(rank);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::arg("dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}

pub(crate) fn put_metadata<M: serde::Serialize>(out: &mut Vec<u8>, meta: &M) {
    let json = serde_json::to_vec(meta).expect("metadata serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
}
