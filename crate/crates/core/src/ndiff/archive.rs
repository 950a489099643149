//! Binary parameter archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "WLKARCH\0"
//! version    u32
//! fingerprint 32 bytes
//! meta_len   u32, then meta_len bytes of UTF-8 (JSON metadata)
//! groups     u32
//! per group: name_len u16, name bytes, ndim u8, ndim × u64 dims,
//!            product(dims) × f64 values
//! ```

use std::io::{Read, Write};

use super::{Array, NdiffError, ParamSet};
use crate::Scalar;

pub const ARCHIVE_MAGIC: &[u8; 8] = b"WLKARCH\0";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub fingerprint: [u8; 32],
    pub metadata: String,
    pub groups: ParamSet<f64>,
}

fn io_err(e: std::io::Error) -> NdiffError {
    NdiffError::Archive(e.to_string())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], NdiffError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

impl Archive {
    pub fn new<T: Scalar>(fingerprint: [u8; 32], metadata: String, params: &ParamSet<T>) -> Self {
        Self {
            fingerprint,
            metadata,
            groups: params.cast(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), NdiffError> {
        let mut buf = Vec::with_capacity(64 + self.groups.size() * 8);
        buf.extend_from_slice(ARCHIVE_MAGIC);
        buf.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.fingerprint);
        buf.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        buf.extend_from_slice(self.metadata.as_bytes());
        buf.extend_from_slice(&(self.groups.len() as u32).to_le_bytes());
        for (name, a) in self.groups.iter() {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(a.shape().len() as u8);
            for &d in a.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in a.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(io_err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, NdiffError> {
        if &read_exact::<8>(r)? != ARCHIVE_MAGIC {
            return Err(NdiffError::Archive("not a parameter archive (bad magic)".into()));
        }
        let version = u32::from_le_bytes(read_exact(r)?);
        if version != ARCHIVE_VERSION {
            return Err(NdiffError::Archive(format!("unsupported archive version {version}")));
        }
        let fingerprint = read_exact::<32>(r)?;
        let meta_len = u32::from_le_bytes(read_exact(r)?) as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta).map_err(io_err)?;
        let metadata = String::from_utf8(meta).map_err(|e| NdiffError::Archive(e.to_string()))?;
        let count = u32::from_le_bytes(read_exact(r)?);
        let mut groups = ParamSet::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(read_exact(r)?) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(io_err)?;
            let name = String::from_utf8(name).map_err(|e| NdiffError::Archive(e.to_string()))?;
            let ndim = read_exact::<1>(r)?[0] as usize;
            let shape = (0..ndim)
                .map(|_| read_exact::<8>(r).map(|b| u64::from_le_bytes(b) as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 8];
            r.read_exact(&mut raw).map_err(io_err)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            groups.insert(name, Array::new(shape, data)?);
        }
        Ok(Self {
            fingerprint,
            metadata,
            groups,
        })
    }
}
