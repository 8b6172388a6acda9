//! Scalar volumes in (slice, depth, width) order and their binary file format.
//!
//! Layout: a 64-byte header, a UTF-8 JSON metadata block, then the payload as
//! little-endian f32 in (slice, depth, width) order.
//!
//! | bytes  | field                                |
//! |--------|--------------------------------------|
//! | 0..8   | magic `OCTFLVOL`                     |
//! | 8..12  | format version (u32)                 |
//! | 12..16 | kind code (u32)                      |
//! | 16..40 | slices, depth, width (3 x u64)       |
//! | 40..48 | metadata length in bytes (u64)       |
//! | 48..56 | payload length in bytes (u64)        |
//! | 56..64 | reserved, zero                       |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 8] = b"OCTFLVOL";
pub const VOLUME_VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Structure,
    Flow,
    Inferred,
}

impl VolumeKind {
    fn code(self) -> u32 {
        match self {
            VolumeKind::Structure => 0,
            VolumeKind::Flow => 1,
            VolumeKind::Inferred => 2,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(VolumeKind::Structure),
            1 => Some(VolumeKind::Flow),
            2 => Some(VolumeKind::Inferred),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VolumeKind::Structure => "structure",
            VolumeKind::Flow => "flow",
            VolumeKind::Inferred => "inferred",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VolDims {
    pub slices: usize,
    pub depth: usize,
    pub width: usize,
}

impl VolDims {
    pub const fn new(slices: usize, depth: usize, width: usize) -> Self {
        VolDims {
            slices,
            depth,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.slices * self.depth * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bscan_len(&self) -> usize {
        self.depth * self.width
    }

    fn checked_len(&self) -> Option<usize> {
        self.slices.checked_mul(self.depth)?.checked_mul(self.width)
    }
}

impl std::fmt::Display for VolDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.slices, self.depth, self.width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: VolDims,
    data: Vec<f32>,
    pub kind: VolumeKind,
    /// Free-form origin tag: generator seed, config hash or source id.
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    kind: VolumeKind,
    dims: [usize; 3],
    provenance: String,
}

impl Volume {
    /// Builds a volume, rejecting out-of-range or non-finite values.
    pub fn new(
        dims: VolDims,
        data: Vec<f32>,
        kind: VolumeKind,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Shape(format!("volume dims must be positive, got {dims}")));
        }
        if dims.checked_len() != Some(data.len()) {
            return Err(Error::Shape(format!(
                "volume {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input(format!(
                "volume value {} at index {i} is outside [0, 1]",
                data[i]
            )));
        }
        Ok(Volume {
            dims,
            data,
            kind,
            provenance: provenance.into(),
        })
    }

    /// Clamps into [0, 1] first; for generated or inferred data only.
    pub fn from_clamped(
        dims: VolDims,
        mut data: Vec<f32>,
        kind: VolumeKind,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(dims, data, kind, provenance)
    }

    pub fn dims(&self) -> VolDims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, s: usize, z: usize, x: usize) -> f32 {
        self.data[(s * self.dims.depth + z) * self.dims.width + x]
    }

    pub fn bscan(&self, s: usize) -> &[f32] {
        let len = self.dims.bscan_len();
        &self.data[s * len..(s + 1) * len]
    }

    /// New volume whose slice `i` is this volume's slice `order[i]`.
    pub fn permute_slices(&self, order: &[usize]) -> Result<Volume> {
        let mut seen = vec![false; self.dims.slices];
        if order.len() != self.dims.slices
            || order.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::Input("slice order is not a permutation".into()));
        }
        let data = order.iter().flat_map(|&s| self.bscan(s).iter().copied()).collect();
        Ok(Volume {
            data,
            ..self.clone()
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_vec(&Metadata {
            kind: self.kind,
            dims: [self.dims.slices, self.dims.depth, self.dims.width],
            provenance: self.provenance.clone(),
        })
        .expect("metadata serializes");
        let mut buf = Vec::with_capacity(HEADER_LEN + meta.len() + self.data.len() * 4);
        buf.extend_from_slice(VOLUME_MAGIC);
        buf.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.kind.code().to_le_bytes());
        for d in [self.dims.slices, self.dims.depth, self.dims.width] {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        buf.extend_from_slice(&((self.data.len() * 4) as u64).to_le_bytes());
        buf.resize(HEADER_LEN, 0);
        buf.extend_from_slice(&meta);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Volume> {
        let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; HEADER_LEN];
        f.read_exact(&mut header)
            .map_err(|_| Error::format(path, "truncated header"))?;
        if &header[..8] != VOLUME_MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VOLUME_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let kind = VolumeKind::from_code(u32_at(12))
            .ok_or_else(|| Error::format(path, format!("unknown kind code {}", u32_at(12))))?;
        let dims = [u64_at(16), u64_at(24), u64_at(32)];
        let meta_len = u64_at(40);
        let payload_len = u64_at(48);
        let count = dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|c| c.checked_mul(4))
            .filter(|&bytes| bytes <= isize::MAX as u64)
            .ok_or_else(|| Error::format(path, "dims overflow"))?;
        if count != payload_len {
            return Err(Error::format(
                path,
                format!("payload length {payload_len} does not match dims {dims:?}"),
            ));
        }
        let file_len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        if file_len != HEADER_LEN as u64 + meta_len + payload_len {
            return Err(Error::format(
                path,
                format!(
                    "truncated payload: file has {file_len} bytes, header promises {}",
                    HEADER_LEN as u64 + meta_len + payload_len
                ),
            ));
        }
        let mut meta = vec![0u8; meta_len as usize];
        f.read_exact(&mut meta).map_err(|e| Error::io(path, e))?;
        let meta: Metadata = serde_json::from_slice(&meta)
            .map_err(|e| Error::format(path, format!("bad metadata: {e}")))?;
        let vd = VolDims::new(dims[0] as usize, dims[1] as usize, dims[2] as usize);
        if meta.kind != kind || meta.dims != [vd.slices, vd.depth, vd.width] {
            return Err(Error::format(path, "metadata disagrees with header"));
        }
        let mut raw = vec![0u8; payload_len as usize];
        f.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Volume::new(vd, data, kind, meta.provenance).map_err(|e| Error::format(path, e.to_string()))
    }
}
