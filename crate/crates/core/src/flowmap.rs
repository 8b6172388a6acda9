//! Per-B-scan flow inference and en-face projection.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datapipe::{anchor_row, write_pgm, PgmDepth, StripDims, Volume, VolumeKind};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::phantom::{retina_band, RetinaBand};
use crate::tensor::{Dims, Tensor4};

/// How strips tile a B-scan during inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Seams {
    /// Non-overlapping strips; a right remainder is covered by one
    /// right-aligned strip that only writes the uncovered columns.
    Metric,
    /// Strips overlapping by `overlap` columns, linearly cross-faded.
    Feathered { overlap: usize },
}

pub const DISPLAY_OVERLAP: usize = 8;

impl Seams {
    pub fn display() -> Self {
        Seams::Feathered {
            overlap: DISPLAY_OVERLAP,
        }
    }
}

fn strip_columns(width: usize, strip: usize, seams: Seams) -> Result<Vec<usize>> {
    if width < strip {
        return Err(Error::Shape(format!("B-scan width {width} is below strip width {strip}")));
    }
    let stride = match seams {
        Seams::Metric => strip,
        Seams::Feathered { overlap } => {
            if overlap >= strip {
                return Err(Error::Config(format!("overlap {overlap} must be below strip width {strip}")));
            }
            strip - overlap
        }
    };
    let mut cols: Vec<usize> = (0..).map(|j| j * stride).take_while(|&c| c + strip <= width).collect();
    if cols.last().is_none_or(|&c| c + strip < width) {
        cols.push(width - strip);
    }
    Ok(cols)
}

/// Infers a flow volume from a structure volume one B-scan at a time.
///
/// Each B-scan is cut into strips (rows anchored on that B-scan's own retina
/// band), inferred as one batch and reassembled; nothing crosses slices.
/// Rows outside the strip window are zero. Output is clipped to [0, 1].
pub fn infer_volume(net: &Network<f32>, structure: &Volume, strip: StripDims, seams: Seams) -> Result<Volume> {
    let d = structure.dims();
    if d.depth < strip.height {
        return Err(Error::Shape(format!(
            "volume depth {} is below strip height {}",
            d.depth, strip.height
        )));
    }
    net.check_input(Dims::new(1, 1, strip.height, strip.width))?;
    let cols = strip_columns(d.width, strip.width, seams)?;
    let band = retina_band(structure, (0.25, 0.75));
    let mids = band.slice_midpoints();
    let mut out = vec![0.0f32; d.len()];
    for s in 0..d.slices {
        let row = anchor_row(d.depth, strip.height, Some(mids[s]));
        let scan = structure.bscan(s);
        let input = Tensor4::from_fn(Dims::new(cols.len(), 1, strip.height, strip.width), |n, _, y, x| {
            scan[(row + y) * d.width + cols[n] + x]
        });
        let pred = net.predict(&input)?;
        let dst = &mut out[s * d.bscan_len()..(s + 1) * d.bscan_len()];
        match seams {
            Seams::Metric => {
                let mut covered = 0;
                for (n, &c) in cols.iter().enumerate() {
                    for y in 0..strip.height {
                        for x in covered.max(c) - c..strip.width {
                            dst[(row + y) * d.width + c + x] = pred.at(n, 0, y, x);
                        }
                    }
                    covered = c + strip.width;
                }
            }
            Seams::Feathered { overlap } => {
                let mut acc = vec![0.0f64; strip.height * d.width];
                let mut wsum = vec![0.0f64; d.width];
                for (n, &c) in cols.iter().enumerate() {
                    let first = n == 0;
                    let last = n + 1 == cols.len();
                    for x in 0..strip.width {
                        // Ramps rise over the first and fall over the last `overlap` columns.
                        let mut w = 1.0f64;
                        if !first && x < overlap {
                            w = w.min((x + 1) as f64 / (overlap + 1) as f64);
                        }
                        if !last && x >= strip.width - overlap {
                            w = w.min((strip.width - x) as f64 / (overlap + 1) as f64);
                        }
                        wsum[c + x] += w;
                        for y in 0..strip.height {
                            acc[y * d.width + c + x] += w * pred.at(n, 0, y, x) as f64;
                        }
                    }
                }
                for y in 0..strip.height {
                    for x in 0..d.width {
                        dst[(row + y) * d.width + x] = (acc[y * d.width + x] / wsum[x]) as f32;
                    }
                }
            }
        }
    }
    Volume::from_clamped(
        d,
        out,
        VolumeKind::Inferred,
        format!("inferred by {} from {}", net.spec.label(), structure.provenance),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Average,
    Max,
}

impl Projection {
    /// Flow angiograms are conventionally shown as maximum projections;
    /// structure and inferred volumes as averages.
    pub fn default_for(kind: VolumeKind) -> Self {
        match kind {
            VolumeKind::Flow => Projection::Max,
            _ => Projection::Average,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Projection::Average => "average",
            Projection::Max => "max",
        }
    }
}

/// Top-down projection of a volume, `slices x width`, row-major by slice.
#[derive(Clone, Debug, PartialEq)]
pub struct EnFaceMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub projection: Projection,
    pub source: VolumeKind,
    pub band: RetinaBand,
    pub source_hash: String,
}

pub fn volume_hash(v: &Volume) -> String {
    let mut h = Sha256::new();
    for x in v.data() {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn enface(volume: &Volume, band: &RetinaBand, projection: Projection) -> Result<EnFaceMap> {
    let d = volume.dims();
    if band.dims.slices != d.slices || band.dims.width != d.width {
        return Err(Error::Shape(format!("band {} does not cover volume {d}", band.dims)));
    }
    let mut data = Vec::with_capacity(d.slices * d.width);
    for s in 0..d.slices {
        for x in 0..d.width {
            let i = s * d.width + x;
            let (lo, hi) = (band.inner[i], band.outer[i]);
            if lo > hi || hi >= d.depth {
                return Err(Error::Config(format!(
                    "empty or out-of-range band [{lo}, {hi}] at slice {s}, column {x}"
                )));
            }
            let column = (lo..=hi).map(|z| volume.at(s, z, x) as f64);
            let v = match projection {
                Projection::Average => column.sum::<f64>() / (hi - lo + 1) as f64,
                Projection::Max => column.fold(f64::NEG_INFINITY, f64::max),
            };
            data.push(v as f32);
        }
    }
    Ok(EnFaceMap {
        rows: d.slices,
        cols: d.width,
        data,
        projection,
        source: volume.kind,
        band: band.clone(),
        source_hash: volume_hash(volume),
    })
}

impl EnFaceMap {
    pub fn sidecar(&self) -> String {
        let n = self.band.inner.len().max(1) as f64;
        let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / n;
        let mut s = String::new();
        let _ = writeln!(s, "projection {}", self.projection.name());
        let _ = writeln!(s, "source {}", self.source.name());
        let _ = writeln!(s, "rows {}", self.rows);
        let _ = writeln!(s, "cols {}", self.cols);
        let _ = writeln!(
            s,
            "band mean_inner {:.3} mean_outer {:.3} fallback_columns {}",
            mean(&self.band.inner),
            mean(&self.band.outer),
            self.band.fallback.iter().filter(|&&f| f).count()
        );
        let _ = writeln!(s, "source_sha256 {}", self.source_hash);
        s
    }

    /// Writes `<stem>.pgm` and `<stem>.txt`.
    pub fn export(&self, stem: &Path, depth: PgmDepth) -> Result<()> {
        write_pgm(&stem.with_extension("pgm"), self.cols, self.rows, &self.data, depth)?;
        let side = stem.with_extension("txt");
        std::fs::write(&side, self.sidecar()).map_err(|e| Error::io(&side, e))
    }
}
