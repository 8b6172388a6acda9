//! Non-overlapping vertical strips cut from co-registered B-scan pairs.

use serde::{Deserialize, Serialize};

use crate::datapipe::volume::Volume;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripDims {
    pub height: usize,
    pub width: usize,
}

impl Default for StripDims {
    fn default() -> Self {
        StripDims {
            height: 384,
            width: 128,
        }
    }
}

impl StripDims {
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StripOrigin {
    pub volume: String,
    pub slice: usize,
    pub row: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StripPair {
    pub structure: Vec<f32>,
    pub flow: Vec<f32>,
    pub dims: StripDims,
    pub origin: StripOrigin,
}

/// First row of the strip window for a B-scan whose retina band is centred
/// at `band_mid`, clamped to the volume.
pub fn anchor_row(depth: usize, strip_height: usize, band_mid: Option<f64>) -> usize {
    if depth <= strip_height {
        return 0;
    }
    let mid = band_mid.unwrap_or(depth as f64 / 2.0);
    let top = (mid - strip_height as f64 / 2.0).round();
    top.clamp(0.0, (depth - strip_height) as f64) as usize
}

/// Cuts `floor(W / strip.width)` strips per B-scan, dropping the right
/// remainder. `band_mid` gives a per-slice retina midpoint used to anchor the
/// strip rows when the volume is taller than a strip.
pub fn slice_strips(
    structure: &Volume,
    flow: &Volume,
    volume_id: &str,
    strip: StripDims,
    band_mid: Option<&[f64]>,
) -> Result<Vec<StripPair>> {
    let d = structure.dims();
    if flow.dims() != d {
        return Err(Error::Shape(format!(
            "volume {volume_id}: structure {d} vs flow {}",
            flow.dims()
        )));
    }
    if strip.height == 0 || strip.width == 0 {
        return Err(Error::Config("strip dims must be positive".into()));
    }
    if d.width < strip.width || d.depth < strip.height {
        return Err(Error::Shape(format!(
            "volume {volume_id} ({d}) is smaller than one {}x{} strip",
            strip.height, strip.width
        )));
    }
    if let Some(m) = band_mid {
        if m.len() != d.slices {
            return Err(Error::Shape(format!(
                "volume {volume_id}: {} band midpoints for {} slices",
                m.len(),
                d.slices
            )));
        }
    }
    let per_scan = d.width / strip.width;
    let mut out = Vec::with_capacity(d.slices * per_scan);
    for s in 0..d.slices {
        let row = anchor_row(d.depth, strip.height, band_mid.map(|m| m[s]));
        for j in 0..per_scan {
            let column = j * strip.width;
            let cut = |v: &Volume| {
                let scan = v.bscan(s);
                let mut buf = Vec::with_capacity(strip.len());
                for z in row..row + strip.height {
                    buf.extend_from_slice(&scan[z * d.width + column..z * d.width + column + strip.width]);
                }
                buf
            };
            out.push(StripPair {
                structure: cut(structure),
                flow: cut(flow),
                dims: strip,
                origin: StripOrigin {
                    volume: volume_id.to_owned(),
                    slice: s,
                    row,
                    column,
                },
            });
        }
    }
    Ok(out)
}

/// Places strips of one B-scan back at their origins. Returns
/// `(structure, flow)` rows of width `columns`; uncovered pixels stay zero.
pub fn assemble_bscan(strips: &[&StripPair], columns: usize) -> Result<(Vec<f32>, Vec<f32>)> {
    let first = strips
        .first()
        .ok_or_else(|| Error::Input("no strips to assemble".into()))?;
    let h = first.dims.height;
    let mut s_out = vec![0.0; h * columns];
    let mut f_out = vec![0.0; h * columns];
    for st in strips {
        let w = st.dims.width;
        if st.dims.height != h || st.origin.column + w > columns {
            return Err(Error::Shape("strip does not fit the assembled B-scan".into()));
        }
        for y in 0..h {
            let dst = y * columns + st.origin.column;
            s_out[dst..dst + w].copy_from_slice(&st.structure[y * w..(y + 1) * w]);
            f_out[dst..dst + w].copy_from_slice(&st.flow[y * w..(y + 1) * w]);
        }
    }
    Ok((s_out, f_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::volume::{VolDims, VolumeKind};

    fn vols(dims: VolDims) -> (Volume, Volume) {
        let a = (0..dims.len()).map(|i| (i % 97) as f32 / 96.0).collect();
        let b = (0..dims.len()).map(|i| (i % 89) as f32 / 88.0).collect();
        (
            Volume::new(dims, a, VolumeKind::Structure, "").unwrap(),
            Volume::new(dims, b, VolumeKind::Flow, "").unwrap(),
        )
    }

    #[test]
    fn strip_counts() {
        let strip = StripDims { height: 8, width: 128 };
        let (s, f) = vols(VolDims::new(2, 8, 768));
        assert_eq!(slice_strips(&s, &f, "a", strip, None).unwrap().len(), 12);
        let (s, f) = vols(VolDims::new(1, 8, 500));
        let strips = slice_strips(&s, &f, "b", strip, None).unwrap();
        assert_eq!(strips.len(), 3);
        assert_eq!(500 - 3 * 128, 116);
        assert!(strips.iter().all(|p| p.origin.column % 128 == 0));
    }

    #[test]
    fn too_narrow_names_volume() {
        let (s, f) = vols(VolDims::new(1, 8, 100));
        let err = slice_strips(&s, &f, "narrow-vol", StripDims { height: 8, width: 128 }, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("narrow-vol"));
    }

    #[test]
    fn reassembly_reproduces_cropped_bscan() {
        let dims = VolDims::new(2, 12, 70);
        let (s, f) = vols(dims);
        let strip = StripDims { height: 8, width: 16 };
        let mids = [7.0, 2.0];
        let strips = slice_strips(&s, &f, "v", strip, Some(&mids)).unwrap();
        for slice in 0..2 {
            let mine: Vec<&StripPair> = strips.iter().filter(|p| p.origin.slice == slice).collect();
            let row = mine[0].origin.row;
            assert_eq!(row, if slice == 0 { 3 } else { 0 });
            let (sa, fa) = assemble_bscan(&mine, 64).unwrap();
            for y in 0..8 {
                for x in 0..64 {
                    assert_eq!(sa[y * 64 + x], s.at(slice, row + y, x));
                    assert_eq!(fa[y * 64 + x], f.at(slice, row + y, x));
                }
            }
        }
    }

    #[test]
    fn anchor_is_noop_when_heights_match() {
        assert_eq!(anchor_row(384, 384, Some(10.0)), 0);
        assert_eq!(anchor_row(500, 384, Some(490.0)), 116);
        assert_eq!(anchor_row(500, 384, Some(100.0)), 0);
    }
}
