//! Synthetic paired structure / flow volumes.
//!
//! A phantom is a layered retina with a branching tree of tubular vessels.
//! Structural intensity is `reflectivity x speckle`, with fully developed
//! (exponential) speckle. Repeated acquisitions share the speckle of static
//! tissue; inside vessel lumens each repeat re-draws a fraction `decorrelation`
//! of it. Flow ground truth is the per-voxel speckle variance across repeats.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datapipe::{VolDims, Volume, VolumeKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub slices: usize,
    pub depth: usize,
    pub width: usize,
    /// Inclusive range of second-order trunks.
    pub vessel_count: [usize; 2],
    /// Lumen radius range of second-order trunks, px.
    pub radius_range: [f64; 2],
    /// Child radius as a fraction of its parent's (floored at 1 px).
    pub branch_radius_ratio: f64,
    pub branches_per_vessel: [usize; 2],
    /// Nominal retina band, as fractions of depth.
    pub inner_band: f64,
    pub outer_band: f64,
    /// Amplitude of the smooth band displacement, fraction of depth.
    pub band_undulation: f64,
    pub speckle_contrast: f64,
    pub decorrelation: f64,
    pub repeats: usize,
    /// Std of independent additive noise per repeat.
    pub detector_noise: f64,
    pub lumen_reflectivity: f64,
    pub wall_reflectivity: f64,
    pub shadow_strength: f64,
    pub shadow_min_radius: f64,
    /// Speckle variance mapped to flow 1.0.
    pub flow_ceiling: f64,
    /// Dilation of the detected retina band when masking flow truth, px.
    pub band_margin: usize,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            slices: 24,
            depth: 384,
            width: 384,
            vessel_count: [3, 8],
            radius_range: [3.0, 4.5],
            branch_radius_ratio: 0.75,
            branches_per_vessel: [1, 3],
            inner_band: 0.35,
            outer_band: 0.70,
            band_undulation: 0.03,
            speckle_contrast: 1.0,
            decorrelation: 0.8,
            repeats: 4,
            detector_noise: 0.0,
            lumen_reflectivity: 0.55,
            wall_reflectivity: 1.8,
            shadow_strength: 0.3,
            shadow_min_radius: 2.0,
            flow_ceiling: 0.005,
            band_margin: 2,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    /// Small volumes for single-core training runs.
    pub fn compact() -> Self {
        PhantomConfig {
            slices: 32,
            depth: 64,
            width: 128,
            vessel_count: [3, 6],
            radius_range: [2.0, 3.0],
            inner_band: 0.3,
            outer_band: 0.7,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dims(&self) -> VolDims {
        VolDims::new(self.slices, self.depth, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.slices == 0 || self.depth < 8 || self.width == 0 {
            return bad(format!("phantom dims {} too small", self.dims()));
        }
        if !(0.0 < self.inner_band && self.inner_band < self.outer_band && self.outer_band < 1.0) {
            return bad(format!(
                "need 0 < inner_band < outer_band < 1, got {} / {}",
                self.inner_band, self.outer_band
            ));
        }
        if self.band_undulation < 0.0
            || self.inner_band - self.band_undulation <= 0.0
            || self.outer_band + self.band_undulation >= 1.0
        {
            return bad("band undulation pushes the band out of the volume".into());
        }
        if self.vessel_count[0] == 0 || self.vessel_count[0] > self.vessel_count[1] {
            return bad(format!("bad vessel_count {:?}", self.vessel_count));
        }
        if self.branches_per_vessel[0] > self.branches_per_vessel[1] {
            return bad(format!("bad branches_per_vessel {:?}", self.branches_per_vessel));
        }
        if !(self.radius_range[0] >= 1.0 && self.radius_range[0] <= self.radius_range[1]) {
            return bad(format!("calibers must be >= 1 px, got {:?}", self.radius_range));
        }
        if !(0.0 < self.branch_radius_ratio && self.branch_radius_ratio <= 1.0) {
            return bad("branch_radius_ratio must be in (0, 1]".into());
        }
        if !(self.decorrelation > 0.0 && self.decorrelation <= 1.0) {
            return bad(format!("decorrelation {} outside (0, 1]", self.decorrelation));
        }
        if self.repeats < 2 {
            return bad(format!("need at least 2 repeats, got {}", self.repeats));
        }
        if !(0.0..=1.0).contains(&self.speckle_contrast)
            || self.detector_noise < 0.0
            || self.lumen_reflectivity < 0.0
            || self.wall_reflectivity < 0.0
            || !(0.0..=1.0).contains(&self.shadow_strength)
        {
            return bad("reflectivity, speckle or noise parameter out of range".into());
        }
        if !(self.flow_ceiling > 0.0) {
            return bad("flow_ceiling must be positive".into());
        }
        // Thickest possible lumen plus wall and offset must fit in the band.
        let band_px = (self.outer_band - self.inner_band) * self.depth as f64;
        if 2.0 * self.radius_range[1] + 6.0 > band_px {
            return bad(format!(
                "retina band ({band_px:.1} px) too thin for radius {}",
                self.radius_range[1]
            ));
        }
        Ok(())
    }

    fn band_offset(&self, s: f64, x: f64, phase: (f64, f64)) -> f64 {
        use std::f64::consts::TAU;
        self.band_undulation
            * (0.6 * (TAU * x / self.width as f64 + phase.0).sin()
                + 0.4 * (TAU * s / self.slices as f64 + phase.1).sin())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    /// Branching generation: 2 for trunks, 3 and 4 for branches.
    pub order: u8,
    pub radius: f64,
    pub parent: Option<usize>,
    /// Polyline in (slice, depth, width) voxel coordinates.
    pub centerline: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselTree {
    pub dims: VolDims,
    pub vessels: Vec<Vessel>,
    /// Per voxel: 0 outside lumens, else the order of the (lowest-order) vessel.
    #[serde(with = "rle")]
    pub lumen: Vec<u8>,
}

impl VesselTree {
    pub fn is_lumen(&self, s: usize, z: usize, x: usize) -> bool {
        self.lumen[(s * self.dims.depth + z) * self.dims.width + x] != 0
    }

    pub fn lumen_count(&self) -> usize {
        self.lumen.iter().filter(|&&l| l != 0).count()
    }

    /// En-face (slice x width) footprint: true where any depth is lumen.
    pub fn projected_mask(&self) -> Vec<bool> {
        let d = self.dims;
        let mut out = vec![false; d.slices * d.width];
        for s in 0..d.slices {
            for z in 0..d.depth {
                for x in 0..d.width {
                    if self.is_lumen(s, z, x) {
                        out[s * d.width + x] = true;
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vessel tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: VesselTree =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("vessel tree: {e}")))?;
        if t.lumen.len() != t.dims.len() {
            return Err(Error::Input("vessel tree mask does not match dims".into()));
        }
        Ok(t)
    }
}

mod rle {
    //! Run-length encoding of label masks as `[[label, run], ...]`.
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        let mut runs: Vec<(u8, usize)> = Vec::new();
        for &x in v {
            match runs.last_mut() {
                Some((l, n)) if *l == x => *n += 1,
                _ => runs.push((x, 1)),
            }
        }
        runs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let runs = Vec::<(u8, usize)>::deserialize(d)?;
        Ok(runs
            .into_iter()
            .flat_map(|(l, n)| std::iter::repeat_n(l, n))
            .collect())
    }
}

/// Everything one generator call produces.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub config: PhantomConfig,
    pub structure: Volume,
    pub repeats: Vec<Volume>,
    pub tree: VesselTree,
}

impl Phantom {
    /// Speckle-variance flow, restricted to the detected retina band.
    pub fn flow_truth(&self) -> Result<Volume> {
        let flow = speckle_variance(&self.repeats, self.config.flow_ceiling)?;
        let band = retina_band(&self.structure, (self.config.inner_band, self.config.outer_band));
        let mask = band.mask(self.config.band_margin);
        let data = flow
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Volume::new(flow.dims(), data, VolumeKind::Flow, flow.provenance)
    }
}

const STEP: f64 = 1.5;
const TORTUOSITY: f64 = 0.08;

fn walk(
    rng: &mut ChaCha8Rng,
    start: (f64, f64),
    mut heading: f64,
    max_len: f64,
    bounds: (f64, f64),
) -> Vec<(f64, f64)> {
    let mut pts = vec![start];
    let (mut s, mut x) = start;
    let mut len = 0.0;
    while len < max_len {
        heading += rng.sample::<f64, _>(StandardNormal) * TORTUOSITY;
        s += STEP * heading.sin();
        x += STEP * heading.cos();
        if s < -0.5 || x < -0.5 || s > bounds.0 - 0.5 || x > bounds.1 - 0.5 {
            break;
        }
        pts.push((s, x));
        len += STEP;
    }
    pts
}

fn heading_at(pts: &[(f64, f64)], i: usize) -> f64 {
    let (a, b) = if i + 1 < pts.len() { (pts[i], pts[i + 1]) } else { (pts[i - 1], pts[i]) };
    (b.0 - a.0).atan2(b.1 - a.1)
}

/// Order, radius, parent, centreline and depth jitter of a vessel in progress.
type DraftVessel = (u8, f64, Option<usize>, Vec<(f64, f64)>, f64);

fn grow_tree(cfg: &PhantomConfig, rng: &mut ChaCha8Rng, phase: (f64, f64)) -> Vec<Vessel> {
    let (sd, wd) = (cfg.slices as f64, cfg.width as f64);
    let extent = sd.max(wd);
    let mut flat: Vec<DraftVessel> = Vec::new();
    let trunks = rng.gen_range(cfg.vessel_count[0]..=cfg.vessel_count[1]);
    for _ in 0..trunks {
        // Start on the boundary, head towards an interior point.
        let perimeter = 2.0 * (sd + wd);
        let u = rng.gen_range(0.0..perimeter);
        let start = if u < wd {
            (0.0, u)
        } else if u < wd + sd {
            (u - wd, wd - 1.0)
        } else if u < 2.0 * wd + sd {
            (sd - 1.0, u - wd - sd)
        } else {
            (u - 2.0 * wd - sd, 0.0)
        };
        let target = (
            rng.gen_range(0.2 * sd..0.8 * sd),
            rng.gen_range(0.2 * wd..0.8 * wd),
        );
        let heading = (target.0 - start.0).atan2(target.1 - start.1);
        let radius = rng.gen_range(cfg.radius_range[0]..=cfg.radius_range[1]);
        let pts = walk(rng, start, heading, 2.0 * (sd + wd), (sd, wd));
        let jitter = rng.gen_range(0.0..1.5);
        if pts.len() >= 2 {
            flat.push((2, radius, None, pts, jitter));
        }
    }
    for order in 3u8..=4 {
        let parents: Vec<usize> = (0..flat.len()).filter(|&i| flat[i].0 == order - 1).collect();
        for p in parents {
            let n = rng.gen_range(cfg.branches_per_vessel[0]..=cfg.branches_per_vessel[1]);
            for _ in 0..n {
                let len = flat[p].3.len();
                if len < 4 {
                    continue;
                }
                let at = rng.gen_range(len / 10..=(9 * len / 10).max(len / 10));
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let heading = heading_at(&flat[p].3, at) + side * rng.gen_range(0.5..1.2);
                let reach = extent
                    * if order == 3 {
                        rng.gen_range(0.25..0.6)
                    } else {
                        rng.gen_range(0.15..0.35)
                    };
                let radius = (flat[p].1 * cfg.branch_radius_ratio).max(1.0).min(flat[p].1);
                let start = flat[p].3[at];
                let pts = walk(rng, start, heading, reach, (sd, wd));
                let jitter = rng.gen_range(0.0..1.5);
                if pts.len() >= 2 {
                    flat.push((order, radius, Some(p), pts, jitter));
                }
            }
        }
    }
    flat.into_iter()
        .map(|(order, radius, parent, pts, jitter)| {
            let offset = radius + 1.5 + jitter + (order as f64 - 2.0);
            let centerline = pts
                .into_iter()
                .map(|(s, x)| {
                    let inner = (cfg.inner_band + cfg.band_offset(s, x, phase)) * cfg.depth as f64;
                    [s, inner + offset, x]
                })
                .collect();
            Vessel {
                order,
                radius,
                parent,
                centerline,
            }
        })
        .collect()
}

fn segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

struct Raster {
    lumen: Vec<u8>,
    wall: Vec<bool>,
    /// Per (slice, width): first depth below a large lumen, or usize::MAX.
    shadow_top: Vec<usize>,
}

fn rasterize(cfg: &PhantomConfig, vessels: &[Vessel]) -> Raster {
    let d = cfg.dims();
    let mut lumen = vec![0u8; d.len()];
    let mut wall = vec![false; d.len()];
    let mut shadow_top = vec![usize::MAX; d.slices * d.width];
    let hi = |v: f64, n: usize| (v.ceil().max(0.0) as usize).min(n - 1);
    let lo = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
    for v in vessels {
        let reach = v.radius + 1.0;
        let casts_shadow = v.radius >= cfg.shadow_min_radius;
        for seg in v.centerline.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let s0 = lo(a[0].min(b[0]) - reach, d.slices);
            let s1 = hi(a[0].max(b[0]) + reach, d.slices);
            let z0 = lo(a[1].min(b[1]) - reach, d.depth);
            let z1 = hi(a[1].max(b[1]) + reach, d.depth);
            let x0 = lo(a[2].min(b[2]) - reach, d.width);
            let x1 = hi(a[2].max(b[2]) + reach, d.width);
            for s in s0..=s1 {
                for z in z0..=z1 {
                    for x in x0..=x1 {
                        let dist = segment_distance([s as f64, z as f64, x as f64], a, b);
                        let i = (s * d.depth + z) * d.width + x;
                        if dist <= v.radius {
                            if lumen[i] == 0 || lumen[i] > v.order {
                                lumen[i] = v.order;
                            }
                            if casts_shadow {
                                let col = &mut shadow_top[s * d.width + x];
                                if *col == usize::MAX || *col < z + 1 {
                                    *col = z + 1;
                                }
                            }
                        } else if dist <= reach {
                            wall[i] = true;
                        }
                    }
                }
            }
        }
    }
    Raster {
        lumen,
        wall,
        shadow_top,
    }
}

/// Static reflectivity of layered tissue at depth `z` given the local band.
fn tissue(z: f64, inner: f64, outer: f64, depth: f64) -> f64 {
    if z < inner {
        0.02
    } else if z <= outer {
        let u = (z - inner) / (outer - inner);
        0.22 + 0.18 * (-(u / 0.1).powi(2)).exp() + 0.22 * (-((1.0 - u) / 0.05).powi(2)).exp()
    } else {
        0.02 + 0.10 * (-(z - outer) / (0.1 * depth)).exp()
    }
}

pub fn generate_phantom(config: &PhantomConfig) -> Result<Phantom> {
    config.validate()?;
    let d = config.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let phase = (
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let vessels = grow_tree(config, &mut rng, phase);
    let raster = rasterize(config, &vessels);

    let n = config.repeats;
    let contrast = config.speckle_contrast;
    let rho = config.decorrelation;
    let mut repeats = vec![Vec::with_capacity(d.len()); n];
    for s in 0..d.slices {
        for z in 0..d.depth {
            for x in 0..d.width {
                let off = config.band_offset(s as f64, x as f64, phase);
                let inner = (config.inner_band + off) * d.depth as f64;
                let outer = (config.outer_band + off) * d.depth as f64;
                let i = (s * d.depth + z) * d.width + x;
                let mut base = tissue(z as f64, inner, outer, d.depth as f64);
                let in_lumen = raster.lumen[i] != 0;
                if in_lumen {
                    base *= config.lumen_reflectivity;
                } else if raster.wall[i] {
                    base *= config.wall_reflectivity;
                }
                if z >= raster.shadow_top[s * d.width + x] && !in_lumen {
                    base *= 1.0 - config.shadow_strength;
                }
                let still: f64 = Exp1.sample(&mut rng);
                for rep in repeats.iter_mut() {
                    let e = if in_lumen {
                        let fresh: f64 = Exp1.sample(&mut rng);
                        (1.0 - rho) * still + rho * fresh
                    } else {
                        still
                    };
                    let mut v = base * ((1.0 - contrast) + contrast * e);
                    if config.detector_noise > 0.0 {
                        v += config.detector_noise * rng.sample::<f64, _>(StandardNormal);
                    }
                    rep.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    let provenance = format!("phantom seed={}", config.seed);
    let mean: Vec<f32> = (0..d.len())
        .map(|i| (repeats.iter().map(|r| r[i] as f64).sum::<f64>() / n as f64) as f32)
        .collect();
    let structure = Volume::from_clamped(d, mean, VolumeKind::Structure, provenance.clone())?;
    let repeats = repeats
        .into_iter()
        .map(|r| Volume::new(d, r, VolumeKind::Structure, provenance.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Phantom {
        config: config.clone(),
        structure,
        repeats,
        tree: VesselTree {
            dims: d,
            vessels,
            lumen: raster.lumen,
        },
    })
}

/// Per-voxel population variance across repeats, divided by `ceiling` and
/// clipped to [0, 1].
pub fn speckle_variance(repeats: &[Volume], ceiling: f64) -> Result<Volume> {
    if repeats.len() < 2 {
        return Err(Error::Config(format!(
            "speckle variance needs at least 2 repeats, got {}",
            repeats.len()
        )));
    }
    if !(ceiling > 0.0) {
        return Err(Error::Config("flow ceiling must be positive".into()));
    }
    let d = repeats[0].dims();
    if let Some(r) = repeats.iter().find(|r| r.dims() != d) {
        return Err(Error::Shape(format!("repeat dims {} vs {d}", r.dims())));
    }
    let n = repeats.len() as f64;
    let data = (0..d.len())
        .map(|i| {
            let mean = repeats.iter().map(|r| r.data()[i] as f64).sum::<f64>() / n;
            let var = repeats
                .iter()
                .map(|r| {
                    let e = r.data()[i] as f64 - mean;
                    e * e
                })
                .sum::<f64>()
                / n;
            (var / ceiling).min(1.0) as f32
        })
        .collect();
    Volume::new(d, data, VolumeKind::Flow, repeats[0].provenance.clone())
}

/// Inner/outer retina boundary per A-scan, indexed `[slice * width + x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetinaBand {
    pub dims: VolDims,
    pub inner: Vec<usize>,
    pub outer: Vec<usize>,
    /// A-scans where no band was found and the nominal band was used.
    pub fallback: Vec<bool>,
}

const SMOOTH_DEPTH: usize = 3;
const SMOOTH_WIDTH: usize = 2;
const MIN_CONTRAST: f64 = 0.02;
const BOUNDARY_WINDOW: usize = 8;

fn median_index(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

impl RetinaBand {
    /// The same `[inner, outer]` depth interval on every A-scan.
    pub fn uniform(dims: VolDims, inner: usize, outer: usize) -> Result<Self> {
        if inner > outer || outer >= dims.depth {
            return Err(Error::Config(format!(
                "band [{inner}, {outer}] is empty or outside depth {}",
                dims.depth
            )));
        }
        let n = dims.slices * dims.width;
        Ok(RetinaBand {
            dims,
            inner: vec![inner; n],
            outer: vec![outer; n],
            fallback: vec![false; n],
        })
    }

    pub fn any_fallback(&self) -> bool {
        self.fallback.iter().any(|&f| f)
    }

    pub fn contains(&self, s: usize, z: usize, x: usize) -> bool {
        let i = s * self.dims.width + x;
        z >= self.inner[i] && z <= self.outer[i]
    }

    /// Voxel mask of the band grown by `margin` px in depth.
    pub fn mask(&self, margin: usize) -> Vec<bool> {
        let d = self.dims;
        let mut m = vec![false; d.len()];
        for s in 0..d.slices {
            for x in 0..d.width {
                let i = s * d.width + x;
                let lo = self.inner[i].saturating_sub(margin);
                let hi = (self.outer[i] + margin).min(d.depth - 1);
                for z in lo..=hi {
                    m[(s * d.depth + z) * d.width + x] = true;
                }
            }
        }
        m
    }

    /// Mean band midpoint of each B-scan.
    pub fn slice_midpoints(&self) -> Vec<f64> {
        let w = self.dims.width;
        (0..self.dims.slices)
            .map(|s| {
                (0..w)
                    .map(|x| (self.inner[s * w + x] + self.outer[s * w + x]) as f64 / 2.0)
                    .sum::<f64>()
                    / w as f64
            })
            .collect()
    }
}

/// Detects the bright retina band per A-scan. Each B-scan is box-smoothed
/// (7 px deep, 5 px wide) and thresholded halfway between the medians of its
/// column minima and column maxima; the band runs from the first to the last
/// row above the threshold. Both boundaries are then replaced by their
/// median over the detected A-scans within 8 columns, so bright vessel walls
/// and shadows cannot pull single A-scans off the band. A-scans without a
/// crossing, and whole B-scans without contrast, fall back to `nominal`
/// (fractions of depth) and are flagged.
pub fn retina_band(structure: &Volume, nominal: (f64, f64)) -> RetinaBand {
    let d = structure.dims();
    let mut inner = Vec::with_capacity(d.slices * d.width);
    let mut outer = Vec::with_capacity(d.slices * d.width);
    let mut fallback = Vec::with_capacity(d.slices * d.width);
    let nominal_inner = ((nominal.0 * d.depth as f64).round() as usize).min(d.depth - 1);
    let nominal_outer = ((nominal.1 * d.depth as f64).round() as usize).clamp(nominal_inner, d.depth - 1);
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    for s in 0..d.slices {
        let smooth = box_smooth(structure.bscan(s), d.depth, d.width);
        let (mut mins, mut maxs) = (vec![f64::INFINITY; d.width], vec![f64::NEG_INFINITY; d.width]);
        for (i, &v) in smooth.iter().enumerate() {
            let x = i % d.width;
            mins[x] = mins[x].min(v);
            maxs[x] = maxs[x].max(v);
        }
        let (lo, hi) = (median(mins), median(maxs));
        let thr = 0.5 * (lo + hi);
        let mut raw: Vec<Option<(usize, usize)>> = vec![None; d.width];
        for x in 0..d.width {
            let above = |z: &usize| smooth[z * d.width + x] > thr;
            let found = if hi - lo < MIN_CONTRAST {
                None
            } else {
                (0..d.depth).find(above).zip((0..d.depth).rev().find(above))
            };
            raw[x] = found;
        }
        for x in 0..d.width {
            let window = &raw[x.saturating_sub(BOUNDARY_WINDOW)..(x + BOUNDARY_WINDOW + 1).min(d.width)];
            let firsts: Vec<usize> = window.iter().flatten().map(|b| b.0).collect();
            let lasts: Vec<usize> = window.iter().flatten().map(|b| b.1).collect();
            if raw[x].is_some() {
                let (a, b) = (median_index(firsts), median_index(lasts));
                inner.push(a);
                outer.push(b.max(a));
                fallback.push(false);
            } else {
                inner.push(nominal_inner);
                outer.push(nominal_outer);
                fallback.push(true);
            }
        }
    }
    RetinaBand {
        dims: d,
        inner,
        outer,
        fallback,
    }
}

fn box_smooth(scan: &[f32], depth: usize, width: usize) -> Vec<f64> {
    // Separable mean over the in-bounds part of the window.
    let mut rows = vec![0.0f64; depth * width];
    for z in 0..depth {
        for x in 0..width {
            let a = x.saturating_sub(SMOOTH_WIDTH);
            let b = (x + SMOOTH_WIDTH).min(width - 1);
            let sum: f64 = scan[z * width + a..=z * width + b].iter().map(|&v| v as f64).sum();
            rows[z * width + x] = sum / (b - a + 1) as f64;
        }
    }
    let mut out = vec![0.0f64; depth * width];
    for z in 0..depth {
        let a = z.saturating_sub(SMOOTH_DEPTH);
        let b = (z + SMOOTH_DEPTH).min(depth - 1);
        for x in 0..width {
            let sum: f64 = (a..=b).map(|k| rows[k * width + x]).sum();
            out[z * width + x] = sum / (b - a + 1) as f64;
        }
    }
    out
}
