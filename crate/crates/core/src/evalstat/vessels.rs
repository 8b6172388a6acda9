//! Vessel-order visibility tables and square sampling.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalstat::paired::fisher_exact;
use crate::phantom::VesselTree;

pub const ORDERS: [u8; 3] = [2, 3, 4];

/// Published clinical p values for deep-learning maps versus other
/// modalities: (order, modality, p). Shown beside desk results only.
pub const REFERENCE_P_VALUES: [(u8, &str, f64); 3] =
    [(3, "color", 0.0320), (4, "color", 1.86e-5), (4, "FA", 5.01e-4)];

/// Identified / total vessel counts per modality and order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselOrderTable {
    pub modalities: Vec<String>,
    /// `counts[order_index][modality] = (identified, total)`, order index over 2, 3, 4.
    pub counts: [Vec<(u64, u64)>; 3],
}

impl VesselOrderTable {
    /// Second-order counts from the clinical reading: 35, 39 and 40 of 40
    /// vessels for color, FA and deep learning. Higher orders are unpublished.
    pub fn clinical_second_order() -> Self {
        VesselOrderTable {
            modalities: vec!["color".into(), "FA".into(), "deep learning".into()],
            counts: [vec![(35, 40), (39, 40), (40, 40)], vec![], vec![]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (oi, row) in self.counts.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            if row.len() != self.modalities.len() {
                return Err(Error::Input(format!(
                    "order {}: {} counts for {} modalities",
                    ORDERS[oi],
                    row.len(),
                    self.modalities.len()
                )));
            }
            let total = row[0].1;
            for (m, &(id, t)) in row.iter().enumerate() {
                if t != total {
                    return Err(Error::Input(format!(
                        "order {}: {} has total {t}, expected {total}",
                        ORDERS[oi], self.modalities[m]
                    )));
                }
                if id > t {
                    return Err(Error::Input(format!(
                        "order {}: {} identifies {id} of {t}",
                        ORDERS[oi], self.modalities[m]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseFisher {
    pub order: u8,
    pub first: String,
    pub second: String,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VesselOrderReport {
    pub table: VesselOrderTable,
    /// `percent[order_index][modality]`, absent for orders without vessels.
    pub percent: [Vec<Option<f64>>; 3],
    pub pairwise: Vec<PairwiseFisher>,
}

impl VesselOrderReport {
    pub fn render(&self) -> String {
        let t = &self.table;
        let mut s = String::from("vessel order visibility\n");
        let _ = writeln!(s, "order,{}", t.modalities.join(","));
        for (oi, row) in t.counts.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let cells: Vec<String> = row
                .iter()
                .zip(&self.percent[oi])
                .map(|(&(id, tot), pct)| match pct {
                    Some(p) => format!("{id}/{tot} ({p:.1}%)"),
                    None => format!("{id}/{tot} (n/a)"),
                })
                .collect();
            let _ = writeln!(s, "{},{}", ORDERS[oi], cells.join(","));
        }
        s.push_str("pairwise fisher exact\n");
        for f in &self.pairwise {
            let _ = writeln!(s, "order {}: {} vs {} p={:.4e}", f.order, f.first, f.second, f.p);
        }
        s.push_str("clinical reference (deep learning vs modality)\n");
        for (order, other, p) in REFERENCE_P_VALUES {
            let _ = writeln!(s, "order {order}: {other} p={p:.3e}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("order,first,second,p\n");
        for f in &self.pairwise {
            let _ = writeln!(s, "{},{},{},{:e}", f.order, f.first, f.second, f.p);
        }
        s
    }
}

pub fn vessel_order_report(table: &VesselOrderTable) -> Result<VesselOrderReport> {
    table.validate()?;
    let mut percent: [Vec<Option<f64>>; 3] = Default::default();
    let mut pairwise = Vec::new();
    for (oi, row) in table.counts.iter().enumerate() {
        percent[oi] = row
            .iter()
            .map(|&(id, t)| (t > 0).then(|| 100.0 * id as f64 / t as f64))
            .collect();
        for i in 0..row.len() {
            for j in i + 1..row.len() {
                let (a, ta) = row[i];
                let (b, tb) = row[j];
                if ta + tb == 0 {
                    continue;
                }
                pairwise.push(PairwiseFisher {
                    order: ORDERS[oi],
                    first: table.modalities[i].clone(),
                    second: table.modalities[j].clone(),
                    p: fisher_exact([[a, ta - a], [b, tb - b]])?,
                });
            }
        }
    }
    Ok(VesselOrderReport {
        table: table.clone(),
        percent,
        pairwise,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Square {
    pub row: usize,
    pub col: usize,
    pub side: usize,
}

impl Square {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.side && c >= self.col && c < self.col + self.side
    }

    /// Row-major pixel indices inside the square of a `width`-wide image.
    pub fn indices(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row..self.row + self.side)
            .flat_map(move |r| (self.col..self.col + self.side).map(move |c| r * width + c))
    }
}

/// `count` uniformly placed squares lying fully inside a `rows x cols` image.
pub fn sample_squares(rows: usize, cols: usize, side: usize, count: usize, seed: u64) -> Result<Vec<Square>> {
    if side == 0 || side > rows || side > cols {
        return Err(Error::Config(format!(
            "square side {side} does not fit a {rows}x{cols} map"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| Square {
            row: rng.gen_range(0..=rows - side),
            col: rng.gen_range(0..=cols - side),
            side,
        })
        .collect())
}

/// En-face (slice, width) pixels under each vessel's lumen.
pub fn vessel_footprints(tree: &VesselTree) -> Vec<Vec<usize>> {
    let (rows, cols) = (tree.dims.slices, tree.dims.width);
    tree.vessels
        .iter()
        .map(|v| {
            let mut px = Vec::new();
            for seg in v.centerline.windows(2) {
                let (a, b) = ((seg[0][0], seg[0][2]), (seg[1][0], seg[1][2]));
                let r = v.radius;
                let s0 = (a.0.min(b.0) - r).floor().max(0.0) as usize;
                let s1 = ((a.0.max(b.0) + r).ceil() as usize).min(rows - 1);
                let x0 = (a.1.min(b.1) - r).floor().max(0.0) as usize;
                let x1 = ((a.1.max(b.1) + r).ceil() as usize).min(cols - 1);
                for s in s0..=s1 {
                    for x in x0..=x1 {
                        if distance_2d((s as f64, x as f64), a, b) <= r {
                            px.push(s * cols + x);
                        }
                    }
                }
            }
            px.sort_unstable();
            px.dedup();
            px
        })
        .collect()
}

fn distance_2d(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Counts, per order, the vessels whose footprint is at least `min_fraction`
/// covered by each modality's binary en-face map. With `squares`, only the
/// footprint pixels inside the squares are considered, and vessels missing
/// every square are skipped.
pub fn phantom_vessel_table(
    tree: &VesselTree,
    modalities: &[(&str, &[bool])],
    squares: Option<&[Square]>,
    min_fraction: f64,
) -> Result<VesselOrderTable> {
    let cols = tree.dims.width;
    let npx = tree.dims.slices * cols;
    if let Some((name, _)) = modalities.iter().find(|(_, m)| m.len() != npx) {
        return Err(Error::Shape(format!("{name} map does not match {}x{cols}", tree.dims.slices)));
    }
    let mut counts: [Vec<(u64, u64)>; 3] = Default::default();
    for row in counts.iter_mut() {
        *row = vec![(0, 0); modalities.len()];
    }
    for (v, px) in tree.vessels.iter().zip(vessel_footprints(tree)) {
        let px: Vec<usize> = match squares {
            Some(sq) => px
                .into_iter()
                .filter(|&i| sq.iter().any(|q| q.contains(i / cols, i % cols)))
                .collect(),
            None => px,
        };
        if px.is_empty() {
            continue;
        }
        let oi = (v.order - 2) as usize;
        for (m, (_, mask)) in modalities.iter().enumerate() {
            let hit = px.iter().filter(|&&i| mask[i]).count();
            counts[oi][m].1 += 1;
            if hit as f64 >= min_fraction * px.len() as f64 {
                counts[oi][m].0 += 1;
            }
        }
    }
    Ok(VesselOrderTable {
        modalities: modalities.iter().map(|(n, _)| n.to_string()).collect(),
        counts,
    })
}
