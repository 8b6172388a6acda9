//! Image fidelity and binary agreement metrics.

use num_rational::Ratio;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};

/// Mean squared error, accumulated in f64.
pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "mse: left operand has {} values, right operand {}",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when `mse` is zero.
pub fn psnr(mse: f64, peak: f64) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(Error::Domain(format!("psnr needs mse >= 0, got {mse}")));
    }
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::Domain(format!("psnr needs a positive peak, got {peak}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| Ratio::new(num, den).to_f64().expect("finite ratio"))
}

impl ConfusionCounts {
    pub fn from_masks(pred: &[bool], truth: &[bool]) -> Result<Self> {
        if pred.len() != truth.len() || pred.is_empty() {
            return Err(Error::Shape(format!(
                "confusion: prediction has {} values, truth {}",
                pred.len(),
                truth.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn npv(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fn_)
    }
}

/// Otsu threshold over a 256-bin histogram spanning the data range.
/// Returns the mask `value > threshold` and the threshold.
pub fn otsu_binarize(values: &[f32]) -> (Vec<bool>, f32) {
    const BINS: usize = 256;
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if values.is_empty() || !(hi > lo) {
        return (vec![false; values.len()], if values.is_empty() { 0.0 } else { hi });
    }
    let width = (hi as f64 - lo as f64) / BINS as f64;
    let bin = |v: f32| (((v as f64 - lo as f64) / width) as usize).min(BINS - 1);
    let mut hist = [0u64; BINS];
    for &v in values {
        hist[bin(v)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for (k, &h) in hist.iter().enumerate().take(BINS - 1) {
        w0 += h as f64;
        sum0 += k as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    let threshold = (lo as f64 + (best_k + 1) as f64 * width) as f32;
    (values.iter().map(|&v| bin(v) > best_k).collect(), threshold)
}

/// Pearson correlation; absent when either input has zero variance.
pub fn pearson(a: &[f32], b: &[f32]) -> Result<Option<f64>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "pearson: left operand has {} values, right operand {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some(sab / (saa * sbb).sqrt()))
}

/// Dice overlap; absent when both masks are empty.
pub fn dice(a: &[bool], b: &[bool]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "dice: left operand has {} values, right operand {}",
            a.len(),
            b.len()
        )));
    }
    let inter = a.iter().zip(b).filter(|(&x, &y)| x && y).count() as u64;
    let size = a.iter().filter(|&&x| x).count() as u64 + b.iter().filter(|&&y| y).count() as u64;
    Ok(ratio(2 * inter, size))
}
