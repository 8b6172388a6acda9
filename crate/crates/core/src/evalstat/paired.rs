//! Paired-rater outcomes and the tests that compare two raters on them.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedUnit {
    pub id: String,
    pub truth: bool,
    pub rater_a: bool,
    pub rater_b: bool,
}

/// Binary calls from two raters against a shared reference, one row per unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairedOutcomes {
    units: Vec<PairedUnit>,
}

impl PairedOutcomes {
    pub fn new(units: Vec<PairedUnit>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Input("paired outcomes need at least one unit".into()));
        }
        Ok(PairedOutcomes { units })
    }

    /// Units `prefix0, prefix1, ...` from congruent masks.
    pub fn from_masks(prefix: &str, truth: &[bool], a: &[bool], b: &[bool]) -> Result<Self> {
        if truth.len() != a.len() || truth.len() != b.len() {
            return Err(Error::Shape(format!(
                "paired masks: truth {}, rater a {}, rater b {}",
                truth.len(),
                a.len(),
                b.len()
            )));
        }
        Self::new(
            (0..truth.len())
                .map(|i| PairedUnit {
                    id: format!("{prefix}{i}"),
                    truth: truth[i],
                    rater_a: a[i],
                    rater_b: b[i],
                })
                .collect(),
        )
    }

    pub fn units(&self) -> &[PairedUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    fn filtered(&self, truth: bool) -> Option<Self> {
        let units: Vec<_> = self.units.iter().filter(|u| u.truth == truth).cloned().collect();
        (!units.is_empty()).then_some(PairedOutcomes { units })
    }

    /// Units with a positive reference: the population for sensitivity.
    pub fn truth_positive(&self) -> Option<Self> {
        self.filtered(true)
    }

    /// Units with a negative reference: the population for specificity.
    pub fn truth_negative(&self) -> Option<Self> {
        self.filtered(false)
    }

    /// Discordant counts: `b` = A correct and B wrong, `c` = A wrong and B correct.
    pub fn discordant(&self) -> (u64, u64) {
        let mut b = 0;
        let mut c = 0;
        for u in &self.units {
            match (u.rater_a == u.truth, u.rater_b == u.truth) {
                (true, false) => b += 1,
                (false, true) => c += 1,
                _ => {}
            }
        }
        (b, c)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("unit,truth,rater_a,rater_b\n");
        for u in &self.units {
            let _ = writeln!(s, "{},{},{},{}", u.id, u.truth as u8, u.rater_a as u8, u.rater_b as u8);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("unit,truth,rater_a,rater_b") {
            return Err(Error::Input("paired csv: missing header".into()));
        }
        let bit = |f: &str, line: usize| match f.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Input(format!("paired csv line {line}: bad bit {other:?}"))),
        };
        let mut units = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Input(format!("paired csv line {}: need 4 fields", i + 2)));
            }
            units.push(PairedUnit {
                id: f[0].trim().to_string(),
                truth: bit(f[1], i + 2)?,
                rater_a: bit(f[2], i + 2)?,
                rater_b: bit(f[3], i + 2)?,
            });
        }
        Self::new(units)
    }
}

fn chi2_sf(statistic: f64) -> f64 {
    ChiSquared::new(1.0).expect("one degree of freedom").sf(statistic)
}

fn binomial(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn to_f64(r: BigRational) -> f64 {
    r.to_f64().expect("probability converts")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McNemarMode {
    Exact,
    Chi2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McNemarResult {
    pub b: u64,
    pub c: u64,
    /// `(b - c)^2 / (b + c)`, zero when there are no discordant pairs.
    pub statistic: f64,
    pub p: f64,
    pub mode: McNemarMode,
}

/// McNemar test from discordant counts.
pub fn mcnemar_counts(b: u64, c: u64, mode: McNemarMode) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult { b, c, statistic: 0.0, p: 1.0, mode };
    }
    let diff = b.abs_diff(c) as f64;
    let statistic = diff * diff / n as f64;
    let p = match mode {
        McNemarMode::Chi2 => chi2_sf(statistic),
        McNemarMode::Exact => {
            let tail: BigUint = (0..=b.min(c)).map(|k| binomial(n, k)).sum();
            let p = BigRational::new((tail * 2u32).into(), (BigUint::one() << n).into());
            to_f64(p).min(1.0)
        }
    };
    McNemarResult { b, c, statistic, p, mode }
}

pub fn mcnemar(paired: &PairedOutcomes, mode: McNemarMode) -> McNemarResult {
    let (b, c) = paired.discordant();
    mcnemar_counts(b, c, mode)
}

/// Two-sided Fisher exact p for `[[a, b], [c, d]]`: the total probability of
/// all tables with the observed margins that are no more likely than it.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> Result<f64> {
    let [[a, b], [c, d]] = table;
    let n = a + b + c + d;
    if n == 0 {
        return Err(Error::Domain("fisher exact needs a positive grand total".into()));
    }
    let (r1, r2, c1) = (a + b, c + d, a + c);
    // P(x) is proportional to C(r1, x) C(r2, c1 - x); compare numerators exactly.
    let weight = |x: u64| binomial(r1, x) * binomial(r2, c1 - x);
    let observed = weight(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let mut mass = BigUint::zero();
    for x in lo..=hi {
        let w = weight(x);
        if w <= observed {
            mass += w;
        }
    }
    let p = to_f64(BigRational::new(mass.into(), binomial(n, c1).into()));
    Ok(p.min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictive {
    Ppv,
    Npv,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreTest {
    pub statistic: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveComparison {
    pub which: Predictive,
    pub value_a: Option<f64>,
    pub value_b: Option<f64>,
    /// Absent when a rater makes no call of the relevant polarity.
    pub test: Option<ScoreTest>,
}

impl PredictiveComparison {
    pub fn is_applicable(&self) -> bool {
        self.test.is_some()
    }
}

/// Paired score test for equal predictive values of two raters.
///
/// Each unit contributes one observation per rater that made a call of the
/// relevant polarity; `x` marks rater B and `y` marks a correct call. With
/// pooled means taken over all contributing observations, the score is
/// `U = sum_i u_i`, `u_i = sum_j (x_ij - mean x)(y_ij - mean y)`, and the
/// statistic `U^2 / sum_i u_i^2` is referred to chi-square with one degree of
/// freedom. The variance is the cluster-robust one, so the within-unit
/// correlation of the two raters is accounted for.
pub fn gss_predictive(paired: &PairedOutcomes, which: Predictive) -> PredictiveComparison {
    let call = |c: bool| match which {
        Predictive::Ppv => c,
        Predictive::Npv => !c,
    };
    // Observations: (unit, is rater b, call correct).
    let mut obs: Vec<(usize, f64, f64)> = Vec::new();
    let (mut na, mut ca, mut nb, mut cb) = (0u64, 0u64, 0u64, 0u64);
    for (i, u) in paired.units().iter().enumerate() {
        if call(u.rater_a) {
            let ok = (u.truth == u.rater_a) as u64;
            na += 1;
            ca += ok;
            obs.push((i, 0.0, ok as f64));
        }
        if call(u.rater_b) {
            let ok = (u.truth == u.rater_b) as u64;
            nb += 1;
            cb += ok;
            obs.push((i, 1.0, ok as f64));
        }
    }
    let value = |c: u64, n: u64| (n > 0).then(|| c as f64 / n as f64);
    let mut out = PredictiveComparison {
        which,
        value_a: value(ca, na),
        value_b: value(cb, nb),
        test: None,
    };
    if na == 0 || nb == 0 {
        return out;
    }
    let m = obs.len() as f64;
    let mean_x = nb as f64 / m;
    let mean_y = (ca + cb) as f64 / m;
    let mut per_unit = vec![0.0f64; paired.len()];
    for &(i, x, y) in &obs {
        per_unit[i] += (x - mean_x) * (y - mean_y);
    }
    let u: f64 = per_unit.iter().sum();
    let v: f64 = per_unit.iter().map(|s| s * s).sum();
    out.test = Some(if v <= 0.0 || u == 0.0 {
        ScoreTest { statistic: 0.0, p: 1.0 }
    } else {
        let statistic = u * u / v;
        ScoreTest { statistic, p: chi2_sf(statistic) }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(truth: bool, a: bool, b: bool) -> PairedUnit {
        PairedUnit { id: String::new(), truth, rater_a: a, rater_b: b }
    }

    #[test]
    fn mcnemar_reference_values() {
        let r = mcnemar_counts(10, 0, McNemarMode::Exact);
        assert!((r.p - 1.953e-3).abs() < 1e-6);
        assert_eq!(r.p, 2.0 * 0.5f64.powi(10));
        let sym = mcnemar_counts(5, 5, McNemarMode::Chi2);
        assert_eq!((sym.statistic, sym.p), (0.0, 1.0));
        assert_eq!(mcnemar_counts(0, 0, McNemarMode::Exact).p, 1.0);
        assert_eq!(mcnemar_counts(0, 0, McNemarMode::Chi2).p, 1.0);
        assert_eq!(mcnemar_counts(3, 3, McNemarMode::Exact).p, 1.0);
    }

    #[test]
    fn discordant_counts_from_units() {
        let p = PairedOutcomes::new(vec![
            unit(true, true, false),
            unit(true, true, false),
            unit(false, true, false),
            unit(false, false, false),
        ])
        .unwrap();
        assert_eq!(p.discordant(), (2, 1));
        assert_eq!(p.truth_positive().unwrap().discordant(), (2, 0));
        assert_eq!(p.truth_negative().unwrap().discordant(), (0, 1));
        assert!(PairedOutcomes::new(vec![]).is_err());
    }

    #[test]
    fn fisher_reference_tables() {
        assert_eq!(fisher_exact([[5, 5], [5, 5]]).unwrap(), 1.0);
        let p = fisher_exact([[35, 5], [40, 0]]).unwrap();
        // Only x = 35 and x = 40 are as unlikely as observed: 2 C(40,35) / C(80,5).
        assert!((p - 1_316_016.0 / 24_040_016.0).abs() < 1e-15, "{p}");
        assert!(matches!(fisher_exact([[0, 0], [0, 0]]), Err(Error::Domain(_))));
        assert_eq!(fisher_exact([[3, 0], [0, 0]]).unwrap(), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = PairedOutcomes::from_masks("px", &[true, false], &[true, true], &[false, false]).unwrap();
        assert_eq!(PairedOutcomes::from_csv(&p.to_csv()).unwrap(), p);
        assert!(PairedOutcomes::from_csv("unit,truth,rater_a,rater_b\nx,1,2,0\n").is_err());
    }

    #[test]
    fn gss_identical_raters() {
        let units = vec![
            unit(true, true, true),
            unit(false, true, true),
            unit(true, false, false),
            unit(false, false, false),
            unit(true, true, true),
        ];
        let p = PairedOutcomes::new(units).unwrap();
        for which in [Predictive::Ppv, Predictive::Npv] {
            let r = gss_predictive(&p, which);
            assert_eq!(r.test, Some(ScoreTest { statistic: 0.0, p: 1.0 }));
            assert_eq!(r.value_a, r.value_b);
        }
    }

    #[test]
    fn gss_without_positive_calls_is_inapplicable() {
        let p = PairedOutcomes::new(vec![unit(true, false, false), unit(false, false, false)]).unwrap();
        let r = gss_predictive(&p, Predictive::Ppv);
        assert!(!r.is_applicable());
        assert_eq!(r.value_a, None);
        assert!(gss_predictive(&p, Predictive::Npv).is_applicable());
    }
}
