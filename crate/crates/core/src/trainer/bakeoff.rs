//! Trains every variant under identical data, order and seed, then ranks
//! them by lowest validation MSE.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{count_params, ChannelGrowth, ModelSpec, ARCHETYPES};
use crate::nn::BridgeKind;
use crate::trainer::{train, LearningCurve, TrainConfig, TrainingData};

/// Published trainable-parameter count of the deepest concat model.
pub const REFERENCE_PARAMS: f64 = 7.85e6;

#[derive(Clone, Debug, PartialEq)]
pub struct BakeoffRow {
    pub spec: ModelSpec,
    pub params: usize,
    /// `(completed iterations, MSE)` of the best validation; absent on divergence.
    pub best: Option<(usize, f64)>,
    pub diverged: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BakeoffResult {
    /// One row per spec, in input order.
    pub rows: Vec<BakeoffRow>,
    pub curves: Vec<LearningCurve>,
    pub iterations: usize,
}

impl BakeoffResult {
    /// Row indices by ascending best validation MSE, ties to fewer
    /// parameters; diverged rows last in input order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&self.rows[a], &self.rows[b]);
            match (ra.best, rb.best) {
                (Some((_, x)), Some((_, y))) => x
                    .total_cmp(&y)
                    .then(ra.params.cmp(&rb.params))
                    .then(a.cmp(&b)),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => a.cmp(&b),
            }
        });
        idx
    }

    pub fn winner(&self) -> Option<&BakeoffRow> {
        self.ranking()
            .first()
            .map(|&i| &self.rows[i])
            .filter(|r| r.best.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "rank,label,blocks,base_filters,bridge,growth,params,best_validation_mse,best_iteration,status\n",
        );
        for (rank, &i) in self.ranking().iter().enumerate() {
            let r = &self.rows[i];
            let (mse, it) = match r.best {
                Some((it, m)) => (format!("{m:.9e}"), it.to_string()),
                None => (String::new(), String::new()),
            };
            let status = r.diverged.as_deref().map_or("ok".to_string(), |d| format!("diverged: {d}"));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                rank + 1,
                r.spec.label(),
                r.spec.blocks,
                r.spec.base_filters,
                r.spec.bridge.name(),
                growth_name(r.spec.channel_growth),
                r.params,
                mse,
                it,
                status.replace(',', ";")
            );
        }
        s
    }

    /// Lowest validation MSE per archetype, one column per bridge type,
    /// followed by the winner and parameter accounting.
    pub fn report(&self) -> String {
        let mut s = format!("lowest validation MSE after {} iterations\n", self.iterations);
        let _ = writeln!(s, "{:<14}{:>16}{:>16}{:>16}", "archetype", "none", "sum", "concat");
        for (blocks, filters) in ARCHETYPES {
            let _ = write!(s, "{:<14}", format!("b{blocks}-f{filters}"));
            for kind in BridgeKind::ALL {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.spec.blocks == blocks && r.spec.base_filters == filters && r.spec.bridge == kind)
                    .map_or("-".to_string(), |r| match r.best {
                        Some((_, m)) => format!("{m:.4e}"),
                        None => "diverged".to_string(),
                    });
                let _ = write!(s, "{cell:>16}");
            }
            s.push('\n');
        }
        match self.winner() {
            Some(w) => {
                let _ = writeln!(s, "winner: {} ({} parameters)", w.spec.label(), w.params);
            }
            None => s.push_str("winner: none (all variants diverged)\n"),
        }
        s.push_str("clinical-data winner for comparison: b9-f18-concat\n");
        let deep = ModelSpec::new(9, 18, BridgeKind::Concat).with_growth(ChannelGrowth::Doubling);
        let n = count_params(&deep);
        let _ = writeln!(
            s,
            "parameters of {} (doubling growth): {n}, ratio to {REFERENCE_PARAMS:.3e}: {:.4}",
            deep.label(),
            n as f64 / REFERENCE_PARAMS
        );
        s
    }
}

fn growth_name(g: ChannelGrowth) -> &'static str {
    match g {
        ChannelGrowth::Constant => "constant",
        ChannelGrowth::Doubling => "doubling",
    }
}

/// Trains each spec for `config.max_iterations` with identical data order
/// and seed. Divergence is recorded in the row rather than aborting.
pub fn bakeoff(specs: &[ModelSpec], data: &TrainingData, config: &TrainConfig) -> Result<BakeoffResult> {
    if specs.is_empty() {
        return Err(Error::Config("bake-off needs at least one spec".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    let mut curves = Vec::with_capacity(specs.len());
    for spec in specs {
        let params = count_params(spec);
        match train(spec, data, config) {
            Ok(ck) => {
                rows.push(BakeoffRow {
                    spec: *spec,
                    params,
                    best: ck.curve.best_validation(),
                    diverged: None,
                });
                curves.push(ck.curve);
            }
            Err(Error::Divergence { iteration, detail }) => {
                rows.push(BakeoffRow {
                    spec: *spec,
                    params,
                    best: None,
                    diverged: Some(format!("iteration {iteration}: {detail}")),
                });
                curves.push(LearningCurve::default());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(BakeoffResult {
        rows,
        curves,
        iterations: config.max_iterations,
    })
}
