//! Subcommand bodies. Each reads its inputs, then writes every output once.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cli::config::{
    BakeoffRun, EvalRun, InferRun, PhantomRun, ProjectRun, SeamChoice, StatsRun, TrainRun,
};
use crate::cli::{parse_config, RunDir};
use crate::datapipe::{
    slice_strips, split_corpus, DatasetSplit, PgmDepth, SplitFractions, StripDims, Volume,
};
use crate::error::{Error, Result};
use crate::evalstat::vessels::phantom_vessel_table;
use crate::evalstat::{
    dice, gss_predictive, mcnemar, mse, otsu_binarize, pearson, psnr, sample_squares,
    vessel_order_report, McNemarMode, PairedOutcomes, PairedUnit, Predictive, VesselOrderTable,
};
use crate::flowmap::{enface, infer_volume, Projection, Seams};
use crate::model::{count_params, ModelSpec};
use crate::phantom::{retina_band, VesselTree};
use crate::seeds;
use crate::trainer::{bakeoff as run_bakeoff, evaluate_mse, train as run_train, Checkpoint, CorpusVolume, TrainingData};

/// Volume id list written by `phantom`, one id per line.
pub const CORPUS_INDEX: &str = "corpus.txt";
const INFERRED_INDEX: &str = "inferred.txt";
/// Nominal retina band used when detection fails on a B-scan.
const NOMINAL_BAND: (f64, f64) = (0.25, 0.75);
const SQUARE_STREAM: u64 = 0x5351;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_index(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn volume_path(corpus: &Path, id: &str, what: &str) -> std::path::PathBuf {
    corpus.join("volumes").join(format!("{id}.{what}"))
}

/// Loads the structure / flow pairs of a `phantom` run directory.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusVolume>> {
    read_index(&dir.join(CORPUS_INDEX))?
        .into_iter()
        .map(|id| {
            Ok(CorpusVolume {
                structure: Volume::load(&volume_path(dir, &id, "structure.vol"))?,
                flow: Volume::load(&volume_path(dir, &id, "flow.vol"))?,
                id,
            })
        })
        .collect()
}

fn load_tree(dir: &Path, id: &str) -> Result<VesselTree> {
    VesselTree::from_json(&read_text(&volume_path(dir, id, "tree.json"))?)
}

pub(super) fn phantom(cfg: &PhantomRun, _base: &Path, out: &RunDir, _hash: &str) -> Result<()> {
    if cfg.count == 0 {
        return Err(Error::Config("count must be positive".into()));
    }
    cfg.phantom.validate()?;
    let mut index = String::new();
    for i in 0..cfg.count {
        // One phantom at a time keeps memory flat for large corpora.
        let (vol, p) = crate::trainer::phantom_corpus_member(&cfg.phantom, i)?;
        vol.structure.save(&out.claim_path(&format!("volumes/{}.structure.vol", vol.id))?)?;
        vol.flow.save(&out.claim_path(&format!("volumes/{}.flow.vol", vol.id))?)?;
        out.write(&format!("volumes/{}.tree.json", vol.id), p.tree.to_json().as_bytes())?;
        let _ = writeln!(index, "{}", vol.id);
    }
    out.write(CORPUS_INDEX, index.as_bytes())?;
    Ok(())
}

fn prepare_data(
    corpus: &[CorpusVolume],
    fractions: SplitFractions,
    split_seed: u64,
    strip: StripDims,
) -> Result<TrainingData> {
    let ids: Vec<String> = corpus.iter().map(|v| v.id.clone()).collect();
    let split = split_corpus(&ids, fractions, split_seed)?;
    TrainingData::from_corpus(corpus, split, strip)
}

fn test_strips(corpus: &[CorpusVolume], split: &DatasetSplit, strip: StripDims) -> Result<Vec<crate::datapipe::StripPair>> {
    let mut out = Vec::new();
    for v in corpus.iter().filter(|v| split.test.contains(&v.id)) {
        let mids = retina_band(&v.structure, NOMINAL_BAND).slice_midpoints();
        out.extend(slice_strips(&v.structure, &v.flow, &v.id, strip, Some(&mids))?);
    }
    Ok(out)
}

pub(super) fn train(cfg: &TrainRun, base: &Path, out: &RunDir, hash: &str) -> Result<()> {
    let corpus = load_corpus(&base.join(&cfg.corpus))?;
    let data = prepare_data(&corpus, cfg.fractions, cfg.split_seed, cfg.strip)?;
    let ck = run_train(&cfg.model, &data, &cfg.train)?;
    ck.save(&out.claim_path("checkpoint")?)?;
    out.write("curve.csv", ck.curve.to_csv().as_bytes())?;
    let split = serde_json::to_string_pretty(&data.split).expect("split serialises");
    out.write("split.json", split.as_bytes())?;

    let best = ck.best_network()?;
    let test = test_strips(&corpus, &data.split, cfg.strip)?;
    let mut r = String::new();
    let _ = writeln!(r, "config_sha256 {hash}");
    let _ = writeln!(r, "model {}", ck.spec.label());
    let _ = writeln!(r, "params {}", count_params(&ck.spec));
    let _ = writeln!(r, "train_strips {}", data.train.len());
    let _ = writeln!(r, "validation_strips {}", data.validation.len());
    let _ = writeln!(r, "test_strips {}", test.len());
    let _ = writeln!(r, "iterations {}", ck.iteration);
    let _ = writeln!(r, "stopped {:?}", ck.stopped);
    if let Some((it, v)) = ck.curve.best_validation() {
        let _ = writeln!(r, "best_validation_mse {v:.6e} at {it}");
    }
    if !test.is_empty() {
        let m = evaluate_mse(&best, &test)?;
        let _ = writeln!(r, "test_mse {m:.6e}");
        let _ = writeln!(r, "test_psnr_db {:.3}", psnr(m, 1.0)?);
    }
    out.write("report.txt", r.as_bytes())?;
    Ok(())
}

pub(super) fn bakeoff(cfg: &BakeoffRun, base: &Path, out: &RunDir, hash: &str) -> Result<()> {
    let corpus = load_corpus(&base.join(&cfg.corpus))?;
    let data = prepare_data(&corpus, cfg.fractions, cfg.split_seed, cfg.strip)?;
    let specs: Vec<ModelSpec> = ModelSpec::bakeoff_variants()
        .into_iter()
        .map(|s| s.with_growth(cfg.growth))
        .collect();
    let result = run_bakeoff(&specs, &data, &cfg.train)?;
    out.write("bakeoff.csv", result.to_csv().as_bytes())?;
    let report = format!("config_sha256 {hash}\n{}", result.report());
    out.write("report.txt", report.as_bytes())?;
    for (row, curve) in result.rows.iter().zip(&result.curves) {
        out.write(&format!("curves/{}.csv", row.spec.label()), curve.to_csv().as_bytes())?;
    }
    Ok(())
}

pub(super) fn infer(cfg: &InferRun, base: &Path, out: &RunDir, _hash: &str) -> Result<()> {
    let run = base.join(&cfg.train_run);
    let trained: TrainRun = parse_config(&read_text(&run.join("config.toml"))?)?;
    let split: DatasetSplit = serde_json::from_str(&read_text(&run.join("split.json"))?)
        .map_err(|e| Error::format(run.join("split.json"), e.to_string()))?;
    let ck = Checkpoint::load(&run.join("checkpoint"))?;
    let net = ck.best_network()?;
    let strip = cfg.strip.unwrap_or(trained.strip);
    let seams = match cfg.seams {
        SeamChoice::Metric => Seams::Metric,
        SeamChoice::Feathered => Seams::Feathered {
            overlap: cfg.overlap,
        },
    };
    let corpus_dir = base.join(&cfg.corpus);
    let mut index = String::new();
    for id in read_index(&corpus_dir.join(CORPUS_INDEX))? {
        if split.subset_of(&id) != Some(cfg.subset) {
            continue;
        }
        let structure = Volume::load(&volume_path(&corpus_dir, &id, "structure.vol"))?;
        let inferred = infer_volume(&net, &structure, strip, seams)?;
        inferred.save(&out.claim_path(&format!("inferred/{id}.vol"))?)?;
        let _ = writeln!(index, "{id}");
    }
    if index.is_empty() {
        return Err(Error::Input(format!("no corpus volume is in the {:?} subset", cfg.subset)));
    }
    out.write(INFERRED_INDEX, index.as_bytes())?;
    Ok(())
}

pub(super) fn project(cfg: &ProjectRun, base: &Path, out: &RunDir, _hash: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for m in &cfg.maps {
        let bad = m.name.is_empty() || m.name.contains(['/', '\\']) || m.name.starts_with('.');
        if bad || !seen.insert(m.name.as_str()) {
            return Err(Error::Config(format!("map name {:?} is empty, unsafe or repeated", m.name)));
        }
        let volume = Volume::load(&base.join(&m.volume))?;
        let band_source = Volume::load(&base.join(&m.band_from))?;
        let band = retina_band(&band_source, NOMINAL_BAND);
        let projection = m.projection.unwrap_or(Projection::default_for(volume.kind));
        let map = enface(&volume, &band, projection)?;
        let stem = out.claim_path(&format!("maps/{}", m.name))?;
        out.claim_path(&format!("maps/{}.pgm", m.name))?;
        out.claim_path(&format!("maps/{}.txt", m.name))?;
        let depth = if m.sixteen_bit { PgmDepth::Sixteen } else { PgmDepth::Eight };
        map.export(&stem, depth)?;
    }
    Ok(())
}

/// Sensitivity / specificity McNemar tests and PPV / NPV score tests.
pub fn paired_report(paired: &PairedOutcomes, mode: McNemarMode) -> String {
    let mut s = format!("paired units {}\n", paired.len());
    for (name, subset) in [
        ("sensitivity", paired.truth_positive()),
        ("specificity", paired.truth_negative()),
    ] {
        match subset {
            Some(p) => {
                let rate = |pick: fn(&PairedUnit) -> bool| {
                    p.units().iter().filter(|u| pick(u) == u.truth).count() as f64 / p.len() as f64
                };
                let t = mcnemar(&p, mode);
                let _ = writeln!(
                    s,
                    "{name} a={:.4} b={:.4} n={} mcnemar_{} b={} c={} statistic={:.4} p={:.4e}",
                    rate(|u| u.rater_a),
                    rate(|u| u.rater_b),
                    p.len(),
                    match mode {
                        McNemarMode::Exact => "exact",
                        McNemarMode::Chi2 => "chi2",
                    },
                    t.b,
                    t.c,
                    t.statistic,
                    t.p
                );
            }
            None => {
                let _ = writeln!(s, "{name} not applicable: no units with that reference");
            }
        }
    }
    for which in [Predictive::Ppv, Predictive::Npv] {
        let c = gss_predictive(paired, which);
        let name = match which {
            Predictive::Ppv => "ppv",
            Predictive::Npv => "npv",
        };
        let fmt = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.4}"));
        match c.test {
            Some(t) => {
                let _ = writeln!(
                    s,
                    "{name} a={} b={} score_statistic={:.4} p={:.4e}",
                    fmt(c.value_a),
                    fmt(c.value_b),
                    t.statistic,
                    t.p
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    "{name} a={} b={} not applicable: a rater makes no such call",
                    fmt(c.value_a),
                    fmt(c.value_b)
                );
            }
        }
    }
    s
}

fn add_table(acc: &mut Option<VesselOrderTable>, t: VesselOrderTable) {
    match acc {
        None => *acc = Some(t),
        Some(a) => {
            for (row, add) in a.counts.iter_mut().zip(t.counts) {
                for (cell, (i, n)) in row.iter_mut().zip(add) {
                    cell.0 += i;
                    cell.1 += n;
                }
            }
        }
    }
}

/// Drops orders without vessels so the table validates.
fn drop_empty_orders(mut t: VesselOrderTable) -> VesselOrderTable {
    for row in t.counts.iter_mut() {
        if row.iter().all(|&(_, n)| n == 0) {
            row.clear();
        }
    }
    t
}

pub(super) fn eval(cfg: &EvalRun, base: &Path, out: &RunDir, hash: &str) -> Result<()> {
    let corpus_dir = base.join(&cfg.corpus);
    let infer_dir = base.join(&cfg.infer_run);
    if !(0.0..=1.0).contains(&cfg.min_vessel_fraction) {
        return Err(Error::Config("min_vessel_fraction must lie in [0, 1]".into()));
    }
    let mut metrics = String::from(
        "volume,voxel_mse,voxel_psnr_db,voxel_pearson,enface_pearson,enface_dice,band_fallback\n",
    );
    let mut units = Vec::new();
    let mut vessels = None;
    for (vi, id) in read_index(&infer_dir.join(INFERRED_INDEX))?.iter().enumerate() {
        let structure = Volume::load(&volume_path(&corpus_dir, id, "structure.vol"))?;
        let truth = Volume::load(&volume_path(&corpus_dir, id, "flow.vol"))?;
        let inferred = Volume::load(&infer_dir.join("inferred").join(format!("{id}.vol")))?;
        if truth.dims() != inferred.dims() {
            return Err(Error::Shape(format!(
                "volume {id}: truth {} vs inferred {}",
                truth.dims(),
                inferred.dims()
            )));
        }
        let band = retina_band(&structure, NOMINAL_BAND);
        let avg = |v: &Volume| enface(v, &band, Projection::Average).map(|m| m.data);
        let (gt_map, inf_map, st_map) = (avg(&truth)?, avg(&inferred)?, avg(&structure)?);
        let inverted: Vec<f32> = st_map.iter().map(|v| 1.0 - v).collect();
        let (gt_mask, _) = otsu_binarize(&gt_map);
        let (a_mask, _) = otsu_binarize(&inf_map);
        let (b_mask, _) = otsu_binarize(&inverted);

        let m = mse(inferred.data(), truth.data())?;
        let opt = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.6}"));
        let _ = writeln!(
            metrics,
            "{id},{m:.6e},{:.4},{},{},{},{}",
            psnr(m, 1.0)?,
            opt(pearson(inferred.data(), truth.data())?),
            opt(pearson(&inf_map, &gt_map)?),
            opt(dice(&a_mask, &gt_mask)?),
            band.any_fallback()
        );

        let d = structure.dims();
        let seed = seeds::derive(cfg.square_seed, SQUARE_STREAM, vi as u64);
        let squares = sample_squares(d.slices, d.width, cfg.square_side, cfg.square_count, seed)?;
        let pixels: BTreeSet<usize> = squares.iter().flat_map(|q| q.indices(d.width)).collect();
        units.extend(pixels.into_iter().map(|i| PairedUnit {
            id: format!("{id}:{}:{}", i / d.width, i % d.width),
            truth: gt_mask[i],
            rater_a: a_mask[i],
            rater_b: b_mask[i],
        }));

        let tree = load_tree(&corpus_dir, id)?;
        let modalities: [(&str, &[bool]); 3] =
            [("ground-truth", &gt_mask), ("inferred", &a_mask), ("structure", &b_mask)];
        add_table(
            &mut vessels,
            phantom_vessel_table(&tree, &modalities, Some(&squares), cfg.min_vessel_fraction)?,
        );
    }
    let paired = PairedOutcomes::new(units)?;
    out.write("metrics.csv", metrics.as_bytes())?;
    out.write("paired.csv", paired.to_csv().as_bytes())?;

    let mut report = format!("config_sha256 {hash}\nrater a: inferred flow; rater b: inverted structure\n");
    report.push_str(&paired_report(&paired, cfg.mcnemar));
    let table = drop_empty_orders(vessels.expect("at least one volume was evaluated"));
    let vr = vessel_order_report(&table)?;
    out.write("vessels.csv", vr.to_csv().as_bytes())?;
    report.push_str(&vr.render());
    out.write("report.txt", report.as_bytes())?;
    Ok(())
}

pub(super) fn stats(cfg: &StatsRun, base: &Path, out: &RunDir, hash: &str) -> Result<()> {
    let paired = PairedOutcomes::from_csv(&read_text(&base.join(&cfg.paired))?)?;
    let mut report = format!("config_sha256 {hash}\n");
    report.push_str(&paired_report(&paired, cfg.mcnemar));
    if let Some(t) = &cfg.vessel_table {
        let vr = vessel_order_report(t)?;
        report.push_str(&vr.render());
        out.write("vessels.csv", vr.to_csv().as_bytes())?;
    }
    if cfg.clinical_reference {
        report.push_str("clinical second-order reading\n");
        report.push_str(&vessel_order_report(&VesselOrderTable::clinical_second_order())?.render());
    }
    out.write("report.txt", report.as_bytes())?;
    Ok(())
}
