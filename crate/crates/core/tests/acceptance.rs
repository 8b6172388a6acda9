//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    check_program, fisher_oracle, generic_point, layer_cases, ln_factorials, mcnemar_oracle,
    predictive_permutation_p, random_tensor, score_test_datasets, GRAD_TOLERANCE,
};
use octflow::datapipe::{split_corpus, SplitFractions, StripDims, VolDims, Volume, VolumeKind};
use octflow::evalstat::{
    dice, fisher_exact, gss_predictive, mcnemar_counts, otsu_binarize, pearson, psnr, McNemarMode,
    Predictive,
};
use octflow::flowmap::{enface, infer_volume, Projection, Seams};
use octflow::model::{build_model, count_params, ModelSpec};
use octflow::nn::weights::{read_weights, write_weights};
use octflow::nn::{BridgeKind, Mode};
use octflow::phantom::{generate_phantom, retina_band, speckle_variance, PhantomConfig};
use octflow::trainer::{
    bakeoff, phantom_corpus, resume, train, BakeoffResult, Checkpoint, CorpusVolume, TrainConfig,
    TrainingData, REFERENCE_PARAMS,
};
use octflow::Dims;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const PSNR_REFERENCE_MSE: f64 = 7.7665e-4;
const PSNR_REFERENCE_DB: f64 = 31.10;
const PSNR_TOLERANCE_DB: f64 = 0.005;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const OVERFIT_ITERATIONS: usize = 2_000;
const OVERFIT_FRACTION: f64 = 0.01;
const OVERFIT_BUDGET: Duration = Duration::from_secs(300);
const BAKEOFF_ITERATIONS: usize = 500;
const DESK_ITERATIONS: usize = 5_000;
const DESK_MIN_PEARSON: f64 = 0.7;
const DESK_MIN_DICE: f64 = 0.6;
const DESK_BUDGET: Duration = Duration::from_secs(30 * 60);
const SV_MIN_RATIO: f64 = 5.0;
const SV_RHOS: [f64; 3] = [0.2, 0.5, 1.0];
const EXACT_MAX_TOTAL: u64 = 60;
const EXACT_SAMPLED_TABLES: usize = 20_000;
const EXACT_REL_TOLERANCE: f64 = 1e-9;
const MCNEMAR_10_0: f64 = 1.953e-3;
const MCNEMAR_10_0_TOLERANCE: f64 = 1e-6;
const PERMUTATION_RESAMPLES: usize = 100_000;
const PERMUTATION_TOLERANCE: f64 = 0.02;

// Desk-scale corpus shared by the bake-off and the learning criterion.
const DESK_VOLUMES: usize = 10;
const DESK_PHANTOM_SEED: u64 = 7;
const DESK_SPLIT_SEED: u64 = 1;
const DESK_STRIP: StripDims = StripDims { height: 32, width: 32 };
const NOMINAL_BAND: (f64, f64) = (0.25, 0.75);

struct Gate {
    failures: usize,
}

impl Gate {
    fn record(&mut self, id: u8, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} ({detail})",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn desk_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        max_iterations: iterations,
        validation_interval: Some(100),
        patience: 20,
        dropout: false,
        seed: 3,
    }
}

struct Desk {
    corpus: Vec<CorpusVolume>,
    data: TrainingData,
}

fn desk_corpus() -> Desk {
    let cfg = PhantomConfig::compact().with_seed(DESK_PHANTOM_SEED);
    let corpus: Vec<CorpusVolume> = phantom_corpus(&cfg, DESK_VOLUMES)
        .unwrap()
        .into_iter()
        .map(|(v, _)| v)
        .collect();
    let ids: Vec<String> = corpus.iter().map(|v| v.id.clone()).collect();
    let split = split_corpus(&ids, SplitFractions::default(), DESK_SPLIT_SEED).unwrap();
    let data = TrainingData::from_corpus(&corpus, split, DESK_STRIP).unwrap();
    Desk { corpus, data }
}

fn psnr_consistency(g: &mut Gate) {
    let db = psnr(PSNR_REFERENCE_MSE, 1.0).unwrap();
    g.record(
        1,
        "psnr-mse consistency",
        (db - PSNR_REFERENCE_DB).abs() <= PSNR_TOLERANCE_DB,
        format!("psnr({PSNR_REFERENCE_MSE:e}) = {db:.4} dB, target {PSNR_REFERENCE_DB} +/- {PSNR_TOLERANCE_DB}"),
    );
}

fn gradient_fidelity(g: &mut Gate) {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for case in layer_cases() {
        let (p, x) = check_program(&case.graph, &case.params, &case.input, case.mode, 7);
        worst = worst.max(p.max_rel_error).max(x.max_rel_error);
        if !p.passes(GRAD_TOLERANCE) || !x.passes(GRAD_TOLERANCE) {
            failed.push(case.name);
        }
    }
    let mut net = build_model::<f64>(&ModelSpec::new(5, 5, BridgeKind::Concat), 11).unwrap();
    generic_point(&mut net.params, 12);
    let input = random_tensor(Dims::new(2, 1, 8, 8), 13);
    let (p, x) = check_program(&net.graph, &net.params, &input, Mode::Infer, 14);
    worst = worst.max(p.max_rel_error).max(x.max_rel_error);
    if !p.passes(GRAD_TOLERANCE) || !x.passes(GRAD_TOLERANCE) {
        failed.push("b5-f5-concat");
    }
    let elapsed = t0.elapsed();
    g.record(
        2,
        "gradient fidelity",
        failed.is_empty() && elapsed < GRAD_BUDGET,
        format!(
            "max relative error {worst:.2e} < {GRAD_TOLERANCE:e}, network params checked {}, failures {failed:?}, {:.1}s",
            p.checked,
            elapsed.as_secs_f64()
        ),
    );
}

fn overfit_smoke(g: &mut Gate, desk: &Desk) {
    let t0 = Instant::now();
    // The training strip carrying the most flow.
    let strip = desk
        .data
        .train
        .iter()
        .max_by(|a, b| {
            let s = |p: &octflow::datapipe::StripPair| p.flow.iter().map(|&v| v as f64).sum::<f64>();
            s(a).total_cmp(&s(b))
        })
        .unwrap()
        .clone();
    let data = TrainingData::single_strip(strip);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 1,
        max_iterations: OVERFIT_ITERATIONS,
        validation_interval: Some(50),
        patience: usize::MAX,
        dropout: false,
        seed: 5,
    };
    let ck = train(&ModelSpec::new(5, 5, BridgeKind::Concat), &data, &cfg).unwrap();
    let initial = ck.curve.validation[0].1;
    let (at, best) = ck.curve.best_validation().unwrap();
    let elapsed = t0.elapsed();
    g.record(
        3,
        "overfit smoke test",
        best < OVERFIT_FRACTION * initial && elapsed < OVERFIT_BUDGET,
        format!(
            "initial MSE {initial:.4e}, best {best:.4e} at iteration {at} ({:.3}% of initial), {:.1}s",
            100.0 * best / initial,
            elapsed.as_secs_f64()
        ),
    );
}

fn bakeoff_bytes(r: &BakeoffResult) -> Vec<u8> {
    let mut b = r.to_csv().into_bytes();
    b.extend(r.report().bytes());
    for c in &r.curves {
        b.extend(c.to_csv().bytes());
    }
    b
}

fn bakeoff_determinism(g: &mut Gate, desk: &Desk) -> BakeoffResult {
    let t0 = Instant::now();
    let specs = ModelSpec::bakeoff_variants();
    let cfg = desk_config(BAKEOFF_ITERATIONS);
    let first = bakeoff(&specs, &desk.data, &cfg).unwrap();
    let second = bakeoff(&specs, &desk.data, &cfg).unwrap();
    let complete = first.rows.len() == 12 && first.rows.iter().all(|r| r.best.is_some());
    let identical = bakeoff_bytes(&first) == bakeoff_bytes(&second);
    println!("{}", first.to_csv().trim_end());
    println!("{}", first.report().trim_end());
    g.record(
        4,
        "bake-off completeness and determinism",
        complete && identical,
        format!(
            "{} variants x {BAKEOFF_ITERATIONS} iterations, all with a best MSE: {complete}, rerun byte-identical: {identical}, winner {}, {:.0}s for two runs",
            first.rows.len(),
            first.winner().map_or("none".into(), |w| w.spec.label()),
            t0.elapsed().as_secs_f64()
        ),
    );
    first
}

fn desk_learning(g: &mut Gate, desk: &Desk, bake: &BakeoffResult) {
    let t0 = Instant::now();
    let Some(winner) = bake.winner() else {
        g.record(5, "desk-scale learning", false, "no bake-off winner".into());
        return;
    };
    let mut cfg = desk_config(DESK_ITERATIONS);
    cfg.validation_interval = Some(250);
    let ck = train(&winner.spec, &desk.data, &cfg).unwrap();
    let net = ck.best_network().unwrap();
    let mut ok = true;
    let mut cells = Vec::new();
    for v in desk.corpus.iter().filter(|v| desk.data.split.test.contains(&v.id)) {
        let inferred = infer_volume(&net, &v.structure, DESK_STRIP, Seams::Metric).unwrap();
        let band = retina_band(&v.structure, NOMINAL_BAND);
        let pred = enface(&inferred, &band, Projection::Average).unwrap();
        let truth = enface(&v.flow, &band, Projection::Average).unwrap();
        let r = pearson(&pred.data, &truth.data).unwrap().unwrap_or(f64::NAN);
        let d = dice(&otsu_binarize(&pred.data).0, &otsu_binarize(&truth.data).0)
            .unwrap()
            .unwrap_or(f64::NAN);
        ok &= r >= DESK_MIN_PEARSON && d >= DESK_MIN_DICE;
        cells.push(format!("{} r={r:.3} dice={d:.3}", v.id));
    }
    let elapsed = t0.elapsed();
    g.record(
        5,
        "desk-scale learning",
        ok && !cells.is_empty() && elapsed < DESK_BUDGET,
        format!(
            "{} trained {} iterations (best validation {:.3e}); held-out {}; thresholds r>={DESK_MIN_PEARSON} dice>={DESK_MIN_DICE}; {:.0}s",
            winner.spec.label(),
            ck.iteration,
            ck.curve.best_validation().map_or(f64::NAN, |b| b.1),
            cells.join(", "),
            elapsed.as_secs_f64()
        ),
    );
}

fn lumen_sv(cfg: &PhantomConfig) -> (f64, f64) {
    let p = generate_phantom(cfg).unwrap();
    let sv = speckle_variance(&p.repeats, cfg.flow_ceiling).unwrap();
    let d = sv.dims();
    let (mut inside, mut ni, mut outside, mut no) = (0.0, 0usize, 0.0, 0usize);
    for s in 0..d.slices {
        for z in 0..d.depth {
            for x in 0..d.width {
                let v = sv.at(s, z, x) as f64;
                if p.tree.is_lumen(s, z, x) {
                    inside += v;
                    ni += 1;
                } else {
                    outside += v;
                    no += 1;
                }
            }
        }
    }
    (inside / ni as f64, outside / no as f64)
}

fn speckle_physics(g: &mut Gate) {
    let mut ratios = Vec::new();
    for seed in [0, 1] {
        let (i, o) = lumen_sv(&PhantomConfig::default().with_seed(seed));
        ratios.push((i, o, i / o));
    }
    let means: Vec<f64> = SV_RHOS
        .iter()
        .map(|&rho| {
            let cfg = PhantomConfig {
                decorrelation: rho,
                ..PhantomConfig::default()
            };
            lumen_sv(&cfg).0
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[0] < w[1]);
    let ratio_ok = ratios.iter().all(|r| r.2 >= SV_MIN_RATIO);
    g.record(
        6,
        "speckle-variance physics",
        ratio_ok && monotone,
        format!(
            "lumen/outside mean SV {} (>= {SV_MIN_RATIO}); lumen SV at rho {SV_RHOS:?} = {:.3?}, increasing: {monotone}",
            ratios
                .iter()
                .map(|(i, o, r)| format!("{i:.3}/{o:.3e}={r:.3e}"))
                .collect::<Vec<_>>()
                .join(", "),
            means
        ),
    );
}

fn exact_statistics(g: &mut Gate) {
    let lf = ln_factorials(EXACT_MAX_TOTAL as usize + 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7AB1E);
    let mut worst = 0.0f64;
    for _ in 0..EXACT_SAMPLED_TABLES {
        let total = rng.gen_range(1..=EXACT_MAX_TOTAL);
        let a = rng.gen_range(0..=total);
        let b = rng.gen_range(0..=total - a);
        let c = rng.gen_range(0..=total - a - b);
        let t = [[a, b], [c, total - a - b - c]];
        let rel = |x: f64, y: f64| (x - y).abs() / y;
        worst = worst
            .max(rel(fisher_exact(t).unwrap(), fisher_oracle(&lf, t)))
            .max(rel(mcnemar_counts(b, c, McNemarMode::Exact).p, mcnemar_oracle(&lf, b, c)));
    }
    let tables_ok = worst <= EXACT_REL_TOLERANCE;
    let m = mcnemar_counts(10, 0, McNemarMode::Exact).p;
    let m_ok = (m - MCNEMAR_10_0).abs() <= MCNEMAR_10_0_TOLERANCE;
    let mut gap = 0.0f64;
    let mut n = 0;
    for (k, d) in score_test_datasets().iter().enumerate() {
        for (j, which) in [Predictive::Ppv, Predictive::Npv].into_iter().enumerate() {
            let test = gss_predictive(d, which).test.expect("both raters make calls");
            let perm = predictive_permutation_p(d, which, PERMUTATION_RESAMPLES, (2 * k + j) as u64);
            gap = gap.max((test.p - perm).abs());
            n += 1;
        }
    }
    let gss_ok = gap <= PERMUTATION_TOLERANCE;
    g.record(
        7,
        "exact-statistics oracles",
        tables_ok && m_ok && gss_ok,
        format!(
            "{EXACT_SAMPLED_TABLES} tables (total <= {EXACT_MAX_TOTAL}) max relative deviation {worst:.2e} <= {EXACT_REL_TOLERANCE:e}; mcnemar(10,0) = {m:.6e}; score test vs {PERMUTATION_RESAMPLES}-resample permutation on {n} comparisons max |dp| = {gap:.4} <= {PERMUTATION_TOLERANCE}"
        ),
    );
}

fn slice_independence(g: &mut Gate) {
    let p = generate_phantom(&PhantomConfig::compact().with_seed(21)).unwrap();
    let net = build_model::<f32>(&ModelSpec::new(5, 5, BridgeKind::Concat), 22).unwrap();
    let slices = p.structure.dims().slices;
    let mut order: Vec<usize> = (0..slices).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut ok = true;
    for seams in [Seams::Metric, Seams::display()] {
        let direct = infer_volume(&net, &p.structure, DESK_STRIP, seams).unwrap();
        let permuted = infer_volume(&net, &p.structure.permute_slices(&order).unwrap(), DESK_STRIP, seams).unwrap();
        let expected = direct.permute_slices(&order).unwrap();
        ok &= permuted
            .data()
            .iter()
            .zip(expected.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    g.record(
        8,
        "slice-independence invariant",
        ok,
        format!("{slices} slices shuffled, metric and feathered seams, bit-exact: {ok}"),
    );
}

fn io_round_trips(g: &mut Gate, desk: &Desk) {
    let dir = tempfile::tempdir().unwrap();
    let dims = VolDims::new(3, 17, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let data: Vec<f32> = (0..dims.len()).map(|_| rng.gen()).collect();
    let vol = Volume::new(dims, data, VolumeKind::Flow, "round trip").unwrap();
    let vpath = dir.path().join("v.vol");
    vol.save(&vpath).unwrap();
    let back = Volume::load(&vpath).unwrap();
    let volume_ok = back == vol && back.data().iter().zip(vol.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let net = build_model::<f32>(&ModelSpec::new(5, 5, BridgeKind::Sum), 32).unwrap();
    let wpath = dir.path().join("w.txt");
    write_weights(&net.params, &wpath).unwrap();
    let weights_ok = read_weights(&wpath).unwrap() == net.params;

    let spec = ModelSpec::new(5, 5, BridgeKind::Concat);
    let cfg = TrainConfig {
        max_iterations: 60,
        validation_interval: Some(10),
        ..desk_config(60)
    };
    let straight = train(&spec, &desk.data, &cfg).unwrap();
    let mut part = Checkpoint::fresh(&spec, &cfg, desk.data.split.seed).unwrap();
    part.run(&desk.data, 25, &mut |_| {}).unwrap();
    let cpath = dir.path().join("ck");
    part.save(&cpath).unwrap();
    let loaded = Checkpoint::load(&cpath).unwrap();
    let checkpoint_ok = loaded == part;
    let resumed = resume(loaded, &desk.data).unwrap();
    let resume_ok = resumed.curve == straight.curve && resumed.params == straight.params;
    g.record(
        9,
        "i/o round trips",
        volume_ok && weights_ok && checkpoint_ok && resume_ok,
        format!(
            "volume {volume_ok}, weights {weights_ok}, checkpoint {checkpoint_ok}, resume at 25 of 60 reproduces curve and weights {resume_ok}"
        ),
    );
}

fn parameter_accounting(g: &mut Gate, bake: &BakeoffResult) {
    let mut ok = true;
    for spec in ModelSpec::bakeoff_variants() {
        let built = build_model::<f32>(&spec, 0).unwrap().params.total_count();
        ok &= built == count_params(&spec);
    }
    let deep = count_params(&ModelSpec::new(9, 18, BridgeKind::Concat));
    let ratio = format!("{:.4}", deep as f64 / REFERENCE_PARAMS);
    let report = bake.report();
    let printed = report.contains(&format!(": {deep},")) && report.contains(&ratio);
    g.record(
        10,
        "parameter accounting",
        ok && printed,
        format!("count_params matches built stores for 12 specs: {ok}; b9-f18-concat doubling {deep} params, ratio {ratio} to {REFERENCE_PARAMS:e}, in report: {printed}"),
    );
}

fn main() -> ExitCode {
    let mut g = Gate { failures: 0 };
    psnr_consistency(&mut g);
    gradient_fidelity(&mut g);
    let desk = desk_corpus();
    overfit_smoke(&mut g, &desk);
    let bake = bakeoff_determinism(&mut g, &desk);
    desk_learning(&mut g, &desk, &bake);
    speckle_physics(&mut g);
    exact_statistics(&mut g);
    slice_independence(&mut g);
    io_round_trips(&mut g, &desk);
    parameter_accounting(&mut g, &bake);
    println!("acceptance: {} of 10 criteria failed", g.failures);
    if g.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
