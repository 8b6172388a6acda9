//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use octflow::evalstat::{PairedOutcomes, PairedUnit, Predictive};
use octflow::nn::gradcheck::{check_flat, GradCheckReport};
use octflow::nn::{BridgeKind, Graph, Mode, Op, ParamStore};
use octflow::{Dims, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- gradients

pub const GRAD_DELTA: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-3;

pub fn random_tensor(dims: Dims, seed: u64) -> Tensor4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(dims, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

/// Moves zero-initialised biases off zero so that no pre-activation sits
/// exactly on a ReLU kink, where one-sided and central differences disagree.
pub fn generic_point(params: &mut ParamStore<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params.iter_mut() {
        if p.name.ends_with(".bias") {
            for v in p.value.data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
}

/// A one-layer (or minimal) program exercising one layer type.
pub struct LayerCase {
    pub name: &'static str,
    pub graph: Graph,
    pub params: ParamStore<f64>,
    pub input: Tensor4<f64>,
    pub mode: Mode,
}

fn conv_params(cin: usize, cout: usize, seed: u64) -> ParamStore<f64> {
    let mut p = ParamStore::new();
    p.push("conv.weight", random_tensor(Dims::new(cout, cin, 3, 3), seed));
    p.push("conv.bias", random_tensor(Dims::new(1, cout, 1, 1), seed + 1));
    p
}

pub fn layer_cases() -> Vec<LayerCase> {
    let input = |c: usize, seed: u64| random_tensor(Dims::new(2, c, 8, 8), seed);
    let bridge = |name, kind, cout| LayerCase {
        name,
        graph: Graph {
            ops: vec![
                Op::Save { slot: 0 },
                Op::Conv { param: 0 },
                Op::Bridge { slot: 0, kind },
            ],
            slots: 1,
        },
        params: conv_params(2, cout, 30),
        input: input(2, 31),
        mode: Mode::Infer,
    };
    let bare = |name, op: Op, mode| LayerCase {
        name,
        graph: Graph {
            ops: vec![op],
            slots: 0,
        },
        params: ParamStore::new(),
        input: input(3, 40),
        mode,
    };
    vec![
        LayerCase {
            name: "conv",
            graph: Graph {
                ops: vec![Op::Conv { param: 0 }],
                slots: 0,
            },
            params: conv_params(2, 3, 10),
            input: input(2, 11),
            mode: Mode::Infer,
        },
        bare("relu", Op::Relu, Mode::Infer),
        bare("dropout", Op::Dropout { rate: 0.3 }, Mode::Train),
        bare("maxpool", Op::Pool, Mode::Infer),
        bare("upsample", Op::Upsample, Mode::Infer),
        bridge("bridge-none", BridgeKind::None, 2),
        bridge("bridge-sum", BridgeKind::Sum, 2),
        bridge("bridge-concat", BridgeKind::Concat, 3),
    ]
}

/// Mean squared error written out directly, independent of the library loss.
fn objective(out: &Tensor4<f64>, target: &Tensor4<f64>) -> f64 {
    let n = out.data().len() as f64;
    out.data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Finite-difference reports for every parameter and every input element of
/// `mse(graph(input), target)`. Stochastic layers reuse one mask seed.
pub fn check_program(
    graph: &Graph,
    params: &ParamStore<f64>,
    input: &Tensor4<f64>,
    mode: Mode,
    seed: u64,
) -> (GradCheckReport, GradCheckReport) {
    let rng = || ChaCha8Rng::seed_from_u64(seed);
    let probe = graph.forward(params, input, mode, &mut rng()).unwrap();
    let target = random_tensor(probe.dims(), seed ^ 0xABCD);

    let mut session = octflow::nn::GradSession::new(graph, params);
    let out = session.forward(input, mode, &mut rng()).unwrap();
    let (_, grad) = octflow::nn::ops::mse_loss(&out, &target).unwrap();
    let (pgrads, igrad) = session.backward_full(&grad).unwrap();

    let mut p = params.clone();
    let param_report = check_flat(
        &mut p,
        0..params.total_count(),
        GRAD_DELTA,
        |s, i| s.flat_get(i),
        |s, i, v| s.flat_set(i, v),
        |s| objective(&graph.forward(s, input, mode, &mut rng()).unwrap(), &target),
        |i| pgrads.flat_get(i),
    );
    let mut x = input.clone();
    let input_report = check_flat(
        &mut x,
        0..input.data().len(),
        GRAD_DELTA,
        |s, i| s.data()[i],
        |s, i, v| s.data_mut()[i] = v,
        |s| objective(&graph.forward(params, s, mode, &mut rng()).unwrap(), &target),
        |i| igrad.data()[i],
    );
    (param_report, input_report)
}

// ------------------------------------------------------- exact-test oracles

/// `ln k!` for `k <= n` by direct summation.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

fn ln_choose(lf: &[f64], n: u64, k: u64) -> f64 {
    lf[n as usize] - lf[k as usize] - lf[(n - k) as usize]
}

/// Relative slack when deciding whether a table is no more likely than the observed one.
pub const TIE_SLACK: f64 = 1e-7;

/// Two-sided Fisher p by enumerating every table with the observed margins.
pub fn fisher_oracle(lf: &[f64], t: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = t;
    let (r1, r2, c1, n) = (a + b, c + d, a + c, a + b + c + d);
    let pmf = |x: u64| (ln_choose(lf, r1, x) + ln_choose(lf, r2, c1 - x) - ln_choose(lf, n, c1)).exp();
    let observed = pmf(a);
    (c1.saturating_sub(r2)..=r1.min(c1))
        .map(pmf)
        .filter(|&p| p <= observed * (1.0 + TIE_SLACK))
        .sum::<f64>()
        .min(1.0)
}

/// Two-sided exact McNemar p: total Binomial(b + c, 1/2) mass of outcomes no
/// more likely than the observed split.
pub fn mcnemar_oracle(lf: &[f64], b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let pmf = |k: u64| (ln_choose(lf, n, k) - n as f64 * std::f64::consts::LN_2).exp();
    let observed = pmf(b);
    (0..=n)
        .map(pmf)
        .filter(|&p| p <= observed * (1.0 + TIE_SLACK))
        .sum::<f64>()
        .min(1.0)
}

// ------------------------------------------------- predictive-value oracle

/// Cluster-robust score statistic for equal predictive values, written
/// per unit: each unit contributes the centred cross-products of its calls.
pub fn score_statistic(units: &[(bool, bool, bool)], which: Predictive) -> Option<f64> {
    let call = |c: bool| match which {
        Predictive::Ppv => c,
        Predictive::Npv => !c,
    };
    // Observations (is rater b, correct) grouped by unit.
    let mut m = 0.0;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    let mut calls_a = 0;
    let mut calls_b = 0;
    for &(t, a, b) in units {
        for (is_b, c) in [(0.0, a), (1.0, b)] {
            if call(c) {
                m += 1.0;
                sum_x += is_b;
                sum_y += (c == t) as u8 as f64;
                if is_b == 0.0 { calls_a += 1 } else { calls_b += 1 }
            }
        }
    }
    if calls_a == 0 || calls_b == 0 {
        return None;
    }
    let (mx, my) = (sum_x / m, sum_y / m);
    let (mut u, mut v) = (0.0, 0.0);
    for &(t, a, b) in units {
        let mut ui = 0.0;
        for (is_b, c) in [(0.0, a), (1.0, b)] {
            if call(c) {
                ui += (is_b - mx) * ((c == t) as u8 as f64 - my);
            }
        }
        u += ui;
        v += ui * ui;
    }
    Some(if v > 0.0 { u * u / v } else { 0.0 })
}

/// Permutation mid-p for equal predictive values: swaps the two raters'
/// calls within each unit at random and refers the observed score statistic
/// to its permutation distribution, counting ties with the observed value
/// as one half. The statistic is discrete, and the mid-p is the quantity a
/// continuous reference distribution approximates.
pub fn predictive_permutation_p(paired: &PairedOutcomes, which: Predictive, resamples: usize, seed: u64) -> f64 {
    let units: Vec<(bool, bool, bool)> = paired
        .units()
        .iter()
        .map(|u| (u.truth, u.rater_a, u.rater_b))
        .collect();
    let observed = score_statistic(&units, which).expect("both raters make calls");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = units.clone();
    let (mut above, mut ties) = (0usize, 0usize);
    for _ in 0..resamples {
        for (dst, &(t, a, b)) in buf.iter_mut().zip(&units) {
            *dst = if rng.gen::<bool>() { (t, b, a) } else { (t, a, b) };
        }
        if let Some(g) = score_statistic(&buf, which) {
            if (g - observed).abs() <= 1e-9 * observed.max(1e-12) {
                ties += 1;
            } else if g > observed {
                above += 1;
            }
        }
    }
    (above as f64 + 0.5 * ties as f64) / resamples as f64
}

/// Paired calls for `n` units: reference prevalence `prev`, rater accuracies
/// on positives / negatives, and a shared per-unit difficulty that
/// correlates the two raters.
pub fn paired_dataset(n: usize, prev: f64, a: (f64, f64), b: (f64, f64), seed: u64) -> PairedOutcomes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = (0..n)
        .map(|i| {
            let truth = rng.gen::<f64>() < prev;
            let shared: f64 = rng.gen();
            let correct = |acc: (f64, f64), rng: &mut ChaCha8Rng| {
                let p = if truth { acc.0 } else { acc.1 };
                // Half of the time both raters share the same draw.
                let u = if rng.gen::<bool>() { shared } else { rng.gen() };
                u < p
            };
            let ca = correct(a, &mut rng);
            let cb = correct(b, &mut rng);
            PairedUnit {
                id: format!("u{i}"),
                truth,
                rater_a: if ca { truth } else { !truth },
                rater_b: if cb { truth } else { !truth },
            }
        })
        .collect();
    PairedOutcomes::new(units).unwrap()
}

/// Twenty datasets with moderate predictive values, spanning null and
/// moderately non-null rater gaps. Saturated predictive values (few wrong
/// calls) make the statistic too coarse for any chi-square reference.
pub fn score_test_datasets() -> Vec<PairedOutcomes> {
    (0..20u64)
        .map(|k| {
            let prev = 0.35 + 0.01 * k as f64;
            let gap = [0.0, 0.03, 0.06, 0.09][(k % 4) as usize];
            let a = (0.78, 0.80);
            let b = (0.78 - gap, 0.80 - gap);
            paired_dataset(300, prev, a, b, 1000 + k)
        })
        .collect()
}
