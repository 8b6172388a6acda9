//! Layer kernels with their hand-written backward passes.
//!
//! Every forward function here has a matching `*_backward` taking whatever
//! the forward pass had to remember. Convolutions are 3x3, stride 1, zero
//! "same" padding, lowered to a matrix product through an im2col buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Dims, Scalar, Tensor4};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// How a decoder stage merges the encoder activation of the same resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeKind {
    None,
    Sum,
    Concat,
}

impl BridgeKind {
    pub const ALL: [BridgeKind; 3] = [BridgeKind::None, BridgeKind::Sum, BridgeKind::Concat];

    pub fn name(self) -> &'static str {
        match self {
            BridgeKind::None => "none",
            BridgeKind::Sum => "sum",
            BridgeKind::Concat => "concat",
        }
    }
}

fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let plane = h * w;
    debug_assert_eq!(col.len(), c * TAPS * plane);
    for ci in 0..c {
        let src = &input[ci * plane..(ci + 1) * plane];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * plane;
                let dst = &mut col[row..row + plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => out.copy_from_slice(srow),
                        _ => {
                            out[..w - 1].copy_from_slice(&srow[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, grad: &mut [T]) {
    let plane = h * w;
    for ci in 0..c {
        let dst = &mut grad[ci * plane..(ci + 1) * plane];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * plane;
                let src = &col[row..row + plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let g = &src[y * w..(y + 1) * w];
                    let drow = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                drow[x - 1] = drow[x - 1] + g[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                drow[x] = drow[x] + g[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                drow[x + 1] = drow[x + 1] + g[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_conv<T: Scalar>(input: &Tensor4<T>, kernel: &Tensor4<T>, bias: &[T]) -> Result<()> {
    let (i, k) = (input.dims(), kernel.dims());
    if k.h != KERNEL || k.w != KERNEL {
        return Err(Error::Shape(format!(
            "conv2d: kernel {k} is not 3x3 (input {i})"
        )));
    }
    if k.c != i.c {
        return Err(Error::Shape(format!(
            "conv2d: input {i} has {} channels, kernel {k} expects {}",
            i.c, k.c
        )));
    }
    if bias.len() != k.n {
        return Err(Error::Shape(format!(
            "conv2d: kernel {k} has {} filters, bias has {}",
            k.n,
            bias.len()
        )));
    }
    Ok(())
}

/// 3x3 same-padded stride-1 convolution. `kernel` is `(filters, in_channels, 3, 3)`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor4<T>,
    kernel: &Tensor4<T>,
    bias: &[T],
) -> Result<Tensor4<T>> {
    check_conv(input, kernel, bias)?;
    let d = input.dims();
    let filters = kernel.dims().n;
    let plane = d.plane();
    let mut out = Tensor4::zeros(d.with_c(filters));
    let mut col = vec![T::zero(); d.c * TAPS * plane];
    for n in 0..d.n {
        im2col(input.sample(n), d.c, d.h, d.w, &mut col);
        let dst = out.sample_mut(n);
        for (f, &b) in bias.iter().enumerate() {
            dst[f * plane..(f + 1) * plane].fill(b);
        }
        T::gemm(
            filters,
            d.c * TAPS,
            plane,
            kernel.data(),
            false,
            &col,
            false,
            T::one(),
            dst,
        );
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub kernel: Tensor4<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    kernel: &Tensor4<T>,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let d = input.dims();
    let k = kernel.dims();
    grad_out.expect_dims(d.with_c(k.n), "conv2d_backward grad")?;
    let plane = d.plane();
    let rows = d.c * TAPS;
    let mut grad_in = Tensor4::zeros(d);
    let mut grad_k = Tensor4::zeros(k);
    let mut bias_acc = vec![0.0f64; k.n];
    let mut col = vec![T::zero(); rows * plane];
    let mut grad_col = vec![T::zero(); rows * plane];
    for n in 0..d.n {
        let g = grad_out.sample(n);
        for (f, acc) in bias_acc.iter_mut().enumerate() {
            *acc += g[f * plane..(f + 1) * plane]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
        im2col(input.sample(n), d.c, d.h, d.w, &mut col);
        // dK += g * col^T
        T::gemm(k.n, plane, rows, g, false, &col, true, T::one(), grad_k.data_mut());
        // dcol = K^T * g
        T::gemm(rows, k.n, plane, kernel.data(), true, g, false, T::zero(), &mut grad_col);
        col2im_add(&grad_col, d.c, d.h, d.w, grad_in.sample_mut(n));
    }
    Ok(ConvGrads {
        input: grad_in,
        kernel: grad_k,
        bias: bias_acc.into_iter().map(T::from_f64).collect(),
    })
}

/// Winner positions of a 2x2 max-pool, as flat indices into the pooled input.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolIndex {
    pub input_dims: Dims,
    pub winners: Vec<usize>,
}

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major scan order.
pub fn maxpool2<T: Scalar>(input: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndex)> {
    let d = input.dims();
    if !d.h.is_multiple_of(2) || !d.w.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "maxpool2: input {d} needs even height and width"
        )));
    }
    let od = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
    let mut out = Vec::with_capacity(od.len());
    let mut winners = Vec::with_capacity(od.len());
    let src = input.data();
    for n in 0..d.n {
        for c in 0..d.c {
            let base = (n * d.c + c) * d.plane();
            for oy in 0..od.h {
                for ox in 0..od.w {
                    let first = base + 2 * oy * d.w + 2 * ox;
                    let mut best = first;
                    for idx in [first + 1, first + d.w, first + d.w + 1] {
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    winners.push(best);
                }
            }
        }
    }
    Ok((
        Tensor4::from_vec(od, out)?,
        PoolIndex {
            input_dims: d,
            winners,
        },
    ))
}

pub fn maxpool2_backward<T: Scalar>(grad_out: &Tensor4<T>, index: &PoolIndex) -> Result<Tensor4<T>> {
    if grad_out.dims().len() != index.winners.len() {
        return Err(Error::Shape(format!(
            "maxpool2_backward: grad {} does not match pooled input {}",
            grad_out.dims(),
            index.input_dims
        )));
    }
    let mut grad = Tensor4::zeros(index.input_dims);
    let dst = grad.data_mut();
    for (&g, &w) in grad_out.data().iter().zip(&index.winners) {
        dst[w] = dst[w] + g;
    }
    Ok(grad)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let d = input.dims();
    let od = Dims::new(d.n, d.c, d.h * 2, d.w * 2);
    let mut out = Vec::with_capacity(od.len());
    for plane in input.data().chunks(d.plane()) {
        for y in 0..od.h {
            let row = &plane[(y / 2) * d.w..(y / 2 + 1) * d.w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    Tensor4::from_vec(od, out).expect("upsample2 dims")
}

pub fn upsample2_backward<T: Scalar>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let d = grad_out.dims();
    if !d.h.is_multiple_of(2) || !d.w.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "upsample2_backward: grad {d} has odd spatial size"
        )));
    }
    let id = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
    let mut grad = Tensor4::zeros(id);
    let src = grad_out.data();
    let dst = grad.data_mut();
    for p in 0..d.n * d.c {
        for y in 0..d.h {
            for x in 0..d.w {
                let o = p * id.plane() + (y / 2) * id.w + x / 2;
                dst[o] = dst[o] + src[p * d.plane() + y * d.w + x];
            }
        }
    }
    Ok(grad)
}

/// Merge an encoder activation (`skip`) into the decoder path (`up`).
/// Concatenation places the skip channels first.
pub fn bridge_combine<T: Scalar>(
    skip: &Tensor4<T>,
    up: &Tensor4<T>,
    kind: BridgeKind,
) -> Result<Tensor4<T>> {
    let (s, u) = (skip.dims(), up.dims());
    match kind {
        BridgeKind::None => Ok(up.clone()),
        BridgeKind::Sum => {
            if s != u {
                return Err(Error::Shape(format!(
                    "sum bridge: skip {s} vs up {u}"
                )));
            }
            skip.zip_map(up, |a, b| a + b)
        }
        BridgeKind::Concat => {
            if s.n != u.n || s.h != u.h || s.w != u.w {
                return Err(Error::Shape(format!(
                    "concat bridge: skip {s} vs up {u}"
                )));
            }
            let od = u.with_c(s.c + u.c);
            let mut data = Vec::with_capacity(od.len());
            for n in 0..u.n {
                data.extend_from_slice(skip.sample(n));
                data.extend_from_slice(up.sample(n));
            }
            Tensor4::from_vec(od, data)
        }
    }
}

/// Splits the merged gradient into (skip gradient, up gradient).
pub fn bridge_backward<T: Scalar>(
    grad_out: &Tensor4<T>,
    skip_channels: usize,
    kind: BridgeKind,
) -> Result<(Option<Tensor4<T>>, Tensor4<T>)> {
    match kind {
        BridgeKind::None => Ok((None, grad_out.clone())),
        BridgeKind::Sum => Ok((Some(grad_out.clone()), grad_out.clone())),
        BridgeKind::Concat => {
            let d = grad_out.dims();
            if skip_channels >= d.c {
                return Err(Error::Shape(format!(
                    "concat bridge backward: grad {d} cannot hold {skip_channels} skip channels"
                )));
            }
            let up_c = d.c - skip_channels;
            let split = skip_channels * d.plane();
            let mut skip = Vec::with_capacity(d.n * split);
            let mut up = Vec::with_capacity(d.n * up_c * d.plane());
            for n in 0..d.n {
                let s = grad_out.sample(n);
                skip.extend_from_slice(&s[..split]);
                up.extend_from_slice(&s[split..]);
            }
            Ok((
                Some(Tensor4::from_vec(d.with_c(skip_channels), skip)?),
                Tensor4::from_vec(d.with_c(up_c), up)?,
            ))
        }
    }
}

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of relu given the forward *input*.
pub fn relu_backward<T: Scalar>(input: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    input.zip_map(grad_out, |x, g| if x > T::zero() { g } else { T::zero() })
}

pub fn linear_activation<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.clone()
}

pub fn check_dropout_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Returns the output and the per-element multiplier
/// (0 or 1/(1-p)) needed by the backward pass; `None` when the layer was a no-op.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor4<T>,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor4<T>, Option<Vec<T>>)> {
    check_dropout_rate(p)?;
    if mode == Mode::Infer || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::from_f64(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..input.dims().len())
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((Tensor4::from_vec(input.dims(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor4<T>, mask: Option<&[T]>) -> Tensor4<T> {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor4::from_vec(grad_out.dims(), data).expect("dropout mask length")
        }
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(T, Tensor4<T>)> {
    pred.expect_dims(target.dims(), "mse_loss")?;
    let n = pred.dims().len() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    let scale = T::from_f64(2.0 / n);
    let grad = pred.zip_map(target, |p, t| (p - t) * scale)?;
    Ok((T::from_f64(sum / n), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(dims: Dims, v: &[f64]) -> Tensor4<f64> {
        Tensor4::from_vec(dims, v.to_vec()).unwrap()
    }

    fn random(dims: Dims, seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(dims, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    /// Direct 7-loop convolution, independent of the im2col path.
    fn conv_naive(x: &Tensor4<f64>, k: &Tensor4<f64>, b: &[f64]) -> Tensor4<f64> {
        let d = x.dims();
        let kd = k.dims();
        Tensor4::from_fn(d.with_c(kd.n), |n, f, y, xx| {
            let mut acc = b[f];
            for c in 0..d.c {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        let sx = xx as isize + kx as isize - 1;
                        if sy >= 0 && sx >= 0 && (sy as usize) < d.h && (sx as usize) < d.w {
                            acc += x.at(n, c, sy as usize, sx as usize) * k.at(f, c, ky, kx);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn conv_zero_input_gives_bias() {
        let x = Tensor4::<f64>::zeros(Dims::new(1, 1, 4, 4));
        let k = random(Dims::new(2, 1, 3, 3), 1);
        let out = conv2d_forward(&x, &k, &[0.25, -1.5]).unwrap();
        assert_eq!(out.dims(), Dims::new(1, 2, 4, 4));
        assert!(out.sample(0)[..16].iter().all(|&v| v == 0.25));
        assert!(out.sample(0)[16..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn conv_identity_kernel() {
        let x = random(Dims::new(2, 1, 5, 6), 2);
        let mut k = Tensor4::zeros(Dims::new(1, 1, 3, 3));
        k.set(0, 0, 1, 1, 1.0);
        let out = conv2d_forward(&x, &k, &[0.0]).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_box_sum() {
        let x = Tensor4::<f64>::full(Dims::new(1, 1, 3, 3), 1.0);
        let k = Tensor4::full(Dims::new(1, 1, 3, 3), 1.0);
        let out = conv2d_forward(&x, &k, &[0.0]).unwrap();
        assert_eq!(out.at(0, 0, 1, 1), 9.0);
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
        assert_eq!(out.at(0, 0, 0, 1), 6.0);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let x = random(Dims::new(2, 3, 6, 5), 3);
        let k = random(Dims::new(4, 3, 3, 3), 4);
        let b = [0.1, -0.2, 0.3, 0.0];
        let fast = conv2d_forward(&x, &k, &b).unwrap();
        let slow = conv_naive(&x, &k, &b);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_shape_errors_name_operands() {
        let x = Tensor4::<f64>::zeros(Dims::new(1, 2, 4, 4));
        let k = Tensor4::zeros(Dims::new(1, 3, 3, 3));
        let err = conv2d_forward(&x, &k, &[0.0]).unwrap_err().to_string();
        assert!(err.contains("1x2x4x4") && err.contains("1x3x3x3"), "{err}");
        let k5 = Tensor4::zeros(Dims::new(1, 2, 5, 5));
        assert!(conv2d_forward(&x, &k5, &[0.0]).is_err());
        let k = Tensor4::zeros(Dims::new(2, 2, 3, 3));
        assert!(conv2d_forward(&x, &k, &[0.0]).is_err());
    }

    #[test]
    fn conv_is_linear() {
        let x = random(Dims::new(1, 2, 8, 8), 5);
        let y = random(Dims::new(1, 2, 8, 8), 6);
        let k = random(Dims::new(3, 2, 3, 3), 7);
        let zero = [0.0; 3];
        let (a, b) = (0.7, -1.3);
        let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
        let lhs = conv2d_forward(&mix, &k, &zero).unwrap();
        let cx = conv2d_forward(&x, &k, &zero).unwrap();
        let cy = conv2d_forward(&y, &k, &zero).unwrap();
        for i in 0..lhs.data().len() {
            let rhs = a * cx.data()[i] + b * cy.data()[i];
            assert!((lhs.data()[i] - rhs).abs() <= 1e-5 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn maxpool_window() {
        let x = t(Dims::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]);
        let (out, idx) = maxpool2(&x).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(idx.winners, vec![3]);
    }

    #[test]
    fn maxpool_ties_take_first_in_scan_order() {
        let x = Tensor4::<f64>::full(Dims::new(1, 1, 4, 4), 0.5);
        let (out, idx) = maxpool2(&x).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
        assert_eq!(idx.winners, vec![0, 2, 8, 10]);
    }

    #[test]
    fn maxpool_matches_window_scan() {
        let x = random(Dims::new(1, 1, 4, 4), 11);
        let (out, idx) = maxpool2(&x).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut best = f64::NEG_INFINITY;
                let mut at = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (y, xx) = (2 * oy + dy, 2 * ox + dx);
                        if x.at(0, 0, y, xx) > best {
                            best = x.at(0, 0, y, xx);
                            at = y * 4 + xx;
                        }
                    }
                }
                assert_eq!(out.at(0, 0, oy, ox), best);
                assert_eq!(idx.winners[oy * 2 + ox], at);
            }
        }
    }

    #[test]
    fn maxpool_rejects_odd() {
        let x = Tensor4::<f64>::zeros(Dims::new(1, 1, 3, 4));
        assert!(matches!(maxpool2(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn upsample_replicates() {
        let x = t(Dims::new(1, 1, 1, 1), &[1.0]);
        assert_eq!(upsample2(&x).data(), &[1.0; 4]);
        let x = random(Dims::new(2, 3, 4, 6), 12);
        let (p, _) = maxpool2(&x).unwrap();
        assert_eq!(upsample2(&p).dims(), x.dims());
        let u = upsample2(&x);
        for n in 0..2 {
            for c in 0..3 {
                for y in 0..4 {
                    for xx in 0..6 {
                        let v = x.at(n, c, y, xx);
                        assert_eq!(u.at(n, c, 2 * y, 2 * xx), v);
                        assert_eq!(u.at(n, c, 2 * y + 1, 2 * xx), v);
                        assert_eq!(u.at(n, c, 2 * y, 2 * xx + 1), v);
                        assert_eq!(u.at(n, c, 2 * y + 1, 2 * xx + 1), v);
                    }
                }
            }
        }
    }

    #[test]
    fn bridges() {
        let up = random(Dims::new(1, 5, 4, 4), 13);
        let skip = random(Dims::new(1, 5, 4, 4), 14);
        assert_eq!(bridge_combine(&skip, &up, BridgeKind::None).unwrap(), up);
        let neg = up.scale(-1.0);
        let z = bridge_combine(&neg, &up, BridgeKind::Sum).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let cat = bridge_combine(&skip, &up, BridgeKind::Concat).unwrap();
        assert_eq!(cat.dims().c, 10);
        assert_eq!(cat.at(0, 0, 1, 2), skip.at(0, 0, 1, 2));
        assert_eq!(cat.at(0, 5, 1, 2), up.at(0, 0, 1, 2));
        let other = random(Dims::new(1, 3, 4, 4), 15);
        assert!(bridge_combine(&other, &up, BridgeKind::Sum).is_err());
        assert!(bridge_combine(&other, &up, BridgeKind::Concat).is_ok());
        let small = random(Dims::new(1, 5, 2, 2), 16);
        assert!(bridge_combine(&small, &up, BridgeKind::Concat).is_err());
    }

    #[test]
    fn activations_and_dropout() {
        let x = t(Dims::new(1, 1, 1, 2), &[-1.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        assert_eq!(linear_activation(&x), x);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = random(Dims::new(1, 2, 8, 8), 3);
        assert_eq!(dropout(&y, 0.0, Mode::Train, &mut rng).unwrap().0, y);
        assert_eq!(dropout(&y, 0.9, Mode::Infer, &mut rng).unwrap().0, y);
        assert!(matches!(
            dropout(&y, 1.0, Mode::Train, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(dropout(&y, -0.1, Mode::Infer, &mut rng).is_err());
        let (d, mask) = dropout(&y, 0.5, Mode::Train, &mut rng).unwrap();
        let mask = mask.unwrap();
        for ((&o, &i), &m) in d.data().iter().zip(y.data()).zip(&mask) {
            assert!(m == 0.0 || m == 2.0);
            assert_eq!(o, i * m);
        }
    }

    #[test]
    fn mse_examples() {
        let d = Dims::new(1, 1, 1, 2);
        let a = t(d, &[0.3, 0.7]);
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
        let ones = Tensor4::<f64>::full(d, 1.0);
        let zeros = Tensor4::<f64>::zeros(d);
        assert_eq!(mse_loss(&ones, &zeros).unwrap().0, 1.0);
        let (l, g) = mse_loss(&t(d, &[0.0, 0.5]), &t(d, &[0.5, 0.5])).unwrap();
        assert_eq!(l, 0.125);
        assert_eq!(g.data(), &[-0.5, 0.0]);
        assert!(mse_loss(&a, &Tensor4::zeros(Dims::new(1, 1, 2, 1))).is_err());
    }
}
