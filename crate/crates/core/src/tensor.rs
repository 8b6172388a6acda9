//! Dense rank-4 tensors in (batch, channel, height, width) order.

use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating point element type of the engine.
///
/// Training runs in `f32`; `f64` exists so gradient checks can use finite
/// differences without drowning in rounding noise.
pub trait Scalar:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static + std::iter::Sum
{
    /// Row-major `c = a * b + beta * c` where `a` is `m x k`, `b` is `k x n`.
    /// `trans_a` / `trans_b` read the operand as its transpose.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: bounds checked above; strides describe the row-major
                // (optionally transposed) layouts of the given slices.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Tensor dimensions: batch, channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_c(self, c: usize) -> Self {
        Dims { c, ..self }
    }

    fn checked_len(&self) -> Option<usize> {
        self.n
            .checked_mul(self.c)?
            .checked_mul(self.h)?
            .checked_mul(self.w)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: Dims, value: T) -> Self {
        Tensor4 {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        if dims.n == 0 || dims.c == 0 || dims.h == 0 || dims.w == 0 {
            return Err(Error::Shape(format!("tensor dims must be positive, got {dims}")));
        }
        match dims.checked_len() {
            Some(len) if len == data.len() => Ok(Tensor4 { dims, data }),
            _ => Err(Error::Shape(format!(
                "tensor {dims} needs {} values, got {}",
                dims.n * dims.c * dims.h * dims.w,
                data.len()
            ))),
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims.c + c) * self.dims.h + y) * self.dims.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// Contiguous `c x h x w` block of sample `n`.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.dims.c * self.dims.plane();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.dims.c * self.dims.plane();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_dims(other.dims, "zip_map")?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_dims(other.dims, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub(crate) fn expect_dims(&self, dims: Dims, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::Shape(format!(
                "{what}: left operand {} vs right operand {}",
                self.dims, dims
            )));
        }
        Ok(())
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor4<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor4({}, ", self.dims)?;
        if self.data.len() <= 16 {
            write!(f, "{:?})", self.data)
        } else {
            write!(f, "{:?} ...)", &self.data[..16])
        }
    }
}
