//! Dense kernels shared by the float encoder and the quantized path.
//!
//! Matrices are row-major. Linear weights are stored `[out × in]` so that
//! every output feature is a contiguous row.

use super::Scalar;

/// Dot product with eight independent accumulators; the summation order is
/// fixed, so results are bit-reproducible.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * *xi;
    }
}

/// `out[rows × n_out] = x[rows × n_in] · Wᵀ + b`
pub fn linear<T: Scalar>(x: &[T], w: &[T], b: &[T], n_in: usize, n_out: usize) -> Vec<T> {
    let rows = x.len() / n_in;
    let mut out = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            out.push(dot(xr, &w[o * n_in..(o + 1) * n_in]) + b[o]);
        }
    }
    out
}

/// Backward of [`linear`]: accumulates into `dw`/`db` and returns `dx`.
pub fn linear_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    n_in: usize,
    n_out: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let rows = x.len() / n_in;
    let mut dx = vec![T::zero(); rows * n_in];
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        let dxr = &mut dx[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let g = dy[r * n_out + o];
            if g == T::zero() {
                continue;
            }
            db[o] = db[o] + g;
            axpy(g, xr, &mut dw[o * n_in..(o + 1) * n_in]);
            axpy(g, &w[o * n_in..(o + 1) * n_in], dxr);
        }
    }
    dx
}

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Per-row normalization state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub fn layer_norm<T: Scalar>(x: &[T], gamma: &[T], beta: &[T]) -> (Vec<T>, NormCache<T>) {
    let d = gamma.len();
    let rows = x.len() / d;
    let n = T::of(d as f64);
    let eps = T::of(LAYER_NORM_EPS);
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().fold(T::zero(), |a, v| a + v) / n;
        let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gamma[j] + beta[j];
        }
    }
    (out, NormCache { xhat, inv_std })
}

pub fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &NormCache<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let d = gamma.len();
    let rows = dy.len() / d;
    let n = T::of(d as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let (mut s1, mut s2) = (T::zero(), T::zero());
        for j in 0..d {
            dgamma[j] = dgamma[j] + dyr[j] * xh[j];
            dbeta[j] = dbeta[j] + dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            s1 = s1 + dxhat[j];
            s2 = s2 + dxhat[j] * xh[j];
        }
        let (m1, m2) = (s1 / n, s2 / n);
        let is = cache.inv_std[r];
        for j in 0..d {
            dx[r * d + j] = is * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// GELU, tanh approximation: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(GELU_K);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(GELU_K);
    let half = T::of(0.5);
    let three = T::of(3.0);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x)
}

/// In-place softmax over `row` where `keep[j]` is false for masked keys.
/// Masked entries come out exactly zero.
pub fn masked_softmax<T: Scalar>(row: &mut [T], keep: &[bool]) {
    let mut max = T::neg_infinity();
    for (v, &k) in row.iter().zip(keep) {
        if k && *v > max {
            max = *v;
        }
    }
    let mut sum = T::zero();
    for (v, &k) in row.iter_mut().zip(keep) {
        if k {
            *v = (*v - max).exp();
            sum = sum + *v;
        } else {
            *v = T::zero();
        }
    }
    if sum > T::zero() {
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}
