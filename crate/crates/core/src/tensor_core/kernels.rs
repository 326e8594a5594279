//! Forward/backward arithmetic shared by the graph and the no-grad
//! inference path. Both paths call these functions, so a network evaluated
//! either way produces bit-identical outputs for identical inputs.

/// Epsilon inside layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-6;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// `c[m,n] = a[m,k] * b[k,n]` (overwrites `c`).
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    // SAFETY: slice lengths are checked above; strides describe dense
    // row-major buffers of exactly those lengths.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `da[m,k] += dc[m,n] * b[k,n]^T`.
pub fn matmul_grad_lhs(dc: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    // SAFETY: `b` is read through transposed strides of its `[k,n]` layout.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            dc.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            1.0,
            da.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// `db[k,n] += a[m,k]^T * dc[m,n]`.
pub fn matmul_grad_rhs(a: &[f64], dc: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    // SAFETY: `a` is read through transposed strides of its `[m,k]` layout.
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            dc.as_ptr(),
            n as isize,
            1,
            1.0,
            db.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Adds a bias row to every row of `x`.
pub fn add_bias(x: &mut [f64], bias: &[f64]) {
    let n = bias.len();
    for row in x.chunks_exact_mut(n) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// GELU with the tanh approximation.
#[inline]
pub fn gelu(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + inner.tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = inner.tanh();
    let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Per-row layer normalisation with affine gain/shift. Writes the
/// normalised-but-unscaled values into `xhat` and each row's reciprocal
/// standard deviation into `rstd`.
pub fn layer_norm(
    x: &[f64],
    gain: &[f64],
    shift: &[f64],
    out: &mut [f64],
    xhat: &mut [f64],
    rstd: &mut [f64],
) {
    let n = gain.len();
    for (r, row) in x.chunks_exact(n).enumerate() {
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd[r] = inv;
        let base = r * n;
        for j in 0..n {
            let h = (row[j] - mean) * inv;
            xhat[base + j] = h;
            out[base + j] = h * gain[j] + shift[j];
        }
    }
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Vectors shorter than this are degenerate for length normalisation.
pub const NORM_FLOOR: f64 = 1e-8;

/// In-place `v / |v| * sqrt(d)`. Rows below [`NORM_FLOOR`] become zero
/// and the function returns `false`.
pub fn length_normalize_row(row: &mut [f64]) -> bool {
    let n = norm(row);
    if n < NORM_FLOOR {
        row.fill(0.0);
        return false;
    }
    let f = (row.len() as f64).sqrt() / n;
    row.iter_mut().for_each(|v| *v *= f);
    true
}

/// In-place `v * tanh(|v|)/|v| * sqrt(d)`.
pub fn soft_normalize_row(row: &mut [f64]) {
    let f = tanh_over(norm(row)) * (row.len() as f64).sqrt();
    row.iter_mut().for_each(|v| *v *= f);
}

const SERIES_CUTOFF: f64 = 1e-2;

/// `tanh(r)/r`, continuous at zero.
#[inline]
pub fn tanh_over(r: f64) -> f64 {
    if r < SERIES_CUTOFF {
        // tanh r / r = 1 - r^2/3 + 2 r^4/15 - 17 r^6/315 + ...
        let r2 = r * r;
        1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0 - 17.0 * r2 * r2 * r2 / 315.0
    } else {
        r.tanh() / r
    }
}

/// Derivative of `tanh(r)/r` with respect to `r`, divided by `r`.
///
/// Needed for the Jacobian of soft normalisation: `d/dv [v f(|v|)]` has the
/// term `v v^T f'(r)/r`.
#[inline]
pub fn tanh_over_grad_div_r(r: f64) -> f64 {
    if r < SERIES_CUTOFF {
        // f'(r)/r = -2/3 + 8 r^2/15 - 102 r^4/315 + ...
        let r2 = r * r;
        -2.0 / 3.0 + 8.0 * r2 / 15.0 - 102.0 * r2 * r2 / 315.0
    } else {
        let t = r.tanh();
        let sech2 = 1.0 - t * t;
        (sech2 * r - t) / (r * r * r)
    }
}
