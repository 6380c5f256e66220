//! Dense kernels over row-major `f64` slices. Summation order is fixed so
//! results are reproducible bit for bit.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out += m · x` for `m` of shape `[out.len() × x.len()]`.
#[inline]
pub fn matvec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += mᵀ · d` for `m` of shape `[d.len() × out.len()]`.
#[inline]
pub fn matvec_t_add(m: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(m.len(), d.len() * cols);
    for (&di, row) in d.iter().zip(m.chunks_exact(cols)) {
        if di != 0.0 {
            axpy(di, row, out);
        }
    }
}

/// `g += d ⊗ x` for `g` of shape `[d.len() × x.len()]`.
#[inline]
pub fn outer_add(d: &[f64], x: &[f64], g: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(g.len(), d.len() * cols);
    for (&di, row) in d.iter().zip(g.chunks_exact_mut(cols)) {
        if di != 0.0 {
            axpy(di, x, row);
        }
    }
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Orthonormalizes the columns of a square row-major matrix in place with
/// two passes of classical Gram-Schmidt. The result is the `Q` factor of
/// the QR decomposition whose `R` has a positive diagonal.
pub fn orthonormalize_columns(a: &mut [f64], n: usize) {
    debug_assert_eq!(a.len(), n * n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        for (r, c) in col.iter_mut().enumerate() {
            *c = a[r * n + j];
        }
        for _pass in 0..2 {
            for k in 0..j {
                let proj: f64 = (0..n).map(|r| a[r * n + k] * col[r]).sum();
                for (r, c) in col.iter_mut().enumerate() {
                    *c -= proj * a[r * n + k];
                }
            }
        }
        let norm = col.iter().map(|c| c * c).sum::<f64>().sqrt();
        for (r, c) in col.iter().enumerate() {
            a[r * n + j] = c / norm;
        }
    }
}
