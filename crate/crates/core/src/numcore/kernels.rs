//! Dense row-major kernels shared by the eager tensor API and the graph.

use super::Scalar;

/// `c[m×n] = a[m×k] · b[k×n]`
pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// `c += a[m×k] · b[k×n]`
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, &bj) in row.iter_mut().zip(brow) {
                *cj = *cj + aip * bj;
            }
        }
    }
}

/// `c += a[m×k] · b[n×k]ᵀ`
pub fn matmul_nt_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc = acc + x * y;
            }
            c[i * n + j] = c[i * n + j] + acc;
        }
    }
}

/// `c += a[k×m]ᵀ · b[k×n]`
pub fn matmul_tn_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], k: usize, m: usize, n: usize) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &api) in arow.iter().enumerate() {
            if api == S::zero() {
                continue;
            }
            let row = &mut c[i * n..(i + 1) * n];
            for (cj, &bj) in row.iter_mut().zip(brow) {
                *cj = *cj + api * bj;
            }
        }
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner) strides.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// Max-subtracted softmax along `axis`.
pub fn softmax<S: Scalar>(data: &[S], shape: &[usize], axis: usize) -> Vec<S> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut out = vec![S::zero(); data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let mut max = S::neg_infinity();
            for j in 0..len {
                max = max.max(data[idx(j)]);
            }
            let mut total = S::zero();
            for j in 0..len {
                let e = (data[idx(j)] - max).exp();
                out[idx(j)] = e;
                total = total + e;
            }
            for j in 0..len {
                out[idx(j)] = out[idx(j)] / total;
            }
        }
    }
    out
}

/// Tanh approximation of GELU and its derivative.
pub fn gelu<S: Scalar>(x: S) -> (S, S) {
    let c = S::lit(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = S::lit(0.044_715);
    let half = S::lit(0.5);
    let one = S::one();
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let y = half * x * (one + t);
    let du = c * (one + S::lit(3.0) * a * x * x);
    let dy = half * (one + t) + half * x * (one - t * t) * du;
    (y, dy)
}
