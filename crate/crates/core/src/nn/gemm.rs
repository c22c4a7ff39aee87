//! Row-major single-precision matrix products on top of `matrixmultiply`.

/// Computes `C = alpha * op(A) * op(B) + beta * C` for row-major buffers.
///
/// `op(A)` is `m x k` and `op(B)` is `k x n`. When `trans_a` is set, `a` is
/// stored as `k x m`; when `trans_b` is set, `b` is stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f32,
    a: &[f32],
    b: &[f32],
    beta: f32,
    c: &mut [f32],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs has wrong length");
    assert_eq!(b.len(), k * n, "gemm: rhs has wrong length");
    assert_eq!(c.len(), m * n, "gemm: output has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index reachable through the
    // given strides lies inside the corresponding slice.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
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

/// `A (m x k) * B (k x n)` into a fresh buffer.
pub fn matmul(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut c = vec![0.0; m * n];
    gemm(false, false, m, n, k, 1.0, a, b, 0.0, &mut c);
    c
}

/// `A (m x k) * B^T` where `b` is stored `n x k`.
pub fn matmul_bt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut c = vec![0.0; m * n];
    gemm(false, true, m, n, k, 1.0, a, b, 0.0, &mut c);
    c
}

/// Accumulates `A^T * B` into `c`, where `a` is `rows x m` and `b` is `rows x n`.
pub fn accumulate_at_b(rows: usize, m: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    gemm(true, false, m, n, rows, 1.0, a, b, 1.0, c);
}

/// Adds the column sums of a `rows x n` matrix into `acc`.
pub fn accumulate_column_sums(rows: usize, n: usize, x: &[f32], acc: &mut [f32]) {
    debug_assert_eq!(x.len(), rows * n);
    for row in x.chunks_exact(n) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// Adds `bias` to every row of a `rows x n` matrix.
pub fn add_row_bias(x: &mut [f32], bias: &[f32]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}
