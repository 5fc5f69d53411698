use alloc::vec;
use alloc::vec::Vec;

use super::{DenseMatrix, LinalgError};
use crate::math;

/// Orthonormal spatial modes with their singular values.
///
/// Columns of `u` are orthonormal (to 1e-10) and `sigma` is sorted
/// descending. The sign convention fixes each column so its
/// largest-magnitude entry is positive, which makes factors reproducible
/// byte-for-byte across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    u: DenseMatrix,
    sigma: Vec<f64>,
}

impl ReducedBasis {
    /// Wraps an existing basis. Checks shape agreement and the singular
    /// value ordering, not orthonormality.
    pub fn new(u: DenseMatrix, sigma: Vec<f64>) -> Result<Self, LinalgError> {
        if u.cols() != sigma.len() {
            return Err(LinalgError::ShapeMismatch {
                op: "basis",
                left: (u.rows(), u.cols()),
                right: (sigma.len(), 1),
            });
        }
        if !u.is_finite() || sigma.iter().any(|s| !s.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        if sigma.windows(2).any(|w| w[0] < w[1]) || sigma.iter().any(|&s| s < 0.0) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { u, sigma })
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// Latent coefficients `V = U^T X` of shape rank x Nt.
    pub fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if x.rows() != self.u.rows() {
            return Err(LinalgError::ShapeMismatch {
                op: "project",
                left: (self.u.rows(), self.u.cols()),
                right: (x.rows(), x.cols()),
            });
        }
        self.u.matmul_at_b(x)
    }

    /// Full-order state `U V` from latent coefficients.
    pub fn reconstruct(&self, v: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if v.rows() != self.rank() {
            return Err(LinalgError::ShapeMismatch {
                op: "reconstruct",
                left: (self.u.rows(), self.u.cols()),
                right: (v.rows(), v.cols()),
            });
        }
        self.u.matmul(v)
    }
}

/// Top-`rank` singular triplets of `a`.
///
/// Returns the reduced basis (left vectors and singular values) together
/// with the right factor `Vt` of shape rank x cols, so that
/// `U * diag(sigma) * Vt` is the best rank-`rank` approximation of `a`
/// in the Frobenius norm.
///
/// The decomposition runs Householder QR first, then Golub–Kahan
/// bidiagonalization of the triangular factor and implicit-shift QR on the
/// bidiagonal. Wide inputs are handled by transposition.
pub fn truncated_svd(
    a: &DenseMatrix,
    rank: usize,
) -> Result<(ReducedBasis, DenseMatrix), LinalgError> {
    let max_rank = a.rows().min(a.cols());
    if rank == 0 || rank > max_rank {
        return Err(LinalgError::RankTooLarge {
            rank,
            max: max_rank,
        });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }

    if a.rows() < a.cols() {
        // A = (A^T)^T = V' S U'^T: swap the roles of the two factors.
        let at = a.transpose();
        let (basis_t, vt_t) = truncated_svd_tall(&at, rank)?;
        let mut u = vt_t.transpose();
        let mut vt = basis_t.u.transpose();
        fix_signs(&mut u, &mut vt);
        let basis = ReducedBasis {
            u,
            sigma: basis_t.sigma,
        };
        return Ok((basis, vt));
    }

    truncated_svd_tall(a, rank)
}

fn truncated_svd_tall(
    a: &DenseMatrix,
    rank: usize,
) -> Result<(ReducedBasis, DenseMatrix), LinalgError> {
    let m = a.rows();
    let n = a.cols();

    // QR first: the iteration then works on an n x n factor regardless of m.
    let mut work = a.clone();
    let qr_betas = householder_qr(&mut work);
    let mut r_mat = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r_mat[(i, j)] = work[(i, j)];
        }
    }

    let bid = bidiagonalize(&mut r_mat);
    let mut diag = bid.diag;
    let mut sup = bid.sup;
    let mut u_b = accumulate_left(&r_mat, &bid.left_betas);
    let mut v_b = accumulate_right(&r_mat, &bid.right_betas);
    bidiag_qr(&mut diag, &mut sup, &mut u_b, &mut v_b)?;

    // Thin U = Q * U_b[:, :rank], applying the stored QR reflectors.
    let mut u = DenseMatrix::zeros(m, rank);
    for j in 0..rank {
        let col = u_b.col(j);
        for i in 0..n {
            u[(i, j)] = col[i];
        }
    }
    apply_q_thin(&work, &qr_betas, &mut u);

    let mut vt = DenseMatrix::zeros(rank, n);
    for j in 0..rank {
        let col = v_b.col(j);
        vt.row_mut(j).copy_from_slice(col);
    }

    fix_signs(&mut u, &mut vt);
    let sigma = diag[..rank].to_vec();
    Ok((ReducedBasis { u, sigma }, vt))
}

/// Flips each column of `u` (and the matching row of `vt`) so the entry of
/// largest magnitude is positive. Ties resolve to the first occurrence.
fn fix_signs(u: &mut DenseMatrix, vt: &mut DenseMatrix) {
    for j in 0..u.cols() {
        let mut best = 0.0f64;
        let mut best_val = 0.0f64;
        for i in 0..u.rows() {
            let v = u[(i, j)];
            if v.abs() > best {
                best = v.abs();
                best_val = v;
            }
        }
        if best_val < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for c in 0..vt.cols() {
                vt[(j, c)] = -vt[(j, c)];
            }
        }
    }
}

// ── Householder machinery ────────────────────────────────────────────

/// Householder vector for x = (x0, tail): returns (beta, mu) where
/// H = I - beta v v^T maps x to mu e1, v0 = 1 and the scaled tail
/// replaces the input tail in place. `mu >= 0` always.
fn make_householder(x0: f64, tail: &mut [f64]) -> (f64, f64) {
    let sigma: f64 = tail.iter().map(|v| v * v).sum();
    if sigma == 0.0 {
        // Nothing below the pivot; reflect only if x0 is negative so the
        // produced diagonal stays non-negative.
        return (0.0, x0);
    }
    let mu = math::sqrt(x0 * x0 + sigma);
    let v0 = if x0 <= 0.0 {
        x0 - mu
    } else {
        -sigma / (x0 + mu)
    };
    let beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
    for t in tail.iter_mut() {
        *t /= v0;
    }
    (beta, mu)
}

/// In-place Householder QR for m >= n. R lands in the upper triangle and
/// the reflector tails below the diagonal; returns one beta per column.
fn householder_qr(a: &mut DenseMatrix) -> Vec<f64> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);
    let mut betas = vec![0.0; n];
    let mut s = vec![0.0; n];

    for k in 0..n {
        let mut tail: Vec<f64> = (k + 1..m).map(|i| a[(i, k)]).collect();
        let (beta, mu) = make_householder(a[(k, k)], &mut tail);
        for (off, i) in (k + 1..m).enumerate() {
            a[(i, k)] = tail[off];
        }
        a[(k, k)] = mu;
        betas[k] = beta;
        if beta == 0.0 {
            continue;
        }

        // Trailing update A[k:, k+1:] -= beta v (v^T A[k:, k+1:]),
        // streamed row-wise.
        let width = n - k - 1;
        if width == 0 {
            continue;
        }
        let sj = &mut s[..width];
        sj.copy_from_slice(&a.row(k)[k + 1..]);
        for i in k + 1..m {
            let vi = a[(i, k)];
            if vi != 0.0 {
                let row = &a.row(i)[k + 1..];
                for (acc, &r) in sj.iter_mut().zip(row) {
                    *acc += vi * r;
                }
            }
        }
        for acc in sj.iter_mut() {
            *acc *= beta;
        }
        {
            let row = &mut a.row_mut(k)[k + 1..];
            for (r, &d) in row.iter_mut().zip(sj.iter()) {
                *r -= d;
            }
        }
        for i in k + 1..m {
            let vi = a[(i, k)];
            if vi != 0.0 {
                let row = &mut a.row_mut(i)[k + 1..];
                for (r, &d) in row.iter_mut().zip(sj.iter()) {
                    *r -= vi * d;
                }
            }
        }
    }
    betas
}

/// Applies Q (from `householder_qr` storage) to the tall-thin matrix `x`
/// in place: x <- Q x.
fn apply_q_thin(qr: &DenseMatrix, betas: &[f64], x: &mut DenseMatrix) {
    let m = qr.rows();
    let n = qr.cols();
    let r = x.cols();
    let mut s = vec![0.0; r];
    for k in (0..n).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        s.copy_from_slice(x.row(k));
        for i in k + 1..m {
            let vi = qr[(i, k)];
            if vi != 0.0 {
                let row = x.row(i);
                for (acc, &xv) in s.iter_mut().zip(row) {
                    *acc += vi * xv;
                }
            }
        }
        for acc in s.iter_mut() {
            *acc *= beta;
        }
        {
            let row = x.row_mut(k);
            for (xv, &d) in row.iter_mut().zip(s.iter()) {
                *xv -= d;
            }
        }
        for i in k + 1..m {
            let vi = qr[(i, k)];
            if vi != 0.0 {
                let row = x.row_mut(i);
                for (xv, &d) in row.iter_mut().zip(s.iter()) {
                    *xv -= vi * d;
                }
            }
        }
    }
}

// ── Bidiagonalization of the square factor ───────────────────────────

struct Bidiag {
    diag: Vec<f64>,
    sup: Vec<f64>,
    left_betas: Vec<f64>,
    right_betas: Vec<f64>,
}

/// Reduces the square matrix to upper bidiagonal form, leaving left
/// reflector tails below the diagonal and right reflector tails to the
/// right of the superdiagonal.
fn bidiagonalize(a: &mut DenseMatrix) -> Bidiag {
    let n = a.rows();
    debug_assert_eq!(n, a.cols());
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n.saturating_sub(1)];
    let mut left_betas = vec![0.0; n];
    let mut right_betas = vec![0.0; n];
    let mut s = vec![0.0; n];

    for k in 0..n {
        // Left reflector on column k.
        let mut tail: Vec<f64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let (beta, mu) = make_householder(a[(k, k)], &mut tail);
        for (off, i) in (k + 1..n).enumerate() {
            a[(i, k)] = tail[off];
        }
        diag[k] = mu;
        left_betas[k] = beta;
        if beta != 0.0 && k + 1 < n {
            let width = n - k - 1;
            let sj = &mut s[..width];
            sj.copy_from_slice(&a.row(k)[k + 1..]);
            for i in k + 1..n {
                let vi = a[(i, k)];
                if vi != 0.0 {
                    let row = &a.row(i)[k + 1..];
                    for (acc, &r) in sj.iter_mut().zip(row) {
                        *acc += vi * r;
                    }
                }
            }
            for acc in sj.iter_mut() {
                *acc *= beta;
            }
            {
                let row = &mut a.row_mut(k)[k + 1..];
                for (r, &d) in row.iter_mut().zip(sj.iter()) {
                    *r -= d;
                }
            }
            for i in k + 1..n {
                let vi = a[(i, k)];
                if vi != 0.0 {
                    let row = &mut a.row_mut(i)[k + 1..];
                    for (r, &d) in row.iter_mut().zip(sj.iter()) {
                        *r -= vi * d;
                    }
                }
            }
        }

        // Right reflector on row k, zeroing entries past the superdiagonal.
        if k + 2 < n {
            let (beta, mu) = {
                let row = a.row_mut(k);
                let (head, tail) = row.split_at_mut(k + 2);
                make_householder(head[k + 1], tail)
            };
            a[(k, k + 1)] = mu;
            sup[k] = mu;
            right_betas[k] = beta;
            if beta != 0.0 {
                for i in k + 1..n {
                    let mut acc = a[(i, k + 1)];
                    {
                        let w = &a.row(k)[k + 2..];
                        let xi = &a.row(i)[k + 2..];
                        for (&wv, &xv) in w.iter().zip(xi) {
                            acc += wv * xv;
                        }
                    }
                    acc *= beta;
                    a[(i, k + 1)] -= acc;
                    let start = k + 2;
                    for j in start..n {
                        let wv = a[(k, j)];
                        a[(i, j)] -= acc * wv;
                    }
                }
            }
        } else if k + 2 == n {
            sup[k] = a[(k, k + 1)];
        }
    }

    Bidiag {
        diag,
        sup,
        left_betas,
        right_betas,
    }
}

// ── Column-major accumulation workspaces ─────────────────────────────

struct ColMat {
    n: usize,
    data: Vec<f64>,
}

impl ColMat {
    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    /// Plane rotation of columns p and q: p' = c p + s q, q' = c q - s p.
    fn rotate_cols(&mut self, p: usize, q: usize, c: f64, s: f64) {
        debug_assert!(p != q);
        let n = self.n;
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        let (head, rest) = self.data.split_at_mut(hi * n);
        let col_lo = &mut head[lo * n..lo * n + n];
        let col_hi = &mut rest[..n];
        let (cp, cq): (&mut [f64], &mut [f64]) = if p < q { (col_lo, col_hi) } else { (col_hi, col_lo) };
        for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
            let t1 = c * *a + s * *b;
            let t2 = c * *b - s * *a;
            *a = t1;
            *b = t2;
        }
    }

    fn negate_col(&mut self, j: usize) {
        for v in self.col_mut(j) {
            *v = -*v;
        }
    }

    fn swap_cols(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        let n = self.n;
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        let (head, rest) = self.data.split_at_mut(hi * n);
        head[lo * n..lo * n + n].swap_with_slice(&mut rest[..n]);
    }
}

/// U_b = H_0 ... H_{n-1} by backward accumulation of the left reflectors.
fn accumulate_left(r: &DenseMatrix, betas: &[f64]) -> ColMat {
    let n = r.rows();
    let mut u = ColMat::identity(n);
    for k in (0..n).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        for c in k..n {
            let col = u.col_mut(c);
            let mut s = col[k];
            for i in k + 1..n {
                s += r[(i, k)] * col[i];
            }
            s *= beta;
            col[k] -= s;
            for i in k + 1..n {
                col[i] -= r[(i, k)] * s;
            }
        }
    }
    u
}

/// V_b = G_0 ... G_{n-3} by backward accumulation of the right reflectors.
fn accumulate_right(r: &DenseMatrix, betas: &[f64]) -> ColMat {
    let n = r.rows();
    let mut v = ColMat::identity(n);
    if n < 3 {
        return v;
    }
    for k in (0..n - 2).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        let w_row = r.row(k);
        for c in k + 1..n {
            let col = v.col_mut(c);
            let mut s = col[k + 1];
            for j in k + 2..n {
                s += w_row[j] * col[j];
            }
            s *= beta;
            col[k + 1] -= s;
            for j in k + 2..n {
                col[j] -= w_row[j] * s;
            }
        }
    }
    v
}

// ── Implicit-shift QR on the bidiagonal ──────────────────────────────

/// Givens pair (c, s) with c a + s b = r and -s a + c b = 0.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if a == 0.0 {
        (0.0, 1.0)
    } else {
        let r = math::hypot(a, b);
        (a / r, b / r)
    }
}

/// Diagonalizes the bidiagonal (diag, sup) by Golub–Kahan implicit-shift
/// QR, accumulating rotations into `u` and `v`. On return `diag` holds the
/// singular values, non-negative and sorted descending, with `u`/`v`
/// columns permuted to match.
fn bidiag_qr(
    diag: &mut [f64],
    sup: &mut [f64],
    u: &mut ColMat,
    v: &mut ColMat,
) -> Result<(), LinalgError> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }

    let bnorm = diag
        .iter()
        .chain(sup.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if bnorm == 0.0 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let tiny = eps * bnorm;

    let mut hi = n - 1;
    let mut sweeps = 0usize;
    let max_sweeps = 60 * n.max(8);

    while hi > 0 {
        // Deflate converged trailing entries.
        let thr = eps * (diag[hi - 1].abs() + diag[hi].abs()) + tiny;
        if sup[hi - 1].abs() <= thr {
            sup[hi - 1] = 0.0;
            hi -= 1;
            continue;
        }

        // Find the start of the unreduced block.
        let mut lo = hi - 1;
        while lo > 0 {
            let thr = eps * (diag[lo - 1].abs() + diag[lo].abs()) + tiny;
            if sup[lo - 1].abs() <= thr {
                sup[lo - 1] = 0.0;
                break;
            }
            lo -= 1;
        }

        sweeps += 1;
        if sweeps > max_sweeps {
            return Err(LinalgError::NoConvergence);
        }

        // A zero diagonal inside the block breaks the shift; chase the
        // neighbouring superdiagonal entry away first.
        if handle_zero_diagonal(diag, sup, u, v, lo, hi, tiny) {
            continue;
        }

        // Wilkinson shift from the trailing 2x2 of B^T B.
        let d_hi = diag[hi];
        let d_hi1 = diag[hi - 1];
        let e_hi1 = sup[hi - 1];
        let e_hi2 = if hi >= 2 && hi - 2 >= lo { sup[hi - 2] } else { 0.0 };
        let t11 = d_hi1 * d_hi1 + e_hi2 * e_hi2;
        let t12 = d_hi1 * e_hi1;
        let t22 = d_hi * d_hi + e_hi1 * e_hi1;
        let d = (t11 - t22) / 2.0;
        let mu = if t12 == 0.0 {
            t22
        } else {
            let denom = d + d.signum() * math::hypot(d, t12);
            t22 - t12 * t12 / denom
        };

        // Bulge chase.
        let mut x = diag[lo] * diag[lo] - mu;
        let mut z = diag[lo] * sup[lo];
        for k in lo..hi {
            let (c, s) = givens(x, z);
            if k > lo {
                sup[k - 1] = c * x + s * z;
            }
            let dk = diag[k];
            let ek = sup[k];
            let dk1 = diag[k + 1];
            diag[k] = c * dk + s * ek;
            sup[k] = c * ek - s * dk;
            let bulge = s * dk1;
            diag[k + 1] = c * dk1;
            v.rotate_cols(k, k + 1, c, s);

            let (c2, s2) = givens(diag[k], bulge);
            diag[k] = c2 * diag[k] + s2 * bulge;
            let old_ek = sup[k];
            let old_dk1 = diag[k + 1];
            sup[k] = c2 * old_ek + s2 * old_dk1;
            diag[k + 1] = c2 * old_dk1 - s2 * old_ek;
            if k + 1 < hi {
                let old_ek1 = sup[k + 1];
                x = sup[k];
                z = s2 * old_ek1;
                sup[k + 1] = c2 * old_ek1;
            }
            u.rotate_cols(k, k + 1, c2, s2);
        }
    }

    // Non-negative values, then selection sort descending.
    for i in 0..n {
        if diag[i] < 0.0 {
            diag[i] = -diag[i];
            u.negate_col(i);
        }
    }
    for i in 0..n {
        let mut max_idx = i;
        for j in i + 1..n {
            if diag[j] > diag[max_idx] {
                max_idx = j;
            }
        }
        if max_idx != i {
            diag.swap(i, max_idx);
            u.swap_cols(i, max_idx);
            v.swap_cols(i, max_idx);
        }
    }
    Ok(())
}

/// Handles a numerically zero diagonal entry in the unreduced block
/// [lo, hi]. Returns true if a chase was performed.
fn handle_zero_diagonal(
    diag: &mut [f64],
    sup: &mut [f64],
    u: &mut ColMat,
    v: &mut ColMat,
    lo: usize,
    hi: usize,
    tiny: f64,
) -> bool {
    // Interior zero: chase sup[idx] off the bottom with left rotations.
    for idx in lo..hi {
        if diag[idx].abs() <= tiny {
            diag[idx] = 0.0;
            let mut z = sup[idx];
            sup[idx] = 0.0;
            for j in idx + 1..=hi {
                let (c, s) = givens(diag[j], z);
                diag[j] = c * diag[j] + s * z;
                if j < hi {
                    z = -s * sup[j];
                    sup[j] = c * sup[j];
                }
                u.rotate_cols(j, idx, c, s);
            }
            return true;
        }
    }
    // Trailing zero: chase sup[hi-1] off to the left with right rotations.
    if diag[hi].abs() <= tiny {
        diag[hi] = 0.0;
        let mut z = sup[hi - 1];
        sup[hi - 1] = 0.0;
        for j in (lo..hi).rev() {
            let (c, s) = givens(diag[j], z);
            diag[j] = c * diag[j] + s * z;
            if j > lo {
                z = -s * sup[j - 1];
                sup[j - 1] = c * sup[j - 1];
            }
            v.rotate_cols(j, hi, c, s);
        }
        return true;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn reconstruct_rank(basis: &ReducedBasis, vt: &DenseMatrix) -> DenseMatrix {
        let mut sv = vt.clone();
        for (j, &s) in basis.singular_values().iter().enumerate() {
            for c in 0..sv.cols() {
                sv[(j, c)] *= s;
            }
        }
        basis.u().matmul(&sv).unwrap()
    }

    fn ortho_defect(u: &DenseMatrix) -> f64 {
        let g = u.matmul_at_b(u).unwrap();
        let mut worst = 0.0f64;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - expect).abs());
            }
        }
        worst
    }

    // Deterministic pseudo-random fill for tests.
    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        DenseMatrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn identity_is_exact() {
        let a = DenseMatrix::identity(3);
        let (basis, vt) = truncated_svd(&a, 3).unwrap();
        for s in basis.singular_values() {
            assert!((s - 1.0).abs() < 1e-12, "sigma {s}");
        }
        let rec = reconstruct_rank(&basis, &vt);
        assert!(rec.sub(&a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rank_one_outer_product() {
        let a_vec = [1.0, -2.0, 0.5, 3.0];
        let b_vec = [2.0, 1.0, -1.0];
        let a = DenseMatrix::from_fn(4, 3, |i, j| a_vec[i] * b_vec[j]);
        let (basis, vt) = truncated_svd(&a, 1).unwrap();
        let norm_a: f64 = math::sqrt(a_vec.iter().map(|v| v * v).sum());
        let norm_b: f64 = math::sqrt(b_vec.iter().map(|v| v * v).sum());
        assert!(
            (basis.singular_values()[0] - norm_a * norm_b).abs() < 1e-12,
            "sigma[0] = {}, expected {}",
            basis.singular_values()[0],
            norm_a * norm_b
        );
        let rec = reconstruct_rank(&basis, &vt);
        assert!(rec.sub(&a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn orthonormal_columns_and_reconstruction() {
        for (rows, cols, rank, seed) in [
            (20, 7, 3, 11u64),
            (12, 12, 12, 5),
            (9, 17, 4, 3), // wide
            (40, 12, 5, 77),
        ] {
            let a = lcg_matrix(rows, cols, seed);
            let (basis, vt) = truncated_svd(&a, rank).unwrap();
            assert!(
                ortho_defect(basis.u()) < 1e-10,
                "{rows}x{cols} rank {rank}: U^T U defect"
            );
            let vt_defect = ortho_defect(&vt.transpose());
            assert!(vt_defect < 1e-10, "{rows}x{cols}: Vt rows not orthonormal");
            if rank == rows.min(cols) {
                let rec = reconstruct_rank(&basis, &vt);
                assert!(
                    rec.sub(&a).unwrap().max_abs() < 1e-10,
                    "full-rank reconstruction"
                );
            }
        }
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let a = lcg_matrix(30, 10, 42);
        let (basis, _) = truncated_svd(&a, 6).unwrap();
        for j in 0..6 {
            let col = basis.u().col(j);
            let mut best = 0.0f64;
            let mut val = 0.0f64;
            for &x in &col {
                if x.abs() > best {
                    best = x.abs();
                    val = x;
                }
            }
            assert!(val > 0.0, "column {j} sign");
        }
    }

    #[test]
    fn determinism_identical_bytes() {
        let a = lcg_matrix(50, 20, 9);
        let (b1, v1) = truncated_svd(&a, 8).unwrap();
        let (b2, v2) = truncated_svd(&a, 8).unwrap();
        assert_eq!(b1.u().data(), b2.u().data());
        assert_eq!(v1.data(), v2.data());
        assert_eq!(b1.singular_values(), b2.singular_values());
    }

    #[test]
    fn rank_errors() {
        let a = DenseMatrix::zeros(4, 3);
        assert!(matches!(
            truncated_svd(&a, 4),
            Err(LinalgError::RankTooLarge { .. })
        ));
        assert!(matches!(
            truncated_svd(&a, 0),
            Err(LinalgError::RankTooLarge { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = DenseMatrix::zeros(3, 3);
        a[(1, 1)] = f64::NAN;
        assert_eq!(truncated_svd(&a, 2), Err(LinalgError::NonFinite));
    }

    #[test]
    fn zero_matrix_is_handled() {
        let a = DenseMatrix::zeros(6, 4);
        let (basis, _) = truncated_svd(&a, 2).unwrap();
        assert_eq!(basis.singular_values(), &[0.0, 0.0]);
        assert!(ortho_defect(basis.u()) < 1e-12);
    }

    #[test]
    fn project_identity_basis_returns_input() {
        let u = DenseMatrix::identity(5);
        let basis = ReducedBasis::new(u, vec![1.0; 5]).unwrap();
        let x = lcg_matrix(5, 7, 2);
        let v = basis.project(&x).unwrap();
        assert!(v.sub(&x).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn project_recovers_in_span_coefficients() {
        let a = lcg_matrix(40, 12, 4);
        let (basis, _) = truncated_svd(&a, 5).unwrap();
        let c = lcg_matrix(5, 1, 8);
        let x = basis.reconstruct(&c).unwrap();
        let v = basis.project(&x).unwrap();
        assert!(v.sub(&c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn projector_idempotence() {
        let a = lcg_matrix(40, 12, 21);
        let (basis, _) = truncated_svd(&a, 5).unwrap();
        let v = basis.project(&a).unwrap();
        let v2 = basis.project(&basis.reconstruct(&v).unwrap()).unwrap();
        assert!(v2.sub(&v).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn reconstruct_zero_coefficients() {
        let a = lcg_matrix(10, 6, 31);
        let (basis, _) = truncated_svd(&a, 3).unwrap();
        let v = DenseMatrix::zeros(3, 4);
        let x = basis.reconstruct(&v).unwrap();
        assert_eq!(x.max_abs(), 0.0);
    }

    #[test]
    fn shape_errors_on_project_and_reconstruct() {
        let a = lcg_matrix(10, 6, 13);
        let (basis, _) = truncated_svd(&a, 3).unwrap();
        assert!(basis.project(&DenseMatrix::zeros(9, 2)).is_err());
        assert!(basis.reconstruct(&DenseMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn monotone_error_in_rank() {
        let a = lcg_matrix(30, 14, 55);
        let mut prev = f64::INFINITY;
        for rank in 1..=14 {
            let (basis, vt) = truncated_svd(&a, rank).unwrap();
            let err = reconstruct_rank(&basis, &vt).sub(&a).unwrap().frobenius_norm();
            assert!(
                err <= prev + 1e-10,
                "rank {rank}: {err} > previous {prev}"
            );
            prev = err;
        }
    }

    #[test]
    fn repeated_singular_values() {
        // Diagonal with repeats exercises deflation paths.
        let mut a = DenseMatrix::zeros(6, 6);
        for (i, s) in [3.0, 3.0, 3.0, 1.0, 1.0, 0.0].iter().enumerate() {
            a[(i, i)] = *s;
        }
        let (basis, vt) = truncated_svd(&a, 6).unwrap();
        let expect = [3.0, 3.0, 3.0, 1.0, 1.0, 0.0];
        for (got, want) in basis.singular_values().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        let rec = reconstruct_rank(&basis, &vt);
        assert!(rec.sub(&a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn graded_spectrum_accuracy() {
        // Known singular values via U D V^T built from rotations.
        let n = 8;
        let spectrum: Vec<f64> = (0..n).map(|i| 10.0f64 / (1 << i) as f64).collect();
        let q1 = rotation_product(n, 0.7);
        let q2 = rotation_product(n, -0.3);
        let mut d = DenseMatrix::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = spectrum[i];
        }
        let a = q1.matmul(&d).unwrap().matmul(&q2.transpose()).unwrap();
        let (basis, _) = truncated_svd(&a, n).unwrap();
        for (got, want) in basis.singular_values().iter().zip(&spectrum) {
            assert!(
                (got - want).abs() <= 1e-12 * 10.0,
                "sigma {got} vs {want}"
            );
        }
    }

    fn rotation_product(n: usize, angle: f64) -> DenseMatrix {
        let mut q = DenseMatrix::identity(n);
        for k in 0..n - 1 {
            let mut g = DenseMatrix::identity(n);
            let th = angle * (k as f64 + 1.0);
            g[(k, k)] = th.cos();
            g[(k, k + 1)] = -th.sin();
            g[(k + 1, k)] = th.sin();
            g[(k + 1, k + 1)] = th.cos();
            q = q.matmul(&g).unwrap();
        }
        q
    }
}
