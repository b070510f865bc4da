//! Register-blocked inner loops for the tape operations. Each output is
//! accumulated in a fixed order, so results do not depend on blocking.

use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;

const MR: usize = 4;
const NR: usize = 32;
const CONV_BLOCK: usize = 32;

/// `c += a b` for row-major `a: [m, k]`, `b: [k, p]`, `c: [m, p]`.
pub(crate) fn gemm_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, p: usize) {
    let mut i0 = 0;
    while i0 < m {
        let mr = MR.min(m - i0);
        let mut j0 = 0;
        while j0 < p {
            let nr = NR.min(p - j0);
            if mr == MR && nr == NR {
                let mut acc = [[S::zero(); NR]; MR];
                for kk in 0..k {
                    let brow: &[S; NR] = b[kk * p + j0..][..NR].try_into().unwrap();
                    for (r, acc_r) in acc.iter_mut().enumerate() {
                        let av = a[(i0 + r) * k + kk];
                        for jj in 0..NR {
                            acc_r[jj] = acc_r[jj] + av * brow[jj];
                        }
                    }
                }
                for (r, acc_r) in acc.iter().enumerate() {
                    let crow = &mut c[(i0 + r) * p + j0..][..NR];
                    for jj in 0..NR {
                        crow[jj] = crow[jj] + acc_r[jj];
                    }
                }
            } else {
                for r in 0..mr {
                    let mut acc = [S::zero(); NR];
                    for kk in 0..k {
                        let av = a[(i0 + r) * k + kk];
                        let brow = &b[kk * p + j0..][..nr];
                        for jj in 0..nr {
                            acc[jj] = acc[jj] + av * brow[jj];
                        }
                    }
                    let crow = &mut c[(i0 + r) * p + j0..][..nr];
                    for jj in 0..nr {
                        crow[jj] = crow[jj] + acc[jj];
                    }
                }
            }
            j0 += nr;
        }
        i0 += mr;
    }
}

/// Row-major transpose of `[rows, cols]`.
pub(crate) fn transpose<S: Scalar>(x: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); x.len()];
    for r in 0..rows {
        for (c, &v) in x[r * cols..][..cols].iter().enumerate() {
            out[c * rows + r] = v;
        }
    }
    out
}

/// `out[t] += sum_j k[j] x[t + j]` for every `t < out.len()`.
pub(crate) fn correlate_acc<S: Scalar>(x: &[S], k: &[S], out: &mut [S]) {
    let len = out.len();
    debug_assert!(x.len() + 1 >= len + k.len());
    let mut t0 = 0;
    while t0 + CONV_BLOCK <= len {
        let mut acc = [S::zero(); CONV_BLOCK];
        for (j, &kj) in k.iter().enumerate() {
            let xs: &[S; CONV_BLOCK] = x[t0 + j..][..CONV_BLOCK].try_into().unwrap();
            for i in 0..CONV_BLOCK {
                acc[i] = acc[i] + kj * xs[i];
            }
        }
        for (o, a) in out[t0..t0 + CONV_BLOCK].iter_mut().zip(acc) {
            *o = *o + a;
        }
        t0 += CONV_BLOCK;
    }
    for t in t0..len {
        let mut s = S::zero();
        for (j, &kj) in k.iter().enumerate() {
            s = s + kj * x[t + j];
        }
        out[t] = out[t] + s;
    }
}

/// `dk[j] += sum_t g[t] x[t + j]` for every `j < dk.len()`.
pub(crate) fn correlate_kernel_grad<S: Scalar>(x: &[S], g: &[S], dk: &mut [S]) {
    let klen = dk.len();
    let mut j0 = 0;
    while j0 + CONV_BLOCK <= klen {
        let mut acc = [S::zero(); CONV_BLOCK];
        for (t, &gt) in g.iter().enumerate() {
            let xs: &[S; CONV_BLOCK] = x[t + j0..][..CONV_BLOCK].try_into().unwrap();
            for i in 0..CONV_BLOCK {
                acc[i] = acc[i] + gt * xs[i];
            }
        }
        for (d, a) in dk[j0..j0 + CONV_BLOCK].iter_mut().zip(acc) {
            *d = *d + a;
        }
        j0 += CONV_BLOCK;
    }
    for j in j0..klen {
        let mut s = S::zero();
        for (t, &gt) in g.iter().enumerate() {
            s = s + gt * x[t + j];
        }
        dk[j] = dk[j] + s;
    }
}

/// `dx[t + j] += k[j] g[t]`, i.e. full convolution of `g` with `k`,
/// computed as a correlation of the zero-padded gradient with the reversed
/// kernel.
pub(crate) fn correlate_input_grad<S: Scalar>(g: &[S], k: &[S], dx: &mut [S]) {
    let pad = k.len() - 1;
    let mut padded = vec![S::zero(); g.len() + 2 * pad];
    padded[pad..pad + g.len()].copy_from_slice(g);
    let reversed: Vec<S> = k.iter().rev().copied().collect();
    correlate_acc(&padded, &reversed, dx);
}

/// Sliding maximum of width `window` with the index of the winner; ties go
/// to the earliest index.
///
/// Blocked prefix/suffix maxima (van Herk / Gil-Werman): every window is
/// the union of a suffix of one block and a prefix of the next, so the cost
/// per output is constant in the window size.
pub(crate) fn sliding_max<S: Scalar>(row: &[S], window: usize, out: &mut [S], arg: &mut [u32]) {
    let len = out.len();
    let n = row.len();
    let mut pre = vec![(S::zero(), 0u32); n];
    let mut suf = vec![(S::zero(), 0u32); n];
    for start in (0..n).step_by(window) {
        let end = (start + window).min(n);
        pre[start] = (row[start], start as u32);
        for t in start + 1..end {
            let prev = pre[t - 1];
            pre[t] = if row[t] > prev.0 { (row[t], t as u32) } else { prev };
        }
        suf[end - 1] = (row[end - 1], (end - 1) as u32);
        for t in (start..end - 1).rev() {
            let next = suf[t + 1];
            suf[t] = if row[t] >= next.0 { (row[t], t as u32) } else { next };
        }
    }
    for t in 0..len {
        let left = suf[t];
        let right = pre[t + window - 1];
        let (v, i) = if left.0 >= right.0 { left } else { right };
        out[t] = v;
        arg[t] = i;
    }
}
