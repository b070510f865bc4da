//! Small numeric helpers shared across modules.

/// Dot product with eight independent accumulators so the loop vectorizes
/// while keeping a fixed, platform-independent summation order.
#[inline]
pub(crate) fn dot<S>(a: &[S], b: &[S]) -> S
where
    S: Copy + core::ops::Add<Output = S> + core::ops::Mul<Output = S> + Default,
{
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let mut acc = [S::default(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let base = c * 8;
        let xa = &a[base..base + 8];
        let xb = &b[base..base + 8];
        for i in 0..8 {
            acc[i] = acc[i] + xa[i] * xb[i];
        }
    }
    let mut tail = S::default();
    for i in chunks * 8..n {
        tail = tail + a[i] * b[i];
    }
    let s01 = acc[0] + acc[1];
    let s23 = acc[2] + acc[3];
    let s45 = acc[4] + acc[5];
    let s67 = acc[6] + acc[7];
    (s01 + s23) + (s45 + s67) + tail
}

/// Sum with the same eight-lane accumulation as [`dot`].
#[inline]
pub(crate) fn sum<S>(a: &[S]) -> S
where
    S: Copy + core::ops::Add<Output = S> + Default,
{
    let mut acc = [S::default(); 8];
    let chunks = a.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for i in 0..8 {
            acc[i] = acc[i] + c[i];
        }
    }
    let mut tail = S::default();
    for &v in rest {
        tail = tail + v;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `sum((a - mu)^2)` with eight-lane accumulation.
#[inline]
pub(crate) fn centered_sum_sq<S>(a: &[S], mu: S) -> S
where
    S: Copy + core::ops::Add<Output = S> + core::ops::Sub<Output = S> + core::ops::Mul<Output = S> + Default,
{
    let mut acc = [S::default(); 8];
    let chunks = a.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for i in 0..8 {
            let d = c[i] - mu;
            acc[i] = acc[i] + d * d;
        }
    }
    let mut tail = S::default();
    for &v in rest {
        tail = tail + (v - mu) * (v - mu);
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy<S>(y: &mut [S], alpha: S, x: &[S])
where
    S: Copy + core::ops::Add<Output = S> + core::ops::Mul<Output = S>,
{
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
