//! Complex FFT for arbitrary lengths: iterative radix-2 for powers of two,
//! Bluestein's chirp-z for everything else.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

/// Forward DFT, `X[k] = sum_t x[t] exp(-2 pi i k t / n)`.
pub fn fft_in_place(data: &mut [Complex64]) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(data, false);
    } else {
        bluestein(data);
    }
}

/// Inverse DFT including the `1/n` factor.
pub fn ifft_in_place(data: &mut [Complex64]) {
    let n = data.len();
    if n == 0 {
        return;
    }
    for v in data.iter_mut() {
        *v = v.conj();
    }
    fft_in_place(data);
    let scale = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v = v.conj() * scale;
    }
}

fn radix2(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    // Twiddles for the largest stage; smaller stages stride through them.
    let half = n / 2;
    let twiddles: Vec<Complex64> = (0..half)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let step = n / len;
        let half_len = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half_len {
                let w = twiddles[k * step];
                let a = data[start + k];
                let b = data[start + k + half_len] * w;
                data[start + k] = a + b;
                data[start + k + half_len] = a - b;
            }
        }
        len <<= 1;
    }
}

fn bluestein(data: &mut [Complex64]) {
    let n = data.len();
    let m = (2 * n - 1).next_power_of_two();
    // chirp[k] = exp(-i pi k^2 / n); k^2 reduced mod 2n keeps the angle small.
    let two_n = 2 * n as u128;
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128) % two_n;
            Complex64::from_polar(1.0, -PI * k2 as f64 / n as f64)
        })
        .collect();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = data[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        let c = chirp[k].conj();
        b[k] = c;
        b[m - k] = c;
    }
    radix2(&mut a, false);
    radix2(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    radix2(&mut a, true);
    let scale = 1.0 / m as f64;
    for k in 0..n {
        data[k] = a[k] * scale * chirp[k];
    }
}
