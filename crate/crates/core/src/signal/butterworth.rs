//! Butterworth bandpass design (bilinear transform, pre-warped corners) and
//! second-order-section filtering.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// One second-order section, `b0 + b1 z^-1 + b2 z^-2` over `1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Complex response at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub sample_rate_hz: f64,
}

impl SosFilter {
    /// Magnitude of the cascade at `freq_hz` (single pass).
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate_hz;
        self.sections
            .iter()
            .map(|s| s.response(omega))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }

    /// Causal single pass, direct form II transposed, zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * out + z2;
                z2 = s.b[2] * input - s.a[1] * out;
                *v = out;
            }
        }
        y
    }
}

/// Designs a bandpass Butterworth filter with `order` prototype poles.
///
/// The result has `order` sections; each section carries one zero at DC and
/// one at Nyquist and is scaled to unit gain at the digital center frequency.
pub fn butterworth_bandpass(
    order: usize,
    low_hz: f64,
    high_hz: f64,
    sample_rate_hz: f64,
) -> Result<SosFilter> {
    if order == 0 {
        return Err(Error::InvalidParameter("filter order must be at least 1".into()));
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < low ({low_hz}) < high ({high_hz}) < Nyquist ({nyquist})"
        )));
    }
    let fs2 = 2.0 * sample_rate_hz;
    let w_low = fs2 * libm::tan(PI * low_hz / sample_rate_hz);
    let w_high = fs2 * libm::tan(PI * high_hz / sample_rate_hz);
    let bandwidth = w_high - w_low;
    let w0_sq = w_low * w_high;

    // Analog prototype poles on the left half of the unit circle, mapped to
    // bandpass poles (two per prototype pole), then to the z-plane.
    let mut z_poles: Vec<Complex64> = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let pb = p * bandwidth;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
            z_poles.push((fs2 + s) / (fs2 - s));
        }
    }

    let imag_tol = 1e-12;
    let mut complex: Vec<Complex64> = z_poles.iter().copied().filter(|z| z.im > imag_tol).collect();
    let mut real: Vec<f64> = z_poles
        .iter()
        .filter(|z| z.im.abs() <= imag_tol)
        .map(|z| z.re)
        .collect();
    complex.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(core::cmp::Ordering::Equal));
    real.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    if real.len() % 2 != 0 || complex.len() * 2 + real.len() != 2 * order {
        return Err(Error::InvalidParameter(format!(
            "pole pairing failed for order {order} at {low_hz}-{high_hz} Hz"
        )));
    }

    let center = 2.0 * libm::atan(libm::sqrt(w0_sq) / fs2);
    let mut sections = Vec::with_capacity(order);
    let mut push = |a1: f64, a2: f64| {
        let mut s = Biquad {
            b: [1.0, 0.0, -1.0],
            a: [a1, a2],
        };
        let g = s.response(center).norm();
        for b in s.b.iter_mut() {
            *b /= g;
        }
        sections.push(s);
    };
    for z in &complex {
        push(-2.0 * z.re, z.norm_sqr());
    }
    for pair in real.chunks(2) {
        push(-(pair[0] + pair[1]), pair[0] * pair[1]);
    }
    Ok(SosFilter {
        sections,
        sample_rate_hz,
    })
}

/// Forward-backward filtering over a reflect-padded copy of `x`.
///
/// `pad` samples are mirrored on each side (without repeating the edge
/// sample) and trimmed afterwards. The pad shrinks to `len - 1` on short
/// inputs.
pub fn filtfilt(filter: &SosFilter, x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| x[n - 1 - i]));
    let mut y = filter.filter(&ext);
    y.reverse();
    let mut y = filter.filter(&y);
    y.reverse();
    y.drain(..pad);
    y.truncate(n);
    y
}
