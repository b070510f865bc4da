//! Analytic signal and instantaneous phase.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use super::fft::{fft_in_place, ifft_in_place};
use super::Trial;
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Instantaneous phase per channel, radians in `[0, 2pi)`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    phase: Vec<f64>,
    n_channels: usize,
    n_samples: usize,
}

impl PhaseSeries {
    /// Wraps precomputed phases (each value is reduced into `[0, 2pi)`).
    pub fn from_phases(phase: Vec<f64>, n_channels: usize) -> Result<Self> {
        if n_channels == 0 || phase.len() % n_channels != 0 || phase.is_empty() {
            return Err(Error::Shape(format!(
                "{} phases do not form {n_channels} channels",
                phase.len()
            )));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite phase".into()));
        }
        let n_samples = phase.len() / n_channels;
        let phase = phase.into_iter().map(wrap_0_2pi).collect();
        Ok(Self {
            phase,
            n_channels,
            n_samples,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.phase[k * self.n_samples..(k + 1) * self.n_samples]
    }

    pub fn data(&self) -> &[f64] {
        &self.phase
    }
}

pub(crate) fn wrap_0_2pi(x: f64) -> f64 {
    let mut r = x - TWO_PI * libm::floor(x / TWO_PI);
    if r < 0.0 {
        r += TWO_PI;
    }
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Discrete analytic signal by the frequency-domain method: negative bins
/// zeroed, positive bins doubled, DC (and Nyquist for even lengths) kept.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut spec);
    let positive_end = if n % 2 == 0 { n / 2 } else { (n + 1) / 2 };
    for (k, v) in spec.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            continue;
        }
        if k < positive_end {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(&mut spec);
    spec
}

/// Instantaneous phase of every channel.
pub fn instantaneous_phase(trial: &Trial) -> Result<PhaseSeries> {
    let n = trial.n_samples();
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "instantaneous phase needs at least 4 samples, got {n}"
        )));
    }
    let mut phase = Vec::with_capacity(trial.data().len());
    for k in 0..trial.n_channels() {
        let x = trial.channel(k);
        let mean = x.iter().sum::<f64>() / n as f64;
        if x.iter().all(|&v| v == mean) || x.iter().all(|&v| v == x[0]) {
            return Err(Error::DegenerateSignal(format!(
                "channel {k} is constant; phase is undefined"
            )));
        }
        phase.extend(
            analytic_signal(x)
                .iter()
                .map(|z| wrap_0_2pi(libm::atan2(z.im, z.re))),
        );
    }
    Ok(PhaseSeries {
        phase,
        n_channels: trial.n_channels(),
        n_samples: n,
    })
}
