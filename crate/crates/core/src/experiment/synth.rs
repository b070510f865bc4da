//! Synthetic multi-subject EEG in which identity lives in the cross-channel
//! coupling, not in per-channel amplitude or spectrum.
//!
//! Every subject observes the same `K` latent band-limited sources. Each
//! source is circular Gaussian noise shaped by a shared spectral envelope
//! (peaks at `peaks_hz` over a floor, zero outside the band) and is used in
//! analytic form. Channel `i` records
//!
//! `x_i(t) = Re(sum_k M_ik z_k(t)) + noise`,
//!
//! with `M = rownorm(Q C) * exp(j Phi)`: a Haar-orthogonal `Q` per subject,
//! shared source gains `C = diag(decay^k)` and per-subject phase offsets
//! `Phi`. Row normalization gives every channel unit signal power, so
//! channel spectra are identical across subjects and channels.
//!
//! Session II replaces `Q` by the orthonormalized `Q + shift G / sqrt(N)`
//! and `Phi` by `Phi + shift E` for seeded standard normal `G`, `E`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::connectivity::ElectrodeLayout;
use crate::signal::{ifft_in_place, Session, Task, Trial};
use crate::util::mix_seed;
use crate::{Error, Result};

const SALT_SUBJECT: u64 = 0x5B1E;
const SALT_SHIFT: u64 = 0x5E55;
const SALT_TRIAL: u64 = 0x7A1A;

/// Generator settings. Subject parameters depend only on `seed`, so two
/// sessions generated with the same seed share subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub sample_rate_hz: f64,
    /// Latent sources; `None` means one per channel.
    pub n_sources: Option<usize>,
    /// Gain ratio between consecutive latent sources.
    pub source_decay: f64,
    /// Exponent applied to mixing magnitudes before row normalization;
    /// above 1 each channel leans on fewer sources.
    pub sharpness: f64,
    /// Standard deviation of the per-subject phase offsets, radians.
    pub phase_spread: f64,
    /// Centres of the shared spectral peaks.
    pub peaks_hz: Vec<f64>,
    /// Gaussian peak width (standard deviation).
    pub peak_width_hz: f64,
    /// Envelope floor relative to the peak height.
    pub floor: f64,
    /// Support of the source spectrum.
    pub band_hz: (f64, f64),
    /// Signal-to-noise power ratio of every channel; `+inf` adds no noise.
    pub snr_db: f64,
    pub session: Session,
    pub session_shift: f64,
    pub task: Task,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(
        n_subjects: usize,
        trials_per_subject: usize,
        n_channels: usize,
        n_samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_subjects,
            trials_per_subject,
            n_channels,
            n_samples,
            sample_rate_hz: 250.0,
            n_sources: None,
            source_decay: 0.75,
            sharpness: 1.0,
            phase_spread: 0.6,
            peaks_hz: vec![6.0, 10.0, 13.0, 20.0, 27.0],
            peak_width_hz: 1.5,
            floor: 0.15,
            band_hz: (3.0, 40.0),
            snr_db: 5.0,
            session: Session::I,
            session_shift: 0.0,
            task: Task::Synth,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if self.n_subjects < 2 {
            return bad(format!("need at least 2 subjects, got {}", self.n_subjects));
        }
        if self.trials_per_subject == 0 {
            return bad("trials_per_subject must be positive".into());
        }
        if self.n_channels < 4 {
            return bad(format!("need at least 4 channels, got {}", self.n_channels));
        }
        if self.n_samples < 200 {
            return bad(format!("need at least 200 samples, got {}", self.n_samples));
        }
        if self.n_subjects > u32::MAX as usize {
            return bad("too many subjects".into());
        }
        if self.n_sources == Some(0) {
            return bad("n_sources must be positive".into());
        }
        let nyquist = self.sample_rate_hz / 2.0;
        let (lo, hi) = self.band_hz;
        if !(self.sample_rate_hz.is_finite() && lo >= 0.0 && lo < hi && hi <= nyquist) {
            return bad(format!("band {lo}-{hi} Hz invalid at {} Hz", self.sample_rate_hz));
        }
        let finite = [
            self.source_decay,
            self.sharpness,
            self.phase_spread,
            self.peak_width_hz,
            self.floor,
            self.session_shift,
        ];
        if finite.iter().any(|v| !v.is_finite())
            || self.source_decay <= 0.0
            || self.sharpness <= 0.0
            || self.peak_width_hz <= 0.0
            || self.floor < 0.0
            || self.phase_spread < 0.0
            || self.session_shift < 0.0
        {
            return bad("generator shape parameters must be finite and non-negative".into());
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad(format!("snr_db must be a number or +inf, got {}", self.snr_db));
        }
        if self.peaks_hz.iter().any(|f| !f.is_finite()) {
            return bad("peak frequencies must be finite".into());
        }
        Ok(())
    }
}

/// Per-subject complex mixing matrix, `N x K` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMixing {
    pub n_channels: usize,
    pub n_sources: usize,
    pub weights: Vec<Complex64>,
}

/// Mixing matrix of `subject` for the configured session.
pub fn subject_mixing(config: &SyntheticConfig, subject: usize) -> SubjectMixing {
    let n = config.n_channels;
    let k = config.n_sources.unwrap_or(n);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(config.seed, SALT_SUBJECT), subject as u64));
    let dim = n.max(k);
    let mut q = gaussian(&mut rng, dim * dim);
    let mut phi = gaussian(&mut rng, n * k);
    phi.iter_mut().for_each(|p| *p *= config.phase_spread);
    orthonormalize_columns(&mut q, dim);
    if config.session == Session::II && config.session_shift > 0.0 {
        let mut shift_rng =
            ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(config.seed, SALT_SHIFT), subject as u64));
        let scale = config.session_shift / libm::sqrt(dim as f64);
        for v in q.iter_mut() {
            *v += scale * shift_rng.sample::<f64, _>(StandardNormal);
        }
        orthonormalize_columns(&mut q, dim);
        for p in phi.iter_mut() {
            *p += config.session_shift * shift_rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut weights = Vec::with_capacity(n * k);
    for i in 0..n {
        let row: Vec<f64> = (0..k)
            .map(|j| {
                let v = q[i * dim + j] * libm::pow(config.source_decay, j as f64);
                libm::copysign(libm::pow(libm::fabs(v), config.sharpness), v)
            })
            .collect();
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        for (j, v) in row.iter().enumerate() {
            weights.push(Complex64::from_polar(v / norm, phi[i * k + j]));
        }
    }
    SubjectMixing {
        n_channels: n,
        n_sources: k,
        weights,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Modified Gram-Schmidt on the columns of a square row-major matrix. On a
/// Gaussian matrix this yields a Haar-distributed orthogonal matrix, since
/// the implied triangular factor has a positive diagonal.
fn orthonormalize_columns(q: &mut [f64], dim: usize) {
    for j in 0..dim {
        for p in 0..j {
            let proj: f64 = (0..dim).map(|r| q[r * dim + j] * q[r * dim + p]).sum();
            for r in 0..dim {
                q[r * dim + j] -= proj * q[r * dim + p];
            }
        }
        let norm = libm::sqrt((0..dim).map(|r| q[r * dim + j] * q[r * dim + j]).sum::<f64>());
        for r in 0..dim {
            q[r * dim + j] /= norm;
        }
    }
}

/// Spectral amplitude per FFT bin, zero outside the band and at DC.
fn envelope(config: &SyntheticConfig) -> Vec<f64> {
    let t = config.n_samples;
    let (lo, hi) = config.band_hz;
    let width2 = 2.0 * config.peak_width_hz * config.peak_width_hz;
    (0..t)
        .map(|bin| {
            let f = bin as f64 * config.sample_rate_hz / t as f64;
            if bin == 0 || 2 * bin >= t || f < lo || f > hi {
                return 0.0;
            }
            let peaks: f64 = config
                .peaks_hz
                .iter()
                .map(|p| libm::exp(-(f - p) * (f - p) / width2))
                .sum();
            libm::sqrt(peaks + config.floor)
        })
        .collect()
}

/// One trial of `subject`; the stream depends on (seed, session, subject,
/// trial) only.
fn synth_trial(
    config: &SyntheticConfig,
    mixing: &SubjectMixing,
    envelope: &[f64],
    subject: usize,
    trial: usize,
) -> Result<Trial> {
    let (n, k, t) = (mixing.n_channels, mixing.n_sources, config.n_samples);
    let stream = mix_seed(
        mix_seed(mix_seed(config.seed, SALT_TRIAL), config.session.code() as u64),
        (subject * config.trials_per_subject + trial) as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    // Re z has unit variance when E|z|^2 = 2: with ifft's 1/T factor and
    // E|g|^2 = 2 per bin, the scale is T / sqrt(sum A^2).
    let energy: f64 = envelope.iter().map(|a| a * a).sum();
    if energy <= 0.0 {
        return Err(Error::InvalidParameter(
            "source band contains no FFT bins".into(),
        ));
    }
    let scale = t as f64 / libm::sqrt(energy);
    let mut sources = Vec::with_capacity(k);
    for _ in 0..k {
        let mut spec: Vec<Complex64> = envelope
            .iter()
            .map(|&a| {
                if a == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * (a * scale)
                }
            })
            .collect();
        ifft_in_place(&mut spec);
        sources.push(spec);
    }
    let noise_sd = libm::pow(10.0, -config.snr_db / 20.0);
    let mut data = vec![0.0; n * t];
    for i in 0..n {
        let row = &mixing.weights[i * k..(i + 1) * k];
        let out = &mut data[i * t..(i + 1) * t];
        for (m, z) in row.iter().zip(&sources) {
            for (o, zt) in out.iter_mut().zip(z) {
                *o += m.re * zt.re - m.im * zt.im;
            }
        }
        for o in out.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            // stored at the container's 32-bit precision
            *o = (*o + noise_sd * e) as f32 as f64;
        }
    }
    Trial::new(
        data,
        n,
        subject as u32,
        config.session,
        config.task,
        config.sample_rate_hz,
    )
}

/// Generates `n_subjects x trials_per_subject` trials, subject-major.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let env = envelope(config);
    let mut trials = Vec::with_capacity(config.n_subjects * config.trials_per_subject);
    for s in 0..config.n_subjects {
        let mixing = subject_mixing(config, s);
        for i in 0..config.trials_per_subject {
            trials.push(synth_trial(config, &mixing, &env, s, i)?);
        }
    }
    Dataset::new(trials, ElectrodeLayout::for_channel_count(config.n_channels))
}
