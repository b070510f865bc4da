//! EEG preprocessing: bandpass filtering, decimation and instantaneous phase.
//!
//! Every operation here is a pure function of its inputs.

mod butterworth;
mod fft;
mod hilbert;

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

pub use butterworth::{butterworth_bandpass, filtfilt, Biquad, SosFilter};
pub use fft::{fft_in_place, ifft_in_place};
pub use hilbert::{analytic_signal, instantaneous_phase, PhaseSeries};
pub(crate) use hilbert::wrap_0_2pi as wrap_phase;

/// Recording session. The two sessions were recorded on different days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Session {
    I,
    II,
}

impl Session {
    pub fn code(self) -> u8 {
        match self {
            Session::I => 1,
            Session::II => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Session::I),
            2 => Some(Session::II),
            _ => None,
        }
    }
}

/// Paradigm during which a trial was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    /// Motor imagery.
    Mi,
    /// Event-related potential speller.
    Erp,
    /// Steady-state visually evoked potential.
    Ssvep,
    /// Synthetic data.
    Synth,
}

impl Task {
    pub fn code(self) -> u8 {
        match self {
            Task::Mi => 0,
            Task::Erp => 1,
            Task::Ssvep => 2,
            Task::Synth => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Task::Mi),
            1 => Some(Task::Erp),
            2 => Some(Task::Ssvep),
            3 => Some(Task::Synth),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Mi => "MI",
            Task::Erp => "ERP",
            Task::Ssvep => "SSVEP",
            Task::Synth => "SYNTH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MI" => Some(Task::Mi),
            "ERP" => Some(Task::Erp),
            "SSVEP" => Some(Task::Ssvep),
            "SYNTH" => Some(Task::Synth),
            _ => None,
        }
    }
}

/// One EEG recording segment, stored channel-major (`N` rows of `T` samples).
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    data: Vec<f64>,
    n_channels: usize,
    n_samples: usize,
    pub subject_id: u32,
    pub session: Session,
    pub task: Task,
    sample_rate_hz: f64,
}

impl Trial {
    /// Builds a trial from row-major `n_channels x n_samples` data.
    pub fn new(
        data: Vec<f64>,
        n_channels: usize,
        subject_id: u32,
        session: Session,
        task: Task,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if n_channels < 2 {
            return Err(Error::InvalidInput(format!(
                "a trial needs at least 2 channels, got {n_channels}"
            )));
        }
        if data.len() % n_channels != 0 {
            return Err(Error::InvalidInput(format!(
                "{} samples do not divide into {n_channels} channels",
                data.len()
            )));
        }
        let n_samples = data.len() / n_channels;
        if n_samples < 2 {
            return Err(Error::InvalidInput(format!(
                "a trial needs at least 2 time samples, got {n_samples}"
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at channel {}, time {}",
                pos / n_samples,
                pos % n_samples
            )));
        }
        Ok(Self {
            data,
            n_channels,
            n_samples,
            subject_id,
            session,
            task,
            sample_rate_hz,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_samples..(k + 1) * self.n_samples]
    }

    /// Same labels, new samples.
    fn with_data(&self, data: Vec<f64>, n_samples: usize, sample_rate_hz: f64) -> Self {
        debug_assert_eq!(data.len(), n_samples * self.n_channels);
        Self {
            data,
            n_channels: self.n_channels,
            n_samples,
            subject_id: self.subject_id,
            session: self.session,
            task: self.task,
            sample_rate_hz,
        }
    }

    /// Keeps only the listed channels, in the listed order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::InvalidParameter(
                "a channel subset needs at least 2 channels".into(),
            ));
        }
        let mut data = Vec::with_capacity(channels.len() * self.n_samples);
        for &k in channels {
            if k >= self.n_channels {
                return Err(Error::InvalidParameter(format!(
                    "channel {k} out of range for {} channels",
                    self.n_channels
                )));
            }
            data.extend_from_slice(self.channel(k));
        }
        Ok(Self {
            data,
            n_channels: channels.len(),
            ..self.clone()
        })
    }
}

/// Zero-phase Butterworth bandpass applied to every channel independently.
///
/// The filter has `order` poles per band edge (`order` second-order
/// sections) and is run forward and backward over a reflect-padded copy of
/// each channel, so the net response is `|H|^2` with no group delay.
pub fn bandpass_filter(trial: &Trial, low_hz: f64, high_hz: f64, order: usize) -> Result<Trial> {
    let sos = butterworth_bandpass(order, low_hz, high_hz, trial.sample_rate_hz)?;
    let pad = 3 * order;
    let mut out = Vec::with_capacity(trial.data.len());
    for k in 0..trial.n_channels {
        out.extend(filtfilt(&sos, trial.channel(k), pad));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("filter output is not finite".into()));
    }
    Ok(trial.with_data(out, trial.n_samples, trial.sample_rate_hz))
}

/// Keeps every `k`-th sample starting at index 0, `k = fs / target_hz`.
///
/// No anti-alias stage is applied; callers bandpass first.
pub fn downsample(trial: &Trial, target_hz: f64) -> Result<Trial> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target rate must be positive, got {target_hz}"
        )));
    }
    let ratio = trial.sample_rate_hz / target_hz;
    let factor = libm::round(ratio);
    if factor < 1.0 || libm::fabs(ratio - factor) > 1e-9 * ratio {
        return Err(Error::InvalidParameter(format!(
            "{} Hz is not an integer multiple of {target_hz} Hz",
            trial.sample_rate_hz
        )));
    }
    let factor = factor as usize;
    let new_len = trial.n_samples / factor;
    if new_len < 2 {
        return Err(Error::InvalidParameter(format!(
            "decimating {} samples by {factor} leaves fewer than 2",
            trial.n_samples
        )));
    }
    let mut out = Vec::with_capacity(new_len * trial.n_channels);
    for k in 0..trial.n_channels {
        out.extend(trial.channel(k).iter().step_by(factor).take(new_len));
    }
    Ok(trial.with_data(out, new_len, target_hz))
}

/// Bandpass 3-40 Hz (order 5) then decimate to 250 Hz.
pub fn preprocess(trial: &Trial) -> Result<Trial> {
    let filtered = bandpass_filter(trial, 3.0, 40.0, 5)?;
    downsample(&filtered, 250.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn sine_trial(freq: f64, fs: f64, n: usize, phase: f64) -> Trial {
        let mut data = Vec::with_capacity(2 * n);
        for ch in 0..2 {
            for t in 0..n {
                let scale = if ch == 0 { 1.0 } else { 0.5 };
                data.push(scale * libm::sin(2.0 * PI * freq * t as f64 / fs + phase));
            }
        }
        Trial::new(data, 2, 0, Session::I, Task::Synth, fs).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        libm::sqrt(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
    }

    #[test]
    fn rejects_non_finite_samples() {
        let err = Trial::new(vec![0.0, 1.0, f64::NAN, 2.0], 2, 0, Session::I, Task::Mi, 250.0);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn in_band_sine_passes_unchanged() {
        let trial = sine_trial(10.0, 1000.0, 6000, 0.3);
        let out = bandpass_filter(&trial, 3.0, 40.0, 5).unwrap();
        let mid = 2000..4000;
        for ch in 0..2 {
            let ratio = rms(&out.channel(ch)[mid.clone()]) / rms(&trial.channel(ch)[mid.clone()]);
            assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn one_hz_is_strongly_attenuated() {
        let trial = sine_trial(1.0, 1000.0, 20_000, 0.0);
        let out = bandpass_filter(&trial, 3.0, 40.0, 5).unwrap();
        let mid = 8000..12000;
        let ratio = rms(&out.channel(0)[mid.clone()]) / rms(&trial.channel(0)[mid]);
        let db = 20.0 * libm::log10(ratio);
        assert!(db <= -40.0, "attenuation only {db} dB");
    }

    #[test]
    fn zeros_stay_zero() {
        let trial = Trial::new(vec![0.0; 2 * 500], 2, 3, Session::II, Task::Erp, 1000.0).unwrap();
        let out = bandpass_filter(&trial, 3.0, 40.0, 5).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.subject_id, 3);
        assert_eq!(out.session, Session::II);
    }

    #[test]
    fn corner_frequencies_validated() {
        let trial = sine_trial(10.0, 100.0, 400, 0.0);
        assert!(matches!(
            bandpass_filter(&trial, 3.0, 60.0, 5),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            bandpass_filter(&trial, 20.0, 10.0, 5),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            bandpass_filter(&trial, 3.0, 40.0, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let trial = sine_trial(12.0, 250.0, 2000, 0.7);
        let out = bandpass_filter(&trial, 3.0, 40.0, 5).unwrap();
        let x = &trial.channel(0)[500..1500];
        let y = &out.channel(0)[500..1500];
        let xcorr = |lag: isize| -> f64 {
            (0..x.len() as isize)
                .filter_map(|i| {
                    let j = i + lag;
                    (j >= 0 && (j as usize) < y.len()).then(|| x[i as usize] * y[j as usize])
                })
                .sum()
        };
        let best = (-15..=15)
            .max_by(|&a, &b| xcorr(a).partial_cmp(&xcorr(b)).unwrap())
            .unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn filtering_is_linear() {
        let a = sine_trial(7.0, 250.0, 800, 0.1);
        let b = sine_trial(31.0, 250.0, 800, 1.3);
        let combo: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| 2.5 * x - 0.75 * y)
            .collect();
        let combo = Trial::new(combo, 2, 0, Session::I, Task::Synth, 250.0).unwrap();
        let fa = bandpass_filter(&a, 3.0, 40.0, 5).unwrap();
        let fb = bandpass_filter(&b, 3.0, 40.0, 5).unwrap();
        let fc = bandpass_filter(&combo, 3.0, 40.0, 5).unwrap();
        let scale = fc.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..fc.data().len() {
            let expect = 2.5 * fa.data()[i] - 0.75 * fb.data()[i];
            assert!((fc.data()[i] - expect).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn downsample_shapes() {
        let long = Trial::new(vec![1.0; 2 * 4000], 2, 0, Session::I, Task::Mi, 1000.0).unwrap();
        let d = downsample(&long, 250.0).unwrap();
        assert_eq!(d.n_samples(), 1000);
        assert_eq!(d.sample_rate_hz(), 250.0);
        let short = Trial::new(vec![1.0; 2 * 800], 2, 0, Session::I, Task::Erp, 1000.0).unwrap();
        assert_eq!(downsample(&short, 250.0).unwrap().n_samples(), 200);
    }

    #[test]
    fn downsample_by_one_is_identity() {
        let t = sine_trial(10.0, 250.0, 333, 0.0);
        assert_eq!(downsample(&t, 250.0).unwrap(), t);
    }

    #[test]
    fn downsample_keeps_every_kth_from_zero() {
        let data: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let t = Trial::new(data, 2, 0, Session::I, Task::Mi, 40.0).unwrap();
        let d = downsample(&t, 10.0).unwrap();
        assert_eq!(d.data(), &[0.0, 4.0, 10.0, 14.0]);
    }

    #[test]
    fn downsample_rejects_fractional_factor() {
        let t = sine_trial(10.0, 1000.0, 1000, 0.0);
        assert!(matches!(downsample(&t, 300.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn decimation_is_linear() {
        let a = sine_trial(7.0, 1000.0, 1003, 0.1);
        let b = sine_trial(3.0, 1000.0, 1003, 0.4);
        let combo: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x + 3.0 * y).collect();
        let combo = Trial::new(combo, 2, 0, Session::I, Task::Synth, 1000.0).unwrap();
        let (da, db, dc) = (
            downsample(&a, 250.0).unwrap(),
            downsample(&b, 250.0).unwrap(),
            downsample(&combo, 250.0).unwrap(),
        );
        for i in 0..dc.data().len() {
            assert!((dc.data()[i] - (da.data()[i] + 3.0 * db.data()[i])).abs() < 1e-12);
        }
    }
}
