//! Datasets, synthetic subjects, stratified splits and the evaluation
//! protocols.

mod protocol;
mod split;
mod synth;

#[cfg(test)]
mod tests;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use protocol::{
    plan_cross_session, plan_cross_task, plan_diverse_tasks, plan_electrode_subset,
    plan_intra_session, prepare_samples, run_cross_session, run_cross_task, run_diverse_tasks,
    run_electrode_subset, run_intra_session, ElectrodeGroup, ExperimentConfig, FitJob,
    ProtocolPlan,
    FINETUNE_GRID,
};
pub use split::{stratified_kfold, SplitPlan};
pub use synth::{generate_synthetic, subject_mixing, SubjectMixing, SyntheticConfig};

use crate::connectivity::{ElectrodeLayout, Measure};
use crate::model::{EpochRecord, ModelConfig};
use crate::signal::{Session, Task, Trial};
use crate::{Error, Result};

/// Trials sharing one shape and electrode layout, labelled by subjects
/// `0..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trials: Vec<Trial>,
    layout: ElectrodeLayout,
    n_subjects: usize,
}

impl Dataset {
    /// Checks that all trials share channel count, length and sample rate,
    /// that the layout matches, and that subject ids cover `0..M` without
    /// gaps.
    pub fn new(trials: Vec<Trial>, layout: ElectrodeLayout) -> Result<Self> {
        let first = trials
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no trials".into()))?;
        let (n, t, fs) = (first.n_channels(), first.n_samples(), first.sample_rate_hz());
        if layout.len() != n {
            return Err(Error::Shape(format!(
                "layout has {} electrodes, trials have {n} channels",
                layout.len()
            )));
        }
        for (i, trial) in trials.iter().enumerate() {
            if trial.n_channels() != n || trial.n_samples() != t || trial.sample_rate_hz() != fs {
                return Err(Error::Shape(format!(
                    "trial {i} is {}x{} at {} Hz, expected {n}x{t} at {fs} Hz",
                    trial.n_channels(),
                    trial.n_samples(),
                    trial.sample_rate_hz()
                )));
            }
        }
        let ids: BTreeSet<u32> = trials.iter().map(|t| t.subject_id).collect();
        let n_subjects = ids.len();
        if let Some((expected, &got)) = ids.iter().enumerate().find(|(i, &id)| *i as u32 != id) {
            return Err(Error::InvalidInput(format!(
                "subject ids must be contiguous from 0; expected {expected}, found {got}"
            )));
        }
        Ok(Self {
            trials,
            layout,
            n_subjects,
        })
    }

    /// Concatenates datasets recorded on the same montage and subjects.
    pub fn pool(parts: &[&Dataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("nothing to pool".into()))?;
        for part in parts {
            if part.layout != first.layout || part.n_subjects != first.n_subjects {
                return Err(Error::InvalidParameter(
                    "pooled datasets must share layout and subject roster".into(),
                ));
            }
        }
        let trials = parts.iter().flat_map(|p| p.trials.iter().cloned()).collect();
        Self::new(trials, first.layout.clone())
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn into_trials(self) -> Vec<Trial> {
        self.trials
    }

    pub fn layout(&self) -> &ElectrodeLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_channels(&self) -> usize {
        self.trials[0].n_channels()
    }

    pub fn n_samples(&self) -> usize {
        self.trials[0].n_samples()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.trials[0].sample_rate_hz()
    }

    /// Distinct tasks in first-appearance order.
    pub fn tasks(&self) -> Vec<Task> {
        let mut out: Vec<Task> = Vec::new();
        for t in &self.trials {
            if !out.contains(&t.task) {
                out.push(t.task);
            }
        }
        out
    }

    /// The single task of every trial, if there is one.
    pub fn task(&self) -> Option<Task> {
        let tasks = self.tasks();
        (tasks.len() == 1).then(|| tasks[0])
    }

    /// The single session of every trial, if there is one.
    pub fn session(&self) -> Option<Session> {
        let s = self.trials[0].session;
        self.trials.iter().all(|t| t.session == s).then_some(s)
    }

    /// Trial indices of each subject, in dataset order.
    pub fn subject_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = alloc::vec![Vec::new(); self.n_subjects];
        for (i, t) in self.trials.iter().enumerate() {
            groups[t.subject_id as usize].push(i);
        }
        groups
    }

    /// Every trial and the layout restricted to `channels`.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        let trials = self
            .trials
            .iter()
            .map(|t| t.select_channels(channels))
            .collect::<Result<Vec<_>>>()?;
        Self::new(trials, self.layout.select(channels)?)
    }
}

/// Correct recognition rate: fraction of predictions equal to the truth.
pub fn crr(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.len() != truths.len() || truths.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need equal nonzero lengths, got {} predictions and {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let correct = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truths.len() as f64)
}

/// Outcome of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    /// Protocol setting this fit belongs to, e.g. a fine-tuning fraction.
    pub setting: String,
    /// Fold or repetition index.
    pub fold: usize,
    pub crr: f64,
    pub n_test: usize,
    pub n_correct: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mean and population standard deviation of the CRR over one setting's
/// folds.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingSummary {
    pub setting: String,
    pub folds: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub protocol: String,
    pub measure: Measure,
    pub tasks: Vec<Task>,
    /// Model settings shared by every fit; shape fields and seed are those
    /// of the run, not of an individual fold.
    pub config: ModelConfig,
    pub folds: Vec<FoldResult>,
    /// Filled in by callers that can read a clock.
    pub wall_clock_seconds: Option<f64>,
}

impl ExperimentReport {
    /// Per-setting statistics in first-appearance order.
    pub fn summaries(&self) -> Vec<SettingSummary> {
        let mut names: Vec<&str> = Vec::new();
        for f in &self.folds {
            if !names.contains(&f.setting.as_str()) {
                names.push(&f.setting);
            }
        }
        names
            .into_iter()
            .map(|name| {
                let values: Vec<f64> = self
                    .folds
                    .iter()
                    .filter(|f| f.setting == name)
                    .map(|f| f.crr)
                    .collect();
                let (mean, sd) = mean_sd(&values);
                SettingSummary {
                    setting: name.into(),
                    folds: values.len(),
                    mean,
                    sd,
                }
            })
            .collect()
    }

    /// Mean CRR over all folds.
    pub fn mean_crr(&self) -> f64 {
        let values: Vec<f64> = self.folds.iter().map(|f| f.crr).collect();
        mean_sd(&values).0
    }

    /// CRR over the concatenated test predictions of all folds.
    pub fn pooled_crr(&self) -> f64 {
        let tested: usize = self.folds.iter().map(|f| f.n_test).sum();
        let correct: usize = self.folds.iter().map(|f| f.n_correct).sum();
        if tested == 0 {
            0.0
        } else {
            correct as f64 / tested as f64
        }
    }
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}
