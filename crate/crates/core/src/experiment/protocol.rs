//! Evaluation protocols as lists of independent fits.
//!
//! A [`ProtocolPlan`] holds the prepared samples of every trial involved and
//! one [`FitJob`] per fold or repetition. Jobs can run in any order or in
//! parallel; [`ProtocolPlan::finish`] restores job order.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::split::{holdout_validation, kfold_groups};
use super::{crr, Dataset, ExperimentReport, FoldResult};
use crate::connectivity::{normalize_adjacency, raw_adjacency, ConnectivityConfig, Measure};
use crate::graph::renormalize_with;
use crate::model::{fit, ModelConfig, Sample, TrainedModel};
use crate::signal::{preprocess, Task};
use crate::util::mix_seed;
use crate::{Error, Result};

const SALT_SPLIT: u64 = 0x5911;
const SALT_FIT: u64 = 0xF17;
const SALT_RDM: u64 = 0x2D11;
const SALT_SELECT: u64 = 0x5E1E;
const SALT_HOLDOUT: u64 = 0x401D;

/// Fine-tuning fractions from 0 to 50% in 5% steps.
pub const FINETUNE_GRID: [f64; 11] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];

/// Settings shared by every protocol. The shape fields of `model` are
/// replaced by those of the data; `model.seed` is the master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub connectivity: ConnectivityConfig,
    pub folds: usize,
    /// Seeded repetitions of the fine-tuning protocols.
    pub repetitions: usize,
    /// Bandpass and decimate every trial before use.
    pub preprocess: bool,
}

impl ExperimentConfig {
    pub fn new(measure: Measure, seed: u64) -> Self {
        let mut model = ModelConfig::new(0, 0, 0, measure);
        model.seed = seed;
        Self {
            model,
            connectivity: ConnectivityConfig::default(),
            folds: 5,
            repetitions: 5,
            preprocess: true,
        }
    }
}

/// A named set of electrodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElectrodeGroup {
    pub name: String,
    pub channels: Vec<String>,
}

/// One fit: sample indices into the plan's pool and the model seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitJob {
    pub setting: String,
    pub fold: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ProtocolPlan {
    protocol: String,
    tasks: Vec<Task>,
    config: ModelConfig,
    samples: Vec<Sample<f32>>,
    jobs: Vec<FitJob>,
}

impl ProtocolPlan {
    pub fn protocol(&self) -> &str {
        &self.protocol
    }

    pub fn jobs(&self) -> &[FitJob] {
        &self.jobs
    }

    pub fn samples(&self) -> &[Sample<f32>] {
        &self.samples
    }

    /// Model settings with the data's shape filled in.
    pub fn model_config(&self) -> &ModelConfig {
        &self.config
    }

    /// Trains and tests job `index`.
    pub fn run_job(&self, index: usize) -> Result<FoldResult> {
        self.fit_job(index).map(|(result, _)| result)
    }

    /// As [`run_job`](Self::run_job), also returning the trained model.
    pub fn fit_job(&self, index: usize) -> Result<(FoldResult, TrainedModel<f32>)> {
        let job = self
            .jobs
            .get(index)
            .ok_or_else(|| Error::InvalidParameter(format!("no job {index}")))?;
        let mut config = self.config.clone();
        config.seed = job.seed;
        let pick = |idx: &[usize]| idx.iter().map(|&i| &self.samples[i]).collect::<Vec<_>>();
        let (train, val, test) = (pick(&job.train), pick(&job.validation), pick(&job.test));
        let trained = fit(&config, &train, &val)?;
        let predictions = trained.network.predict(&test)?;
        let truths: Vec<usize> = test.iter().map(|s| s.label).collect();
        let rate = crr(&predictions, &truths)?;
        let result = FoldResult {
            setting: job.setting.clone(),
            fold: job.fold,
            crr: rate,
            n_test: truths.len(),
            n_correct: predictions.iter().zip(&truths).filter(|(p, t)| p == t).count(),
            best_epoch: trained.best_epoch,
            history: trained.history.clone(),
        };
        Ok((result, trained))
    }

    /// Collects per-job results, given in job order.
    pub fn finish(&self, results: Vec<FoldResult>) -> Result<ExperimentReport> {
        if results.len() != self.jobs.len() {
            return Err(Error::Usage(format!(
                "{} results for {} jobs",
                results.len(),
                self.jobs.len()
            )));
        }
        Ok(ExperimentReport {
            protocol: self.protocol.clone(),
            measure: self.config.measure,
            tasks: self.tasks.clone(),
            config: self.config.clone(),
            folds: results,
            wall_clock_seconds: None,
        })
    }

    /// Runs every job in order.
    pub fn run(&self) -> Result<ExperimentReport> {
        let results = (0..self.jobs.len())
            .map(|i| self.run_job(i))
            .collect::<Result<Vec<_>>>()?;
        self.finish(results)
    }
}

/// Preprocesses every trial, builds its adjacency and renormalized
/// operator, and converts to training precision. With `channels`, the raw
/// adjacency of the full montage is restricted before normalization, which
/// equals computing it on the restricted trial since every measure is
/// pairwise. `stream` seeds the per-trial RDM matrices.
pub fn prepare_samples(
    dataset: &Dataset,
    channels: Option<&[usize]>,
    config: &ExperimentConfig,
    stream: u64,
) -> Result<Vec<Sample<f32>>> {
    let measure = config.model.measure;
    let rdm_stream = mix_seed(mix_seed(config.model.seed, SALT_RDM), stream);
    dataset
        .trials()
        .iter()
        .enumerate()
        .map(|(i, trial)| {
            let mut trial = if config.preprocess {
                preprocess(trial)?
            } else {
                trial.clone()
            };
            let mut raw = raw_adjacency(
                &trial,
                dataset.layout(),
                measure,
                &config.connectivity,
                mix_seed(rdm_stream, i as u64),
            )?;
            if let Some(ch) = channels {
                trial = trial.select_channels(ch)?;
                raw = raw.select(ch)?;
            }
            let adj = if measure.is_normalized() {
                normalize_adjacency(&raw)
            } else {
                raw
            };
            let op = renormalize_with(&adj, config.model.degree)?;
            Sample::new(&trial, &op, trial.subject_id as usize)
        })
        .collect()
}

fn shaped_config(config: &ExperimentConfig, samples: &[Sample<f32>], n_classes: usize) -> Result<ModelConfig> {
    let mut model = config.model.clone();
    model.n_channels = samples[0].n_channels();
    model.input_len = samples[0].n_samples();
    model.n_classes = n_classes;
    model.validate()?;
    Ok(model)
}

fn kfold_plan(
    protocol: String,
    dataset: &Dataset,
    samples: Vec<Sample<f32>>,
    config: &ExperimentConfig,
) -> Result<ProtocolPlan> {
    if dataset.session().is_none() {
        return Err(Error::InvalidParameter(
            "a k-fold protocol needs trials from a single session".into(),
        ));
    }
    let model = shaped_config(config, &samples, dataset.n_subjects())?;
    let seed = config.model.seed;
    let splits = kfold_groups(&dataset.subject_indices(), config.folds, mix_seed(seed, SALT_SPLIT))?;
    let jobs = splits
        .into_iter()
        .map(|plan| FitJob {
            setting: "all".to_string(),
            fold: plan.fold,
            train: plan.train_indices(),
            validation: plan.validation_indices(),
            test: plan.test_indices(),
            seed: mix_seed(mix_seed(seed, SALT_FIT), plan.fold as u64),
        })
        .collect();
    Ok(ProtocolPlan {
        protocol,
        tasks: dataset.tasks(),
        config: model,
        samples,
        jobs,
    })
}

/// Stratified k-fold cross-validation within one session.
pub fn plan_intra_session(dataset: &Dataset, config: &ExperimentConfig) -> Result<ProtocolPlan> {
    let samples = prepare_samples(dataset, None, config, 0)?;
    kfold_plan("intra-session".into(), dataset, samples, config)
}

pub fn run_intra_session(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    plan_intra_session(dataset, config)?.run()
}

/// The intra-session protocol on the group's electrodes only.
pub fn plan_electrode_subset(
    dataset: &Dataset,
    group: &ElectrodeGroup,
    config: &ExperimentConfig,
) -> Result<ProtocolPlan> {
    let channels = dataset.layout().resolve(&group.channels)?;
    let samples = prepare_samples(dataset, Some(&channels), config, 0)?;
    kfold_plan(format!("electrode-subset:{}", group.name), dataset, samples, config)
}

pub fn run_electrode_subset(
    dataset: &Dataset,
    group: &ElectrodeGroup,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    plan_electrode_subset(dataset, group, config)?.run()
}

/// The intra-session protocol on trials from several tasks pooled by
/// concatenation.
pub fn plan_diverse_tasks(parts: &[&Dataset], config: &ExperimentConfig) -> Result<ProtocolPlan> {
    let pooled = Dataset::pool(parts)?;
    let samples = prepare_samples(&pooled, None, config, 0)?;
    kfold_plan("diverse-tasks".into(), &pooled, samples, config)
}

pub fn run_diverse_tasks(parts: &[&Dataset], config: &ExperimentConfig) -> Result<ExperimentReport> {
    plan_diverse_tasks(parts, config)?.run()
}

/// Train on `source` plus a fraction of each subject's `target` trials,
/// test on the remaining `target` trials.
///
/// Per repetition, each subject's target trials are shuffled once and the
/// first `round(fraction * n)` are added to training, so larger fractions
/// extend smaller ones. The last eighth of each subject's shuffled training
/// union validates. A repetition uses the same model seed at every
/// fraction.
pub fn plan_cross_session(
    source: &Dataset,
    target: &Dataset,
    fractions: &[f64],
    config: &ExperimentConfig,
) -> Result<ProtocolPlan> {
    cross_plan("cross-session".into(), source, target, fractions, config)
}

pub fn run_cross_session(
    source: &Dataset,
    target: &Dataset,
    fraction: f64,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    plan_cross_session(source, target, &[fraction], config)?.run()
}

/// Same mechanics as [`plan_cross_session`] between two tasks.
pub fn plan_cross_task(
    source: &Dataset,
    target: &Dataset,
    fractions: &[f64],
    config: &ExperimentConfig,
) -> Result<ProtocolPlan> {
    cross_plan("cross-task".into(), source, target, fractions, config)
}

pub fn run_cross_task(
    source: &Dataset,
    target: &Dataset,
    fraction: f64,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    plan_cross_task(source, target, &[fraction], config)?.run()
}

fn cross_plan(
    protocol: String,
    source: &Dataset,
    target: &Dataset,
    fractions: &[f64],
    config: &ExperimentConfig,
) -> Result<ProtocolPlan> {
    if source.n_subjects() != target.n_subjects() {
        return Err(Error::InvalidParameter(format!(
            "source has {} subjects, target has {}",
            source.n_subjects(),
            target.n_subjects()
        )));
    }
    if source.n_channels() != target.n_channels() || source.n_samples() != target.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "source trials are {}x{}, target trials are {}x{}",
            source.n_channels(),
            source.n_samples(),
            target.n_channels(),
            target.n_samples()
        )));
    }
    if source.layout() != target.layout() {
        return Err(Error::InvalidParameter("source and target layouts differ".into()));
    }
    if fractions.is_empty() || fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
        return Err(Error::InvalidParameter(format!(
            "fine-tuning fractions must lie in [0, 1), got {fractions:?}"
        )));
    }
    if config.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be positive".into()));
    }
    let mut samples = prepare_samples(source, None, config, 0)?;
    let offset = samples.len();
    samples.extend(prepare_samples(target, None, config, 1)?);
    let model = shaped_config(config, &samples, source.n_subjects())?;
    let seed = config.model.seed;
    let source_groups = source.subject_indices();
    let target_groups: Vec<Vec<usize>> = target
        .subject_indices()
        .into_iter()
        .map(|g| g.into_iter().map(|i| i + offset).collect())
        .collect();

    let mut orders = Vec::with_capacity(config.repetitions);
    for rep in 0..config.repetitions {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, SALT_SELECT), rep as u64));
        let mut per_subject = target_groups.clone();
        for g in per_subject.iter_mut() {
            g.shuffle(&mut rng);
        }
        orders.push(per_subject);
    }
    let mut jobs = Vec::with_capacity(fractions.len() * config.repetitions);
    for &fraction in fractions {
        for (rep, order) in orders.iter().enumerate() {
            let mut union = source_groups.clone();
            let mut test = Vec::new();
            for (s, g) in order.iter().enumerate() {
                let take = libm::round(fraction * g.len() as f64) as usize;
                if take >= g.len() {
                    return Err(Error::InvalidParameter(format!(
                        "fraction {fraction} leaves subject {s} without test trials"
                    )));
                }
                union[s].extend_from_slice(&g[..take]);
                test.extend_from_slice(&g[take..]);
            }
            let holdout = mix_seed(mix_seed(seed, SALT_HOLDOUT), rep as u64);
            let (train, validation) = holdout_validation(&union, holdout)?;
            jobs.push(FitJob {
                setting: format!("finetune={fraction:.2}"),
                fold: rep,
                train,
                validation,
                test,
                seed: mix_seed(mix_seed(seed, SALT_FIT), rep as u64),
            });
        }
    }
    let mut tasks = source.tasks();
    tasks.extend(target.tasks());
    Ok(ProtocolPlan {
        protocol,
        tasks,
        config: model,
        samples,
        jobs,
    })
}
