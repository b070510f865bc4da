//! Loads the data of a run, executes its fits on worker threads and writes
//! the output directory.
//!
//! Output layout:
//!
//! ```text
//! resolved_config.toml   the run's configuration with every default filled in
//! report.tsv             one row per fit
//! summary.tsv            one row per setting: mean and population SD of the CRR
//! history/<fit>.tsv      per-epoch losses of every fit
//! checkpoints/<fit>.bbnet  restored weights (when enabled)
//! timing.tsv             wall-clock seconds; the only file that varies between
//!                        identical runs
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use bbnet_core::experiment::{
    plan_cross_session, plan_cross_task, plan_diverse_tasks, plan_electrode_subset,
    plan_intra_session, Dataset, ExperimentReport, FoldResult, ProtocolPlan,
};
use bbnet_core::model::{TrainedModel, Variant};

use crate::checkpoint::save_checkpoint;
use crate::config::{parse_measure, Protocol, RunConfig};
use crate::container::load_dataset;
use crate::{Error, Result};

/// Loads the run's datasets and lays out its fits.
pub fn build_plan(config: &RunConfig) -> Result<ProtocolPlan> {
    config.validate()?;
    let experiment = config.experiment_config()?;
    let datasets = config
        .datasets
        .iter()
        .map(load_dataset)
        .collect::<Result<Vec<Dataset>>>()?;
    let plan = match config.protocol {
        Protocol::Intra => plan_intra_session(&datasets[0], &experiment)?,
        Protocol::Subset => {
            let group = config.electrode_group()?;
            plan_electrode_subset(&datasets[0], &group, &experiment)?
        }
        Protocol::Diverse => {
            let parts: Vec<&Dataset> = datasets.iter().collect();
            plan_diverse_tasks(&parts, &experiment)?
        }
        Protocol::CrossSession => {
            plan_cross_session(&datasets[0], &datasets[1], &config.finetune, &experiment)?
        }
        Protocol::CrossTask => {
            plan_cross_task(&datasets[0], &datasets[1], &config.finetune, &experiment)?
        }
    };
    Ok(plan)
}

/// Runs every job of `plan` on up to `threads` workers. Results come back
/// in job order and do not depend on the thread count. With `keep_models`
/// the trained models are returned too.
pub fn run_plan(
    plan: &ProtocolPlan,
    threads: usize,
    keep_models: bool,
) -> Result<(Vec<FoldResult>, Vec<TrainedModel<f32>>)> {
    let n = plan.jobs().len();
    let slots: Vec<Mutex<Option<_>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= n {
            break;
        }
        let outcome = plan.fit_job(i);
        let failed = outcome.is_err();
        *slots[i].lock().unwrap() = Some(outcome);
        if failed {
            // Stop handing out further jobs.
            next.store(n, Ordering::Relaxed);
        }
    };
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        worker();
    } else {
        thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let mut results = Vec::with_capacity(n);
    let mut models = Vec::new();
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok((result, model))) => {
                results.push(result);
                if keep_models {
                    models.push(model);
                }
            }
            Some(Err(e)) => return Err(e.into()),
            None => {}
        }
    }
    if results.len() != n {
        return Err(Error::Usage("a fit was skipped after an earlier failure".into()));
    }
    Ok((results, models))
}

/// Executes the run described by `config` and writes its output directory.
pub fn execute(config: &RunConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let plan = build_plan(config)?;
    let (results, models) = run_plan(&plan, config.jobs, config.checkpoints)?;
    let mut report = plan.finish(results)?;
    let out = &config.output;
    write_outputs(out, &canonical(config)?, &report)?;
    if config.checkpoints {
        let dir = out.join("checkpoints");
        create_dir(&dir)?;
        for (fold, model) in report.folds.iter().zip(&models) {
            save_checkpoint(&model.network, dir.join(format!("{}.bbnet", fit_name(fold))))?;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    report.wall_clock_seconds = Some(seconds);
    write_file(&out.join("timing.tsv"), &format!("wall_clock_seconds\n{seconds:.3}\n"))?;
    Ok(report)
}

/// `config` with measure and variant names in canonical spelling.
fn canonical(config: &RunConfig) -> Result<RunConfig> {
    let mut c = config.clone();
    c.model.measure = parse_measure(&c.model.measure)?.name().to_ascii_lowercase();
    if let Some(v) = Variant::parse(&c.model.variant) {
        c.model.variant = v.name().into();
    }
    Ok(c)
}

/// Writes everything but checkpoints and timing.
pub fn write_outputs(dir: &Path, config: &RunConfig, report: &ExperimentReport) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("resolved_config.toml"), &config.to_toml()?)?;
    write_file(&dir.join("report.tsv"), &report_tsv(report))?;
    write_file(&dir.join("summary.tsv"), &summary_tsv(report))?;
    let hist = dir.join("history");
    create_dir(&hist)?;
    for fold in &report.folds {
        write_file(&hist.join(format!("{}.tsv", fit_name(fold))), &history_tsv(fold))?;
    }
    Ok(())
}

/// File stem of one fit, e.g. `all_fold0` or `finetune-0.05_fold3`.
pub fn fit_name(fold: &FoldResult) -> String {
    let setting: String = fold
        .setting
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' })
        .collect();
    format!("{setting}_fold{}", fold.fold)
}

pub const REPORT_COLUMNS: [&str; 7] =
    ["protocol", "measure", "fold", "crr", "setting", "n_test", "best_epoch"];

pub fn report_tsv(report: &ExperimentReport) -> String {
    let mut s = REPORT_COLUMNS.join("\t");
    s.push('\n');
    for f in &report.folds {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            report.protocol,
            report.measure.name(),
            f.fold,
            f.crr,
            f.setting,
            f.n_test,
            f.best_epoch
        );
    }
    s
}

pub fn summary_tsv(report: &ExperimentReport) -> String {
    let mut s = String::from("protocol\tmeasure\tsetting\tfolds\tmean_crr\tsd_crr\n");
    for row in report.summaries() {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            report.protocol,
            report.measure.name(),
            row.setting,
            row.folds,
            row.mean,
            row.sd
        );
    }
    s
}

pub fn history_tsv(fold: &FoldResult) -> String {
    let mut s = String::from("epoch\ttrain_loss\tval_loss\n");
    for r in &fold.history {
        let _ = writeln!(s, "{}\t{}\t{}", r.epoch, r.train_loss, r.val_loss);
    }
    s
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
