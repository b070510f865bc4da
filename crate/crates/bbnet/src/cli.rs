//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use bbnet_core::connectivity::{normalize_adjacency, raw_adjacency, ConnectivityConfig};
use bbnet_core::experiment::{generate_synthetic, SyntheticConfig};
use bbnet_core::signal::{preprocess, Session, Task};
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::read_checkpoint;
use crate::config::{parse_measure, parse_pli, Protocol, RunConfig};
use crate::container::{load_dataset, save_dataset};
use crate::runner::execute;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "bbnet", version, about = "EEG graph-connectivity biometrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-subject dataset.
    Synth(SynthArgs),
    /// Write one trial's adjacency matrix as tab-separated text.
    Connectivity(ConnectivityArgs),
    /// Run an evaluation protocol.
    Run(RunArgs),
    /// List the tensors of a checkpoint.
    InspectCheckpoint(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    /// Trials per subject.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    /// Samples per trial.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Required: every dataset is reproducible from its seed.
    #[arg(long)]
    pub seed: u64,
    /// 1 or 2. Defaults to 2 when --session-shift is given, else 1.
    #[arg(long)]
    pub session: Option<u8>,
    /// Perturbation strength applied to session II subjects.
    #[arg(long)]
    pub session_shift: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub snr_db: f64,
    /// Task label written to the file (mi, erp, ssvep, synth).
    #[arg(long, default_value = "synth")]
    pub task: String,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConnectivityArgs {
    /// Dataset container.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub trial: usize,
    /// dist | cor | plv | pli | rho | idn | rdm
    #[arg(long)]
    pub measure: String,
    /// Write the measure before min-max normalization.
    #[arg(long)]
    pub raw: bool,
    /// Use the trial as stored instead of bandpassed and decimated.
    #[arg(long)]
    pub no_preprocess: bool,
    /// signed | absolute
    #[arg(long, default_value = "signed")]
    pub pli: String,
    #[arg(long)]
    pub rho_bins: Option<usize>,
    /// Seed of the random matrix; required for rdm.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (TOML); flags override its entries.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// intra | cross-session | cross-task | subset | diverse
    #[arg(long)]
    pub protocol: Option<String>,
    /// Input container; repeat for source/target or pooled tasks.
    #[arg(short, long = "dataset")]
    pub datasets: Vec<PathBuf>,
    #[arg(long)]
    pub measure: Option<String>,
    /// Fine-tuning percentages, e.g. `0,5,...,50`.
    #[arg(long)]
    pub finetune: Option<String>,
    /// Electrode group for the subset protocol.
    #[arg(long)]
    pub subset: Option<String>,
    /// Electrode group table replacing the built-in one.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Save the weights of every fit.
    #[arg(long)]
    pub checkpoints: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

/// Runs one parsed command, writing human-readable progress to `out`.
pub fn dispatch(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Connectivity(a) => cmd_connectivity(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::InspectCheckpoint(a) => cmd_inspect(a, out),
    }
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_synth(a: SynthArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let mut config = SyntheticConfig::new(a.subjects, a.trials, a.channels, a.samples, a.seed);
    config.snr_db = a.snr_db;
    config.task = Task::parse(&a.task)
        .ok_or_else(|| Error::Usage(format!("unknown task {:?}; expected mi, erp, ssvep or synth", a.task)))?;
    config.session_shift = a.session_shift.unwrap_or(0.0);
    let session = a
        .session
        .unwrap_or(if a.session_shift.is_some() { 2 } else { 1 });
    config.session = Session::from_code(session)
        .ok_or_else(|| Error::Usage(format!("session must be 1 or 2, got {session}")))?;
    let dataset = generate_synthetic(&config)?;
    save_dataset(&dataset, &a.output)?;
    emit(
        out,
        &format!(
            "wrote {}: {} subjects x {} trials, {} channels x {} samples at {} Hz, session {}\n",
            a.output.display(),
            dataset.n_subjects(),
            a.trials,
            dataset.n_channels(),
            dataset.n_samples(),
            dataset.sample_rate_hz(),
            session
        ),
    )
}

pub fn cmd_connectivity(a: ConnectivityArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let measure = parse_measure(&a.measure)?;
    let dataset = load_dataset(&a.input)?;
    let trial = dataset.trials().get(a.trial).ok_or_else(|| {
        Error::Usage(format!("trial {} out of range; the dataset has {}", a.trial, dataset.len()))
    })?;
    let trial = if a.no_preprocess {
        trial.clone()
    } else {
        preprocess(trial)?
    };
    let seed = match (measure, a.seed) {
        (bbnet_core::connectivity::Measure::Rdm, None) => {
            return Err(Error::Usage("--measure rdm needs an explicit --seed".into()))
        }
        (_, s) => s.unwrap_or(0),
    };
    if a.rho_bins == Some(0) {
        return Err(Error::Usage("--rho-bins must be positive".into()));
    }
    let config = ConnectivityConfig {
        pli: parse_pli(&a.pli)?,
        rho_bins: a.rho_bins,
    };
    let raw = raw_adjacency(&trial, dataset.layout(), measure, &config, seed)?;
    let adj = if a.raw || !measure.is_normalized() {
        raw
    } else {
        normalize_adjacency(&raw)
    };
    let names = dataset.layout().names();
    let mut text = String::from("channel");
    for name in names {
        text.push('\t');
        text.push_str(name);
    }
    text.push('\n');
    for (k, name) in names.iter().enumerate() {
        text.push_str(name);
        for l in 0..adj.n() {
            let _ = write!(text, "\t{}", adj.get(k, l));
        }
        text.push('\n');
    }
    match &a.output {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => emit(out, &text),
    }
}

/// Expands `0,5,...,50` style lists; `...` continues the step of the two
/// preceding values up to the next one.
pub fn parse_percent_list(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("cannot parse fine-tuning list {s:?}"));
    let tokens: Vec<&str> = s.split(',').map(str::trim).collect();
    let mut values: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] == "..." {
            let n = values.len();
            let end: f64 = tokens.get(i + 1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if n < 2 {
                return Err(bad());
            }
            let step = values[n - 1] - values[n - 2];
            if step <= 0.0 || end < values[n - 1] {
                return Err(bad());
            }
            let (first, count) = (values[n - 1], ((end - values[n - 1]) / step).round() as usize);
            for k in 1..=count {
                values.push(first + step * k as f64);
            }
            if (values[values.len() - 1] - end).abs() > 1e-9 {
                return Err(bad());
            }
            i += 2;
        } else {
            values.push(tokens[i].parse().map_err(|_| bad())?);
            i += 1;
        }
    }
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

/// The run configuration from `--config` with flag overrides applied.
pub fn resolve_run_config(a: &RunArgs) -> Result<RunConfig> {
    let mut config = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let seed = a.seed.ok_or_else(|| {
                Error::Usage("--seed is required (or a --config that sets it)".into())
            })?;
            let protocol = a.protocol.as_deref().unwrap_or("intra");
            let output = a
                .output
                .clone()
                .ok_or_else(|| Error::Usage("--output is required without --config".into()))?;
            RunConfig::new(seed, parse_protocol(protocol)?, Vec::new(), output)
        }
    };
    if let Some(p) = &a.protocol {
        config.protocol = parse_protocol(p)?;
    }
    if !a.datasets.is_empty() {
        config.datasets = a.datasets.clone();
    }
    if let Some(m) = &a.measure {
        config.model.measure = m.clone();
    }
    if let Some(list) = &a.finetune {
        config.finetune = parse_percent_list(list)?
            .into_iter()
            .map(|p| (p * 1e6).round() / 1e8)
            .collect();
    }
    if let Some(s) = &a.subset {
        config.subset = Some(s.clone());
    }
    if let Some(g) = &a.groups {
        config.groups = Some(g.clone());
    }
    if let Some(o) = &a.output {
        config.output = o.clone();
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(j) = a.jobs {
        config.jobs = j;
    }
    if let Some(e) = a.max_epochs {
        config.model.max_epochs = e;
    }
    if let Some(f) = a.folds {
        config.evaluation.folds = f;
    }
    if let Some(r) = a.repetitions {
        config.evaluation.repetitions = r;
    }
    if a.checkpoints {
        config.checkpoints = true;
    }
    config.validate()?;
    Ok(config)
}

fn parse_protocol(s: &str) -> Result<Protocol> {
    Protocol::parse(s).ok_or_else(|| {
        Error::Usage(format!(
            "unknown protocol {s:?}; expected intra, cross-session, cross-task, subset or diverse"
        ))
    })
}

pub fn cmd_run(a: RunArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let config = resolve_run_config(&a)?;
    let report = execute(&config)?;
    let mut text = format!(
        "{} [{}] -> {}\n",
        report.protocol,
        report.measure.name(),
        config.output.display()
    );
    for row in report.summaries() {
        let _ = writeln!(
            text,
            "  {:<16} folds {}  CRR {:.4} +/- {:.4}",
            row.setting, row.folds, row.mean, row.sd
        );
    }
    emit(out, &text)
}

pub fn cmd_inspect(a: InspectArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let tensors = read_checkpoint(&a.path)?;
    let mut text = String::from("name\tshape\tvalues\n");
    let mut total = 0;
    for t in &tensors {
        let shape: Vec<String> = t.tensor.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(text, "{}\t{}\t{}", t.name, shape.join("x"), t.tensor.len());
        total += t.tensor.len();
    }
    let _ = writeln!(text, "total\t-\t{total}");
    emit(out, &text)
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are reported on stderr as one JSON record.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let record = serde_json::json!({
                "error": "usage",
                "message": e.render().to_string().trim_end(),
            });
            eprintln!("{record}");
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(cli, &mut lock) {
        Ok(()) => {
            let _ = lock.flush();
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
