//! The `EEGDS1` dataset container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    "EEGDS1"
//! version  u8 (= 1)
//! header   n_channels u32, n_samples u32, sample_rate_hz f64,
//!          n_subjects u32, n_trials u32, task u8, session u8
//! layout   n_channels x (name_len u16, name UTF-8, x f64, y f64)
//! trials   n_trials x (subject_id u32, n_channels * n_samples f32 row-major)
//! ```
//!
//! Samples are stored as `f32`, so datasets whose samples are already `f32`
//! values (generator output, anything previously loaded) round-trip
//! bit-exactly.

use std::fs;
use std::path::Path;

use bbnet_core::connectivity::ElectrodeLayout;
use bbnet_core::experiment::Dataset;
use bbnet_core::signal::{Session, Task, Trial};

use crate::bytes::Reader;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 6] = b"EEGDS1";
pub const DATASET_VERSION: u8 = 1;

pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    let task = dataset.task().ok_or_else(|| {
        Error::Usage("the container holds a single task; split the dataset by task".into())
    })?;
    let session = dataset.session().ok_or_else(|| {
        Error::Usage("the container holds a single session; split the dataset by session".into())
    })?;
    let (n, t) = (dataset.n_channels(), dataset.n_samples());
    let u32_of = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Usage(format!("{what} {v} exceeds the u32 range")))
    };
    let mut out = Vec::with_capacity(64 + dataset.len() * (4 + 4 * n * t));
    out.extend_from_slice(DATASET_MAGIC);
    out.push(DATASET_VERSION);
    out.extend_from_slice(&u32_of(n, "channel count")?.to_le_bytes());
    out.extend_from_slice(&u32_of(t, "sample count")?.to_le_bytes());
    out.extend_from_slice(&dataset.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&u32_of(dataset.n_subjects(), "subject count")?.to_le_bytes());
    out.extend_from_slice(&u32_of(dataset.len(), "trial count")?.to_le_bytes());
    out.push(task.code());
    out.push(session.code());
    let layout = dataset.layout();
    for (name, pos) in layout.names().iter().zip(layout.positions()) {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Usage(format!("channel name {name:?} is too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&pos[0].to_le_bytes());
        out.extend_from_slice(&pos[1].to_le_bytes());
    }
    for (i, trial) in dataset.trials().iter().enumerate() {
        out.extend_from_slice(&trial.subject_id.to_le_bytes());
        for &v in trial.data() {
            let v32 = v as f32;
            if !v32.is_finite() {
                return Err(Error::Usage(format!("trial {i} has a sample {v} outside the f32 range")));
            }
            out.extend_from_slice(&v32.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    let magic = r.take(6, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"EEGDS1\"")));
    }
    let version = r.u8("version")?;
    if version != DATASET_VERSION {
        return Err(Error::format(6, format!("unsupported version {version}")));
    }
    let n = r.u32("channel count")? as usize;
    let t = r.u32("sample count")? as usize;
    let fs_at = r.offset();
    let fs = r.f64("sample rate")?;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::format(fs_at, format!("sample rate {fs} is not positive")));
    }
    let n_subjects = r.u32("subject count")?;
    let n_trials = r.u32("trial count")? as usize;
    let task_at = r.offset();
    let task = Task::from_code(r.u8("task")?)
        .ok_or_else(|| Error::format(task_at, "unknown task code"))?;
    let session = Session::from_code(r.u8("session")?)
        .ok_or_else(|| Error::format(task_at + 1, "unknown session code"))?;
    if n < 2 || t < 2 || n_trials == 0 {
        return Err(Error::format(
            7,
            format!("header describes {n_trials} trials of {n}x{t}; need at least one 2x2 trial"),
        ));
    }

    let layout_at = r.offset();
    let mut names = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u16("channel name length")? as usize;
        names.push(r.string(len, "channel name")?);
        let at = r.offset();
        let pos = [r.f64("electrode x")?, r.f64("electrode y")?];
        if !pos.iter().all(|v| v.is_finite()) {
            return Err(Error::format(at, "non-finite electrode position"));
        }
        positions.push(pos);
    }
    let layout = ElectrodeLayout::new(names, positions)
        .map_err(|e| Error::format(layout_at, e.to_string()))?;

    let mut trials = Vec::with_capacity(n_trials);
    for i in 0..n_trials {
        let at = r.offset();
        let subject = r.u32("subject id")?;
        if subject >= n_subjects {
            return Err(Error::format(
                at,
                format!("trial {i} has subject {subject}, header declares {n_subjects} subjects"),
            ));
        }
        let data: Vec<f64> = r
            .f32s(n * t, "trial samples")?
            .into_iter()
            .map(f64::from)
            .collect();
        trials.push(Trial::new(data, n, subject, session, task, fs)?);
    }
    r.finish()?;
    let dataset = Dataset::new(trials, layout).map_err(|e| Error::format(layout_at, e.to_string()))?;
    if dataset.n_subjects() != n_subjects as usize {
        return Err(Error::format(
            23,
            format!(
                "header declares {n_subjects} subjects, trials cover {}",
                dataset.n_subjects()
            ),
        ));
    }
    Ok(dataset)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(dataset)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}
