//! Electrode positions on a normalized 2-D head map.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, Result};

/// The 62-channel BrainAmp montage in recording order.
pub const MONTAGE_62: [&str; 62] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7", "C3", "Cz",
    "C4", "T8", "TP9", "CP5", "CP1", "CP2", "CP6", "TP10", "P7", "P3", "Pz", "P4", "P8", "PO9",
    "O1", "Oz", "O2", "PO10", "FC3", "FC4", "C5", "C1", "C2", "C6", "CP3", "CPz", "CP4", "P1",
    "P2", "POz", "FT9", "FTT9h", "TTP7h", "TP7", "TPP9h", "FT10", "FTT10h", "TPP8h", "TP8",
    "TPP10h", "F9", "F10", "AF7", "AF3", "AF4", "AF8", "PO3", "PO4",
];

/// Channel names and 2-D positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeLayout {
    names: Vec<String>,
    positions: Vec<[f64; 2]>,
}

impl ElectrodeLayout {
    pub fn new(names: Vec<String>, positions: Vec<[f64; 2]>) -> Result<Self> {
        if names.len() != positions.len() {
            return Err(Error::InvalidInput(format!(
                "{} names but {} positions",
                names.len(),
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite electrode position".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].iter().any(|b| b == a) {
                return Err(Error::InvalidInput(format!("duplicate channel name {a}")));
            }
        }
        Ok(Self { names, positions })
    }

    /// Positions of named 10-20/10-10 electrodes from a spherical head
    /// model projected azimuthally (vertex at the origin, nose towards +y,
    /// the `T7`/`Fpz`/`T8`/`Oz` ring at radius 0.8).
    pub fn standard(names: &[&str]) -> Result<Self> {
        let positions = names
            .iter()
            .map(|n| {
                standard_position(n)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown 10-20 name {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(names.iter().map(|s| s.to_string()).collect(), positions)
    }

    /// The full 62-electrode montage.
    pub fn montage_62() -> Self {
        Self::standard(&MONTAGE_62).expect("built-in montage is valid")
    }

    /// First `n` montage electrodes; beyond 62, a regular grid of `E<k>` labels.
    pub fn for_channel_count(n: usize) -> Self {
        if n <= MONTAGE_62.len() {
            return Self::standard(&MONTAGE_62[..n]).expect("built-in montage is valid");
        }
        let side = libm::ceil(libm::sqrt(n as f64)) as usize;
        let names = (0..n).map(|k| format!("E{k}")).collect();
        let positions = (0..n)
            .map(|k| {
                let (r, c) = (k / side, k % side);
                let scale = 1.6 / (side.max(2) - 1) as f64;
                [c as f64 * scale - 0.8, 0.8 - r as f64 * scale]
            })
            .collect();
        Self::new(names, positions).expect("grid layout is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    /// Resolves channel names to indices.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown channel name {n}")))
            })
            .collect()
    }

    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        let mut names = Vec::with_capacity(channels.len());
        let mut positions = Vec::with_capacity(channels.len());
        for &k in channels {
            if k >= self.len() {
                return Err(Error::InvalidParameter(format!("channel {k} out of range")));
            }
            names.push(self.names[k].clone());
            positions.push(self.positions[k]);
        }
        Self::new(names, positions)
    }
}

/// Parses a 10-10 style label into (anterior-posterior, lateral) steps of
/// 10% arc length (18 degrees) away from `Cz`.
fn grid_steps(name: &str) -> Option<(f64, f64)> {
    let lower = name.to_ascii_lowercase();
    let (body, half) = match lower.strip_suffix('h') {
        Some(b) if b.ends_with(|c: char| c.is_ascii_digit()) => (b, true),
        _ => (lower.as_str(), false),
    };
    let split = body.find(|c: char| c.is_ascii_digit() || c == 'z')?;
    let (prefix, suffix) = body.split_at(split);
    let row = match prefix {
        "fp" | "n" => -4.0,
        "af" => -3.0,
        "f" => -2.0,
        "fc" | "ft" => -1.0,
        "ftt" | "fcc" => -0.5,
        "c" | "t" => 0.0,
        "ttp" | "ccp" => 0.5,
        "cp" | "tp" => 1.0,
        "tpp" | "cpp" => 1.5,
        "p" => 2.0,
        "po" => 3.0,
        "o" | "i" => 4.0,
        _ => return None,
    };
    let lateral = if suffix == "z" {
        0.0
    } else {
        let n: u32 = suffix.parse().ok()?;
        if n == 0 {
            return None;
        }
        let steps = n.div_ceil(2) as f64 - if half { 0.5 } else { 0.0 };
        if n % 2 == 1 {
            -steps
        } else {
            steps
        }
    };
    Some((row, lateral))
}

fn standard_position(name: &str) -> Option<[f64; 2]> {
    let (row, lateral) = grid_steps(name)?;
    let step = PI / 10.0;
    let (alpha, beta) = (row * step, lateral * step);
    let x = libm::sin(beta);
    let y = -libm::sin(alpha) * libm::cos(beta);
    let z = libm::cos(alpha) * libm::cos(beta);
    let colatitude = libm::acos(z.clamp(-1.0, 1.0));
    let radius = colatitude / (PI / 2.0);
    let azimuth = libm::atan2(y, x);
    Some([radius * libm::cos(azimuth), radius * libm::sin(azimuth)])
}
