//! Pairwise electrode connectivity and the weighted adjacency matrix of the
//! EEG graph.

mod layout;
mod measures;

use alloc::format;
use alloc::vec::Vec;

pub use layout::{ElectrodeLayout, MONTAGE_62};
pub use measures::{
    euclidean_distance_matrix, identity_adjacency, normalize_adjacency, pearson_matrix,
    pli_matrix, plv_matrix, random_adjacency, relative_phase, rho_matrix, signed_phase_difference,
};

use crate::signal::{instantaneous_phase, Trial};
use crate::{Error, Result};

/// Edge-weight definition of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    /// Euclidean distance between electrode positions.
    Dist,
    /// Pearson correlation.
    Cor,
    /// Phase-locking value.
    Plv,
    /// Phase-lag index.
    Pli,
    /// Entropy-based synchronization index.
    Rho,
    /// Identity matrix: no connectivity.
    Idn,
    /// Seeded random symmetric matrix.
    Rdm,
}

impl Measure {
    pub const ALL: [Measure; 7] = [
        Measure::Dist,
        Measure::Cor,
        Measure::Plv,
        Measure::Pli,
        Measure::Rho,
        Measure::Idn,
        Measure::Rdm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Dist => "DIST",
            Measure::Cor => "COR",
            Measure::Plv => "PLV",
            Measure::Pli => "PLI",
            Measure::Rho => "RHO",
            Measure::Idn => "IDN",
            Measure::Rdm => "RDM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }

    /// Whether the matrix is derived from the trial's own samples.
    pub fn is_trial_dependent(self) -> bool {
        matches!(self, Measure::Cor | Measure::Plv | Measure::Pli | Measure::Rho)
    }

    /// Whether the raw matrix is min-max normalized before use.
    pub fn is_normalized(self) -> bool {
        !matches!(self, Measure::Idn | Measure::Rdm)
    }
}

/// How the phase difference enters the phase-lag index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PliConvention {
    /// `phi_k - phi_l` wrapped to `(-pi, pi]`.
    #[default]
    Signed,
    /// `|phi_k - phi_l| mod 2pi`, the same relative phase PLV and RHO use.
    Absolute,
}

/// Tunables for the phase measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConnectivityConfig {
    pub pli: PliConvention,
    /// Histogram bins for RHO; `None` means one bin per time sample.
    pub rho_bins: Option<usize>,
}

/// Symmetric `N x N` edge-weight matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    weights: Vec<f64>,
    n: usize,
    pub measure: Measure,
}

impl AdjacencyMatrix {
    /// Wraps a square, symmetric, finite matrix.
    pub fn new(weights: Vec<f64>, n: usize, measure: Measure) -> Result<Self> {
        if n == 0 || weights.len() != n * n {
            return Err(Error::Shape(format!(
                "{} weights do not form a {n}x{n} matrix",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("non-finite adjacency weight".into()));
        }
        for k in 0..n {
            for l in k + 1..n {
                if weights[k * n + l] != weights[l * n + k] {
                    return Err(Error::InvalidInput(format!(
                        "adjacency is not symmetric at ({k}, {l})"
                    )));
                }
            }
        }
        Ok(Self { weights, n, measure })
    }

    /// Builds from the upper triangle; `f(k, l)` is evaluated for `k < l` only.
    pub(crate) fn from_pairs(
        n: usize,
        diagonal: f64,
        measure: Measure,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut weights = alloc::vec![0.0; n * n];
        for k in 0..n {
            weights[k * n + k] = diagonal;
            for l in k + 1..n {
                let w = f(k, l);
                weights[k * n + l] = w;
                weights[l * n + k] = w;
            }
        }
        Self { weights, n, measure }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.weights[k * self.n + l]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|k| (k + 1..self.n).all(|l| self.get(k, l) == self.get(l, k)))
    }

    /// Rows and columns restricted to `channels`, in that order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&bad) = channels.iter().find(|&&k| k >= self.n) {
            return Err(Error::InvalidParameter(format!("channel {bad} out of range")));
        }
        let m = channels.len();
        let mut weights = Vec::with_capacity(m * m);
        for &k in channels {
            for &l in channels {
                weights.push(self.get(k, l));
            }
        }
        Ok(Self {
            weights,
            n: m,
            measure: self.measure,
        })
    }
}

/// The adjacency the model consumes for one (preprocessed) trial.
///
/// Measured matrices (DIST, COR, PLV, PLI, RHO) are min-max normalized to
/// `[-1, 1]`; IDN and RDM are used as generated. `rdm_seed` seeds RDM only.
pub fn trial_adjacency(
    trial: &Trial,
    layout: &ElectrodeLayout,
    measure: Measure,
    config: &ConnectivityConfig,
    rdm_seed: u64,
) -> Result<AdjacencyMatrix> {
    let raw = raw_adjacency(trial, layout, measure, config, rdm_seed)?;
    Ok(if measure.is_normalized() {
        normalize_adjacency(&raw)
    } else {
        raw
    })
}

/// The measure itself, before normalization.
pub fn raw_adjacency(
    trial: &Trial,
    layout: &ElectrodeLayout,
    measure: Measure,
    config: &ConnectivityConfig,
    rdm_seed: u64,
) -> Result<AdjacencyMatrix> {
    let n = trial.n_channels();
    if layout.len() != n {
        return Err(Error::Shape(format!(
            "layout has {} electrodes, trial has {n} channels",
            layout.len()
        )));
    }
    Ok(match measure {
        Measure::Dist => euclidean_distance_matrix(layout),
        Measure::Cor => pearson_matrix(trial)?,
        Measure::Plv => plv_matrix(&instantaneous_phase(trial)?),
        Measure::Pli => pli_matrix(&instantaneous_phase(trial)?, config.pli),
        Measure::Rho => {
            let phase = instantaneous_phase(trial)?;
            rho_matrix(&phase, config.rho_bins.unwrap_or(phase.n_samples()))?
        }
        Measure::Idn => identity_adjacency(n),
        Measure::Rdm => random_adjacency(n, rdm_seed),
    })
}
