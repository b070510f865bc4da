//! The connectivity measures themselves.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AdjacencyMatrix, ElectrodeLayout, Measure, PliConvention};
use crate::signal::{PhaseSeries, Trial};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// `|p_k - p_l|_2` for every electrode pair. Identical for all trials.
pub fn euclidean_distance_matrix(layout: &ElectrodeLayout) -> AdjacencyMatrix {
    let p = layout.positions();
    AdjacencyMatrix::from_pairs(layout.len(), 0.0, Measure::Dist, |k, l| {
        libm::hypot(p[k][0] - p[l][0], p[k][1] - p[l][1])
    })
}

/// Zero-lag Pearson correlation between every pair of channels.
pub fn pearson_matrix(trial: &Trial) -> Result<AdjacencyMatrix> {
    let n = trial.n_channels();
    let t = trial.n_samples();
    // Each channel centered and scaled to unit norm; r is then a dot product.
    let mut unit = Vec::with_capacity(n * t);
    for k in 0..n {
        let x = trial.channel(k);
        let mean = x.iter().sum::<f64>() / t as f64;
        let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let norm = libm::sqrt(centered.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateSignal(format!(
                "channel {k} has zero variance; correlation is undefined"
            )));
        }
        unit.extend(centered.iter().map(|v| v / norm));
    }
    Ok(AdjacencyMatrix::from_pairs(n, 1.0, Measure::Cor, |k, l| {
        let r = crate::util::dot(&unit[k * t..(k + 1) * t], &unit[l * t..(l + 1) * t]);
        r.clamp(-1.0, 1.0)
    }))
}

fn check_pair(phase: &PhaseSeries, k: usize, l: usize) -> Result<()> {
    let n = phase.n_channels();
    if k >= n || l >= n {
        return Err(Error::InvalidParameter(format!(
            "channel pair ({k}, {l}) out of range for {n} channels"
        )));
    }
    if k == l {
        return Err(Error::InvalidParameter(format!(
            "relative phase needs two distinct channels, got {k} twice"
        )));
    }
    Ok(())
}

#[inline]
fn abs_mod_2pi(d: f64) -> f64 {
    crate::signal::wrap_phase(libm::fabs(d))
}

#[inline]
fn wrap_signed(d: f64) -> f64 {
    // (-pi, pi]
    let w = crate::signal::wrap_phase(d);
    if w > PI {
        w - TWO_PI
    } else {
        w
    }
}

/// `|phi_k(t) - phi_l(t)| mod 2pi`.
pub fn relative_phase(phase: &PhaseSeries, k: usize, l: usize) -> Result<Vec<f64>> {
    check_pair(phase, k, l)?;
    Ok(phase
        .channel(k)
        .iter()
        .zip(phase.channel(l))
        .map(|(a, b)| abs_mod_2pi(a - b))
        .collect())
}

/// `phi_k(t) - phi_l(t)` wrapped to `(-pi, pi]`.
pub fn signed_phase_difference(phase: &PhaseSeries, k: usize, l: usize) -> Result<Vec<f64>> {
    check_pair(phase, k, l)?;
    Ok(phase
        .channel(k)
        .iter()
        .zip(phase.channel(l))
        .map(|(a, b)| wrap_signed(a - b))
        .collect())
}

/// Phase-locking value: modulus of the mean unit phasor of the relative
/// phase. Unit diagonal.
pub fn plv_matrix(phase: &PhaseSeries) -> AdjacencyMatrix {
    let n = phase.n_channels();
    let t = phase.n_samples();
    AdjacencyMatrix::from_pairs(n, 1.0, Measure::Plv, |k, l| {
        let (pk, pl) = (phase.channel(k), phase.channel(l));
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..t {
            let d = abs_mod_2pi(pk[i] - pl[i]);
            acc += Complex64::new(libm::cos(d), libm::sin(d));
        }
        (acc / t as f64).norm()
    })
}

#[inline]
fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Phase-lag index: `|mean sign(dphi)|` with `sign(0) = 0`. Zero diagonal.
pub fn pli_matrix(phase: &PhaseSeries, convention: PliConvention) -> AdjacencyMatrix {
    let n = phase.n_channels();
    let t = phase.n_samples();
    AdjacencyMatrix::from_pairs(n, 0.0, Measure::Pli, |k, l| {
        let (pk, pl) = (phase.channel(k), phase.channel(l));
        let total: f64 = (0..t)
            .map(|i| {
                let d = pk[i] - pl[i];
                signum(match convention {
                    PliConvention::Signed => wrap_signed(d),
                    PliConvention::Absolute => abs_mod_2pi(d),
                })
            })
            .sum();
        libm::fabs(total / t as f64)
    })
}

/// Entropy synchronization index `1 - S / ln(bins)`, where `S` is the
/// Shannon entropy of the relative phase histogrammed into `bins` equal
/// bins over `[0, 2pi)`. Unit diagonal.
pub fn rho_matrix(phase: &PhaseSeries, bins: usize) -> Result<AdjacencyMatrix> {
    let n = phase.n_channels();
    let t = phase.n_samples();
    if t < 2 {
        return Err(Error::InvalidParameter("RHO needs at least 2 samples".into()));
    }
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("RHO needs at least 2 bins, got {bins}")));
    }
    let s_max = libm::log(bins as f64);
    let mut counts = vec![0u32; bins];
    let mut idx = vec![0usize; t];
    Ok(AdjacencyMatrix::from_pairs(n, 1.0, Measure::Rho, |k, l| {
        let (pk, pl) = (phase.channel(k), phase.channel(l));
        for i in 0..t {
            let d = abs_mod_2pi(pk[i] - pl[i]);
            let b = ((d / TWO_PI * bins as f64) as usize).min(bins - 1);
            idx[i] = b;
            counts[b] += 1;
        }
        let mut entropy = 0.0;
        for &b in &idx {
            let c = counts[b];
            if c > 0 {
                let p = c as f64 / t as f64;
                entropy -= p * libm::log(p);
                counts[b] = 0;
            }
        }
        1.0 - entropy / s_max
    }))
}

/// `N x N` identity: every electrode connected only to itself.
pub fn identity_adjacency(n: usize) -> AdjacencyMatrix {
    AdjacencyMatrix::from_pairs(n.max(1), 1.0, Measure::Idn, |_, _| 0.0)
}

/// Symmetric matrix with i.i.d. `U[-1, 1]` entries above the diagonal,
/// mirrored below, and a unit diagonal.
pub fn random_adjacency(n: usize, seed: u64) -> AdjacencyMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AdjacencyMatrix::from_pairs(n.max(1), 1.0, Measure::Rdm, |_, _| {
        rng.random_range(-1.0..=1.0)
    })
}

/// Affine min-max map of all entries onto `[-1, 1]`; a constant matrix maps
/// to zeros.
pub fn normalize_adjacency(adj: &AdjacencyMatrix) -> AdjacencyMatrix {
    let (lo, hi) = adj
        .weights()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
    let range = hi - lo;
    let weights = adj
        .weights()
        .iter()
        .map(|&w| if range > 0.0 { 2.0 * (w - lo) / range - 1.0 } else { 0.0 })
        .collect();
    AdjacencyMatrix {
        weights,
        n: adj.n(),
        measure: adj.measure,
    }
}
