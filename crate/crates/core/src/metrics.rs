//! Per-UE SINR (closed form and a symbol-level Monte Carlo oracle), ergodic
//! sum spectral efficiency, and empirical CDF construction.

use std::collections::BTreeMap;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::precoding::{PrecoderMethod, PrecoderSet};
use crate::rng::SeedStream;
use crate::sc::ScMode;
use crate::{real, CVector, Cplx, Real};

/// Per-position simulation output for one UE, precoder and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<S> {
    pub member: usize,
    pub step_index: usize,
    pub ue_id: usize,
    pub cumulative_distance_m: S,
    pub sc_mode: ScMode,
    pub precoder: PrecoderMethod,
    pub snr_db: S,
    pub sigma2: S,
    pub sinr_linear: S,
    pub se_bits: S,
    pub los: bool,
}

impl<S: Real> StepRecord<S> {
    /// Spectral efficiency implied by a linear SINR.
    pub fn se_of(sinr_linear: S) -> S {
        (S::one() + sinr_linear).log2()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sinr_linear < S::zero() {
            return Err(Error::InvalidConfig("negative SINR".into()));
        }
        if crate::is_finite(self.sinr_linear)
            && (self.se_bits - Self::se_of(self.sinr_linear)).abs() > real(1e-12)
        {
            return Err(Error::InvalidConfig("spectral efficiency inconsistent with SINR".into()));
        }
        Ok(())
    }
}

/// Desired power per stream and total multiuser interference power seen by
/// one UE under a precoder set.
pub fn power_terms<S: Real>(
    h: &ChannelMatrix<S>,
    set: &PrecoderSet<S>,
    ue_index: usize,
) -> (S, S) {
    let mut desired = S::zero();
    let mut interference = S::zero();
    for (k, block) in set.blocks.iter().enumerate() {
        let power = (&h.entries * block).norm_squared();
        if k == ue_index {
            desired = power / real(set.stream_counts[k] as f64);
        } else {
            interference += power;
        }
    }
    (desired, interference)
}

fn finalize_sinr<S: Real>(numerator: S, denominator: S) -> S {
    if denominator <= numerator * real(1e-15) {
        real(f64::INFINITY)
    } else {
        numerator / denominator
    }
}

/// SINR from precomputed desired/interference powers and `n_rx` noise
/// dimensions; exact nulling at vanishing noise maps to an infinite
/// sentinel.
pub fn sinr_from_terms<S: Real>(desired: S, interference: S, n_rx: usize, sigma2: S) -> S {
    finalize_sinr(desired, interference + real::<S>(n_rx as f64) * sigma2)
}

/// Exact SINR for i.i.d. unit-variance symbols and per-antenna noise power
/// `sigma2`: desired power per stream over interference plus noise.
pub fn sinr_closed_form<S: Real>(
    h: &ChannelMatrix<S>,
    set: &PrecoderSet<S>,
    ue_index: usize,
    sigma2: S,
) -> S {
    let (desired, interference) = power_terms(h, set, ue_index);
    sinr_from_terms(desired, interference, h.entries.nrows(), sigma2)
}

/// Symbol-level Monte Carlo estimate of the same SINR with its standard
/// error, drawing unit-variance circular symbols and per-antenna noise and
/// averaging the received desired and interference-plus-noise powers.
pub fn sinr_monte_carlo<S: Real>(
    h: &ChannelMatrix<S>,
    set: &PrecoderSet<S>,
    ue_index: usize,
    sigma2: S,
    trials: usize,
    stream: &mut SeedStream,
) -> (S, S) {
    let n_rx = h.entries.nrows();
    let effective: Vec<crate::CMatrix<S>> =
        set.blocks.iter().map(|b| &h.entries * b).collect();
    let half = real::<S>(0.5).sqrt();
    let noise_amp = (sigma2 / real(2.0)).sqrt();
    let m_own = real::<S>(set.stream_counts[ue_index] as f64);

    let mut sum_n = S::zero();
    let mut sum_d = S::zero();
    let mut sum_n2 = S::zero();
    let mut sum_d2 = S::zero();
    let mut sum_nd = S::zero();
    for _ in 0..trials {
        let mut desired = CVector::<S>::zeros(n_rx);
        let mut rest = CVector::<S>::zeros(n_rx);
        for (k, hx) in effective.iter().enumerate() {
            let d_k = CVector::<S>::from_fn(set.stream_counts[k], |_, _| {
                Cplx::new(stream.next_normal::<S>() * half, stream.next_normal::<S>() * half)
            });
            let contribution = hx * d_k;
            if k == ue_index {
                desired += contribution;
            } else {
                rest += contribution;
            }
        }
        for i in 0..n_rx {
            rest[i] += Cplx::new(
                stream.next_normal::<S>() * noise_amp,
                stream.next_normal::<S>() * noise_amp,
            );
        }
        let n_i = desired.norm_squared() / m_own;
        let d_i = rest.norm_squared();
        sum_n += n_i;
        sum_d += d_i;
        sum_n2 += n_i * n_i;
        sum_d2 += d_i * d_i;
        sum_nd += n_i * d_i;
    }
    let k = real::<S>(trials as f64);
    let mean_n = sum_n / k;
    let mean_d = sum_d / k;
    if mean_d <= mean_n * real(1e-15) {
        return (real(f64::INFINITY), S::zero());
    }
    let var_n = (sum_n2 / k - mean_n * mean_n).max(S::zero());
    let var_d = (sum_d2 / k - mean_d * mean_d).max(S::zero());
    let cov = sum_nd / k - mean_n * mean_d;
    let ratio = mean_n / mean_d;
    let var_ratio = (var_n / (mean_d * mean_d) + ratio * ratio * var_d / (mean_d * mean_d)
        - real::<S>(2.0) * ratio * cov / (mean_d * mean_d))
        .max(S::zero())
        / k;
    (ratio, var_ratio.sqrt())
}

/// Ergodic sum spectral efficiency of a pre-filtered record group (one SNR
/// point, precoder and mode): per (member, step) the per-UE efficiencies
/// add up, and the expectation runs over all (member, step) pairs.
pub fn sum_spectral_efficiency<S: Real>(records: &[StepRecord<S>]) -> Result<S> {
    if records.is_empty() {
        return Err(Error::EmptyGroup("no records for this SNR/precoder/mode".into()));
    }
    let mut groups: BTreeMap<(usize, usize), S> = BTreeMap::new();
    for r in records {
        *groups.entry((r.member, r.step_index)).or_insert_with(S::zero) += r.se_bits;
    }
    let count = real::<S>(groups.len() as f64);
    let total = groups.values().fold(S::zero(), |a, &v| a + v);
    Ok(total / count)
}

/// Splits values into finite ones and a count of non-finite entries (exact
/// nulling at zero noise produces infinite-SINR sentinels).
pub fn finite_values<S: Real>(values: &[S]) -> (Vec<S>, usize) {
    let finite: Vec<S> = values
        .iter()
        .copied()
        .filter(|&v| crate::is_finite(v))
        .collect();
    let dropped = values.len() - finite.len();
    (finite, dropped)
}

/// Right-continuous empirical CDF with interpolating quantile lookup.
#[derive(Debug, Clone)]
pub struct Cdf<S> {
    sorted: Vec<S>,
}

/// Builds the empirical CDF of at least two values.
pub fn empirical_cdf<S: Real>(values: &[S]) -> Result<Cdf<S>> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in CDF input"));
    Ok(Cdf { sorted })
}

impl<S: Real> Cdf<S> {
    /// `(value, probability)` pairs with probabilities `i/n`.
    pub fn points(&self) -> Vec<(S, S)> {
        let n = real::<S>(self.sorted.len() as f64);
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, real::<S>((i + 1) as f64) / n))
            .collect()
    }

    /// Quantile by linear interpolation between the midpoint plotting
    /// positions `(i + 1/2)/n`.
    pub fn quantile(&self, p: S) -> S {
        let n = self.sorted.len();
        let pos = p * real::<S>(n as f64) - real(0.5);
        if pos <= S::zero() {
            return self.sorted[0];
        }
        if pos >= real(n as f64 - 1.0) {
            return self.sorted[n - 1];
        }
        let idx = pos.floor().to_usize().unwrap();
        let t = pos - real(idx as f64);
        self.sorted[idx] + t * (self.sorted[idx + 1] - self.sorted[idx])
    }

    pub fn median(&self) -> S {
        self.quantile(real(0.5))
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}
