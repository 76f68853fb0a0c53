//! Multiuser downlink precoders: zero forcing on SVD-reduced effective
//! channels, block diagonalization on full channels, and
//! signal-to-leakage-plus-noise-ratio beamforming via a generalized
//! eigenproblem.
//!
//! Every constructor returns per-UE blocks scaled to equal power (trace
//! `1/L` each) so the assembled matrix has unit trace, matching the equal
//! per-UE power split of the transmit model. Decompositions apply a
//! deterministic sign convention (the largest-magnitude entry of each
//! column is made real and positive) so outputs are reproducible.

use nalgebra::linalg::{Cholesky, SymmetricEigen, QR};
use nalgebra::ComplexField;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::{real, CMatrix, CVector, Cplx, Real};

/// Precoder family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderMethod {
    Zf,
    Bd,
    Slnr,
}

impl PrecoderMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrecoderMethod::Zf => "zf",
            PrecoderMethod::Bd => "bd",
            PrecoderMethod::Slnr => "slnr",
        }
    }

    /// Whether the construction depends on the noise level; only SLNR has
    /// to be recomputed when the operating SNR changes.
    pub fn noise_dependent(&self) -> bool {
        matches!(self, PrecoderMethod::Slnr)
    }
}

/// Global beamforming matrix with its per-UE blocks.
#[derive(Debug, Clone)]
pub struct PrecoderSet<S: Real> {
    pub method: PrecoderMethod,
    pub x: CMatrix<S>,
    pub blocks: Vec<CMatrix<S>>,
    pub stream_counts: Vec<usize>,
}

impl<S: Real> PrecoderSet<S> {
    /// Absolute deviation of `trace(X^H X)` from one.
    pub fn trace_error(&self) -> S {
        (self.x.norm_squared() - S::one()).abs()
    }
}

/// SVD-reduced effective channel of one UE.
#[derive(Debug, Clone)]
pub struct EffectiveChannel<S: Real> {
    /// `m x M` effective rows: dominant left singular vectors applied to H.
    pub rows: CMatrix<S>,
    /// `N x m` reduction basis (the dominant left singular vectors).
    pub basis: CMatrix<S>,
    pub ue_id: usize,
}

/// Reduces a channel to its `m` dominant spatial streams.
pub fn effective_channel<S: Real>(
    h: &ChannelMatrix<S>,
    m: usize,
) -> Result<EffectiveChannel<S>> {
    let svd = h.entries.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > real::<S>(1e-12) * max_sv)
        .count();
    if rank < m {
        return Err(Error::RankDeficient {
            ue: h.ue_id,
            rank,
            requested: m,
        });
    }
    let mut basis = u.columns(0, m).into_owned();
    fix_column_phases(&mut basis);
    let rows = basis.adjoint() * &h.entries;
    Ok(EffectiveChannel {
        rows,
        basis,
        ue_id: h.ue_id,
    })
}

/// Zero forcing: pseudoinverse of the stacked effective channels. Nulls the
/// effective streams of every other UE exactly.
pub fn zero_forcing<S: Real>(channels: &[EffectiveChannel<S>]) -> Result<PrecoderSet<S>> {
    let stream_counts: Vec<usize> = channels.iter().map(|c| c.rows.nrows()).collect();
    let m_total: usize = stream_counts.iter().sum();
    let m_tx = channels
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no channels given".into()))?
        .rows
        .ncols();
    if m_total > m_tx {
        return Err(Error::DimensionMismatch(format!(
            "{m_total} total streams exceed {m_tx} transmit antennas"
        )));
    }
    let stacked = vstack(channels.iter().map(|c| &c.rows))?;

    let svals = stacked.clone().svd(false, false).singular_values;
    let (largest, smallest) = (svals.max(), svals.min());
    if smallest <= real::<S>(1e-12) * largest {
        return Err(Error::IllConditioned {
            smallest: smallest.to_f64().unwrap_or(0.0),
            largest: largest.to_f64().unwrap_or(0.0),
        });
    }

    let gram = &stacked * stacked.adjoint();
    let chol = Cholesky::new(gram).ok_or(Error::IllConditioned {
        smallest: smallest.to_f64().unwrap_or(0.0),
        largest: largest.to_f64().unwrap_or(0.0),
    })?;
    // X_raw = H^H (H H^H)^-1, taken as the adjoint of (H H^H)^-1 H.
    let x_raw = chol.solve(&stacked).adjoint();

    let mut blocks = Vec::with_capacity(channels.len());
    let mut offset = 0;
    for &m in &stream_counts {
        blocks.push(x_raw.columns(offset, m).into_owned());
        offset += m;
    }
    assemble(PrecoderMethod::Zf, blocks, stream_counts)
}

/// Block diagonalization: each UE's block lives in the null space of all
/// other UEs' full channels, pointed along the dominant right singular
/// vectors of the projected own channel.
pub fn block_diagonalization<S: Real>(
    channels: &[ChannelMatrix<S>],
    stream_counts: &[usize],
) -> Result<PrecoderSet<S>> {
    if channels.is_empty() || channels.len() != stream_counts.len() {
        return Err(Error::DimensionMismatch(
            "need one stream count per channel".into(),
        ));
    }
    let m_tx = channels[0].entries.ncols();
    let mut blocks = Vec::with_capacity(channels.len());
    for (ell, own) in channels.iter().enumerate() {
        let interference: usize = channels
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != ell)
            .map(|(_, c)| c.entries.nrows())
            .sum();
        if m_tx < interference + stream_counts[ell] {
            return Err(Error::BdInfeasible {
                ue: own.ue_id,
                m: m_tx,
                interference,
                streams: stream_counts[ell],
            });
        }
        let block = if interference == 0 {
            dominant_right_vectors(&own.entries, stream_counts[ell], own.ue_id)?
        } else {
            let stacked = vstack(
                channels
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != ell)
                    .map(|(_, c)| &c.entries),
            )?;
            let null_basis = null_space_basis(&stacked);
            if null_basis.ncols() < stream_counts[ell] {
                return Err(Error::BdInfeasible {
                    ue: own.ue_id,
                    m: m_tx,
                    interference,
                    streams: stream_counts[ell],
                });
            }
            let projected = &own.entries * &null_basis;
            let directions = dominant_right_vectors(&projected, stream_counts[ell], own.ue_id)?;
            null_basis * directions
        };
        blocks.push(block);
    }
    assemble(PrecoderMethod::Bd, blocks, stream_counts.to_vec())
}

/// SLNR beamforming: per UE the dominant generalized eigenvectors of
/// `(H^H H, sum_k H_k^H H_k + delta I)` with noise loading
/// `delta = L * sigma^2 * N_l`. Columns are unit-normalized generalized
/// eigenvectors (kept individually so each still satisfies its eigenpair
/// relation), then the blocks get the equal power split.
pub fn slnr<S: Real>(
    channels: &[ChannelMatrix<S>],
    stream_counts: &[usize],
    sigma2: S,
) -> Result<PrecoderSet<S>> {
    if sigma2 <= S::zero() {
        return Err(Error::InvalidConfig("slnr needs a positive noise power".into()));
    }
    if channels.is_empty() || channels.len() != stream_counts.len() {
        return Err(Error::DimensionMismatch(
            "need one stream count per channel".into(),
        ));
    }
    let l_count = channels.len();
    let mut blocks = Vec::with_capacity(l_count);
    for (ell, own) in channels.iter().enumerate() {
        let n_rx = own.entries.nrows();
        let delta = real::<S>(l_count as f64) * sigma2 * real::<S>(n_rx as f64);
        let others: Vec<&CMatrix<S>> = channels
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != ell)
            .map(|(_, c)| &c.entries)
            .collect();

        // x = B^-1 H^H z for the reduced eigenproblem G z = lambda z with
        // G = H B^-1 H^H; B^-1 is applied through the Woodbury identity so
        // only small Gram matrices are ever factorized.
        let inv_delta = Cplx::new(S::one() / delta, S::zero());
        let h_adj = own.entries.adjoint();
        let w = if others.is_empty() {
            h_adj * inv_delta
        } else {
            let stacked = vstack(others.into_iter())?;
            let t = &stacked * &h_adj;
            let mut gram = &stacked * stacked.adjoint();
            for i in 0..gram.nrows() {
                gram[(i, i)] += Cplx::new(delta, S::zero());
            }
            let chol = Cholesky::new(gram).ok_or_else(|| {
                Error::EigFailure("noise-loaded interference Gram is not positive definite".into())
            })?;
            let correction = stacked.adjoint() * chol.solve(&t);
            (h_adj - correction) * inv_delta
        };
        let mut reduced = &own.entries * &w;
        hermitize(&mut reduced);
        let eig = SymmetricEigen::try_new(reduced, S::default_epsilon(), 10_000)
            .ok_or_else(|| Error::EigFailure("symmetric eigensolver did not converge".into()))?;

        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("finite eigenvalues")
        });
        let m = stream_counts[ell];
        if m > order.len() {
            return Err(Error::RankDeficient {
                ue: own.ue_id,
                rank: order.len(),
                requested: m,
            });
        }
        let mut block = CMatrix::<S>::zeros(own.entries.ncols(), m);
        for (j, &idx) in order.iter().take(m).enumerate() {
            let z: CVector<S> = eig.eigenvectors.column(idx).into_owned();
            let x = &w * z;
            let norm = x.norm();
            if norm <= S::zero() {
                return Err(Error::EigFailure("zero generalized eigenvector".into()));
            }
            block.set_column(j, &(x * Cplx::new(S::one() / norm, S::zero())));
        }
        fix_column_phases(&mut block);
        blocks.push(block);
    }
    assemble(PrecoderMethod::Slnr, blocks, stream_counts.to_vec())
}

/// Scales a matrix to unit trace of `X^H X`.
pub fn normalize<S: Real>(x: CMatrix<S>) -> Result<CMatrix<S>> {
    let norm = x.norm();
    if norm <= S::zero() {
        return Err(Error::ZeroMatrix);
    }
    Ok(x * Cplx::new(S::one() / norm, S::zero()))
}

/// Orthonormal basis of the right null space of `a`, via the full Q factor
/// of the QR decomposition of `a^H`.
pub fn null_space_basis<S: Real>(a: &CMatrix<S>) -> CMatrix<S> {
    let m = a.ncols();
    let qr = QR::new(a.adjoint());
    let r = qr.r();
    let mut rank = 0;
    let mut largest = S::zero();
    for i in 0..r.nrows().min(r.ncols()) {
        largest = largest.max(r[(i, i)].modulus());
    }
    let tol = largest * real::<S>(1e-12);
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)].modulus() > tol {
            rank += 1;
        }
    }
    let mut q_adj = CMatrix::<S>::identity(m, m);
    qr.q_tr_mul(&mut q_adj);
    q_adj.rows(rank, m - rank).adjoint()
}

fn dominant_right_vectors<S: Real>(
    a: &CMatrix<S>,
    m: usize,
    ue_id: usize,
) -> Result<CMatrix<S>> {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > real::<S>(1e-12) * max_sv)
        .count();
    if rank < m {
        return Err(Error::RankDeficient {
            ue: ue_id,
            rank,
            requested: m,
        });
    }
    let mut v = v_t.rows(0, m).adjoint();
    fix_column_phases(&mut v);
    Ok(v)
}

/// Equal per-UE power split: each block is scaled to trace `1/L`, which
/// makes the assembled matrix unit trace.
fn assemble<S: Real>(
    method: PrecoderMethod,
    mut blocks: Vec<CMatrix<S>>,
    stream_counts: Vec<usize>,
) -> Result<PrecoderSet<S>> {
    let l_count = blocks.len();
    let share = S::one() / real::<S>(l_count as f64);
    for block in blocks.iter_mut() {
        let power = block.norm_squared();
        if power <= S::zero() {
            return Err(Error::ZeroMatrix);
        }
        *block *= Cplx::new((share / power).sqrt(), S::zero());
    }
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let rows = blocks[0].nrows();
    let mut x = CMatrix::<S>::zeros(rows, total);
    let mut offset = 0;
    for block in &blocks {
        x.view_mut((0, offset), (rows, block.ncols())).copy_from(block);
        offset += block.ncols();
    }
    Ok(PrecoderSet {
        method,
        x,
        blocks,
        stream_counts,
    })
}

fn vstack<'a, S: Real>(
    parts: impl Iterator<Item = &'a CMatrix<S>>,
) -> Result<CMatrix<S>> {
    let parts: Vec<&CMatrix<S>> = parts.collect();
    let cols = parts
        .first()
        .ok_or_else(|| Error::DimensionMismatch("nothing to stack".into()))?
        .ncols();
    if parts.iter().any(|p| p.ncols() != cols) {
        return Err(Error::DimensionMismatch(
            "stacked channels disagree on the antenna count".into(),
        ));
    }
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = CMatrix::<S>::zeros(rows, cols);
    let mut offset = 0;
    for p in parts {
        out.view_mut((offset, 0), (p.nrows(), cols)).copy_from(p);
        offset += p.nrows();
    }
    Ok(out)
}

fn hermitize<S: Real>(a: &mut CMatrix<S>) {
    let adj = a.adjoint();
    *a += adj;
    *a *= Cplx::new(real::<S>(0.5), S::zero());
}

/// Deterministic sign convention: rotate each column so its
/// largest-magnitude entry is real and positive.
pub fn fix_column_phases<S: Real>(a: &mut CMatrix<S>) {
    for mut col in a.column_iter_mut() {
        let mut best = 0;
        let mut best_norm = S::zero();
        for (i, v) in col.iter().enumerate() {
            let n = v.modulus();
            if n > best_norm {
                best_norm = n;
                best = i;
            }
        }
        if best_norm > S::zero() {
            let phase = col[best] / Cplx::new(best_norm, S::zero());
            let rot = phase.conj();
            for v in col.iter_mut() {
                *v *= rot;
            }
        }
    }
}
