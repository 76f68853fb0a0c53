//! Assembles the narrowband complex channel matrix from the cluster state,
//! the large-scale state and the two array geometries.
//!
//! One frequency-flat matrix is produced per trajectory step; motion enters
//! only through the per-ray phase accumulators carried by the cluster
//! state. Cluster contributions are summed in a canonical order so the
//! result is invariant under permutations of the cluster list.

use crate::arrays::{ArrayGeometry, Direction};
use crate::error::{Error, Result};
use crate::largescale::LargeScaleState;
use crate::smallscale::ClusterState;
use crate::{real, CMatrix, CVector, Cplx, Real, Vec3};

/// Narrowband channel of one UE at one trajectory step (UE antennas by BS
/// antennas).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix<S: Real> {
    pub entries: CMatrix<S>,
    pub ue_id: usize,
    pub step_index: usize,
    frobenius: S,
}

impl<S: Real> ChannelMatrix<S> {
    pub fn new(entries: CMatrix<S>, ue_id: usize, step_index: usize) -> Self {
        let frobenius = entries.norm();
        Self {
            entries,
            ue_id,
            step_index,
            frobenius,
        }
    }

    pub fn frobenius_norm(&self) -> S {
        self.frobenius
    }
}

/// Inputs fixed over one synthesis call.
pub struct SynthesisGeometry<'a, S: Real> {
    pub bs: &'a ArrayGeometry<S>,
    pub ue: &'a ArrayGeometry<S>,
    pub bs_position_m: &'a Vec3<S>,
    pub ue_position_m: &'a Vec3<S>,
    pub wavelength_m: S,
    /// When set, the path loss and shadow fading amplitude is omitted and
    /// the channel keeps only its small-scale directional structure.
    pub normalize_rx_power: bool,
}

/// Builds the channel matrix for one link.
pub fn synthesize<S: Real>(
    cluster: &ClusterState<S>,
    lsp: &LargeScaleState<S>,
    geo: &SynthesisGeometry<'_, S>,
    ue_id: usize,
    step_index: usize,
) -> Result<ChannelMatrix<S>> {
    let n_rx = geo.ue.element_count();
    let n_tx = geo.bs.element_count();
    let n_clusters = cluster.n_clusters();
    let n_rays = cluster.n_rays();
    if cluster.powers.len() != n_clusters || cluster.phases.len() != n_clusters {
        return Err(Error::DimensionMismatch(
            "cluster state arrays disagree on the cluster count".into(),
        ));
    }

    let amp_scale = if geo.normalize_rx_power {
        S::one()
    } else {
        real::<S>(10.0).powf(-(lsp.path_loss_db + lsp.shadow_fading_db) / real(20.0))
    };

    let mut h = CMatrix::<S>::zeros(n_rx, n_tx);

    // Canonical summation order keeps the float accumulation identical
    // under any permutation of the cluster list.
    let mut order: Vec<usize> = (0..n_clusters).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| {
            (
                cluster.delays_s[i],
                cluster.powers[i],
                cluster.aod_deg[i],
                cluster.aoa_deg[i],
                cluster.phases[i][0][0],
            )
        };
        key(a).partial_cmp(&key(b)).expect("finite cluster keys")
    });

    let ray_weight = real::<S>(1.0 / n_rays as f64);
    for &n in &order {
        let cluster_amp = (cluster.powers[n] * ray_weight).sqrt() * amp_scale;
        for m in 0..n_rays {
            let rx_dir = Direction::new(cluster.ray_aoa_deg(n, m), cluster.ray_zoa_deg(n, m));
            let tx_dir = Direction::new(cluster.ray_aod_deg(n, m), cluster.ray_zod_deg(n, m));
            let (u_theta, u_phi) = polarized_steering(geo.ue, rx_dir, geo.wavelength_m);
            let (v_theta, v_phi) = polarized_steering(geo.bs, tx_dir, geo.wavelength_m);

            let phases = &cluster.phases[n][m];
            let cross = (S::one() / cluster.xpr_linear[n][m]).sqrt();
            let coupling = [
                [unit_phasor(phases[0]), unit_phasor(phases[1]).scale(cross)],
                [unit_phasor(phases[2]).scale(cross), unit_phasor(phases[3])],
            ];
            let motion = unit_phasor(cluster.phase_accum[n][m]).scale(cluster_amp);

            // c_q = sum_p u_p * coupling[p][q], then H += motion * c_q v_q^T.
            let c_theta = &u_theta * coupling[0][0] + &u_phi * coupling[1][0];
            let c_phi = &u_theta * coupling[0][1] + &u_phi * coupling[1][1];
            rank_one_update(&mut h, motion, &c_theta, &v_theta);
            rank_one_update(&mut h, motion, &c_phi, &v_phi);
        }
    }

    if cluster.los {
        let spec = cluster.specular_fraction().sqrt() * amp_scale;
        let down = geo.ue_position_m - geo.bs_position_m;
        let d_3d = down.norm();
        let tx_dir = Direction::from_vector(&down);
        let rx_dir = Direction::from_vector(&(-down));
        let (u_theta, u_phi) = polarized_steering(geo.ue, rx_dir, geo.wavelength_m);
        let (v_theta, v_phi) = polarized_steering(geo.bs, tx_dir, geo.wavelength_m);
        // Reduce the electrical length modulo one wavelength before taking
        // the phasor; d/lambda is in the thousands here.
        let turns = d_3d / geo.wavelength_m;
        let frac = turns - turns.floor();
        let phasor = unit_phasor(-S::two_pi() * frac).scale(spec);
        // Fixed geometric polarization for the specular component.
        rank_one_update(&mut h, phasor, &u_theta, &v_theta);
        rank_one_update(&mut h, -phasor, &u_phi, &v_phi);
    }

    Ok(ChannelMatrix::new(h, ue_id, step_index))
}

#[inline]
fn unit_phasor<S: Real>(phase: S) -> Cplx<S> {
    Cplx::new(phase.cos(), phase.sin())
}

/// Steering vector split into its two polarization field components. The
/// pattern gain and slant split are shared by every element of one
/// polarization, so the per-element work is one dot product and phasor.
fn polarized_steering<S: Real>(
    array: &ArrayGeometry<S>,
    dir: Direction<S>,
    wavelength_m: S,
) -> (CVector<S>, CVector<S>) {
    let k_hat = dir.unit_vector();
    let wave_number = S::two_pi() / wavelength_m;
    let count = array.element_count();
    let per_pol = count / array.polarizations;
    let fields: Vec<[S; 2]> = array
        .polarization_gains(dir)
        .into_iter()
        .enumerate()
        .map(|(p, gain)| {
            let amp = gain.sqrt();
            let slant = array.pattern_of(p * per_pol).slant_deg * S::pi() / crate::real(180.0);
            [amp * slant.cos(), amp * slant.sin()]
        })
        .collect();
    let mut theta = CVector::zeros(count);
    let mut phi = CVector::zeros(count);
    for e in 0..count {
        let field = &fields[e / per_pol];
        let phase = wave_number * array.position_m(e).dot(&k_hat);
        let phasor = unit_phasor(phase);
        theta[e] = phasor.scale(field[0]);
        phi[e] = phasor.scale(field[1]);
    }
    (theta, phi)
}

fn rank_one_update<S: Real>(
    h: &mut CMatrix<S>,
    alpha: Cplx<S>,
    left: &CVector<S>,
    right: &CVector<S>,
) {
    let n_rx = left.len();
    let h_slice = h.as_mut_slice();
    for (col, &r) in right.iter().enumerate() {
        let scale = alpha * r;
        let base = col * n_rx;
        for (dst, &l) in h_slice[base..base + n_rx].iter_mut().zip(left.iter()) {
            *dst += scale * l;
        }
    }
}
