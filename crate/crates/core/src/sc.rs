//! Spatial-consistency evolution of cluster parameters along a trajectory.
//!
//! The iterative procedure updates delays, angles and powers from the
//! previous step's state and the UE motion, and accumulates per-ray phase
//! from the displacement, so parameters evolve continuously along the
//! track. The drop-based baseline (`ScMode::None`) instead redraws a fresh
//! state at every position from its own substream.
//!
//! The angular update uses the lever arm `D_n = c*tau_n + d_3D` (total path
//! length proxy) for both link ends; the drift form is isolated here in
//! [`evolve_angles`] so a different update rule can be swapped in at one
//! place.

use crate::arrays::Direction;
use crate::error::{Error, Result};
use crate::largescale::{LargeScaleState, LspProfile};
use crate::rng::SeedStream;
use crate::smallscale::{self, ClusterState, DropCenters};
use crate::{deg_to_rad, rad_to_deg, real, speed_of_light, wrap_deg, Real, Vec3};

/// Whether channel parameters evolve along the track or are redrawn per
/// position. `Sc2` exists only to surface a clear unimplemented error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScMode {
    #[serde(rename = "sc1")]
    Sc1,
    None,
    #[serde(rename = "sc2")]
    Sc2,
}

impl ScMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScMode::Sc1 => "sc1",
            ScMode::None => "none",
            ScMode::Sc2 => "sc2",
        }
    }
}

/// Geometry of one evolution step.
#[derive(Debug, Clone, Copy)]
pub struct StepGeometry<S> {
    /// UE displacement over the step divided by the elapsed time, m/s.
    pub velocity_mps: Vec3<S>,
    /// Elapsed time over the step, seconds.
    pub dt_s: S,
    /// Current BS-UE 3-D distance, meters.
    pub d_3d_m: S,
    /// Current geometric departure/arrival centers (used by fresh drops).
    pub centers: DropCenters<S>,
}

/// Static drop shape parameters threaded through evolution.
#[derive(Debug, Clone, Copy)]
pub struct StepParams<S> {
    pub n_clusters: usize,
    pub m_rays: usize,
    pub wavelength_m: S,
}

fn arrival_unit_vector<S: Real>(aoa_deg: S, zoa_deg: S) -> Vec3<S> {
    Direction::new(aoa_deg, zoa_deg).unit_vector()
}

/// Drifts cluster excess delays with the radial component of the UE motion:
/// `tau -= (r_rx . v) * dt / c` per cluster, then re-zeroes the minimum
/// while folding the shift into the absolute delay offset.
pub fn evolve_delays<S: Real>(
    prev: &ClusterState<S>,
    velocity_mps: &Vec3<S>,
    dt_s: S,
) -> Result<(Vec<S>, S)> {
    let displacement = velocity_mps.norm() * dt_s;
    if displacement > S::one() {
        return Err(Error::StepTooLarge {
            displacement_m: displacement.to_f64().unwrap_or(f64::NAN),
        });
    }
    let c = speed_of_light::<S>();
    let mut drifted: Vec<S> = prev
        .delays_s
        .iter()
        .enumerate()
        .map(|(n, &tau)| {
            let r_hat = arrival_unit_vector(prev.aoa_deg[n], prev.zoa_deg[n]);
            tau - r_hat.dot(velocity_mps) * dt_s / c
        })
        .collect();
    let min = drifted
        .iter()
        .copied()
        .fold(S::max_value().unwrap(), |a, t| if t < a { t } else { a });
    for tau in drifted.iter_mut() {
        *tau -= min;
    }
    let offset = (prev.delay_offset_s + min).max(S::zero());
    Ok((drifted, offset))
}

/// Drifts the four angle sets at the small-angle geometric rate
/// `|v_h| dt / D_n`. Arrival azimuths follow the bearing drift of a fixed
/// scatterer seen from the moving UE (angles sweep away from the heading
/// and fall behind), while departure azimuths rotate with the BS-side
/// bearing of the moving geometry. Zeniths respond to the vertical
/// velocity component only. Returns the updated angles and whether any
/// lever arm had to be clamped to 1 m.
#[allow(clippy::type_complexity)]
pub fn evolve_angles<S: Real>(
    prev: &ClusterState<S>,
    velocity_mps: &Vec3<S>,
    dt_s: S,
    d_3d_m: S,
) -> (Vec<S>, Vec<S>, Vec<S>, Vec<S>, bool) {
    let c = speed_of_light::<S>();
    let v_h = (velocity_mps.x * velocity_mps.x + velocity_mps.y * velocity_mps.y).sqrt();
    let heading_deg = rad_to_deg(velocity_mps.y.atan2(velocity_mps.x));
    let v_z = velocity_mps.z;
    let mut clamped = false;

    let n = prev.n_clusters();
    let mut aod = Vec::with_capacity(n);
    let mut aoa = Vec::with_capacity(n);
    let mut zod = Vec::with_capacity(n);
    let mut zoa = Vec::with_capacity(n);
    for i in 0..n {
        let mut lever = c * prev.delays_s[i] + d_3d_m;
        if lever < S::one() {
            lever = S::one();
            clamped = true;
        }
        let rate = dt_s / lever * rad_to_deg(S::one());
        let az_drift =
            |angle: S| v_h * rate * deg_to_rad(wrap_deg(heading_deg - angle)).sin();
        let zen_drift = |angle: S| v_z * rate * deg_to_rad(angle).sin();

        aoa.push(wrap_deg(prev.aoa_deg[i] - az_drift(prev.aoa_deg[i])));
        aod.push(wrap_deg(prev.aod_deg[i] + az_drift(prev.aod_deg[i])));
        zoa.push((prev.zoa_deg[i] + zen_drift(prev.zoa_deg[i])).clamp(S::zero(), real(180.0)));
        zod.push((prev.zod_deg[i] - zen_drift(prev.zod_deg[i])).clamp(S::zero(), real(180.0)));
    }
    (aod, aoa, zod, zoa, clamped)
}

/// Recomputes cluster powers from the exponential delay profile with the
/// current delay spread, reusing the shadowing terms frozen at segment
/// start, and renormalizes against the current specular split.
pub fn evolve_powers<S: Real>(
    delays_s: &[S],
    delay_spread_s: S,
    delay_scaling: S,
    frozen_shadow_db: &[S],
    los: bool,
    k_db: S,
) -> Vec<S> {
    let profile = smallscale::power_profile(delays_s, delay_spread_s, delay_scaling, frozen_shadow_db);
    smallscale::finish_powers(profile, los, k_db)
}

/// Advances the per-ray motion phase: `phi += 2pi/lambda * (r_ray . v) * dt`,
/// wrapped to (-pi, pi].
pub fn evolve_phases<S: Real>(
    prev: &ClusterState<S>,
    velocity_mps: &Vec3<S>,
    dt_s: S,
    wavelength_m: S,
) -> Vec<Vec<S>> {
    let wave_number = S::two_pi() / wavelength_m;
    let mut out = Vec::with_capacity(prev.n_clusters());
    for n in 0..prev.n_clusters() {
        let mut row = Vec::with_capacity(prev.n_rays());
        for m in 0..prev.n_rays() {
            let r_hat = arrival_unit_vector(prev.ray_aoa_deg(n, m), prev.ray_zoa_deg(n, m));
            let inc = wave_number * r_hat.dot(velocity_mps) * dt_s;
            row.push(wrap_phase(prev.phase_accum[n][m] + inc));
        }
        out.push(row);
    }
    out
}

fn wrap_phase<S: Real>(mut phase: S) -> S {
    let pi = S::pi();
    let two_pi = S::two_pi();
    while phase > pi {
        phase -= two_pi;
    }
    while phase <= -pi {
        phase += two_pi;
    }
    phase
}

/// One trajectory step: either the composed evolution of delays, angles,
/// powers and phases (`Sc1`), or a full fresh drop (`None`).
pub fn step<S: Real>(
    prev: &ClusterState<S>,
    geometry: &StepGeometry<S>,
    lsp: &LargeScaleState<S>,
    profile: &LspProfile<S>,
    mode: ScMode,
    params: &StepParams<S>,
    drop_stream: &SeedStream,
) -> Result<ClusterState<S>> {
    let set = profile.set_for(lsp.los);
    match mode {
        ScMode::Sc2 => Err(Error::ScTwoUnimplemented),
        ScMode::None => smallscale::make_drop(
            lsp,
            set,
            params.n_clusters,
            params.m_rays,
            geometry.centers,
            geometry.d_3d_m,
            drop_stream,
        ),
        ScMode::Sc1 => {
            let phase_accum =
                evolve_phases(prev, &geometry.velocity_mps, geometry.dt_s, params.wavelength_m);
            let (delays, offset) = evolve_delays(prev, &geometry.velocity_mps, geometry.dt_s)?;
            let (aod, aoa, zod, zoa, _clamped) =
                evolve_angles(prev, &geometry.velocity_mps, geometry.dt_s, geometry.d_3d_m);
            let powers = evolve_powers(
                &delays,
                lsp.delay_spread_s,
                set.delay_scaling,
                &prev.z_shadow_db,
                lsp.los,
                lsp.k_db,
            );
            Ok(ClusterState {
                delays_s: delays,
                delay_offset_s: offset,
                powers,
                aod_deg: aod,
                aoa_deg: aoa,
                zod_deg: zod,
                zoa_deg: zoa,
                ray_offsets: prev.ray_offsets.clone(),
                c_asd_deg: prev.c_asd_deg,
                c_asa_deg: prev.c_asa_deg,
                c_zsd_deg: prev.c_zsd_deg,
                c_zsa_deg: prev.c_zsa_deg,
                xpr_linear: prev.xpr_linear.clone(),
                phases: prev.phases.clone(),
                phase_accum,
                z_shadow_db: prev.z_shadow_db.clone(),
                los: lsp.los,
                k_db: lsp.k_db,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::largescale::LspProfile;
    use approx::assert_relative_eq;

    fn lsp(los: bool) -> LargeScaleState<f64> {
        LargeScaleState {
            los,
            path_loss_db: 90.0,
            shadow_fading_db: 0.5,
            delay_spread_s: 32e-9,
            asd_deg: 14.0,
            asa_deg: 41.0,
            zsd_deg: 3.0,
            zsa_deg: 4.0,
            k_db: 9.0,
        }
    }

    fn centers() -> DropCenters<f64> {
        DropCenters {
            aod_deg: 33.0,
            aoa_deg: -147.0,
            zod_deg: 102.0,
            zoa_deg: 78.0,
        }
    }

    fn example_state(los: bool) -> ClusterState<f64> {
        let profile = LspProfile::<f64>::umi_28ghz();
        smallscale::make_drop(
            &lsp(los),
            profile.set_for(los),
            6,
            20,
            centers(),
            22.0,
            &SeedStream::root(1).derive("state"),
        )
        .unwrap()
    }

    fn geometry(v: Vec3<f64>, d_3d: f64) -> StepGeometry<f64> {
        StepGeometry {
            velocity_mps: v,
            dt_s: 0.1 / 0.83,
            d_3d_m: d_3d,
            centers: centers(),
        }
    }

    fn params() -> StepParams<f64> {
        StepParams {
            n_clusters: 6,
            m_rays: 20,
            wavelength_m: crate::constants::SPEED_OF_LIGHT / 28e9,
        }
    }

    #[test]
    fn zero_velocity_is_an_exact_fixpoint() {
        let profile = LspProfile::<f64>::umi_28ghz();
        let state = example_state(true);
        let geo = geometry(Vec3::zeros(), 22.0);
        let mut current = state.clone();
        for _ in 0..1000 {
            current = step(
                &current,
                &geo,
                &lsp(true),
                &profile,
                ScMode::Sc1,
                &params(),
                &SeedStream::root(2),
            )
            .unwrap();
        }
        assert_eq!(current, state);
    }

    #[test]
    fn radial_motion_shortens_the_path_at_v_dt_over_c() {
        let mut state = example_state(false);
        state.delays_s = vec![0.0];
        state.aoa_deg = vec![0.0];
        state.zoa_deg = vec![90.0];
        state.aod_deg = vec![0.0];
        state.zod_deg = vec![102.0];
        state.powers = vec![1.0];
        state.z_shadow_db = vec![0.0];
        state.xpr_linear.truncate(1);
        state.phases.truncate(1);
        state.phase_accum.truncate(1);

        let dt = 0.1 / 0.83;
        let v = Vec3::new(0.83, 0.0, 0.0); // straight toward the arrival direction
        let (delays, offset) = evolve_delays(&state, &v, dt).unwrap();
        assert_eq!(delays, vec![0.0]);
        let expected_drop = 0.1 / crate::constants::SPEED_OF_LIGHT;
        assert_relative_eq!(
            state.delay_offset_s - offset,
            expected_drop,
            max_relative = 1e-9
        );
        assert_relative_eq!(expected_drop, 0.3336e-9, max_relative = 1e-3);
    }

    #[test]
    fn transverse_motion_leaves_delays_unchanged() {
        let mut state = example_state(false);
        state.aoa_deg = vec![90.0; 6];
        state.zoa_deg = vec![90.0; 6];
        let v = Vec3::new(0.83, 0.0, 0.0);
        let (delays, offset) = evolve_delays(&state, &v, 0.12048).unwrap();
        for (new, old) in delays.iter().zip(&state.delays_s) {
            assert_relative_eq!(new, old, epsilon = 1e-18);
        }
        assert_relative_eq!(offset, state.delay_offset_s, epsilon = 1e-18);
    }

    #[test]
    fn oversized_steps_are_rejected() {
        let state = example_state(false);
        let v = Vec3::new(12.0, 0.0, 0.0);
        assert!(matches!(
            evolve_delays(&state, &v, 0.1),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn tangential_motion_drifts_azimuth_by_the_small_angle() {
        let mut state = example_state(false);
        state.delays_s = vec![0.0];
        state.aoa_deg = vec![0.0];
        state.zoa_deg = vec![90.0];
        state.aod_deg = vec![0.0];
        state.zod_deg = vec![90.0];
        state.powers = vec![1.0];
        state.z_shadow_db = vec![0.0];
        state.xpr_linear.truncate(1);
        state.phases.truncate(1);
        state.phase_accum.truncate(1);

        let dt = 0.12048192771084337;
        let v = Vec3::new(0.0, 0.83, 0.0); // perpendicular to the 0-degree arrival
        let (aod, aoa, _, _, clamped) = evolve_angles(&state, &v, dt, 20.0);
        assert!(!clamped);
        let expected = 0.1 / 20.0 * 180.0 / std::f64::consts::PI;
        assert_relative_eq!(aoa[0].abs(), expected, max_relative = 1e-3);
        // The arrival bearing sweeps away from the heading as the cluster
        // falls behind; the departure bearing rotates the other way.
        assert!(aoa[0] < 0.0);
        assert_relative_eq!(aod[0], expected, max_relative = 1e-3);
    }

    #[test]
    fn motion_along_the_cluster_leaves_azimuth_unchanged() {
        let mut state = example_state(false);
        state.aoa_deg = vec![0.0; 6];
        let v = Vec3::new(0.83, 0.0, 0.0);
        let (_, aoa, _, _, _) = evolve_angles(&state, &v, 0.12048, 20.0);
        for &a in &aoa {
            assert_relative_eq!(a, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_tracks_leave_zenith_angles_alone() {
        let state = example_state(true);
        let v = Vec3::new(0.5, 0.66, 0.0);
        let (_, _, zod, zoa, _) = evolve_angles(&state, &v, 0.12048, 25.0);
        assert_eq!(zod, state.zod_deg);
        assert_eq!(zoa, state.zoa_deg);
    }

    #[test]
    fn unchanged_inputs_reproduce_the_same_powers() {
        let state = example_state(false);
        let a = evolve_powers(&state.delays_s, 32e-9, 2.1, &state.z_shadow_db, false, 9.0);
        let b = evolve_powers(&state.delays_s, 32e-9, 2.1, &state.z_shadow_db, false, 9.0);
        assert_eq!(a, b);
        let sum: f64 = a.iter().sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn growing_delay_bleeds_power() {
        let state = example_state(false);
        let mut longer = state.delays_s.clone();
        longer[3] += 20e-9;
        let before = evolve_powers(&state.delays_s, 32e-9, 2.1, &state.z_shadow_db, false, 9.0);
        let after = evolve_powers(&longer, 32e-9, 2.1, &state.z_shadow_db, false, 9.0);
        assert!(after[3] < before[3]);
    }

    #[test]
    fn phase_increment_matches_displacement_in_wavelengths() {
        let mut state = example_state(false);
        state.c_asa_deg = 0.0;
        state.c_zsa_deg = 0.0;
        state.aoa_deg = vec![0.0; 6];
        state.zoa_deg = vec![90.0; 6];
        for row in state.phase_accum.iter_mut() {
            for p in row.iter_mut() {
                *p = 0.0;
            }
        }
        let lambda = crate::constants::SPEED_OF_LIGHT / 28e9;
        let dt = 0.12048192771084337;
        let v = Vec3::new(0.83, 0.0, 0.0);
        let accum = evolve_phases(&state, &v, dt, lambda);
        let raw = 2.0 * std::f64::consts::PI * 0.1 / lambda;
        assert!(raw > 58.0 && raw < 59.5, "unwrapped increment {raw}");
        let expected = {
            let mut p = raw;
            while p > std::f64::consts::PI {
                p -= 2.0 * std::f64::consts::PI;
            }
            p
        };
        for row in &accum {
            for &p in row {
                assert_relative_eq!(p, expected, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn opposite_rays_accumulate_opposite_phases() {
        let mut state = example_state(false);
        state.c_asa_deg = 0.0;
        state.c_zsa_deg = 0.0;
        state.aoa_deg = vec![0.0, 180.0];
        state.zoa_deg = vec![90.0, 90.0];
        state.delays_s = vec![0.0, 10e-9];
        state.aod_deg = vec![0.0, 0.0];
        state.zod_deg = vec![90.0, 90.0];
        state.powers = vec![0.5, 0.5];
        state.z_shadow_db = vec![0.0, 0.0];
        state.xpr_linear.truncate(2);
        state.phases.truncate(2);
        state.phase_accum.truncate(2);
        for row in state.phase_accum.iter_mut() {
            for p in row.iter_mut() {
                *p = 0.0;
            }
        }
        let lambda = 0.0107;
        let accum = evolve_phases(&state, &Vec3::new(0.1, 0.0, 0.0), 0.01, lambda);
        assert_relative_eq!(accum[0][0], -accum[1][0], epsilon = 1e-12);
        assert!(accum[0][0] != 0.0);
    }

    #[test]
    fn evolution_respects_the_drift_bounds() {
        let profile = LspProfile::<f64>::umi_28ghz();
        let mut state = example_state(true);
        let dt = 0.1 / 0.83;
        let speed = 0.83;
        let mut d_3d = 22.0;
        for k in 0..200 {
            let angle = (k as f64 * 0.13).sin() * std::f64::consts::PI;
            let v = Vec3::new(speed * angle.cos(), speed * angle.sin(), 0.0);
            let geo = StepGeometry {
                velocity_mps: v,
                dt_s: dt,
                d_3d_m: d_3d,
                centers: centers(),
            };
            let next = step(&state, &geo, &lsp(true), &profile, ScMode::Sc1, &params(), &SeedStream::root(3))
                .unwrap();
            next.validate_evolved().unwrap();
            let delay_bound = speed * dt / crate::constants::SPEED_OF_LIGHT + 1e-18;
            let d_min = state
                .delays_s
                .iter()
                .map(|&t| crate::constants::SPEED_OF_LIGHT * t + d_3d)
                .fold(f64::INFINITY, f64::min)
                .max(1.0);
            let az_bound = speed * dt / d_min * 180.0 / std::f64::consts::PI + 1e-12;
            let offset_shift = next.delay_offset_s - state.delay_offset_s;
            for i in 0..state.n_clusters() {
                let abs_change =
                    (next.delays_s[i] + offset_shift - state.delays_s[i]).abs();
                assert!(abs_change <= delay_bound, "delay drift {abs_change}");
                let az_change = wrap_deg(next.aoa_deg[i] - state.aoa_deg[i]).abs();
                assert!(az_change <= az_bound, "azimuth drift {az_change}");
            }
            state = next;
            d_3d += 0.02;
        }
    }

    #[test]
    fn fresh_drop_sequences_are_exchangeable() {
        // Two-sample KS over delays drawn at even vs odd steps.
        let profile = LspProfile::<f64>::umi_28ghz();
        let state = example_state(false);
        let geo = geometry(Vec3::new(0.83, 0.0, 0.0), 25.0);
        let root = SeedStream::root(4).derive("redraw");
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for t in 0..1000usize {
            let next = step(
                &state,
                &geo,
                &lsp(false),
                &profile,
                ScMode::None,
                &params(),
                &root.derive_index(t as u64),
            )
            .unwrap();
            let dest = if t % 2 == 0 { &mut even } else { &mut odd };
            dest.extend(next.delays_s.iter().copied());
        }
        even.sort_by(|a, b| a.partial_cmp(b).unwrap());
        odd.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (n, m) = (even.len() as f64, odd.len() as f64);
        // Two-sample KS with proper tie handling (every drop contains an
        // exact zero, so ties are guaranteed).
        let mut d = 0.0f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < even.len() && j < odd.len() {
            let x = even[i].min(odd[j]);
            while i < even.len() && even[i] <= x {
                i += 1;
            }
            while j < odd.len() && odd[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / n - j as f64 / m).abs());
        }
        let critical = 1.628 * ((n + m) / (n * m)).sqrt();
        assert!(d < critical, "KS statistic {d} vs critical {critical}");
    }

    #[test]
    fn sc_traces_vary_less_than_fresh_drops() {
        let profile = LspProfile::<f64>::umi_28ghz();
        let initial = example_state(false);
        let geo = geometry(Vec3::new(0.83, 0.0, 0.0), 25.0);
        let root = SeedStream::root(5).derive("tv");
        let mut sc_state = initial.clone();
        let mut drop_state = initial.clone();
        let mut tv_sc = 0.0f64;
        let mut tv_drop = 0.0f64;
        for t in 0..200usize {
            let next_sc = step(&sc_state, &geo, &lsp(false), &profile, ScMode::Sc1, &params(), &root)
                .unwrap();
            let next_drop = step(
                &drop_state,
                &geo,
                &lsp(false),
                &profile,
                ScMode::None,
                &params(),
                &root.derive_index(t as u64),
            )
            .unwrap();
            for i in 0..6 {
                tv_sc += (next_sc.delays_s[i] - sc_state.delays_s[i]).abs();
                tv_drop += (next_drop.delays_s[i] - drop_state.delays_s[i]).abs();
            }
            sc_state = next_sc;
            drop_state = next_drop;
        }
        assert!(
            tv_sc < tv_drop,
            "total variation sc {tv_sc} vs drop {tv_drop}"
        );
    }

    #[test]
    fn sc2_is_a_documented_stub() {
        let profile = LspProfile::<f64>::umi_28ghz();
        let state = example_state(false);
        let geo = geometry(Vec3::new(0.83, 0.0, 0.0), 25.0);
        assert!(matches!(
            step(&state, &geo, &lsp(false), &profile, ScMode::Sc2, &params(), &SeedStream::root(6)),
            Err(Error::ScTwoUnimplemented)
        ));
    }
}
