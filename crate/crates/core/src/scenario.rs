//! Simulation world and stepwise execution: BS placement, UE trajectories,
//! sampling, seeding, and the master configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrays::{ArrayGeometry, ElementPattern};
use crate::channel::{self, ChannelMatrix, SynthesisGeometry};
use crate::error::{Error, Result};
use crate::largescale::{
    self, FieldSet, LargeScaleState, LinkGeometry, LosHysteresis, LspProfile, Rect,
};
use crate::metrics::{sinr_from_terms, StepRecord};
use crate::precoding::{self, PrecoderMethod, PrecoderSet};
use crate::rng::SeedStream;
use crate::sc::{self, ScMode, StepGeometry, StepParams};
use crate::smallscale::{self, ClusterState, DropCenters};
use crate::{rad_to_deg, real, Real, Vec3};

/// How the UE panel is oriented while the UE moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationPolicy<S> {
    /// Boresight follows the track heading.
    AlongTrack,
    /// Boresight stays at a fixed azimuth.
    Fixed { bearing_deg: S },
}

/// A UE movement route: an ordered polyline walked at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: nalgebra::Scalar + serde::Serialize",
    deserialize = "S: nalgebra::Scalar + serde::de::DeserializeOwned"
))]
pub struct UeRoute<S> {
    pub label: String,
    pub waypoints_m: Vec<Vec3<S>>,
    pub speed_mps: S,
    pub orientation: OrientationPolicy<S>,
}

impl<S: Real> UeRoute<S> {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints_m.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "route '{}' needs at least two waypoints",
                self.label
            )));
        }
        for pair in self.waypoints_m.windows(2) {
            if (pair[1] - pair[0]).norm() <= S::zero() {
                return Err(Error::InvalidConfig(format!(
                    "route '{}' has coincident consecutive waypoints",
                    self.label
                )));
            }
        }
        if self.speed_mps <= S::zero() {
            return Err(Error::InvalidConfig(format!(
                "route '{}' needs a positive speed",
                self.label
            )));
        }
        Ok(())
    }

    pub fn length_m(&self) -> S {
        self.waypoints_m
            .windows(2)
            .fold(S::zero(), |acc, pair| acc + (pair[1] - pair[0]).norm())
    }

    pub fn ue_height_m(&self) -> S {
        self.waypoints_m[0].z
    }
}

/// One position along a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample<S> {
    pub position_m: Vec3<S>,
    pub cumulative_m: S,
    /// Unit heading in the horizontal plane.
    pub heading: [S; 2],
    /// Motion vector with `|v| = speed`.
    pub velocity_mps: Vec3<S>,
    pub step_index: usize,
    /// Time elapsed since the previous sample (zero for the first).
    pub dt_s: S,
}

/// Samples a route every `update_distance` meters of arc length, keeping a
/// final sample at the route end even when the last hop is short. Headings
/// follow the segment the sample lies on; a sample exactly on a corner
/// keeps the incoming heading.
pub fn sample_trajectory<S: Real>(
    route: &UeRoute<S>,
    update_distance_m: S,
) -> Result<Vec<TrajectorySample<S>>> {
    route.validate()?;
    if update_distance_m <= S::zero() {
        return Err(Error::InvalidConfig("update distance must be positive".into()));
    }
    let total = route.length_m();
    if total < update_distance_m {
        return Err(Error::DegenerateRoute {
            route: route.label.clone(),
            length_m: total.to_f64().unwrap_or(f64::NAN),
            update_m: update_distance_m.to_f64().unwrap_or(f64::NAN),
        });
    }

    let mut boundaries = Vec::with_capacity(route.waypoints_m.len());
    let mut acc = S::zero();
    boundaries.push(acc);
    for pair in route.waypoints_m.windows(2) {
        acc += (pair[1] - pair[0]).norm();
        boundaries.push(acc);
    }

    let eps = real::<S>(1e-9);
    let mut arc_positions = Vec::new();
    let mut k = 0u64;
    loop {
        let s = real::<S>(k as f64) * update_distance_m;
        if s >= total - eps {
            break;
        }
        arc_positions.push(s);
        k += 1;
    }
    arc_positions.push(total);

    let locate = |s: S| -> (usize, S) {
        // Segment owning arc length s; boundary points belong to the
        // incoming segment.
        let mut seg = 0;
        while seg + 2 < boundaries.len() && s > boundaries[seg + 1] {
            seg += 1;
        }
        (seg, s - boundaries[seg])
    };

    let mut samples = Vec::with_capacity(arc_positions.len());
    let mut prev_s = S::zero();
    for (idx, &s) in arc_positions.iter().enumerate() {
        let (seg, along) = locate(s);
        let a = &route.waypoints_m[seg];
        let b = &route.waypoints_m[seg + 1];
        let dir = (b - a) / (b - a).norm();
        let position = a + dir * along;
        let h_norm = (dir.x * dir.x + dir.y * dir.y).sqrt();
        let heading = if h_norm > eps {
            [dir.x / h_norm, dir.y / h_norm]
        } else {
            [S::one(), S::zero()]
        };
        samples.push(TrajectorySample {
            position_m: position,
            cumulative_m: s,
            heading,
            velocity_mps: dir * route.speed_mps,
            step_index: idx,
            dt_s: if idx == 0 { S::zero() } else { (s - prev_s) / route.speed_mps },
        });
        prev_s = s;
    }
    Ok(samples)
}

/// Panel description as it appears in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig<S> {
    pub rows: usize,
    pub columns: usize,
    pub row_spacing_wl: S,
    pub col_spacing_wl: S,
    pub bearing_deg: S,
    pub downtilt_deg: S,
    pub peak_gain_dbi: S,
    pub vertical_3db_deg: S,
    pub horizontal_3db_deg: S,
    pub side_lobe_floor_db: S,
    pub front_back_floor_db: S,
    /// One slant angle per polarization state.
    pub polarization_slants_deg: Vec<S>,
}

impl<S: Real> ArrayConfig<S> {
    /// Sectorized dual-polarized panel preset.
    pub fn panel(rows: usize, columns: usize, peak_gain_dbi: S, bearing_deg: S) -> Self {
        Self {
            rows,
            columns,
            row_spacing_wl: S::one(),
            col_spacing_wl: real(0.5),
            bearing_deg,
            downtilt_deg: S::zero(),
            peak_gain_dbi,
            vertical_3db_deg: real(65.0),
            horizontal_3db_deg: real(65.0),
            side_lobe_floor_db: real(30.0),
            front_back_floor_db: real(30.0),
            polarization_slants_deg: vec![real(45.0), real(-45.0)],
        }
    }

    pub fn element_count(&self) -> usize {
        self.rows * self.columns * self.polarization_slants_deg.len()
    }

    pub fn build(&self, wavelength_m: S) -> Result<ArrayGeometry<S>> {
        let patterns: Vec<ElementPattern<S>> = self
            .polarization_slants_deg
            .iter()
            .map(|&slant| ElementPattern {
                peak_gain_dbi: self.peak_gain_dbi,
                vertical_3db_deg: self.vertical_3db_deg,
                horizontal_3db_deg: self.horizontal_3db_deg,
                side_lobe_floor_db: self.side_lobe_floor_db,
                front_back_floor_db: self.front_back_floor_db,
                slant_deg: slant,
            })
            .collect();
        ArrayGeometry::new(
            self.rows,
            self.columns,
            self.row_spacing_wl,
            self.col_spacing_wl,
            wavelength_m,
            patterns,
            self.bearing_deg,
            self.downtilt_deg,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: nalgebra::Scalar + serde::Serialize",
    deserialize = "S: nalgebra::Scalar + serde::de::DeserializeOwned"
))]
pub struct BsConfig<S> {
    pub position_m: Vec3<S>,
    pub array: ArrayConfig<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: nalgebra::Scalar + serde::Serialize",
    deserialize = "S: nalgebra::Scalar + serde::de::DeserializeOwned"
))]
pub struct UeConfig<S> {
    pub route: UeRoute<S>,
    pub array: ArrayConfig<S>,
}

/// Master simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: nalgebra::Scalar + serde::Serialize",
    deserialize = "S: nalgebra::Scalar + serde::de::DeserializeOwned"
))]
pub struct ScenarioConfig<S> {
    pub carrier_frequency_hz: S,
    pub update_distance_m: S,
    pub seed: u64,
    pub ensemble_size: usize,
    pub sc_mode: ScMode,
    pub snr_grid_db: Vec<S>,
    pub precoders: Vec<PrecoderMethod>,
    pub streams_per_ue: usize,
    pub cluster_count: usize,
    pub rays_per_cluster: usize,
    /// Omit the path-loss/shadow-fading amplitude so channels carry only
    /// their directional structure.
    #[serde(default)]
    pub normalize_rx_power: bool,
    pub bs: BsConfig<S>,
    pub ues: Vec<UeConfig<S>>,
    pub lsp: LspProfile<S>,
}

impl<S: Real> ScenarioConfig<S> {
    pub fn wavelength_m(&self) -> S {
        crate::speed_of_light::<S>() / self.carrier_frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.carrier_frequency_hz <= S::zero() {
            return Err(Error::InvalidConfig("carrier frequency must be positive".into()));
        }
        if self.update_distance_m <= S::zero() {
            return Err(Error::InvalidConfig("update distance must be positive".into()));
        }
        if self.cluster_count == 0 {
            return Err(Error::InvalidConfig("need at least one cluster".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("ensemble size must be positive".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::InvalidConfig("SNR grid is empty".into()));
        }
        if self.precoders.is_empty() {
            return Err(Error::InvalidConfig("no precoders requested".into()));
        }
        if self.ues.is_empty() {
            return Err(Error::InvalidConfig("no UEs configured".into()));
        }
        smallscale::ray_offset_multipliers::<S>(self.rays_per_cluster)?;
        let m_tx = self.bs.array.element_count();
        let total_streams = self.streams_per_ue * self.ues.len();
        if total_streams > m_tx {
            return Err(Error::InvalidConfig(format!(
                "{total_streams} total streams exceed {m_tx} BS elements"
            )));
        }
        for ue in &self.ues {
            ue.route.validate()?;
            if self.streams_per_ue > ue.array.element_count() {
                return Err(Error::InvalidConfig(format!(
                    "route '{}': {} streams exceed {} UE elements",
                    ue.route.label,
                    self.streams_per_ue,
                    ue.array.element_count()
                )));
            }
        }
        Ok(())
    }

    /// Horizontal region covered by every UE trajectory, padded for field
    /// generation.
    pub fn field_region(&self) -> Rect<S> {
        let mut x_min = S::max_value().unwrap();
        let mut x_max = -S::max_value().unwrap();
        let mut y_min = S::max_value().unwrap();
        let mut y_max = -S::max_value().unwrap();
        for ue in &self.ues {
            for w in &ue.route.waypoints_m {
                x_min = x_min.min(w.x);
                x_max = x_max.max(w.x);
                y_min = y_min.min(w.y);
                y_max = y_max.max(w.y);
            }
        }
        Rect::new(x_min, x_max, y_min, y_max).padded(real(2.0))
    }
}

/// The two-UE street scenario the simulator defaults to: BS at the origin
/// with its panel on the x-z plane (boresight +y), UE 1 starting exactly
/// 20 m from the BS and walking an axis-aligned L (20 m east, 20 m north,
/// turn at the halfway point) that ends exactly 40 m from the BS, where
/// UE 2 starts and continues 40 m north. Both UEs move at 0.83 m/s with a
/// 0.1 m update distance and six scattering clusters at 28 GHz.
pub fn build_default_scenario<S: Real>() -> ScenarioConfig<S> {
    // Start point (a, b) with a = 5 - 5*sqrt(7), b = 5 + 5*sqrt(7): the
    // unique axis-aligned 20 m + 20 m L whose start is 20 m and whose end
    // is 40 m from the origin.
    let root7 = real::<S>(7.0).sqrt();
    let five = real::<S>(5.0);
    let a = five - five * root7;
    let b = five + five * root7;
    let twenty = real::<S>(20.0);
    let ue_h = real::<S>(1.5);
    let speed = real::<S>(0.83);

    let ue1 = UeRoute {
        label: "ue1".to_string(),
        waypoints_m: vec![
            Vec3::new(a, b, ue_h),
            Vec3::new(a + twenty, b, ue_h),
            Vec3::new(a + twenty, b + twenty, ue_h),
        ],
        speed_mps: speed,
        orientation: OrientationPolicy::AlongTrack,
    };
    let ue2 = UeRoute {
        label: "ue2".to_string(),
        waypoints_m: vec![
            Vec3::new(a + twenty, b + twenty, ue_h),
            Vec3::new(a + twenty, b + twenty + real(40.0), ue_h),
        ],
        speed_mps: speed,
        orientation: OrientationPolicy::AlongTrack,
    };

    ScenarioConfig {
        carrier_frequency_hz: real(28e9),
        update_distance_m: real(0.1),
        seed: 1,
        ensemble_size: 20,
        sc_mode: ScMode::Sc1,
        snr_grid_db: vec![
            real(-10.0),
            real(-5.0),
            real(0.0),
            real(5.0),
            real(10.0),
            real(15.0),
            real(20.0),
        ],
        precoders: vec![PrecoderMethod::Zf, PrecoderMethod::Bd, PrecoderMethod::Slnr],
        streams_per_ue: 2,
        cluster_count: 6,
        rays_per_cluster: 20,
        normalize_rx_power: true,
        bs: BsConfig {
            position_m: Vec3::new(S::zero(), S::zero(), real(10.0)),
            array: ArrayConfig::panel(8, 16, real(8.0), real(90.0)),
        },
        ues: vec![
            UeConfig {
                route: ue1,
                array: ArrayConfig::panel(2, 4, real(9.0), real(90.0)),
            },
            UeConfig {
                route: ue2,
                array: ArrayConfig::panel(2, 4, real(9.0), real(90.0)),
            },
        ],
        lsp: LspProfile::umi_28ghz(),
    }
}

/// Per-cluster parameter trace row for one UE position.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<S> {
    pub member: usize,
    pub step_index: usize,
    pub ue_id: usize,
    pub cumulative_distance_m: S,
    pub sc_mode: ScMode,
    pub cluster: usize,
    pub delay_ns: S,
    pub delay_abs_ns: S,
    pub aod_deg: S,
    pub aoa_deg: S,
    pub power: S,
}

/// Everything one simulation run produces.
#[derive(Debug, Clone)]
pub struct SimOutput<S> {
    pub records: Vec<StepRecord<S>>,
    pub traces: Vec<TraceRecord<S>>,
    pub infinite_sinr_count: usize,
}

/// Optional per-channel callback (member, channel); channels arrive in
/// deterministic order within a member.
pub type ChannelObserver<'a, S> = &'a (dyn Fn(usize, &ChannelMatrix<S>) + Sync);

/// Runs the configured scenario over all ensemble members.
pub fn run_scenario<S: Real>(config: &ScenarioConfig<S>) -> Result<SimOutput<S>> {
    run_scenario_observed(config, None)
}

/// As [`run_scenario`], invoking `observer` on every synthesized channel.
pub fn run_scenario_observed<S: Real>(
    config: &ScenarioConfig<S>,
    observer: Option<ChannelObserver<'_, S>>,
) -> Result<SimOutput<S>> {
    config.validate()?;
    if config.sc_mode == ScMode::Sc2 {
        return Err(Error::ScTwoUnimplemented);
    }

    let sampled: Vec<Vec<TrajectorySample<S>>> = config
        .ues
        .iter()
        .map(|ue| sample_trajectory(&ue.route, config.update_distance_m))
        .collect::<Result<_>>()?;
    let n_steps = sampled[0].len();
    if sampled.iter().any(|s| s.len() != n_steps) {
        return Err(Error::InvalidConfig(
            "UE routes produce different step counts; equalize route lengths".into(),
        ));
    }

    let wavelength = config.wavelength_m();
    let bs_geom = config.bs.array.build(wavelength)?;
    let ue_geoms: Vec<ArrayGeometry<S>> = config
        .ues
        .iter()
        .map(|ue| ue.array.build(wavelength))
        .collect::<Result<_>>()?;
    let region = config.field_region();

    let members: Vec<MemberOutput<S>> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|member| {
            run_member(
                config,
                member,
                &sampled,
                &bs_geom,
                &ue_geoms,
                region,
                wavelength,
                observer,
            )
        })
        .collect::<Result<_>>()?;

    let mut out = SimOutput {
        records: Vec::new(),
        traces: Vec::new(),
        infinite_sinr_count: 0,
    };
    for m in members {
        out.records.extend(m.records);
        out.traces.extend(m.traces);
        out.infinite_sinr_count += m.infinite_sinr;
    }
    Ok(out)
}

struct MemberOutput<S> {
    records: Vec<StepRecord<S>>,
    traces: Vec<TraceRecord<S>>,
    infinite_sinr: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_member<S: Real>(
    config: &ScenarioConfig<S>,
    member: usize,
    sampled: &[Vec<TrajectorySample<S>>],
    bs_geom: &ArrayGeometry<S>,
    ue_geoms: &[ArrayGeometry<S>],
    region: Rect<S>,
    wavelength: S,
    observer: Option<ChannelObserver<'_, S>>,
) -> Result<MemberOutput<S>> {
    let n_ues = config.ues.len();
    let n_steps = sampled[0].len();
    let mode = config.sc_mode;
    let root = SeedStream::root(config.seed).derive("ensemble").derive_index(member as u64);
    let fields: Option<FieldSet<S>> = if mode == ScMode::Sc1 {
        Some(FieldSet::generate(&config.lsp, region, &root.derive("field"))?)
    } else {
        None
    };

    let fc_ghz = config.carrier_frequency_hz / real(1e9);
    let step_params = StepParams {
        n_clusters: config.cluster_count,
        m_rays: config.rays_per_cluster,
        wavelength_m: wavelength,
    };
    let stream_counts = vec![config.streams_per_ue; n_ues];

    let mut states: Vec<Option<ClusterState<S>>> = vec![None; n_ues];
    let mut hysteresis: Vec<LosHysteresis<S>> =
        (0..n_ues).map(|_| LosHysteresis::new(real(2.0))).collect();

    let mut records = Vec::new();
    let mut traces = Vec::new();
    let mut infinite_sinr = 0usize;

    for t in 0..n_steps {
        let mut channels: Vec<ChannelMatrix<S>> = Vec::with_capacity(n_ues);
        let mut lsps: Vec<LargeScaleState<S>> = Vec::with_capacity(n_ues);
        for ell in 0..n_ues {
            let ue_id = ell + 1;
            let wrap = |e: Error| e.at_step(t, ue_id);
            let sample = &sampled[ell][t];
            let to_ue = sample.position_m - config.bs.position_m;
            let d_3d = to_ue.norm();
            let d_2d = (to_ue.x * to_ue.x + to_ue.y * to_ue.y).sqrt();
            let centers = DropCenters {
                aod_deg: rad_to_deg(to_ue.y.atan2(to_ue.x)),
                aoa_deg: rad_to_deg((-to_ue.y).atan2(-to_ue.x)),
                zod_deg: rad_to_deg((to_ue.z / d_3d).clamp(-S::one(), S::one()).acos()),
                zoa_deg: rad_to_deg((-to_ue.z / d_3d).clamp(-S::one(), S::one()).acos()),
            };
            let link = LinkGeometry {
                d_2d_m: d_2d,
                d_3d_m: d_3d,
                fc_ghz,
                ue_height_m: config.ues[ell].route.ue_height_m(),
            };
            let ue_stream = root.derive("ue").derive_index(ell as u64);

            let lsp = match (&fields, mode) {
                (Some(f), ScMode::Sc1) => {
                    let raw = largescale::raw_los(f, sample.position_m.x, sample.position_m.y, d_2d)
                        .map_err(wrap)?;
                    let los = hysteresis[ell].update(raw, sample.cumulative_m);
                    largescale::lsp_with_los(
                        sample.position_m.x,
                        sample.position_m.y,
                        &config.lsp,
                        f,
                        &link,
                        los,
                    )
                    .map_err(wrap)?
                }
                _ => {
                    let mut s = ue_stream.derive("step").derive_index(t as u64).derive("lsp");
                    largescale::lsp_iid(&config.lsp, &link, &mut s).map_err(wrap)?
                }
            };

            let state = if t == 0 {
                smallscale::make_drop(
                    &lsp,
                    config.lsp.set_for(lsp.los),
                    config.cluster_count,
                    config.rays_per_cluster,
                    centers,
                    d_3d,
                    &ue_stream.derive("drop"),
                )
                .map_err(wrap)?
            } else {
                let prev_sample = &sampled[ell][t - 1];
                let displacement = sample.position_m - prev_sample.position_m;
                let geometry = StepGeometry {
                    velocity_mps: displacement / sample.dt_s,
                    dt_s: sample.dt_s,
                    d_3d_m: d_3d,
                    centers,
                };
                sc::step(
                    states[ell].as_ref().expect("state from previous step"),
                    &geometry,
                    &lsp,
                    &config.lsp,
                    mode,
                    &step_params,
                    &ue_stream.derive("step").derive_index(t as u64).derive("drop"),
                )
                .map_err(wrap)?
            };

            for n in 0..state.n_clusters() {
                traces.push(TraceRecord {
                    member,
                    step_index: t,
                    ue_id,
                    cumulative_distance_m: sample.cumulative_m,
                    sc_mode: mode,
                    cluster: n,
                    delay_ns: state.delays_s[n] * real(1e9),
                    delay_abs_ns: (state.delays_s[n] + state.delay_offset_s) * real(1e9),
                    aod_deg: state.aod_deg[n],
                    aoa_deg: state.aoa_deg[n],
                    power: state.powers[n],
                });
            }

            let bearing = match config.ues[ell].route.orientation {
                OrientationPolicy::AlongTrack => {
                    rad_to_deg(sample.heading[1].atan2(sample.heading[0]))
                }
                OrientationPolicy::Fixed { bearing_deg } => bearing_deg,
            };
            let ue_geom = ue_geoms[ell].with_bearing(bearing);
            let synth_geo = SynthesisGeometry {
                bs: bs_geom,
                ue: &ue_geom,
                bs_position_m: &config.bs.position_m,
                ue_position_m: &sample.position_m,
                wavelength_m: wavelength,
                normalize_rx_power: config.normalize_rx_power,
            };
            let h = channel::synthesize(&state, &lsp, &synth_geo, ue_id, t).map_err(wrap)?;
            if let Some(obs) = observer {
                obs(member, &h);
            }
            channels.push(h);
            lsps.push(lsp);
            states[ell] = Some(state);
        }

        for &method in &config.precoders {
            if method.noise_dependent() {
                for &snr_db in &config.snr_grid_db {
                    let sigma2 = real::<S>(10.0).powf(-snr_db / real(10.0));
                    let set = precoding::slnr(&channels, &stream_counts, sigma2)
                        .map_err(|e| e.at_step(t, 0))?;
                    emit_records(
                        &channels,
                        &lsps,
                        &set,
                        sampled,
                        member,
                        t,
                        mode,
                        snr_db,
                        sigma2,
                        &mut records,
                        &mut infinite_sinr,
                    );
                }
            } else {
                let set = match method {
                    PrecoderMethod::Zf => {
                        let effs = channels
                            .iter()
                            .map(|h| precoding::effective_channel(h, config.streams_per_ue))
                            .collect::<Result<Vec<_>>>()
                            .map_err(|e| e.at_step(t, 0))?;
                        precoding::zero_forcing(&effs).map_err(|e| e.at_step(t, 0))?
                    }
                    PrecoderMethod::Bd => precoding::block_diagonalization(&channels, &stream_counts)
                        .map_err(|e| e.at_step(t, 0))?,
                    PrecoderMethod::Slnr => unreachable!("slnr is noise dependent"),
                };
                // Noise enters only the denominator, so the power terms are
                // shared across the whole SNR grid.
                let terms: Vec<(S, S)> = (0..channels.len())
                    .map(|ell| crate::metrics::power_terms(&channels[ell], &set, ell))
                    .collect();
                for &snr_db in &config.snr_grid_db {
                    let sigma2 = real::<S>(10.0).powf(-snr_db / real(10.0));
                    for ell in 0..channels.len() {
                        let (desired, interference) = terms[ell];
                        let sinr = sinr_from_terms(
                            desired,
                            interference,
                            channels[ell].entries.nrows(),
                            sigma2,
                        );
                        push_record(
                            &mut records,
                            &mut infinite_sinr,
                            member,
                            t,
                            ell,
                            sampled,
                            mode,
                            &set,
                            snr_db,
                            sigma2,
                            sinr,
                            lsps[ell].los,
                        );
                    }
                }
            }
        }
    }

    Ok(MemberOutput {
        records,
        traces,
        infinite_sinr,
    })
}

#[allow(clippy::too_many_arguments)]
fn emit_records<S: Real>(
    channels: &[ChannelMatrix<S>],
    lsps: &[LargeScaleState<S>],
    set: &PrecoderSet<S>,
    sampled: &[Vec<TrajectorySample<S>>],
    member: usize,
    t: usize,
    mode: ScMode,
    snr_db: S,
    sigma2: S,
    records: &mut Vec<StepRecord<S>>,
    infinite_sinr: &mut usize,
) {
    for ell in 0..channels.len() {
        let sinr = crate::metrics::sinr_closed_form(&channels[ell], set, ell, sigma2);
        push_record(
            records,
            infinite_sinr,
            member,
            t,
            ell,
            sampled,
            mode,
            set,
            snr_db,
            sigma2,
            sinr,
            lsps[ell].los,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn push_record<S: Real>(
    records: &mut Vec<StepRecord<S>>,
    infinite_sinr: &mut usize,
    member: usize,
    t: usize,
    ell: usize,
    sampled: &[Vec<TrajectorySample<S>>],
    mode: ScMode,
    set: &PrecoderSet<S>,
    snr_db: S,
    sigma2: S,
    sinr: S,
    los: bool,
) {
    if !crate::is_finite(sinr) {
        *infinite_sinr += 1;
    }
    records.push(StepRecord {
        member,
        step_index: t,
        ue_id: ell + 1,
        cumulative_distance_m: sampled[ell][t].cumulative_m,
        sc_mode: mode,
        precoder: set.method,
        snr_db,
        sigma2,
        sinr_linear: sinr,
        se_bits: StepRecord::<S>::se_of(sinr),
        los,
    });
}
