//! Drop-based generation of cluster-level small-scale parameters: delays,
//! powers, angles, per-ray offsets, polarization couplings and initial
//! phases.

use crate::error::{Error, Result};
use crate::largescale::{LargeScaleState, LspParamSet};
use crate::rng::SeedStream;
use crate::{real, wrap_deg, Real};

/// Fixed symmetric ray offset multipliers (unit angular standard deviation),
/// interleaved as +/- pairs.
pub const RAY_OFFSETS: [f64; 20] = [
    0.0447, -0.0447, 0.1413, -0.1413, 0.2492, -0.2492, 0.3715, -0.3715, 0.5129, -0.5129,
    0.6797, -0.6797, 0.8844, -0.8844, 1.1481, -1.1481, 1.5195, -1.5195, 2.1551, -2.1551,
];

const AZIMUTH_SCALING: [(usize, f64); 11] = [
    (4, 0.779),
    (5, 0.860),
    (8, 1.018),
    (10, 1.090),
    (11, 1.123),
    (12, 1.146),
    (14, 1.190),
    (15, 1.211),
    (16, 1.226),
    (19, 1.273),
    (20, 1.289),
];

const ZENITH_SCALING: [(usize, f64); 7] = [
    (8, 0.889),
    (10, 0.957),
    (11, 1.031),
    (12, 1.104),
    (15, 1.1088),
    (19, 1.184),
    (20, 1.178),
];

fn nearest_constant(n: usize, table: &[(usize, f64)]) -> (f64, usize) {
    let mut best = table[0];
    for &(tn, c) in table {
        if tn.abs_diff(n) < best.0.abs_diff(n) {
            best = (tn, c);
        }
    }
    (best.1, best.0)
}

/// Azimuth inverse-mapping scaling constant for a cluster count, together
/// with the tabulated count actually used (the nearest entry).
pub fn azimuth_scaling_constant(n_clusters: usize) -> (f64, usize) {
    nearest_constant(n_clusters, &AZIMUTH_SCALING)
}

/// Zenith inverse-mapping scaling constant; same nearest-entry rule.
pub fn zenith_scaling_constant(n_clusters: usize) -> (f64, usize) {
    nearest_constant(n_clusters, &ZENITH_SCALING)
}

/// Per-cluster small-scale state of one UE link: everything the channel
/// synthesis needs, and the object the spatial-consistency engine evolves.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState<S> {
    /// Excess delays, seconds; the earliest cluster sits at zero.
    pub delays_s: Vec<S>,
    /// Absolute delay of the earliest cluster, seconds; keeps the total
    /// path length when delays are re-zeroed.
    pub delay_offset_s: S,
    /// Diffuse power fractions; they sum to 1 without a specular component
    /// and to 1/(K+1) with one.
    pub powers: Vec<S>,
    pub aod_deg: Vec<S>,
    pub aoa_deg: Vec<S>,
    pub zod_deg: Vec<S>,
    pub zoa_deg: Vec<S>,
    /// Unit ray offset multipliers shared by all clusters.
    pub ray_offsets: Vec<S>,
    pub c_asd_deg: S,
    pub c_asa_deg: S,
    pub c_zsd_deg: S,
    pub c_zsa_deg: S,
    /// Per-cluster, per-ray cross-polarization power ratio, linear.
    pub xpr_linear: Vec<Vec<S>>,
    /// Per-cluster, per-ray coupling phases `[tt, tp, pt, pp]`, radians.
    pub phases: Vec<Vec<[S; 4]>>,
    /// Per-cluster, per-ray phase accumulated from UE motion, radians.
    pub phase_accum: Vec<Vec<S>>,
    /// Per-cluster shadowing draws, dB; frozen along a trajectory.
    pub z_shadow_db: Vec<S>,
    pub los: bool,
    pub k_db: S,
}

impl<S: Real> ClusterState<S> {
    pub fn n_clusters(&self) -> usize {
        self.delays_s.len()
    }

    pub fn n_rays(&self) -> usize {
        self.ray_offsets.len()
    }

    pub fn ray_aod_deg(&self, cluster: usize, ray: usize) -> S {
        wrap_deg(self.aod_deg[cluster] + self.c_asd_deg * self.ray_offsets[ray])
    }

    pub fn ray_aoa_deg(&self, cluster: usize, ray: usize) -> S {
        wrap_deg(self.aoa_deg[cluster] + self.c_asa_deg * self.ray_offsets[ray])
    }

    pub fn ray_zod_deg(&self, cluster: usize, ray: usize) -> S {
        (self.zod_deg[cluster] + self.c_zsd_deg * self.ray_offsets[ray])
            .clamp(S::zero(), real(180.0))
    }

    pub fn ray_zoa_deg(&self, cluster: usize, ray: usize) -> S {
        (self.zoa_deg[cluster] + self.c_zsa_deg * self.ray_offsets[ray])
            .clamp(S::zero(), real(180.0))
    }

    /// Power fraction carried by the specular component, `K/(K+1)` under
    /// LOS and zero otherwise.
    pub fn specular_fraction(&self) -> S {
        if self.los {
            let k = real::<S>(10.0).powf(self.k_db / real(10.0));
            k / (k + S::one())
        } else {
            S::zero()
        }
    }

    fn expected_power_sum(&self) -> S {
        S::one() - self.specular_fraction()
    }

    fn validate_common(&self) -> Result<()> {
        let n = self.n_clusters();
        let shaped = self.powers.len() == n
            && self.aod_deg.len() == n
            && self.aoa_deg.len() == n
            && self.zod_deg.len() == n
            && self.zoa_deg.len() == n
            && self.z_shadow_db.len() == n
            && self.xpr_linear.len() == n
            && self.phases.len() == n
            && self.phase_accum.len() == n;
        if !shaped {
            return Err(Error::DimensionMismatch("cluster state field lengths disagree".into()));
        }
        let tol = real::<S>(1e-9);
        if self.delays_s.iter().any(|&t| t < -tol) {
            return Err(Error::InvalidConfig("negative excess delay".into()));
        }
        if let Some(&min) = self
            .delays_s
            .iter()
            .min_by(|a, b| a.partial_cmp(b).expect("finite delays"))
        {
            if min.abs() > tol {
                return Err(Error::InvalidConfig("earliest excess delay is not zero".into()));
            }
        }
        let sum: S = self.powers.iter().fold(S::zero(), |a, &p| a + p);
        if (sum - self.expected_power_sum()).abs() > tol {
            return Err(Error::InvalidConfig("cluster powers are not normalized".into()));
        }
        let half = real::<S>(180.0);
        for (&aod, &aoa) in self.aod_deg.iter().zip(&self.aoa_deg) {
            if aod <= -half || aod > half || aoa <= -half || aoa > half {
                return Err(Error::InvalidConfig("azimuth outside (-180, 180]".into()));
            }
        }
        for (&zod, &zoa) in self.zod_deg.iter().zip(&self.zoa_deg) {
            if zod < S::zero() || zod > half || zoa < S::zero() || zoa > half {
                return Err(Error::InvalidConfig("zenith outside [0, 180]".into()));
            }
        }
        for per_cluster in &self.xpr_linear {
            if per_cluster.iter().any(|&k| k <= S::zero()) {
                return Err(Error::InvalidConfig("non-positive XPR".into()));
            }
        }
        Ok(())
    }

    /// Invariants of a freshly generated drop, including ascending delays.
    pub fn validate_drop(&self) -> Result<()> {
        self.validate_common()?;
        if self.delays_s.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("drop delays are not sorted".into()));
        }
        Ok(())
    }

    /// Invariants maintained under evolution. Cluster identities persist
    /// while delays drift, so delay traces may cross and the ascending
    /// order of a fresh drop is not required here.
    pub fn validate_evolved(&self) -> Result<()> {
        self.validate_common()
    }
}

/// Raw exponential delays before sorting and normalization.
pub fn draw_delays_raw<S: Real>(
    n_clusters: usize,
    delay_spread_s: S,
    delay_scaling: S,
    stream: &mut SeedStream,
) -> Vec<S> {
    (0..n_clusters)
        .map(|_| -delay_scaling * delay_spread_s * stream.next_uniform_open::<S>().ln())
        .collect()
}

/// Sorted, zero-based cluster excess delays.
pub fn draw_delays<S: Real>(
    n_clusters: usize,
    delay_spread_s: S,
    delay_scaling: S,
    stream: &mut SeedStream,
) -> Vec<S> {
    let mut delays = draw_delays_raw(n_clusters, delay_spread_s, delay_scaling, stream);
    delays.sort_by(|a, b| a.partial_cmp(b).expect("finite delays"));
    let min = delays[0];
    for d in delays.iter_mut() {
        *d -= min;
    }
    delays
}

/// Unnormalized exponential power profile with per-cluster shadowing.
pub fn power_profile<S: Real>(
    delays_s: &[S],
    delay_spread_s: S,
    delay_scaling: S,
    z_shadow_db: &[S],
) -> Vec<S> {
    let ten = real::<S>(10.0);
    delays_s
        .iter()
        .zip(z_shadow_db)
        .map(|(&tau, &z)| {
            let exponent = -tau * (delay_scaling - S::one()) / (delay_scaling * delay_spread_s);
            exponent.exp() * ten.powf(-z / ten)
        })
        .collect()
}

/// Normalizes a power profile to unit sum, then rescales by `1/(K+1)` when
/// a specular component is present.
pub fn finish_powers<S: Real>(mut profile: Vec<S>, los: bool, k_db: S) -> Vec<S> {
    let sum: S = profile.iter().fold(S::zero(), |a, &p| a + p);
    let scale = if los {
        let k = real::<S>(10.0).powf(k_db / real(10.0));
        (S::one() / (k + S::one())) / sum
    } else {
        S::one() / sum
    };
    for p in profile.iter_mut() {
        *p *= scale;
    }
    profile
}

/// Cluster power fractions plus the frozen per-cluster shadowing draws.
pub fn draw_powers<S: Real>(
    delays_s: &[S],
    delay_spread_s: S,
    delay_scaling: S,
    per_cluster_shadow_db: S,
    k_db: S,
    los: bool,
    stream: &mut SeedStream,
) -> (Vec<S>, Vec<S>) {
    let z: Vec<S> = (0..delays_s.len())
        .map(|_| per_cluster_shadow_db * stream.next_normal::<S>())
        .collect();
    let profile = power_profile(delays_s, delay_spread_s, delay_scaling, &z);
    (finish_powers(profile, los, k_db), z)
}

/// Angle domain selector for the power-to-angle inverse mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleDomain {
    /// Inverse-Gaussian mapping, wrapped to (-180, 180].
    Azimuth,
    /// Inverse-Laplacian mapping, clipped to [0, 180].
    Zenith,
}

/// Cluster angles for one dimension: inverse mapping of the power profile,
/// random per-cluster sign, Gaussian jitter of `spread/7`, recentered on the
/// geometric direction.
pub fn draw_angles<S: Real>(
    powers: &[S],
    spread_deg: S,
    center_deg: S,
    domain: AngleDomain,
    stream: &mut SeedStream,
) -> Vec<S> {
    let n = powers.len();
    let max_power = powers
        .iter()
        .copied()
        .fold(S::zero(), |a, p| if p > a { p } else { a });
    let mut out = Vec::with_capacity(n);
    for &p in powers {
        let ratio = (p / max_power).min(S::one());
        let magnitude = match domain {
            AngleDomain::Azimuth => {
                let (c_phi, _) = azimuth_scaling_constant(n);
                real::<S>(2.0) * (spread_deg / real(1.4)) * (-ratio.ln()).sqrt() / real(c_phi)
            }
            AngleDomain::Zenith => {
                let (c_theta, _) = zenith_scaling_constant(n);
                -spread_deg * ratio.ln() / real(c_theta)
            }
        };
        let sign: S = stream.next_sign();
        let jitter = spread_deg / real::<S>(7.0) * stream.next_normal::<S>();
        let angle = sign * magnitude + jitter + center_deg;
        out.push(match domain {
            AngleDomain::Azimuth => wrap_deg(angle),
            AngleDomain::Zenith => angle.clamp(S::zero(), real(180.0)),
        });
    }
    out
}

/// Per-ray angles from cluster angles: `cluster + c * offset_m` with the
/// fixed symmetric offset table. Supports 20 rays or any even prefix.
pub fn attach_rays<S: Real>(
    cluster_angles_deg: &[S],
    per_cluster_spread_deg: S,
    m_rays: usize,
) -> Result<Vec<Vec<S>>> {
    let offsets = ray_offset_multipliers::<S>(m_rays)?;
    Ok(cluster_angles_deg
        .iter()
        .map(|&angle| {
            offsets
                .iter()
                .map(|&o| angle + per_cluster_spread_deg * o)
                .collect()
        })
        .collect())
}

/// The first `m_rays` entries of the offset table; only 20 or a smaller
/// even count keeps the offsets symmetric.
pub fn ray_offset_multipliers<S: Real>(m_rays: usize) -> Result<Vec<S>> {
    if m_rays == 0 || m_rays > RAY_OFFSETS.len() || m_rays % 2 != 0 {
        return Err(Error::UnsupportedRayCount(m_rays));
    }
    Ok(RAY_OFFSETS[..m_rays].iter().map(|&o| real(o)).collect())
}

/// Per-ray cross-polarization ratios (log-normal) and the four i.i.d.
/// uniform coupling phases per ray.
pub fn draw_polarization<S: Real>(
    n_clusters: usize,
    m_rays: usize,
    xpr_mean_db: S,
    xpr_std_db: S,
    stream: &mut SeedStream,
) -> (Vec<Vec<S>>, Vec<Vec<[S; 4]>>) {
    let ten = real::<S>(10.0);
    let mut xpr = Vec::with_capacity(n_clusters);
    let mut phases = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        let mut xpr_row = Vec::with_capacity(m_rays);
        let mut phase_row = Vec::with_capacity(m_rays);
        for _ in 0..m_rays {
            let x_db = xpr_mean_db + xpr_std_db * stream.next_normal::<S>();
            xpr_row.push(ten.powf(x_db / ten));
            phase_row.push([
                stream.next_phase(),
                stream.next_phase(),
                stream.next_phase(),
                stream.next_phase(),
            ]);
        }
        xpr.push(xpr_row);
        phases.push(phase_row);
    }
    (xpr, phases)
}

/// Geometric centers the cluster angles are drawn around.
#[derive(Debug, Clone, Copy)]
pub struct DropCenters<S> {
    pub aod_deg: S,
    pub aoa_deg: S,
    pub zod_deg: S,
    pub zoa_deg: S,
}

/// Generates the full cluster state of one link from its large-scale state.
pub fn make_drop<S: Real>(
    lsp: &LargeScaleState<S>,
    set: &LspParamSet<S>,
    n_clusters: usize,
    m_rays: usize,
    centers: DropCenters<S>,
    d_3d_m: S,
    stream: &SeedStream,
) -> Result<ClusterState<S>> {
    let ray_offsets = ray_offset_multipliers::<S>(m_rays)?;
    let delays = draw_delays(
        n_clusters,
        lsp.delay_spread_s,
        set.delay_scaling,
        &mut stream.derive("delays"),
    );
    let (powers, z_shadow) = draw_powers(
        &delays,
        lsp.delay_spread_s,
        set.delay_scaling,
        set.per_cluster_shadow_db,
        lsp.k_db,
        lsp.los,
        &mut stream.derive("powers"),
    );
    let aod = draw_angles(
        &powers,
        lsp.asd_deg,
        centers.aod_deg,
        AngleDomain::Azimuth,
        &mut stream.derive("aod"),
    );
    let aoa = draw_angles(
        &powers,
        lsp.asa_deg,
        centers.aoa_deg,
        AngleDomain::Azimuth,
        &mut stream.derive("aoa"),
    );
    let zod = draw_angles(
        &powers,
        lsp.zsd_deg,
        centers.zod_deg,
        AngleDomain::Zenith,
        &mut stream.derive("zod"),
    );
    let zoa = draw_angles(
        &powers,
        lsp.zsa_deg,
        centers.zoa_deg,
        AngleDomain::Zenith,
        &mut stream.derive("zoa"),
    );
    let (xpr, phases) = draw_polarization(
        n_clusters,
        m_rays,
        set.xpr_mean_db,
        set.xpr_std_db,
        &mut stream.derive("polarization"),
    );
    Ok(ClusterState {
        delays_s: delays,
        delay_offset_s: d_3d_m / crate::speed_of_light(),
        powers,
        aod_deg: aod,
        aoa_deg: aoa,
        zod_deg: zod,
        zoa_deg: zoa,
        ray_offsets,
        c_asd_deg: set.c_asd_deg,
        c_asa_deg: set.c_asa_deg,
        c_zsd_deg: set.c_zsd_deg,
        c_zsa_deg: set.c_zsa_deg,
        xpr_linear: xpr,
        phases,
        phase_accum: vec![vec![S::zero(); m_rays]; n_clusters],
        z_shadow_db: z_shadow,
        los: lsp.los,
        k_db: lsp.k_db,
    })
}
