//! Distance-dependent large-scale propagation: LOS probability, path loss,
//! and spatially correlated large-scale parameters (delay spread, angular
//! spreads, shadow fading, Ricean K) sampled as 2-D correlated random
//! fields.
//!
//! Fields are generated by running an exponential recursive filter over
//! seeded white noise on a regular grid, first along x then along y. Node
//! marginals are exactly standard normal and the autocorrelation along the
//! grid axes is exactly `exp(-d/d_corr)`; along diagonals the separable
//! construction decays with the L1 distance instead of the Euclidean one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::{real, Real};

/// LOS probability for a street-canyon microcell at 2-D distance `d_2d` in
/// meters. Equals 1 up to 18 m and decays smoothly beyond.
pub fn los_probability<S: Real>(d_2d_m: S) -> S {
    let eighteen = real::<S>(18.0);
    if d_2d_m <= eighteen {
        return S::one();
    }
    let decay = (-d_2d_m / real(36.0)).exp();
    let p = (eighteen / d_2d_m).min(S::one()) * (S::one() - decay) + decay;
    p.clamp(S::zero(), S::one())
}

/// Street-canyon path loss in dB at 3-D distance `d_3d` (meters) and
/// carrier `fc` (GHz). The NLOS branch is floored by the LOS value.
pub fn path_loss<S: Real>(d_3d_m: S, fc_ghz: S, los: bool, ue_height_m: S) -> Result<S> {
    if d_3d_m < S::one() {
        return Err(Error::DistanceBelowModelRange(
            d_3d_m.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let los_db = real::<S>(32.4)
        + real::<S>(21.0) * d_3d_m.log10()
        + real::<S>(20.0) * fc_ghz.log10();
    if los {
        return Ok(los_db);
    }
    let nlos_db = real::<S>(35.3) * d_3d_m.log10()
        + real::<S>(22.4)
        + real::<S>(21.3) * fc_ghz.log10()
        - real::<S>(0.3) * (ue_height_m - real(1.5));
    Ok(los_db.max(nlos_db))
}

/// Standard normal CDF via the Abramowitz-Stegun erf approximation
/// (absolute error below 1.5e-7).
pub fn std_normal_cdf<S: Real>(z: S) -> S {
    let x = z / real::<S>(std::f64::consts::SQRT_2);
    let sign = if x < S::zero() { -S::one() } else { S::one() };
    let x = x.abs();
    let t = S::one() / (S::one() + real::<S>(0.3275911) * x);
    let poly = t
        * (real::<S>(0.254829592)
            + t * (real::<S>(-0.284496736)
                + t * (real::<S>(1.421413741)
                    + t * (real::<S>(-1.453152027) + t * real::<S>(1.061405429)))));
    let erf = S::one() - poly * (-x * x).exp();
    real::<S>(0.5) * (S::one() + sign * erf)
}

/// Axis-aligned rectangle in the horizontal plane, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<S> {
    pub x_min: S,
    pub x_max: S,
    pub y_min: S,
    pub y_max: S,
}

impl<S: Real> Rect<S> {
    pub fn new(x_min: S, x_max: S, y_min: S, y_max: S) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn is_empty(&self) -> bool {
        self.x_max < self.x_min || self.y_max < self.y_min
    }

    /// Grows the rectangle outward by `margin` on every side.
    pub fn padded(&self, margin: S) -> Self {
        Self {
            x_min: self.x_min - margin,
            x_max: self.x_max + margin,
            y_min: self.y_min - margin,
            y_max: self.y_max + margin,
        }
    }
}

/// Grid of standard-normal values with exponential spatial autocorrelation.
#[derive(Debug, Clone)]
pub struct CorrelatedField<S> {
    origin_x: S,
    origin_y: S,
    spacing_m: S,
    nx: usize,
    ny: usize,
    /// x-major: `values[ix * ny + iy]`.
    values: Vec<S>,
    pub corr_dist_m: S,
}

/// Generates a correlated field covering `region` with correlation distance
/// `d_corr`, deterministically from the given stream.
pub fn sample_field<S: Real>(
    d_corr_m: S,
    region: Rect<S>,
    stream: &mut SeedStream,
) -> Result<CorrelatedField<S>> {
    if region.is_empty() {
        return Err(Error::InvalidConfig("field region is empty".into()));
    }
    if d_corr_m <= S::zero() {
        return Err(Error::InvalidConfig("correlation distance must be positive".into()));
    }
    let spacing = S::one().min(d_corr_m / real(4.0));
    let span_x = (region.x_max - region.x_min) / spacing;
    let span_y = (region.y_max - region.y_min) / spacing;
    let nx = span_x.ceil().to_usize().unwrap_or(0) + 2;
    let ny = span_y.ceil().to_usize().unwrap_or(0) + 2;

    let mut values = vec![S::zero(); nx * ny];
    for v in values.iter_mut() {
        *v = stream.next_normal();
    }

    let rho = (-spacing / d_corr_m).exp();
    let fresh = (S::one() - rho * rho).sqrt();
    // Recursive exponential filter along x, then along y; the AR(1)
    // recursion keeps node marginals exactly standard normal.
    for iy in 0..ny {
        for ix in 1..nx {
            let prev = values[(ix - 1) * ny + iy];
            let v = &mut values[ix * ny + iy];
            *v = rho * prev + fresh * *v;
        }
    }
    for ix in 0..nx {
        for iy in 1..ny {
            let prev = values[ix * ny + iy - 1];
            let v = &mut values[ix * ny + iy];
            *v = rho * prev + fresh * *v;
        }
    }

    Ok(CorrelatedField {
        origin_x: region.x_min,
        origin_y: region.y_min,
        spacing_m: spacing,
        nx,
        ny,
        values,
        corr_dist_m: d_corr_m,
    })
}

impl<S: Real> CorrelatedField<S> {
    /// Field value at a position, bilinearly interpolated between grid
    /// nodes. Positions outside the generated region are an error.
    pub fn value_at(&self, x_m: S, y_m: S) -> Result<S> {
        let fx = (x_m - self.origin_x) / self.spacing_m;
        let fy = (y_m - self.origin_y) / self.spacing_m;
        let eps = real::<S>(1e-9);
        let fx_max: S = real(self.nx as f64 - 1.0);
        let fy_max: S = real(self.ny as f64 - 1.0);
        if fx < -eps || fy < -eps || fx > fx_max + eps || fy > fy_max + eps {
            return Err(Error::OutsideField {
                x: x_m.to_f64().unwrap_or(f64::NAN),
                y: y_m.to_f64().unwrap_or(f64::NAN),
            });
        }
        let fx = fx.clamp(S::zero(), fx_max);
        let fy = fy.clamp(S::zero(), fy_max);
        let ix = fx.floor().to_usize().unwrap().min(self.nx - 2);
        let iy = fy.floor().to_usize().unwrap().min(self.ny - 2);
        let tx = fx - real(ix as f64);
        let ty = fy - real(iy as f64);

        let v00 = self.values[ix * self.ny + iy];
        let v10 = self.values[(ix + 1) * self.ny + iy];
        let v01 = self.values[ix * self.ny + iy + 1];
        let v11 = self.values[(ix + 1) * self.ny + iy + 1];
        let one = S::one();
        Ok(v00 * (one - tx) * (one - ty)
            + v10 * tx * (one - ty)
            + v01 * (one - tx) * ty
            + v11 * tx * ty)
    }

    /// Value at grid node (ix, iy); used by statistical checks.
    pub fn node(&self, ix: usize, iy: usize) -> S {
        self.values[ix * self.ny + iy]
    }

    pub fn node_counts(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn spacing_m(&self) -> S {
        self.spacing_m
    }
}

/// Log-domain distribution of one large-scale parameter plus its spatial
/// correlation distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogParam<S> {
    pub mu: S,
    pub sigma: S,
    pub corr_dist_m: S,
}

/// Distribution parameters for one propagation condition (LOS or NLOS).
///
/// Units: `ds` is log10 seconds; the four angular spreads are log10 degrees;
/// `sf_std_db`, `k_mean_db`, `k_std_db` are dB. The `c_*` entries are the
/// ray-level per-cluster spreads in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LspParamSet<S> {
    pub ds: LogParam<S>,
    pub asd: LogParam<S>,
    pub asa: LogParam<S>,
    pub zsd: LogParam<S>,
    pub zsa: LogParam<S>,
    pub sf_std_db: S,
    pub sf_corr_dist_m: S,
    pub k_mean_db: S,
    pub k_std_db: S,
    pub k_corr_dist_m: S,
    pub delay_scaling: S,
    pub per_cluster_shadow_db: S,
    pub xpr_mean_db: S,
    pub xpr_std_db: S,
    pub c_asd_deg: S,
    pub c_asa_deg: S,
    pub c_zsd_deg: S,
    pub c_zsa_deg: S,
}

/// Large-scale parameter profile: one parameter set per propagation
/// condition plus the correlation distance of the LOS state field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LspProfile<S> {
    pub los: LspParamSet<S>,
    pub nlos: LspParamSet<S>,
    pub los_state_corr_dist_m: S,
}

impl<S: Real> LspProfile<S> {
    /// Street-canyon microcell profile at 28 GHz. Distribution values are
    /// shipped as overridable config data; correlation distances default to
    /// 13 m for every parameter.
    pub fn umi_28ghz() -> Self {
        let d = real::<S>(13.0);
        let p = |mu: f64, sigma: f64| LogParam {
            mu: real(mu),
            sigma: real(sigma),
            corr_dist_m: d,
        };
        Self {
            los: LspParamSet {
                ds: p(-7.490976, 0.38),
                asd: p(1.136880, 0.41),
                asa: p(1.613008, 0.300474),
                zsd: p(0.471, 0.35),
                zsa: p(0.583760, 0.281504),
                sf_std_db: real(4.0),
                sf_corr_dist_m: d,
                k_mean_db: real(9.0),
                k_std_db: real(5.0),
                k_corr_dist_m: d,
                delay_scaling: real(3.0),
                per_cluster_shadow_db: real(3.0),
                xpr_mean_db: real(9.0),
                xpr_std_db: real(3.0),
                c_asd_deg: real(3.0),
                c_asa_deg: real(17.0),
                c_zsd_deg: real(1.11),
                c_zsa_deg: real(7.0),
            },
            nlos: LspParamSet {
                ds: p(-7.180976, 0.513984),
                asd: p(1.193648, 0.490864),
                asa: p(1.693008, 0.373120),
                zsd: p(0.107, 0.35),
                zsa: p(0.861504, 0.307632),
                sf_std_db: real(7.82),
                sf_corr_dist_m: d,
                k_mean_db: real(9.0),
                k_std_db: real(5.0),
                k_corr_dist_m: d,
                delay_scaling: real(2.1),
                per_cluster_shadow_db: real(3.0),
                xpr_mean_db: real(8.0),
                xpr_std_db: real(3.0),
                c_asd_deg: real(10.0),
                c_asa_deg: real(22.0),
                c_zsd_deg: real(0.48),
                c_zsa_deg: real(7.0),
            },
            los_state_corr_dist_m: d,
        }
    }

    pub fn set_for(&self, los: bool) -> &LspParamSet<S> {
        if los {
            &self.los
        } else {
            &self.nlos
        }
    }
}

/// One correlated field per large-scale parameter plus the LOS state field,
/// shared by every UE of an ensemble member.
#[derive(Debug, Clone)]
pub struct FieldSet<S> {
    pub ds: CorrelatedField<S>,
    pub asd: CorrelatedField<S>,
    pub asa: CorrelatedField<S>,
    pub zsd: CorrelatedField<S>,
    pub zsa: CorrelatedField<S>,
    pub sf: CorrelatedField<S>,
    pub k: CorrelatedField<S>,
    pub los: CorrelatedField<S>,
}

impl<S: Real> FieldSet<S> {
    /// Generates all fields over `region`. Correlation distances are taken
    /// from the LOS parameter set; the same field drives the parameter in
    /// both propagation conditions.
    pub fn generate(profile: &LspProfile<S>, region: Rect<S>, stream: &SeedStream) -> Result<Self> {
        let gen = |label: &str, d_corr: S| -> Result<CorrelatedField<S>> {
            sample_field(d_corr, region, &mut stream.derive(label))
        };
        Ok(Self {
            ds: gen("ds", profile.los.ds.corr_dist_m)?,
            asd: gen("asd", profile.los.asd.corr_dist_m)?,
            asa: gen("asa", profile.los.asa.corr_dist_m)?,
            zsd: gen("zsd", profile.los.zsd.corr_dist_m)?,
            zsa: gen("zsa", profile.los.zsa.corr_dist_m)?,
            sf: gen("sf", profile.los.sf_corr_dist_m)?,
            k: gen("k", profile.los.k_corr_dist_m)?,
            los: gen("los", profile.los_state_corr_dist_m)?,
        })
    }
}

/// Link geometry inputs needed to evaluate the large-scale state.
#[derive(Debug, Clone, Copy)]
pub struct LinkGeometry<S> {
    pub d_2d_m: S,
    pub d_3d_m: S,
    pub fc_ghz: S,
    pub ue_height_m: S,
}

/// Large-scale channel state at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeScaleState<S> {
    pub los: bool,
    pub path_loss_db: S,
    pub shadow_fading_db: S,
    pub delay_spread_s: S,
    pub asd_deg: S,
    pub asa_deg: S,
    pub zsd_deg: S,
    pub zsa_deg: S,
    pub k_db: S,
}

/// Raw field-driven LOS decision at a position: the field value is mapped
/// through the normal CDF to a spatially correlated uniform variable and
/// compared against the LOS probability.
pub fn raw_los<S: Real>(fields: &FieldSet<S>, x_m: S, y_m: S, d_2d_m: S) -> Result<bool> {
    let u = std_normal_cdf(fields.los.value_at(x_m, y_m)?);
    Ok(u < los_probability(d_2d_m))
}

/// Large-scale state at a position given an already-resolved LOS flag.
pub fn lsp_with_los<S: Real>(
    x_m: S,
    y_m: S,
    profile: &LspProfile<S>,
    fields: &FieldSet<S>,
    geo: &LinkGeometry<S>,
    los: bool,
) -> Result<LargeScaleState<S>> {
    let set = profile.set_for(los);
    let ten = real::<S>(10.0);
    let log_normal = |p: &LogParam<S>, z: S| ten.powf(p.mu + p.sigma * z);
    Ok(LargeScaleState {
        los,
        path_loss_db: path_loss(geo.d_3d_m, geo.fc_ghz, los, geo.ue_height_m)?,
        shadow_fading_db: set.sf_std_db * fields.sf.value_at(x_m, y_m)?,
        delay_spread_s: log_normal(&set.ds, fields.ds.value_at(x_m, y_m)?),
        asd_deg: log_normal(&set.asd, fields.asd.value_at(x_m, y_m)?),
        asa_deg: log_normal(&set.asa, fields.asa.value_at(x_m, y_m)?),
        zsd_deg: log_normal(&set.zsd, fields.zsd.value_at(x_m, y_m)?),
        zsa_deg: log_normal(&set.zsa, fields.zsa.value_at(x_m, y_m)?),
        k_db: set.k_mean_db + set.k_std_db * fields.k.value_at(x_m, y_m)?,
    })
}

/// Large-scale state at a position with the LOS flag decided from the
/// dedicated field (no hysteresis; trajectory code applies that on top).
pub fn lsp_at<S: Real>(
    x_m: S,
    y_m: S,
    profile: &LspProfile<S>,
    fields: &FieldSet<S>,
    geo: &LinkGeometry<S>,
) -> Result<LargeScaleState<S>> {
    let los = raw_los(fields, x_m, y_m, geo.d_2d_m)?;
    lsp_with_los(x_m, y_m, profile, fields, geo, los)
}

/// Drop-based large-scale state: every call draws fresh independent values,
/// with no spatial correlation between positions.
pub fn lsp_iid<S: Real>(
    profile: &LspProfile<S>,
    geo: &LinkGeometry<S>,
    stream: &mut SeedStream,
) -> Result<LargeScaleState<S>> {
    let los = stream.next_uniform::<S>() < los_probability(geo.d_2d_m);
    let set = profile.set_for(los);
    let ten = real::<S>(10.0);
    let log_normal = |p: &LogParam<S>, s: &mut SeedStream| ten.powf(p.mu + p.sigma * s.next_normal());
    Ok(LargeScaleState {
        los,
        path_loss_db: path_loss(geo.d_3d_m, geo.fc_ghz, los, geo.ue_height_m)?,
        shadow_fading_db: set.sf_std_db * stream.next_normal(),
        delay_spread_s: log_normal(&set.ds, stream),
        asd_deg: log_normal(&set.asd, stream),
        asa_deg: log_normal(&set.asa, stream),
        zsd_deg: log_normal(&set.zsd, stream),
        zsa_deg: log_normal(&set.zsa, stream),
        k_db: set.k_mean_db + set.k_std_db * stream.next_normal(),
    })
}

/// Keeps the LOS state frozen between field-driven flips, with a distance
/// hysteresis so the state cannot chatter around the decision boundary.
#[derive(Debug, Clone)]
pub struct LosHysteresis<S> {
    state: Option<bool>,
    last_flip_m: S,
    hysteresis_m: S,
}

impl<S: Real> LosHysteresis<S> {
    pub fn new(hysteresis_m: S) -> Self {
        Self {
            state: None,
            last_flip_m: S::zero(),
            hysteresis_m,
        }
    }

    /// Feeds the raw decision at the given cumulative distance; returns the
    /// debounced state.
    pub fn update(&mut self, raw: bool, cumulative_m: S) -> bool {
        match self.state {
            None => {
                self.state = Some(raw);
                self.last_flip_m = cumulative_m;
                raw
            }
            Some(current) => {
                if raw != current && cumulative_m - self.last_flip_m >= self.hysteresis_m {
                    self.state = Some(raw);
                    self.last_flip_m = cumulative_m;
                    raw
                } else {
                    current
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn los_probability_clamps_near_and_vanishes_far() {
        assert_eq!(los_probability(10.0f64), 1.0);
        assert_eq!(los_probability(18.0f64), 1.0);
        let e = (-1.0f64).exp();
        assert_relative_eq!(los_probability(36.0f64), 0.5 * (1.0 - e) + e, epsilon = 1e-12);
        assert!(los_probability(1e6f64) < 1e-3);
    }

    #[test]
    fn los_probability_is_monotone_within_unit_interval() {
        let mut prev = 1.0f64;
        for i in 0..2000 {
            let d = i as f64 * 0.5;
            let p = los_probability(d);
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn path_loss_matches_hand_evaluation() {
        let pl = path_loss(20.0f64, 28.0, true, 1.5).unwrap();
        assert_relative_eq!(pl, 88.6648, epsilon = 1e-3);
        let doubled = path_loss(40.0f64, 28.0, true, 1.5).unwrap();
        assert_relative_eq!(doubled - pl, 21.0 * 2.0f64.log10(), epsilon = 1e-9);
    }

    #[test]
    fn nlos_never_beats_los() {
        for d in [1.0f64, 5.0, 20.0, 80.0, 300.0] {
            for h in [1.5f64, 2.5, 10.0] {
                let los = path_loss(d, 28.0, true, h).unwrap();
                let nlos = path_loss(d, 28.0, false, h).unwrap();
                assert!(nlos >= los);
            }
        }
    }

    #[test]
    fn path_loss_rejects_sub_meter_distance() {
        assert!(matches!(
            path_loss(0.5f64, 28.0, true, 1.5),
            Err(Error::DistanceBelowModelRange(_))
        ));
    }

    #[test]
    fn normal_cdf_hits_reference_points() {
        assert_relative_eq!(std_normal_cdf(0.0f64), 0.5, epsilon = 1e-7);
        assert_relative_eq!(std_normal_cdf(1.6448536f64), 0.95, epsilon = 1e-6);
        assert_relative_eq!(std_normal_cdf(-1.0f64), 0.15865525, epsilon = 1e-6);
    }

    fn test_region() -> Rect<f64> {
        Rect::new(0.0, 200.0, 0.0, 60.0)
    }

    #[test]
    fn field_lookup_is_deterministic() {
        let region = test_region();
        let f1 = sample_field(13.0, region, &mut SeedStream::root(1).derive("sf")).unwrap();
        let f2 = sample_field(13.0, region, &mut SeedStream::root(1).derive("sf")).unwrap();
        for &(x, y) in &[(0.3, 0.7), (100.2, 30.5), (199.9, 59.9)] {
            assert_eq!(f1.value_at(x, y).unwrap(), f2.value_at(x, y).unwrap());
        }
    }

    #[test]
    fn field_autocorrelation_at_lag_dcorr_is_one_over_e() {
        let d_corr = 13.0;
        let field = sample_field(d_corr, test_region(), &mut SeedStream::root(3).derive("ac")).unwrap();
        let (nx, ny) = field.node_counts();
        let lag = (d_corr / field.spacing_m()).round() as usize;
        let mut pairs = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx - lag {
                pairs.push((field.node(ix, iy), field.node(ix + lag, iy)));
            }
        }
        assert!(pairs.len() >= 10_000, "need enough pairs, got {}", pairs.len());
        let n = pairs.len() as f64;
        let (mut sa, mut sb, mut sab, mut sa2, mut sb2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(a, b) in &pairs {
            sa += a;
            sb += b;
            sab += a * b;
            sa2 += a * a;
            sb2 += b * b;
        }
        let cov = sab / n - (sa / n) * (sb / n);
        let corr = cov / ((sa2 / n - (sa / n).powi(2)) * (sb2 / n - (sb / n).powi(2))).sqrt();
        let target = (-1.0f64).exp();
        assert!(
            (corr - target).abs() < 0.1,
            "autocorrelation {corr} vs {target}"
        );
    }

    #[test]
    fn independent_streams_are_uncorrelated_at_lag_zero() {
        let f1 = sample_field(13.0, test_region(), &mut SeedStream::root(5).derive("a")).unwrap();
        let f2 = sample_field(13.0, test_region(), &mut SeedStream::root(5).derive("b")).unwrap();
        let (nx, ny) = f1.node_counts();
        let n = (nx * ny) as f64;
        let (mut sa, mut sb, mut sab, mut sa2, mut sb2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ix in 0..nx {
            for iy in 0..ny {
                let a = f1.node(ix, iy);
                let b = f2.node(ix, iy);
                sa += a;
                sb += b;
                sab += a * b;
                sa2 += a * a;
                sb2 += b * b;
            }
        }
        let cov = sab / n - (sa / n) * (sb / n);
        let corr = cov / ((sa2 / n - (sa / n).powi(2)) * (sb2 / n - (sb / n).powi(2))).sqrt();
        assert!(corr.abs() < 0.05, "cross-stream correlation {corr}");
    }

    #[test]
    fn field_marginals_pass_kolmogorov_smirnov() {
        // One node from each of 10^4 independently seeded fields, so the
        // KS test sees i.i.d. marginal samples rather than spatially
        // correlated neighbors.
        let root = SeedStream::root(7).derive("ks");
        let small = Rect::new(0.0, 2.0, 0.0, 2.0);
        let mut samples: Vec<f64> = Vec::with_capacity(10_000);
        for i in 0..10_000u64 {
            let field = sample_field(13.0, small, &mut root.derive_index(i)).unwrap();
            samples.push(field.node(1, 1));
        }
        assert!(samples.len() >= 10_000);
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        let mut d = 0.0f64;
        for (i, &x) in samples.iter().enumerate() {
            let phi = std_normal_cdf(x);
            d = d.max(((i + 1) as f64 / n - phi).abs());
            d = d.max((phi - i as f64 / n).abs());
        }
        // Critical value at alpha = 0.01 is 1.628/sqrt(n).
        assert!(d * n.sqrt() < 1.628, "KS statistic {}", d * n.sqrt());
    }

    #[test]
    fn outside_region_is_an_error() {
        let field = sample_field(13.0, test_region(), &mut SeedStream::root(9).derive("o")).unwrap();
        assert!(matches!(
            field.value_at(-5.0, 10.0),
            Err(Error::OutsideField { .. })
        ));
    }

    fn geo() -> LinkGeometry<f64> {
        LinkGeometry {
            d_2d_m: 25.0,
            d_3d_m: 26.4,
            fc_ghz: 28.0,
            ue_height_m: 1.5,
        }
    }

    #[test]
    fn zero_sigma_profile_collapses_to_the_mean() {
        let mut profile = LspProfile::<f64>::umi_28ghz();
        profile.los.ds.sigma = 0.0;
        profile.nlos.ds.sigma = 0.0;
        let fields = FieldSet::generate(&profile, test_region(), &SeedStream::root(11)).unwrap();
        for &(x, y) in &[(3.0, 4.0), (120.0, 50.0), (77.7, 12.2)] {
            let state = lsp_at(x, y, &profile, &fields, &geo()).unwrap();
            let expected = 10f64.powf(profile.set_for(state.los).ds.mu);
            assert_relative_eq!(state.delay_spread_s, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn nearby_positions_have_bounded_log_increments() {
        let profile = LspProfile::<f64>::umi_28ghz();
        let fields = FieldSet::generate(&profile, test_region(), &SeedStream::root(13)).unwrap();
        let d_corr = profile.los.ds.corr_dist_m;
        let bound = 3.0 * (2.0 * (1.0 - (-0.1f64 / d_corr).exp())).sqrt();
        for i in 0..40 {
            let x = 5.0 + i as f64 * 4.7;
            let y = 8.0 + (i % 7) as f64 * 6.1;
            let za = fields.ds.value_at(x, y).unwrap();
            let zb = fields.ds.value_at(x + 0.1, y).unwrap();
            assert!(
                (za - zb).abs() < bound,
                "increment {} exceeds bound {bound}",
                (za - zb).abs()
            );
        }
    }

    #[test]
    fn iid_draws_are_reproducible_and_position_free() {
        let profile = LspProfile::<f64>::umi_28ghz();
        let mut s1 = SeedStream::root(17).derive("step").derive_index(4);
        let mut s2 = SeedStream::root(17).derive("step").derive_index(4);
        let a = lsp_iid(&profile, &geo(), &mut s1).unwrap();
        let b = lsp_iid(&profile, &geo(), &mut s2).unwrap();
        assert_eq!(a, b);
        let mut s3 = SeedStream::root(17).derive("step").derive_index(5);
        let c = lsp_iid(&profile, &geo(), &mut s3).unwrap();
        assert_ne!(a.delay_spread_s, c.delay_spread_s);
    }

    #[test]
    fn hysteresis_suppresses_rapid_flips() {
        let mut h = LosHysteresis::new(2.0f64);
        assert!(h.update(true, 0.0));
        assert!(h.update(false, 0.5)); // within 2 m of the initial state: held
        assert!(h.update(false, 1.9));
        assert!(!h.update(false, 2.1)); // far enough: flip happens
        assert!(!h.update(true, 3.0)); // and is then held again
        assert!(h.update(true, 4.2));
    }
}
