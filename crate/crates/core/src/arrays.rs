//! Planar array geometry, per-element directional patterns, steering
//! vectors, composite array patterns and half-power beamwidth measurement.
//!
//! Arrays live on their local x-z plane with boresight along local +y; a
//! mounting bearing (azimuth of boresight) and downtilt rotate them into the
//! global frame. Element ordering is polarization-major, then column-major
//! within the panel: `index = pol * rows * cols + col * rows + row`.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::{deg_to_rad, real, wrap_deg, CVector, Cplx, Real, Vec3};

/// Propagation direction in the global frame.
///
/// Azimuth is measured from the +x axis in the x-y plane, zenith from the
/// +z axis; the unit propagation vector is
/// `[sin(zen)cos(az), sin(zen)sin(az), cos(zen)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<S> {
    pub azimuth_deg: S,
    pub zenith_deg: S,
}

impl<S: Real> Direction<S> {
    pub fn new(azimuth_deg: S, zenith_deg: S) -> Self {
        Self {
            azimuth_deg: wrap_deg(azimuth_deg),
            zenith_deg: zenith_deg.clamp(S::zero(), real(180.0)),
        }
    }

    /// Unit vector pointing along the direction.
    pub fn unit_vector(&self) -> Vec3<S> {
        let az = deg_to_rad(self.azimuth_deg);
        let zen = deg_to_rad(self.zenith_deg);
        Vec3::new(zen.sin() * az.cos(), zen.sin() * az.sin(), zen.cos())
    }

    /// Direction of a unit (or any nonzero) vector.
    pub fn from_vector(v: &Vec3<S>) -> Self {
        let az = v.y.atan2(v.x);
        let zen = (v.z / v.norm()).clamp(-S::one(), S::one()).acos();
        Self {
            azimuth_deg: crate::rad_to_deg(az),
            zenith_deg: crate::rad_to_deg(zen),
        }
    }
}

/// Parabolic element pattern with side-lobe and front/back floors, evaluated
/// in the element's own frame (boresight at azimuth 0, zenith 90).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ElementPattern<S> {
    pub peak_gain_dbi: S,
    pub vertical_3db_deg: S,
    pub horizontal_3db_deg: S,
    pub side_lobe_floor_db: S,
    pub front_back_floor_db: S,
    pub slant_deg: S,
}

impl<S: Real> ElementPattern<S> {
    /// Directional element with the widths and floors used for sectorized
    /// panels (65 degree widths, 30 dB floors).
    pub fn directional(peak_gain_dbi: S, slant_deg: S) -> Self {
        Self {
            peak_gain_dbi,
            vertical_3db_deg: real(65.0),
            horizontal_3db_deg: real(65.0),
            side_lobe_floor_db: real(30.0),
            front_back_floor_db: real(30.0),
            slant_deg,
        }
    }

    /// Pattern with no angular dependence; the floors are made vanishingly
    /// small so the attenuation terms clamp to zero everywhere.
    pub fn isotropic() -> Self {
        Self {
            peak_gain_dbi: S::zero(),
            vertical_3db_deg: real(180.0),
            horizontal_3db_deg: real(180.0),
            side_lobe_floor_db: real(1e-12),
            front_back_floor_db: real(1e-12),
            slant_deg: real(45.0),
        }
    }

    /// Gain in dBi toward a direction given in the pattern frame.
    pub fn gain_dbi(&self, dir: Direction<S>) -> S {
        let twelve = real::<S>(12.0);
        let v = (dir.zenith_deg - real(90.0)) / self.vertical_3db_deg;
        let h = wrap_deg(dir.azimuth_deg) / self.horizontal_3db_deg;
        let att_v = (twelve * v * v).min(self.side_lobe_floor_db);
        let att_h = (twelve * h * h).min(self.front_back_floor_db);
        self.peak_gain_dbi - (att_v + att_h).min(self.front_back_floor_db)
    }

    /// Linear power gain toward a direction in the pattern frame.
    pub fn gain_linear(&self, dir: Direction<S>) -> S {
        db_to_linear(self.gain_dbi(dir))
    }
}

#[inline]
pub fn db_to_linear<S: Real>(db: S) -> S {
    real::<S>(10.0).powf(db / real(10.0))
}

#[inline]
pub fn linear_to_db<S: Real>(linear: S) -> S {
    real::<S>(10.0) * linear.log10()
}

/// Uniform planar array with one or two slant-polarized elements per
/// position.
#[derive(Debug, Clone)]
pub struct ArrayGeometry<S> {
    pub rows: usize,
    pub columns: usize,
    pub polarizations: usize,
    pub row_spacing_wl: S,
    pub col_spacing_wl: S,
    pub wavelength_m: S,
    pub bearing_deg: S,
    pub downtilt_deg: S,
    patterns: Vec<ElementPattern<S>>,
    positions_m: Vec<Vec3<S>>,
    rotation: Matrix3<S>,
}

impl<S: Real> ArrayGeometry<S> {
    /// Builds the panel. `patterns` holds one entry per polarization state
    /// (all positions share them); its length fixes `polarizations`.
    pub fn new(
        rows: usize,
        columns: usize,
        row_spacing_wl: S,
        col_spacing_wl: S,
        wavelength_m: S,
        patterns: Vec<ElementPattern<S>>,
        bearing_deg: S,
        downtilt_deg: S,
    ) -> Result<Self> {
        if rows == 0 || columns == 0 {
            return Err(Error::InvalidConfig("array needs rows > 0 and columns > 0".into()));
        }
        if patterns.is_empty() || patterns.len() > 2 {
            return Err(Error::InvalidConfig(
                "arrays support one or two polarization states per position".into(),
            ));
        }
        if wavelength_m <= S::zero() {
            return Err(Error::InvalidConfig("wavelength must be positive".into()));
        }
        let polarizations = patterns.len();
        let rotation = mounting_rotation(bearing_deg, downtilt_deg);
        let positions_m = element_positions(
            rows,
            columns,
            polarizations,
            row_spacing_wl * wavelength_m,
            col_spacing_wl * wavelength_m,
            &rotation,
        );
        Ok(Self {
            rows,
            columns,
            polarizations,
            row_spacing_wl,
            col_spacing_wl,
            wavelength_m,
            bearing_deg,
            downtilt_deg,
            patterns,
            positions_m,
            rotation,
        })
    }

    /// Same panel re-mounted at a new bearing; used to steer UE arrays along
    /// their track heading.
    pub fn with_bearing(&self, bearing_deg: S) -> Self {
        let rotation = mounting_rotation(bearing_deg, self.downtilt_deg);
        let positions_m = element_positions(
            self.rows,
            self.columns,
            self.polarizations,
            self.row_spacing_wl * self.wavelength_m,
            self.col_spacing_wl * self.wavelength_m,
            &rotation,
        );
        Self {
            bearing_deg,
            rotation,
            positions_m,
            patterns: self.patterns.clone(),
            ..*self
        }
    }

    pub fn element_count(&self) -> usize {
        self.rows * self.columns * self.polarizations
    }

    /// Count of elements sharing polarization state 0.
    pub fn co_polarized_count(&self) -> usize {
        self.rows * self.columns
    }

    pub fn pattern_of(&self, element: usize) -> &ElementPattern<S> {
        &self.patterns[element / (self.rows * self.columns)]
    }

    pub fn position_m(&self, element: usize) -> &Vec3<S> {
        &self.positions_m[element]
    }

    /// Maps a global direction into the element pattern frame (azimuth from
    /// boresight, zenith from the local array normal plane).
    pub fn to_pattern_frame(&self, dir: Direction<S>) -> Direction<S> {
        let k_local = self.rotation.transpose() * dir.unit_vector();
        let az = k_local.x.atan2(k_local.y);
        let zen = k_local.z.clamp(-S::one(), S::one()).acos();
        Direction {
            azimuth_deg: crate::rad_to_deg(az),
            zenith_deg: crate::rad_to_deg(zen),
        }
    }

    /// Linear element gain toward a global direction.
    pub fn element_gain(&self, element: usize, dir: Direction<S>) -> S {
        self.pattern_of(element).gain_linear(self.to_pattern_frame(dir))
    }

    /// Per-polarization linear gains toward a global direction. Every
    /// element of one polarization shares the same pattern, so the gain is
    /// evaluated once per polarization state.
    pub fn polarization_gains(&self, dir: Direction<S>) -> Vec<S> {
        let pattern_dir = self.to_pattern_frame(dir);
        self.patterns
            .iter()
            .map(|p| p.gain_linear(pattern_dir))
            .collect()
    }

    /// Steering vector toward a global direction: per element
    /// `sqrt(gain) * exp(j * 2pi/lambda * p.k)`.
    pub fn steering_vector(&self, dir: Direction<S>, wavelength_m: S) -> CVector<S> {
        let k_hat = dir.unit_vector();
        let amps: Vec<S> = self
            .polarization_gains(dir)
            .into_iter()
            .map(|g| g.sqrt())
            .collect();
        let per_pol = self.rows * self.columns;
        let wave_number = S::two_pi() / wavelength_m;
        let mut out = CVector::zeros(self.element_count());
        for (e, p) in self.positions_m.iter().enumerate() {
            let amp = amps[e / per_pol];
            let phase = wave_number * p.dot(&k_hat);
            out[e] = Cplx::new(amp * phase.cos(), amp * phase.sin());
        }
        out
    }

    /// Polarized field response of one element toward a global direction,
    /// as `[F_theta, F_phi]` for the fixed slant projection.
    pub fn field_response(&self, element: usize, dir: Direction<S>) -> [S; 2] {
        let amp = self.element_gain(element, dir).sqrt();
        let slant = deg_to_rad(self.pattern_of(element).slant_deg);
        [amp * slant.cos(), amp * slant.sin()]
    }

    /// Composite co-polarized array pattern over a scan grid, normalized so
    /// the coherent broadside sum peaks at
    /// `element peak + 10 log10(co-polarized count)`.
    pub fn array_pattern(
        &self,
        azimuths_deg: &[S],
        zeniths_deg: &[S],
        wavelength_m: S,
    ) -> Result<GainSurface<S>> {
        if azimuths_deg.is_empty() || zeniths_deg.is_empty() {
            return Err(Error::InvalidConfig("pattern scan grid is empty".into()));
        }
        let co_pol = self.co_polarized_count();
        let norm = real::<S>(co_pol as f64);
        let mut gain_db = Vec::with_capacity(azimuths_deg.len() * zeniths_deg.len());
        for &az in azimuths_deg {
            for &zen in zeniths_deg {
                let sv = self.steering_vector(Direction::new(az, zen), wavelength_m);
                let sum: Cplx<S> = sv.iter().take(co_pol).copied().sum();
                let power = sum.norm_sqr() / norm;
                gain_db.push(if power <= S::zero() {
                    real(-300.0)
                } else {
                    linear_to_db(power)
                });
            }
        }
        Ok(GainSurface {
            azimuths_deg: azimuths_deg.to_vec(),
            zeniths_deg: zeniths_deg.to_vec(),
            gain_db,
        })
    }
}

fn mounting_rotation<S: Real>(bearing_deg: S, downtilt_deg: S) -> Matrix3<S> {
    // Local boresight +y; rotate about local x by -downtilt, then about
    // global z so the boresight azimuth lands on `bearing`.
    let tilt = deg_to_rad(-downtilt_deg);
    let turn = deg_to_rad(bearing_deg - real(90.0));
    let (st, ct) = (tilt.sin(), tilt.cos());
    let (sz, cz) = (turn.sin(), turn.cos());
    let rx = Matrix3::new(
        S::one(), S::zero(), S::zero(),
        S::zero(), ct, -st,
        S::zero(), st, ct,
    );
    let rz = Matrix3::new(
        cz, -sz, S::zero(),
        sz, cz, S::zero(),
        S::zero(), S::zero(), S::one(),
    );
    rz * rx
}

fn element_positions<S: Real>(
    rows: usize,
    columns: usize,
    polarizations: usize,
    row_spacing_m: S,
    col_spacing_m: S,
    rotation: &Matrix3<S>,
) -> Vec<Vec3<S>> {
    let half = real::<S>(0.5);
    let mut out = Vec::with_capacity(rows * columns * polarizations);
    for _pol in 0..polarizations {
        for c in 0..columns {
            for r in 0..rows {
                let x = (real::<S>(c as f64) - real::<S>((columns - 1) as f64) * half)
                    * col_spacing_m;
                let z = (real::<S>(r as f64) - real::<S>((rows - 1) as f64) * half)
                    * row_spacing_m;
                out.push(rotation * Vec3::new(x, S::zero(), z));
            }
        }
    }
    out
}

/// Dense gain surface over a rectangular azimuth x zenith scan grid.
#[derive(Debug, Clone)]
pub struct GainSurface<S> {
    pub azimuths_deg: Vec<S>,
    pub zeniths_deg: Vec<S>,
    /// Azimuth-major: `gain_db[i_az * zeniths.len() + i_zen]`.
    pub gain_db: Vec<S>,
}

/// Which principal cut of the surface to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cut {
    Azimuth,
    Elevation,
}

impl<S: Real> GainSurface<S> {
    pub fn at(&self, i_az: usize, i_zen: usize) -> S {
        self.gain_db[i_az * self.zeniths_deg.len() + i_zen]
    }

    /// Indices and value of the global peak.
    pub fn peak(&self) -> (usize, usize, S) {
        let mut best = (0, 0, self.gain_db[0]);
        for i_az in 0..self.azimuths_deg.len() {
            for i_zen in 0..self.zeniths_deg.len() {
                let g = self.at(i_az, i_zen);
                if g > best.2 {
                    best = (i_az, i_zen, g);
                }
            }
        }
        best
    }

    /// The cut through the global peak along the requested axis, as
    /// (angle, gain) pairs.
    pub fn cut_through_peak(&self, cut: Cut) -> Vec<(S, S)> {
        let (i_az, i_zen, _) = self.peak();
        match cut {
            Cut::Azimuth => self
                .azimuths_deg
                .iter()
                .enumerate()
                .map(|(i, &a)| (a, self.at(i, i_zen)))
                .collect(),
            Cut::Elevation => self
                .zeniths_deg
                .iter()
                .enumerate()
                .map(|(i, &z)| (z, self.at(i_az, i)))
                .collect(),
        }
    }
}

/// Half-power beamwidth of the main lobe on a principal cut, in degrees,
/// interpolating linearly between grid points.
pub fn measure_hpbw<S: Real>(surface: &GainSurface<S>, cut: Cut) -> Result<S> {
    let samples = surface.cut_through_peak(cut);
    hpbw_of_cut(&samples)
}

/// Beamwidth between the -3 dB crossings around the peak of a sampled cut.
pub fn hpbw_of_cut<S: Real>(samples: &[(S, S)]) -> Result<S> {
    if samples.len() < 3 {
        return Err(Error::NoHpbwCrossing);
    }
    let peak_idx = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).expect("finite gains"))
        .map(|(i, _)| i)
        .unwrap();
    let threshold = samples[peak_idx].1 - real(3.0);

    let crossing = |inner: &(S, S), outer: &(S, S)| -> S {
        // Linear interpolation of the angle where gain hits threshold.
        let t = (inner.1 - threshold) / (inner.1 - outer.1);
        inner.0 + t * (outer.0 - inner.0)
    };

    let mut left = None;
    for i in (1..=peak_idx).rev() {
        if samples[i - 1].1 < threshold {
            left = Some(crossing(&samples[i], &samples[i - 1]));
            break;
        }
    }
    let mut right = None;
    for i in peak_idx..samples.len() - 1 {
        if samples[i + 1].1 < threshold {
            right = Some(crossing(&samples[i], &samples[i + 1]));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok((r - l).abs()),
        _ => Err(Error::NoHpbwCrossing),
    }
}
