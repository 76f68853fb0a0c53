//! Link-level simulator for multiuser digital beamforming over spatially
//! consistent millimeter-wave channels.
//!
//! The crate generates cluster-based MIMO channels along user trajectories,
//! either with the iterative spatial-consistency update (`sc`) or as
//! independent per-position drops, applies ZF/BD/SLNR precoding
//! (`precoding`) and reports per-user SINR and sum spectral efficiency
//! (`metrics`). All numeric code is generic over the real scalar type; the
//! `*64` aliases at the crate root pin the double-precision instantiation
//! used by the command-line frontend.

pub mod arrays;
pub mod channel;
pub mod config;
pub mod error;
pub mod largescale;
pub mod metrics;
pub mod precoding;
pub mod rng;
pub mod scenario;
pub mod sc;
pub mod smallscale;

pub use error::Error;

/// Real scalar the simulator is generic over (`f32` or `f64` in practice).
pub trait Real:
    nalgebra::RealField + Copy + num_traits::FromPrimitive + num_traits::ToPrimitive
{
}

impl<T> Real for T where
    T: nalgebra::RealField + Copy + num_traits::FromPrimitive + num_traits::ToPrimitive
{
}

/// Complex scalar over `S`.
pub type Cplx<S> = num_complex::Complex<S>;
/// Dynamically sized complex matrix.
pub type CMatrix<S> = nalgebra::DMatrix<Cplx<S>>;
/// Dynamically sized complex column vector.
pub type CVector<S> = nalgebra::DVector<Cplx<S>>;
/// 3-component position/direction vector.
pub type Vec3<S> = nalgebra::Vector3<S>;

pub type CMatrix64 = CMatrix<f64>;
pub type CVector64 = CVector<f64>;
pub type ChannelMatrix64 = channel::ChannelMatrix<f64>;
pub type ClusterState64 = smallscale::ClusterState<f64>;
pub type PrecoderSet64 = precoding::PrecoderSet<f64>;
pub type ScenarioConfig64 = scenario::ScenarioConfig<f64>;
pub type SimOutput64 = scenario::SimOutput<f64>;
pub type StepRecord64 = metrics::StepRecord<f64>;

/// Physical constants used throughout the simulator.
pub mod constants {
    /// Speed of light in vacuum, m/s.
    pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
}

/// Converts an `f64` literal or intermediate into the generic scalar.
#[inline]
pub fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("f64 representable in scalar type")
}

/// Speed of light as the generic scalar.
#[inline]
pub fn speed_of_light<S: Real>() -> S {
    real(constants::SPEED_OF_LIGHT)
}

/// Finiteness check usable on the generic scalar (infinite SINR sentinels
/// flow through some aggregation paths).
#[inline]
pub fn is_finite<S: Real>(x: S) -> bool {
    x.to_f64().map_or(false, f64::is_finite)
}

#[inline]
pub(crate) fn deg_to_rad<S: Real>(deg: S) -> S {
    deg * S::pi() / real(180.0)
}

#[inline]
pub(crate) fn rad_to_deg<S: Real>(rad: S) -> S {
    rad * real::<S>(180.0) / S::pi()
}

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_deg<S: Real>(mut deg: S) -> S {
    let full = real::<S>(360.0);
    let half = real::<S>(180.0);
    while deg > half {
        deg -= full;
    }
    while deg <= -half {
        deg += full;
    }
    deg
}
