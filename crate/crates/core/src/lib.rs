//! Cramér-Rao bounds for single-anchor mm-wave MIMO-OFDM positioning.
//!
//! The library is generic over the scalar type (`f32` or `f64`, see
//! [`Real`]); the aliases at the crate root fix it to `f64`, which is what
//! the EFIM tolerances are tuned for.
//!
//! ```
//! use mmwloc::asymptotic::efim_po_ktt;
//! use mmwloc::estimand::{peb, Ktt};
//! use mmwloc::geometry::{build_uca, channel_geometry, path_gains, Placement};
//! use mmwloc::waveform::{noise_var_from_density, subcarrier_range, WaveformConfig};
//! use nalgebra::Vector2;
//! use rand::SeedableRng;
//!
//! let fc = 38e9;
//! let lambda = mmwloc::SPEED_OF_LIGHT / fc;
//! let noise = noise_var_from_density(1e-20, 245.76e6);
//! let cfg = WaveformConfig::new(1024, 0, 1, 245.76e6, fc, subcarrier_range(-297, 6, 297)?, 0.1, noise)?;
//! let tx = build_uca(32, lambda / 2.0, 0.0)?;
//! let rx = build_uca(32, lambda / 2.0, 0.0)?;
//! let pl = Placement::new(
//!     Vector2::new(0.0, 0.0),
//!     Vector2::new(12.0, 7.0),
//!     vec![Vector2::new(10.0, 0.0), Vector2::new(-8.0, 12.0)],
//! );
//! let geom = channel_geometry(&pl, (&tx, &rx))?;
//! let gains = path_gains(&geom, 0.1, lambda, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1))?;
//! let efim = efim_po_ktt(&cfg, (&tx, &rx), &geom, &gains, Ktt::Imperfect { sigma: 2e-9 })?;
//! assert!(peb(&efim.total)? < 1.0);
//! # Ok::<(), mmwloc::Error>(())
//! ```

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod error;
pub mod estimand;
pub mod fim_exact;
pub mod geometry;
pub mod scalar;
pub mod scenario;
pub mod waveform;

pub use error::{Error, Result};
pub use scalar::{Real, SPEED_OF_LIGHT};

pub type ArrayGeometry = geometry::ArrayGeometry<f64>;
pub type Placement = geometry::Placement<f64>;
pub type ChannelGeometry = geometry::ChannelGeometry<f64>;
pub type PathGains = geometry::PathGains<f64>;
pub type WaveformConfig = waveform::WaveformConfig<f64>;
pub type BeamConfig = waveform::BeamConfig<f64>;
pub type ReferenceSignal = waveform::ReferenceSignal<f64>;
pub type FisherMatrix = fim_exact::FisherMatrix<f64>;
pub type ChannelParams = fim_exact::ChannelParams<f64>;
pub type Efim = estimand::Efim<f64>;
pub type Estimand = estimand::Estimand<f64>;
pub type Ktt = estimand::Ktt<f64>;
pub type AsymptoticEfim = asymptotic::AsymptoticEfim<f64>;
