//! Local-volatility HJM model for swaption smiles.
//!
//! The pipeline runs from a quarterly forward curve and a normal-vol swaption
//! surface to a calibrated forward-vol grid per strike offset, a smile fit of
//! the implied forward-rate variance, a local-volatility surface, and a
//! one-factor Monte Carlo that prices swaptions back against the market.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`.

pub mod cli;
pub mod curve;
pub mod engine;
pub mod error;
pub mod localvol;
pub mod market;
pub mod pricer;
pub mod scalar;
pub mod smallvol;
pub mod smile;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TimeGrid64 = curve::TimeGrid<f64>;
pub type ForwardCurve64 = curve::ForwardCurve<f64>;
pub type DiscountCurve64 = curve::DiscountCurve<f64>;
pub type QuoteSurface64 = market::QuoteSurface<f64>;
pub type ForwardVolGrid64 = smallvol::ForwardVolGrid<f64>;
pub type Calibration64 = smallvol::Calibration<f64>;
pub type SmileCube64 = smile::SmileCube<f64>;
pub type LocalVolSurface64 = localvol::LocalVolSurface<f64>;
pub type PathState64 = engine::PathState<f64>;
pub type SimConfig64 = engine::SimConfig<f64>;
