//! Effective equidistribution toolkit.
//!
//! * [`geometry`]: star norms, tuple statistics and direction selection for
//!   diagonal actions on horospherical subgroups.
//! * [`selection`]: pigeonhole choice of the averaging window.
//! * [`constants`]: recursive constant ledgers for correlation bounds.
//! * [`wiener`]: Fourier data of measures and observables on tori.
//! * [`modular`]: horocycle correlations of incomplete Eisenstein series on
//!   the modular surface.

pub mod constants;
pub mod modular;
pub mod geometry;
pub mod numeric;
pub mod selection;
pub mod wiener;

pub use numeric::LogScalar;
