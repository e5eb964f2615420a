//! Simulation of orbital-angular-momentum (OAM) modes through Kolmogorov
//! turbulence: mode synthesis, random phase screens, crosstalk channels and
//! their Shannon capacity.

pub mod capacity;
pub mod channel;
pub mod error;
mod fft;
pub mod field;
pub mod io;
pub mod quadrature;
pub mod sweep;
pub mod turbulence;

pub use error::{Error, Result};
pub use field::{AngIndex, ComplexField, GridSpec, OamIndex};
pub use turbulence::{PhaseScreen, TurbulenceStrength};
