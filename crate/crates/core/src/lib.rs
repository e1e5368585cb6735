//! Continuous-variable quantum state tomography.
//!
//! Simulates homodyne measurements of single- and two-mode optical states, inverts
//! them by filtered back-projection, extracts Fock-basis density matrices, fits
//! physical states directly to quadrature data, and tests Gaussian entanglement.
//!
//! Units: `ħ = 1`, `q = (a + a†)/√2`; the vacuum Wigner function is `e^{−q²−p²}/π`.

pub mod error;
pub mod estimator;
pub mod fock;
pub mod gaussian;
pub mod grid;
pub mod homodyne;
pub mod io;
pub mod phase_space;
pub mod reconstruction;
pub mod states;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, ProjectorBank, Source};
pub use grid::Grid1D;
pub use homodyne::{Sinogram, Sinogram2};
pub use phase_space::{WignerGrid, WignerGrid2};
pub use states::{StateKind, StateSpec};
