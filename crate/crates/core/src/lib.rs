//! Numerical kernels for multi-bubble blow-up in four-dimensional domains:
//! Green/Robin series on the annulus, the interaction matrix `M(ξ)` and its
//! smallest eigenvalue, the reduced finite-dimensional system, ring
//! configurations with their circulant spectra, and Aubin–Talenti bubbles.

pub mod annulus;
pub mod bubbles;
pub mod error;
pub mod interaction;
pub mod linalg;
pub mod reduced;
pub mod ring;
pub mod special;

pub use annulus::{
    AnnulusGeometry, AnnulusGreen, EvalResult, GradResult, Point4, SeriesControl, ALPHA4, FRAK_C,
    OMEGA,
};
pub use error::{Error, Result};
pub use interaction::{
    assemble_m, lambda1_gradient, rayleigh, smallest_eigen, Configuration, GreenOracle,
    InteractionMatrix, SpectralData,
};
