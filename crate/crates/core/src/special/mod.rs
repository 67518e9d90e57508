//! Special functions: Mittag-Leffler `E_α`, Bessel `J₁` and `J_{1/2}`, and
//! gamma-function helpers.

pub mod bessel;
pub mod gamma;
pub mod mittag_leffler;

pub use bessel::{bessel_j1, bessel_j_half, j1};
pub use mittag_leffler::{ml_deriv, ml_eval, ContourParams, MittagLeffler, MlRegime, MlRegimeKind};
