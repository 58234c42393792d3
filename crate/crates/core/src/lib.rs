//! Solvers for the nonlocal Allen-Cahn equation
//!
//! ```text
//! u_t + c_gamma u - gamma * u + dF(u) ∋ 0
//! ```
//!
//! with obstacle, regular (quartic) and logarithmic double-well potentials
//! on periodic boxes. Each time step is a pointwise proximal map of an
//! explicitly evaluated convolution, computed with FFTs on a uniform
//! collocation grid.
//!
//! Everything is generic over the floating-point [`Scalar`]; the `*64`
//! aliases below fix it to `f64`.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupled;
pub mod error;
pub mod kernel;
pub mod potentials;
pub mod scalar;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use kernel::{sample_periodic, KernelGrid, KernelSpec};
pub use potentials::{PotentialKind, PotentialSpec, PreparedProx, ProxWeight, StageDivisor};
pub use scalar::Scalar;
pub use spectral::{
    circular_convolve, dft_forward, dft_inverse, half_spectrum, inner_h, laplacian_symbol, nonlocal_apply, norm_h,
    Field, Grid, SpectralContext, Spectrum,
};

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type Spectrum64 = Spectrum<f64>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type KernelGrid64 = KernelGrid<f64>;
pub type PotentialSpec64 = PotentialSpec<f64>;
pub type SchemeConfig64 = stepper::SchemeConfig<f64>;
pub type CoupledConfig64 = coupled::CoupledConfig<f64>;

pub type Grid32 = Grid<f32>;
pub type Field32 = Field<f32>;
pub type KernelGrid32 = KernelGrid<f32>;
pub type PotentialSpec32 = PotentialSpec<f32>;
