//! Scalar-generic numeric kernels used across the pipeline.
//!
//! Everything here is generic over [`Real`] (`f32` or `f64`); the concrete
//! pipeline instantiates them at [`crate::Scalar`].

mod fit;
mod gradient;
mod interp;
mod smooth;
mod special;

pub use fit::{linear_fit, median, pearson, LinearFit};
pub use gradient::central_gradient;
pub use interp::{bilinear, lerp, parabolic_refine, resample_linear, Extremum};
pub use smooth::{gaussian_kernel, gaussian_smooth};
pub use special::{ln_gamma, regularized_incomplete_beta, student_t_two_tailed};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the kernels are generic over.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + 'static
{
    /// Lossy conversion from `f64` constants.
    fn from_f64_const(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}
