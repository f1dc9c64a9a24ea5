//! Scalar abstraction for the numeric kernels.
//!
//! The softmax, span scoring, cosine similarity and metric computations are
//! generic over the floating-point type; `f64` is the default used by the
//! file formats and the CLI.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable in every numeric kernel of this crate.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Sum + Debug + Copy {}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Copy {}
