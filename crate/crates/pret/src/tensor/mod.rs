//! Differentiable tensor substrate: a small tape-based reverse-mode engine
//! with the transformer building blocks used by every learned component.

mod graph;
mod mask;
pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod optim;

pub use graph::{Axis, Graph, TensorId};
pub use mask::AttentionMask;
pub use nn::{
    sinusoidal_positions, DecoderLayer, EncoderLayer, FeedForward, Init, LayerNorm, Linear,
    MultiHeadAttention, Param, ParamId, ParamStore,
};
pub use optim::AdamW;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the engine is generic over. Training runs at `f32`; the
/// gradient-check harness instantiates models at `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + Default + Send + Sync + 'static
{
    fn from_f(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap()
    }
    fn to_f(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
