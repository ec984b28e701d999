//! Learned quantization tables and DCT-domain attention maps for JPEG.
//!
//! The crate pairs a bit-exact baseline JPEG codec ([`codec`], [`jfif`],
//! [`entropy`]) with a differentiable surrogate of its encode/decode loop
//! ([`surrogate`]). Tables and per-block attention weights are fitted by Adam
//! against a rate-distortion objective ([`loss`], [`train`]) and then written
//! out as ordinary JFIF files that any baseline decoder reads.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`, which the training and evaluation drivers use.

pub mod adam;
pub mod blocks;
pub mod codec;
pub mod color;
pub mod dct;
pub mod entropy;
pub mod experiment;
pub mod huffman;
pub mod image;
pub mod jfif;
pub mod loss;
pub mod metrics;
pub mod quant;
pub mod scalar;
pub mod surrogate;
pub mod tables;
pub mod train;

pub use crate::scalar::Scalar;

pub type Image = image::ImagePlanes<f64>;
pub type Image32 = image::ImagePlanes<f32>;
pub type Coefficients = blocks::DctTensor<f64>;
pub type Tables = tables::QuantTablePair<f64>;
pub type Attention = surrogate::AttentionMaps<f64>;
pub type Params = surrogate::SurrogateParams<f64>;
pub type Params32 = surrogate::SurrogateParams<f32>;
pub type Gradients = surrogate::GradientSet<f64>;
pub type Weights = loss::LossWeights<f64>;
pub type Report = loss::LossReport<f64>;
