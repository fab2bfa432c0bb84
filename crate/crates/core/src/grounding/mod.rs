//! Language-vision fusion: guided feature transformation, the baseline
//! fusion modules, and tools for analysing generated transforms.

mod bow;
mod cube;
pub mod fingerprint;
mod fusion;
mod svd;

pub use bow::{encode_bow, SentenceEmbedding};
pub use cube::{
    film_apply, gated_apply, gft_apply, gft_step, gft_step_node, one_by_one_conv, FeatureCube,
    FilmParams, GateVector, TransformStack,
};
pub use fingerprint::{smooth_uniform, transform_fingerprint, ReferenceMean};
pub use fusion::{FusionKind, FusionModule, FusionWidths};
pub use svd::{svd_decompose, SvdResult};

#[cfg(test)]
mod tests;
