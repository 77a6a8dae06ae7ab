//! Identity/attribute disentanglement in generative latent spaces.
//!
//! The crate locates identity-bearing layers and channels of a style-based
//! latent code, swaps them to anonymize faces, and evaluates the result for
//! privacy and utility.

pub mod backend;
pub mod cache;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod image;
pub mod mask_anon;
pub mod latent;
pub mod metrics;
pub mod rng;
pub mod search;
pub mod segmentation;
pub mod swapper;

pub use backend::{AttributeVector, BackendBundle, IdentityEmbedding, ShapeDescriptor, SyntheticConfig, SyntheticWorld};
pub use error::{Error, Result};
pub use image::Image;
pub use latent::{ChannelBlock, ChannelBlockSet, LatentCode, LatentMask, LatentShape, LayerSet, Selection};
pub use segmentation::{Label, SegmentationMask};
