//! RGB-D salient object detection pipeline.
//!
//! The crate provides, bottom to top:
//!
//! - [`tensor`]: a minimal dense-array substrate (convolution, batch
//!   norm, bilinear resampling, image/sequence rearrangement);
//! - [`ace`]: adaptive contrast enhancement of depth maps;
//! - [`priors`]: training-free saliency priors (depth-front mask via
//!   Otsu, local contrast via morphological gradients, center mask);
//! - [`ssm`]: the S6 selective-scan state-space kernel and its
//!   cross-modal variant CM-S6, with a sequential oracle, a chunked
//!   parallel scan, a bidirectional wrapper, and an analytic backward;
//! - [`blocks`]: the network building blocks (CBAM, SGFB/CGFB,
//!   SMDB/CMDB, SEM, the multi-scale decoder, and the reconstruction
//!   module);
//! - [`network`]: full model assembly, weight initialization and
//!   serialization, and the hybrid training loss;
//! - [`metrics`]: saliency evaluation (MAE, F-beta, S-measure,
//!   E-measure, PR curves);
//! - [`io`]: binary PGM/PPM image files, run configuration files, and
//!   atomic output writes.
//!
//! Everything runs on the CPU with `f32` inference paths and `f64`
//! variants where gradient checking needs the precision.

pub mod ace;
pub mod blocks;
pub mod error;
pub mod io;
pub mod metrics;
pub mod network;
pub mod priors;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DenseArray, Scalar};
