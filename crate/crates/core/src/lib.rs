//! Instruction-guided visual masking.
//!
//! A heatmap marks the image regions relevant to an instruction; deployment
//! masks out the rest before the image reaches a downstream model. The crate
//! covers the heatmap primitives, deployment (overlay, blur, grayscale,
//! crop), multi-expert label fusion, discriminator-weighted training of a
//! small heatmap generator on mixed-quality labels, a synthetic scene
//! generator, file formats and evaluation.
//!
//! ```
//! use ivm::{deploy, DeployStrategy, Heatmap, ImageBuffer};
//!
//! let img = ImageBuffer::filled_rgb(8, 8, [200, 10, 10]).unwrap();
//! let mut v = vec![0.0; 64];
//! v[2 * 8 + 3] = 1.0;
//! let h = Heatmap::new(8, 8, v).unwrap();
//! let out = deploy(&img, &h, &DeployStrategy::default()).unwrap();
//! assert_eq!(out.dims(), (1, 1));
//! ```

pub mod cli;
pub mod deploy;
pub mod dwsl;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod heatmap;
pub mod io;
pub mod synth;

pub use deploy::{deploy, DeployMethod, DeployStrategy};
pub use error::{Error, Result};
pub use fusion::{agreement, build_candidate_label, fuse, CandidateLabel, ExpertProposal, FusionMethod};
pub use heatmap::{mask_iou, BBox, BinaryMask, Heatmap, ImageBuffer, Instruction, Rle, DEFAULT_TAU};
