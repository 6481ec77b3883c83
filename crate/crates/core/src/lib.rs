//! Joint camera-pose and neural-radiance-field optimization driven by
//! feature tracks, with a fully synthetic, ground-truthed test bench.
//!
//! The pipeline: build a synthetic scene ([`scenesim`]), chain pairwise
//! correspondences into feature tracks and refine their keypoints
//! ([`tracks`]), then jointly optimize an MLP radiance field ([`field`])
//! and per-camera SE(3) poses ([`geometry`]) under photometric, track
//! reprojection and depth smoothness losses ([`losses`]) with a two-stage
//! Adam schedule ([`trainer`]). Every gradient flows through the tape in
//! [`diffcore`]; [`evalkit`] scores the result.

pub mod diffcore;
pub mod evalkit;
pub mod field;
pub mod geometry;
pub mod losses;
pub mod scenesim;
pub mod tracks;
pub mod trainer;
pub mod util;
