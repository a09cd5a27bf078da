//! Gaze-intent toolkit: compiles fixation sessions into intention-labeled
//! datasets and trains a peripheral-aware causal transformer that predicts,
//! per fixation, which findings the viewer is examining.

pub mod tensor;
pub mod gaze;
pub mod vision;
pub mod model;
pub mod train;
