//! Event-driven spiking stereo disparity estimation.
//!
//! The pipeline reads left/right event-camera streams, cleans and reduces
//! them, feeds them through a network of coincidence and disparity neurons,
//! and scores the disparity read out from the network against ground truth.

pub mod config;
pub mod events;
pub mod groundtruth;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod simulator;
pub mod synth;
pub mod topology;
