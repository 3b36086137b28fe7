//! Slip detection: flow labeling, data sets, models, training and streaming
//! inference.

pub mod dataset;
pub mod eval;
pub mod label;
pub mod model;
pub mod stream;
pub mod train;
